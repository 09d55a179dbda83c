//! Band arithmetic and color-ramp rendering.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{Raster, Samples};

/// Placement tolerance when comparing two band grids.
pub const GEOREF_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IndexError {
    #[error("raster shapes differ: {a:?} vs {b:?}")]
    ShapeMismatch {
        a: (usize, usize),
        b: (usize, usize),
    },
    #[error("georeferences differ: {0}")]
    GeoreferenceMismatch(String),
    #[error("invalid color ramp: {0}")]
    BadRamp(String),
}

impl IndexError {
    pub fn name(&self) -> &'static str {
        match self {
            IndexError::ShapeMismatch { .. } => "ShapeMismatch",
            IndexError::GeoreferenceMismatch(_) => "GeoreferenceMismatch",
            IndexError::BadRamp(_) => "BadRamp",
        }
    }
}

/// Per-pixel `(a - b) / (a + b)` as 32-bit float with NaN NoData.
///
/// NDVI is `normalized_difference(nir, red)`. A pixel is NaN when either input
/// is its raster's NoData or when `a + b == 0`. The ratio is scale invariant,
/// so digital numbers and reflectances give the same index.
pub fn normalized_difference(a: &Raster, b: &Raster) -> Result<Raster, IndexError> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(IndexError::ShapeMismatch {
            a: (a.width(), a.height()),
            b: (b.width(), b.height()),
        });
    }
    let (ga, gb) = (a.georef(), b.georef());
    if ga.epsg_code != gb.epsg_code {
        return Err(IndexError::GeoreferenceMismatch(format!(
            "EPSG {} vs {}",
            ga.epsg_code, gb.epsg_code
        )));
    }
    if !ga.matches(gb, GEOREF_TOLERANCE) {
        return Err(IndexError::GeoreferenceMismatch(format!(
            "{ga:?} vs {gb:?}"
        )));
    }

    let width = a.width();
    let mut out = vec![0f32; a.len()];
    out.par_chunks_mut(width)
        .enumerate()
        .for_each(|(row, dst)| {
            let base = row * width;
            for (col, d) in dst.iter_mut().enumerate() {
                let i = base + col;
                *d = if a.is_nodata_at(i) || b.is_nodata_at(i) {
                    f32::NAN
                } else {
                    let (x, y) = (a.samples().get_f64(i), b.samples().get_f64(i));
                    let sum = x + y;
                    if sum == 0.0 {
                        f32::NAN
                    } else {
                        ((x - y) / sum) as f32
                    }
                };
            }
        });
    Ok(Raster::new(
        a.width(),
        a.height(),
        Samples::F32(out),
        Some(f64::NAN),
        *ga,
    )
    .expect("shape and georeference taken from a valid raster"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColorStop {
    pub value: f64,
    pub rgba: [u8; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColorRamp {
    stops: Vec<ColorStop>,
    nodata_color: [u8; 4],
}

impl ColorRamp {
    pub fn new(stops: Vec<ColorStop>, nodata_color: [u8; 4]) -> Result<Self, IndexError> {
        if stops.len() < 2 {
            return Err(IndexError::BadRamp(format!(
                "need at least 2 stops, got {}",
                stops.len()
            )));
        }
        if stops.iter().any(|s| !s.value.is_finite()) {
            return Err(IndexError::BadRamp("stop values must be finite".into()));
        }
        if stops.windows(2).any(|w| w[0].value >= w[1].value) {
            return Err(IndexError::BadRamp(
                "stop values must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            stops,
            nodata_color,
        })
    }

    /// Red to yellow to green over [-1, 1]; NoData transparent.
    pub fn ndvi() -> Self {
        Self::new(
            vec![
                ColorStop {
                    value: -1.0,
                    rgba: [165, 0, 38, 255],
                },
                ColorStop {
                    value: 0.0,
                    rgba: [254, 224, 139, 255],
                },
                ColorStop {
                    value: 1.0,
                    rgba: [0, 104, 55, 255],
                },
            ],
            [0, 0, 0, 0],
        )
        .unwrap()
    }

    /// Black to white stretched over `[lo, hi]`; NoData transparent.
    pub fn gray(lo: f64, hi: f64) -> Result<Self, IndexError> {
        Self::new(
            vec![
                ColorStop {
                    value: lo,
                    rgba: [0, 0, 0, 255],
                },
                ColorStop {
                    value: hi,
                    rgba: [255, 255, 255, 255],
                },
            ],
            [0, 0, 0, 0],
        )
    }

    pub fn stops(&self) -> &[ColorStop] {
        &self.stops
    }

    pub fn nodata_color(&self) -> [u8; 4] {
        self.nodata_color
    }

    /// Color for one value; `None` means NoData.
    pub fn color(&self, value: Option<f64>) -> [u8; 4] {
        let Some(v) = value.filter(|v| !v.is_nan()) else {
            return self.nodata_color;
        };
        let first = self.stops[0];
        let last = self.stops[self.stops.len() - 1];
        if v <= first.value {
            return first.rgba;
        }
        if v >= last.value {
            return last.rgba;
        }
        // First stop strictly above v; the one before it is at or below.
        let hi = self.stops.partition_point(|s| s.value <= v);
        let (s0, s1) = (self.stops[hi - 1], self.stops[hi]);
        if v == s0.value {
            return s0.rgba;
        }
        let t = (v - s0.value) / (s1.value - s0.value);
        std::array::from_fn(|ch| {
            let c0 = f64::from(s0.rgba[ch]);
            let c1 = f64::from(s1.rgba[ch]);
            (c0 + t * (c1 - c0) + 0.5).floor().clamp(0.0, 255.0) as u8
        })
    }
}

/// 8-bit RGBA image, row-major, 4 bytes per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbaImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl RgbaImage {
    pub fn pixel(&self, col: usize, row: usize) -> [u8; 4] {
        let i = (row * self.width + col) * 4;
        self.data[i..i + 4].try_into().unwrap()
    }
}

pub fn apply_color_ramp(values: &Raster, ramp: &ColorRamp) -> RgbaImage {
    let mut data = vec![0u8; values.len() * 4];
    data.par_chunks_mut(4).enumerate().for_each(|(i, px)| {
        px.copy_from_slice(&ramp.color(values.valid_value_at(i).or_else(|| {
            // Infinite samples are valid for the ramp (they clamp to the ends).
            let v = values.samples().get_f64(i);
            (v.is_infinite() && !values.is_nodata_at(i)).then_some(v)
        })));
    });
    RgbaImage {
        width: values.width(),
        height: values.height(),
        data,
    }
}
