//! Deterministic synthetic scenes: red and near-infrared band rasters over a
//! set of field polygons.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::PolygonGeometry;
use crate::raster::{GridGeoreference, Raster, Samples};
use crate::vector::{AttributeValue, Attributes, FeatureCollection};
use crate::zonal::pixel_mask;

pub const SYNTH_EPSG: u16 = 25832;
pub const SYNTH_ORIGIN: (f64, f64) = (500_000.0, 6_200_000.0);
pub const SYNTH_PIXEL_SIZE: f64 = 10.0;
/// Band NoData, as in Sentinel-2 L1C products.
pub const BAND_NODATA: u16 = 0;
pub const CROP_KEY: &str = "crop";

const CROPS: [(&str, f64, f64); 4] = [
    // (name, cumulative probability, base NDVI)
    ("winter wheat", 0.50, 0.70),
    ("spring barley", 0.70, 0.55),
    ("winter rapeseed", 0.85, 0.76),
    ("grass", 1.00, 0.62),
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("scene {width}x{height} is too small for {fields} fields")]
    TooManyFields {
        fields: usize,
        width: usize,
        height: usize,
    },
    #[error("scene size must be positive")]
    EmptyScene,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthConfig {
    pub fields: usize,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SynthScene {
    /// Band 4 (visible red), digital numbers.
    pub red: Raster,
    /// Band 8 (near infrared), digital numbers.
    pub nir: Raster,
    pub fields: FeatureCollection,
}

struct Wave {
    kx: f64,
    ky: f64,
    phase: f64,
    amp: f64,
}

fn waves(rng: &mut ChaCha8Rng, n: usize, amp: f64, width: usize, height: usize) -> Vec<Wave> {
    let scale = width.max(height) as f64;
    (0..n)
        .map(|_| Wave {
            kx: rng.gen_range(0.5..3.0) * std::f64::consts::TAU / scale,
            ky: rng.gen_range(0.5..3.0) * std::f64::consts::TAU / scale,
            phase: rng.gen_range(0.0..std::f64::consts::TAU),
            amp: amp * rng.gen_range(0.5..1.0),
        })
        .collect()
}

fn wave_sum(ws: &[Wave], col: f64, row: f64) -> f64 {
    ws.iter()
        .map(|w| w.amp * (w.kx * col + w.ky * row + w.phase).sin())
        .sum()
}

struct Patch {
    col: f64,
    row: f64,
    radius: f64,
    depth: f64,
}

pub fn generate(config: &SynthConfig) -> Result<SynthScene, SynthError> {
    let SynthConfig {
        fields: n,
        width,
        height,
        seed,
    } = *config;
    if width == 0 || height == 0 {
        return Err(SynthError::EmptyScene);
    }
    let too_many = SynthError::TooManyFields {
        fields: n,
        width,
        height,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let georef = GridGeoreference::new(
        SYNTH_ORIGIN.0,
        SYNTH_ORIGIN.1,
        SYNTH_PIXEL_SIZE,
        SYNTH_PIXEL_SIZE,
        SYNTH_EPSG,
    )
    .expect("constant georeference is valid");

    // Fields sit one per grid cell, so they never overlap.
    let (grid_cols, grid_rows) = if n == 0 {
        (1, 1)
    } else {
        let c = ((n as f64 * width as f64 / height as f64).sqrt().ceil() as usize).max(1);
        (c, n.div_ceil(c))
    };
    let cell_w = width as f64 / grid_cols as f64;
    let cell_h = height as f64 / grid_rows as f64;
    if n > 0 && (cell_w < 6.0 || cell_h < 6.0) {
        return Err(too_many);
    }

    let mut parts = Vec::with_capacity(n);
    let mut field_ndvi = Vec::with_capacity(n);
    let mut patches = Vec::with_capacity(n);
    for i in 0..n {
        let (gc, gr) = (i % grid_cols, i / grid_cols);
        let cx = (gc as f64 + 0.5 + rng.gen_range(-0.08..0.08)) * cell_w;
        let cy = (gr as f64 + 0.5 + rng.gen_range(-0.08..0.08)) * cell_h;
        let rx = cell_w * rng.gen_range(0.30..0.40);
        let ry = cell_h * rng.gen_range(0.30..0.40);
        let tilt: f64 = rng.gen_range(-0.15..0.15);
        let k = rng.gen_range(5..=9);
        let mut angles: Vec<f64> = (0..k)
            .map(|j| (j as f64 + rng.gen_range(0.15..0.85)) * std::f64::consts::TAU / k as f64)
            .collect();
        angles.sort_by(f64::total_cmp);
        let ring: Vec<[f64; 2]> = angles
            .iter()
            .map(|&a| {
                let (dx, dy) = (rx * a.cos(), ry * a.sin());
                let (px, py) = (
                    cx + dx * tilt.cos() - dy * tilt.sin(),
                    cy + dx * tilt.sin() + dy * tilt.cos(),
                );
                let x = georef.origin_x + px * georef.pixel_size_x;
                let y = georef.origin_y - py * georef.pixel_size_y;
                [(x * 100.0).round() / 100.0, (y * 100.0).round() / 100.0]
            })
            .collect();
        let geometry = PolygonGeometry::new(vec![ring]).expect("synthetic ring is valid");

        let u: f64 = rng.gen();
        let (crop, _, base) = *CROPS.iter().find(|c| u < c.1).unwrap_or(&CROPS[3]);
        let offset: f64 = (0..3).map(|_| rng.gen_range(-0.05..0.05)).sum();
        field_ndvi.push(base + offset);
        patches.push(rng.gen_bool(0.3).then(|| Patch {
            col: cx + rng.gen_range(-0.5..0.5) * rx,
            row: cy + rng.gen_range(-0.5..0.5) * ry,
            radius: rx.min(ry) * rng.gen_range(0.3..0.6),
            depth: rng.gen_range(0.15..0.35),
        }));

        let mut attrs = Attributes::new();
        attrs.insert(CROP_KEY.into(), AttributeValue::Text(crop.into()));
        attrs.insert("field_no".into(), AttributeValue::Number((i + 1) as f64));
        parts.push((geometry, attrs));
    }
    let fields = FeatureCollection::assemble(parts, u32::from(SYNTH_EPSG), CROP_KEY);

    let mut owner = vec![u32::MAX; width * height];
    for f in &fields.features {
        for (col, row) in pixel_mask(&f.geometry, &georef, width, height).iter() {
            owner[row * width + col] = f.id as u32;
        }
    }

    let ndvi_waves = waves(&mut rng, 3, 0.04, width, height);
    let red_waves = waves(&mut rng, 2, 0.01, width, height);
    let cloud_radius = 0.25 * cell_w.min(cell_h).min(width.min(height) as f64);
    let clouds: Vec<(f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.gen_range(0.0..width as f64),
                rng.gen_range(0.0..height as f64),
            )
        })
        .collect();

    let mut red = vec![0u16; width * height];
    let mut nir = vec![0u16; width * height];
    for row in 0..height {
        for col in 0..width {
            let i = row * width + col;
            let (c, r) = (col as f64 + 0.5, row as f64 + 0.5);
            if clouds
                .iter()
                .any(|&(x, y)| (c - x).powi(2) + (r - y).powi(2) < cloud_radius * cloud_radius)
            {
                red[i] = BAND_NODATA;
                nir[i] = BAND_NODATA;
                continue;
            }
            let smooth = wave_sum(&ndvi_waves, c, r);
            let noise = rng.gen_range(-0.02..0.02);
            let (ndvi, red_refl) = match owner[i] {
                u32::MAX => (
                    0.15 + 0.5 * smooth + noise,
                    0.12 + wave_sum(&red_waves, c, r),
                ),
                id => {
                    let id = id as usize;
                    let dip = patches[id].as_ref().map_or(0.0, |p| {
                        let d2 = (c - p.col).powi(2) + (r - p.row).powi(2);
                        p.depth * (-d2 / (p.radius * p.radius)).exp()
                    });
                    (
                        field_ndvi[id] + smooth - dip + noise,
                        0.045 + wave_sum(&red_waves, c, r),
                    )
                }
            };
            let ndvi = ndvi.clamp(-0.2, 0.92);
            let nir_refl = red_refl * (1.0 + ndvi) / (1.0 - ndvi);
            let dn = |refl: f64| (refl * 10_000.0).round().clamp(1.0, 65_535.0) as u16;
            red[i] = dn(red_refl);
            nir[i] = dn(nir_refl);
        }
    }

    let band = |v: Vec<u16>| {
        Raster::new(
            width,
            height,
            Samples::U16(v),
            Some(f64::from(BAND_NODATA)),
            georef,
        )
        .expect("synthetic band is valid")
    };
    Ok(SynthScene {
        red: band(red),
        nir: band(nir),
        fields,
    })
}
