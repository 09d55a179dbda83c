//! Single-band georeferenced grids.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RasterError {
    #[error("raster dimensions must be positive, got {width}x{height}")]
    EmptyGrid { width: usize, height: usize },
    #[error("sample count {actual} does not match {width}x{height}")]
    SampleCount {
        width: usize,
        height: usize,
        actual: usize,
    },
    #[error("invalid georeference: {0}")]
    Georeference(String),
}

/// North-up grid placement in a projected CRS. No rotation or shear.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridGeoreference {
    pub origin_x: f64,
    pub origin_y: f64,
    pub pixel_size_x: f64,
    pub pixel_size_y: f64,
    /// GeoTIFF stores projected CRS codes as SHORT, hence `u16`.
    pub epsg_code: u16,
}

impl GridGeoreference {
    pub fn new(
        origin_x: f64,
        origin_y: f64,
        pixel_size_x: f64,
        pixel_size_y: f64,
        epsg_code: u16,
    ) -> Result<Self, RasterError> {
        let georef = Self {
            origin_x,
            origin_y,
            pixel_size_x,
            pixel_size_y,
            epsg_code,
        };
        georef.validate()?;
        Ok(georef)
    }

    pub fn validate(&self) -> Result<(), RasterError> {
        if !(self.origin_x.is_finite() && self.origin_y.is_finite()) {
            return Err(RasterError::Georeference("origin must be finite".into()));
        }
        if !(self.pixel_size_x.is_finite() && self.pixel_size_x > 0.0)
            || !(self.pixel_size_y.is_finite() && self.pixel_size_y > 0.0)
        {
            return Err(RasterError::Georeference(format!(
                "pixel size must be positive, got {}x{}",
                self.pixel_size_x, self.pixel_size_y
            )));
        }
        if self.epsg_code == 0 {
            return Err(RasterError::Georeference(
                "EPSG code must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Map coordinates of the center of pixel (col, row).
    #[inline]
    pub fn pixel_center(&self, col: usize, row: usize) -> (f64, f64) {
        (self.center_x(col), self.center_y(row))
    }

    #[inline]
    pub fn center_x(&self, col: usize) -> f64 {
        self.origin_x + (col as f64 + 0.5) * self.pixel_size_x
    }

    #[inline]
    pub fn center_y(&self, row: usize) -> f64 {
        self.origin_y - (row as f64 + 0.5) * self.pixel_size_y
    }

    /// Pixel containing a map coordinate, or `None` outside the grid.
    pub fn pixel_at(&self, x: f64, y: f64, width: usize, height: usize) -> Option<(usize, usize)> {
        let col = ((x - self.origin_x) / self.pixel_size_x).floor();
        let row = ((self.origin_y - y) / self.pixel_size_y).floor();
        if col >= 0.0 && row >= 0.0 && (col as usize) < width && (row as usize) < height {
            Some((col as usize, row as usize))
        } else {
            None
        }
    }

    /// Grid extent as `(min_x, min_y, max_x, max_y)`.
    pub fn extent(&self, width: usize, height: usize) -> [f64; 4] {
        [
            self.origin_x,
            self.origin_y - height as f64 * self.pixel_size_y,
            self.origin_x + width as f64 * self.pixel_size_x,
            self.origin_y,
        ]
    }

    /// Agreement on placement within `tol` and exact agreement on CRS.
    pub fn matches(&self, other: &GridGeoreference, tol: f64) -> bool {
        self.epsg_code == other.epsg_code
            && (self.origin_x - other.origin_x).abs() <= tol
            && (self.origin_y - other.origin_y).abs() <= tol
            && (self.pixel_size_x - other.pixel_size_x).abs() <= tol
            && (self.pixel_size_y - other.pixel_size_y).abs() <= tol
    }

    /// Area of one pixel in hectares.
    pub fn pixel_area_ha(&self) -> f64 {
        self.pixel_size_x * self.pixel_size_y / 10_000.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SampleKind {
    U16,
    F32,
}

impl SampleKind {
    pub fn bits(self) -> u16 {
        match self {
            SampleKind::U16 => 16,
            SampleKind::F32 => 32,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SampleKind::U16 => "uint16",
            SampleKind::F32 => "float32",
        }
    }
}

/// Row-major sample storage.
#[derive(Debug, Clone)]
pub enum Samples {
    U16(Vec<u16>),
    F32(Vec<f32>),
}

impl Samples {
    pub fn len(&self) -> usize {
        match self {
            Samples::U16(v) => v.len(),
            Samples::F32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> SampleKind {
        match self {
            Samples::U16(_) => SampleKind::U16,
            Samples::F32(_) => SampleKind::F32,
        }
    }

    #[inline]
    pub fn get_f64(&self, idx: usize) -> f64 {
        match self {
            Samples::U16(v) => f64::from(v[idx]),
            Samples::F32(v) => f64::from(v[idx]),
        }
    }
}

// Bit-level equality so NaN samples compare equal to themselves.
impl PartialEq for Samples {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Samples::U16(a), Samples::U16(b)) => a == b,
            (Samples::F32(a), Samples::F32(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            }
            _ => false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Raster {
    width: usize,
    height: usize,
    samples: Samples,
    nodata: Option<f64>,
    georef: GridGeoreference,
}

impl Raster {
    pub fn new(
        width: usize,
        height: usize,
        samples: Samples,
        nodata: Option<f64>,
        georef: GridGeoreference,
    ) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::EmptyGrid { width, height });
        }
        let expected = width
            .checked_mul(height)
            .ok_or(RasterError::EmptyGrid { width, height })?;
        if samples.len() != expected {
            return Err(RasterError::SampleCount {
                width,
                height,
                actual: samples.len(),
            });
        }
        georef.validate()?;
        Ok(Self {
            width,
            height,
            samples,
            nodata,
            georef,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn samples(&self) -> &Samples {
        &self.samples
    }

    pub fn into_samples(self) -> Samples {
        self.samples
    }

    pub fn sample_kind(&self) -> SampleKind {
        self.samples.kind()
    }

    pub fn nodata(&self) -> Option<f64> {
        self.nodata
    }

    pub fn georef(&self) -> &GridGeoreference {
        &self.georef
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn extent(&self) -> [f64; 4] {
        self.georef.extent(self.width, self.height)
    }

    #[inline]
    pub fn value(&self, col: usize, row: usize) -> f64 {
        self.samples.get_f64(row * self.width + col)
    }

    /// Whether the sample at linear index `idx` equals the NoData sentinel.
    ///
    /// Float comparisons are exact after narrowing the sentinel to `f32`; a NaN
    /// sentinel matches any NaN sample.
    #[inline]
    pub fn is_nodata_at(&self, idx: usize) -> bool {
        let Some(nd) = self.nodata else {
            return false;
        };
        match &self.samples {
            Samples::U16(v) => f64::from(v[idx]) == nd,
            Samples::F32(v) => {
                let s = v[idx];
                if nd.is_nan() {
                    s.is_nan()
                } else {
                    s == nd as f32
                }
            }
        }
    }

    /// Sample value as `f64`, or `None` when NoData or non-finite.
    #[inline]
    pub fn valid_value_at(&self, idx: usize) -> Option<f64> {
        if self.is_nodata_at(idx) {
            return None;
        }
        let v = self.samples.get_f64(idx);
        v.is_finite().then_some(v)
    }

    /// Valid (non-NoData, finite) min and max, if any sample is valid.
    pub fn valid_range(&self) -> Option<(f64, f64)> {
        (0..self.len())
            .filter_map(|i| self.valid_value_at(i))
            .fold(None, |acc, v| match acc {
                None => Some((v, v)),
                Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
            })
    }
}

impl PartialEq for Raster {
    fn eq(&self, other: &Self) -> bool {
        let nodata_eq = match (self.nodata, other.nodata) {
            (None, None) => true,
            (Some(a), Some(b)) => a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()),
            _ => false,
        };
        self.width == other.width
            && self.height == other.height
            && nodata_eq
            && self.georef == other.georef
            && self.samples == other.samples
    }
}
