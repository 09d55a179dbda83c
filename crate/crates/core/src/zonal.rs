//! Polygon rasterization, per-field statistics, histograms and classification.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{crossing_x, PolygonGeometry};
use crate::raster::{GridGeoreference, Raster};
use crate::vector::FeatureCollection;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ZonalError {
    #[error("CRS mismatch: raster EPSG {raster}, features EPSG {features}")]
    CrsMismatch { raster: u32, features: u32 },
    #[error("bad histogram range [{lo}, {hi}]")]
    BadRange { lo: f64, hi: f64 },
    #[error("bad bin count {0}")]
    BadBins(usize),
    #[error("breaks must be finite and strictly ascending: {0:?}")]
    BadBreaks(Vec<f64>),
    #[error("quantile class count must be at least 1, got {0}")]
    BadClassCount(usize),
}

impl ZonalError {
    pub fn name(&self) -> &'static str {
        match self {
            ZonalError::CrsMismatch { .. } => "CrsMismatch",
            ZonalError::BadRange { .. } => "BadRange",
            ZonalError::BadBins(_) => "BadBins",
            ZonalError::BadBreaks(_) => "BadBreaks",
            ZonalError::BadClassCount(_) => "BadClassCount",
        }
    }
}

/// Contiguous covered columns `[start, end)` in one row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub row: usize,
    pub start: usize,
    pub end: usize,
}

/// Pixels of a grid whose centers lie inside a geometry, stored as
/// non-overlapping row spans in row-major order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelMask {
    pub width: usize,
    pub height: usize,
    spans: Vec<Span>,
}

impl PixelMask {
    pub fn spans(&self) -> &[Span] {
        &self.spans
    }

    pub fn len(&self) -> usize {
        self.spans.iter().map(|s| s.end - s.start).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    /// Covered `(col, row)` pairs in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.spans
            .iter()
            .flat_map(|s| (s.start..s.end).map(move |c| (c, s.row)))
    }

    pub fn contains(&self, col: usize, row: usize) -> bool {
        let i = self
            .spans
            .partition_point(|s| s.row < row || (s.row == row && s.end <= col));
        self.spans
            .get(i)
            .is_some_and(|s| s.row == row && s.start <= col && col < s.end)
    }
}

/// First column whose center is at or right of `x`. Center x-coordinates are
/// monotone in the column index, so an estimate is refined with exact tests.
fn first_col_at_or_after(georef: &GridGeoreference, x: f64, width: usize) -> usize {
    let est = ((x - georef.origin_x) / georef.pixel_size_x - 0.5).ceil();
    let mut c = if est.is_nan() || est <= 0.0 {
        0
    } else if est >= width as f64 {
        width
    } else {
        est as usize
    };
    while c > 0 && georef.center_x(c - 1) >= x {
        c -= 1;
    }
    while c < width && georef.center_x(c) < x {
        c += 1;
    }
    c
}

/// Center-in-polygon rasterization.
///
/// Pixel (col, row) is covered iff its center is inside `geometry` under the
/// even-odd ray-casting rule of [`PolygonGeometry::contains`]. Each row is
/// evaluated as a scanline: with the crossing abscissae sorted, the centers
/// with an odd number of crossings strictly to their right are exactly those
/// in `[xs[2k], xs[2k+1])`.
pub fn pixel_mask(
    geometry: &PolygonGeometry,
    georef: &GridGeoreference,
    width: usize,
    height: usize,
) -> PixelMask {
    let edges: Vec<_> = geometry.edges().collect();
    let [_, min_y, _, max_y] = geometry.bbox();
    // Conservative row range from the bbox; the per-row crossing test is exact.
    let row_lo = ((georef.origin_y - max_y) / georef.pixel_size_y - 1.0).floor();
    let row_hi = ((georef.origin_y - min_y) / georef.pixel_size_y + 1.0).ceil();
    let row_lo = if row_lo.is_nan() {
        0
    } else {
        row_lo.max(0.0).min(height as f64) as usize
    };
    let row_hi = if row_hi.is_nan() {
        0
    } else {
        row_hi.max(0.0).min(height as f64) as usize
    };

    let mut spans = Vec::new();
    let mut xs = Vec::new();
    for row in row_lo..row_hi {
        let py = georef.center_y(row);
        xs.clear();
        xs.extend(edges.iter().filter_map(|&(a, b)| crossing_x(a, b, py)));
        if xs.is_empty() {
            continue;
        }
        xs.sort_by(f64::total_cmp);
        for pair in xs.chunks_exact(2) {
            let start = first_col_at_or_after(georef, pair[0], width);
            let end = first_col_at_or_after(georef, pair[1], width);
            if start < end {
                spans.push(Span { row, start, end });
            }
        }
    }
    PixelMask {
        width,
        height,
        spans,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZonalRecord {
    pub field_id: u64,
    pub pixel_count: u64,
    pub valid_count: u64,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub valid_fraction: f64,
}

/// Neumaier-compensated running sum.
#[derive(Default, Clone, Copy)]
struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

fn record_for(field_id: u64, raster: &Raster, mask: &PixelMask) -> ZonalRecord {
    let width = raster.width();
    let mut values = Vec::with_capacity(mask.len());
    let mut pixel_count = 0u64;
    for span in mask.spans() {
        let base = span.row * width;
        for col in span.start..span.end {
            pixel_count += 1;
            if let Some(v) = raster.valid_value_at(base + col) {
                values.push(v);
            }
        }
    }
    let n = values.len();
    let valid_fraction = if pixel_count == 0 {
        0.0
    } else {
        n as f64 / pixel_count as f64
    };
    if n == 0 {
        return ZonalRecord {
            field_id,
            pixel_count,
            valid_count: 0,
            mean: None,
            std: None,
            min: None,
            max: None,
            valid_fraction,
        };
    }
    let mut sum = KahanSum::default();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in &values {
        sum.add(v);
        lo = lo.min(v);
        hi = hi.max(v);
    }
    // Clamp guards the min <= mean <= max invariant against last-ulp rounding.
    let mean = (sum.total() / n as f64).clamp(lo, hi);
    let mut sq = KahanSum::default();
    for &v in &values {
        let d = v - mean;
        sq.add(d * d);
    }
    let std = (sq.total() / n as f64).sqrt();
    ZonalRecord {
        field_id,
        pixel_count,
        valid_count: n as u64,
        mean: Some(mean),
        std: Some(std),
        min: Some(lo),
        max: Some(hi),
        valid_fraction,
    }
}

/// Agreement check between a raster CRS and a feature-collection CRS; 0 means unknown.
pub fn check_crs(raster_epsg: u32, features_epsg: u32) -> Result<(), ZonalError> {
    if raster_epsg == 0 || features_epsg == 0 || raster_epsg != features_epsg {
        return Err(ZonalError::CrsMismatch {
            raster: raster_epsg,
            features: features_epsg,
        });
    }
    Ok(())
}

/// One record per feature, in input order. Features are processed in
/// parallel; the output does not depend on scheduling.
pub fn zonal_statistics(
    raster: &Raster,
    features: &FeatureCollection,
) -> Result<Vec<ZonalRecord>, ZonalError> {
    check_crs(u32::from(raster.georef().epsg_code), features.epsg_code)?;
    Ok(features
        .features
        .par_iter()
        .map(|f| {
            let mask = pixel_mask(
                &f.geometry,
                raster.georef(),
                raster.width(),
                raster.height(),
            );
            record_for(f.id, raster, &mask)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub n_bins: usize,
    pub counts: Vec<u64>,
    pub underflow: u64,
    pub overflow: u64,
}

impl Histogram {
    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / self.n_bins as f64
    }

    /// Lower edge of bin `i`.
    pub fn edge(&self, i: usize) -> f64 {
        if i == self.n_bins {
            self.hi
        } else {
            self.lo + i as f64 * self.bin_width()
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.underflow + self.overflow
    }
}

/// Equal-width histogram over `[lo, hi]`.
///
/// Bins are left-closed and right-open except the last, which also takes
/// `hi`. Non-finite values are skipped entirely.
pub fn histogram(values: &[f64], lo: f64, hi: f64, n_bins: usize) -> Result<Histogram, ZonalError> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(ZonalError::BadRange { lo, hi });
    }
    if n_bins < 1 {
        return Err(ZonalError::BadBins(n_bins));
    }
    let mut h = Histogram {
        lo,
        hi,
        n_bins,
        counts: vec![0; n_bins],
        underflow: 0,
        overflow: 0,
    };
    let w = h.bin_width();
    for &v in values {
        if !v.is_finite() {
            continue;
        }
        if v < lo {
            h.underflow += 1;
        } else if v > hi {
            h.overflow += 1;
        } else {
            let est = ((v - lo) / w).floor();
            let mut i = if est.is_finite() && est > 0.0 {
                (est as usize).min(n_bins - 1)
            } else {
                0
            };
            // Settle against the explicit edges lo + i*w.
            while i > 0 && v < h.edge(i) {
                i -= 1;
            }
            while i + 1 < n_bins && v >= h.edge(i + 1) {
                i += 1;
            }
            h.counts[i] += 1;
        }
    }
    Ok(h)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassScheme {
    FixedBreaks(Vec<f64>),
    Quantiles(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldClass {
    pub field_id: u64,
    pub class: Option<usize>,
}

pub fn validate_breaks(breaks: &[f64]) -> Result<(), ZonalError> {
    if breaks.iter().any(|b| !b.is_finite()) || breaks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ZonalError::BadBreaks(breaks.to_vec()));
    }
    Ok(())
}

/// Left-closed class index: the number of breaks at or below `value`.
#[inline]
pub fn fixed_break_class(breaks: &[f64], value: f64) -> usize {
    breaks.partition_point(|&b| b <= value)
}

/// Nearest-rank `(j/k)`-quantiles, `j = 1..k-1`, of the values.
pub fn nearest_rank_breaks(values: &[f64], k: usize) -> Vec<f64> {
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n == 0 {
        return Vec::new();
    }
    (1..k)
        .map(|j| {
            // ceil(j*n/k) in exact integer arithmetic, clamped to rank >= 1
            let rank = (j * n).div_ceil(k).max(1);
            sorted[rank - 1]
        })
        .collect()
}

/// Assign a class to each record's mean; records without a mean get `None`.
///
/// Fixed breaks are left-closed: class `i` holds `[b_i, b_{i+1})`. Quantile
/// breaks are the nearest-rank quantiles of the present means, and a mean
/// equal to a break falls to the lower class, so tied means share the lowest
/// class they reach and `k` equal-sized groups come out exactly.
pub fn classify(
    records: &[ZonalRecord],
    scheme: &ClassScheme,
) -> Result<Vec<FieldClass>, ZonalError> {
    let assign: Box<dyn Fn(f64) -> usize> = match scheme {
        ClassScheme::FixedBreaks(breaks) => {
            validate_breaks(breaks)?;
            let breaks = breaks.clone();
            Box::new(move |m| fixed_break_class(&breaks, m))
        }
        ClassScheme::Quantiles(k) => {
            if *k < 1 {
                return Err(ZonalError::BadClassCount(*k));
            }
            let means: Vec<f64> = records.iter().filter_map(|r| r.mean).collect();
            let breaks = nearest_rank_breaks(&means, *k);
            Box::new(move |m| breaks.partition_point(|&b| b < m))
        }
    };
    Ok(records
        .iter()
        .map(|r| FieldClass {
            field_id: r.field_id,
            class: r.mean.map(&assign),
        })
        .collect())
}

pub const ZONAL_CSV_HEADER: [&str; 8] = [
    "field_id",
    "pixel_count",
    "valid_count",
    "mean",
    "std",
    "min",
    "max",
    "valid_fraction",
];

/// CSV with the fixed header; absent statistics are empty cells.
pub fn records_to_csv(records: &[ZonalRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(ZONAL_CSV_HEADER).unwrap();
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in records {
        w.write_record([
            r.field_id.to_string(),
            r.pixel_count.to_string(),
            r.valid_count.to_string(),
            opt(r.mean),
            opt(r.std),
            opt(r.min),
            opt(r.max),
            r.valid_fraction.to_string(),
        ])
        .unwrap();
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}

pub fn records_from_csv(text: &str) -> Result<Vec<ZonalRecord>, csv::Error> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect()
}

pub fn records_to_json(records: &[ZonalRecord]) -> String {
    serde_json::to_string(records).unwrap()
}
