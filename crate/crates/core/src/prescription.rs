//! Variable-rate application maps derived from an NDVI raster.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{Raster, Samples};
use crate::vector::FieldFeature;
use crate::zonal::{check_crs, fixed_break_class, pixel_mask, validate_breaks, ZonalError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PrescriptionError {
    #[error("CRS mismatch: raster EPSG {raster}, field EPSG {field}")]
    CrsMismatch { raster: u32, field: u32 },
    #[error("breaks must be finite and strictly ascending: {0:?}")]
    BadBreaks(Vec<f64>),
    #[error("{rates} rates given for {breaks} breaks, need breaks + 1")]
    RateLengthMismatch { breaks: usize, rates: usize },
    #[error("rates must be finite: {0:?}")]
    BadRates(Vec<f64>),
    #[error("field has no valid pixels")]
    EmptyField,
    #[error("uniform rate must be positive, got {0}")]
    BadUniformRate(f64),
}

impl PrescriptionError {
    pub fn name(&self) -> &'static str {
        match self {
            PrescriptionError::CrsMismatch { .. } => "CrsMismatch",
            PrescriptionError::BadBreaks(_) => "BadBreaks",
            PrescriptionError::RateLengthMismatch { .. } => "RateLengthMismatch",
            PrescriptionError::BadRates(_) => "BadRates",
            PrescriptionError::EmptyField => "EmptyField",
            PrescriptionError::BadUniformRate(_) => "BadUniformRate",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrescriptionMap {
    pub field_id: u64,
    /// Application rate per pixel (units/ha); NaN outside the field or where NDVI is NoData.
    pub zone_raster: Raster,
    pub breaks: Vec<f64>,
    pub rates: Vec<f64>,
    pub pixel_area_ha: f64,
    /// Valid in-field pixels per zone.
    pub zone_pixel_counts: Vec<u64>,
    pub total_amount: f64,
}

impl PrescriptionMap {
    pub fn valid_pixel_count(&self) -> u64 {
        self.zone_pixel_counts.iter().sum()
    }

    /// Treated area in hectares.
    pub fn area_ha(&self) -> f64 {
        let g = self.zone_raster.georef();
        self.valid_pixel_count() as f64 * g.pixel_size_x * g.pixel_size_y / 10_000.0
    }
}

/// Zone each valid in-field NDVI pixel by the left-closed break rule and
/// write that zone's rate. `rates[0]` applies to the lowest NDVI zone.
pub fn build_prescription(
    ndvi: &Raster,
    field: &FieldFeature,
    breaks: &[f64],
    rates: &[f64],
) -> Result<PrescriptionMap, PrescriptionError> {
    let raster_epsg = u32::from(ndvi.georef().epsg_code);
    check_crs(raster_epsg, field.epsg_code).map_err(|_| PrescriptionError::CrsMismatch {
        raster: raster_epsg,
        field: field.epsg_code,
    })?;
    validate_breaks(breaks).map_err(|e| match e {
        ZonalError::BadBreaks(b) => PrescriptionError::BadBreaks(b),
        _ => unreachable!(),
    })?;
    if rates.len() != breaks.len() + 1 {
        return Err(PrescriptionError::RateLengthMismatch {
            breaks: breaks.len(),
            rates: rates.len(),
        });
    }
    if rates.iter().any(|r| !r.is_finite()) {
        return Err(PrescriptionError::BadRates(rates.to_vec()));
    }

    let g = ndvi.georef();
    let mask = pixel_mask(&field.geometry, g, ndvi.width(), ndvi.height());
    let mut out = vec![f32::NAN; ndvi.len()];
    let mut counts = vec![0u64; rates.len()];
    for (col, row) in mask.iter() {
        let idx = row * ndvi.width() + col;
        if let Some(v) = ndvi.valid_value_at(idx) {
            let zone = fixed_break_class(breaks, v);
            counts[zone] += 1;
            out[idx] = rates[zone] as f32;
        }
    }
    // Summed per zone: exact for integral rates and pixel sizes.
    let rate_pixels: f64 = counts.iter().zip(rates).map(|(&n, &r)| n as f64 * r).sum();
    let total_amount = rate_pixels * g.pixel_size_x * g.pixel_size_y / 10_000.0;

    let zone_raster = Raster::new(
        ndvi.width(),
        ndvi.height(),
        Samples::F32(out),
        Some(f64::NAN),
        *g,
    )
    .expect("grid taken from a valid raster");
    Ok(PrescriptionMap {
        field_id: field.id,
        zone_raster,
        breaks: breaks.to_vec(),
        rates: rates.to_vec(),
        pixel_area_ha: g.pixel_area_ha(),
        zone_pixel_counts: counts,
        total_amount,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplicationSummary {
    pub area_ha: f64,
    pub variable_total: f64,
    pub uniform_total: f64,
    pub reduction_fraction: f64,
    pub cost_saving: f64,
    pub saving_per_ha: f64,
}

/// Compare the variable-rate total with a uniform application over the same area.
pub fn application_summary(
    presc: &PrescriptionMap,
    uniform_rate: f64,
    unit_cost: f64,
) -> Result<ApplicationSummary, PrescriptionError> {
    if !(uniform_rate.is_finite() && uniform_rate > 0.0) {
        return Err(PrescriptionError::BadUniformRate(uniform_rate));
    }
    if presc.valid_pixel_count() == 0 {
        return Err(PrescriptionError::EmptyField);
    }
    let area_ha = presc.area_ha();
    let variable_total = presc.total_amount;
    let uniform_total = uniform_rate * area_ha;
    let cost_saving = (uniform_total - variable_total) * unit_cost;
    Ok(ApplicationSummary {
        area_ha,
        variable_total,
        uniform_total,
        reduction_fraction: 1.0 - variable_total / uniform_total,
        cost_saving,
        saving_per_ha: cost_saving / area_ha,
    })
}
