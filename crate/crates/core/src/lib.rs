//! Field-scale and regional vegetation analysis.
//!
//! Band rasters come in through the GeoTIFF codec, field polygons through the
//! Shapefile or GeoJSON readers. From there NDVI is computed by band
//! arithmetic, aggregated per field, binned into regional histograms, and
//! turned into variable-rate application maps.

pub mod geojson;
pub mod geometry;
pub mod geotiff;
pub mod index;
pub mod prescription;
pub mod raster;
pub mod shapefile;
pub mod synth;
pub mod vector;
pub mod zonal;

pub use geojson::{read_geojson, write_geojson};
pub use geometry::PolygonGeometry;
pub use geotiff::{read_geotiff, write_geotiff, GeoTiffError};
pub use index::{apply_color_ramp, normalized_difference, ColorRamp, ColorStop, RgbaImage};
pub use prescription::{
    application_summary, build_prescription, ApplicationSummary, PrescriptionMap,
};
pub use raster::{GridGeoreference, Raster, SampleKind, Samples};
pub use shapefile::read_shapefile;
pub use vector::{filter_by_crop, AttributeValue, FeatureCollection, FieldFeature, VectorError};
pub use zonal::{
    classify, histogram, pixel_mask, zonal_statistics, ClassScheme, Histogram, PixelMask,
    ZonalRecord,
};
