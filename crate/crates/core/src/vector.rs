//! Field polygons and their attributes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GeometryError, PolygonGeometry};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VectorError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unsupported geometry type {kind:?} in feature {feature}")]
    UnsupportedGeometry { feature: usize, kind: String },
    #[error("bad header in {file}: {detail}")]
    BadHeader { file: &'static str, detail: String },
    #[error("unsupported shape type {shape_type} (record {record})")]
    UnsupportedShapeType { record: usize, shape_type: i32 },
    #[error("record count mismatch: shp has {shp} records, dbf has {dbf}")]
    RecordCountMismatch { shp: usize, dbf: usize },
    #[error("truncated {file} at offset {offset}: {what}")]
    Truncated {
        file: &'static str,
        offset: usize,
        what: &'static str,
    },
    #[error("invalid geometry in feature {feature}: {source}")]
    InvalidGeometry {
        feature: usize,
        #[source]
        source: GeometryError,
    },
}

impl VectorError {
    pub fn name(&self) -> &'static str {
        match self {
            VectorError::Parse(_) => "ParseError",
            VectorError::UnsupportedGeometry { .. } => "UnsupportedGeometry",
            VectorError::BadHeader { .. } => "BadHeader",
            VectorError::UnsupportedShapeType { .. } => "UnsupportedShapeType",
            VectorError::RecordCountMismatch { .. } => "RecordCountMismatch",
            VectorError::Truncated { .. } => "Truncated",
            VectorError::InvalidGeometry { .. } => "InvalidGeometry",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttributeValue {
    Number(f64),
    Text(String),
}

impl AttributeValue {
    /// Text form used for crop codes; integral numbers print without a fraction.
    pub fn as_text(&self) -> String {
        match self {
            AttributeValue::Text(s) => s.clone(),
            AttributeValue::Number(n) if n.fract() == 0.0 && n.abs() < 1e15 => {
                format!("{}", *n as i64)
            }
            AttributeValue::Number(n) => format!("{n}"),
        }
    }
}

pub type Attributes = BTreeMap<String, AttributeValue>;

#[derive(Debug, Clone, PartialEq)]
pub struct FieldFeature {
    pub id: u64,
    pub geometry: PolygonGeometry,
    pub crop_code: String,
    pub attributes: Attributes,
    pub epsg_code: u32,
}

impl FieldFeature {
    pub fn bbox(&self) -> [f64; 4] {
        self.geometry.bbox()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCollection {
    pub features: Vec<FieldFeature>,
    pub epsg_code: u32,
}

impl FeatureCollection {
    /// Assembles a collection from parsed parts, assigning ids in order and
    /// drawing `crop_code` from `crop_key`.
    pub(crate) fn assemble(
        parts: Vec<(PolygonGeometry, Attributes)>,
        epsg_code: u32,
        crop_key: &str,
    ) -> Self {
        let features = parts
            .into_iter()
            .enumerate()
            .map(|(i, (geometry, attributes))| FieldFeature {
                id: i as u64,
                crop_code: attributes
                    .get(crop_key)
                    .map(AttributeValue::as_text)
                    .unwrap_or_default(),
                geometry,
                attributes,
                epsg_code,
            })
            .collect();
        Self {
            features,
            epsg_code,
        }
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn get(&self, id: u64) -> Option<&FieldFeature> {
        self.features.iter().find(|f| f.id == id)
    }

    /// Union of all feature extents, `None` for an empty collection.
    pub fn bbox(&self) -> Option<[f64; 4]> {
        self.features.iter().map(FieldFeature::bbox).reduce(|a, b| {
            [
                a[0].min(b[0]),
                a[1].min(b[1]),
                a[2].max(b[2]),
                a[3].max(b[3]),
            ]
        })
    }

    /// Replaces the CRS code on the collection and every feature.
    pub fn with_epsg(mut self, epsg_code: u32) -> Self {
        self.epsg_code = epsg_code;
        for f in &mut self.features {
            f.epsg_code = epsg_code;
        }
        self
    }
}

/// Features whose crop code equals `crop_value` ignoring case. Order and ids
/// are preserved.
pub fn filter_by_crop(collection: &FeatureCollection, crop_value: &str) -> FeatureCollection {
    let wanted = crop_value.to_lowercase();
    FeatureCollection {
        features: collection
            .features
            .iter()
            .filter(|f| f.crop_code.to_lowercase() == wanted)
            .cloned()
            .collect(),
        epsg_code: collection.epsg_code,
    }
}
