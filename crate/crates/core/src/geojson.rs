//! GeoJSON intake and the normalized GeoJSON form used for storage and queries.

use serde_json::{json, Map, Value};

use crate::geometry::{Point, PolygonGeometry};
use crate::vector::{AttributeValue, Attributes, FeatureCollection, VectorError};

/// CRS assumed for GeoJSON without an override.
pub const GEOJSON_DEFAULT_EPSG: u32 = 4326;

fn parse_err(msg: impl Into<String>) -> VectorError {
    VectorError::Parse(msg.into())
}

fn position(v: &Value) -> Result<Point, VectorError> {
    let arr = v
        .as_array()
        .filter(|a| a.len() >= 2)
        .ok_or_else(|| parse_err("position must be an array of at least two numbers"))?;
    let x = arr[0]
        .as_f64()
        .ok_or_else(|| parse_err("non-numeric coordinate"))?;
    let y = arr[1]
        .as_f64()
        .ok_or_else(|| parse_err("non-numeric coordinate"))?;
    Ok([x, y])
}

fn rings_of(polygon: &Value) -> Result<Vec<Vec<Point>>, VectorError> {
    polygon
        .as_array()
        .ok_or_else(|| parse_err("polygon coordinates must be an array of rings"))?
        .iter()
        .map(|ring| {
            ring.as_array()
                .ok_or_else(|| parse_err("ring must be an array of positions"))?
                .iter()
                .map(position)
                .collect()
        })
        .collect()
}

fn attribute_of(v: &Value) -> Option<AttributeValue> {
    match v {
        Value::Null => None,
        Value::Number(n) => n.as_f64().map(AttributeValue::Number),
        Value::String(s) => Some(AttributeValue::Text(s.clone())),
        Value::Bool(b) => Some(AttributeValue::Text(b.to_string())),
        other => Some(AttributeValue::Text(other.to_string())),
    }
}

/// Parse a GeoJSON FeatureCollection of Polygon/MultiPolygon features.
///
/// MultiPolygon parts are flattened into the rings of a single feature. The
/// CRS is `epsg_override` when given, otherwise EPSG:4326.
pub fn read_geojson(
    text: &str,
    epsg_override: Option<u32>,
    crop_key: &str,
) -> Result<FeatureCollection, VectorError> {
    let root: Value = serde_json::from_str(text).map_err(|e| parse_err(e.to_string()))?;
    if root.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(parse_err("top-level object is not a FeatureCollection"));
    }
    let features = root
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| parse_err("FeatureCollection without a features array"))?;

    let mut parts = Vec::with_capacity(features.len());
    for (i, feature) in features.iter().enumerate() {
        let geometry = feature
            .get("geometry")
            .ok_or_else(|| parse_err(format!("feature {i} has no geometry member")))?;
        let kind = geometry
            .get("type")
            .and_then(Value::as_str)
            .unwrap_or("null");
        let coords = geometry.get("coordinates");
        let rings = match (kind, coords) {
            ("Polygon", Some(c)) => rings_of(c)?,
            ("MultiPolygon", Some(c)) => {
                let polys = c
                    .as_array()
                    .ok_or_else(|| parse_err("MultiPolygon coordinates must be an array"))?;
                let mut rings = Vec::new();
                for p in polys {
                    rings.extend(rings_of(p)?);
                }
                rings
            }
            ("Polygon" | "MultiPolygon", None) => {
                return Err(parse_err(format!("feature {i} geometry lacks coordinates")))
            }
            (other, _) => {
                return Err(VectorError::UnsupportedGeometry {
                    feature: i,
                    kind: other.to_string(),
                })
            }
        };
        let geometry = PolygonGeometry::new(rings)
            .map_err(|source| VectorError::InvalidGeometry { feature: i, source })?;

        let mut attributes = Attributes::new();
        if let Some(props) = feature.get("properties").and_then(Value::as_object) {
            for (k, v) in props {
                if let Some(a) = attribute_of(v) {
                    attributes.insert(k.clone(), a);
                }
            }
        }
        parts.push((geometry, attributes));
    }

    Ok(FeatureCollection::assemble(
        parts,
        epsg_override.unwrap_or(GEOJSON_DEFAULT_EPSG),
        crop_key,
    ))
}

/// The `epsg` member embedded by [`to_geojson_value`], if present.
pub fn embedded_epsg(text: &str) -> Option<u32> {
    let root: Value = serde_json::from_str(text).ok()?;
    root.get("epsg")?
        .as_u64()
        .and_then(|v| u32::try_from(v).ok())
}

/// Normalized GeoJSON: every feature is written as a single Polygon holding
/// all of its rings (even-odd semantics), with `id` and `crop_code` members
/// and the collection CRS under a top-level `epsg` member.
pub fn to_geojson_value(collection: &FeatureCollection) -> Value {
    let features: Vec<Value> = collection
        .features
        .iter()
        .map(|f| {
            let props: Map<String, Value> = f
                .attributes
                .iter()
                .map(|(k, v)| (k.clone(), serde_json::to_value(v).unwrap_or(Value::Null)))
                .collect();
            json!({
                "type": "Feature",
                "id": f.id,
                "crop_code": f.crop_code,
                "properties": props,
                "geometry": {
                    "type": "Polygon",
                    "coordinates": f.geometry.rings(),
                },
            })
        })
        .collect();
    json!({
        "type": "FeatureCollection",
        "epsg": collection.epsg_code,
        "features": features,
    })
}

pub fn write_geojson(collection: &FeatureCollection) -> String {
    to_geojson_value(collection).to_string()
}

/// Inverse of [`write_geojson`]: restores the stored CRS, feature ids and crop
/// codes exactly instead of re-deriving them.
pub fn read_normalized_geojson(text: &str) -> Result<FeatureCollection, VectorError> {
    let root: Value = serde_json::from_str(text).map_err(|e| parse_err(e.to_string()))?;
    let epsg = root
        .get("epsg")
        .and_then(Value::as_u64)
        .and_then(|v| u32::try_from(v).ok())
        .ok_or_else(|| parse_err("normalized GeoJSON lacks an epsg member"))?;
    let mut collection = read_geojson(text, Some(epsg), "")?;
    let stored = root["features"]
        .as_array()
        .map(Vec::as_slice)
        .unwrap_or_default();
    for (f, v) in collection.features.iter_mut().zip(stored) {
        f.id = v
            .get("id")
            .and_then(Value::as_u64)
            .ok_or_else(|| parse_err("normalized feature lacks a numeric id"))?;
        f.crop_code = v
            .get("crop_code")
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_string();
    }
    Ok(collection)
}
