use std::collections::HashMap;
use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, PathRejection, QueryRejection};
use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, State};
use axum::http::{header, Method, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use fieldkit_core::geojson::to_geojson_value;
use fieldkit_core::{
    application_summary, build_prescription, filter_by_crop, histogram, zonal_statistics,
    FeatureCollection, ZonalRecord,
};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::error::ApiError;
use crate::store::{Catalog, CatalogEntry, LayerData, SourceFormat, Upload};
use crate::tiles::{render_tile, resolve_ramp, TileAddress};

/// Uploads larger than this are refused.
pub const MAX_UPLOAD_BYTES: usize = 512 * 1024 * 1024;

type Params = HashMap<String, String>;
type ApiResult<T> = Result<T, ApiError>;

pub fn router(catalog: Arc<Catalog>) -> Router {
    Router::new()
        .route("/layers", post(ingest).get(list_layers))
        .route("/layers/{id}", get(get_layer))
        .route("/tiles/{id}/{z}/{x}/{y}", get(tile))
        .route("/features/{id}", get(features))
        .route("/stats/zonal", get(stats_zonal))
        .route("/stats/histogram", get(stats_histogram))
        .route("/prescriptions", post(prescription))
        .fallback(not_found)
        .method_not_allowed_fallback(method_not_allowed)
        .layer(DefaultBodyLimit::max(MAX_UPLOAD_BYTES))
        .with_state(catalog)
}

async fn not_found(uri: Uri) -> ApiError {
    ApiError::new(
        StatusCode::NOT_FOUND,
        "NotFound",
        format!("no route for {}", uri.path()),
    )
}

async fn method_not_allowed(method: Method, uri: Uri) -> ApiError {
    ApiError::new(
        StatusCode::METHOD_NOT_ALLOWED,
        "MethodNotAllowed",
        format!("{method} is not supported on {}", uri.path()),
    )
}

fn params(q: Result<Query<Params>, QueryRejection>) -> ApiResult<Params> {
    q.map(|Query(p)| p)
        .map_err(|e| ApiError::bad_request("MalformedQuery", e.body_text()))
}

fn path<T>(p: Result<Path<T>, PathRejection>) -> ApiResult<T> {
    p.map(|Path(v)| v)
        .map_err(|e| ApiError::bad_request("MalformedPath", e.body_text()))
}

fn required<'a>(p: &'a Params, name: &str) -> ApiResult<&'a str> {
    p.get(name)
        .map(String::as_str)
        .filter(|s| !s.is_empty())
        .ok_or_else(|| ApiError::missing_parameter(name))
}

fn parsed<T: std::str::FromStr>(p: &Params, name: &str, expected: &str) -> ApiResult<Option<T>> {
    match p.get(name) {
        None => Ok(None),
        Some(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| ApiError::bad_parameter(name, v, expected)),
    }
}

/// Run CPU-bound work off the async executor.
async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> ApiResult<T> + Send + 'static,
) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

fn format_from_filename(name: &str) -> Option<SourceFormat> {
    let ext = name.rsplit_once('.')?.1;
    SourceFormat::parse(ext)
}

async fn ingest(
    State(catalog): State<Arc<Catalog>>,
    query: Result<Query<Params>, QueryRejection>,
    multipart: Result<Multipart, axum::extract::multipart::MultipartRejection>,
) -> ApiResult<(StatusCode, Json<CatalogEntry>)> {
    let p = params(query)?;
    let mut multipart =
        multipart.map_err(|e| ApiError::bad_request("MalformedMultipart", e.body_text()))?;
    let malformed = |e: axum::extract::multipart::MultipartError| {
        ApiError::bad_request("MalformedMultipart", e.body_text())
    };

    let mut upload = Upload::default();
    let mut file = None;
    let mut file_name = None;
    while let Some(field) = multipart.next_field().await.map_err(malformed)? {
        let part = field.name().unwrap_or_default().to_string();
        match part.as_str() {
            "file" => {
                file_name = field.file_name().map(str::to_string);
                file = Some(field.bytes().await.map_err(malformed)?.to_vec());
            }
            "dbf" => upload.dbf = Some(field.bytes().await.map_err(malformed)?.to_vec()),
            "prj" => {
                let text = field.text().await.map_err(malformed)?;
                upload.prj = Some(text);
            }
            _ => {
                return Err(ApiError::bad_request(
                    "MalformedMultipart",
                    format!("unexpected part {part:?}; expected file, dbf or prj"),
                ))
            }
        }
    }
    upload.file = file
        .ok_or_else(|| ApiError::bad_request("MissingPart", "multipart body has no file part"))?;

    let format = match p.get("format") {
        Some(f) => SourceFormat::parse(f).ok_or_else(|| {
            ApiError::bad_request(
                "UnknownFormat",
                format!("format {f:?}; expected geotiff, geojson or shapefile"),
            )
        })?,
        None => file_name
            .as_deref()
            .and_then(format_from_filename)
            .ok_or_else(|| {
                ApiError::bad_request(
                    "UnknownFormat",
                    "no format parameter and the file name has no known extension",
                )
            })?,
    };
    upload.name = p
        .get("name")
        .cloned()
        .or(file_name)
        .unwrap_or_else(|| "layer".to_string());
    upload.epsg = parsed(&p, "epsg", "a positive integer EPSG code")?;
    if upload.epsg == Some(0) {
        return Err(ApiError::bad_parameter(
            "epsg",
            "0",
            "a positive integer EPSG code",
        ));
    }
    upload.crop_key = p.get("crop_key").cloned();

    let entry = blocking(move || catalog.ingest(format, upload)).await?;
    Ok((StatusCode::CREATED, Json(entry)))
}

async fn list_layers(State(catalog): State<Arc<Catalog>>) -> Json<Vec<CatalogEntry>> {
    Json(catalog.list())
}

async fn get_layer(
    State(catalog): State<Arc<Catalog>>,
    id: Result<Path<String>, PathRejection>,
) -> ApiResult<Json<CatalogEntry>> {
    Ok(Json(catalog.get(&path(id)?)?.entry.clone()))
}

fn tile_address(z: &str, x: &str, y: &str) -> ApiResult<TileAddress> {
    let y = y.strip_suffix(".png").unwrap_or(y);
    let bad = || {
        ApiError::bad_request(
            "MalformedTileAddress",
            format!("tile address {z}/{x}/{y} must be three non-negative integers"),
        )
    };
    Ok(TileAddress {
        z: z.parse().map_err(|_| bad())?,
        x: x.parse().map_err(|_| bad())?,
        y: y.parse().map_err(|_| bad())?,
    })
}

async fn tile(
    State(catalog): State<Arc<Catalog>>,
    segments: Result<Path<(String, String, String, String)>, PathRejection>,
    query: Result<Query<Params>, QueryRejection>,
) -> ApiResult<Response> {
    let (id, z, x, y) = path(segments)?;
    let p = params(query)?;
    let layer = catalog.get(&id)?;
    let max_zoom = layer.entry.max_zoom.unwrap_or(0);
    layer.raster()?;
    let addr = tile_address(&z, &x, &y)?.check(max_zoom)?;
    let ramp_spec = p.get("ramp").cloned();
    let png = blocking(move || {
        let raster = layer.raster()?;
        let ramp = resolve_ramp(ramp_spec.as_deref(), raster)?;
        render_tile(raster, addr, &ramp)
    })
    .await?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

fn parse_bbox(text: &str) -> ApiResult<[f64; 4]> {
    let bad = |why: &str| ApiError::bad_request("MalformedBbox", format!("bbox {text:?}: {why}"));
    let v: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| bad("expected four comma-separated numbers"))?;
    let b: [f64; 4] = v
        .try_into()
        .map_err(|_| bad("expected four comma-separated numbers"))?;
    if b.iter().any(|c| !c.is_finite()) {
        return Err(bad("coordinates must be finite"));
    }
    if b[0] > b[2] || b[1] > b[3] {
        return Err(bad("min must not exceed max"));
    }
    Ok(b)
}

fn intersects(a: [f64; 4], b: [f64; 4]) -> bool {
    a[0] <= b[2] && b[0] <= a[2] && a[1] <= b[3] && b[1] <= a[3]
}

/// Features whose bbox meets `bbox`, then narrowed to `crop` when given.
pub fn query_features(
    fc: &FeatureCollection,
    bbox: Option<[f64; 4]>,
    crop: Option<&str>,
) -> FeatureCollection {
    let hit = FeatureCollection {
        features: fc
            .features
            .iter()
            .filter(|f| bbox.is_none_or(|b| intersects(f.bbox(), b)))
            .cloned()
            .collect(),
        epsg_code: fc.epsg_code,
    };
    match crop {
        Some(c) => filter_by_crop(&hit, c),
        None => hit,
    }
}

async fn features(
    State(catalog): State<Arc<Catalog>>,
    id: Result<Path<String>, PathRejection>,
    query: Result<Query<Params>, QueryRejection>,
) -> ApiResult<Json<Value>> {
    let id = path(id)?;
    let p = params(query)?;
    let layer = catalog.get(&id)?;
    let fc = layer.vector()?;
    let bbox = p.get("bbox").map(|b| parse_bbox(b)).transpose()?;
    Ok(Json(to_geojson_value(&query_features(
        fc,
        bbox,
        p.get("crop").map(String::as_str),
    ))))
}

/// Zonal records for `raster` over the `vector` layer, optionally crop-filtered.
async fn zonal_records(catalog: &Catalog, p: &Params) -> ApiResult<Vec<ZonalRecord>> {
    let raster_layer = catalog.get(required(p, "raster")?)?;
    let vector_layer = catalog.get(required(p, "vector")?)?;
    raster_layer.raster()?;
    vector_layer.vector()?;
    let crop = p.get("crop").cloned();
    blocking(move || {
        let raster = raster_layer.raster()?;
        let fc = vector_layer.vector()?;
        let records = match crop {
            Some(c) => zonal_statistics(raster, &filter_by_crop(fc, &c)),
            None => zonal_statistics(raster, fc),
        };
        Ok(records?)
    })
    .await
}

async fn stats_zonal(
    State(catalog): State<Arc<Catalog>>,
    query: Result<Query<Params>, QueryRejection>,
) -> ApiResult<Json<Vec<ZonalRecord>>> {
    let p = params(query)?;
    Ok(Json(zonal_records(&catalog, &p).await?))
}

async fn stats_histogram(
    State(catalog): State<Arc<Catalog>>,
    query: Result<Query<Params>, QueryRejection>,
) -> ApiResult<Json<Value>> {
    let p = params(query)?;
    let metric = p.get("metric").map(String::as_str).unwrap_or("mean");
    let (default_lo, default_hi) = match metric {
        "mean" => (-1.0, 1.0),
        "std" => (0.0, 0.5),
        other => return Err(ApiError::bad_parameter("metric", other, "mean or std")),
    };
    let lo = parsed(&p, "lo", "a number")?.unwrap_or(default_lo);
    let hi = parsed(&p, "hi", "a number")?.unwrap_or(default_hi);
    let bins = parsed(&p, "bins", "a positive integer")?.unwrap_or(50usize);
    let records = zonal_records(&catalog, &p).await?;
    let values: Vec<f64> = records
        .iter()
        .filter_map(|r| if metric == "mean" { r.mean } else { r.std })
        .collect();
    let h = histogram(&values, lo, hi, bins)?;
    let mut body = serde_json::to_value(&h).map_err(|e| ApiError::internal(e.to_string()))?;
    body["metric"] = json!(metric);
    Ok(Json(body))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PrescriptionRequest {
    raster_id: String,
    vector_id: String,
    field_id: u64,
    breaks: Vec<f64>,
    rates: Vec<f64>,
    uniform_rate: Option<f64>,
    unit_cost: Option<f64>,
    name: Option<String>,
}

async fn prescription(
    State(catalog): State<Arc<Catalog>>,
    body: Result<Json<PrescriptionRequest>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let Json(req) = body.map_err(|e| ApiError::bad_request("MalformedBody", e.body_text()))?;
    let raster_layer = catalog.get(&req.raster_id)?;
    let vector_layer = catalog.get(&req.vector_id)?;
    raster_layer.raster()?;
    let field = vector_layer
        .vector()?
        .get(req.field_id)
        .cloned()
        .ok_or_else(|| {
            ApiError::new(
                StatusCode::NOT_FOUND,
                "UnknownFeature",
                format!(
                    "layer {} has no feature with id {}",
                    req.vector_id, req.field_id
                ),
            )
        })?;
    if let Some(c) = req.unit_cost {
        if !c.is_finite() {
            return Err(ApiError::bad_request(
                "BadUnitCost",
                format!("unit cost must be finite, got {c}"),
            ));
        }
    }

    blocking(move || {
        let presc = build_prescription(raster_layer.raster()?, &field, &req.breaks, &req.rates)?;
        let summary = req
            .uniform_rate
            .map(|u| application_summary(&presc, u, req.unit_cost.unwrap_or(1.0)))
            .transpose()?;
        let name = req.name.unwrap_or_else(|| {
            format!(
                "prescription-{}-field-{}",
                raster_layer.entry.name, req.field_id
            )
        });
        let entry = catalog.insert(
            name,
            SourceFormat::Geotiff,
            LayerData::Raster(presc.zone_raster.clone()),
        )?;
        let body = json!({
            "layer_id": entry.layer_id,
            "field_id": presc.field_id,
            "breaks": presc.breaks,
            "rates": presc.rates,
            "zone_pixel_counts": presc.zone_pixel_counts,
            "area_ha": presc.area_ha(),
            "variable_total": presc.total_amount,
            "summary": summary,
        });
        Ok((StatusCode::CREATED, Json(body)))
    })
    .await
}
