//! File-directory layer catalog.
//!
//! Each layer lives in `<data_dir>/layers/<layer_id>/` as `meta.json` next to
//! its canonical payload, `data.tif` for rasters and `data.geojson` for
//! vectors. A layer is written under a hidden temporary name and renamed into
//! place, so it is either fully present or absent.

use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use axum::http::StatusCode;
use chrono::{DateTime, SecondsFormat, Utc};
use fieldkit_core::geojson::{embedded_epsg, read_normalized_geojson, write_geojson};
use fieldkit_core::shapefile::epsg_from_prj;
use fieldkit_core::{
    read_geojson, read_geotiff, read_shapefile, write_geotiff, FeatureCollection, Raster,
};
use serde::{Deserialize, Serialize};

use crate::error::ApiError;
use crate::tiles::max_zoom_for;

pub const DEFAULT_CROP_KEY: &str = "crop";

const LAYERS_DIR: &str = "layers";
const META_FILE: &str = "meta.json";
const RASTER_FILE: &str = "data.tif";
const VECTOR_FILE: &str = "data.geojson";
const TMP_PREFIX: &str = ".tmp-";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Raster,
    Vector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceFormat {
    Geotiff,
    Geojson,
    Shapefile,
}

impl SourceFormat {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "geotiff" | "tiff" | "tif" => Some(Self::Geotiff),
            "geojson" | "json" => Some(Self::Geojson),
            "shapefile" | "shp" => Some(Self::Shapefile),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub layer_id: String,
    pub name: String,
    pub kind: LayerKind,
    pub epsg_code: u32,
    /// `[min_x, min_y, max_x, max_y]`; `None` only for an empty vector layer.
    pub bbox: Option<[f64; 4]>,
    pub created_at: String,
    pub source_format: SourceFormat,
    /// Deepest tile level of a raster layer's pyramid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_zoom: Option<u32>,
}

#[derive(Debug)]
pub enum LayerData {
    Raster(Raster),
    Vector(FeatureCollection),
}

#[derive(Debug)]
pub struct Layer {
    pub entry: CatalogEntry,
    pub data: LayerData,
}

impl Layer {
    pub fn raster(&self) -> Result<&Raster, ApiError> {
        match &self.data {
            LayerData::Raster(r) => Ok(r),
            LayerData::Vector(_) => Err(ApiError::bad_request(
                "NotARaster",
                format!("layer {} is a vector layer", self.entry.layer_id),
            )),
        }
    }

    pub fn vector(&self) -> Result<&FeatureCollection, ApiError> {
        match &self.data {
            LayerData::Vector(v) => Ok(v),
            LayerData::Raster(_) => Err(ApiError::bad_request(
                "NotAVector",
                format!("layer {} is a raster layer", self.entry.layer_id),
            )),
        }
    }
}

/// Uploaded bytes plus the options that steer parsing.
#[derive(Debug, Default, Clone)]
pub struct Upload {
    pub name: String,
    pub file: Vec<u8>,
    pub dbf: Option<Vec<u8>>,
    pub prj: Option<String>,
    pub epsg: Option<u32>,
    pub crop_key: Option<String>,
}

pub struct Catalog {
    root: PathBuf,
    layers: RwLock<HashMap<String, Arc<Layer>>>,
}

fn parse_error(name: &str, detail: impl std::fmt::Display) -> ApiError {
    ApiError::bad_request("ParseError", format!("{name}: {detail}"))
}

fn io_error(context: &str, e: io::Error) -> ApiError {
    ApiError::internal(format!("{context}: {e}"))
}

impl Catalog {
    /// Open (creating if needed) the catalog under `data_dir` and load every
    /// stored layer. Leftovers of interrupted ingests are removed.
    pub fn open(data_dir: impl AsRef<Path>) -> io::Result<Self> {
        let root = data_dir.as_ref().join(LAYERS_DIR);
        fs::create_dir_all(&root)?;
        let mut layers = HashMap::new();
        for dirent in fs::read_dir(&root)? {
            let dirent = dirent?;
            let name = dirent.file_name().to_string_lossy().into_owned();
            if name.starts_with(TMP_PREFIX) {
                fs::remove_dir_all(dirent.path())?;
                continue;
            }
            if !dirent.file_type()?.is_dir() {
                continue;
            }
            let layer = load_layer(&dirent.path())
                .map_err(|e| io::Error::new(e.kind(), format!("layer {name}: {e}")))?;
            layers.insert(layer.entry.layer_id.clone(), Arc::new(layer));
        }
        Ok(Self {
            root,
            layers: RwLock::new(layers),
        })
    }

    pub fn get(&self, id: &str) -> Result<Arc<Layer>, ApiError> {
        self.layers
            .read()
            .expect("catalog lock poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::unknown_layer(id))
    }

    /// All entries ordered by creation time, then id.
    pub fn list(&self) -> Vec<CatalogEntry> {
        let mut entries: Vec<CatalogEntry> = self
            .layers
            .read()
            .expect("catalog lock poisoned")
            .values()
            .map(|l| l.entry.clone())
            .collect();
        entries.sort_by(|a, b| (&a.created_at, &a.layer_id).cmp(&(&b.created_at, &b.layer_id)));
        entries
    }

    /// Parse an upload under `format` and store it.
    pub fn ingest(&self, format: SourceFormat, upload: Upload) -> Result<CatalogEntry, ApiError> {
        let crop_key = upload.crop_key.as_deref().unwrap_or(DEFAULT_CROP_KEY);
        let data = match format {
            SourceFormat::Geotiff => {
                let mut r = read_geotiff(&upload.file).map_err(|e| parse_error(e.name(), e))?;
                if let Some(epsg) = upload.epsg {
                    r = with_raster_epsg(r, epsg)?;
                }
                LayerData::Raster(r)
            }
            SourceFormat::Geojson => {
                let text = std::str::from_utf8(&upload.file)
                    .map_err(|e| parse_error("ParseError", format!("GeoJSON is not UTF-8: {e}")))?;
                let epsg = upload.epsg.or_else(|| embedded_epsg(text));
                let fc =
                    read_geojson(text, epsg, crop_key).map_err(|e| parse_error(e.name(), e))?;
                LayerData::Vector(fc)
            }
            SourceFormat::Shapefile => {
                let dbf = upload.dbf.as_deref().ok_or_else(|| {
                    parse_error("MissingPart", "shapefile upload needs a dbf part")
                })?;
                let fc = read_shapefile(&upload.file, dbf, upload.prj.as_deref(), crop_key)
                    .map_err(|e| parse_error(e.name(), e))?;
                let epsg = upload
                    .epsg
                    .unwrap_or_else(|| upload.prj.as_deref().map(epsg_from_prj).unwrap_or(0));
                if epsg == 0 {
                    return Err(ApiError::new(
                        StatusCode::CONFLICT,
                        "CrsUnknown",
                        "shapefile has no EPSG code in its prj and no epsg override was given",
                    ));
                }
                LayerData::Vector(fc.with_epsg(epsg))
            }
        };
        if let LayerData::Vector(fc) = &data {
            if fc.epsg_code == 0 {
                return Err(ApiError::new(
                    StatusCode::CONFLICT,
                    "CrsUnknown",
                    "vector layer has EPSG 0",
                ));
            }
        }
        self.insert(upload.name, format, data)
    }

    /// Store an already parsed layer, e.g. a computed prescription raster.
    pub fn insert(
        &self,
        name: String,
        format: SourceFormat,
        data: LayerData,
    ) -> Result<CatalogEntry, ApiError> {
        let layer_id = uuid::Uuid::new_v4().simple().to_string();
        let entry = make_entry(layer_id.clone(), name, format, &data, Utc::now());
        let (file_name, payload) = match &data {
            LayerData::Raster(r) => (RASTER_FILE, write_geotiff(r)),
            LayerData::Vector(fc) => (VECTOR_FILE, write_geojson(fc).into_bytes()),
        };
        let meta =
            serde_json::to_vec_pretty(&entry).map_err(|e| ApiError::internal(e.to_string()))?;

        let tmp = self.root.join(format!("{TMP_PREFIX}{layer_id}"));
        let write = || -> io::Result<()> {
            fs::create_dir(&tmp)?;
            write_synced(&tmp.join(file_name), &payload)?;
            write_synced(&tmp.join(META_FILE), &meta)?;
            fs::rename(&tmp, self.root.join(&layer_id))
        };
        if let Err(e) = write() {
            let _ = fs::remove_dir_all(&tmp);
            return Err(io_error("storing layer", e));
        }

        // Keep the parsed form that a reload would produce.
        let data = match data {
            LayerData::Raster(r) => LayerData::Raster(r),
            LayerData::Vector(_) => LayerData::Vector(
                parse_stored_vector(&payload).map_err(|e| io_error("reloading layer", e))?,
            ),
        };
        let layer = Arc::new(Layer {
            entry: entry.clone(),
            data,
        });
        self.layers
            .write()
            .expect("catalog lock poisoned")
            .insert(layer_id, layer);
        Ok(entry)
    }
}

fn with_raster_epsg(r: Raster, epsg: u32) -> Result<Raster, ApiError> {
    let code = u16::try_from(epsg).ok().filter(|&c| c > 0).ok_or_else(|| {
        ApiError::bad_parameter(
            "epsg",
            &epsg.to_string(),
            "a GeoTIFF EPSG code in 1..=65535",
        )
    })?;
    let mut g = *r.georef();
    g.epsg_code = code;
    let nodata = r.nodata();
    let (w, h) = (r.width(), r.height());
    Raster::new(w, h, r.into_samples(), nodata, g).map_err(|e| ApiError::internal(e.to_string()))
}

fn make_entry(
    layer_id: String,
    name: String,
    format: SourceFormat,
    data: &LayerData,
    now: DateTime<Utc>,
) -> CatalogEntry {
    let (kind, epsg_code, bbox, max_zoom) = match data {
        LayerData::Raster(r) => (
            LayerKind::Raster,
            u32::from(r.georef().epsg_code),
            Some(r.extent()),
            Some(max_zoom_for(r.width(), r.height())),
        ),
        LayerData::Vector(fc) => (LayerKind::Vector, fc.epsg_code, fc.bbox(), None),
    };
    CatalogEntry {
        layer_id,
        name,
        kind,
        epsg_code,
        bbox,
        created_at: now.to_rfc3339_opts(SecondsFormat::Micros, true),
        source_format: format,
        max_zoom,
    }
}

fn write_synced(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let f = fs::File::create(path)?;
    io::Write::write_all(&mut &f, bytes)?;
    f.sync_all()
}

fn parse_stored_vector(bytes: &[u8]) -> io::Result<FeatureCollection> {
    let invalid = |e: String| io::Error::new(io::ErrorKind::InvalidData, e);
    let text = std::str::from_utf8(bytes).map_err(|e| invalid(e.to_string()))?;
    read_normalized_geojson(text).map_err(|e| invalid(e.to_string()))
}

fn load_layer(dir: &Path) -> io::Result<Layer> {
    let invalid = |e: String| io::Error::new(io::ErrorKind::InvalidData, e);
    let entry: CatalogEntry = serde_json::from_slice(&fs::read(dir.join(META_FILE))?)
        .map_err(|e| invalid(e.to_string()))?;
    let data = match entry.kind {
        LayerKind::Raster => {
            let bytes = fs::read(dir.join(RASTER_FILE))?;
            LayerData::Raster(read_geotiff(&bytes).map_err(|e| invalid(e.to_string()))?)
        }
        LayerKind::Vector => {
            LayerData::Vector(parse_stored_vector(&fs::read(dir.join(VECTOR_FILE))?)?)
        }
    };
    Ok(Layer { entry, data })
}
