//! Tile pyramid over a raster layer's own bounding box.
//!
//! Level `z` splits the bbox into `2^z × 2^z` cells, `y = 0` at the top. Each
//! cell renders as a 256×256 RGBA PNG by nearest-neighbor sampling at tile
//! pixel centers.

use fieldkit_core::{
    apply_color_ramp, ColorRamp, ColorStop, GridGeoreference, Raster, RgbaImage, Samples,
};
use serde::Deserialize;

use crate::error::ApiError;
use axum::http::StatusCode;

pub const TILE_SIZE: usize = 256;
const MAX_ZOOM_CAP: u32 = 24;
const PNG_DEFLATE_LEVEL: u8 = 6;

/// Deepest level with tiles no finer than one source pixel per tile pixel
/// along the longer axis.
pub fn max_zoom_for(width: usize, height: usize) -> u32 {
    let n = width.max(height).max(1);
    let z = usize::BITS - (n - 1).leading_zeros();
    z.min(MAX_ZOOM_CAP)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileAddress {
    pub z: u32,
    pub x: u64,
    pub y: u64,
}

impl TileAddress {
    pub fn check(self, max_zoom: u32) -> Result<Self, ApiError> {
        let n = 1u64 << self.z.min(MAX_ZOOM_CAP);
        if self.z > max_zoom || self.x >= n || self.y >= n {
            return Err(ApiError::new(
                StatusCode::NOT_FOUND,
                "TileOutOfRange",
                format!(
                    "tile {}/{}/{} is outside the pyramid (levels 0..={max_zoom}, x and y below 2^z)",
                    self.z, self.x, self.y
                ),
            ));
        }
        Ok(self)
    }
}

#[derive(Deserialize)]
struct InlineRamp {
    stops: Vec<ColorStop>,
    #[serde(default)]
    nodata_color: [u8; 4],
}

fn bad_ramp(detail: impl Into<String>) -> ApiError {
    ApiError::bad_request("BadRamp", detail)
}

/// Resolve the `ramp` query value: `ndvi` (default), `gray` stretched over the
/// layer's valid range, or an inline JSON ramp `{"stops": [...], "nodata_color": [r,g,b,a]}`.
pub fn resolve_ramp(spec: Option<&str>, raster: &Raster) -> Result<ColorRamp, ApiError> {
    match spec.map(str::trim) {
        None | Some("") | Some("ndvi") => Ok(ColorRamp::ndvi()),
        Some("gray") => {
            let (lo, hi) = match raster.valid_range() {
                Some((lo, hi)) if lo < hi => (lo, hi),
                // A flat or empty layer still needs an increasing stretch.
                Some((v, _)) => (v - 1.0, v + 1.0),
                None => (0.0, 1.0),
            };
            ColorRamp::gray(lo, hi).map_err(|e| bad_ramp(e.to_string()))
        }
        Some(s) if s.starts_with('{') => {
            let inline: InlineRamp =
                serde_json::from_str(s).map_err(|e| bad_ramp(format!("inline ramp: {e}")))?;
            ColorRamp::new(inline.stops, inline.nodata_color).map_err(|e| bad_ramp(e.to_string()))
        }
        Some(other) => Err(bad_ramp(format!(
            "unknown ramp {other:?}; expected ndvi, gray or an inline JSON ramp"
        ))),
    }
}

/// Nearest-neighbor resample of `raster` onto the tile grid. Tile pixels
/// outside the raster, or on a NoData sample, become NaN.
pub fn resample_tile(raster: &Raster, addr: TileAddress) -> Raster {
    let [minx, miny, maxx, maxy] = raster.extent();
    let cells = (1u64 << addr.z) as f64;
    let tw = (maxx - minx) / cells;
    let th = (maxy - miny) / cells;
    let g = raster.georef();
    let (w, h) = (raster.width(), raster.height());

    let mut out = Vec::with_capacity(TILE_SIZE * TILE_SIZE);
    for j in 0..TILE_SIZE {
        let my = maxy - (addr.y as f64 + (j as f64 + 0.5) / TILE_SIZE as f64) * th;
        for i in 0..TILE_SIZE {
            let mx = minx + (addr.x as f64 + (i as f64 + 0.5) / TILE_SIZE as f64) * tw;
            let v = g
                .pixel_at(mx, my, w, h)
                .map(|(col, row)| {
                    let idx = row * w + col;
                    if raster.is_nodata_at(idx) {
                        f32::NAN
                    } else {
                        raster.samples().get_f64(idx) as f32
                    }
                })
                .unwrap_or(f32::NAN);
            out.push(v);
        }
    }
    let tile_georef = GridGeoreference {
        origin_x: minx + addr.x as f64 * tw,
        origin_y: maxy - addr.y as f64 * th,
        pixel_size_x: tw / TILE_SIZE as f64,
        pixel_size_y: th / TILE_SIZE as f64,
        epsg_code: g.epsg_code,
    };
    Raster::new(
        TILE_SIZE,
        TILE_SIZE,
        Samples::F32(out),
        Some(f64::NAN),
        tile_georef,
    )
    .expect("tile grid is well formed")
}

/// Render one tile as PNG bytes. Output is byte-identical for identical inputs.
pub fn render_tile(
    raster: &Raster,
    addr: TileAddress,
    ramp: &ColorRamp,
) -> Result<Vec<u8>, ApiError> {
    let image = apply_color_ramp(&resample_tile(raster, addr), ramp);
    encode_png(&image).map_err(|e| ApiError::internal(format!("PNG encoding failed: {e}")))
}

pub fn encode_png(image: &RgbaImage) -> Result<Vec<u8>, png::EncodingError> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, image.width as u32, image.height as u32);
        enc.set_color(png::ColorType::Rgba);
        enc.set_depth(png::BitDepth::Eight);
        enc.set_filter(png::Filter::NoFilter);
        enc.set_deflate_compression(png::DeflateCompression::Level(PNG_DEFLATE_LEVEL));
        let mut writer = enc.write_header()?;
        writer.write_image_data(&image.data)?;
        writer.finish()?;
    }
    Ok(out)
}
