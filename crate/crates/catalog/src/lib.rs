//! HTTP layer catalog: upload rasters and field polygons, browse them, render
//! map tiles, query features, and run zonal statistics and prescriptions
//! against stored layers.

mod error;
mod routes;
mod store;
mod tiles;

use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

pub use error::ApiError;
pub use routes::{query_features, router, MAX_UPLOAD_BYTES};
pub use store::{
    Catalog, CatalogEntry, Layer, LayerData, LayerKind, SourceFormat, Upload, DEFAULT_CROP_KEY,
};
pub use tiles::{
    encode_png, max_zoom_for, render_tile, resample_tile, resolve_ramp, TileAddress, TILE_SIZE,
};

/// Open the catalog under `data_dir` and serve it on `addr` until the process
/// is stopped.
pub async fn serve(addr: SocketAddr, data_dir: &Path) -> std::io::Result<()> {
    let catalog = Arc::new(Catalog::open(data_dir)?);
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(catalog)).await
}
