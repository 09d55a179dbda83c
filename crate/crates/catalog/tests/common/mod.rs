#![allow(dead_code)]

use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use fieldkit_catalog::{router, Catalog};
use fieldkit_core::{write_geotiff, GridGeoreference, Raster, Samples};
use serde_json::{json, Value};
use tower::ServiceExt;

pub const BOUNDARY: &str = "fieldkit-test-boundary";

pub struct TestServer {
    pub dir: tempfile::TempDir,
    pub catalog: Arc<Catalog>,
}

impl TestServer {
    pub fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let catalog = Arc::new(Catalog::open(dir.path()).unwrap());
        Self { dir, catalog }
    }

    /// Drop the in-memory catalog and load it again from disk.
    pub fn restart(&mut self) {
        self.catalog = Arc::new(Catalog::open(self.dir.path()).unwrap());
    }

    pub fn app(&self) -> Router {
        router(self.catalog.clone())
    }

    pub async fn send(&self, req: Request<Body>) -> Reply {
        let resp = self.app().oneshot(req).await.unwrap();
        let status = resp.status();
        let content_type = resp
            .headers()
            .get(header::CONTENT_TYPE)
            .map(|v| v.to_str().unwrap().to_string())
            .unwrap_or_default();
        let body = to_bytes(resp.into_body(), usize::MAX)
            .await
            .unwrap()
            .to_vec();
        Reply {
            status,
            content_type,
            body,
        }
    }

    pub async fn get(&self, uri: &str) -> Reply {
        self.send(Request::get(uri).body(Body::empty()).unwrap())
            .await
    }

    pub async fn post_json(&self, uri: &str, body: &Value) -> Reply {
        let req = Request::builder()
            .method(Method::POST)
            .uri(uri)
            .header(header::CONTENT_TYPE, "application/json")
            .body(Body::from(body.to_string()))
            .unwrap();
        self.send(req).await
    }

    pub async fn upload(&self, query: &str, parts: &[(&str, &str, &[u8])]) -> Reply {
        let req = Request::builder()
            .method(Method::POST)
            .uri(format!("/layers?{query}"))
            .header(
                header::CONTENT_TYPE,
                format!("multipart/form-data; boundary={BOUNDARY}"),
            )
            .body(Body::from(multipart(parts)))
            .unwrap();
        self.send(req).await
    }

    /// Upload and return the new layer id, panicking on failure.
    pub async fn ingest(&self, query: &str, parts: &[(&str, &str, &[u8])]) -> String {
        let r = self.upload(query, parts).await;
        assert_eq!(r.status, StatusCode::CREATED, "{}", r.text());
        r.json()["layer_id"].as_str().unwrap().to_string()
    }

    pub async fn ingest_raster(&self, name: &str, raster: &Raster) -> String {
        self.ingest(
            &format!("name={name}&format=geotiff"),
            &[("file", "band.tif", &write_geotiff(raster))],
        )
        .await
    }

    pub async fn ingest_geojson(&self, name: &str, text: &str, epsg: Option<u32>) -> String {
        let query = match epsg {
            Some(e) => format!("name={name}&format=geojson&epsg={e}"),
            None => format!("name={name}&format=geojson"),
        };
        self.ingest(&query, &[("file", "fields.geojson", text.as_bytes())])
            .await
    }
}

#[derive(Debug)]
pub struct Reply {
    pub status: StatusCode,
    pub content_type: String,
    pub body: Vec<u8>,
}

impl Reply {
    pub fn text(&self) -> String {
        String::from_utf8_lossy(&self.body).into_owned()
    }

    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.body)
            .unwrap_or_else(|e| panic!("not JSON ({e}): {}", self.text()))
    }

    /// Assert a structured error reply and return its `detail`.
    pub fn expect_error(&self, status: StatusCode, name: &str) -> String {
        assert_eq!(self.status, status, "{}", self.text());
        assert!(
            self.content_type.starts_with("application/json"),
            "{}",
            self.content_type
        );
        let v = self.json();
        assert_eq!(v["error"], json!(name), "{v}");
        v["detail"].as_str().expect("detail is text").to_string()
    }
}

pub fn multipart(parts: &[(&str, &str, &[u8])]) -> Vec<u8> {
    let mut body = Vec::new();
    for (name, file_name, bytes) in parts {
        body.extend_from_slice(
            format!(
                "--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"{name}\"; filename=\"{file_name}\"\r\n\
                 Content-Type: application/octet-stream\r\n\r\n"
            )
            .as_bytes(),
        );
        body.extend_from_slice(bytes);
        body.extend_from_slice(b"\r\n");
    }
    body.extend_from_slice(format!("--{BOUNDARY}--\r\n").as_bytes());
    body
}

pub fn f32_raster(
    width: usize,
    height: usize,
    values: Vec<f32>,
    origin: (f64, f64),
    pixel: f64,
) -> Raster {
    Raster::new(
        width,
        height,
        Samples::F32(values),
        Some(f64::NAN),
        GridGeoreference::new(origin.0, origin.1, pixel, pixel, 25832).unwrap(),
    )
    .unwrap()
}

pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<[f64; 2]> {
    vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1], [x0, y0]]
}

/// FeatureCollection text with one Polygon per `(ring, crop)` pair.
pub fn geojson(features: &[(Vec<[f64; 2]>, &str)]) -> String {
    let fs: Vec<Value> = features
        .iter()
        .map(|(ring, crop)| {
            json!({
                "type": "Feature",
                "properties": {"crop": crop},
                "geometry": {"type": "Polygon", "coordinates": [ring]},
            })
        })
        .collect();
    json!({"type": "FeatureCollection", "features": fs}).to_string()
}

pub fn decode_png(bytes: &[u8]) -> (png::OutputInfo, Vec<u8>) {
    let mut reader = png::Decoder::new(std::io::Cursor::new(bytes))
        .read_info()
        .unwrap();
    let mut buf = vec![0u8; reader.output_buffer_size().unwrap()];
    let info = reader.next_frame(&mut buf).unwrap();
    buf.truncate(info.buffer_size());
    (info, buf)
}
