mod common;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use common::*;
use fieldkit_core::{write_geotiff, ColorRamp, Raster};
use serde_json::{json, Value};

fn two_by_two() -> Raster {
    f32_raster(
        2,
        2,
        vec![0.1, 0.2, 0.3, 0.4],
        (500_000.0, 6_200_020.0),
        10.0,
    )
}

#[tokio::test]
async fn ingest_geotiff_reports_grid_extent() {
    let s = TestServer::new();
    let r = s
        .upload(
            "name=ndvi-2016-05-05&format=geotiff",
            &[("file", "ndvi.tif", &write_geotiff(&two_by_two()))],
        )
        .await;
    assert_eq!(r.status, StatusCode::CREATED, "{}", r.text());
    let e = r.json();
    assert_eq!(e["name"], "ndvi-2016-05-05");
    assert_eq!(e["kind"], "raster");
    assert_eq!(e["source_format"], "geotiff");
    assert_eq!(e["epsg_code"], 25832);
    // Origin (500000, 6200020), two 10 m pixels each way.
    assert_eq!(e["bbox"], json!([500000.0, 6200000.0, 500020.0, 6200020.0]));
    assert_eq!(e["max_zoom"], 1);
    assert!(chrono::DateTime::parse_from_rfc3339(e["created_at"].as_str().unwrap()).is_ok());

    let id = e["layer_id"].as_str().unwrap();
    assert_eq!(s.get(&format!("/layers/{id}")).await.json(), e);
    assert_eq!(s.get("/layers").await.json(), json!([e]));
}

#[tokio::test]
async fn stored_payloads_are_canonical() {
    let s = TestServer::new();
    let id = s.ingest_raster("a", &two_by_two()).await;
    let dir = s.dir.path().join("layers").join(&id);
    assert_eq!(
        std::fs::read(dir.join("data.tif")).unwrap(),
        write_geotiff(&two_by_two())
    );
    let meta: Value =
        serde_json::from_slice(&std::fs::read(dir.join("meta.json")).unwrap()).unwrap();
    assert_eq!(meta["layer_id"], json!(id));

    let text = geojson(&[(rect(0.0, 0.0, 1.0, 1.0), "grass")]);
    let vid = s.ingest_geojson("v", &text, None).await;
    let stored: Value = serde_json::from_slice(
        &std::fs::read(s.dir.path().join("layers").join(&vid).join("data.geojson")).unwrap(),
    )
    .unwrap();
    assert_eq!(stored["epsg"], 4326);
    assert_eq!(stored["features"][0]["crop_code"], "grass");
}

#[tokio::test]
async fn geojson_defaults_to_4326_and_honours_override() {
    let s = TestServer::new();
    let text = geojson(&[(rect(10.0, 55.0, 10.1, 55.1), "winter wheat")]);
    let a = s
        .upload(
            "name=a&format=geojson",
            &[("file", "a.geojson", text.as_bytes())],
        )
        .await
        .json();
    assert_eq!(a["epsg_code"], 4326);
    assert_eq!(a["kind"], "vector");
    assert_eq!(a["bbox"], json!([10.0, 55.0, 10.1, 55.1]));
    assert!(a.get("max_zoom").is_none());
    let b = s
        .upload(
            "name=b&format=geojson&epsg=25832",
            &[("file", "b.geojson", text.as_bytes())],
        )
        .await
        .json();
    assert_eq!(b["epsg_code"], 25832);
}

#[tokio::test]
async fn format_is_inferred_from_file_name() {
    let s = TestServer::new();
    let r = s
        .upload(
            "name=x",
            &[("file", "scene.tif", &write_geotiff(&two_by_two()))],
        )
        .await;
    assert_eq!(r.status, StatusCode::CREATED);
    assert_eq!(r.json()["source_format"], "geotiff");
    s.upload("name=x", &[("file", "scene.bin", b"abc")])
        .await
        .expect_error(StatusCode::BAD_REQUEST, "UnknownFormat");
}

#[tokio::test]
async fn ingest_errors() {
    let s = TestServer::new();
    let detail = s
        .upload(
            "name=bad&format=geotiff",
            &[("file", "bad.tif", b"definitely not a tiff")],
        )
        .await
        .expect_error(StatusCode::BAD_REQUEST, "ParseError");
    assert!(detail.starts_with("BadMagic"), "{detail}");

    let mut cut = write_geotiff(&two_by_two());
    cut.truncate(cut.len() / 2);
    let detail = s
        .upload("name=cut&format=geotiff", &[("file", "cut.tif", &cut)])
        .await
        .expect_error(StatusCode::BAD_REQUEST, "ParseError");
    assert!(detail.starts_with("Truncated"), "{detail}");

    s.upload("name=x&format=kml", &[("file", "x.kml", b"<kml/>")])
        .await
        .expect_error(StatusCode::BAD_REQUEST, "UnknownFormat");
    s.upload(
        "name=x&format=geojson",
        &[("file", "x.json", b"{\"type\":\"Feature\"}")],
    )
    .await
    .expect_error(StatusCode::BAD_REQUEST, "ParseError");
    s.upload(
        "name=x&format=geojson&epsg=abc",
        &[("file", "x.json", b"{}")],
    )
    .await
    .expect_error(StatusCode::BAD_REQUEST, "BadParameter");
    s.upload("name=x&format=geojson", &[])
        .await
        .expect_error(StatusCode::BAD_REQUEST, "MissingPart");
    s.upload("name=x&format=shapefile", &[("file", "x.shp", b"")])
        .await
        .expect_error(StatusCode::BAD_REQUEST, "ParseError");
    s.upload(
        "name=x&format=geotiff&epsg=70000",
        &[("file", "a.tif", &write_geotiff(&two_by_two()))],
    )
    .await
    .expect_error(StatusCode::BAD_REQUEST, "BadParameter");

    let req = Request::builder()
        .method(Method::POST)
        .uri("/layers?name=x&format=geotiff")
        .header("content-type", "text/plain")
        .body(Body::from("hello"))
        .unwrap();
    s.send(req)
        .await
        .expect_error(StatusCode::BAD_REQUEST, "MalformedMultipart");

    // Nothing half-stored after all those failures.
    assert_eq!(s.get("/layers").await.json(), json!([]));
    let leftovers: Vec<_> = std::fs::read_dir(s.dir.path().join("layers"))
        .unwrap()
        .collect();
    assert!(leftovers.is_empty());
}

#[tokio::test]
async fn epsg_override_applies_to_rasters() {
    let s = TestServer::new();
    let r = s
        .upload(
            "name=x&format=geotiff&epsg=32632",
            &[("file", "a.tif", &write_geotiff(&two_by_two()))],
        )
        .await;
    assert_eq!(r.json()["epsg_code"], 32632);
}

#[tokio::test]
async fn unknown_layer_is_404_everywhere() {
    let s = TestServer::new();
    for uri in [
        "/layers/nope",
        "/tiles/nope/0/0/0.png",
        "/features/nope",
        "/stats/zonal?raster=nope&vector=nope",
        "/stats/histogram?raster=nope&vector=nope",
    ] {
        s.get(uri)
            .await
            .expect_error(StatusCode::NOT_FOUND, "UnknownLayer");
    }
    let body = json!({"raster_id": "a", "vector_id": "b", "field_id": 0, "breaks": [0.5], "rates": [1, 2]});
    s.post_json("/prescriptions", &body)
        .await
        .expect_error(StatusCode::NOT_FOUND, "UnknownLayer");
}

#[tokio::test]
async fn unknown_routes_and_methods_are_json() {
    let s = TestServer::new();
    s.get("/nowhere")
        .await
        .expect_error(StatusCode::NOT_FOUND, "NotFound");
    let req = Request::delete("/layers").body(Body::empty()).unwrap();
    s.send(req)
        .await
        .expect_error(StatusCode::METHOD_NOT_ALLOWED, "MethodNotAllowed");
}

/// Independent resampler: for each tile-pixel center pick the raster pixel
/// whose center is closest by brute force over the whole grid.
fn reference_tile(r: &Raster, z: u32, tx: u64, ty: u64, ramp: &ColorRamp) -> Vec<[u8; 4]> {
    let [minx, miny, maxx, maxy] = r.extent();
    let g = *r.georef();
    let n = f64::from(1u32 << z);
    let (tw, th) = ((maxx - minx) / n, (maxy - miny) / n);
    let mut out = Vec::with_capacity(256 * 256);
    for j in 0..256 {
        let y = maxy - (ty as f64 + (j as f64 + 0.5) / 256.0) * th;
        for i in 0..256 {
            let x = minx + (tx as f64 + (i as f64 + 0.5) / 256.0) * tw;
            let mut best = (f64::INFINITY, 0, 0);
            for row in 0..r.height() {
                for col in 0..r.width() {
                    let (cx, cy) = g.pixel_center(col, row);
                    let d = (cx - x).abs().max((cy - y).abs());
                    if d < best.0 {
                        best = (d, col, row);
                    }
                }
            }
            let inside = best.0 <= g.pixel_size_x / 2.0;
            let v = inside
                .then(|| r.valid_value_at(best.2 * r.width() + best.1))
                .flatten();
            out.push(ramp.color(v));
        }
    }
    out
}

fn odd_raster() -> Raster {
    // 37×23 so tile-pixel centers never fall on a pixel boundary.
    let values = (0..37 * 23)
        .map(|i| {
            if i % 29 == 0 {
                f32::NAN
            } else {
                ((i * 7919) % 200) as f32 / 100.0 - 1.0
            }
        })
        .collect();
    f32_raster(37, 23, values, (612_345.0, 6_123_456.0), 10.0)
}

#[tokio::test]
async fn tiles_match_reference_nearest_neighbour() {
    let s = TestServer::new();
    let r = odd_raster();
    let id = s.ingest_raster("odd", &r).await;
    for (z, x, y) in [(0, 0, 0), (2, 1, 3), (6, 40, 17)] {
        let reply = s.get(&format!("/tiles/{id}/{z}/{x}/{y}.png")).await;
        assert_eq!(reply.status, StatusCode::OK, "{}", reply.text());
        assert_eq!(reply.content_type, "image/png");
        let (info, pixels) = decode_png(&reply.body);
        assert_eq!((info.width, info.height), (256, 256));
        assert_eq!(info.color_type, png::ColorType::Rgba);
        assert_eq!(info.bit_depth, png::BitDepth::Eight);
        let expected = reference_tile(&r, z, x, y, &ColorRamp::ndvi());
        let got: Vec<[u8; 4]> = pixels.chunks(4).map(|c| c.try_into().unwrap()).collect();
        assert_eq!(got.len(), expected.len());
        let wrong = got.iter().zip(&expected).filter(|(a, b)| a != b).count();
        assert_eq!(wrong, 0, "tile {z}/{x}/{y}: {wrong} pixels differ");
    }
}

#[tokio::test]
async fn tiles_are_byte_deterministic() {
    let s = TestServer::new();
    let r = odd_raster();
    let a = s.ingest_raster("a", &r).await;
    let b = s.ingest_raster("b", &r).await;
    let first = s.get(&format!("/tiles/{a}/1/1/0.png?ramp=gray")).await.body;
    for _ in 0..3 {
        assert_eq!(
            s.get(&format!("/tiles/{a}/1/1/0.png?ramp=gray")).await.body,
            first
        );
    }
    assert_eq!(
        s.get(&format!("/tiles/{b}/1/1/0.png?ramp=gray")).await.body,
        first
    );
    // The y segment may also be given without the extension.
    assert_eq!(
        s.get(&format!("/tiles/{a}/1/1/0?ramp=gray")).await.body,
        first
    );
}

#[tokio::test]
async fn nodata_tile_is_transparent() {
    let s = TestServer::new();
    // Left half NoData: the z=1 x=0 tiles only see NaN.
    let values = (0..8 * 8)
        .map(|i| if i % 8 < 4 { f32::NAN } else { 0.5 })
        .collect();
    let id = s
        .ingest_raster("half", &f32_raster(8, 8, values, (0.0, 80.0), 10.0))
        .await;
    for y in 0..2 {
        let (_, px) = decode_png(&s.get(&format!("/tiles/{id}/1/0/{y}.png")).await.body);
        assert!(px.chunks(4).all(|c| c == [0, 0, 0, 0]));
    }
    let (_, px) = decode_png(&s.get(&format!("/tiles/{id}/1/1/0.png")).await.body);
    assert!(px
        .chunks(4)
        .all(|c| c == ColorRamp::ndvi().color(Some(0.5))));
}

#[tokio::test]
async fn tile_errors() {
    let s = TestServer::new();
    let id = s.ingest_raster("r", &odd_raster()).await;
    let vid = s
        .ingest_geojson(
            "v",
            &geojson(&[(rect(0.0, 0.0, 1.0, 1.0), "x")]),
            Some(25832),
        )
        .await;

    s.get(&format!("/tiles/{id}/1/2/0.png"))
        .await
        .expect_error(StatusCode::NOT_FOUND, "TileOutOfRange");
    s.get(&format!("/tiles/{id}/1/0/2.png"))
        .await
        .expect_error(StatusCode::NOT_FOUND, "TileOutOfRange");
    // 37 px wide: six levels of subdivision at most.
    assert_eq!(
        s.get(&format!("/tiles/{id}/6/0/0.png")).await.status,
        StatusCode::OK
    );
    s.get(&format!("/tiles/{id}/7/0/0.png"))
        .await
        .expect_error(StatusCode::NOT_FOUND, "TileOutOfRange");
    for bad in ["a/0/0.png", "0/-1/0.png", "0/0/0.jpg", "1.5/0/0.png"] {
        s.get(&format!("/tiles/{id}/{bad}"))
            .await
            .expect_error(StatusCode::BAD_REQUEST, "MalformedTileAddress");
    }
    s.get(&format!("/tiles/{vid}/0/0/0.png"))
        .await
        .expect_error(StatusCode::BAD_REQUEST, "NotARaster");
    s.get(&format!("/tiles/{id}/0/0/0.png?ramp=rainbow"))
        .await
        .expect_error(StatusCode::BAD_REQUEST, "BadRamp");
    s.get(&format!(
        "/tiles/{id}/0/0/0.png?ramp=%7B%22stops%22%3A%5B%5D%7D"
    ))
    .await
    .expect_error(StatusCode::BAD_REQUEST, "BadRamp");
}

#[tokio::test]
async fn inline_ramp() {
    let s = TestServer::new();
    let id = s.ingest_raster("r", &two_by_two()).await;
    let ramp = r#"{"stops":[{"value":0,"rgba":[0,0,255,255]},{"value":1,"rgba":[255,0,0,255]}],"nodata_color":[1,2,3,4]}"#;
    let enc: String = ramp.bytes().map(|b| format!("%{b:02X}")).collect();
    let (_, px) = decode_png(
        &s.get(&format!("/tiles/{id}/0/0/0.png?ramp={enc}"))
            .await
            .body,
    );
    // Top-left quarter of the tile samples the first raster value, 0.1 as f32
    // (a hair above 0.1, so blue rounds down from 229.5).
    assert_eq!(&px[..4], &[26, 0, 229, 255]);
    let nodata = s
        .ingest_raster("n", &f32_raster(1, 1, vec![f32::NAN], (0.0, 1.0), 1.0))
        .await;
    let (_, px) = decode_png(
        &s.get(&format!("/tiles/{nodata}/0/0/0.png?ramp={enc}"))
            .await
            .body,
    );
    assert_eq!(&px[..4], &[1, 2, 3, 4]);
}

fn mixed_fields() -> String {
    geojson(&[
        (rect(0.0, 0.0, 40.0, 40.0), "winter wheat"),
        (rect(50.0, 0.0, 90.0, 40.0), "spring barley"),
        (rect(0.0, 50.0, 40.0, 90.0), "Winter Wheat"),
        (rect(200.0, 200.0, 220.0, 220.0), "grass"),
    ])
}

#[tokio::test]
async fn feature_queries() {
    let s = TestServer::new();
    let id = s
        .ingest_geojson("fields", &mixed_fields(), Some(25832))
        .await;
    let all = s.get(&format!("/features/{id}")).await.json();
    assert_eq!(all["type"], "FeatureCollection");
    assert_eq!(all["epsg"], 25832);
    assert_eq!(all["features"].as_array().unwrap().len(), 4);
    assert_eq!(all["features"][1]["crop_code"], "spring barley");
    assert_eq!(all["features"][1]["properties"]["crop"], "spring barley");

    let ids = |v: &Value| -> Vec<u64> {
        v["features"]
            .as_array()
            .unwrap()
            .iter()
            .map(|f| f["id"].as_u64().unwrap())
            .collect()
    };
    let wheat = s
        .get(&format!("/features/{id}?crop=winter%20wheat"))
        .await
        .json();
    assert_eq!(ids(&wheat), vec![0, 2]);
    let boxed = s
        .get(&format!("/features/{id}?bbox=35,35,60,55"))
        .await
        .json();
    assert_eq!(ids(&boxed), vec![0, 1, 2]);
    let both = s
        .get(&format!(
            "/features/{id}?bbox=35,35,60,55&crop=winter%20wheat"
        ))
        .await
        .json();
    assert_eq!(ids(&both), vec![0, 2]);
    // Touching edges count as intersecting.
    let touch = s
        .get(&format!("/features/{id}?bbox=220,220,230,230"))
        .await
        .json();
    assert_eq!(ids(&touch), vec![3]);
    let none = s
        .get(&format!("/features/{id}?bbox=1000,1000,2000,2000"))
        .await
        .json();
    assert_eq!(ids(&none), Vec::<u64>::new());

    for bad in [
        "1,2,3",
        "1,2,3,x",
        "5,0,1,1",
        "0,5,1,1",
        "0,0,1,1,2",
        "nan,0,1,1",
    ] {
        s.get(&format!("/features/{id}?bbox={bad}"))
            .await
            .expect_error(StatusCode::BAD_REQUEST, "MalformedBbox");
    }
    let rid = s.ingest_raster("r", &two_by_two()).await;
    s.get(&format!("/features/{rid}"))
        .await
        .expect_error(StatusCode::BAD_REQUEST, "NotAVector");
}

#[tokio::test]
async fn vector_bbox_is_union_of_vertices() {
    let s = TestServer::new();
    let r = s
        .upload(
            "name=f&format=geojson&epsg=25832",
            &[("file", "f.geojson", mixed_fields().as_bytes())],
        )
        .await
        .json();
    assert_eq!(r["bbox"], json!([0.0, 0.0, 220.0, 220.0]));
}

/// Constant raster of `value` over a 100 m square grid with 10 m pixels.
fn constant(value: f32) -> Raster {
    f32_raster(10, 10, vec![value; 100], (0.0, 100.0), 10.0)
}

#[tokio::test]
async fn zonal_stats_endpoint() {
    let s = TestServer::new();
    let rid = s.ingest_raster("c", &constant(0.25)).await;
    let vid = s.ingest_geojson("f", &mixed_fields(), Some(25832)).await;
    let recs = s
        .get(&format!("/stats/zonal?raster={rid}&vector={vid}"))
        .await
        .json();
    let recs = recs.as_array().unwrap();
    assert_eq!(recs.len(), 4);
    assert_eq!(recs[0]["field_id"], 0);
    assert_eq!(recs[0]["pixel_count"], 16);
    assert!((recs[0]["mean"].as_f64().unwrap() - 0.25).abs() < 1e-7);
    assert_eq!(recs[0]["std"], 0.0);
    // Outside the raster entirely.
    assert_eq!(recs[3]["pixel_count"], 0);
    assert_eq!(recs[3]["mean"], Value::Null);

    let wheat = s
        .get(&format!(
            "/stats/zonal?raster={rid}&vector={vid}&crop=winter%20wheat"
        ))
        .await
        .json();
    let fids: Vec<_> = wheat
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["field_id"].clone())
        .collect();
    assert_eq!(fids, vec![json!(0), json!(2)]);

    s.get(&format!("/stats/zonal?vector={vid}"))
        .await
        .expect_error(StatusCode::BAD_REQUEST, "MissingParameter");
    s.get(&format!("/stats/zonal?raster={rid}"))
        .await
        .expect_error(StatusCode::BAD_REQUEST, "MissingParameter");
    s.get(&format!("/stats/zonal?raster={vid}&vector={vid}"))
        .await
        .expect_error(StatusCode::BAD_REQUEST, "NotARaster");
    s.get(&format!("/stats/zonal?raster={rid}&vector={rid}"))
        .await
        .expect_error(StatusCode::BAD_REQUEST, "NotAVector");
    let wgs = s.ingest_geojson("w", &mixed_fields(), None).await;
    s.get(&format!("/stats/zonal?raster={rid}&vector={wgs}"))
        .await
        .expect_error(StatusCode::CONFLICT, "CrsMismatch");
}

#[tokio::test]
async fn tile_and_stats_agree_on_constant_raster() {
    let s = TestServer::new();
    for value in [-0.4f32, 0.0, 0.37, 0.9] {
        let rid = s.ingest_raster("c", &constant(value)).await;
        let vid = s
            .ingest_geojson(
                "f",
                &geojson(&[(rect(20.0, 20.0, 60.0, 80.0), "x")]),
                Some(25832),
            )
            .await;
        let mean = s
            .get(&format!("/stats/zonal?raster={rid}&vector={vid}"))
            .await
            .json()[0]["mean"]
            .as_f64()
            .unwrap();
        let (_, px) = decode_png(&s.get(&format!("/tiles/{rid}/0/0/0.png")).await.body);
        // Field spans x 20..60, y 20..80 of a 100 m bbox: tile columns 51..153, rows 51..204.
        let expected = ColorRamp::ndvi().color(Some(mean));
        for row in 52..204 {
            for col in 52..153 {
                let i = (row * 256 + col) * 4;
                assert_eq!(&px[i..i + 4], &expected, "value {value} at ({col},{row})");
            }
        }
    }
}

#[tokio::test]
async fn histogram_endpoint() {
    let s = TestServer::new();
    let values = (0..100).map(|i| if i < 50 { 0.2 } else { 0.6 }).collect();
    let rid = s
        .ingest_raster("r", &f32_raster(10, 10, values, (0.0, 100.0), 10.0))
        .await;
    let vid = s
        .ingest_geojson(
            "f",
            &geojson(&[
                (rect(0.0, 50.0, 100.0, 100.0), "a"),
                (rect(0.0, 0.0, 100.0, 50.0), "a"),
                (rect(0.0, 0.0, 100.0, 100.0), "b"),
            ]),
            Some(25832),
        )
        .await;
    let h = s
        .get(&format!("/stats/histogram?raster={rid}&vector={vid}"))
        .await
        .json();
    assert_eq!(h["metric"], "mean");
    assert_eq!(
        (h["lo"].as_f64(), h["hi"].as_f64(), h["n_bins"].as_u64()),
        (Some(-1.0), Some(1.0), Some(50))
    );
    let counts: Vec<u64> = serde_json::from_value(h["counts"].clone()).unwrap();
    assert_eq!(counts.iter().sum::<u64>(), 3);
    // Means 0.2, 0.6, 0.4 in 0.04-wide bins from -1.
    assert_eq!(counts[30], 1);
    assert_eq!(counts[35], 1);
    assert_eq!(counts[40], 1);

    let h = s
        .get(&format!(
            "/stats/histogram?raster={rid}&vector={vid}&metric=std&lo=0&hi=0.4&bins=4&crop=b"
        ))
        .await
        .json();
    assert_eq!(h["counts"], json!([0, 0, 1, 0]));

    for (q, name) in [
        ("metric=median", "BadParameter"),
        ("bins=x", "BadParameter"),
        ("lo=low", "BadParameter"),
        ("bins=0", "BadBins"),
        ("lo=1&hi=0", "BadRange"),
    ] {
        s.get(&format!("/stats/histogram?raster={rid}&vector={vid}&{q}"))
            .await
            .expect_error(StatusCode::BAD_REQUEST, name);
    }
}

#[tokio::test]
async fn prescription_economics() {
    let s = TestServer::new();
    // 3000 pixels of 10 m = 30 ha, all in the upper zone.
    let rid = s
        .ingest_raster(
            "ndvi",
            &f32_raster(60, 50, vec![0.5; 3000], (500_000.0, 6_200_500.0), 10.0),
        )
        .await;
    let field = geojson(&[(
        rect(500_000.0, 6_200_000.0, 500_600.0, 6_200_500.0),
        "winter wheat",
    )]);
    let vid = s.ingest_geojson("f", &field, Some(25832)).await;
    let r = s
        .post_json(
            "/prescriptions",
            &json!({
                "raster_id": rid, "vector_id": vid, "field_id": 0,
                "breaks": [0.3], "rates": [100.0, 65.0],
                "uniform_rate": 100.0, "unit_cost": 244.2 / 35.0,
            }),
        )
        .await;
    assert_eq!(r.status, StatusCode::CREATED, "{}", r.text());
    let v = r.json();
    assert_eq!(v["zone_pixel_counts"], json!([0, 3000]));
    assert!((v["area_ha"].as_f64().unwrap() - 30.0).abs() < 1e-9);
    assert!((v["variable_total"].as_f64().unwrap() - 1950.0).abs() < 1e-9);
    let sum = &v["summary"];
    assert!((sum["uniform_total"].as_f64().unwrap() - 3000.0).abs() < 1e-9);
    assert!(
        (sum["cost_saving"].as_f64().unwrap() - 7326.0).abs() < 1e-6,
        "{sum}"
    );
    assert!((sum["reduction_fraction"].as_f64().unwrap() - 0.35).abs() < 1e-12);

    // The rate map is a new raster layer carrying rates.
    let lid = v["layer_id"].as_str().unwrap();
    let entry = s.get(&format!("/layers/{lid}")).await.json();
    assert_eq!(entry["kind"], "raster");
    assert_eq!(
        entry["bbox"],
        s.get(&format!("/layers/{rid}")).await.json()["bbox"]
    );
    let stored = fieldkit_core::read_geotiff(
        &std::fs::read(s.dir.path().join("layers").join(lid).join("data.tif")).unwrap(),
    )
    .unwrap();
    assert!((0..3000).all(|i| stored.valid_value_at(i) == Some(65.0)));
    let gray = s.get(&format!("/tiles/{lid}/0/0/0.png?ramp=gray")).await;
    assert_eq!(gray.status, StatusCode::OK);

    // Without a uniform rate there is no comparison.
    let v = s
        .post_json(
            "/prescriptions",
            &json!({"raster_id": rid, "vector_id": vid, "field_id": 0, "breaks": [0.3], "rates": [100.0, 65.0]}),
        )
        .await
        .json();
    assert_eq!(v["summary"], Value::Null);
}

#[tokio::test]
async fn prescription_errors() {
    let s = TestServer::new();
    let rid = s.ingest_raster("ndvi", &constant(0.5)).await;
    let vid = s
        .ingest_geojson(
            "f",
            &geojson(&[(rect(0.0, 0.0, 50.0, 50.0), "x")]),
            Some(25832),
        )
        .await;
    let wgs = s
        .ingest_geojson("w", &geojson(&[(rect(0.0, 0.0, 50.0, 50.0), "x")]), None)
        .await;
    let base = json!({"raster_id": rid, "vector_id": vid, "field_id": 0, "breaks": [0.3], "rates": [1, 2]});
    let with = |k: &str, v: Value| {
        let mut b = base.clone();
        b[k] = v;
        b
    };
    let cases = [
        (
            with("rates", json!([1])),
            StatusCode::BAD_REQUEST,
            "RateLengthMismatch",
        ),
        (
            with("breaks", json!([0.5, 0.3])),
            StatusCode::BAD_REQUEST,
            "BadBreaks",
        ),
        (
            with("uniform_rate", json!(-1)),
            StatusCode::BAD_REQUEST,
            "BadUniformRate",
        ),
        (
            with("field_id", json!(7)),
            StatusCode::NOT_FOUND,
            "UnknownFeature",
        ),
        (
            with("vector_id", json!(wgs)),
            StatusCode::CONFLICT,
            "CrsMismatch",
        ),
        (
            with("raster_id", json!(vid)),
            StatusCode::BAD_REQUEST,
            "NotARaster",
        ),
        (
            with("vector_id", json!(rid)),
            StatusCode::BAD_REQUEST,
            "NotAVector",
        ),
        (
            with("field_id", json!("zero")),
            StatusCode::BAD_REQUEST,
            "MalformedBody",
        ),
        (
            with("colour", json!(1)),
            StatusCode::BAD_REQUEST,
            "MalformedBody",
        ),
        (
            json!({"raster_id": rid}),
            StatusCode::BAD_REQUEST,
            "MalformedBody",
        ),
    ];
    for (body, status, name) in cases {
        s.post_json("/prescriptions", &body)
            .await
            .expect_error(status, name);
    }
    let req = Request::post("/prescriptions")
        .header("content-type", "application/json")
        .body(Body::from("{not json"))
        .unwrap();
    s.send(req)
        .await
        .expect_error(StatusCode::BAD_REQUEST, "MalformedBody");
    // Failed requests leave no layers behind.
    assert_eq!(s.get("/layers").await.json().as_array().unwrap().len(), 3);
}

#[tokio::test]
async fn listing_is_ordered_by_creation() {
    let s = TestServer::new();
    let mut ids = Vec::new();
    for i in 0..5 {
        ids.push(s.ingest_raster(&format!("r{i}"), &two_by_two()).await);
    }
    let listed: Vec<String> = s
        .get("/layers")
        .await
        .json()
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["layer_id"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(listed, ids);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_ingests_get_distinct_ids() {
    let s = std::sync::Arc::new(TestServer::new());
    let tasks: Vec<_> = (0..16)
        .map(|i| {
            let s = s.clone();
            tokio::spawn(async move { s.ingest_raster(&format!("r{i}"), &odd_raster()).await })
        })
        .collect();
    let mut ids = Vec::new();
    for t in tasks {
        ids.push(t.await.unwrap());
    }
    ids.sort();
    ids.dedup();
    assert_eq!(ids.len(), 16);
    assert_eq!(s.get("/layers").await.json().as_array().unwrap().len(), 16);
}
