use std::collections::BTreeMap;
use std::fs;
use std::net::SocketAddr;
use std::path::Path;

use fieldkit_core::geojson::embedded_epsg;
use fieldkit_core::geotiff::format_nodata_text;
use fieldkit_core::synth::{generate, SynthConfig};
use fieldkit_core::zonal::{records_from_csv, records_to_csv};
use fieldkit_core::{
    application_summary, build_prescription, classify, filter_by_crop, histogram,
    normalized_difference, read_geojson, read_geotiff, read_shapefile, write_geojson,
    write_geotiff, zonal_statistics, ClassScheme, FeatureCollection, Histogram, Raster,
    ZonalRecord,
};
use serde_json::{json, Value};

use crate::args::*;
use crate::error::CliError;
use crate::svg::histogram_svg;

type Result<T> = std::result::Result<T, CliError>;

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .unwrap_or_default()
        .to_ascii_lowercase()
}

pub fn load_raster(path: &Path) -> Result<Raster> {
    Ok(read_geotiff(&read(path)?)?)
}

/// Field polygons from GeoJSON or a Shapefile with its `.dbf` (and optional
/// `.prj`) next to it.
pub fn load_fields(path: &Path, opts: &VectorOpts) -> Result<FeatureCollection> {
    match extension(path).as_str() {
        "geojson" | "json" => {
            let bytes = read(path)?;
            let text = std::str::from_utf8(&bytes).map_err(|e| {
                CliError::failed("ParseError", format!("{}: not UTF-8: {e}", path.display()))
            })?;
            let epsg = opts.epsg.or_else(|| embedded_epsg(text));
            Ok(read_geojson(text, epsg, &opts.crop_key)?)
        }
        "shp" => {
            let shp = read(path)?;
            let dbf = read(&path.with_extension("dbf"))?;
            let prj_path = path.with_extension("prj");
            let prj = prj_path
                .exists()
                .then(|| fs::read_to_string(&prj_path).map_err(|e| CliError::io(&prj_path, e)))
                .transpose()?;
            let fc = read_shapefile(&shp, &dbf, prj.as_deref(), &opts.crop_key)?;
            Ok(match opts.epsg {
                Some(e) => fc.with_epsg(e),
                None => fc,
            })
        }
        other => Err(CliError::Usage(format!(
            "{}: unsupported polygon format {other:?}; use .geojson, .json or .shp",
            path.display()
        ))),
    }
}

pub fn load_records(path: &Path) -> Result<Vec<ZonalRecord>> {
    let bytes = read(path)?;
    let text = String::from_utf8_lossy(&bytes);
    Ok(records_from_csv(&text)?)
}

fn print(v: Value) {
    println!("{v}");
}

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Info(a) => info(&a),
        Command::Ndvi(a) => ndvi(&a),
        Command::Zonal(a) => zonal(&a),
        Command::Histogram(a) => hist(&a),
        Command::Classify(a) => classes(&a),
        Command::Prescribe(a) => prescribe(&a),
        Command::Synth(a) => synth(&a),
        Command::Serve(a) => serve(&a),
    }
}

fn raster_info(r: &Raster) -> Value {
    let g = r.georef();
    let valid = (0..r.len())
        .filter(|&i| r.valid_value_at(i).is_some())
        .count();
    json!({
        "kind": "raster",
        "width": r.width(),
        "height": r.height(),
        "sample_kind": r.sample_kind().name(),
        "nodata": r.nodata().map(format_nodata_text),
        "epsg_code": g.epsg_code,
        "origin_x": g.origin_x,
        "origin_y": g.origin_y,
        "pixel_size_x": g.pixel_size_x,
        "pixel_size_y": g.pixel_size_y,
        "bbox": r.extent(),
        "valid_count": valid,
        "valid_range": r.valid_range().map(|(lo, hi)| [lo, hi]),
    })
}

fn vector_info(fc: &FeatureCollection) -> Value {
    let mut crops: BTreeMap<&str, usize> = BTreeMap::new();
    for f in &fc.features {
        *crops.entry(f.crop_code.as_str()).or_default() += 1;
    }
    json!({
        "kind": "vector",
        "features": fc.len(),
        "epsg_code": fc.epsg_code,
        "bbox": fc.bbox(),
        "crops": crops,
    })
}

fn info(a: &InfoArgs) -> Result<()> {
    let v = match extension(&a.path).as_str() {
        "tif" | "tiff" => raster_info(&load_raster(&a.path)?),
        _ => vector_info(&load_fields(&a.path, &a.vector)?),
    };
    print(v);
    Ok(())
}

fn ndvi(a: &NdviArgs) -> Result<()> {
    let nir = load_raster(&a.nir)?;
    let red = load_raster(&a.red)?;
    let out = normalized_difference(&nir, &red)?;
    write(&a.out, write_geotiff(&out))?;
    print(
        json!({"out": a.out, "width": out.width(), "height": out.height(), "valid_range": out.valid_range().map(|(l, h)| [l, h])}),
    );
    Ok(())
}

fn zonal(a: &ZonalArgs) -> Result<()> {
    let raster = load_raster(&a.raster)?;
    let mut fields = load_fields(&a.fields, &a.vector)?;
    if let Some(crop) = &a.crop {
        fields = filter_by_crop(&fields, crop);
    }
    let records = zonal_statistics(&raster, &fields)?;
    write(&a.out, records_to_csv(&records))?;
    print(json!({"out": a.out, "records": records.len()}));
    Ok(())
}

pub fn histogram_csv(h: &Histogram) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["bin", "lo", "hi", "count"]).unwrap();
    for (i, c) in h.counts.iter().enumerate() {
        w.write_record([
            i.to_string(),
            h.edge(i).to_string(),
            h.edge(i + 1).to_string(),
            c.to_string(),
        ])
        .unwrap();
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}

fn hist(a: &HistogramArgs) -> Result<()> {
    let records = load_records(&a.records)?;
    let values: Vec<f64> = records
        .iter()
        .filter_map(|r| match a.metric {
            Metric::Mean => r.mean,
            Metric::Std => r.std,
        })
        .collect();
    let (dlo, dhi) = a.metric.default_range();
    let h = histogram(&values, a.lo.unwrap_or(dlo), a.hi.unwrap_or(dhi), a.bins)?;
    let body = if extension(&a.out) == "svg" {
        histogram_svg(&h, a.metric.name())
    } else {
        histogram_csv(&h)
    };
    write(&a.out, body)?;
    print(json!({
        "out": a.out,
        "metric": a.metric.name(),
        "total": h.total(),
        "underflow": h.underflow,
        "overflow": h.overflow,
    }));
    Ok(())
}

fn classes(a: &ClassifyArgs) -> Result<()> {
    let records = load_records(&a.records)?;
    let scheme = match (&a.breaks, a.quantiles) {
        (Some(b), None) => ClassScheme::FixedBreaks(b.clone()),
        (None, Some(k)) => ClassScheme::Quantiles(k),
        _ => {
            return Err(CliError::Usage(
                "give exactly one of --breaks and --quantiles".into(),
            ))
        }
    };
    let classes = classify(&records, &scheme)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["field_id", "class"]).unwrap();
    let mut sizes: BTreeMap<usize, usize> = BTreeMap::new();
    for c in &classes {
        w.write_record([
            c.field_id.to_string(),
            c.class.map(|k| k.to_string()).unwrap_or_default(),
        ])
        .unwrap();
        if let Some(k) = c.class {
            *sizes.entry(k).or_default() += 1;
        }
    }
    write(&a.out, w.into_inner().unwrap())?;
    print(json!({"out": a.out, "class_sizes": sizes}));
    Ok(())
}

fn prescribe(a: &PrescribeArgs) -> Result<()> {
    let ndvi = load_raster(&a.ndvi)?;
    let fields = load_fields(&a.fields, &a.vector)?;
    let field = fields.get(a.field_id).ok_or_else(|| {
        CliError::failed(
            "UnknownFeature",
            format!("{} has no field with id {}", a.fields.display(), a.field_id),
        )
    })?;
    let presc = build_prescription(&ndvi, field, &a.breaks, &a.rates)?;
    let summary = a
        .uniform_rate
        .map(|u| application_summary(&presc, u, a.unit_cost))
        .transpose()?;
    let report = json!({
        "field_id": presc.field_id,
        "breaks": presc.breaks,
        "rates": presc.rates,
        "zone_pixel_counts": presc.zone_pixel_counts,
        "pixel_area_ha": presc.pixel_area_ha,
        "area_ha": presc.area_ha(),
        "variable_total": presc.total_amount,
        "summary": summary,
    });
    write(&a.out, write_geotiff(&presc.zone_raster))?;
    write(
        &a.summary,
        serde_json::to_string_pretty(&report).unwrap() + "\n",
    )?;
    print(report);
    Ok(())
}

pub const SYNTH_FILES: [&str; 3] = ["red.tif", "nir.tif", "fields.geojson"];

fn synth(a: &SynthArgs) -> Result<()> {
    let scene = generate(&SynthConfig {
        fields: a.fields,
        width: a.size.width,
        height: a.size.height,
        seed: a.seed,
    })?;
    fs::create_dir_all(&a.out_dir).map_err(|e| CliError::io(&a.out_dir, e))?;
    let [red, nir, fields] = SYNTH_FILES.map(|f| a.out_dir.join(f));
    write(&red, write_geotiff(&scene.red))?;
    write(&nir, write_geotiff(&scene.nir))?;
    write(&fields, write_geojson(&scene.fields))?;
    print(json!({"red": red, "nir": nir, "fields": fields, "field_count": scene.fields.len()}));
    Ok(())
}

fn serve(a: &ServeArgs) -> Result<()> {
    let addr = SocketAddr::new(a.host, a.port);
    let rt =
        tokio::runtime::Runtime::new().map_err(|e| CliError::failed("IoError", e.to_string()))?;
    eprintln!(
        "{}",
        json!({"listening": addr.to_string(), "data_dir": a.data_dir})
    );
    rt.block_on(fieldkit_catalog::serve(addr, &a.data_dir))
        .map_err(|e| CliError::failed("ServeError", e.to_string()))
}
