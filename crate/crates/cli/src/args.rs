use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "fieldkit",
    version,
    about = "Vegetation-index analysis for field polygons"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print raster or vector metadata as JSON.
    Info(InfoArgs),
    /// Compute NDVI = (NIR - Red) / (NIR + Red) from two band rasters.
    Ndvi(NdviArgs),
    /// Per-field statistics of a raster as CSV.
    Zonal(ZonalArgs),
    /// Bin one statistic of zonal records into a histogram (CSV or SVG).
    Histogram(HistogramArgs),
    /// Assign each field a class by fixed breaks or quantiles.
    Classify(ClassifyArgs),
    /// Build a variable-rate application map for one field.
    Prescribe(PrescribeArgs),
    /// Generate a deterministic synthetic scene.
    Synth(SynthArgs),
    /// Run the HTTP catalog service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct InfoArgs {
    /// A .tif, .geojson/.json or .shp file (with its .dbf alongside).
    pub path: PathBuf,
    #[command(flatten)]
    pub vector: VectorOpts,
}

/// How polygon files are interpreted.
#[derive(Debug, Args, Clone)]
pub struct VectorOpts {
    /// Attribute holding the crop name.
    #[arg(long, default_value = fieldkit_catalog::DEFAULT_CROP_KEY)]
    pub crop_key: String,
    /// EPSG code of the polygons, overriding what the file declares.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub epsg: Option<u32>,
}

#[derive(Debug, Args)]
pub struct NdviArgs {
    #[arg(long)]
    pub nir: PathBuf,
    #[arg(long)]
    pub red: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ZonalArgs {
    #[arg(long)]
    pub raster: PathBuf,
    #[arg(long, value_parser = polygon_path)]
    pub fields: PathBuf,
    /// Keep only fields whose crop equals this text (case-insensitive).
    #[arg(long)]
    pub crop: Option<String>,
    #[command(flatten)]
    pub vector: VectorOpts,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    Mean,
    Std,
}

impl Metric {
    /// Default histogram range for the metric.
    pub fn default_range(self) -> (f64, f64) {
        match self {
            Metric::Mean => (-1.0, 1.0),
            Metric::Std => (0.0, 0.5),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::Mean => "mean",
            Metric::Std => "std",
        }
    }
}

#[derive(Debug, Args)]
pub struct HistogramArgs {
    #[arg(long)]
    pub records: PathBuf,
    #[arg(long, value_enum, default_value = "mean")]
    pub metric: Metric,
    #[arg(long, allow_negative_numbers = true)]
    pub lo: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub hi: Option<f64>,
    #[arg(long, default_value_t = 50)]
    pub bins: usize,
    /// Output path; `.svg` draws a bar chart, anything else is CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("scheme").required(true).args(["breaks", "quantiles"])))]
pub struct ClassifyArgs {
    #[arg(long)]
    pub records: PathBuf,
    /// Ascending class breaks, comma-separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub breaks: Option<Vec<f64>>,
    /// Number of equal-count classes.
    #[arg(long)]
    pub quantiles: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PrescribeArgs {
    #[arg(long)]
    pub ndvi: PathBuf,
    #[arg(long, value_parser = polygon_path)]
    pub fields: PathBuf,
    #[arg(long)]
    pub field_id: u64,
    /// Ascending NDVI zone breaks, comma-separated.
    #[arg(
        long,
        value_delimiter = ',',
        allow_negative_numbers = true,
        required = true
    )]
    pub breaks: Vec<f64>,
    /// One rate per zone (units/ha), lowest NDVI zone first.
    #[arg(
        long,
        value_delimiter = ',',
        allow_negative_numbers = true,
        required = true
    )]
    pub rates: Vec<f64>,
    /// Rate of the uniform application to compare against (units/ha).
    #[arg(long)]
    pub uniform_rate: Option<f64>,
    /// Currency per unit of product.
    #[arg(long, default_value_t = 1.0)]
    pub unit_cost: f64,
    #[command(flatten)]
    pub vector: VectorOpts,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub summary: PathBuf,
}

/// Polygon inputs must be GeoJSON or Shapefile; checked before any file is read.
pub fn polygon_path(s: &str) -> Result<PathBuf, String> {
    let path = PathBuf::from(s);
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase();
    match ext.as_str() {
        "geojson" | "json" | "shp" => Ok(path),
        _ => Err(format!("{s:?} is not a .geojson, .json or .shp file")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Size {
    pub width: usize,
    pub height: usize,
}

pub fn parse_size(s: &str) -> Result<Size, String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("{s:?} is not WIDTHxHEIGHT"))?;
    let dim = |v: &str| match v.trim().parse::<usize>() {
        Ok(n) if n > 0 => Ok(n),
        _ => Err(format!("{s:?}: dimensions must be positive integers")),
    };
    Ok(Size {
        width: dim(w)?,
        height: dim(h)?,
    })
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 100)]
    pub fields: usize,
    #[arg(long, value_parser = parse_size, default_value = "1024x1024")]
    pub size: Size,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "FIELDKIT_PORT", default_value_t = 8080)]
    pub port: u16,
    #[arg(long, env = "FIELDKIT_DATA_DIR", default_value = "fieldkit-data")]
    pub data_dir: PathBuf,
    #[arg(long, env = "FIELDKIT_HOST", default_value = "127.0.0.1")]
    pub host: std::net::IpAddr,
}
