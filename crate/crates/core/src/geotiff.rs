//! GeoTIFF subset codec.
//!
//! The reader accepts classic TIFF in either byte order, strip or tile layout,
//! uncompressed or deflate, with one 16-bit unsigned or 32-bit float sample per
//! pixel. The writer always emits one canonical form: little-endian, single
//! uncompressed strip.

use std::collections::HashMap;
use std::io::Read;

use flate2::read::ZlibDecoder;
use thiserror::Error;

use crate::raster::{GridGeoreference, Raster, SampleKind, Samples};

const TAG_IMAGE_WIDTH: u16 = 256;
const TAG_IMAGE_LENGTH: u16 = 257;
const TAG_BITS_PER_SAMPLE: u16 = 258;
const TAG_COMPRESSION: u16 = 259;
const TAG_PHOTOMETRIC: u16 = 262;
const TAG_STRIP_OFFSETS: u16 = 273;
const TAG_SAMPLES_PER_PIXEL: u16 = 277;
const TAG_ROWS_PER_STRIP: u16 = 278;
const TAG_STRIP_BYTE_COUNTS: u16 = 279;
const TAG_PLANAR_CONFIGURATION: u16 = 284;
const TAG_PREDICTOR: u16 = 317;
const TAG_TILE_WIDTH: u16 = 322;
const TAG_TILE_LENGTH: u16 = 323;
const TAG_TILE_OFFSETS: u16 = 324;
const TAG_TILE_BYTE_COUNTS: u16 = 325;
const TAG_SAMPLE_FORMAT: u16 = 339;
const TAG_MODEL_PIXEL_SCALE: u16 = 33550;
const TAG_MODEL_TIEPOINT: u16 = 33922;
const TAG_GEO_KEY_DIRECTORY: u16 = 34735;
const TAG_GDAL_NODATA: u16 = 42113;

const GT_MODEL_TYPE_GEO_KEY: u16 = 1024;
const GT_RASTER_TYPE_GEO_KEY: u16 = 1025;
const PROJECTED_CS_TYPE_GEO_KEY: u16 = 3072;
const RASTER_PIXEL_IS_AREA: u16 = 1;
const RASTER_PIXEL_IS_POINT: u16 = 2;
const MODEL_TYPE_PROJECTED: u16 = 1;

const COMPRESSION_NONE: u16 = 1;
const COMPRESSION_DEFLATE: u16 = 8;

const SAMPLE_FORMAT_UINT: u16 = 1;
const SAMPLE_FORMAT_IEEEFP: u16 = 3;

// Field types
const TYPE_BYTE: u16 = 1;
const TYPE_ASCII: u16 = 2;
const TYPE_SHORT: u16 = 3;
const TYPE_LONG: u16 = 4;
const TYPE_RATIONAL: u16 = 5;
const TYPE_SBYTE: u16 = 6;
const TYPE_UNDEFINED: u16 = 7;
const TYPE_SSHORT: u16 = 8;
const TYPE_SLONG: u16 = 9;
const TYPE_SRATIONAL: u16 = 10;
const TYPE_FLOAT: u16 = 11;
const TYPE_DOUBLE: u16 = 12;
const TYPE_IFD: u16 = 13;

// Upper bound on decoded pixels, keeps hostile headers from forcing huge allocations.
const MAX_PIXELS: usize = 1 << 30;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoTiffError {
    #[error("truncated input: need {needed} bytes at offset {offset} for {what}")]
    Truncated {
        offset: u64,
        needed: u64,
        what: &'static str,
    },
    #[error("not a TIFF file: bad magic at offset {offset}")]
    BadMagic { offset: u64 },
    #[error("unsupported layout (tag {tag}): {detail}")]
    UnsupportedLayout { tag: u16, detail: String },
    #[error("unsupported compression {code} (tag 259)")]
    UnsupportedCompression { code: u16 },
    #[error("missing georeference (tag {tag}): {detail}")]
    MissingGeoreference { tag: u16, detail: String },
    #[error("missing required tag {tag}")]
    MissingTag { tag: u16 },
    #[error("invalid value for tag {tag}: {detail}")]
    InvalidTag { tag: u16, detail: String },
    #[error("corrupt image data at offset {offset}: {detail}")]
    CorruptData { offset: u64, detail: String },
}

impl GeoTiffError {
    /// Stable error name used in service and CLI error bodies.
    pub fn name(&self) -> &'static str {
        match self {
            GeoTiffError::Truncated { .. } => "Truncated",
            GeoTiffError::BadMagic { .. } => "BadMagic",
            GeoTiffError::UnsupportedLayout { .. } => "UnsupportedLayout",
            GeoTiffError::UnsupportedCompression { .. } => "UnsupportedCompression",
            GeoTiffError::MissingGeoreference { .. } => "MissingGeoreference",
            GeoTiffError::MissingTag { .. } => "MissingTag",
            GeoTiffError::InvalidTag { .. } => "InvalidTag",
            GeoTiffError::CorruptData { .. } => "CorruptData",
        }
    }
}

type Result<T> = std::result::Result<T, GeoTiffError>;

fn layout(tag: u16, detail: impl Into<String>) -> GeoTiffError {
    GeoTiffError::UnsupportedLayout {
        tag,
        detail: detail.into(),
    }
}

fn invalid(tag: u16, detail: impl Into<String>) -> GeoTiffError {
    GeoTiffError::InvalidTag {
        tag,
        detail: detail.into(),
    }
}

struct ByteReader<'a> {
    data: &'a [u8],
    big_endian: bool,
}

impl<'a> ByteReader<'a> {
    fn slice(&self, offset: u64, len: u64, what: &'static str) -> Result<&'a [u8]> {
        let end = offset.checked_add(len);
        match end {
            Some(end) if end <= self.data.len() as u64 => {
                Ok(&self.data[offset as usize..end as usize])
            }
            _ => Err(GeoTiffError::Truncated {
                offset,
                needed: len,
                what,
            }),
        }
    }

    fn u16_at(&self, offset: u64, what: &'static str) -> Result<u16> {
        let b: [u8; 2] = self.slice(offset, 2, what)?.try_into().unwrap();
        Ok(if self.big_endian {
            u16::from_be_bytes(b)
        } else {
            u16::from_le_bytes(b)
        })
    }

    fn u32_at(&self, offset: u64, what: &'static str) -> Result<u32> {
        let b: [u8; 4] = self.slice(offset, 4, what)?.try_into().unwrap();
        Ok(if self.big_endian {
            u32::from_be_bytes(b)
        } else {
            u32::from_le_bytes(b)
        })
    }

    fn u64_at(&self, offset: u64, what: &'static str) -> Result<u64> {
        let b: [u8; 8] = self.slice(offset, 8, what)?.try_into().unwrap();
        Ok(if self.big_endian {
            u64::from_be_bytes(b)
        } else {
            u64::from_le_bytes(b)
        })
    }
}

#[derive(Debug, Clone, Copy)]
struct Entry {
    typ: u16,
    count: u64,
    /// Absolute offset of the value bytes (inline or out-of-line).
    value_offset: u64,
}

fn type_size(typ: u16) -> Option<u64> {
    match typ {
        TYPE_BYTE | TYPE_ASCII | TYPE_SBYTE | TYPE_UNDEFINED => Some(1),
        TYPE_SHORT | TYPE_SSHORT => Some(2),
        TYPE_LONG | TYPE_SLONG | TYPE_FLOAT | TYPE_IFD => Some(4),
        TYPE_RATIONAL | TYPE_SRATIONAL | TYPE_DOUBLE => Some(8),
        _ => None,
    }
}

struct Ifd<'a> {
    reader: ByteReader<'a>,
    entries: HashMap<u16, Entry>,
}

impl<'a> Ifd<'a> {
    fn parse(reader: ByteReader<'a>, offset: u64) -> Result<Self> {
        let n = reader.u16_at(offset, "IFD entry count")? as u64;
        reader.slice(offset + 2, n * 12, "IFD entries")?;
        let mut entries = HashMap::with_capacity(n as usize);
        for i in 0..n {
            let pos = offset + 2 + i * 12;
            let tag = reader.u16_at(pos, "IFD entry")?;
            let typ = reader.u16_at(pos + 2, "IFD entry")?;
            let count = reader.u32_at(pos + 4, "IFD entry")? as u64;
            // Unknown field types are skipped; they only matter if a required tag uses one.
            let Some(size) = type_size(typ) else {
                continue;
            };
            let total = size.saturating_mul(count);
            let value_offset = if total <= 4 {
                pos + 8
            } else {
                reader.u32_at(pos + 8, "IFD value offset")? as u64
            };
            entries.insert(
                tag,
                Entry {
                    typ,
                    count,
                    value_offset,
                },
            );
        }
        Ok(Self { reader, entries })
    }

    fn has(&self, tag: u16) -> bool {
        self.entries.contains_key(&tag)
    }

    fn unsigned_vec(&self, tag: u16) -> Result<Option<Vec<u64>>> {
        let Some(e) = self.entries.get(&tag) else {
            return Ok(None);
        };
        let size = type_size(e.typ).unwrap();
        self.reader
            .slice(e.value_offset, size.saturating_mul(e.count), "tag value")?;
        let mut out = Vec::with_capacity(e.count as usize);
        for i in 0..e.count {
            let pos = e.value_offset + i * size;
            let v = match e.typ {
                TYPE_BYTE | TYPE_UNDEFINED => self.reader.slice(pos, 1, "tag value")?[0] as u64,
                TYPE_SHORT => self.reader.u16_at(pos, "tag value")? as u64,
                TYPE_LONG | TYPE_IFD => self.reader.u32_at(pos, "tag value")? as u64,
                _ => {
                    return Err(invalid(
                        tag,
                        format!("expected unsigned integer type, got type {}", e.typ),
                    ))
                }
            };
            out.push(v);
        }
        Ok(Some(out))
    }

    fn unsigned(&self, tag: u16) -> Result<Option<u64>> {
        match self.unsigned_vec(tag)? {
            None => Ok(None),
            Some(v) if v.is_empty() => Err(invalid(tag, "empty value")),
            Some(v) => Ok(Some(v[0])),
        }
    }

    fn required_unsigned(&self, tag: u16) -> Result<u64> {
        self.unsigned(tag)?.ok_or(GeoTiffError::MissingTag { tag })
    }

    fn double_vec(&self, tag: u16) -> Result<Option<Vec<f64>>> {
        let Some(e) = self.entries.get(&tag) else {
            return Ok(None);
        };
        if e.typ != TYPE_DOUBLE && e.typ != TYPE_FLOAT {
            return Err(invalid(
                tag,
                format!("expected floating point type, got type {}", e.typ),
            ));
        }
        let size = type_size(e.typ).unwrap();
        self.reader
            .slice(e.value_offset, size.saturating_mul(e.count), "tag value")?;
        let mut out = Vec::with_capacity(e.count as usize);
        for i in 0..e.count {
            let v = match e.typ {
                TYPE_DOUBLE => {
                    f64::from_bits(self.reader.u64_at(e.value_offset + i * 8, "tag value")?)
                }
                TYPE_FLOAT => f64::from(f32::from_bits(
                    self.reader.u32_at(e.value_offset + i * 4, "tag value")?,
                )),
                _ => {
                    return Err(invalid(
                        tag,
                        format!("expected floating point type, got type {}", e.typ),
                    ))
                }
            };
            out.push(v);
        }
        Ok(Some(out))
    }

    fn ascii(&self, tag: u16) -> Result<Option<String>> {
        let Some(e) = self.entries.get(&tag) else {
            return Ok(None);
        };
        if e.typ != TYPE_ASCII && e.typ != TYPE_BYTE && e.typ != TYPE_UNDEFINED {
            return Err(invalid(
                tag,
                format!("expected ASCII type, got type {}", e.typ),
            ));
        }
        let bytes = self.reader.slice(e.value_offset, e.count, "tag value")?;
        let end = bytes.iter().position(|&b| b == 0).unwrap_or(bytes.len());
        Ok(Some(String::from_utf8_lossy(&bytes[..end]).into_owned()))
    }
}

/// Parse a GDAL_NODATA string. Accepts any casing of `nan`/`inf`.
pub fn parse_nodata_text(text: &str) -> Option<f64> {
    let t = text.trim().to_ascii_lowercase();
    match t.as_str() {
        "nan" | "-nan" | "+nan" => Some(f64::NAN),
        _ => t.parse::<f64>().ok(),
    }
}

/// Decimal text for the GDAL_NODATA tag; NaN is written as `nan`.
pub fn format_nodata_text(value: f64) -> String {
    if value.is_nan() {
        "nan".to_string()
    } else {
        format!("{value}")
    }
}

pub fn read_geotiff(bytes: &[u8]) -> Result<Raster> {
    if bytes.len() < 8 {
        return Err(GeoTiffError::Truncated {
            offset: 0,
            needed: 8,
            what: "TIFF header",
        });
    }
    let big_endian = match &bytes[0..2] {
        b"II" => false,
        b"MM" => true,
        _ => return Err(GeoTiffError::BadMagic { offset: 0 }),
    };
    let reader = ByteReader {
        data: bytes,
        big_endian,
    };
    match reader.u16_at(2, "TIFF version")? {
        42 => {}
        43 => return Err(layout(0, "BigTIFF is not supported")),
        _ => return Err(GeoTiffError::BadMagic { offset: 2 }),
    }
    let ifd_offset = reader.u32_at(4, "first IFD offset")? as u64;
    let ifd = Ifd::parse(reader, ifd_offset)?;

    let width = ifd.required_unsigned(TAG_IMAGE_WIDTH)? as usize;
    let height = ifd.required_unsigned(TAG_IMAGE_LENGTH)? as usize;
    if width == 0 || height == 0 {
        return Err(invalid(
            TAG_IMAGE_WIDTH,
            format!("empty image {width}x{height}"),
        ));
    }
    let pixels = width
        .checked_mul(height)
        .filter(|&p| p <= MAX_PIXELS)
        .ok_or_else(|| {
            layout(
                TAG_IMAGE_WIDTH,
                format!("image too large: {width}x{height}"),
            )
        })?;

    let spp = ifd.unsigned(TAG_SAMPLES_PER_PIXEL)?.unwrap_or(1);
    if spp != 1 {
        return Err(layout(
            TAG_SAMPLES_PER_PIXEL,
            format!("{spp} samples per pixel, only single-band images are supported"),
        ));
    }
    let bits = ifd
        .unsigned_vec(TAG_BITS_PER_SAMPLE)?
        .unwrap_or_else(|| vec![1]);
    let bits = *bits
        .first()
        .ok_or_else(|| invalid(TAG_BITS_PER_SAMPLE, "empty value"))?;
    let format = ifd
        .unsigned(TAG_SAMPLE_FORMAT)?
        .unwrap_or(SAMPLE_FORMAT_UINT as u64);
    let kind = match (bits, format) {
        (16, f) if f == SAMPLE_FORMAT_UINT as u64 => SampleKind::U16,
        (32, f) if f == SAMPLE_FORMAT_IEEEFP as u64 => SampleKind::F32,
        (16, _) | (32, _) => {
            return Err(layout(
                TAG_SAMPLE_FORMAT,
                format!("sample format {format} with {bits} bits"),
            ))
        }
        _ => {
            return Err(layout(
                TAG_BITS_PER_SAMPLE,
                format!("{bits} bits per sample"),
            ))
        }
    };
    let planar = ifd.unsigned(TAG_PLANAR_CONFIGURATION)?.unwrap_or(1);
    if planar != 1 {
        return Err(layout(
            TAG_PLANAR_CONFIGURATION,
            format!("planar configuration {planar}"),
        ));
    }
    let predictor = ifd.unsigned(TAG_PREDICTOR)?.unwrap_or(1);
    if predictor != 1 {
        return Err(layout(TAG_PREDICTOR, format!("predictor {predictor}")));
    }
    let compression = ifd.unsigned(TAG_COMPRESSION)?.unwrap_or(1);
    let compression = u16::try_from(compression).unwrap_or(u16::MAX);
    if compression != COMPRESSION_NONE && compression != COMPRESSION_DEFLATE {
        return Err(GeoTiffError::UnsupportedCompression { code: compression });
    }

    let georef = read_georeference(&ifd)?;

    let nodata = match ifd.ascii(TAG_GDAL_NODATA)? {
        None => None,
        Some(text) => Some(
            parse_nodata_text(&text)
                .ok_or_else(|| invalid(TAG_GDAL_NODATA, format!("not a number: {text:?}")))?,
        ),
    };

    let bytes_per_sample = (bits / 8) as usize;
    let raw = if ifd.has(TAG_TILE_OFFSETS) {
        read_tiles(&ifd, width, height, bytes_per_sample, compression)?
    } else {
        read_strips(&ifd, width, height, bytes_per_sample, compression)?
    };
    debug_assert_eq!(raw.len(), pixels * bytes_per_sample);

    let samples = match kind {
        SampleKind::U16 => Samples::U16(
            raw.chunks_exact(2)
                .map(|c| {
                    let b = [c[0], c[1]];
                    if big_endian {
                        u16::from_be_bytes(b)
                    } else {
                        u16::from_le_bytes(b)
                    }
                })
                .collect(),
        ),
        SampleKind::F32 => Samples::F32(
            raw.chunks_exact(4)
                .map(|c| {
                    let b = [c[0], c[1], c[2], c[3]];
                    f32::from_bits(if big_endian {
                        u32::from_be_bytes(b)
                    } else {
                        u32::from_le_bytes(b)
                    })
                })
                .collect(),
        ),
    };

    Raster::new(width, height, samples, nodata, georef)
        .map_err(|e| invalid(TAG_MODEL_PIXEL_SCALE, e.to_string()))
}

fn read_georeference(ifd: &Ifd<'_>) -> Result<GridGeoreference> {
    let missing = |tag: u16, detail: &str| GeoTiffError::MissingGeoreference {
        tag,
        detail: detail.to_string(),
    };
    let scale = ifd
        .double_vec(TAG_MODEL_PIXEL_SCALE)?
        .ok_or_else(|| missing(TAG_MODEL_PIXEL_SCALE, "ModelPixelScaleTag absent"))?;
    let tie = ifd
        .double_vec(TAG_MODEL_TIEPOINT)?
        .ok_or_else(|| missing(TAG_MODEL_TIEPOINT, "ModelTiepointTag absent"))?;
    let keys = ifd
        .unsigned_vec(TAG_GEO_KEY_DIRECTORY)?
        .ok_or_else(|| missing(TAG_GEO_KEY_DIRECTORY, "GeoKeyDirectoryTag absent"))?;

    if scale.len() < 2 {
        return Err(invalid(
            TAG_MODEL_PIXEL_SCALE,
            format!("{} values", scale.len()),
        ));
    }
    if tie.len() < 6 {
        return Err(invalid(TAG_MODEL_TIEPOINT, format!("{} values", tie.len())));
    }
    let (sx, sy) = (scale[0], scale[1]);
    if !(sx.is_finite() && sx > 0.0 && sy.is_finite() && sy > 0.0) {
        return Err(invalid(
            TAG_MODEL_PIXEL_SCALE,
            format!("pixel scale must be positive, got ({sx}, {sy})"),
        ));
    }

    let (epsg, raster_type) = parse_geo_keys(&keys)?;
    let epsg =
        epsg.ok_or_else(|| missing(TAG_GEO_KEY_DIRECTORY, "ProjectedCSTypeGeoKey (3072) absent"))?;
    if epsg == 0 {
        return Err(invalid(TAG_GEO_KEY_DIRECTORY, "ProjectedCSTypeGeoKey is 0"));
    }

    // Tiepoint maps raster point (i, j) to model (x, y).
    let (i, j, x, y) = (tie[0], tie[1], tie[3], tie[4]);
    let mut origin_x = x - i * sx;
    let mut origin_y = y + j * sy;
    if raster_type == Some(RASTER_PIXEL_IS_POINT) {
        origin_x -= 0.5 * sx;
        origin_y += 0.5 * sy;
    }
    GridGeoreference::new(origin_x, origin_y, sx, sy, epsg)
        .map_err(|e| invalid(TAG_MODEL_TIEPOINT, e.to_string()))
}

/// Returns (ProjectedCSTypeGeoKey, GTRasterTypeGeoKey) when stored inline.
fn parse_geo_keys(keys: &[u64]) -> Result<(Option<u16>, Option<u16>)> {
    if keys.len() < 4 {
        return Err(invalid(
            TAG_GEO_KEY_DIRECTORY,
            "header shorter than 4 values",
        ));
    }
    let n = keys[3] as usize;
    if keys.len() < 4 + n * 4 {
        return Err(invalid(
            TAG_GEO_KEY_DIRECTORY,
            format!("declares {n} keys but holds {} values", keys.len()),
        ));
    }
    let mut epsg = None;
    let mut raster_type = None;
    for k in keys[4..4 + n * 4].chunks_exact(4) {
        let (id, location, value) = (k[0] as u16, k[1], k[3] as u16);
        if location != 0 {
            continue;
        }
        match id {
            PROJECTED_CS_TYPE_GEO_KEY => epsg = Some(value),
            GT_RASTER_TYPE_GEO_KEY => raster_type = Some(value),
            _ => {}
        }
    }
    Ok((epsg, raster_type))
}

fn decode_block(
    reader: &ByteReader<'_>,
    offset: u64,
    count: u64,
    expected: usize,
    compression: u16,
) -> Result<Vec<u8>> {
    match compression {
        COMPRESSION_NONE => {
            let take = (expected as u64).min(count);
            if take < expected as u64 {
                return Err(GeoTiffError::Truncated {
                    offset,
                    needed: expected as u64,
                    what: "uncompressed block",
                });
            }
            Ok(reader.slice(offset, take, "image block")?.to_vec())
        }
        _ => {
            let src = reader.slice(offset, count, "compressed block")?;
            let mut out = Vec::with_capacity(expected);
            ZlibDecoder::new(src)
                .take(expected as u64)
                .read_to_end(&mut out)
                .map_err(|e| GeoTiffError::CorruptData {
                    offset,
                    detail: format!("deflate: {e}"),
                })?;
            if out.len() < expected {
                return Err(GeoTiffError::CorruptData {
                    offset,
                    detail: format!("deflate block yielded {} of {expected} bytes", out.len()),
                });
            }
            Ok(out)
        }
    }
}

fn offsets_and_counts(
    ifd: &Ifd<'_>,
    offsets_tag: u16,
    counts_tag: u16,
    needed: usize,
) -> Result<(Vec<u64>, Vec<u64>)> {
    let offsets = ifd
        .unsigned_vec(offsets_tag)?
        .ok_or(GeoTiffError::MissingTag { tag: offsets_tag })?;
    let counts = ifd
        .unsigned_vec(counts_tag)?
        .ok_or(GeoTiffError::MissingTag { tag: counts_tag })?;
    if offsets.len() < needed {
        return Err(invalid(
            offsets_tag,
            format!("{} entries, layout needs {needed}", offsets.len()),
        ));
    }
    if counts.len() < needed {
        return Err(invalid(
            counts_tag,
            format!("{} entries, layout needs {needed}", counts.len()),
        ));
    }
    Ok((offsets, counts))
}

/// Deflate cannot expand data by more than about 1032:1.
const MAX_DEFLATE_RATIO: u64 = 1100;

/// Reject layouts whose blocks lie outside the file or cannot hold the image,
/// before any image-sized buffer is allocated.
fn check_blocks(
    reader: &ByteReader<'_>,
    offsets: &[u64],
    counts: &[u64],
    decoded_total: usize,
    compression: u16,
) -> Result<()> {
    let mut available = 0u64;
    for (&offset, &count) in offsets.iter().zip(counts) {
        reader.slice(offset, count, "image block")?;
        available += count;
    }
    let capacity = match compression {
        COMPRESSION_NONE => available,
        _ => available.saturating_mul(MAX_DEFLATE_RATIO),
    };
    if capacity < decoded_total as u64 {
        return Err(GeoTiffError::Truncated {
            offset: offsets.first().copied().unwrap_or(0),
            needed: decoded_total as u64,
            what: "image data",
        });
    }
    Ok(())
}

fn read_strips(
    ifd: &Ifd<'_>,
    width: usize,
    height: usize,
    bps: usize,
    compression: u16,
) -> Result<Vec<u8>> {
    let rows_per_strip = ifd
        .unsigned(TAG_ROWS_PER_STRIP)?
        .unwrap_or(u32::MAX as u64)
        .min(height as u64) as usize;
    if rows_per_strip == 0 {
        return Err(invalid(TAG_ROWS_PER_STRIP, "zero rows per strip"));
    }
    let strips = height.div_ceil(rows_per_strip);
    let (offsets, counts) =
        offsets_and_counts(ifd, TAG_STRIP_OFFSETS, TAG_STRIP_BYTE_COUNTS, strips)?;
    let row_bytes = width * bps;
    check_blocks(
        &ifd.reader,
        &offsets[..strips],
        &counts[..strips],
        row_bytes * height,
        compression,
    )?;
    let mut out = Vec::with_capacity(row_bytes * height);
    for s in 0..strips {
        let rows = rows_per_strip.min(height - s * rows_per_strip);
        let block = decode_block(
            &ifd.reader,
            offsets[s],
            counts[s],
            rows * row_bytes,
            compression,
        )?;
        out.extend_from_slice(&block[..rows * row_bytes]);
    }
    Ok(out)
}

fn read_tiles(
    ifd: &Ifd<'_>,
    width: usize,
    height: usize,
    bps: usize,
    compression: u16,
) -> Result<Vec<u8>> {
    let tw = ifd.required_unsigned(TAG_TILE_WIDTH)? as usize;
    let th = ifd.required_unsigned(TAG_TILE_LENGTH)? as usize;
    if tw == 0 || th == 0 {
        return Err(invalid(TAG_TILE_WIDTH, format!("tile size {tw}x{th}")));
    }
    if tw.saturating_mul(th) > MAX_PIXELS {
        return Err(layout(TAG_TILE_WIDTH, format!("tile too large: {tw}x{th}")));
    }
    let across = width.div_ceil(tw);
    let down = height.div_ceil(th);
    let (offsets, counts) =
        offsets_and_counts(ifd, TAG_TILE_OFFSETS, TAG_TILE_BYTE_COUNTS, across * down)?;
    let row_bytes = width * bps;
    let tile_row_bytes = tw * bps;
    let n_tiles = across * down;
    check_blocks(
        &ifd.reader,
        &offsets[..n_tiles],
        &counts[..n_tiles],
        (tile_row_bytes * th).saturating_mul(n_tiles),
        compression,
    )?;
    let mut out = vec![0u8; row_bytes * height];
    for ty in 0..down {
        for tx in 0..across {
            let t = ty * across + tx;
            let block = decode_block(
                &ifd.reader,
                offsets[t],
                counts[t],
                tile_row_bytes * th,
                compression,
            )?;
            let cols = tw.min(width - tx * tw);
            let rows = th.min(height - ty * th);
            for r in 0..rows {
                let src = &block[r * tile_row_bytes..r * tile_row_bytes + cols * bps];
                let dst_start = (ty * th + r) * row_bytes + tx * tw * bps;
                out[dst_start..dst_start + cols * bps].copy_from_slice(src);
            }
        }
    }
    Ok(out)
}

enum Value {
    Short(Vec<u16>),
    Long(Vec<u32>),
    Double(Vec<f64>),
    Ascii(Vec<u8>),
}

impl Value {
    fn typ(&self) -> u16 {
        match self {
            Value::Short(_) => TYPE_SHORT,
            Value::Long(_) => TYPE_LONG,
            Value::Double(_) => TYPE_DOUBLE,
            Value::Ascii(_) => TYPE_ASCII,
        }
    }

    fn count(&self) -> u32 {
        match self {
            Value::Short(v) => v.len() as u32,
            Value::Long(v) => v.len() as u32,
            Value::Double(v) => v.len() as u32,
            Value::Ascii(v) => v.len() as u32,
        }
    }

    fn bytes(&self) -> Vec<u8> {
        match self {
            Value::Short(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            Value::Long(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            Value::Double(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            Value::Ascii(v) => v.clone(),
        }
    }
}

/// Encode a raster as canonical little-endian, single-strip, uncompressed GeoTIFF.
///
/// Classic TIFF addresses at most 4 GiB; rasters are assumed to fit.
pub fn write_geotiff(raster: &Raster) -> Vec<u8> {
    let kind = raster.sample_kind();
    let g = raster.georef();
    let image: Vec<u8> = match raster.samples() {
        Samples::U16(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
        Samples::F32(v) => v.iter().flat_map(|x| x.to_bits().to_le_bytes()).collect(),
    };

    let mut tags: Vec<(u16, Value)> = vec![
        (TAG_IMAGE_WIDTH, Value::Long(vec![raster.width() as u32])),
        (TAG_IMAGE_LENGTH, Value::Long(vec![raster.height() as u32])),
        (TAG_BITS_PER_SAMPLE, Value::Short(vec![kind.bits()])),
        (TAG_COMPRESSION, Value::Short(vec![COMPRESSION_NONE])),
        (TAG_PHOTOMETRIC, Value::Short(vec![1])),
        // placeholder, patched once the image offset is known
        (TAG_STRIP_OFFSETS, Value::Long(vec![0])),
        (TAG_SAMPLES_PER_PIXEL, Value::Short(vec![1])),
        (
            TAG_ROWS_PER_STRIP,
            Value::Long(vec![raster.height() as u32]),
        ),
        (TAG_STRIP_BYTE_COUNTS, Value::Long(vec![image.len() as u32])),
        (TAG_PLANAR_CONFIGURATION, Value::Short(vec![1])),
        (
            TAG_SAMPLE_FORMAT,
            Value::Short(vec![match kind {
                SampleKind::U16 => SAMPLE_FORMAT_UINT,
                SampleKind::F32 => SAMPLE_FORMAT_IEEEFP,
            }]),
        ),
        (
            TAG_MODEL_PIXEL_SCALE,
            Value::Double(vec![g.pixel_size_x, g.pixel_size_y, 0.0]),
        ),
        (
            TAG_MODEL_TIEPOINT,
            Value::Double(vec![0.0, 0.0, 0.0, g.origin_x, g.origin_y, 0.0]),
        ),
        (
            TAG_GEO_KEY_DIRECTORY,
            Value::Short(vec![
                1,
                1,
                0,
                3,
                GT_MODEL_TYPE_GEO_KEY,
                0,
                1,
                MODEL_TYPE_PROJECTED,
                GT_RASTER_TYPE_GEO_KEY,
                0,
                1,
                RASTER_PIXEL_IS_AREA,
                PROJECTED_CS_TYPE_GEO_KEY,
                0,
                1,
                g.epsg_code,
            ]),
        ),
    ];
    if let Some(nd) = raster.nodata() {
        let mut text = format_nodata_text(nd).into_bytes();
        text.push(0);
        tags.push((TAG_GDAL_NODATA, Value::Ascii(text)));
    }

    let ifd_offset = 8u32;
    let ifd_len = 2 + tags.len() as u32 * 12 + 4;
    let mut data_offset = ifd_offset + ifd_len;
    let mut extra = Vec::new();
    let mut placements = Vec::with_capacity(tags.len());
    for (_, value) in &tags {
        let bytes = value.bytes();
        if bytes.len() <= 4 {
            let mut inline = [0u8; 4];
            inline[..bytes.len()].copy_from_slice(&bytes);
            placements.push(inline);
        } else {
            placements.push((data_offset + extra.len() as u32).to_le_bytes());
            extra.extend_from_slice(&bytes);
            if extra.len() % 2 == 1 {
                extra.push(0);
            }
        }
    }
    data_offset += extra.len() as u32;
    let image_offset = data_offset;
    let strip_idx = tags
        .iter()
        .position(|(t, _)| *t == TAG_STRIP_OFFSETS)
        .unwrap();
    placements[strip_idx] = image_offset.to_le_bytes();

    let mut out = Vec::with_capacity(image_offset as usize + image.len());
    out.extend_from_slice(b"II");
    out.extend_from_slice(&42u16.to_le_bytes());
    out.extend_from_slice(&ifd_offset.to_le_bytes());
    out.extend_from_slice(&(tags.len() as u16).to_le_bytes());
    for ((tag, value), placement) in tags.iter().zip(&placements) {
        out.extend_from_slice(&tag.to_le_bytes());
        out.extend_from_slice(&value.typ().to_le_bytes());
        out.extend_from_slice(&value.count().to_le_bytes());
        out.extend_from_slice(placement);
    }
    out.extend_from_slice(&0u32.to_le_bytes());
    out.extend_from_slice(&extra);
    debug_assert_eq!(out.len(), image_offset as usize);
    out.extend_from_slice(&image);
    out
}
