//! ESRI Shapefile (polygon) and dBASE III attribute reader.
//!
//! The `.shx` index is not needed: records are read sequentially from `.shp`.

use crate::geometry::{Point, PolygonGeometry};
use crate::vector::{AttributeValue, Attributes, FeatureCollection, VectorError};

const FILE_CODE: i32 = 9994;
const VERSION: i32 = 1000;
const SHAPE_NULL: i32 = 0;
const SHAPE_POLYGON: i32 = 5;

struct Cursor<'a> {
    data: &'a [u8],
    file: &'static str,
}

impl<'a> Cursor<'a> {
    fn bytes(
        &self,
        offset: usize,
        len: usize,
        what: &'static str,
    ) -> Result<&'a [u8], VectorError> {
        offset
            .checked_add(len)
            .filter(|&end| end <= self.data.len())
            .map(|end| &self.data[offset..end])
            .ok_or(VectorError::Truncated {
                file: self.file,
                offset,
                what,
            })
    }

    fn i32_be(&self, offset: usize, what: &'static str) -> Result<i32, VectorError> {
        Ok(i32::from_be_bytes(
            self.bytes(offset, 4, what)?.try_into().unwrap(),
        ))
    }

    fn i32_le(&self, offset: usize, what: &'static str) -> Result<i32, VectorError> {
        Ok(i32::from_le_bytes(
            self.bytes(offset, 4, what)?.try_into().unwrap(),
        ))
    }

    fn f64_le(&self, offset: usize, what: &'static str) -> Result<f64, VectorError> {
        Ok(f64::from_le_bytes(
            self.bytes(offset, 8, what)?.try_into().unwrap(),
        ))
    }
}

/// Polygon records in file order; `None` for null shapes.
fn read_shp(shp: &[u8]) -> Result<Vec<Option<Vec<Vec<Point>>>>, VectorError> {
    let c = Cursor {
        data: shp,
        file: "shp",
    };
    c.bytes(0, 100, "file header")?;
    let code = c.i32_be(0, "file code")?;
    if code != FILE_CODE {
        return Err(VectorError::BadHeader {
            file: "shp",
            detail: format!("file code {code}, expected {FILE_CODE}"),
        });
    }
    let version = c.i32_le(28, "version")?;
    if version != VERSION {
        return Err(VectorError::BadHeader {
            file: "shp",
            detail: format!("version {version}, expected {VERSION}"),
        });
    }
    let file_type = c.i32_le(32, "shape type")?;
    if file_type != SHAPE_POLYGON && file_type != SHAPE_NULL {
        return Err(VectorError::UnsupportedShapeType {
            record: 0,
            shape_type: file_type,
        });
    }
    // Header length is in 16-bit words; trust the actual buffer when they disagree.
    let declared = c.i32_be(24, "file length")?.max(0) as usize * 2;
    let end = if declared >= 100 {
        declared.min(shp.len())
    } else {
        shp.len()
    };

    let mut records = Vec::new();
    let mut pos = 100;
    while pos + 8 <= end {
        let content_words = c.i32_be(pos + 4, "record header")?;
        if content_words < 2 {
            return Err(VectorError::Truncated {
                file: "shp",
                offset: pos,
                what: "record content length",
            });
        }
        let content_len = content_words as usize * 2;
        let start = pos + 8;
        let content = c.bytes(start, content_len, "record content")?;
        let rc = Cursor {
            data: content,
            file: "shp",
        };
        let shape_type = rc.i32_le(0, "record shape type")?;
        match shape_type {
            SHAPE_NULL => records.push(None),
            SHAPE_POLYGON => {
                let num_parts = rc.i32_le(36, "part count")?;
                let num_points = rc.i32_le(40, "point count")?;
                if num_parts < 0 || num_points < 0 {
                    return Err(VectorError::BadHeader {
                        file: "shp",
                        detail: format!("record at {pos}: negative part or point count"),
                    });
                }
                let (np, npt) = (num_parts as usize, num_points as usize);
                let parts_at = 44;
                let points_at = parts_at + 4 * np;
                rc.bytes(points_at, 16 * npt, "points")
                    .map_err(|_| VectorError::Truncated {
                        file: "shp",
                        offset: start + points_at,
                        what: "points",
                    })?;
                let mut starts = Vec::with_capacity(np);
                for i in 0..np {
                    let s = rc.i32_le(parts_at + 4 * i, "part index")?;
                    if s < 0 || s as usize > npt {
                        return Err(VectorError::BadHeader {
                            file: "shp",
                            detail: format!("record at {pos}: part start {s} out of range"),
                        });
                    }
                    starts.push(s as usize);
                }
                let mut rings = Vec::with_capacity(np);
                for (i, &s) in starts.iter().enumerate() {
                    let e = starts.get(i + 1).copied().unwrap_or(npt);
                    if e < s {
                        return Err(VectorError::BadHeader {
                            file: "shp",
                            detail: format!("record at {pos}: part indices not ascending"),
                        });
                    }
                    let ring = (s..e)
                        .map(|k| {
                            let at = points_at + 16 * k;
                            Ok([rc.f64_le(at, "point")?, rc.f64_le(at + 8, "point")?])
                        })
                        .collect::<Result<Vec<Point>, VectorError>>()?;
                    rings.push(ring);
                }
                records.push(Some(rings));
            }
            other => {
                return Err(VectorError::UnsupportedShapeType {
                    record: records.len(),
                    shape_type: other,
                })
            }
        }
        pos = start + content_len;
    }
    Ok(records)
}

struct DbfField {
    name: String,
    kind: u8,
    length: usize,
}

fn decode_text(bytes: &[u8]) -> String {
    match std::str::from_utf8(bytes) {
        Ok(s) => s.to_string(),
        // dBASE files commonly carry Latin-1.
        Err(_) => bytes.iter().map(|&b| b as char).collect(),
    }
}

fn read_dbf(dbf: &[u8]) -> Result<Vec<Attributes>, VectorError> {
    let c = Cursor {
        data: dbf,
        file: "dbf",
    };
    let header = c.bytes(0, 32, "file header")?;
    let n_records = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    let header_len = u16::from_le_bytes(header[8..10].try_into().unwrap()) as usize;
    let record_len = u16::from_le_bytes(header[10..12].try_into().unwrap()) as usize;
    if header_len < 33 || record_len < 1 {
        return Err(VectorError::BadHeader {
            file: "dbf",
            detail: format!("header length {header_len}, record length {record_len}"),
        });
    }

    let mut fields = Vec::new();
    let mut pos = 32;
    loop {
        let first = c.bytes(pos, 1, "field descriptor")?[0];
        if first == 0x0D {
            break;
        }
        if pos + 32 > header_len {
            return Err(VectorError::BadHeader {
                file: "dbf",
                detail: "field descriptors overrun header".into(),
            });
        }
        let d = c.bytes(pos, 32, "field descriptor")?;
        let name_end = d[..11].iter().position(|&b| b == 0).unwrap_or(11);
        fields.push(DbfField {
            name: decode_text(&d[..name_end]).trim().to_string(),
            kind: d[11],
            length: d[16] as usize,
        });
        pos += 32;
    }
    let used: usize = 1 + fields.iter().map(|f| f.length).sum::<usize>();
    if used > record_len {
        return Err(VectorError::BadHeader {
            file: "dbf",
            detail: format!("fields span {used} bytes but records are {record_len}"),
        });
    }

    let body = n_records
        .checked_mul(record_len)
        .and_then(|b| b.checked_add(header_len))
        .unwrap_or(usize::MAX);
    if body > dbf.len() {
        return Err(VectorError::Truncated {
            file: "dbf",
            offset: dbf.len(),
            what: "records",
        });
    }
    let mut rows = Vec::with_capacity(n_records);
    for r in 0..n_records {
        let start = header_len + r * record_len;
        let rec = c.bytes(start, record_len, "record")?;
        let mut attrs = Attributes::new();
        let mut off = 1; // deletion flag
        for f in &fields {
            let raw = &rec[off..off + f.length];
            off += f.length;
            let text = decode_text(raw);
            match f.kind {
                b'N' | b'F' => {
                    let t = text.trim();
                    if let Ok(v) = t.parse::<f64>() {
                        attrs.insert(f.name.clone(), AttributeValue::Number(v));
                    } else if !t.is_empty() {
                        attrs.insert(f.name.clone(), AttributeValue::Text(t.to_string()));
                    }
                }
                _ => {
                    let t = text.trim_end_matches([' ', '\0']);
                    attrs.insert(f.name.clone(), AttributeValue::Text(t.to_string()));
                }
            }
        }
        rows.push(attrs);
    }
    Ok(rows)
}

/// EPSG code from the last `AUTHORITY["EPSG","<code>"]` token of a PRJ text,
/// 0 when none is found.
pub fn epsg_from_prj(prj: &str) -> u32 {
    let compact: String = prj.chars().filter(|c| !c.is_whitespace()).collect();
    let upper = compact.to_ascii_uppercase();
    let needle = "AUTHORITY[\"EPSG\",";
    let Some(at) = upper.rfind(needle) else {
        return 0;
    };
    let rest = &compact[at + needle.len()..];
    let digits: String = rest
        .trim_start_matches('"')
        .chars()
        .take_while(char::is_ascii_digit)
        .collect();
    digits.parse().unwrap_or(0)
}

/// Parse a polygon shapefile with its DBF table.
///
/// Null-shape records carry no geometry and are skipped together with their
/// DBF row; ids are assigned to the remaining features in file order.
pub fn read_shapefile(
    shp: &[u8],
    dbf: &[u8],
    prj: Option<&str>,
    crop_key: &str,
) -> Result<FeatureCollection, VectorError> {
    let records = read_shp(shp)?;
    let rows = read_dbf(dbf)?;
    if records.len() != rows.len() {
        return Err(VectorError::RecordCountMismatch {
            shp: records.len(),
            dbf: rows.len(),
        });
    }
    let mut parts = Vec::with_capacity(records.len());
    for (i, (rings, attrs)) in records.into_iter().zip(rows).enumerate() {
        let Some(rings) = rings else {
            continue;
        };
        let geometry = PolygonGeometry::new(rings)
            .map_err(|source| VectorError::InvalidGeometry { feature: i, source })?;
        parts.push((geometry, attrs));
    }
    let epsg = prj.map(epsg_from_prj).unwrap_or(0);
    Ok(FeatureCollection::assemble(parts, epsg, crop_key))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prj_scan_takes_last_authority() {
        let prj = r#"PROJCS["ETRS89 / UTM zone 32N",GEOGCS["ETRS89",AUTHORITY["EPSG","4258"]],UNIT["metre",1,AUTHORITY["EPSG","9001"]],AUTHORITY["EPSG","25832"]]"#;
        assert_eq!(epsg_from_prj(prj), 25832);
        assert_eq!(epsg_from_prj("PROJCS[\"no code\"]"), 0);
        assert_eq!(epsg_from_prj("authority[\"epsg\", \"3857\"]"), 3857);
    }

    #[test]
    fn rejects_wrong_file_code() {
        let mut shp = vec![0u8; 100];
        shp[0..4].copy_from_slice(&1234i32.to_be_bytes());
        let err = read_shapefile(&shp, &[], None, "c").unwrap_err();
        assert_eq!(err.name(), "BadHeader");
    }

    #[test]
    fn truncated_header() {
        let err = read_shapefile(&[0u8; 50], &[], None, "c").unwrap_err();
        assert_eq!(err.name(), "Truncated");
    }
}
