#![allow(dead_code)]

use std::io::Write;

use flate2::write::ZlibEncoder;
use flate2::Compression;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Endian {
    Little,
    Big,
}

#[derive(Clone, Copy, Debug)]
pub enum Layout {
    Strips {
        rows_per_strip: usize,
    },
    Tiles {
        tile_width: usize,
        tile_height: usize,
    },
}

#[derive(Clone, Debug)]
pub enum Pixels {
    U16(Vec<u16>),
    F32(Vec<f32>),
}

impl Pixels {
    fn bytes_per_sample(&self) -> usize {
        match self {
            Pixels::U16(_) => 2,
            Pixels::F32(_) => 4,
        }
    }

    fn encode(&self, idx: usize, endian: Endian, out: &mut Vec<u8>) {
        match (self, endian) {
            (Pixels::U16(v), Endian::Little) => out.extend_from_slice(&v[idx].to_le_bytes()),
            (Pixels::U16(v), Endian::Big) => out.extend_from_slice(&v[idx].to_be_bytes()),
            (Pixels::F32(v), Endian::Little) => out.extend_from_slice(&v[idx].to_le_bytes()),
            (Pixels::F32(v), Endian::Big) => out.extend_from_slice(&v[idx].to_be_bytes()),
        }
    }
}

/// A GeoTIFF encoder written for tests, independent from the crate's writer.
#[derive(Clone, Debug)]
pub struct TiffSpec {
    pub endian: Endian,
    pub width: usize,
    pub height: usize,
    pub pixels: Pixels,
    pub layout: Layout,
    pub deflate: bool,
    /// (origin_x, origin_y, pixel_size_x, pixel_size_y)
    pub georef: Option<(f64, f64, f64, f64)>,
    pub epsg: u16,
    pub nodata: Option<String>,
    /// Extra or overriding (tag, type, count, raw little-endian payload) entries.
    pub extra: Vec<(u16, u16, u32, Vec<u8>)>,
}

impl TiffSpec {
    pub fn new(width: usize, height: usize, pixels: Pixels) -> Self {
        TiffSpec {
            endian: Endian::Little,
            width,
            height,
            pixels,
            layout: Layout::Strips {
                rows_per_strip: height.max(1),
            },
            deflate: false,
            georef: Some((500_000.0, 6_200_000.0, 10.0, 10.0)),
            epsg: 25832,
            nodata: None,
            extra: Vec::new(),
        }
    }
}

const SHORT: u16 = 3;
const LONG: u16 = 4;
const ASCII: u16 = 2;
const DOUBLE: u16 = 12;

enum Val {
    Shorts(Vec<u16>),
    Longs(Vec<u32>),
    Doubles(Vec<f64>),
    Ascii(Vec<u8>),
    Raw(u16, u32, Vec<u8>),
}

fn put_u16(out: &mut Vec<u8>, v: u16, e: Endian) {
    match e {
        Endian::Little => out.extend_from_slice(&v.to_le_bytes()),
        Endian::Big => out.extend_from_slice(&v.to_be_bytes()),
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32, e: Endian) {
    match e {
        Endian::Little => out.extend_from_slice(&v.to_le_bytes()),
        Endian::Big => out.extend_from_slice(&v.to_be_bytes()),
    }
}

impl Val {
    fn kind_count(&self) -> (u16, u32) {
        match self {
            Val::Shorts(v) => (SHORT, v.len() as u32),
            Val::Longs(v) => (LONG, v.len() as u32),
            Val::Doubles(v) => (DOUBLE, v.len() as u32),
            Val::Ascii(v) => (ASCII, v.len() as u32),
            Val::Raw(t, c, _) => (*t, *c),
        }
    }

    fn bytes(&self, e: Endian) -> Vec<u8> {
        let mut out = Vec::new();
        match self {
            Val::Shorts(v) => v.iter().for_each(|&x| put_u16(&mut out, x, e)),
            Val::Longs(v) => v.iter().for_each(|&x| put_u32(&mut out, x, e)),
            Val::Doubles(v) => v.iter().for_each(|&x| match e {
                Endian::Little => out.extend_from_slice(&x.to_le_bytes()),
                Endian::Big => out.extend_from_slice(&x.to_be_bytes()),
            }),
            Val::Ascii(v) => out.extend_from_slice(v),
            Val::Raw(_, _, v) => out.extend_from_slice(v),
        }
        out
    }
}

fn zlib(data: &[u8]) -> Vec<u8> {
    let mut enc = ZlibEncoder::new(Vec::new(), Compression::new(6));
    enc.write_all(data).unwrap();
    enc.finish().unwrap()
}

/// Serialize `spec` as a classic TIFF.
pub fn build_tiff(spec: &TiffSpec) -> Vec<u8> {
    let e = spec.endian;
    let bps = spec.pixels.bytes_per_sample();

    // Chunk payloads in file order.
    let mut chunks: Vec<Vec<u8>> = Vec::new();
    match spec.layout {
        Layout::Strips { rows_per_strip } => {
            let mut row = 0;
            while row < spec.height {
                let end = (row + rows_per_strip).min(spec.height);
                let mut raw = Vec::new();
                for i in row * spec.width..end * spec.width {
                    spec.pixels.encode(i, e, &mut raw);
                }
                chunks.push(raw);
                row = end;
            }
        }
        Layout::Tiles {
            tile_width,
            tile_height,
        } => {
            for ty in 0..spec.height.div_ceil(tile_height) {
                for tx in 0..spec.width.div_ceil(tile_width) {
                    let mut raw = Vec::new();
                    for r in 0..tile_height {
                        for c in 0..tile_width {
                            let (row, col) = (ty * tile_height + r, tx * tile_width + c);
                            if row < spec.height && col < spec.width {
                                spec.pixels.encode(row * spec.width + col, e, &mut raw);
                            } else {
                                raw.extend(std::iter::repeat_n(0u8, bps));
                            }
                        }
                    }
                    chunks.push(raw);
                }
            }
        }
    }
    if spec.deflate {
        chunks = chunks.iter().map(|c| zlib(c)).collect();
    }

    let mut out = Vec::new();
    match e {
        Endian::Little => out.extend_from_slice(b"II"),
        Endian::Big => out.extend_from_slice(b"MM"),
    }
    put_u16(&mut out, 42, e);
    put_u32(&mut out, 0, e); // patched below

    let mut offsets = Vec::new();
    for c in &chunks {
        if out.len() % 2 == 1 {
            out.push(0);
        }
        offsets.push(out.len() as u32);
        out.extend_from_slice(c);
    }
    let counts: Vec<u32> = chunks.iter().map(|c| c.len() as u32).collect();

    let (bits, format) = match spec.pixels {
        Pixels::U16(_) => (16, 1),
        Pixels::F32(_) => (32, 3),
    };
    let mut tags: Vec<(u16, Val)> = vec![
        (256, Val::Longs(vec![spec.width as u32])),
        (257, Val::Longs(vec![spec.height as u32])),
        (258, Val::Shorts(vec![bits])),
        (259, Val::Shorts(vec![if spec.deflate { 8 } else { 1 }])),
        (262, Val::Shorts(vec![1])),
        (277, Val::Shorts(vec![1])),
        (284, Val::Shorts(vec![1])),
        (339, Val::Shorts(vec![format])),
    ];
    match spec.layout {
        Layout::Strips { rows_per_strip } => {
            tags.push((273, Val::Longs(offsets)));
            tags.push((278, Val::Longs(vec![rows_per_strip as u32])));
            tags.push((279, Val::Longs(counts)));
        }
        Layout::Tiles {
            tile_width,
            tile_height,
        } => {
            tags.push((322, Val::Longs(vec![tile_width as u32])));
            tags.push((323, Val::Longs(vec![tile_height as u32])));
            tags.push((324, Val::Longs(offsets)));
            tags.push((325, Val::Longs(counts)));
        }
    }
    if let Some((ox, oy, sx, sy)) = spec.georef {
        tags.push((33550, Val::Doubles(vec![sx, sy, 0.0])));
        tags.push((33922, Val::Doubles(vec![0.0, 0.0, 0.0, ox, oy, 0.0])));
        tags.push((
            34735,
            Val::Shorts(vec![
                1, 1, 0, 3, 1024, 0, 1, 1, 1025, 0, 1, 1, 3072, 0, 1, spec.epsg,
            ]),
        ));
    }
    if let Some(nd) = &spec.nodata {
        let mut text = nd.as_bytes().to_vec();
        text.push(0);
        tags.push((42113, Val::Ascii(text)));
    }
    for (tag, ty, count, payload) in &spec.extra {
        tags.retain(|(t, _)| t != tag);
        tags.push((*tag, Val::Raw(*ty, *count, payload.clone())));
    }
    tags.sort_by_key(|(t, _)| *t);

    // Out-of-line values first, then the IFD.
    let mut inline: Vec<(u16, u16, u32, [u8; 4])> = Vec::new();
    for (tag, val) in &tags {
        let (ty, count) = val.kind_count();
        let bytes = val.bytes(e);
        let mut field = [0u8; 4];
        if bytes.len() <= 4 {
            field[..bytes.len()].copy_from_slice(&bytes);
        } else {
            if out.len() % 2 == 1 {
                out.push(0);
            }
            let at = out.len() as u32;
            out.extend_from_slice(&bytes);
            let mut tmp = Vec::new();
            put_u32(&mut tmp, at, e);
            field.copy_from_slice(&tmp);
        }
        inline.push((*tag, ty, count, field));
    }
    if out.len() % 2 == 1 {
        out.push(0);
    }
    let ifd_at = out.len() as u32;
    put_u16(&mut out, inline.len() as u16, e);
    for (tag, ty, count, field) in inline {
        put_u16(&mut out, tag, e);
        put_u16(&mut out, ty, e);
        put_u32(&mut out, count, e);
        out.extend_from_slice(&field);
    }
    put_u32(&mut out, 0, e);

    let mut first = Vec::new();
    put_u32(&mut first, ifd_at, e);
    out[4..8].copy_from_slice(&first);
    out
}

/// Little-endian SHORT payload for `TiffSpec::extra`.
pub fn short_le(v: u16) -> Vec<u8> {
    let mut b = v.to_le_bytes().to_vec();
    b.extend_from_slice(&[0, 0]);
    b
}
