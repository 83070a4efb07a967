//! Reader and writer for a strict subset of TIFF: little-endian, uncompressed,
//! strip-organized, one sample per pixel, with optional GeoTIFF pixel-scale and
//! tiepoint tags. Anything outside the subset is rejected.

use std::path::Path;

use super::{GeoTransform, Raster};
use crate::{Error, Result};

const TAG_IMAGE_WIDTH: u16 = 256;
const TAG_IMAGE_LENGTH: u16 = 257;
const TAG_BITS_PER_SAMPLE: u16 = 258;
const TAG_COMPRESSION: u16 = 259;
const TAG_PHOTOMETRIC: u16 = 262;
const TAG_STRIP_OFFSETS: u16 = 273;
const TAG_SAMPLES_PER_PIXEL: u16 = 277;
const TAG_ROWS_PER_STRIP: u16 = 278;
const TAG_STRIP_BYTE_COUNTS: u16 = 279;
const TAG_SAMPLE_FORMAT: u16 = 339;
const TAG_TILE_WIDTH: u16 = 322;
const TAG_TILE_LENGTH: u16 = 323;
const TAG_TILE_OFFSETS: u16 = 324;
const TAG_TILE_BYTE_COUNTS: u16 = 325;
const TAG_MODEL_PIXEL_SCALE: u16 = 33550;
const TAG_MODEL_TIEPOINT: u16 = 33922;

const TYPE_SHORT: u16 = 3;
const TYPE_LONG: u16 = 4;
const TYPE_DOUBLE: u16 = 12;

/// Sample encodings supported by the reader and writer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TiffSampleKind {
    U8,
    U16,
    F32,
}

impl TiffSampleKind {
    fn bytes(self) -> usize {
        match self {
            TiffSampleKind::U8 => 1,
            TiffSampleKind::U16 => 2,
            TiffSampleKind::F32 => 4,
        }
    }

    fn bits(self) -> u16 {
        (self.bytes() * 8) as u16
    }

    fn sample_format(self) -> u16 {
        match self {
            TiffSampleKind::F32 => 3,
            _ => 1,
        }
    }
}

#[derive(Debug)]
struct Entry {
    tag: u16,
    typ: u16,
    count: usize,
    /// Absolute offset of the value bytes (inline values point into the entry).
    value_at: usize,
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn slice(&self, at: usize, len: usize) -> Result<&'a [u8]> {
        at.checked_add(len)
            .and_then(|end| self.buf.get(at..end))
            .ok_or_else(|| Error::Parse(format!("read of {len} bytes at {at} is past end of file")))
    }

    fn u16(&self, at: usize) -> Result<u16> {
        let b = self.slice(at, 2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&self, at: usize) -> Result<u32> {
        let b = self.slice(at, 4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f64(&self, at: usize) -> Result<f64> {
        let b = self.slice(at, 8)?;
        Ok(f64::from_le_bytes(b.try_into().expect("8 bytes")))
    }
}

fn type_size(typ: u16) -> Option<usize> {
    match typ {
        1 | 2 | 6 | 7 => Some(1),
        3 | 8 => Some(2),
        4 | 9 | 11 => Some(4),
        5 | 10 | 12 => Some(8),
        _ => None,
    }
}

impl Entry {
    fn values(&self, rd: &Reader) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.count);
        for i in 0..self.count {
            let v = match self.typ {
                1 => rd.slice(self.value_at + i, 1)?[0] as f64,
                TYPE_SHORT => rd.u16(self.value_at + 2 * i)? as f64,
                TYPE_LONG => rd.u32(self.value_at + 4 * i)? as f64,
                TYPE_DOUBLE => rd.f64(self.value_at + 8 * i)?,
                t => {
                    return Err(Error::Parse(format!(
                        "tag {} has unexpected field type {t}",
                        self.tag
                    )))
                }
            };
            out.push(v);
        }
        Ok(out)
    }

    fn single(&self, rd: &Reader) -> Result<u64> {
        match self.values(rd)?.as_slice() {
            [v] => Ok(*v as u64),
            vs => Err(Error::Parse(format!(
                "tag {} expects one value, found {}",
                self.tag,
                vs.len()
            ))),
        }
    }
}

struct Header {
    width: usize,
    height: usize,
    kind: TiffSampleKind,
    rows_per_strip: usize,
    strip_offsets: Vec<usize>,
    strip_byte_counts: Vec<usize>,
    geo: GeoTransform,
}

fn parse_header(buf: &[u8]) -> Result<Header> {
    if buf.len() < 8 {
        return Err(Error::Parse("file shorter than a TIFF header".into()));
    }
    match &buf[0..2] {
        b"II" => {}
        b"MM" => return Err(Error::UnsupportedFormat("big-endian TIFF".into())),
        m => return Err(Error::Parse(format!("bad byte-order mark {m:?}"))),
    }
    let rd = Reader { buf };
    match rd.u16(2)? {
        42 => {}
        43 => return Err(Error::UnsupportedFormat("BigTIFF".into())),
        v => return Err(Error::Parse(format!("bad TIFF magic number {v}"))),
    }
    let ifd = rd.u32(4)? as usize;
    let n = rd.u16(ifd)? as usize;
    let mut entries = Vec::with_capacity(n);
    for i in 0..n {
        let at = ifd + 2 + 12 * i;
        let tag = rd.u16(at)?;
        let typ = rd.u16(at + 2)?;
        let count = rd.u32(at + 4)? as usize;
        let size = type_size(typ)
            .ok_or_else(|| Error::Parse(format!("tag {tag} has unknown field type {typ}")))?;
        let value_at = if size * count <= 4 {
            at + 8
        } else {
            rd.u32(at + 8)? as usize
        };
        rd.slice(value_at, size * count)?;
        entries.push(Entry {
            tag,
            typ,
            count,
            value_at,
        });
    }
    let find = |tag: u16| entries.iter().find(|e| e.tag == tag);
    let required = |tag: u16, name: &str| {
        find(tag).ok_or_else(|| Error::Parse(format!("missing required tag {tag} ({name})")))
    };

    for tag in [TAG_TILE_WIDTH, TAG_TILE_LENGTH, TAG_TILE_OFFSETS, TAG_TILE_BYTE_COUNTS] {
        if find(tag).is_some() {
            return Err(Error::UnsupportedFormat("tiled TIFF layout".into()));
        }
    }
    if let Some(e) = find(TAG_COMPRESSION) {
        let c = e.single(&rd)?;
        if c != 1 {
            return Err(Error::UnsupportedFormat(format!("compression scheme {c}")));
        }
    }
    if let Some(e) = find(TAG_SAMPLES_PER_PIXEL) {
        let s = e.single(&rd)?;
        if s != 1 {
            return Err(Error::UnsupportedFormat(format!("{s} samples per pixel")));
        }
    }

    let width = required(TAG_IMAGE_WIDTH, "ImageWidth")?.single(&rd)? as usize;
    let height = required(TAG_IMAGE_LENGTH, "ImageLength")?.single(&rd)? as usize;
    if width == 0 || height == 0 {
        return Err(Error::Parse(format!("empty image {width}x{height}")));
    }
    let bits = match find(TAG_BITS_PER_SAMPLE) {
        Some(e) => e.single(&rd)?,
        None => 1,
    };
    let format = match find(TAG_SAMPLE_FORMAT) {
        Some(e) => e.single(&rd)?,
        None => 1,
    };
    let kind = match (bits, format) {
        (8, 1) => TiffSampleKind::U8,
        (16, 1) => TiffSampleKind::U16,
        (32, 3) => TiffSampleKind::F32,
        (b, f) => {
            return Err(Error::UnsupportedFormat(format!(
                "{b}-bit samples with sample format {f}"
            )))
        }
    };
    let rows_per_strip = match find(TAG_ROWS_PER_STRIP) {
        Some(e) => (e.single(&rd)? as usize).clamp(1, height),
        None => height,
    };
    let strip_offsets: Vec<usize> = required(TAG_STRIP_OFFSETS, "StripOffsets")?
        .values(&rd)?
        .into_iter()
        .map(|v| v as usize)
        .collect();
    let strip_byte_counts: Vec<usize> = required(TAG_STRIP_BYTE_COUNTS, "StripByteCounts")?
        .values(&rd)?
        .into_iter()
        .map(|v| v as usize)
        .collect();
    let strips = height.div_ceil(rows_per_strip);
    if strip_offsets.len() < strips || strip_byte_counts.len() < strips {
        return Err(Error::TruncatedFile(format!(
            "{strips} strips required, header lists {} offsets and {} byte counts",
            strip_offsets.len(),
            strip_byte_counts.len()
        )));
    }

    let geo = match (find(TAG_MODEL_PIXEL_SCALE), find(TAG_MODEL_TIEPOINT)) {
        (Some(scale), Some(tie)) => {
            let s = scale.values(&rd)?;
            let t = tie.values(&rd)?;
            if s.len() < 2 || t.len() < 6 {
                return Err(Error::Parse("short GeoTIFF scale or tiepoint tag".into()));
            }
            // Tiepoint maps raster (i, j) to model (x, y).
            let (i, j, x, y) = (t[0], t[1], t[3], t[4]);
            let (sx, sy) = (s[0], -s[1]);
            GeoTransform::new(x - i * sx, y - j * sy, sx, sy)
                .map_err(|_| Error::Parse(format!("degenerate GeoTIFF pixel scale {s:?}")))?
        }
        _ => GeoTransform::identity(),
    };

    Ok(Header {
        width,
        height,
        kind,
        rows_per_strip,
        strip_offsets,
        strip_byte_counts,
        geo,
    })
}

/// Decode a single-band TIFF held in memory.
pub fn decode_tiff_band(buf: &[u8], band_id: &str) -> Result<Raster> {
    let h = parse_header(buf)?;
    let bps = h.kind.bytes();
    let mut samples = Vec::with_capacity(h.width * h.height);
    for (s, (&off, &count)) in h.strip_offsets.iter().zip(&h.strip_byte_counts).enumerate() {
        let first_row = s * h.rows_per_strip;
        if first_row >= h.height {
            break;
        }
        let rows = h.rows_per_strip.min(h.height - first_row);
        let need = rows * h.width * bps;
        if count < need {
            return Err(Error::TruncatedFile(format!(
                "strip {s} holds {count} bytes, {need} needed"
            )));
        }
        let data = off
            .checked_add(need)
            .and_then(|end| buf.get(off..end))
            .ok_or_else(|| {
                Error::TruncatedFile(format!("strip {s} at offset {off} extends past end of file"))
            })?;
        match h.kind {
            TiffSampleKind::U8 => samples.extend(data.iter().map(|&b| b as f32)),
            TiffSampleKind::U16 => samples.extend(
                data.chunks_exact(2)
                    .map(|c| u16::from_le_bytes([c[0], c[1]]) as f32),
            ),
            TiffSampleKind::F32 => samples.extend(
                data.chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])),
            ),
        }
    }
    Raster::new(h.width, h.height, vec![band_id.to_string()], samples, h.geo)
}

/// Read a single-band TIFF; the band id is the file stem.
pub fn load_tiff_band(path: &Path) -> Result<Raster> {
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("band")
        .to_string();
    decode_tiff_band(&buf, &id)
}

/// Dimensions of a TIFF without decoding strips.
pub fn probe_tiff(path: &Path) -> Result<(usize, usize)> {
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let h = parse_header(&buf)?;
    Ok((h.width, h.height))
}

/// Encode a single-band raster as a baseline strip TIFF.
///
/// Integer encodings round and clamp samples to the representable range.
/// GeoTIFF tags are omitted for an identity geotransform.
pub fn encode_tiff_band(r: &Raster, kind: TiffSampleKind) -> Result<Vec<u8>> {
    if r.bands() != 1 {
        return Err(Error::Shape(format!(
            "TIFF export takes one band, raster has {}",
            r.bands()
        )));
    }
    let (w, h) = (r.width(), r.height());
    let row_bytes = w * kind.bytes();
    let rows_per_strip = (8192 / row_bytes).clamp(1, h);
    let strips = h.div_ceil(rows_per_strip);

    let mut data = Vec::with_capacity(row_bytes * h);
    for &v in r.samples() {
        match kind {
            TiffSampleKind::U8 => data.push(v.round().clamp(0.0, u8::MAX as f32) as u8),
            TiffSampleKind::U16 => data.extend_from_slice(
                &(v.round().clamp(0.0, u16::MAX as f32) as u16).to_le_bytes(),
            ),
            TiffSampleKind::F32 => data.extend_from_slice(&v.to_le_bytes()),
        }
    }

    let data_at = 8usize;
    let mut offsets = Vec::with_capacity(strips);
    let mut counts = Vec::with_capacity(strips);
    for s in 0..strips {
        let rows = rows_per_strip.min(h - s * rows_per_strip);
        offsets.push((data_at + s * rows_per_strip * row_bytes) as u32);
        counts.push((rows * row_bytes) as u32);
    }

    let geo = *r.geo();
    let georef = geo != GeoTransform::identity();
    let scale = [geo.pixel_size_x, -geo.pixel_size_y, 0.0];
    let tie = [0.0, 0.0, 0.0, geo.origin_x, geo.origin_y, 0.0];

    // (tag, type, count, payload bytes)
    let mut fields: Vec<(u16, u16, u32, Vec<u8>)> = vec![
        short(TAG_IMAGE_WIDTH, w as u32),
        short(TAG_IMAGE_LENGTH, h as u32),
        short(TAG_BITS_PER_SAMPLE, kind.bits() as u32),
        short(TAG_COMPRESSION, 1),
        short(TAG_PHOTOMETRIC, 1),
        longs(TAG_STRIP_OFFSETS, &offsets),
        short(TAG_SAMPLES_PER_PIXEL, 1),
        short(TAG_ROWS_PER_STRIP, rows_per_strip as u32),
        longs(TAG_STRIP_BYTE_COUNTS, &counts),
        short(TAG_SAMPLE_FORMAT, kind.sample_format() as u32),
    ];
    if georef {
        fields.push(doubles(TAG_MODEL_PIXEL_SCALE, &scale));
        fields.push(doubles(TAG_MODEL_TIEPOINT, &tie));
    }

    let mut ifd_at = data_at + data.len();
    ifd_at += ifd_at % 2;
    let ifd_len = 2 + 12 * fields.len() + 4;
    let mut extra_at = ifd_at + ifd_len;

    let mut out = Vec::with_capacity(extra_at + 128);
    out.extend_from_slice(b"II");
    out.extend_from_slice(&42u16.to_le_bytes());
    out.extend_from_slice(&(ifd_at as u32).to_le_bytes());
    out.extend_from_slice(&data);
    out.resize(ifd_at, 0);
    out.extend_from_slice(&(fields.len() as u16).to_le_bytes());
    let mut extra = Vec::new();
    for (tag, typ, count, payload) in &fields {
        out.extend_from_slice(&tag.to_le_bytes());
        out.extend_from_slice(&typ.to_le_bytes());
        out.extend_from_slice(&count.to_le_bytes());
        if payload.len() <= 4 {
            let mut inline = payload.clone();
            inline.resize(4, 0);
            out.extend_from_slice(&inline);
        } else {
            out.extend_from_slice(&(extra_at as u32).to_le_bytes());
            extra.extend_from_slice(payload);
            extra_at += payload.len();
        }
    }
    out.extend_from_slice(&0u32.to_le_bytes());
    out.extend_from_slice(&extra);
    Ok(out)
}

fn short(tag: u16, v: u32) -> (u16, u16, u32, Vec<u8>) {
    if v <= u16::MAX as u32 {
        (tag, TYPE_SHORT, 1, (v as u16).to_le_bytes().to_vec())
    } else {
        (tag, TYPE_LONG, 1, v.to_le_bytes().to_vec())
    }
}

fn longs(tag: u16, vs: &[u32]) -> (u16, u16, u32, Vec<u8>) {
    (
        tag,
        TYPE_LONG,
        vs.len() as u32,
        vs.iter().flat_map(|v| v.to_le_bytes()).collect(),
    )
}

fn doubles(tag: u16, vs: &[f64]) -> (u16, u16, u32, Vec<u8>) {
    (
        tag,
        TYPE_DOUBLE,
        vs.len() as u32,
        vs.iter().flat_map(|v| v.to_le_bytes()).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Hand-assembled 2x2 uint16 GeoTIFF: samples [0,1,2,3], pixel scale
    /// (10, 10), tiepoint (0,0) -> (500000, 1500000).
    pub(crate) fn fixture_2x2_u16() -> Vec<u8> {
        let mut f = Vec::new();
        f.extend_from_slice(b"II");
        f.extend_from_slice(&42u16.to_le_bytes());
        f.extend_from_slice(&16u32.to_le_bytes()); // IFD offset
        for v in [0u16, 1, 2, 3] {
            f.extend_from_slice(&v.to_le_bytes()); // strip at 8
        }
        assert_eq!(f.len(), 16);
        let entries: [(u16, u16, u32, u32); 12] = [
            (256, 3, 1, 2),
            (257, 3, 1, 2),
            (258, 3, 1, 16),
            (259, 3, 1, 1),
            (262, 3, 1, 1),
            (273, 4, 1, 8),
            (277, 3, 1, 1),
            (278, 3, 1, 2),
            (279, 4, 1, 8),
            (339, 3, 1, 1),
            (33550, 12, 3, 0), // offset patched below
            (33922, 12, 6, 0),
        ];
        let ifd_len = 2 + 12 * entries.len() + 4;
        let scale_at = (16 + ifd_len) as u32;
        let tie_at = scale_at + 24;
        f.extend_from_slice(&(entries.len() as u16).to_le_bytes());
        for (tag, typ, count, value) in entries {
            let value = match tag {
                33550 => scale_at,
                33922 => tie_at,
                _ => value,
            };
            f.extend_from_slice(&tag.to_le_bytes());
            f.extend_from_slice(&typ.to_le_bytes());
            f.extend_from_slice(&count.to_le_bytes());
            f.extend_from_slice(&value.to_le_bytes());
        }
        f.extend_from_slice(&0u32.to_le_bytes());
        for v in [10.0f64, 10.0, 0.0, 0.0, 0.0, 0.0, 500000.0, 1500000.0, 0.0] {
            f.extend_from_slice(&v.to_le_bytes());
        }
        f
    }

    #[test]
    fn decodes_hand_built_fixture() {
        let r = decode_tiff_band(&fixture_2x2_u16(), "B1").unwrap();
        assert_eq!((r.width(), r.height(), r.bands()), (2, 2, 1));
        assert_eq!(r.samples(), &[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(r.geo().pixel_area(), 100.0);
        assert_eq!(r.geo().origin_x, 500000.0);
        assert_eq!(r.geo().origin_y, 1500000.0);
        assert_eq!(r.geo().pixel_size_y, -10.0);
    }

    #[test]
    fn corrupted_magic_is_parse_error() {
        let mut f = fixture_2x2_u16();
        f[2] = 0x99;
        assert!(matches!(decode_tiff_band(&f, "x"), Err(Error::Parse(_))));
        let mut f = fixture_2x2_u16();
        f[0] = b'X';
        assert!(matches!(decode_tiff_band(&f, "x"), Err(Error::Parse(_))));
    }

    #[test]
    fn big_endian_and_bigtiff_are_unsupported() {
        let mut f = fixture_2x2_u16();
        f[0] = b'M';
        f[1] = b'M';
        assert!(matches!(decode_tiff_band(&f, "x"), Err(Error::UnsupportedFormat(_))));
        let mut f = fixture_2x2_u16();
        f[2] = 43;
        assert!(matches!(decode_tiff_band(&f, "x"), Err(Error::UnsupportedFormat(_))));
    }

    fn patch_tag_value(f: &mut [u8], tag: u16, value: u16) {
        let n = u16::from_le_bytes([f[16], f[17]]) as usize;
        for i in 0..n {
            let at = 18 + 12 * i;
            if u16::from_le_bytes([f[at], f[at + 1]]) == tag {
                f[at + 8..at + 10].copy_from_slice(&value.to_le_bytes());
                return;
            }
        }
        panic!("tag {tag} not in fixture");
    }

    #[test]
    fn compressed_is_unsupported() {
        let mut f = fixture_2x2_u16();
        patch_tag_value(&mut f, TAG_COMPRESSION, 5);
        assert!(matches!(decode_tiff_band(&f, "x"), Err(Error::UnsupportedFormat(_))));
    }

    #[test]
    fn tiled_layout_is_unsupported() {
        let mut f = fixture_2x2_u16();
        // Retag RowsPerStrip as TileWidth.
        let at = 18 + 12 * 7;
        f[at..at + 2].copy_from_slice(&TAG_TILE_WIDTH.to_le_bytes());
        assert!(matches!(decode_tiff_band(&f, "x"), Err(Error::UnsupportedFormat(_))));
    }

    #[test]
    fn missing_strip_data_is_truncated() {
        let mut f = fixture_2x2_u16();
        patch_tag_value(&mut f, TAG_STRIP_BYTE_COUNTS, 4);
        assert!(matches!(decode_tiff_band(&f, "x"), Err(Error::TruncatedFile(_))));
        let mut f = fixture_2x2_u16();
        patch_tag_value(&mut f, TAG_STRIP_OFFSETS, 60000);
        assert!(matches!(decode_tiff_band(&f, "x"), Err(Error::TruncatedFile(_))));
    }

    #[test]
    fn short_file_is_parse_error() {
        assert!(matches!(decode_tiff_band(b"II*\0", "x"), Err(Error::Parse(_))));
        let f = fixture_2x2_u16();
        assert!(matches!(decode_tiff_band(&f[..30], "x"), Err(Error::Parse(_))));
    }

    #[test]
    fn encoder_output_decodes_for_every_kind() {
        let geo = GeoTransform::new(300000.0, 4000000.0, 10.0, -10.0).unwrap();
        let (w, h) = (37, 300);
        let samples: Vec<f32> = (0..w * h).map(|i| (i % 251) as f32).collect();
        let r = Raster::new(w, h, vec!["B4".into()], samples, geo).unwrap();
        for kind in [TiffSampleKind::U8, TiffSampleKind::U16, TiffSampleKind::F32] {
            let bytes = encode_tiff_band(&r, kind).unwrap();
            let back = decode_tiff_band(&bytes, "B4").unwrap();
            assert_eq!(back, r, "{kind:?}");
        }
    }

    #[test]
    fn identity_geo_roundtrips_without_geotiff_tags() {
        let r = Raster::new(3, 1, vec!["a".into()], vec![1.5, -2.0, 7.25], GeoTransform::identity())
            .unwrap();
        let back = decode_tiff_band(&encode_tiff_band(&r, TiffSampleKind::F32).unwrap(), "a").unwrap();
        assert_eq!(back, r);
    }
}
