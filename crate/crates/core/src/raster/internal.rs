//! Internal exchange format: `<name>.hdr.json` describing the grid plus a raw
//! little-endian band-major sample file next to it.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{GeoTransform, Raster};
use crate::{Error, Result};

const HEADER_SUFFIX: &str = ".hdr.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SampleType {
    #[default]
    F32,
    I32,
}

impl SampleType {
    fn data_suffix(self) -> &'static str {
        match self {
            SampleType::F32 => ".band.f32",
            SampleType::I32 => ".band.i32",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InternalHeader {
    pub width: usize,
    pub height: usize,
    pub bands: usize,
    #[serde(default)]
    pub sample_type: SampleType,
    pub geotransform: GeoTransform,
    pub band_ids: Vec<String>,
}

/// Header and data paths for a raster name. Accepts the bare name, the
/// header path, or the data path.
pub fn internal_paths(path: &Path, sample_type: SampleType) -> (PathBuf, PathBuf) {
    let s = path.to_string_lossy();
    let base = [HEADER_SUFFIX, ".band.f32", ".band.i32"]
        .iter()
        .find_map(|suffix| s.strip_suffix(suffix))
        .unwrap_or(&s)
        .to_string();
    (
        PathBuf::from(format!("{base}{HEADER_SUFFIX}")),
        PathBuf::from(format!("{base}{}", sample_type.data_suffix())),
    )
}

pub fn probe_internal(path: &Path) -> Result<InternalHeader> {
    let (hdr_path, _) = internal_paths(path, SampleType::F32);
    let text = std::fs::read_to_string(&hdr_path).map_err(|e| Error::io(&hdr_path, e))?;
    let hdr: InternalHeader = serde_json::from_str(&text)
        .map_err(|e| Error::Parse(format!("{}: {e}", hdr_path.display())))?;
    if hdr.band_ids.len() != hdr.bands {
        return Err(Error::Parse(format!(
            "{}: {} band ids for {} bands",
            hdr_path.display(),
            hdr.band_ids.len(),
            hdr.bands
        )));
    }
    Ok(hdr)
}

fn write_header(hdr_path: &Path, hdr: &InternalHeader) -> Result<()> {
    let text = serde_json::to_string_pretty(hdr).expect("header serializes");
    std::fs::write(hdr_path, text).map_err(|e| Error::io(hdr_path, e))
}

fn read_payload(path: &Path, hdr: &InternalHeader, sample_type: SampleType) -> Result<Vec<u8>> {
    if hdr.sample_type != sample_type {
        return Err(Error::UnsupportedFormat(format!(
            "{} holds {:?} samples, {:?} requested",
            path.display(),
            hdr.sample_type,
            sample_type
        )));
    }
    let (_, data_path) = internal_paths(path, sample_type);
    let bytes = std::fs::read(&data_path).map_err(|e| Error::io(&data_path, e))?;
    let expected = hdr.bands * hdr.width * hdr.height * 4;
    if bytes.len() != expected {
        return Err(Error::TruncatedFile(format!(
            "{}: {} bytes, header implies {expected}",
            data_path.display(),
            bytes.len()
        )));
    }
    Ok(bytes)
}

pub fn write_internal(path: &Path, r: &Raster) -> Result<()> {
    let (hdr_path, data_path) = internal_paths(path, SampleType::F32);
    let hdr = InternalHeader {
        width: r.width(),
        height: r.height(),
        bands: r.bands(),
        sample_type: SampleType::F32,
        geotransform: *r.geo(),
        band_ids: r.band_ids().to_vec(),
    };
    write_header(&hdr_path, &hdr)?;
    let bytes: Vec<u8> = r.samples().iter().flat_map(|v| v.to_le_bytes()).collect();
    std::fs::write(&data_path, bytes).map_err(|e| Error::io(&data_path, e))
}

pub fn read_internal(path: &Path) -> Result<Raster> {
    let hdr = probe_internal(path)?;
    let bytes = read_payload(path, &hdr, SampleType::F32)?;
    let samples = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Raster::new(hdr.width, hdr.height, hdr.band_ids, samples, hdr.geotransform)
}

/// Single-band integer label grid, e.g. superpixel ids.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelRaster {
    pub width: usize,
    pub height: usize,
    pub geo: GeoTransform,
    pub labels: Vec<i32>,
}

pub fn write_label_raster(path: &Path, r: &LabelRaster) -> Result<()> {
    if r.labels.len() != r.width * r.height {
        return Err(Error::Shape(format!(
            "label raster {}x{} holds {} labels",
            r.width,
            r.height,
            r.labels.len()
        )));
    }
    let (hdr_path, data_path) = internal_paths(path, SampleType::I32);
    let hdr = InternalHeader {
        width: r.width,
        height: r.height,
        bands: 1,
        sample_type: SampleType::I32,
        geotransform: r.geo,
        band_ids: vec!["label".into()],
    };
    write_header(&hdr_path, &hdr)?;
    let bytes: Vec<u8> = r.labels.iter().flat_map(|v| v.to_le_bytes()).collect();
    std::fs::write(&data_path, bytes).map_err(|e| Error::io(&data_path, e))
}

pub fn read_label_raster(path: &Path) -> Result<LabelRaster> {
    let hdr = probe_internal(path)?;
    if hdr.bands != 1 {
        return Err(Error::Shape(format!("label raster has {} bands", hdr.bands)));
    }
    let bytes = read_payload(path, &hdr, SampleType::I32)?;
    let labels = bytes
        .chunks_exact(4)
        .map(|c| i32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(LabelRaster {
        width: hdr.width,
        height: hdr.height,
        geo: hdr.geotransform,
        labels,
    })
}
