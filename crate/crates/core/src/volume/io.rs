//! Raw volume files: a `<name>.json` header next to a `<name>.raw` payload.
//!
//! Payloads are little-endian and x-fastest. Volumes are `i16le`, masks
//! `u8le`, probability maps `f32le` and superpixel maps `i32le`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{voxel_count, Dims, SegmentationMask, Spacing, Volume3D};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DType {
    #[serde(rename = "i16le")]
    I16,
    #[serde(rename = "u8le")]
    U8,
    #[serde(rename = "f32le")]
    F32,
    #[serde(rename = "i32le")]
    I32,
}

impl DType {
    pub fn size(self) -> usize {
        match self {
            DType::U8 => 1,
            DType::I16 => 2,
            DType::F32 | DType::I32 => 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawHeader {
    pub dims: [usize; 3],
    pub spacing_mm: [f64; 3],
    pub dtype: DType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub superpixel: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
}

impl RawHeader {
    pub fn new(dims: Dims, spacing: Spacing, dtype: DType) -> Self {
        RawHeader {
            dims,
            spacing_mm: spacing.0,
            dtype,
            superpixel: None,
            provenance: None,
        }
    }
}

/// Values clamped into the intensity domain while loading.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub clamped: usize,
}

/// Resolves `foo`, `foo.json` or `foo.raw` into the header/payload pair.
pub fn pair_paths(path: &Path) -> (PathBuf, PathBuf) {
    let base = match path.extension().and_then(|e| e.to_str()) {
        Some("json") | Some("raw") => path.with_extension(""),
        _ => path.to_path_buf(),
    };
    let mut json = base.clone().into_os_string();
    json.push(".json");
    let mut raw = base.into_os_string();
    raw.push(".raw");
    (PathBuf::from(json), PathBuf::from(raw))
}

/// Writes through a sibling temp file and renames into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn write_raw(path: &Path, header: &RawHeader, payload: &[u8]) -> Result<()> {
    let (json, raw) = pair_paths(path);
    let text = serde_json::to_string_pretty(header)
        .map_err(|e| Error::Format(format!("header encode: {e}")))?;
    write_atomic(&raw, payload)?;
    write_atomic(&json, text.as_bytes())
}

/// Reads a header/payload pair and checks the payload length and dtype.
pub fn read_raw(path: &Path, expect: DType) -> Result<(RawHeader, Vec<u8>)> {
    let (json, raw) = pair_paths(path);
    let text = read_file(&json)?;
    let header: RawHeader = serde_json::from_slice(&text).map_err(|e| Error::Header {
        path: json.clone(),
        msg: e.to_string(),
    })?;
    if header.dtype != expect {
        return Err(Error::Header {
            path: json,
            msg: format!("dtype {:?}, expected {:?}", header.dtype, expect),
        });
    }
    if header.dims.contains(&0) {
        return Err(Error::Header {
            path: json,
            msg: "zero dimension".into(),
        });
    }
    Spacing(header.spacing_mm)
        .validate()
        .map_err(|e| Error::Header {
            path: json.clone(),
            msg: e.to_string(),
        })?;
    let payload = read_file(&raw)?;
    let expected = voxel_count(header.dims) * expect.size();
    if payload.len() != expected {
        return Err(Error::PayloadSize {
            expected,
            found: payload.len(),
        });
    }
    Ok((header, payload))
}

pub fn save_volume(v: &Volume3D, path: &Path) -> Result<()> {
    let mut payload = Vec::with_capacity(v.values().len() * 2);
    for &x in v.values() {
        payload.extend_from_slice(&x.to_le_bytes());
    }
    write_raw(
        path,
        &RawHeader::new(v.dims(), v.spacing(), DType::I16),
        &payload,
    )
}

pub fn load_volume_with_report(path: &Path) -> Result<(Volume3D, LoadReport)> {
    let (header, payload) = read_raw(path, DType::I16)?;
    let raw: Vec<i32> = payload
        .chunks_exact(2)
        .map(|c| i16::from_le_bytes([c[0], c[1]]) as i32)
        .collect();
    let (v, clamped) = Volume3D::from_clamped(header.dims, Spacing(header.spacing_mm), &raw)?;
    Ok((v, LoadReport { clamped }))
}

/// Loads a volume, clamping out-of-range intensities (logged as a warning).
pub fn load_volume(path: &Path) -> Result<Volume3D> {
    let (v, report) = load_volume_with_report(path)?;
    if report.clamped > 0 {
        log::warn!(
            "{}: clamped {} voxels into [0, 4095]",
            path.display(),
            report.clamped
        );
    }
    Ok(v)
}

pub fn save_mask(m: &SegmentationMask, path: &Path) -> Result<()> {
    write_raw(
        path,
        &RawHeader::new(m.dims(), m.spacing(), DType::U8),
        m.values(),
    )
}

/// Loads a mask; any nonzero byte reads as foreground.
pub fn load_mask(path: &Path) -> Result<SegmentationMask> {
    let (header, payload) = read_raw(path, DType::U8)?;
    let values = payload.into_iter().map(|b| (b != 0) as u8).collect();
    SegmentationMask::new(header.dims, Spacing(header.spacing_mm), values)
}

pub(crate) fn f32_payload(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub(crate) fn f32_from_payload(payload: &[u8]) -> Vec<f32> {
    payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_pair(dir: &Path, name: &str, dims: [usize; 3], payload: &[u8]) -> PathBuf {
        let base = dir.join(name);
        let header = RawHeader::new(dims, Spacing::default(), DType::I16);
        let (json, raw) = pair_paths(&base);
        fs::write(json, serde_json::to_string(&header).unwrap()).unwrap();
        fs::write(raw, payload).unwrap();
        base
    }

    #[test]
    fn zero_payload_loads_as_zero_volume() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_pair(dir.path(), "z", [4, 4, 2], &[0u8; 64]);
        let v = load_volume(&p).unwrap();
        assert_eq!(v.values().len(), 32);
        assert!(v.values().iter().all(|&x| x == 0));
    }

    #[test]
    fn short_payload_is_size_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_pair(dir.path(), "s", [4, 4, 2], &[0u8; 63]);
        match load_volume(&p) {
            Err(Error::PayloadSize { expected, found }) => {
                assert_eq!((expected, found), (64, 63));
            }
            other => panic!("expected size mismatch, got {other:?}"),
        }
    }

    #[test]
    fn out_of_range_payload_is_clamped_and_counted() {
        let dir = tempfile::tempdir().unwrap();
        let mut payload = Vec::new();
        for v in [-5i16, 10, 5000, 4095] {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        let p = write_pair(dir.path(), "c", [2, 2, 1], &payload);
        let (v, report) = load_volume_with_report(&p).unwrap();
        assert_eq!(v.values(), &[0, 10, 4095, 4095]);
        assert_eq!(report.clamped, 2);
    }

    #[test]
    fn missing_or_corrupt_header() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_volume(&dir.path().join("nope")),
            Err(Error::MissingInput(_))
        ));
        let base = dir.path().join("bad");
        let (json, raw) = pair_paths(&base);
        fs::write(json, "{not json").unwrap();
        fs::write(raw, [0u8; 2]).unwrap();
        assert!(matches!(load_volume(&base), Err(Error::Header { .. })));
    }

    #[test]
    fn single_voxel_mask_has_one_nonzero_byte() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = SegmentationMask::empty([3, 3, 2], Spacing::default());
        m.set_index(7, true);
        let p = dir.path().join("m");
        save_mask(&m, &p).unwrap();
        let bytes = fs::read(pair_paths(&p).1).unwrap();
        assert_eq!(bytes.iter().filter(|&&b| b != 0).count(), 1);

        save_mask(&SegmentationMask::empty([3, 3, 2], Spacing::default()), &p).unwrap();
        let bytes = fs::read(pair_paths(&p).1).unwrap();
        assert!(bytes.iter().all(|&b| b == 0));
        assert_eq!(load_mask(&p).unwrap().count(), 0);
    }

    #[test]
    fn header_field_names() {
        let h = RawHeader::new([1, 2, 3], Spacing([0.5, 0.5, 2.0]), DType::I16);
        let v: serde_json::Value = serde_json::to_value(&h).unwrap();
        assert_eq!(v["dims"], serde_json::json!([1, 2, 3]));
        assert_eq!(v["spacing_mm"], serde_json::json!([0.5, 0.5, 2.0]));
        assert_eq!(v["dtype"], "i16le");
        assert!(v.get("superpixel").is_none());
    }

    #[test]
    fn pair_paths_strip_extension() {
        let (j, r) = pair_paths(Path::new("/a/b.json"));
        assert_eq!(j, PathBuf::from("/a/b.json"));
        assert_eq!(r, PathBuf::from("/a/b.raw"));
        let (j, _) = pair_paths(Path::new("/a/case.001"));
        assert_eq!(j, PathBuf::from("/a/case.001.json"));
    }
}
