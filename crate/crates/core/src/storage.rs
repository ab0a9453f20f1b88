//! On-disk formats: Middlebury `.flo` flow files, 8-bit PNG images and the
//! JSON run manifest.

use std::fs;
use std::path::Path;

use image::{DynamicImage, ImageFormat};
use serde::{Deserialize, Serialize};

use crate::compensation::{CompensationConfig, CompensationReport};
use crate::denseflow::{FlowField, LkConfig};
use crate::error::{Error, Result};
use crate::flowcodec::CodecConfig;
use crate::geometry::Homography;
use crate::imaging::Frame;
use crate::selection::{MotionManifest, PairProxy, Segment, SelectionConfig};
use crate::trace::Trajectory;

/// `202021.25f32` in little-endian, which reads as ASCII "PIEH".
pub const FLO_MAGIC: [u8; 4] = *b"PIEH";
const FLO_HEADER: usize = 12;

pub const MANIFEST_VERSION: &str = "1";

/// Serializes a flow field in the `.flo` layout.
pub fn write_flo(flow: &FlowField) -> Vec<u8> {
    let mut out = Vec::with_capacity(FLO_HEADER + flow.u().len() * 8);
    out.extend_from_slice(&202021.25f32.to_le_bytes());
    out.extend_from_slice(&(flow.width() as i32).to_le_bytes());
    out.extend_from_slice(&(flow.height() as i32).to_le_bytes());
    for (u, v) in flow.u().iter().zip(flow.v()) {
        out.extend_from_slice(&u.to_le_bytes());
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn read_flo(bytes: &[u8]) -> Result<FlowField> {
    if bytes.len() < 4 {
        return Err(Error::Length {
            expected: FLO_HEADER,
            actual: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != FLO_MAGIC {
        return Err(Error::Format(magic));
    }
    if bytes.len() < FLO_HEADER {
        return Err(Error::Length {
            expected: FLO_HEADER,
            actual: bytes.len(),
        });
    }
    let word = |i: usize| i32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let (w, h) = (word(4), word(8));
    if w <= 0 || h <= 0 {
        return Err(Error::InvalidFlow(format!("bad dimensions {w}x{h} in flow header")));
    }
    let n = (w as usize)
        .checked_mul(h as usize)
        .ok_or_else(|| Error::InvalidFlow(format!("dimensions {w}x{h} overflow")))?;
    let expected = FLO_HEADER + n * 8;
    if bytes.len() != expected {
        return Err(Error::Length {
            expected,
            actual: bytes.len(),
        });
    }
    let (mut u, mut v) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for px in bytes[FLO_HEADER..].chunks_exact(8) {
        u.push(f32::from_le_bytes(px[..4].try_into().unwrap()));
        v.push(f32::from_le_bytes(px[4..].try_into().unwrap()));
    }
    FlowField::new(w as usize, h as usize, u, v)
}

pub fn load_flo(path: &Path) -> Result<FlowField> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_flo(&bytes)
}

pub fn save_flo(flow: &FlowField, path: &Path) -> Result<()> {
    fs::write(path, write_flo(flow)).map_err(|e| Error::io(path, e))
}

/// Reads an 8-bit grayscale or RGB image; alpha is dropped.
pub fn read_image(path: &Path) -> Result<Frame> {
    let decode_err = |message: String| Error::Decode {
        path: path.to_path_buf(),
        message,
    };
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let img = image::load_from_memory(&bytes).map_err(|e| decode_err(e.to_string()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (channels, raw) = match img {
        DynamicImage::ImageLuma8(b) => (1, b.into_raw()),
        DynamicImage::ImageLumaA8(b) => (1, b.into_raw().chunks_exact(2).map(|p| p[0]).collect()),
        DynamicImage::ImageRgb8(b) => (3, b.into_raw()),
        DynamicImage::ImageRgba8(b) => (
            3,
            b.into_raw().chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect(),
        ),
        other => return Err(decode_err(format!("unsupported pixel format {:?}", other.color()))),
    };
    let pixels = raw.into_iter().map(|b| b as f32 / 255.0).collect();
    Frame::new(w, h, channels, pixels).map_err(|e| decode_err(e.to_string()))
}

pub fn quantize(value: f32) -> u8 {
    (value as f64 * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Writes a PNG, quantizing each channel with `round(v * 255)`.
pub fn write_image(frame: &Frame, path: &Path) -> Result<()> {
    let color = match frame.channels() {
        1 => image::ExtendedColorType::L8,
        _ => image::ExtendedColorType::Rgb8,
    };
    let bytes: Vec<u8> = frame.pixels().iter().map(|&p| quantize(p)).collect();
    image::save_buffer_with_format(
        path,
        &bytes,
        frame.width() as u32,
        frame.height() as u32,
        color,
        ImageFormat::Png,
    )
    .map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Decode {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    })
}

/// Effective parameters of a run, echoed so defaults can be audited.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub selection: SelectionConfig,
    pub lk_flow: LkConfig,
    pub compensation: CompensationConfig,
    pub codec: CodecConfig,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub pair: usize,
    /// Flow file name relative to its output directory.
    pub file: String,
    pub valid: bool,
    pub inlier_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub homography: Option<Homography>,
}

impl PairReport {
    pub fn new(pair: usize, file: impl Into<String>, report: &CompensationReport) -> Self {
        Self {
            pair,
            file: file.into(),
            valid: report.valid,
            inlier_count: report.inlier_count,
            homography: report.homography,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestDocument {
    pub version: String,
    pub command: String,
    pub source: String,
    pub frame_count: usize,
    pub config: ConfigEcho,
    pub pair_proxies: Vec<PairProxy>,
    pub selected: Vec<usize>,
    pub segments: Vec<Segment>,
    pub compensation: Vec<PairReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectories: Option<Vec<Trajectory>>,
}

impl ManifestDocument {
    pub fn new(command: impl Into<String>, source: impl Into<String>, frame_count: usize, config: ConfigEcho) -> Self {
        Self {
            version: MANIFEST_VERSION.to_string(),
            command: command.into(),
            source: source.into(),
            frame_count,
            config,
            pair_proxies: Vec::new(),
            selected: Vec::new(),
            segments: Vec::new(),
            compensation: Vec::new(),
            trajectories: None,
        }
    }

    pub fn with_selection(mut self, m: MotionManifest) -> Self {
        self.pair_proxies = m.pair_proxies;
        self.selected = m.selected;
        self.segments = m.segments;
        self
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        match value.get("version") {
            None => return Err(Error::Compatibility("manifest has no version field".into())),
            Some(serde_json::Value::String(v)) if v == MANIFEST_VERSION => {}
            Some(other) => {
                return Err(Error::Compatibility(format!(
                    "unsupported manifest version {other}, expected \"{MANIFEST_VERSION}\""
                )))
            }
        }
        // Parse from text rather than `value` so floats keep their exact bits.
        Ok(serde_json::from_str(text)?)
    }
}

pub fn write_manifest(m: &ManifestDocument, path: &Path) -> Result<()> {
    fs::write(path, m.to_json()?).map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<ManifestDocument> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ManifestDocument::from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn magic_spells_pieh() {
        assert_eq!(202021.25f32.to_le_bytes(), FLO_MAGIC);
    }

    #[test]
    fn smallest_flo() {
        let f = FlowField::new(1, 1, vec![1.5], vec![-2.0]).unwrap();
        let b = write_flo(&f);
        let mut expected = b"PIEH".to_vec();
        for w in [1i32.to_le_bytes(), 1i32.to_le_bytes(), 1.5f32.to_le_bytes(), (-2.0f32).to_le_bytes()] {
            expected.extend_from_slice(&w);
        }
        assert_eq!(b, expected);
        assert_eq!(read_flo(&b).unwrap(), f);
    }

    #[test]
    fn zero_flow_size() {
        let b = write_flo(&FlowField::zeros(2, 2).unwrap());
        assert_eq!(b.len(), 44);
        assert!(b[12..].iter().all(|&x| x == 0));
    }

    #[test]
    fn flo_errors() {
        let mut b = write_flo(&FlowField::zeros(2, 2).unwrap());
        let truncated = &b[..40];
        match read_flo(truncated) {
            Err(Error::Length { expected, actual }) => assert_eq!((expected, actual), (44, 40)),
            other => panic!("{other:?}"),
        }
        assert!(matches!(read_flo(&b[..7]), Err(Error::Length { .. })));
        b[..4].copy_from_slice(&0.0f32.to_le_bytes());
        assert!(matches!(read_flo(&b), Err(Error::Format([0, 0, 0, 0]))));
    }

    #[test]
    fn quantization_boundary() {
        assert_eq!(quantize(0.50392), 128);
        assert_eq!(quantize(1.0), 255);
        assert_eq!(quantize(0.0), 0);
        assert_eq!(quantize(1.0 / 510.0 + 1e-6), 1);
    }

    #[test]
    fn image_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.png");
        let f = Frame::new(3, 2, 3, (0..18).map(|i| (i * 13) as f32 / 255.0).collect()).unwrap();
        write_image(&f, &path).unwrap();
        assert_eq!(read_image(&path).unwrap(), f);

        let g = Frame::new(2, 1, 1, vec![0.50392, 1.0]).unwrap();
        write_image(&g, &path).unwrap();
        assert_eq!(read_image(&path).unwrap().pixels(), &[128.0 / 255.0, 1.0]);
    }

    #[test]
    fn corrupt_image_is_decode_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.png");
        fs::write(&path, b"not an image").unwrap();
        assert!(matches!(read_image(&path), Err(Error::Decode { .. })));
    }

    #[test]
    fn manifest_examples() {
        let m = ManifestDocument::new("select", "in", 0, ConfigEcho::default());
        assert_eq!(ManifestDocument::from_json(&m.to_json().unwrap()).unwrap(), m);

        let mut m = ManifestDocument::new("select", "in", 9, ConfigEcho::default());
        m.segments = vec![Segment { start: 3, end: 8 }];
        let text = m.to_json().unwrap();
        assert!(text.contains("[\n      3,\n      8\n    ]"));
        assert_eq!(ManifestDocument::from_json(&text).unwrap().segments, m.segments);
    }

    #[test]
    fn manifest_version_checks() {
        let m = ManifestDocument::new("select", "in", 0, ConfigEcho::default());
        let mut v: serde_json::Value = serde_json::from_str(&m.to_json().unwrap()).unwrap();
        v.as_object_mut().unwrap().remove("version");
        assert!(matches!(ManifestDocument::from_json(&v.to_string()), Err(Error::Compatibility(_))));
        v["version"] = "2".into();
        assert!(matches!(ManifestDocument::from_json(&v.to_string()), Err(Error::Compatibility(_))));
        assert!(matches!(ManifestDocument::from_json("{"), Err(Error::Manifest(_))));
    }
}
