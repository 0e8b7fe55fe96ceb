//! `MILF1` per-slide feature files.
//!
//! Layout: the 5 magic bytes `MILF1`, u32 LE instance count N, u32 LE feature
//! width, N·width LE f64 features (row-major), then N pairs of u32 LE patch
//! `(col, row)` coordinates.

use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Tensor2;

pub const FEATURE_MAGIC: &[u8; 5] = b"MILF1";
pub const FEATURE_HEADER_LEN: usize = 13;

/// One slide's instance features and patch coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureBag {
    pub slide_id: String,
    pub features: Tensor2,
    pub coords: Vec<(u32, u32)>,
    pub label: usize,
}

impl FeatureBag {
    pub fn new(slide_id: impl Into<String>, features: Tensor2, coords: Vec<(u32, u32)>, label: usize) -> Result<Self> {
        if features.rows() == 0 {
            return Err(Error::EmptyBag("feature bag"));
        }
        if coords.len() != features.rows() {
            return Err(Error::Length {
                what: "patch coordinates",
                left: coords.len(),
                right: features.rows(),
            });
        }
        Ok(Self {
            slide_id: slide_id.into(),
            features,
            coords,
            label,
        })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }
}

pub fn encode_features(bag: &FeatureBag) -> Vec<u8> {
    let mut out = Vec::with_capacity(FEATURE_HEADER_LEN + bag.features.len() * 8 + bag.coords.len() * 8);
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&(bag.len() as u32).to_le_bytes());
    out.extend_from_slice(&(bag.dim() as u32).to_le_bytes());
    for v in bag.features.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &(c, r) in &bag.coords {
        out.extend_from_slice(&c.to_le_bytes());
        out.extend_from_slice(&r.to_le_bytes());
    }
    out
}

fn format_err(offset: usize, msg: impl Into<String>) -> Error {
    Error::Format {
        path: None,
        offset,
        msg: msg.into(),
    }
}

/// Decodes features and coordinates; `expected_dim` guards against manifest mismatches.
pub fn decode_features(bytes: &[u8], expected_dim: Option<usize>) -> Result<(Tensor2, Vec<(u32, u32)>)> {
    if bytes.len() < FEATURE_MAGIC.len() || &bytes[..5] != FEATURE_MAGIC {
        return Err(format_err(0, "bad magic, expected MILF1"));
    }
    if bytes.len() < FEATURE_HEADER_LEN {
        return Err(format_err(bytes.len(), "truncated header"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let (n, dim) = (u32_at(5), u32_at(9));
    if let Some(expected) = expected_dim {
        if dim != expected {
            return Err(format_err(9, format!("feature width {dim}, manifest says {expected}")));
        }
    }
    let need = FEATURE_HEADER_LEN + n * dim * 8 + n * 8;
    if bytes.len() != need {
        return Err(format_err(
            bytes.len().min(need),
            format!("expected {need} bytes for {n}x{dim}, found {}", bytes.len()),
        ));
    }
    let feat_end = FEATURE_HEADER_LEN + n * dim * 8;
    let data = bytes[FEATURE_HEADER_LEN..feat_end]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let coords = bytes[feat_end..]
        .chunks_exact(8)
        .map(|c| {
            (
                u32::from_le_bytes(c[..4].try_into().unwrap()),
                u32::from_le_bytes(c[4..].try_into().unwrap()),
            )
        })
        .collect();
    Ok((Tensor2::from_vec(n, dim, data)?, coords))
}

pub fn write_feature_file(bag: &FeatureBag, path: &Path) -> Result<()> {
    std::fs::write(path, encode_features(bag)).map_err(|e| Error::io(path, e))
}

/// Reads a feature file; identity and label come from the caller (usually the manifest).
pub fn read_feature_file(
    path: &Path,
    slide_id: &str,
    label: usize,
    expected_dim: Option<usize>,
) -> Result<FeatureBag> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let (features, coords) = decode_features(&bytes, expected_dim).map_err(|e| match e {
        Error::Format { offset, msg, .. } => Error::Format {
            path: Some(path.to_path_buf()),
            offset,
            msg,
        },
        other => other,
    })?;
    FeatureBag::new(slide_id, features, coords, label)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> FeatureBag {
        FeatureBag::new("s", Tensor2::row_vector(&[1.0, -2.5, 0.0, 3.25]), vec![(7, 9)], 1).unwrap()
    }

    #[test]
    fn file_size_arithmetic() {
        // 13-byte header + 4 f64 features + one (col,row) u32 pair.
        assert_eq!(encode_features(&tiny()).len(), 13 + 4 * 8 + 2 * 4);
    }

    #[test]
    fn roundtrip_bytes() {
        let bytes = encode_features(&tiny());
        let (f, c) = decode_features(&bytes, Some(4)).unwrap();
        let back = FeatureBag::new("s", f, c, 1).unwrap();
        assert_eq!(back, tiny());
        assert_eq!(encode_features(&back), bytes);
    }

    #[test]
    fn corrupt_magic_reports_offset_zero() {
        let mut bytes = encode_features(&tiny());
        bytes[1] = b'?';
        assert!(matches!(decode_features(&bytes, None), Err(Error::Format { offset: 0, .. })));
    }

    #[test]
    fn truncation_and_dim_mismatch() {
        let bytes = encode_features(&tiny());
        assert!(decode_features(&bytes[..bytes.len() - 1], None).is_err());
        assert!(decode_features(&bytes[..8], None).is_err());
        assert!(matches!(decode_features(&bytes, Some(5)), Err(Error::Format { offset: 9, .. })));
    }

    #[test]
    fn bag_invariants() {
        assert!(FeatureBag::new("e", Tensor2::zeros(0, 3), vec![], 0).is_err());
        assert!(FeatureBag::new("e", Tensor2::zeros(2, 3), vec![(0, 0)], 0).is_err());
    }
}
