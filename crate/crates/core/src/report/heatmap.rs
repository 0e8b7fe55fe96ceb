use std::path::{Path, PathBuf};

use crate::annotations::PatchGrid;
use crate::error::{Error, Result};

/// Gray level for grid cells that hold no patch.
pub const BACKGROUND: u8 = 0;

/// Maps scores onto 0..=255 after min-max scaling; a constant vector maps to 128.
pub fn quantize_scores(scores: &[f64]) -> Vec<u8> {
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return vec![128; scores.len()];
    }
    scores
        .iter()
        .map(|&s| ((s - lo) / (hi - lo) * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect()
}

/// An 8-bit grayscale image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl Pgm {
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let bad = |offset: usize, msg: &str| Error::Format {
            path: None,
            offset,
            msg: msg.to_string(),
        };
        let mut pos = 0;
        let mut fields = Vec::with_capacity(4);
        while fields.len() < 4 {
            while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
                if bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                } else {
                    pos += 1;
                }
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(bad(pos, "truncated PGM header"));
            }
            fields.push((start, std::str::from_utf8(&bytes[start..pos]).unwrap_or("")));
        }
        if fields[0].1 != "P5" {
            return Err(bad(0, "expected P5 magic"));
        }
        let num = |(off, s): (usize, &str)| s.parse::<usize>().map_err(|_| bad(off, "bad PGM header number"));
        let width = num(fields[1])?;
        let height = num(fields[2])?;
        if num(fields[3])? != 255 {
            return Err(bad(fields[3].0, "only maxval 255 is supported"));
        }
        pos += 1;
        let n = width * height;
        if bytes.len() < pos + n {
            return Err(bad(bytes.len(), "truncated PGM raster"));
        }
        Ok(Self {
            width,
            height,
            pixels: bytes[pos..pos + n].to_vec(),
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes).map_err(|e| match e {
            Error::Format { offset, msg, .. } => Error::Format {
                path: Some(path.to_path_buf()),
                offset,
                msg,
            },
            other => other,
        })
    }
}

/// Paints one `block`×`block` square per patch at its grid position.
pub fn render_grid(levels: &[u8], grid: &PatchGrid, block: usize) -> Result<Pgm> {
    if levels.len() != grid.len() {
        return Err(Error::Length {
            what: "heatmap scores",
            left: levels.len(),
            right: grid.len(),
        });
    }
    if block == 0 {
        return Err(Error::config("heatmap block size must be positive"));
    }
    let cols = grid.grid_cols() as usize;
    let rows = grid.grid_rows() as usize;
    let width = cols * block;
    let mut pixels = vec![BACKGROUND; width * rows * block];
    for (&(c, r), &v) in grid.coords.iter().zip(levels) {
        let (c, r) = (c as usize, r as usize);
        if c >= cols || r >= rows {
            return Err(Error::Geometry(format!("patch ({c},{r}) lies outside a {cols}x{rows} grid")));
        }
        for y in r * block..(r + 1) * block {
            pixels[y * width + c * block..y * width + (c + 1) * block].fill(v);
        }
    }
    Ok(Pgm {
        width,
        height: rows * block,
        pixels,
    })
}

/// `foo.pgm` → `foo_gt.pgm`.
pub fn ground_truth_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("heatmap");
    path.with_file_name(format!("{stem}_gt.pgm"))
}

/// Writes the score heatmap to `path` and, when labels are given, a binary
/// ground-truth image beside it. Returns the paths written.
pub fn export_heatmap(
    scores: &[f64],
    grid: &PatchGrid,
    labels: Option<&[bool]>,
    path: &Path,
    block: usize,
) -> Result<Vec<PathBuf>> {
    let img = render_grid(&quantize_scores(scores), grid, block)?;
    img.write(path)?;
    let mut written = vec![path.to_path_buf()];
    if let Some(labels) = labels {
        let levels: Vec<u8> = labels.iter().map(|&l| if l { 255 } else { 0 }).collect();
        let gt = render_grid(&levels, grid, block)?;
        let gt_path = ground_truth_path(path);
        gt.write(&gt_path)?;
        written.push(gt_path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(cols: u32, rows: u32) -> PatchGrid {
        PatchGrid {
            patch_size: 10,
            width: cols * 10,
            height: rows * 10,
            coords: (0..rows).flat_map(|r| (0..cols).map(move |c| (c, r))).collect(),
        }
    }

    #[test]
    fn linear_mapping() {
        let img = render_grid(&quantize_scores(&[0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0]), &grid(2, 2), 1).unwrap();
        assert_eq!(img.pixels, vec![0, 85, 170, 255]);
    }

    #[test]
    fn constant_is_mid_gray() {
        assert_eq!(quantize_scores(&[0.4; 5]), vec![128; 5]);
    }

    #[test]
    fn one_hot_block() {
        let img = render_grid(&quantize_scores(&[0.0, 0.0, 1.0, 0.0]), &grid(2, 2), 3).unwrap();
        assert_eq!((img.width, img.height), (6, 6));
        for y in 0..6 {
            for x in 0..6 {
                assert_eq!(img.get(x, y), if y >= 3 && x < 3 { 255 } else { 0 });
            }
        }
    }

    #[test]
    fn length_mismatch() {
        assert!(render_grid(&[1, 2, 3], &grid(2, 2), 1).is_err());
    }

    #[test]
    fn file_round_trip_with_ground_truth() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.pgm");
        let scores = [0.1, 0.9, 0.5, 0.3, 0.7, 0.2];
        let written = export_heatmap(&scores, &grid(3, 2), Some(&[true, false, true, false, false, true]), &p, 2).unwrap();
        assert_eq!(written[1], dir.path().join("s_gt.pgm"));
        let img = Pgm::read(&p).unwrap();
        let q = quantize_scores(&scores);
        for (i, (c, r)) in grid(3, 2).coords.iter().enumerate() {
            assert_eq!(img.get(*c as usize * 2 + 1, *r as usize * 2), q[i]);
        }
        assert_eq!(Pgm::read(&written[1]).unwrap().get(0, 0), 255);
    }

    #[test]
    fn bad_magic() {
        assert!(matches!(Pgm::decode(b"P2\n1 1\n255\n\0"), Err(Error::Format { offset: 0, .. })));
        assert!(Pgm::decode(b"P5\n2 2\n255\n\0").is_err());
    }
}
