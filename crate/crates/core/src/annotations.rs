//! Patch grids and polygon-based patch labels.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A closed polygon in slide pixel coordinates (last vertex connects to the first).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    #[serde(rename = "class", default)]
    pub class_tag: String,
    pub vertices: Vec<[f64; 2]>,
}

impl Polygon {
    pub fn new(class_tag: impl Into<String>, vertices: Vec<[f64; 2]>) -> Result<Self> {
        let p = Self {
            class_tag: class_tag.into(),
            vertices,
        };
        p.validate()?;
        Ok(p)
    }

    /// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
    pub fn rect(class_tag: impl Into<String>, x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self {
            class_tag: class_tag.into(),
            vertices: vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vertices.len() < 3 {
            return Err(Error::Geometry(format!(
                "polygon needs at least 3 vertices, got {}",
                self.vertices.len()
            )));
        }
        Ok(())
    }

    fn bounds(&self) -> (f64, f64, f64, f64) {
        self.vertices.iter().fold(
            (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
            |(x0, y0, x1, y1), [x, y]| (x0.min(*x), y0.min(*y), x1.max(*x), y1.max(*y)),
        )
    }
}

fn on_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> bool {
    let cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
    if cross.abs() > 1e-9 * (1.0 + (b[0] - a[0]).abs() + (b[1] - a[1]).abs()) {
        return false;
    }
    p[0] >= a[0].min(b[0]) && p[0] <= a[0].max(b[0]) && p[1] >= a[1].min(b[1]) && p[1] <= a[1].max(b[1])
}

/// Even-odd ray casting; points on an edge count as inside.
pub fn point_in_polygon(point: [f64; 2], polygon: &Polygon) -> Result<bool> {
    polygon.validate()?;
    let v = &polygon.vertices;
    let [px, py] = point;
    let mut inside = false;
    let mut j = v.len() - 1;
    for i in 0..v.len() {
        let (a, b) = (v[i], v[j]);
        if on_segment(point, a, b) {
            return Ok(true);
        }
        if (a[1] > py) != (b[1] > py) {
            let x_cross = a[0] + (py - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if px < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    Ok(inside)
}

/// Retained patches of a slide, on an origin-aligned grid with stride `patch_size`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchGrid {
    pub patch_size: u32,
    pub width: u32,
    pub height: u32,
    /// `(col, row)` grid indices of the retained patches.
    pub coords: Vec<(u32, u32)>,
}

impl PatchGrid {
    pub fn grid_cols(&self) -> u32 {
        self.width / self.patch_size
    }

    pub fn grid_rows(&self) -> u32 {
        self.height / self.patch_size
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Pixel-space center of patch `i`.
    pub fn center(&self, i: usize) -> [f64; 2] {
        let (c, r) = self.coords[i];
        let s = self.patch_size as f64;
        [(c as f64 + 0.5) * s, (r as f64 + 0.5) * s]
    }

    pub fn validate(&self) -> Result<()> {
        let (cols, rows) = (self.grid_cols(), self.grid_rows());
        for &(c, r) in &self.coords {
            if c >= cols || r >= rows {
                return Err(Error::Geometry(format!(
                    "patch ({c}, {r}) outside a {cols}x{rows} grid"
                )));
            }
        }
        Ok(())
    }
}

/// Full grid of non-overlapping patches; partial patches at the right and bottom edges are dropped.
pub fn tessellate(width: u32, height: u32, patch_size: u32) -> Result<PatchGrid> {
    if width == 0 || height == 0 || patch_size == 0 {
        return Err(Error::Geometry("slide and patch dimensions must be positive".into()));
    }
    if patch_size > width || patch_size > height {
        return Err(Error::Geometry(format!(
            "patch size {patch_size} exceeds slide {width}x{height}"
        )));
    }
    let (cols, rows) = (width / patch_size, height / patch_size);
    let coords = (0..rows).flat_map(|r| (0..cols).map(move |c| (c, r))).collect();
    Ok(PatchGrid {
        patch_size,
        width,
        height,
        coords,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase")]
pub enum LabelRule {
    /// Label 1 iff the patch center lies in some region.
    #[default]
    Center,
    /// Label 1 iff the covered area fraction, sampled on a 16×16 lattice, is at least `tau`.
    Overlap { tau: f64 },
}

impl std::fmt::Display for LabelRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LabelRule::Center => f.write_str("center"),
            LabelRule::Overlap { tau } => write!(f, "overlap:{tau}"),
        }
    }
}

impl std::str::FromStr for LabelRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "center" {
            return Ok(LabelRule::Center);
        }
        if let Some(t) = s.strip_prefix("overlap:") {
            let tau: f64 = t
                .parse()
                .map_err(|_| Error::config(format!("bad overlap threshold in {s:?}")))?;
            return Ok(LabelRule::Overlap { tau });
        }
        Err(Error::config(format!(
            "unknown label rule {s:?} (expected center or overlap:<tau>)"
        )))
    }
}

const OVERLAP_SAMPLES: usize = 16;

fn inside_any(point: [f64; 2], regions: &[Polygon]) -> Result<bool> {
    for p in regions {
        if point_in_polygon(point, p)? {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Binary label for every retained patch of `grid`.
pub fn assign_patch_labels(grid: &PatchGrid, regions: &[Polygon], rule: LabelRule) -> Result<Vec<bool>> {
    let (w, h) = (grid.width as f64, grid.height as f64);
    for p in regions {
        p.validate()?;
        let (x0, y0, x1, y1) = p.bounds();
        if x1 < 0.0 || y1 < 0.0 || x0 > w || y0 > h {
            return Err(Error::Geometry(format!(
                "region {:?} lies entirely outside the {w}x{h} slide; coordinate frames differ?",
                p.class_tag
            )));
        }
    }
    let s = grid.patch_size as f64;
    (0..grid.len())
        .map(|i| match rule {
            LabelRule::Center => inside_any(grid.center(i), regions),
            LabelRule::Overlap { tau } => {
                let (c, r) = grid.coords[i];
                let (ox, oy) = (c as f64 * s, r as f64 * s);
                let step = s / OVERLAP_SAMPLES as f64;
                let mut hits = 0;
                for a in 0..OVERLAP_SAMPLES {
                    for b in 0..OVERLAP_SAMPLES {
                        let pt = [ox + (a as f64 + 0.5) * step, oy + (b as f64 + 0.5) * step];
                        if inside_any(pt, regions)? {
                            hits += 1;
                        }
                    }
                }
                Ok(hits as f64 / (OVERLAP_SAMPLES * OVERLAP_SAMPLES) as f64 >= tau)
            }
        })
        .collect()
}

/// Per-slide annotation document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotationFile {
    pub slide_id: String,
    pub width: u32,
    pub height: u32,
    pub regions: Vec<Polygon>,
}

impl AnnotationFile {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square() -> Polygon {
        Polygon::rect("tumor", 0.0, 0.0, 1.0, 1.0)
    }

    /// "C" shape opening to the right: outer 0..3 square minus the notch (1..3) × (1..2).
    fn c_shape() -> Polygon {
        Polygon::new(
            "tumor",
            vec![
                [0.0, 0.0],
                [3.0, 0.0],
                [3.0, 1.0],
                [1.0, 1.0],
                [1.0, 2.0],
                [3.0, 2.0],
                [3.0, 3.0],
                [0.0, 3.0],
            ],
        )
        .unwrap()
    }

    #[test]
    fn tessellate_counts() {
        assert_eq!(tessellate(512, 512, 256).unwrap().len(), 4);
        let g = tessellate(600, 300, 256).unwrap();
        assert_eq!(g.coords, vec![(0, 0), (1, 0)]);
        let g = tessellate(256, 256, 256).unwrap();
        assert_eq!(g.coords, vec![(0, 0)]);
        assert!(tessellate(100, 300, 256).is_err());
    }

    #[test]
    fn square_membership() {
        assert!(point_in_polygon([0.5, 0.5], &unit_square()).unwrap());
        assert!(!point_in_polygon([10.0, 10.0], &unit_square()).unwrap());
        assert!(point_in_polygon([1.0, 0.5], &unit_square()).unwrap());
        assert!(point_in_polygon([0.0, 0.0], &unit_square()).unwrap());
    }

    #[test]
    fn degenerate_polygon() {
        let p = Polygon {
            class_tag: String::new(),
            vertices: vec![[0.0, 0.0], [1.0, 1.0]],
        };
        assert!(matches!(point_in_polygon([0.0, 0.0], &p), Err(Error::Geometry(_))));
    }

    #[test]
    fn concave_notch_matches_rasterization() {
        let c = c_shape();
        assert!(!point_in_polygon([2.0, 1.5], &c).unwrap());
        assert!(point_in_polygon([0.5, 1.5], &c).unwrap());
        // Dense grid against the analytic description of the region.
        let n = 60;
        for i in 0..n {
            for j in 0..n {
                let x = (i as f64 + 0.37) * 3.0 / n as f64;
                let y = (j as f64 + 0.61) * 3.0 / n as f64;
                let expected = !(x > 1.0 && y > 1.0 && y < 2.0);
                assert_eq!(point_in_polygon([x, y], &c).unwrap(), expected, "({x}, {y})");
            }
        }
    }

    #[test]
    fn labels_basic() {
        let g = tessellate(512, 256, 256).unwrap();
        let all = Polygon::rect("t", 0.0, 0.0, 512.0, 256.0);
        assert_eq!(assign_patch_labels(&g, &[all], LabelRule::Center).unwrap(), vec![true, true]);
        assert_eq!(assign_patch_labels(&g, &[], LabelRule::Center).unwrap(), vec![false, false]);
        let left = Polygon::rect("t", 0.0, 0.0, 256.0, 256.0);
        assert_eq!(
            assign_patch_labels(&g, std::slice::from_ref(&left), LabelRule::Center).unwrap(),
            vec![true, false]
        );
        assert_eq!(
            assign_patch_labels(&g, &[left], LabelRule::Overlap { tau: 0.5 }).unwrap(),
            vec![true, false]
        );
    }

    #[test]
    fn overlap_threshold() {
        let g = tessellate(256, 256, 256).unwrap();
        let quarter = Polygon::rect("t", 0.0, 0.0, 128.0, 128.0);
        let rule = |tau| LabelRule::Overlap { tau };
        assert_eq!(assign_patch_labels(&g, std::slice::from_ref(&quarter), rule(0.25)).unwrap(), vec![true]);
        assert_eq!(assign_patch_labels(&g, std::slice::from_ref(&quarter), rule(0.3)).unwrap(), vec![false]);
        // The patch center sits on the region's corner, which counts as inside.
        assert_eq!(assign_patch_labels(&g, &[quarter], LabelRule::Center).unwrap(), vec![true]);
        let small = Polygon::rect("t", 0.0, 0.0, 100.0, 100.0);
        assert_eq!(assign_patch_labels(&g, &[small], LabelRule::Center).unwrap(), vec![false]);
    }

    #[test]
    fn out_of_frame_region_rejected() {
        let g = tessellate(512, 512, 256).unwrap();
        let far = Polygon::rect("t", 5000.0, 5000.0, 6000.0, 6000.0);
        assert!(matches!(
            assign_patch_labels(&g, &[far], LabelRule::Center),
            Err(Error::Geometry(_))
        ));
    }

    #[test]
    fn label_rule_parse() {
        assert_eq!("center".parse::<LabelRule>().unwrap(), LabelRule::Center);
        assert_eq!("overlap:0.5".parse::<LabelRule>().unwrap(), LabelRule::Overlap { tau: 0.5 });
        assert!("middle".parse::<LabelRule>().is_err());
    }
}
