use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{read_feature_file, FeatureBag};
use crate::annotations::{assign_patch_labels, AnnotationFile, LabelRule, PatchGrid};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::config(format!("unknown split tag {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub slide_id: String,
    /// Feature file path, relative to the manifest's directory.
    pub features: PathBuf,
    /// Annotation JSON path, relative to the manifest's directory.
    pub annotation: Option<PathBuf>,
    pub label: usize,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub class_names: Vec<String>,
    pub input_dim: usize,
    pub patch_size: u32,
    pub slides: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        for e in &self.slides {
            if e.label >= self.class_names.len() {
                return Err(Error::LabelOutOfRange {
                    label: e.label,
                    classes: self.class_names.len(),
                });
            }
        }
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Self = serde_json::from_str(&text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    /// `slide_id,label,split` rows.
    pub fn write_labels_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["slide_id", "label", "split"])?;
        for e in &self.slides {
            w.write_record([e.slide_id.as_str(), &e.label.to_string(), e.split.as_str()])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_labels_csv(path: &Path) -> Result<Vec<(String, usize, Split)>> {
        let mut r = csv::Reader::from_path(path)?;
        r.records()
            .map(|rec| {
                let rec = rec?;
                let label = rec[1]
                    .parse()
                    .map_err(|_| Error::config(format!("bad label {:?}", &rec[1])))?;
                Ok((rec[0].to_string(), label, rec[2].parse()?))
            })
            .collect()
    }
}

/// Stratified assignment of `(train, val, test)` fractions, deterministic per seed.
pub fn split_dataset(manifest: &DatasetManifest, fractions: [f64; 3], seed: u64) -> Result<DatasetManifest> {
    if fractions.iter().any(|f| *f < 0.0) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::config(format!("split fractions {fractions:?} must be non-negative and sum to 1")));
    }
    let buckets = fractions.iter().filter(|f| **f > 0.0).count();
    let mut out = manifest.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for class in 0..manifest.class_names.len() {
        let mut members: Vec<usize> = (0..manifest.slides.len())
            .filter(|&i| manifest.slides[i].label == class)
            .collect();
        if members.is_empty() {
            continue;
        }
        if members.len() < buckets {
            return Err(Error::config(format!(
                "class {class} has {} slides, fewer than {buckets} split buckets",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        let counts = largest_remainder(members.len(), fractions);
        let mut it = members.into_iter();
        for (split, count) in Split::ALL.into_iter().zip(counts) {
            for idx in it.by_ref().take(count) {
                out.slides[idx].split = split;
            }
        }
    }
    Ok(out)
}

fn largest_remainder(n: usize, fractions: [f64; 3]) -> [usize; 3] {
    let exact: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut counts = [0usize; 3];
    for (c, e) in counts.iter_mut().zip(&exact) {
        *c = (e + 1e-9).floor() as usize;
    }
    let mut left = n - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..3).filter(|&i| fractions[i] > 0.0).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - counts[a] as f64;
        let rb = exact[b] - counts[b] as f64;
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

/// One slide in memory: its bag, split and (when annotated) patch labels.
#[derive(Clone, Debug)]
pub struct Slide {
    pub bag: FeatureBag,
    pub split: Split,
    pub grid: PatchGrid,
    pub patch_labels: Option<Vec<bool>>,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub slides: Vec<Slide>,
}

impl Dataset {
    pub fn num_classes(&self) -> usize {
        self.manifest.class_names.len()
    }

    pub fn input_dim(&self) -> usize {
        self.manifest.input_dim
    }

    pub fn split(&self, split: Split) -> Vec<&Slide> {
        self.slides.iter().filter(|s| s.split == split).collect()
    }

    /// Loads every slide listed in `manifest_path`, deriving patch labels with `rule`.
    pub fn load(manifest_path: &Path, rule: LabelRule) -> Result<Self> {
        let manifest = DatasetManifest::read(manifest_path)?;
        let root = manifest_path.parent().unwrap_or(Path::new("."));
        let mut slides = Vec::with_capacity(manifest.slides.len());
        for e in &manifest.slides {
            let bag = read_feature_file(&root.join(&e.features), &e.slide_id, e.label, Some(manifest.input_dim))?;
            let (grid, patch_labels) = match &e.annotation {
                Some(rel) => {
                    let ann = AnnotationFile::read(&root.join(rel))?;
                    let grid = PatchGrid {
                        patch_size: manifest.patch_size,
                        width: ann.width,
                        height: ann.height,
                        coords: bag.coords.clone(),
                    };
                    grid.validate()?;
                    let labels = assign_patch_labels(&grid, &ann.regions, rule)?;
                    (grid, Some(labels))
                }
                None => (bounding_grid(&bag.coords, manifest.patch_size), None),
            };
            slides.push(Slide {
                bag,
                split: e.split,
                grid,
                patch_labels,
            });
        }
        Ok(Self { manifest, slides })
    }
}

/// Smallest grid covering `coords`.
pub fn bounding_grid(coords: &[(u32, u32)], patch_size: u32) -> PatchGrid {
    let cols = coords.iter().map(|c| c.0 + 1).max().unwrap_or(1);
    let rows = coords.iter().map(|c| c.1 + 1).max().unwrap_or(1);
    PatchGrid {
        patch_size,
        width: cols * patch_size,
        height: rows * patch_size,
        coords: coords.to_vec(),
    }
}
