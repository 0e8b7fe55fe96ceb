//! Synthetic bags with planted key instances.
//!
//! Background instances are isotropic Gaussian noise. Every slide of class
//! `c ≥ 1` contains a spatially contiguous blob of key instances shifted by
//! `μ·d_c`, where the `d_c` are orthonormal class signatures. Class 0 is the
//! normal class and never contains key instances, so the MIL assumption holds
//! by construction and patch labels are exactly the key-instance indicators.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::features::{write_feature_file, FeatureBag};
use super::manifest::{split_dataset, Dataset, DatasetManifest, ManifestEntry, Slide, Split};
use crate::annotations::{AnnotationFile, PatchGrid, Polygon};
use crate::error::{Error, Result};
use crate::numerics::Tensor2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub classes: usize,
    pub slides_per_class: usize,
    pub bag_min: usize,
    pub bag_max: usize,
    pub key_frac_min: f64,
    pub key_frac_max: f64,
    pub dim: usize,
    /// Signature offset magnitude μ.
    pub mu: f64,
    /// Background noise standard deviation σ.
    pub sigma: f64,
    pub patch_size: u32,
    /// `(train, val, test)` fractions for the stratified split.
    pub split: [f64; 3],
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            classes: 2,
            slides_per_class: 50,
            bag_min: 40,
            bag_max: 120,
            key_frac_min: 0.35,
            key_frac_max: 0.75,
            dim: 64,
            mu: 4.0,
            sigma: 1.0,
            patch_size: 256,
            split: [0.6, 0.2, 0.2],
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::config(m));
        if self.classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.classes));
        }
        if self.slides_per_class == 0 {
            return bad("slides_per_class must be positive".into());
        }
        if self.bag_min == 0 || self.bag_min > self.bag_max {
            return bad(format!("invalid bag size range [{}, {}]", self.bag_min, self.bag_max));
        }
        if !(self.key_frac_min > 0.0 && self.key_frac_min <= self.key_frac_max && self.key_frac_max <= 1.0) {
            return bad(format!(
                "key fraction range [{}, {}] must satisfy 0 < min <= max <= 1",
                self.key_frac_min, self.key_frac_max
            ));
        }
        if !(self.mu > 0.0 && self.sigma > 0.0) {
            return bad(format!("mu and sigma must be positive (mu={}, sigma={})", self.mu, self.sigma));
        }
        if self.dim < self.classes - 1 {
            return bad(format!(
                "feature width {} cannot hold {} orthogonal class signatures",
                self.dim,
                self.classes - 1
            ));
        }
        if self.patch_size == 0 {
            return bad("patch_size must be positive".into());
        }
        Ok(())
    }
}

/// Generated data plus the ground truth used to plant it.
#[derive(Clone, Debug)]
pub struct Synthetic {
    pub dataset: Dataset,
    pub annotations: Vec<AnnotationFile>,
    /// Unit signature for each class; all zeros for class 0.
    pub signatures: Vec<Vec<f64>>,
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Orthonormal directions via Gram-Schmidt on Gaussian draws.
fn class_signatures(rng: &mut ChaCha8Rng, classes: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut sigs: Vec<Vec<f64>> = vec![vec![0.0; dim]];
    while sigs.len() < classes {
        let mut v: Vec<f64> = (0..dim).map(|_| gaussian(rng)).collect();
        for s in sigs.iter().skip(1) {
            let dot: f64 = v.iter().zip(s).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(s).for_each(|(a, b)| *a -= dot * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm < 1e-8 {
            continue;
        }
        v.iter_mut().for_each(|a| *a /= norm);
        sigs.push(v);
    }
    sigs
}

pub fn generate_synthetic(config: &SynthConfig) -> Result<Synthetic> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let signatures = class_signatures(&mut rng, config.classes, config.dim);
    let ps = config.patch_size;

    let mut entries = Vec::new();
    let mut slides = Vec::new();
    let mut annotations = Vec::new();
    for (class, signature) in signatures.iter().enumerate() {
        for s in 0..config.slides_per_class {
            let slide_id = format!("syn_c{class}_{s:03}");
            let n = rng.random_range(config.bag_min..=config.bag_max);
            let side = (n as f64).sqrt().ceil() as u32;
            let coords: Vec<(u32, u32)> = (0..n as u32).map(|i| (i % side, i / side)).collect();

            let mut is_key = vec![false; n];
            if class > 0 {
                let frac = rng.random_range(config.key_frac_min..=config.key_frac_max);
                let k = ((frac * n as f64).round() as usize).clamp(1, n);
                let cx = rng.random_range(0.0..side as f64);
                let cy = rng.random_range(0.0..side as f64);
                let mut order: Vec<(f64, usize)> = coords
                    .iter()
                    .enumerate()
                    .map(|(i, &(c, r))| {
                        let (dx, dy) = (c as f64 + 0.5 - cx, r as f64 + 0.5 - cy);
                        (dx * dx + dy * dy, i)
                    })
                    .collect();
                order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                for &(_, i) in order.iter().take(k) {
                    is_key[i] = true;
                }
            }

            let mut data = Vec::with_capacity(n * config.dim);
            for &key in &is_key {
                for &sig in signature {
                    let mut v = config.sigma * gaussian(&mut rng);
                    if key {
                        v += config.mu * sig;
                    }
                    data.push(v);
                }
            }
            let features = Tensor2::from_vec(n, config.dim, data)?;
            let bag = FeatureBag::new(slide_id.clone(), features, coords.clone(), class)?;

            let regions = coords
                .iter()
                .zip(&is_key)
                .filter(|(_, &k)| k)
                .map(|(&(c, r), _)| {
                    let (x0, y0) = ((c * ps) as f64, (r * ps) as f64);
                    Polygon::rect("key", x0, y0, x0 + ps as f64, y0 + ps as f64)
                })
                .collect();
            let grid = PatchGrid {
                patch_size: ps,
                width: side * ps,
                height: side * ps,
                coords,
            };
            annotations.push(AnnotationFile {
                slide_id: slide_id.clone(),
                width: grid.width,
                height: grid.height,
                regions,
            });
            entries.push(ManifestEntry {
                features: PathBuf::from(format!("features/{slide_id}.milf")),
                annotation: Some(PathBuf::from(format!("annotations/{slide_id}.json"))),
                slide_id,
                label: class,
                split: Split::Train,
            });
            slides.push(Slide {
                bag,
                split: Split::Train,
                grid,
                patch_labels: Some(is_key),
            });
        }
    }

    let manifest = DatasetManifest {
        name: "synthetic".into(),
        class_names: (0..config.classes)
            .map(|c| if c == 0 { "normal".to_string() } else { format!("class{c}") })
            .collect(),
        input_dim: config.dim,
        patch_size: ps,
        slides: entries,
    };
    let manifest = split_dataset(&manifest, config.split, config.seed)?;
    for (slide, entry) in slides.iter_mut().zip(&manifest.slides) {
        slide.split = entry.split;
    }
    Ok(Synthetic {
        dataset: Dataset { manifest, slides },
        annotations,
        signatures,
    })
}

impl Synthetic {
    /// Projection of each instance onto its slide's class signature: the
    /// likelihood-ratio-optimal patch score for the generating model.
    pub fn oracle_scores(&self, slide: usize) -> Vec<f64> {
        let s = &self.dataset.slides[slide];
        let sig = &self.signatures[s.bag.label];
        (0..s.bag.len())
            .map(|i| s.bag.features.row(i).iter().zip(sig).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Writes `manifest.json`, `labels.csv`, `features/*.milf` and `annotations/*.json` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        for sub in ["features", "annotations"] {
            let p = dir.join(sub);
            std::fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
        }
        let m = &self.dataset.manifest;
        for ((slide, entry), ann) in self.dataset.slides.iter().zip(&m.slides).zip(&self.annotations) {
            write_feature_file(&slide.bag, &dir.join(&entry.features))?;
            if let Some(a) = &entry.annotation {
                ann.write(&dir.join(a))?;
            }
        }
        m.write(&dir.join("manifest.json"))?;
        m.write_labels_csv(&dir.join("labels.csv"))
    }
}
