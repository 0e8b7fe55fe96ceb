use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{EmbedActivation, ModelConfig, ScoringMode, Variant};
use crate::error::{Error, Result};
use crate::numerics::{NodeId, Tape, Tensor2};

/// Named parameter tensors plus the configuration that shaped them.
#[derive(Clone, Debug, PartialEq)]
pub struct MilModel {
    config: ModelConfig,
    params: Vec<(String, Tensor2)>,
}

/// Everything a forward pass exposes about one bag.
#[derive(Clone, Debug)]
pub struct BagOutput {
    /// 1×C. For instance-pooling variants these are the log slide probabilities.
    pub logits: Tensor2,
    pub probabilities: Tensor2,
    pub predicted_class: usize,
    /// Scores for the configured scoring mode; `None` for MEAN-POOL.
    pub patch_scores: Option<Vec<f64>>,
    /// N×C per-instance contributions, additive models only.
    pub contributions: Option<Tensor2>,
    /// Mean attention over heads (N), attention variants only.
    pub attention: Option<Vec<f64>>,
    /// N×C instance class probabilities (instance pooling or additive).
    pub instance_probabilities: Option<Tensor2>,
    /// Selection frequency per instance, max-pooling variants only.
    pub selection: Option<Vec<f64>>,
}

impl BagOutput {
    pub fn scores(&self, mode: ScoringMode) -> Option<Vec<f64>> {
        match mode {
            ScoringMode::Att => self.attention.clone(),
            ScoringMode::Maxsel => self.selection.clone(),
            ScoringMode::Patch => self.instance_probabilities.as_ref().map(|p| {
                let col: Vec<f64> = (0..p.rows()).map(|i| p.get(i, self.predicted_class)).collect();
                min_max_normalize(&col)
            }),
        }
    }
}

/// Share of pooled dimensions in which each instance attains the maximum.
/// Exact ties split that dimension's credit equally.
pub fn maxsel_scores(pooled_input: &Tensor2) -> Vec<f64> {
    let (n, d) = pooled_input.shape();
    let mut credit = vec![0.0; n];
    for c in 0..d {
        let col = (0..n).map(|r| pooled_input.get(r, c));
        let max = col.clone().fold(f64::NEG_INFINITY, f64::max);
        let tied: Vec<usize> = col.enumerate().filter(|(_, v)| *v == max).map(|(r, _)| r).collect();
        for &r in &tied {
            credit[r] += 1.0 / tied.len() as f64;
        }
    }
    credit.iter().map(|c| c / d as f64).collect()
}

/// Maps values linearly onto [0,1]; a constant vector maps to 0.5 everywhere.
pub fn min_max_normalize(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return vec![0.5; values.len()];
    }
    values.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

/// How the slide prediction is exposed to the loss.
#[derive(Clone, Copy, Debug)]
pub(crate) enum Head {
    Logits(NodeId),
    /// Unnormalized non-negative class scores; normalized before the loss.
    Probabilities(NodeId),
}

/// Node handles from one forward recording.
#[derive(Debug)]
pub(crate) struct Graph {
    pub params: Vec<NodeId>,
    pub head: Head,
    pub attention: Vec<NodeId>,
    pub instance_probs: Option<NodeId>,
    /// Input of the max-pooling step, for MAXSEL scores.
    pub selection: Option<NodeId>,
    pub contributions: Option<NodeId>,
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

impl MilModel {
    /// Uniform `[−1/√fan_in, 1/√fan_in]` weights, zero biases, deterministic per seed.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        for (name, rows, cols) in parameter_shapes(&config) {
            let t = if name.ends_with(".bias") {
                Tensor2::zeros(rows, cols)
            } else {
                let bound = 1.0 / (rows as f64).sqrt();
                let data = (0..rows * cols).map(|_| rng.random_range(-bound..=bound)).collect();
                Tensor2::from_vec(rows, cols, data)?
            };
            params.push((name, t));
        }
        Ok(Self { config, params })
    }

    /// Reassembles a model from named tensors, checking names and shapes.
    pub fn from_parameters(config: ModelConfig, params: Vec<(String, Tensor2)>) -> Result<Self> {
        config.validate()?;
        let shapes = parameter_shapes(&config);
        if shapes.len() != params.len() {
            return Err(Error::Length {
                what: "parameters",
                left: params.len(),
                right: shapes.len(),
            });
        }
        for ((name, rows, cols), (pname, t)) in shapes.iter().zip(&params) {
            if name != pname || t.shape() != (*rows, *cols) {
                return Err(Error::config(format!(
                    "parameter {pname} {:?} does not match expected {name} ({rows}, {cols})",
                    t.shape()
                )));
            }
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn parameters(&self) -> &[(String, Tensor2)] {
        &self.params
    }

    pub fn param(&self, name: &str) -> Option<&Tensor2> {
        self.params.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Tensor2> {
        self.params.iter_mut().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub(crate) fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor2> {
        self.params.iter_mut().map(|(_, t)| t)
    }

    pub fn num_parameters(&self) -> usize {
        self.params.iter().map(|(_, t)| t.len()).sum()
    }

    /// All parameters concatenated in declaration order.
    pub fn flatten(&self) -> Vec<f64> {
        self.params.iter().flat_map(|(_, t)| t.data().iter().copied()).collect()
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_parameters() {
            return Err(Error::Length {
                what: "flat parameters",
                left: values.len(),
                right: self.num_parameters(),
            });
        }
        let mut offset = 0;
        for (_, t) in &mut self.params {
            let n = t.len();
            t.data_mut().copy_from_slice(&values[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    fn check_input(&self, features: &Tensor2) -> Result<()> {
        if features.rows() == 0 {
            return Err(Error::EmptyBag("forward"));
        }
        if features.cols() != self.config.input_dim {
            return Err(Error::Shape {
                op: "forward",
                left: features.shape(),
                right: (features.rows(), self.config.input_dim),
            });
        }
        Ok(())
    }

    /// Records the forward computation for `features` (N × input_dim) on `tape`.
    pub(crate) fn record(&self, tape: &mut Tape, features: &Tensor2) -> Result<Graph> {
        self.check_input(features)?;
        let cfg = &self.config;
        let ids: Vec<NodeId> = self.params.iter().map(|(_, t)| tape.leaf(t.clone())).collect();
        let lookup = |name: &str| -> NodeId {
            let idx = self
                .params
                .iter()
                .position(|(n, _)| n == name)
                .expect("parameter layout fixed by config");
            ids[idx]
        };

        let x = tape.leaf(features.clone());
        let pre = tape.linear(x, lookup("embed.weight"), lookup("embed.bias"))?;
        let h = match cfg.embed_activation {
            EmbedActivation::Relu => tape.relu(pre),
            EmbedActivation::Tanh => tape.tanh(pre),
        };
        let (cls_w, cls_b) = (lookup("classifier.weight"), lookup("classifier.bias"));

        let mut graph = Graph {
            params: ids.clone(),
            head: Head::Logits(h),
            attention: Vec::new(),
            instance_probs: None,
            selection: None,
            contributions: None,
        };

        match cfg.variant {
            Variant::MeanPool => {
                let repr = tape.colwise_mean(h)?;
                graph.head = Head::Logits(tape.linear(repr, cls_w, cls_b)?);
            }
            Variant::MaxPool => {
                let (repr, _) = tape.colwise_max(h)?;
                graph.selection = Some(h);
                graph.head = Head::Logits(tape.linear(repr, cls_w, cls_b)?);
            }
            Variant::MeanPoolIns | Variant::MaxPoolIns => {
                let inst_logits = tape.linear(h, cls_w, cls_b)?;
                let inst_probs = tape.rowwise_softmax(inst_logits);
                graph.instance_probs = Some(inst_probs);
                let slide = if cfg.variant == Variant::MeanPoolIns {
                    tape.colwise_mean(inst_probs)?
                } else {
                    let (m, _) = tape.colwise_max(inst_probs)?;
                    graph.selection = Some(inst_probs);
                    m
                };
                graph.head = Head::Probabilities(slide);
            }
            Variant::Abmil | Variant::Multihead => {
                let heads = cfg.heads();
                let dh = cfg.head_dim();
                let mut pooled = Vec::with_capacity(heads);
                let mut weighted = Vec::with_capacity(heads);
                for j in 0..heads {
                    let slice = if heads == 1 {
                        h
                    } else {
                        tape.slice_cols(h, j * dh, dh)?
                    };
                    let p = |s: &str| lookup(&format!("attn.{j}.{s}"));
                    let v = tape.linear(slice, p("v.weight"), p("v.bias"))?;
                    let v = tape.tanh(v);
                    let u = tape.linear(slice, p("u.weight"), p("u.bias"))?;
                    let u = tape.sigmoid(u);
                    let gated = tape.hadamard(v, u)?;
                    let logits = tape.linear(gated, p("w.weight"), p("w.bias"))?;
                    let row = tape.transpose(logits);
                    let attn = tape.rowwise_softmax(row);
                    graph.attention.push(attn);
                    if cfg.additive {
                        let col = tape.transpose(attn);
                        weighted.push(tape.scale_rows(slice, col)?);
                    } else {
                        pooled.push(tape.matmul(attn, slice)?);
                    }
                }
                if cfg.additive {
                    let inst = if heads == 1 {
                        weighted[0]
                    } else {
                        tape.concat_cols(&weighted)?
                    };
                    let contrib = tape.linear(inst, cls_w, cls_b)?;
                    graph.contributions = Some(contrib);
                    graph.instance_probs = Some(tape.rowwise_softmax(contrib));
                    graph.head = Head::Logits(tape.colwise_sum(contrib)?);
                } else {
                    let repr = if heads == 1 {
                        pooled[0]
                    } else {
                        tape.concat_cols(&pooled)?
                    };
                    graph.head = Head::Logits(tape.linear(repr, cls_w, cls_b)?);
                }
            }
        }
        Ok(graph)
    }

    /// Records the forward pass followed by the slide-label loss.
    pub(crate) fn record_loss(&self, tape: &mut Tape, features: &Tensor2, label: usize) -> Result<(Graph, NodeId)> {
        let graph = self.record(tape, features)?;
        let loss = match graph.head {
            Head::Logits(l) => tape.softmax_cross_entropy(l, label)?,
            Head::Probabilities(p) => tape.normalized_nll(p, label)?,
        };
        Ok((graph, loss))
    }

    /// Slide-label cross-entropy and its gradient for every parameter (declaration order).
    pub fn loss_and_gradients(&self, features: &Tensor2, label: usize) -> Result<(f64, Vec<Tensor2>)> {
        let mut tape = Tape::new();
        let (graph, loss) = self.record_loss(&mut tape, features, label)?;
        let grads = tape.backward(loss)?;
        let value = tape.value(loss).data()[0];
        Ok((value, graph.params.iter().map(|&id| grads.get(id).clone()).collect()))
    }

    pub fn loss(&self, features: &Tensor2, label: usize) -> Result<f64> {
        let mut tape = Tape::new();
        let (_, loss) = self.record_loss(&mut tape, features, label)?;
        Ok(tape.value(loss).data()[0])
    }

    pub fn forward(&self, features: &Tensor2) -> Result<BagOutput> {
        let mut tape = Tape::new();
        let graph = self.record(&mut tape, features)?;
        let n = features.rows();

        let (logits, probabilities) = match graph.head {
            Head::Logits(l) => {
                let logits = tape.value(l).clone();
                let probs = logits.rowwise_softmax();
                (logits, probs)
            }
            Head::Probabilities(p) => {
                let raw = tape.value(p);
                let total = raw.sum();
                let probs = raw.map(|v| v / total);
                (probs.map(|v| v.max(f64::MIN_POSITIVE).ln()), probs)
            }
        };
        let predicted_class = argmax(probabilities.data());

        let attention = (!graph.attention.is_empty()).then(|| {
            let heads = graph.attention.len() as f64;
            let mut mean = vec![0.0; n];
            for &a in &graph.attention {
                for (m, v) in mean.iter_mut().zip(tape.value(a).data()) {
                    *m += v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= heads);
            mean
        });

        let selection = graph.selection.map(|node| maxsel_scores(tape.value(node)));

        let mut out = BagOutput {
            logits,
            probabilities,
            predicted_class,
            patch_scores: None,
            contributions: graph.contributions.map(|c| tape.value(c).clone()),
            attention,
            instance_probabilities: graph.instance_probs.map(|p| tape.value(p).clone()),
            selection,
        };
        out.patch_scores = self.config.scoring_mode.and_then(|m| out.scores(m));
        Ok(out)
    }

    /// Per-patch scores under `mode`, or an error if the variant cannot produce them.
    pub fn patch_scores(&self, features: &Tensor2, mode: ScoringMode) -> Result<Vec<f64>> {
        if !self.config.supports(mode) {
            return Err(Error::UnsupportedScoring {
                variant: self.config.name(),
                mode: mode.to_string(),
            });
        }
        let out = self.forward(features)?;
        out.scores(mode).ok_or_else(|| Error::UnsupportedScoring {
            variant: self.config.name(),
            mode: mode.to_string(),
        })
    }
}

/// `(name, rows, cols)` for every parameter, in declaration order.
pub fn parameter_shapes(cfg: &ModelConfig) -> Vec<(String, usize, usize)> {
    let mut shapes = vec![
        ("embed.weight".to_string(), cfg.input_dim, cfg.embed_dim),
        ("embed.bias".to_string(), 1, cfg.embed_dim),
    ];
    if cfg.variant.has_attention() {
        let (dh, k) = (cfg.head_dim(), cfg.attn_hidden);
        for j in 0..cfg.heads() {
            shapes.push((format!("attn.{j}.v.weight"), dh, k));
            shapes.push((format!("attn.{j}.v.bias"), 1, k));
            shapes.push((format!("attn.{j}.u.weight"), dh, k));
            shapes.push((format!("attn.{j}.u.bias"), 1, k));
            shapes.push((format!("attn.{j}.w.weight"), k, 1));
            shapes.push((format!("attn.{j}.w.bias"), 1, 1));
        }
    }
    shapes.push(("classifier.weight".to_string(), cfg.embed_dim, cfg.num_classes));
    shapes.push(("classifier.bias".to_string(), 1, cfg.num_classes));
    shapes
}
