//! Adam training with one bag per step, weight-decay selection on validation
//! loss, and the multi-seed protocol.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classification::EvalRun;
use crate::data::{Dataset, Slide, Split};
use crate::error::{Error, Result};
use crate::models::{MilModel, ModelConfig, ScoringMode};
use crate::numerics::Tensor2;
use crate::reliability::{per_slide_reliability, ReliabilityResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub weight_decay_grid: Vec<f64>,
    pub seeds: Vec<u64>,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// AdamW-style decay applied to the weights instead of the gradients.
    pub decoupled_decay: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            epochs: 50,
            weight_decay_grid: vec![0.0, 1e-5, 1e-4, 1e-3],
            seeds: (0..5).collect(),
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            decoupled_decay: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::config(format!("learning rate must be non-negative, got {}", self.lr)));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs must be at least 1"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("at least one seed is required"));
        }
        if self.weight_decay_grid.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::config("weight decay values must be finite and non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

/// Model plus Adam moments.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub model: MilModel,
    first_moment: Vec<Tensor2>,
    second_moment: Vec<Tensor2>,
    pub step: u64,
    pub history: Vec<EpochLoss>,
}

impl TrainState {
    pub fn new(model: MilModel) -> Self {
        let zeros: Vec<Tensor2> = model
            .parameters()
            .iter()
            .map(|(_, t)| Tensor2::zeros(t.rows(), t.cols()))
            .collect();
        Self {
            model,
            first_moment: zeros.clone(),
            second_moment: zeros,
            step: 0,
            history: Vec::new(),
        }
    }
}

/// One bias-corrected Adam update. With coupled decay, `weight_decay·θ` is added
/// to the gradient before the moment updates.
pub fn adam_step(
    state: &mut TrainState,
    grads: &[Tensor2],
    lr: f64,
    weight_decay: f64,
    config: &TrainConfig,
) -> Result<()> {
    let params = state.model.parameters();
    if grads.len() != params.len() {
        return Err(Error::Length {
            what: "gradients",
            left: grads.len(),
            right: params.len(),
        });
    }
    for ((_, p), g) in params.iter().zip(grads) {
        p.check_same_shape(g, "adam_step")?;
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (config.beta1, config.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let decoupled = config.decoupled_decay;

    let moments = state.first_moment.iter_mut().zip(state.second_moment.iter_mut());
    for ((p, g), (m, v)) in state.model.tensors_mut().zip(grads).zip(moments) {
        let (pd, md, vd) = (p.data_mut(), m.data_mut(), v.data_mut());
        for i in 0..pd.len() {
            let mut gi = g.data()[i];
            if !decoupled {
                gi += weight_decay * pd[i];
            }
            md[i] = b1 * md[i] + (1.0 - b1) * gi;
            vd[i] = b2 * vd[i] + (1.0 - b2) * gi * gi;
            let m_hat = md[i] / c1;
            let v_hat = vd[i] / c2;
            if decoupled {
                pd[i] -= lr * weight_decay * pd[i];
            }
            pd[i] -= lr * m_hat / (v_hat.sqrt() + config.eps);
        }
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: MilModel,
    pub weight_decay: f64,
    pub history: Vec<EpochLoss>,
}

fn mean_loss(model: &MilModel, slides: &[&Slide]) -> Result<f64> {
    let mut total = 0.0;
    for s in slides {
        total += model.loss(&s.bag.features, s.bag.label)?;
    }
    Ok(total / slides.len() as f64)
}

/// Trains a fresh model for the full epoch budget; the final-epoch model is returned.
pub fn train_one(
    model_config: &ModelConfig,
    config: &TrainConfig,
    dataset: &Dataset,
    seed: u64,
    weight_decay: f64,
) -> Result<TrainOutcome> {
    config.validate()?;
    let train = dataset.split(Split::Train);
    if train.is_empty() {
        return Err(Error::config("training split is empty"));
    }
    let val = dataset.split(Split::Val);
    let mut state = TrainState::new(MilModel::new(model_config.clone(), seed)?);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &i in &order {
            let bag = &train[i].bag;
            let (loss, grads) = state.model.loss_and_gradients(&bag.features, bag.label)?;
            if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    bag: bag.slide_id.clone(),
                });
            }
            total += loss;
            adam_step(&mut state, &grads, config.lr, weight_decay, config)?;
        }
        let val_loss = if val.is_empty() {
            None
        } else {
            Some(mean_loss(&state.model, &val)?)
        };
        state.history.push(EpochLoss {
            epoch,
            train_loss: total / train.len() as f64,
            val_loss,
        });
    }
    Ok(TrainOutcome {
        model: state.model,
        weight_decay,
        history: state.history,
    })
}

#[derive(Clone, Debug)]
pub struct DecaySelection {
    pub chosen: f64,
    /// Final-epoch mean validation loss per distinct grid value, ascending by decay.
    pub val_losses: Vec<(f64, f64)>,
    pub outcome: TrainOutcome,
}

/// Trains once per distinct decay and keeps the lowest final validation loss
/// (smaller decay on ties).
pub fn select_weight_decay(
    model_config: &ModelConfig,
    config: &TrainConfig,
    dataset: &Dataset,
    seed: u64,
) -> Result<DecaySelection> {
    let mut grid = config.weight_decay_grid.clone();
    if grid.is_empty() {
        return Err(Error::config("weight decay grid is empty"));
    }
    if dataset.split(Split::Val).is_empty() {
        return Err(Error::config("validation split is empty"));
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let outcomes: Vec<TrainOutcome> = grid
        .iter()
        .map(|&wd| train_one(model_config, config, dataset, seed, wd))
        .collect::<Result<_>>()?;
    let val_losses: Vec<(f64, f64)> = outcomes
        .iter()
        .map(|o| {
            let last = o.history.last().and_then(|h| h.val_loss).unwrap_or(f64::INFINITY);
            (o.weight_decay, last)
        })
        .collect();
    let mut best = 0;
    for (i, (_, loss)) in val_losses.iter().enumerate() {
        if *loss < val_losses[best].1 {
            best = i;
        }
    }
    let outcome = outcomes.into_iter().nth(best).expect("non-empty grid");
    Ok(DecaySelection {
        chosen: outcome.weight_decay,
        val_losses,
        outcome,
    })
}

/// Predictions and per-slide reliability of one model on one split.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Evaluation {
    pub slide_ids: Vec<String>,
    pub runs: Vec<EvalRun>,
    /// Per scoring mode, one entry per slide; `None` marks ineligible slides.
    pub reliability: Vec<(ScoringMode, Vec<Option<ReliabilityResult>>)>,
}

pub fn evaluate(model: &MilModel, slides: &[&Slide], bins: usize) -> Result<Evaluation> {
    let modes = model.config().available_scorings();
    let mut runs = Vec::with_capacity(slides.len());
    let mut scores: Vec<Vec<Vec<f64>>> = vec![Vec::with_capacity(slides.len()); modes.len()];
    for s in slides {
        let out = model.forward(&s.bag.features)?;
        runs.push(EvalRun::new(out.probabilities.data().to_vec(), s.bag.label));
        for (k, &mode) in modes.iter().enumerate() {
            scores[k].push(out.scores(mode).expect("mode listed as available"));
        }
    }
    let empty: Vec<bool> = Vec::new();
    let mut reliability = Vec::with_capacity(modes.len());
    for (k, &mode) in modes.iter().enumerate() {
        let pairs = slides.iter().zip(&scores[k]).map(|(s, sc)| match &s.patch_labels {
            Some(l) => (sc.as_slice(), l.as_slice()),
            None => (&sc[..0], empty.as_slice()),
        });
        reliability.push((mode, per_slide_reliability(pairs, bins)?));
    }
    Ok(Evaluation {
        slide_ids: slides.iter().map(|s| s.bag.slide_id.clone()).collect(),
        runs,
        reliability,
    })
}

#[derive(Clone, Debug)]
pub struct SeedRun {
    pub seed: u64,
    pub selection: DecaySelection,
    pub evaluation: Evaluation,
}

impl SeedRun {
    pub fn model(&self) -> &MilModel {
        &self.selection.outcome.model
    }
}

/// Weight-decay selection, training and test evaluation for every seed.
/// Seeds are independent; the result order follows `config.seeds`.
pub fn run_protocol(
    model_config: &ModelConfig,
    config: &TrainConfig,
    dataset: &Dataset,
    bins: usize,
) -> Result<Vec<SeedRun>> {
    config.validate()?;
    model_config.validate()?;
    if model_config.input_dim != dataset.input_dim() {
        return Err(Error::config(format!(
            "model input_dim {} does not match dataset width {}",
            model_config.input_dim,
            dataset.input_dim()
        )));
    }
    let test = dataset.split(Split::Test);
    config
        .seeds
        .par_iter()
        .map(|&seed| {
            let selection = select_weight_decay(model_config, config, dataset, seed)?;
            let evaluation = evaluate(&selection.outcome.model, &test, bins)?;
            Ok(SeedRun {
                seed,
                selection,
                evaluation,
            })
        })
        .collect()
}

/// `epoch,train_loss,val_loss` rows.
pub fn write_history_csv(history: &[EpochLoss], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "train_loss", "val_loss"])?;
    for h in history {
        w.write_record([
            h.epoch.to_string(),
            format!("{:.10}", h.train_loss),
            h.val_loss.map(|v| format!("{v:.10}")).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
