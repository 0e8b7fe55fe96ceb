use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Aggregator family member.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Variant {
    MeanPool,
    MaxPool,
    MeanPoolIns,
    MaxPoolIns,
    Abmil,
    Multihead,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::MeanPool,
        Variant::MaxPool,
        Variant::MeanPoolIns,
        Variant::MaxPoolIns,
        Variant::Abmil,
        Variant::Multihead,
    ];

    pub fn has_attention(self) -> bool {
        matches!(self, Variant::Abmil | Variant::Multihead)
    }

    pub fn is_instance_level(self) -> bool {
        matches!(self, Variant::MeanPoolIns | Variant::MaxPoolIns)
    }

    pub fn label(self) -> &'static str {
        match self {
            Variant::MeanPool => "MEAN-POOL",
            Variant::MaxPool => "MAX-POOL",
            Variant::MeanPoolIns => "MEAN-POOL-INS",
            Variant::MaxPoolIns => "MAX-POOL-INS",
            Variant::Abmil => "ABMIL",
            Variant::Multihead => "MULTIHEAD",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Which per-patch quantity is read out as the patch score.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ScoringMode {
    /// Attention weights (mean over heads).
    Att,
    /// Instance probability of the predicted slide class, min-max normalized per bag.
    Patch,
    /// Fraction of pooled dimensions where the instance is the argmax.
    Maxsel,
}

impl ScoringMode {
    pub fn label(self) -> &'static str {
        match self {
            ScoringMode::Att => "ATT",
            ScoringMode::Patch => "PATCH",
            ScoringMode::Maxsel => "MAXSEL",
        }
    }
}

impl fmt::Display for ScoringMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ScoringMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "att" => Ok(ScoringMode::Att),
            "patch" => Ok(ScoringMode::Patch),
            "maxsel" => Ok(ScoringMode::Maxsel),
            _ => Err(Error::config(format!(
                "unknown scoring mode {s:?} (expected att, patch or maxsel)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedActivation {
    #[default]
    Relu,
    Tanh,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub embed_dim: usize,
    pub attn_hidden: usize,
    pub num_heads: usize,
    pub num_classes: usize,
    pub variant: Variant,
    pub additive: bool,
    /// `None` only for MEAN-POOL, which has no patch scores.
    pub scoring_mode: Option<ScoringMode>,
    #[serde(default)]
    pub embed_activation: EmbedActivation,
}

impl ModelConfig {
    /// 1024 → 512 features, gated-attention width 256, binary classification.
    pub fn new(variant: Variant) -> Self {
        Self {
            input_dim: 1024,
            embed_dim: 512,
            attn_hidden: 256,
            num_heads: 1,
            num_classes: 2,
            variant,
            additive: false,
            scoring_mode: Self::default_scoring(variant),
            embed_activation: EmbedActivation::Relu,
        }
    }

    pub fn with_dims(mut self, input_dim: usize, embed_dim: usize, attn_hidden: usize) -> Self {
        self.input_dim = input_dim;
        self.embed_dim = embed_dim;
        self.attn_hidden = attn_hidden;
        self
    }

    pub fn with_classes(mut self, num_classes: usize) -> Self {
        self.num_classes = num_classes;
        self
    }

    pub fn with_heads(mut self, num_heads: usize) -> Self {
        self.num_heads = num_heads;
        self
    }

    pub fn with_additive(mut self, additive: bool) -> Self {
        self.additive = additive;
        self.scoring_mode = Self::default_scoring(self.variant);
        self
    }

    pub fn with_scoring(mut self, mode: ScoringMode) -> Self {
        self.scoring_mode = Some(mode);
        self
    }

    pub fn default_scoring(variant: Variant) -> Option<ScoringMode> {
        match variant {
            Variant::MeanPool => None,
            Variant::MaxPool | Variant::MaxPoolIns => Some(ScoringMode::Maxsel),
            Variant::MeanPoolIns => Some(ScoringMode::Patch),
            Variant::Abmil | Variant::Multihead => Some(ScoringMode::Att),
        }
    }

    /// Every scoring mode this configuration can produce.
    pub fn available_scorings(&self) -> Vec<ScoringMode> {
        match self.variant {
            Variant::MeanPool => vec![],
            Variant::MaxPool => vec![ScoringMode::Maxsel],
            Variant::MeanPoolIns => vec![ScoringMode::Patch],
            Variant::MaxPoolIns => vec![ScoringMode::Maxsel, ScoringMode::Patch],
            Variant::Abmil | Variant::Multihead if self.additive => {
                vec![ScoringMode::Att, ScoringMode::Patch]
            }
            Variant::Abmil | Variant::Multihead => vec![ScoringMode::Att],
        }
    }

    pub fn supports(&self, mode: ScoringMode) -> bool {
        self.available_scorings().contains(&mode)
    }

    /// Width of each head's slice of the embedding.
    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.heads()
    }

    /// Effective head count: 1 unless the variant is multi-head.
    pub fn heads(&self) -> usize {
        match self.variant {
            Variant::Multihead => self.num_heads.max(1),
            _ => 1,
        }
    }

    /// Display name such as `ABMIL-ADD` or `MULTIHEAD/4`.
    pub fn name(&self) -> String {
        let mut s = self.variant.label().to_string();
        if self.additive {
            s.push_str("-ADD");
        }
        if self.variant == Variant::Multihead {
            s.push_str(&format!("/{}", self.num_heads));
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.embed_dim == 0 {
            return Err(Error::config("input_dim and embed_dim must be positive"));
        }
        if self.num_classes < 2 {
            return Err(Error::config(format!(
                "num_classes must be at least 2, got {}",
                self.num_classes
            )));
        }
        if self.num_heads == 0 {
            return Err(Error::config("num_heads must be at least 1"));
        }
        if self.variant.has_attention() && self.attn_hidden == 0 {
            return Err(Error::config("attn_hidden must be positive"));
        }
        if self.variant == Variant::Multihead && !self.embed_dim.is_multiple_of(self.num_heads) {
            return Err(Error::config(format!(
                "embed_dim {} is not divisible by {} heads",
                self.embed_dim, self.num_heads
            )));
        }
        if self.variant != Variant::Multihead && self.num_heads != 1 {
            return Err(Error::config(format!(
                "{} is single-head, got num_heads = {}",
                self.variant, self.num_heads
            )));
        }
        if self.additive && !self.variant.has_attention() {
            return Err(Error::config(format!(
                "additive mode requires an attention variant, got {}",
                self.variant
            )));
        }
        match self.scoring_mode {
            None if self.variant != Variant::MeanPool => {
                Err(Error::config(format!("{} requires a scoring mode", self.variant)))
            }
            Some(mode) if !self.supports(mode) => Err(Error::UnsupportedScoring {
                variant: self.name(),
                mode: mode.to_string(),
            }),
            _ => Ok(()),
        }
    }
}

/// Parses `mean-pool`, `max-pool-ins`, `abmil-add`, `multihead/4`, `multihead-add/2`, ...
/// The returned config uses the reference dimensions (1024/512/256).
impl FromStr for ModelConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let (body, heads) = match lower.split_once('/') {
            Some((b, h)) => {
                let h: usize = h
                    .parse()
                    .map_err(|_| Error::config(format!("bad head count in {s:?}")))?;
                (b.to_string(), Some(h))
            }
            None => (lower.clone(), None),
        };
        let (body, additive) = match body.strip_suffix("-add") {
            Some(b) => (b.to_string(), true),
            None => (body, false),
        };
        let variant = match body.as_str() {
            "mean-pool" => Variant::MeanPool,
            "max-pool" => Variant::MaxPool,
            "mean-pool-ins" => Variant::MeanPoolIns,
            "max-pool-ins" => Variant::MaxPoolIns,
            "abmil" => Variant::Abmil,
            "multihead" | "madmil" => Variant::Multihead,
            _ => {
                return Err(Error::config(format!(
                    "unknown variant {s:?}; valid: mean-pool, max-pool, mean-pool-ins, \
                     max-pool-ins, abmil, abmil-add, multihead/<H>, multihead-add/<H>"
                )))
            }
        };
        let mut cfg = ModelConfig::new(variant).with_additive(additive);
        match (variant, heads) {
            (Variant::Multihead, Some(h)) => cfg.num_heads = h,
            (Variant::Multihead, None) => cfg.num_heads = 4,
            (_, Some(_)) => return Err(Error::config(format!("{s:?}: only multihead takes /<H>"))),
            _ => {}
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_names() {
        let c: ModelConfig = "abmil-add".parse().unwrap();
        assert_eq!(c.variant, Variant::Abmil);
        assert!(c.additive);
        assert_eq!(c.name(), "ABMIL-ADD");

        let c: ModelConfig = "multihead/4".parse().unwrap();
        assert_eq!(c.num_heads, 4);
        assert_eq!(c.name(), "MULTIHEAD/4");

        let err = "conv-mil".parse::<ModelConfig>().unwrap_err().to_string();
        assert!(err.contains("mean-pool"), "{err}");
        assert!("mean-pool-add".parse::<ModelConfig>().is_err());
        assert!("abmil/2".parse::<ModelConfig>().is_err());
    }

    #[test]
    fn invariants() {
        let mut c = ModelConfig::new(Variant::Multihead).with_heads(3);
        assert!(c.validate().is_err());
        c.num_heads = 4;
        assert!(c.validate().is_ok());

        let c = ModelConfig::new(Variant::MaxPool).with_additive(true);
        assert!(c.validate().is_err());

        let c = ModelConfig::new(Variant::Abmil).with_scoring(ScoringMode::Maxsel);
        assert!(matches!(c.validate(), Err(Error::UnsupportedScoring { .. })));

        let c = ModelConfig::new(Variant::MaxPoolIns).with_scoring(ScoringMode::Patch);
        assert!(c.validate().is_ok());

        let c = ModelConfig::new(Variant::MeanPool).with_classes(1);
        assert!(c.validate().is_err());
    }
}
