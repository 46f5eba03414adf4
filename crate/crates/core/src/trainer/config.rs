use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genmodels::{GenConfig, GenVariant};
use crate::resolver::{ResolverConfig, ResolverVariant};
use crate::util;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", content = "variant", rename_all = "lowercase")]
pub enum ModelKind {
    Generation(GenVariant),
    Resolution(ResolverVariant),
}

/// Validation quantity used for model selection; higher is better.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionMetric {
    /// Mean best-reference embedding F1 of decoded utterances, x100.
    EmbeddingF1,
    /// Teacher-forced next-token accuracy, x100.
    TokenAccuracy,
    /// Resolution accuracy, x100.
    Accuracy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Word embedding size (generation only).
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub attn_dim: usize,
    pub dropout: f32,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub selection: SelectionMetric,
    /// Global gradient-norm bound; `None` disables clipping.
    #[serde(default)]
    pub grad_clip: Option<f64>,
    /// Beam width for in-training validation decoding.
    pub validation_beam_width: usize,
    pub max_decode_len: usize,
}

impl TrainConfig {
    /// Published generation settings for `variant`.
    pub fn generation(variant: GenVariant) -> Self {
        TrainConfig {
            model: ModelKind::Generation(variant),
            batch_size: if variant == GenVariant::ReRef { 16 } else { 32 },
            learning_rate: 1e-4,
            embed_dim: 1024,
            hidden_dim: 512,
            attn_dim: 512,
            dropout: if variant == GenVariant::Copy { 0.0 } else { 0.3 },
            max_epochs: 100,
            patience: 50,
            seed: 0,
            selection: SelectionMetric::EmbeddingF1,
            grad_clip: None,
            validation_beam_width: 1,
            max_decode_len: 30,
        }
    }

    /// Published resolution settings for `variant`.
    pub fn resolution(variant: ResolverVariant) -> Self {
        TrainConfig {
            model: ModelKind::Resolution(variant),
            batch_size: 32,
            learning_rate: 1e-4,
            embed_dim: 0,
            hidden_dim: 512,
            attn_dim: 512,
            dropout: 0.5,
            max_epochs: 100,
            patience: 50,
            seed: 0,
            selection: SelectionMetric::Accuracy,
            grad_clip: None,
            validation_beam_width: 1,
            max_decode_len: 30,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.grad_clip.is_some_and(|c| !(c > 0.0)) {
            return Err(Error::Config("grad_clip must be positive".into()));
        }
        match (self.model, self.selection) {
            (ModelKind::Generation(_), SelectionMetric::Accuracy) => Err(Error::Config(
                "generation models select on embedding-f1 or token-accuracy".into(),
            )),
            (ModelKind::Resolution(_), s) if s != SelectionMetric::Accuracy => {
                Err(Error::Config("resolution models select on accuracy".into()))
            }
            (ModelKind::Generation(_), _) if self.validation_beam_width == 0 || self.max_decode_len == 0 => {
                Err(Error::Config("validation decoding needs a positive width and length".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&util::read_to_string(path)?)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("train config serializes")
    }

    /// Architecture for a generation run.
    pub fn gen_config(&self, vocab_size: usize, visual_dim: usize) -> Result<GenConfig> {
        let ModelKind::Generation(variant) = self.model else {
            return Err(Error::Config("not a generation config".into()));
        };
        let cfg = GenConfig {
            embed_dim: self.embed_dim,
            hidden_dim: self.hidden_dim,
            attn_dim: self.attn_dim,
            visual_dim,
            dropout: self.dropout,
            ..GenConfig::defaults(variant, vocab_size)
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Architecture for a resolution run.
    pub fn resolver_config(
        &self,
        token_dim: usize,
        visual_dim: usize,
        image_universe: Vec<String>,
    ) -> Result<ResolverConfig> {
        let ModelKind::Resolution(variant) = self.model else {
            return Err(Error::Config("not a resolution config".into()));
        };
        let cfg = ResolverConfig {
            token_dim,
            hidden_dim: self.hidden_dim,
            attn_dim: self.attn_dim,
            visual_dim,
            dropout: self.dropout,
            image_universe: if variant == ResolverVariant::OneHot {
                image_universe
            } else {
                Vec::new()
            },
            ..ResolverConfig::defaults(variant)
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
