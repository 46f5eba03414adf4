use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ResolverVariant {
    /// Candidates augmented with their last earlier mention.
    #[serde(rename = "resolver")]
    Full,
    /// Same architecture with every history removed.
    #[serde(rename = "resolver-ablated")]
    Ablated,
    /// Scores candidates from one-hot image ids alone.
    #[serde(rename = "baseline-onehot")]
    OneHot,
}

impl ResolverVariant {
    pub fn tag(self) -> &'static str {
        match self {
            ResolverVariant::Full => "resolver",
            ResolverVariant::Ablated => "resolver-ablated",
            ResolverVariant::OneHot => "baseline-onehot",
        }
    }
}

impl std::str::FromStr for ResolverVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "resolver" | "full" => Ok(ResolverVariant::Full),
            "resolver-ablated" | "ablated" => Ok(ResolverVariant::Ablated),
            "baseline-onehot" | "onehot" => Ok(ResolverVariant::OneHot),
            other => Err(Error::Input(format!("unknown resolver variant `{other}`"))),
        }
    }
}

impl std::fmt::Display for ResolverVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolverConfig {
    pub variant: ResolverVariant,
    /// Dimension of the contextual token embeddings.
    pub token_dim: usize,
    pub hidden_dim: usize,
    pub attn_dim: usize,
    pub visual_dim: usize,
    pub context_size: usize,
    pub dropout: f32,
    /// Image ids known to the one-hot baseline; empty for the other variants.
    #[serde(default)]
    pub image_universe: Vec<String>,
}

impl ResolverConfig {
    /// Published settings: 768-d token embeddings, 512-d hidden and
    /// attention layers, dropout 0.5.
    pub fn defaults(variant: ResolverVariant) -> Self {
        ResolverConfig {
            variant,
            token_dim: 768,
            hidden_dim: 512,
            attn_dim: 512,
            visual_dim: 2048,
            context_size: 6,
            dropout: 0.5,
            image_universe: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if [self.token_dim, self.hidden_dim, self.attn_dim, self.visual_dim, self.context_size]
            .contains(&0)
        {
            return Err(Error::Config("resolver dimensions must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.variant == ResolverVariant::OneHot && self.image_universe.is_empty() {
            return Err(Error::Config("the one-hot baseline needs an image universe".into()));
        }
        Ok(())
    }
}
