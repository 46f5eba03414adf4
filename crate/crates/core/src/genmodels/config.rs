use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GenVariant {
    /// Visual input only.
    Ref,
    /// Attends over the previous mention.
    ReRef,
    /// ReRef plus a copy gate over the previous mention.
    Copy,
}

impl GenVariant {
    pub const ALL: [GenVariant; 3] = [GenVariant::Ref, GenVariant::ReRef, GenVariant::Copy];

    pub fn tag(self) -> &'static str {
        match self {
            GenVariant::Ref => "ref",
            GenVariant::ReRef => "reref",
            GenVariant::Copy => "copy",
        }
    }

    pub fn uses_history(self) -> bool {
        !matches!(self, GenVariant::Ref)
    }
}

impl std::str::FromStr for GenVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ref" => Ok(GenVariant::Ref),
            "reref" => Ok(GenVariant::ReRef),
            "copy" => Ok(GenVariant::Copy),
            other => Err(Error::Input(format!("unknown generation variant `{other}`"))),
        }
    }
}

impl std::fmt::Display for GenVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

/// Architecture of a generation model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub variant: GenVariant,
    /// Full vocabulary size including `<nohs>`.
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub attn_dim: usize,
    pub visual_dim: usize,
    pub context_size: usize,
    pub dropout: f32,
}

impl GenConfig {
    /// Published settings: 1024-d embeddings, 512-d hidden and attention
    /// layers, 2048-d image features, dropout 0.3 (0 for Copy).
    pub fn defaults(variant: GenVariant, vocab_size: usize) -> Self {
        GenConfig {
            variant,
            vocab_size,
            embed_dim: 1024,
            hidden_dim: 512,
            attn_dim: 512,
            visual_dim: 2048,
            context_size: 6,
            dropout: if variant == GenVariant::Copy { 0.0 } else { 0.3 },
        }
    }

    /// Decoder output size: the vocabulary without `<nohs>`.
    pub fn output_size(&self) -> usize {
        self.vocab_size - 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size <= crate::textprep::NOHS {
            return Err(Error::Config(format!(
                "vocabulary of {} cannot hold the special tokens",
                self.vocab_size
            )));
        }
        if [self.embed_dim, self.hidden_dim, self.attn_dim, self.visual_dim, self.context_size]
            .contains(&0)
        {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}
