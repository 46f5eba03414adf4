//! Reference-chain extraction, referring-utterance generation, reference
//! resolution and linguistic profiling for visually grounded dialogue.
//!
//! The crate is organised by pipeline stage:
//!
//! * [`corpus`] ingests game logs and extracts per-image reference chains.
//! * [`textprep`] tokenizes, builds vocabularies and encodes model instances.
//! * [`genmodels`] holds the Ref / ReRef / Copy generators and beam search.
//! * [`resolver`] holds the reference resolution model and its baselines.
//! * [`trainer`] runs training loops with early stopping and seeding.
//! * [`metrics`] scores generated text and resolution rankings.
//! * [`linganalysis`] measures givenness, compression and entrainment.
//! * [`pipeline`] ties the stages together behind a manifest.

pub mod corpus;
pub mod embed;
pub mod error;
pub mod features;
pub mod genmodels;
pub mod linganalysis;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod resolver;
pub mod synthetic;
pub mod textprep;
pub mod trainer;
pub mod util;

pub use corpus::{ChainRecord, GameLog, ReferenceChain, ReferenceSet};
pub use embed::{EmbeddingProvider, HashEmbedding};
pub use error::{Error, Result};
pub use features::FeatureTable;
pub use genmodels::{GenConfig, GenVariant, GenerationModel};
pub use resolver::{ResolverConfig, ResolverModel, ResolverVariant};
pub use textprep::{tokenize, Vocabulary};
pub use trainer::{RunRecord, TrainConfig};
