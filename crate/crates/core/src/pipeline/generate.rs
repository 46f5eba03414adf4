use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embed::EmbeddingProvider;
use crate::error::{Error, Result};
use crate::features::FeatureTable;
use crate::genmodels::{BeamConfig, GenVariant, GenerationModel};
use crate::resolver::{ResBatch, Resolution, ResolverModel};
use crate::textprep::{detokenize, GenInstance, ResInstance, Vocabulary};

/// One decoded utterance, tied to the instance it was produced for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisRecord {
    pub manifest_hash: String,
    pub seed: u64,
    pub variant: GenVariant,
    pub instance_id: String,
    pub game_id: String,
    pub image_id: String,
    pub chain_position: usize,
    /// Gold previous mention the model was conditioned on.
    pub previous: Option<Vec<String>>,
    pub tokens: Vec<String>,
    pub text: String,
    /// False when decoding stopped at the length limit.
    pub finished: bool,
}

/// Decodes every instance with the checkpointed model. Refuses to run when
/// the checkpoint was trained with a different vocabulary.
pub fn generate_for_split(
    checkpoint: &Path,
    vocab: &Vocabulary,
    features: &FeatureTable,
    instances: &[GenInstance],
    beam: &BeamConfig,
    manifest_hash: &str,
) -> Result<Vec<HypothesisRecord>> {
    let (model, meta) = GenerationModel::load(checkpoint)?;
    let hash = vocab.content_hash();
    if meta.vocab_hash != hash {
        return Err(Error::Input(format!(
            "{} was trained with vocabulary {} but the dataset uses {}; rerun prep and training together",
            checkpoint.display(),
            short(&meta.vocab_hash),
            short(&hash)
        )));
    }
    instances
        .iter()
        .map(|inst| {
            let out = model.generate(inst, features, vocab, beam)?;
            Ok(HypothesisRecord {
                manifest_hash: manifest_hash.to_string(),
                seed: meta.seed,
                variant: meta.variant,
                instance_id: inst.id.clone(),
                game_id: inst.game_id.clone(),
                image_id: inst.image_id.clone(),
                chain_position: inst.chain_position,
                previous: inst.has_history().then(|| inst.source_tokens.clone()),
                text: detokenize(&out.tokens),
                tokens: out.tokens,
                finished: out.finished,
            })
        })
        .collect()
}

fn short(hash: &str) -> &str {
    &hash[..hash.len().min(12)]
}

/// Resolves instances in batches of `batch_size`.
pub fn resolve_all(
    model: &ResolverModel,
    instances: &[ResInstance],
    features: &FeatureTable,
    provider: &dyn EmbeddingProvider,
    batch_size: usize,
) -> Result<Vec<Resolution>> {
    let mut out = Vec::with_capacity(instances.len());
    for chunk in instances.chunks(batch_size.max(1)) {
        let refs: Vec<&ResInstance> = chunk.iter().collect();
        let batch = ResBatch::new(&refs, features, provider, model.config().context_size)?;
        out.extend(model.resolve(&model.forward(&batch, None)?)?);
    }
    Ok(out)
}

/// The resolution instance with its utterance replaced by a hypothesis.
/// The id changes so cached embeddings of the human utterance are not used.
pub fn with_hypothesis(inst: &ResInstance, tokens: &[String]) -> ResInstance {
    ResInstance {
        id: format!("{}#hyp", inst.id),
        tokens: tokens.to_vec(),
        ..inst.clone()
    }
}
