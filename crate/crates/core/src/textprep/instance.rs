use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::extended::extend_for_copy;
use super::tokenize::tokenize;
use super::vocab::{Vocabulary, EOS, NOHS_TOKEN, SOS};
use crate::corpus::{ChainRecord, GameLog};
use crate::error::{Error, Result};

/// Number of candidate images a speaker sees in one round.
pub const CONTEXT_SIZE: usize = 6;

/// One generation example: produce `target` for `context[target_pos]`
/// given the previous utterance of the chain (or `<nohs>`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenInstance {
    pub id: String,
    pub game_id: String,
    pub round_index: u32,
    pub message_id: u32,
    pub image_id: String,
    pub chain_position: usize,
    pub context: Vec<String>,
    pub target_pos: usize,
    pub source_tokens: Vec<String>,
    pub source: Vec<usize>,
    pub source_ext: Vec<usize>,
    pub extra: Vec<String>,
    pub target_tokens: Vec<String>,
    /// `<sos> t1 .. tn <eos>` in base-vocabulary indices.
    pub target: Vec<usize>,
    /// As `target`, with copied OOV tokens at their temporary indices.
    pub target_ext: Vec<usize>,
    /// Every utterance in this instance's chain, tokenized.
    pub chain_refs: Vec<Vec<String>>,
}

impl GenInstance {
    pub fn has_history(&self) -> bool {
        !(self.source_tokens.len() == 1 && self.source_tokens[0] == NOHS_TOKEN)
    }

    pub fn is_first(&self) -> bool {
        self.chain_position == 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub utterance_id: String,
    pub tokens: Vec<String>,
}

/// One resolution example: find `context[target_pos]` from `tokens`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResInstance {
    pub id: String,
    pub game_id: String,
    pub round_index: u32,
    pub message_id: u32,
    pub image_id: String,
    pub chain_position: usize,
    pub tokens: Vec<String>,
    pub context: Vec<String>,
    pub target_pos: usize,
    /// Last earlier chain utterance per candidate, if any.
    pub histories: Vec<Option<History>>,
}

impl ResInstance {
    pub fn is_first(&self) -> bool {
        self.chain_position == 1
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct InstanceSet {
    pub generation: Vec<GenInstance>,
    pub resolution: Vec<ResInstance>,
}

pub fn utterance_id(rec: &ChainRecord) -> String {
    format!(
        "{}:{}:{}:{}",
        rec.game_id, rec.round_index, rec.message_id, rec.image_id
    )
}

/// Encodes the chain records of one game into generation and resolution
/// instances. The context is the view of the speaker who produced the
/// utterance; histories only look at strictly earlier utterances.
pub fn build_instances(
    game: &GameLog,
    records: &[ChainRecord],
    vocab: &Vocabulary,
) -> Result<InstanceSet> {
    let mut records: Vec<&ChainRecord> = records
        .iter()
        .filter(|r| r.game_id == game.game_id)
        .collect();
    records.sort_by_key(|r| (r.round_index, r.message_id, r.image_id.clone()));

    let mut chains: BTreeMap<&str, Vec<&ChainRecord>> = BTreeMap::new();
    for r in &records {
        chains.entry(r.image_id.as_str()).or_default().push(r);
    }
    for chain in chains.values_mut() {
        chain.sort_by_key(|r| r.chain_position);
    }

    let mut out = InstanceSet::default();
    for rec in &records {
        let round = game.round(rec.round_index).ok_or_else(|| {
            Error::Input(format!(
                "chain record refers to missing round {} of game {}",
                rec.round_index, game.game_id
            ))
        })?;
        let speaker = round
            .messages
            .iter()
            .find(|m| m.message_id == rec.message_id)
            .map(|m| m.speaker.clone())
            .ok_or_else(|| {
                Error::Input(format!(
                    "chain record refers to missing message {} in game {} round {}",
                    rec.message_id, game.game_id, rec.round_index
                ))
            })?;
        let context = round.views.get(&speaker).cloned().ok_or_else(|| {
            Error::Input(format!("speaker {speaker} has no view in game {}", game.game_id))
        })?;
        let target_pos = context
            .iter()
            .position(|i| *i == rec.image_id)
            .ok_or_else(|| {
                Error::Input(format!(
                    "{} is not in the view of {speaker} (game {}, round {})",
                    rec.image_id, game.game_id, rec.round_index
                ))
            })?;

        let chain = &chains[rec.image_id.as_str()];
        let chain_refs: Vec<Vec<String>> = chain.iter().map(|r| tokenize(&r.text)).collect();
        let previous = chain
            .iter()
            .rev()
            .find(|r| r.chain_position < rec.chain_position);
        let source_tokens = match previous {
            Some(p) => {
                let t = tokenize(&p.text);
                if t.is_empty() {
                    vec![NOHS_TOKEN.to_string()]
                } else {
                    t
                }
            }
            None => vec![NOHS_TOKEN.to_string()],
        };
        let target_tokens = tokenize(&rec.text);
        let (ext, source_ext) = extend_for_copy(&source_tokens, vocab);
        let mut target = vec![SOS];
        target.extend(vocab.encode(&target_tokens));
        target.push(EOS);
        let mut target_ext = vec![SOS];
        target_ext.extend(ext.map_target(&target_tokens, vocab));
        target_ext.push(EOS);

        let id = utterance_id(rec);
        out.generation.push(GenInstance {
            id: id.clone(),
            game_id: rec.game_id.clone(),
            round_index: rec.round_index,
            message_id: rec.message_id,
            image_id: rec.image_id.clone(),
            chain_position: rec.chain_position,
            context: context.clone(),
            target_pos,
            source: vocab.encode(&source_tokens),
            source_tokens,
            source_ext,
            extra: ext.extra,
            target_tokens: target_tokens.clone(),
            target,
            target_ext,
            chain_refs,
        });

        let key = (rec.round_index, rec.message_id);
        let histories = context
            .iter()
            .map(|img| {
                chains.get(img.as_str()).and_then(|c| {
                    c.iter()
                        .filter(|r| (r.round_index, r.message_id) < key)
                        .max_by_key(|r| (r.round_index, r.message_id))
                        .map(|r| History {
                            utterance_id: utterance_id(r),
                            tokens: tokenize(&r.text),
                        })
                })
            })
            .collect();
        out.resolution.push(ResInstance {
            id,
            game_id: rec.game_id.clone(),
            round_index: rec.round_index,
            message_id: rec.message_id,
            image_id: rec.image_id.clone(),
            chain_position: rec.chain_position,
            tokens: target_tokens,
            context,
            target_pos,
            histories,
        });
    }
    Ok(out)
}
