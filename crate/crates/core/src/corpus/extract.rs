use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::refset::ReferenceSets;
use super::schema::{GameLog, Message, SelectionLabel};
use super::scoring::UtteranceScorer;
use super::select::{select_chain_utterances, ScoredCandidate};
use super::ChainRecord;
use crate::error::{Error, Result};

/// Candidate messages for one image in one round.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub round_index: u32,
    pub messages: Vec<Message>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractConfig {
    /// Candidates kept per image before conflict resolution.
    pub top_n: usize,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        ExtractConfig { top_n: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainEntry {
    pub round_index: u32,
    pub message_id: u32,
    pub text: String,
    pub score: f64,
}

/// Co-referring utterances for one (game, image), at most one per round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceChain {
    pub game_id: String,
    pub image_id: String,
    pub entries: Vec<ChainEntry>,
}

impl ReferenceChain {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn records(&self) -> Vec<ChainRecord> {
        self.entries
            .iter()
            .enumerate()
            .map(|(i, e)| ChainRecord {
                game_id: self.game_id.clone(),
                round_index: e.round_index,
                message_id: e.message_id,
                image_id: self.image_id.clone(),
                text: e.text.clone(),
                chain_position: i + 1,
                score: e.score,
            })
            .collect()
    }

    /// Regroups flat records into chains ordered by (game, image).
    pub fn from_records(records: &[ChainRecord]) -> Vec<ReferenceChain> {
        let mut map: BTreeMap<(String, String), Vec<&ChainRecord>> = BTreeMap::new();
        for r in records {
            map.entry((r.game_id.clone(), r.image_id.clone())).or_default().push(r);
        }
        map.into_iter()
            .map(|((game_id, image_id), mut rs)| {
                rs.sort_by_key(|r| (r.chain_position, r.round_index));
                ReferenceChain {
                    game_id,
                    image_id,
                    entries: rs
                        .into_iter()
                        .map(|r| ChainEntry {
                            round_index: r.round_index,
                            message_id: r.message_id,
                            text: r.text.clone(),
                            score: r.score,
                        })
                        .collect(),
                }
            })
            .collect()
    }
}

/// Per round with a *common* selection of `image_id`, from the first round in
/// which both speakers see it: the messages up to the earliest such selection,
/// by speakers who have the image in view. Rounds without candidates are
/// omitted.
pub fn extract_segments(game: &GameLog, image_id: &str) -> Result<Vec<Segment>> {
    if !game.contains_image(image_id) {
        return Err(Error::Input(format!(
            "image {image_id} does not appear in game {}",
            game.game_id
        )));
    }
    let Some(first) = game.first_co_visible_round(image_id) else {
        return Ok(Vec::new());
    };
    let mut out = Vec::new();
    for round in game.rounds.iter().filter(|r| r.round_index >= first) {
        let cut = round
            .selections
            .iter()
            .filter(|s| s.image_id == image_id && s.label == SelectionLabel::Common)
            .map(|s| s.position)
            .min();
        let Some(cut) = cut else { continue };
        let messages: Vec<Message> = round
            .messages
            .iter()
            .filter(|m| m.message_id <= cut && round.sees(&m.speaker, image_id))
            .cloned()
            .collect();
        if !messages.is_empty() {
            out.push(Segment {
                round_index: round.round_index,
                messages,
            });
        }
    }
    Ok(out)
}

/// Extracts all chains of one game. Rounds are processed in order; each
/// selected utterance joins its image's dynamic captions before the next
/// round is scored.
pub fn extract_game(
    game: &GameLog,
    refsets: &ReferenceSets,
    scorer: &UtteranceScorer<'_>,
    config: &ExtractConfig,
) -> Result<Vec<ReferenceChain>> {
    let images: BTreeSet<String> = game
        .rounds
        .iter()
        .flat_map(|r| r.selections.iter())
        .filter(|s| s.label == SelectionLabel::Common)
        .map(|s| s.image_id.clone())
        .collect();

    let mut segments: BTreeMap<(u32, String), Vec<Message>> = BTreeMap::new();
    for img in &images {
        for seg in extract_segments(game, img)? {
            segments.insert((seg.round_index, img.clone()), seg.messages);
        }
    }

    let mut dynamic: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut chains: BTreeMap<String, Vec<ChainEntry>> = BTreeMap::new();
    for round in &game.rounds {
        let context = round.all_images();
        let mut candidates: BTreeMap<String, Vec<ScoredCandidate>> = BTreeMap::new();
        for img in &images {
            let Some(messages) = segments.get(&(round.round_index, img.clone())) else {
                continue;
            };
            let refset = refsets.reference_set(img, dynamic.get(img).map_or(&[][..], |v| v))?;
            let distractors: Vec<BTreeSet<String>> = context
                .iter()
                .filter(|i| *i != img)
                .map(|i| refsets.vg_tokens(i))
                .collect();
            let mut scored = Vec::with_capacity(messages.len());
            for m in messages {
                scored.push(ScoredCandidate {
                    message_id: m.message_id,
                    text: m.text.clone(),
                    score: scorer.score(&m.text, &refset, &distractors)?,
                });
            }
            candidates.insert(img.clone(), scored);
        }
        for (img, pick) in select_chain_utterances(&candidates, config.top_n) {
            dynamic.entry(img.clone()).or_default().push(pick.text.clone());
            chains.entry(img).or_default().push(ChainEntry {
                round_index: round.round_index,
                message_id: pick.message_id,
                text: pick.text,
                score: pick.score,
            });
        }
    }

    Ok(chains
        .into_iter()
        .map(|(image_id, entries)| ReferenceChain {
            game_id: game.game_id.clone(),
            image_id,
            entries,
        })
        .collect())
}
