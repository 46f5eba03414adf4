use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util;

pub const ROUNDS_PER_GAME: usize = 5;
pub const VIEW_SIZE: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
    Annotated,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
            Split::Annotated => "annotated",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            "annotated" => Ok(Split::Annotated),
            other => Err(Error::Input(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionLabel {
    Common,
    Different,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub message_id: u32,
    pub speaker: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionEvent {
    pub speaker: String,
    pub image_id: String,
    pub label: SelectionLabel,
    /// Id of the message after which the selection happened; 0 = round start.
    #[serde(rename = "after")]
    pub position: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round_index: u32,
    pub messages: Vec<Message>,
    pub selections: Vec<SelectionEvent>,
    /// Speaker id -> the 6 images in that speaker's photo book.
    pub views: BTreeMap<String, Vec<String>>,
}

impl RoundLog {
    pub fn sees(&self, speaker: &str, image_id: &str) -> bool {
        self.views
            .get(speaker)
            .is_some_and(|v| v.iter().any(|i| i == image_id))
    }

    /// True when every speaker has the image in view.
    pub fn co_visible(&self, image_id: &str) -> bool {
        !self.views.is_empty() && self.views.keys().all(|s| self.sees(s, image_id))
    }

    /// Union of all speakers' views, in first-seen order.
    pub fn all_images(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for view in self.views.values() {
            for img in view {
                if seen.insert(img.clone()) {
                    out.push(img.clone());
                }
            }
        }
        out
    }
}

/// A dialogue of five rounds. Serialized as one JSON object per line:
///
/// ```json
/// {"game_id": "g1", "split": "train", "rounds": [
///   {"round_index": 1,
///    "views": {"A": ["img_1", ...6], "B": [...6]},
///    "messages": [{"message_id": 1, "speaker": "A", "text": "hi"}],
///    "selections": [{"speaker": "A", "image_id": "img_1", "label": "common", "after": 1}]}
/// ]}
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameLog {
    pub game_id: String,
    pub split: Split,
    pub rounds: Vec<RoundLog>,
}

impl GameLog {
    pub fn round(&self, index: u32) -> Option<&RoundLog> {
        self.rounds.iter().find(|r| r.round_index == index)
    }

    pub fn contains_image(&self, image_id: &str) -> bool {
        self.rounds
            .iter()
            .any(|r| r.views.values().flatten().any(|i| i == image_id))
    }

    /// First round in which both speakers see the image.
    pub fn first_co_visible_round(&self, image_id: &str) -> Option<u32> {
        self.rounds
            .iter()
            .find(|r| r.co_visible(image_id))
            .map(|r| r.round_index)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Input(format!("game {}: {msg}", self.game_id)));
        if self.rounds.len() != ROUNDS_PER_GAME {
            return bad(format!("expected {ROUNDS_PER_GAME} rounds, found {}", self.rounds.len()));
        }
        let mut seen_ids = HashSet::new();
        for (i, round) in self.rounds.iter().enumerate() {
            if round.round_index != i as u32 + 1 {
                return bad(format!("round indices must be 1..=5 in order, found {}", round.round_index));
            }
            for (speaker, view) in &round.views {
                if view.len() != VIEW_SIZE {
                    return bad(format!(
                        "round {}: speaker {speaker} sees {} images, expected {VIEW_SIZE}",
                        round.round_index,
                        view.len()
                    ));
                }
            }
            let mut last = 0;
            for m in &round.messages {
                if m.message_id <= last && last != 0 {
                    return bad(format!("round {}: message ids must increase", round.round_index));
                }
                last = m.message_id;
                if !seen_ids.insert(m.message_id) {
                    return bad(format!("duplicate message id {}", m.message_id));
                }
            }
            for s in &round.selections {
                if !round.sees(&s.speaker, &s.image_id) {
                    return bad(format!(
                        "round {}: {} selected {} which is not in their view",
                        round.round_index, s.speaker, s.image_id
                    ));
                }
                if s.position != 0 && !round.messages.iter().any(|m| m.message_id == s.position) {
                    return bad(format!(
                        "round {}: selection after unknown message {}",
                        round.round_index, s.position
                    ));
                }
            }
        }
        Ok(())
    }
}

pub fn load_games(path: &Path) -> Result<Vec<GameLog>> {
    let games: Vec<GameLog> = util::read_jsonl(path)?;
    for g in &games {
        g.validate()?;
    }
    Ok(games)
}
