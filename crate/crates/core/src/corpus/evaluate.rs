use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::extract::ReferenceChain;

/// An utterance-to-image link.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Link {
    pub game_id: String,
    pub round_index: u32,
    pub message_id: u32,
    pub image_id: String,
}

/// Hand-annotated links, stored one JSON object per line.
pub type GoldLink = Link;

impl Link {
    pub fn from_chains(chains: &[ReferenceChain]) -> Vec<Link> {
        chains
            .iter()
            .flat_map(|c| {
                c.entries.iter().map(move |e| Link {
                    game_id: c.game_id.clone(),
                    round_index: e.round_index,
                    message_id: e.message_id,
                    image_id: c.image_id.clone(),
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionEval {
    /// `None` when nothing was extracted.
    pub precision: Option<f64>,
    /// `None` when the gold set is empty.
    pub recall: Option<f64>,
    pub correct: usize,
    pub extracted: usize,
    pub gold: usize,
}

/// Link-level precision and recall. Duplicate links count once.
pub fn evaluate_extraction(extracted: &[Link], gold: &[GoldLink]) -> ExtractionEval {
    let ex: BTreeSet<&Link> = extracted.iter().collect();
    let gd: BTreeSet<&Link> = gold.iter().collect();
    let correct = ex.intersection(&gd).count();
    if ex.is_empty() {
        log::warn!("no extracted links; precision undefined");
    }
    let ratio = |n: usize| (n > 0).then(|| correct as f64 / n as f64);
    ExtractionEval {
        precision: ratio(ex.len()),
        recall: ratio(gd.len()),
        correct,
        extracted: ex.len(),
        gold: gd.len(),
    }
}
