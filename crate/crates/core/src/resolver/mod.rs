//! Reference resolution: pick the target among six candidates given an
//! utterance.
//!
//! The utterance is encoded by attention over multimodal token vectors
//! (token embedding joined with the visual context). Each candidate is its
//! projected image features, plus the projected mean embedding of its last
//! earlier mention when one exists. Candidates are scored by dot product.

mod batch;
mod config;
mod model;

pub use batch::ResBatch;
pub use config::{ResolverConfig, ResolverVariant};
pub use model::{resolve_scores, ResCheckpointMeta, Resolution, ResolverForward, ResolverModel};

use rand::Rng;

use crate::error::{Error, Result};
use crate::textprep::ResInstance;

/// Uniform guess among `n` candidates.
pub fn random_choice<R: Rng>(rng: &mut R, n: usize) -> usize {
    rng.random_range(0..n)
}

/// Parses `game:round:message:image` utterance ids.
fn utterance_position(id: &str) -> Option<(String, u32, u32)> {
    let mut parts = id.splitn(4, ':');
    let game = parts.next()?.to_string();
    let round = parts.next()?.parse().ok()?;
    let msg = parts.next()?.parse().ok()?;
    parts.next()?;
    Some((game, round, msg))
}

/// Every history must come from the same game and strictly before the
/// utterance being resolved.
pub fn check_history_causality(inst: &ResInstance) -> Result<()> {
    for h in inst.histories.iter().flatten() {
        let (game, round, msg) = utterance_position(&h.utterance_id)
            .ok_or_else(|| Error::Input(format!("malformed utterance id {}", h.utterance_id)))?;
        if game != inst.game_id || (round, msg) >= (inst.round_index, inst.message_id) {
            return Err(Error::Contract(format!(
                "history {} is not earlier than {}",
                h.utterance_id, inst.id
            )));
        }
    }
    Ok(())
}
