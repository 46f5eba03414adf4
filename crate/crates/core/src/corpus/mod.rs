//! Game-log ingestion and reference-chain extraction.
//!
//! Extraction runs in three steps per game: collect candidate utterances
//! before each *common* selection ([`extract_segments`]), score them against
//! the image's reference set ([`score_utterance`]), and keep at most one
//! utterance per image and round ([`select_chain_utterances`]).

mod evaluate;
mod extract;
mod refset;
mod schema;
mod scoring;
mod select;
mod stats;

pub use evaluate::{evaluate_extraction, ExtractionEval, GoldLink, Link};
pub use extract::{extract_game, extract_segments, ChainEntry, ExtractConfig, ReferenceChain, Segment};
pub use refset::{load_captions, load_scene_graphs, ReferenceSet, ReferenceSets, VisualGenomeTokens};
pub use schema::{load_games, GameLog, Message, RoundLog, SelectionEvent, SelectionLabel, Split};
pub use scoring::{meteor_fmean, score_utterance, CaptionSimilarity, UtteranceScorer};
pub use select::{select_chain_utterances, ScoredCandidate};
pub use stats::{chain_statistics, ChainStatistics, LengthStats};

use serde::{Deserialize, Serialize};

/// One extracted utterance, as written to the chain dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainRecord {
    pub game_id: String,
    pub round_index: u32,
    pub message_id: u32,
    pub image_id: String,
    pub text: String,
    /// 1 for the first mention, 2.. for subsequent references.
    pub chain_position: usize,
    pub score: f64,
}
