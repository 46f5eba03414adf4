//! Generation and resolution metrics, the verbatim-reuse baseline, and the
//! First / Later / Overall report.
//!
//! Similarity scores use a 0-100 scale. CIDEr is computed on its native
//! scale (identity maximum 10) and reported times 100.

mod ngram;
mod report;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub use ngram::{bleu2, cider, lcs_len, rouge_l, rouge_l_sentence, ROUGE_BETA};
pub use report::{aggregate, evaluate, render_table, AggregateReport, Cell, MetricReport, SubsetScores};

use crate::embed::{EmbeddingProvider, EmbeddingScorer};
use crate::error::{Error, Result};
use crate::textprep::{is_content_token, StopwordList};

/// Mean over hypotheses of the best embedding F1 against the hypothesis's
/// chain references, x100.
pub fn embedding_f1(
    hypotheses: &[Vec<String>],
    references: &[Vec<Vec<String>>],
    provider: &dyn EmbeddingProvider,
) -> Result<f64> {
    if hypotheses.is_empty() {
        return Err(Error::Input("empty hypothesis set".into()));
    }
    if hypotheses.len() != references.len() {
        return Err(Error::Input("hypothesis and reference counts differ".into()));
    }
    let scorer = EmbeddingScorer::new(provider);
    let mut sum = 0.0;
    for (h, r) in hypotheses.iter().zip(references) {
        sum += scorer.best_f1(h, r)?;
    }
    Ok(100.0 * sum / hypotheses.len() as f64)
}

/// A full candidate ranking (best first) and the gold candidate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankedTarget {
    pub ranking: Vec<usize>,
    pub target: usize,
}

/// 1-based rank of the target.
pub fn target_rank(r: &RankedTarget) -> Result<usize> {
    r.ranking
        .iter()
        .position(|&c| c == r.target)
        .map(|p| p + 1)
        .ok_or_else(|| Error::Contract(format!("target {} missing from ranking {:?}", r.target, r.ranking)))
}

/// (accuracy, MRR), both x100.
pub fn accuracy_mrr(rankings: &[RankedTarget]) -> Result<(f64, f64)> {
    if rankings.is_empty() {
        return Err(Error::Input("no rankings to score".into()));
    }
    let mut hits = 0usize;
    let mut rr = 0.0;
    for r in rankings {
        let rank = target_rank(r)?;
        hits += usize::from(rank == 1);
        rr += 1.0 / rank as f64;
    }
    let n = rankings.len() as f64;
    Ok((100.0 * hits as f64 / n, 100.0 * rr / n))
}

/// One generated utterance with everything needed to score it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalItem {
    pub instance_id: String,
    pub game_id: String,
    pub image_id: String,
    /// 1 for the first mention of the image in its chain.
    pub chain_position: usize,
    pub hypothesis: Vec<String>,
    pub references: Vec<Vec<String>>,
    /// Resolver output on the hypothesis, if it was resolved.
    #[serde(default)]
    pub resolution: Option<RankedTarget>,
}

impl EvalItem {
    pub fn is_first(&self) -> bool {
        self.chain_position == 1
    }
}

/// Later-mention items whose hypotheses are replaced by the chain's first
/// generated utterance. Chains without a first-mention item are skipped.
/// Resolutions are cleared, since they belong to the original hypotheses.
pub fn verbatim_baseline(items: &[EvalItem]) -> Vec<EvalItem> {
    let mut first: BTreeMap<(&str, &str), &EvalItem> = BTreeMap::new();
    for it in items.iter().filter(|i| i.is_first()) {
        first.entry((&it.game_id, &it.image_id)).or_insert(it);
    }
    let mut warned: BTreeSet<(&str, &str)> = BTreeSet::new();
    let mut out = Vec::new();
    for it in items.iter().filter(|i| !i.is_first()) {
        let key = (it.game_id.as_str(), it.image_id.as_str());
        match first.get(&key) {
            Some(f) => out.push(EvalItem {
                hypothesis: f.hypothesis.clone(),
                resolution: None,
                ..it.clone()
            }),
            None => {
                if warned.insert(key) {
                    log::warn!("chain {}/{} has no first-mention generation; skipped", key.0, key.1);
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepetitionStats {
    /// Fraction of utterances with a content word occurring twice or more.
    pub repeat_rate: f64,
    /// Distinct tokens over all utterances.
    pub vocab_size: usize,
}

pub fn repetition_and_vocab(hypotheses: &[Vec<String>], stopwords: &StopwordList) -> RepetitionStats {
    let mut vocab: BTreeSet<&str> = BTreeSet::new();
    let mut repeating = 0usize;
    for h in hypotheses {
        let mut seen: BTreeSet<&str> = BTreeSet::new();
        let mut dup = false;
        for t in h {
            vocab.insert(t);
            if is_content_token(t, stopwords) && !seen.insert(t) {
                dup = true;
            }
        }
        repeating += usize::from(dup);
    }
    RepetitionStats {
        repeat_rate: if hypotheses.is_empty() {
            0.0
        } else {
            repeating as f64 / hypotheses.len() as f64
        },
        vocab_size: vocab.len(),
    }
}
