use std::collections::BTreeSet;

use super::refset::ReferenceSet;
use crate::embed::EmbeddingScorer;
use crate::error::Result;
use crate::textprep::{tokenize, StopwordList};

/// Similarity F1 between a filtered utterance and one filtered caption.
pub trait CaptionSimilarity {
    /// Must return 0 when either side is empty.
    fn f1(&self, candidate: &[String], caption: &[String]) -> Result<f64>;
}

impl CaptionSimilarity for EmbeddingScorer<'_> {
    fn f1(&self, candidate: &[String], caption: &[String]) -> Result<f64> {
        Ok(self.score(candidate, caption)?.f1)
    }
}

/// METEOR F-mean with exact matching and no fragmentation penalty:
/// `10PR / (R + 9P)`. Each reference token aligns at most once.
pub fn meteor_fmean<S: AsRef<str>>(candidate: &[S], reference: &BTreeSet<String>) -> f64 {
    if candidate.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let mut used = BTreeSet::new();
    let matches = candidate
        .iter()
        .filter(|t| reference.contains(t.as_ref()) && used.insert(t.as_ref().to_string()))
        .count();
    if matches == 0 {
        return 0.0;
    }
    let p = matches as f64 / candidate.len() as f64;
    let r = matches as f64 / reference.len() as f64;
    10.0 * p * r / (r + 9.0 * p)
}

/// Caption similarity (best over static and dynamic captions) plus the
/// METEOR F-mean against target-only scene-graph tokens. Images without
/// scene-graph tokens get the caption component only.
pub fn score_utterance(
    utterance: &[String],
    refset: &ReferenceSet,
    distractor_vg: &[BTreeSet<String>],
    similarity: &dyn CaptionSimilarity,
    stopwords: &StopwordList,
) -> Result<f64> {
    let cand = stopwords.filter(utterance);
    let mut caption = 0.0f64;
    for c in refset.all_captions() {
        let toks = stopwords.filter(&tokenize(c));
        caption = caption.max(similarity.f1(&cand, &toks)?);
    }
    if refset.vg_tokens.is_empty() {
        return Ok(caption);
    }
    let mut target_only = refset.vg_tokens.clone();
    for d in distractor_vg {
        target_only.retain(|t| !d.contains(t));
    }
    Ok(caption + meteor_fmean(&cand, &target_only))
}

/// Bundles a similarity provider with the extraction stopword list.
pub struct UtteranceScorer<'a> {
    similarity: &'a dyn CaptionSimilarity,
    stopwords: StopwordList,
}

impl<'a> UtteranceScorer<'a> {
    pub fn new(similarity: &'a dyn CaptionSimilarity) -> Self {
        UtteranceScorer {
            similarity,
            stopwords: StopwordList::extraction(),
        }
    }

    pub fn with_stopwords(similarity: &'a dyn CaptionSimilarity, stopwords: StopwordList) -> Self {
        UtteranceScorer {
            similarity,
            stopwords,
        }
    }

    pub fn score(
        &self,
        text: &str,
        refset: &ReferenceSet,
        distractor_vg: &[BTreeSet<String>],
    ) -> Result<f64> {
        score_utterance(
            &tokenize(text),
            refset,
            distractor_vg,
            self.similarity,
            &self.stopwords,
        )
    }
}
