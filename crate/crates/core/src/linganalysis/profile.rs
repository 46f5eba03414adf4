use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::pos::Pos;
use crate::textprep::{is_content_token, StopwordList};

pub const GIVENNESS_MARKERS: [&str; 6] = ["the", "one", "same", "again", "also", "before"];
pub const DEFINITE_MARKERS: [&str; 1] = ["the"];
pub const SEEN_MARKERS: [&str; 5] = ["again", "before", "one", "same", "also"];
pub const INDEFINITE_MARKERS: [&str; 3] = ["some", "a", "an"];

/// Per-utterance measures. Marker proportions are over all tokens; PoS
/// proportions are over content tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinguisticProfile {
    pub chain_position: usize,
    pub givenness_prop: f64,
    pub definite_prop: f64,
    pub seen_prop: f64,
    pub indefinite_prop: f64,
    pub length_tokens: usize,
    pub length_content: usize,
    pub content_prop: f64,
    pub noun_prop: f64,
    pub adj_prop: f64,
    pub verb_prop: f64,
    pub ttr: f64,
    /// Set for an empty utterance, whose proportions are all 0.
    pub empty: bool,
}

fn share(count: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        count as f64 / total as f64
    }
}

fn count_in(tokens: &[String], set: &[&str]) -> usize {
    tokens.iter().filter(|t| set.contains(&t.as_str())).count()
}

pub fn profile(tokens: &[String], tags: &[Pos], chain_position: usize, stopwords: &StopwordList) -> LinguisticProfile {
    debug_assert_eq!(tokens.len(), tags.len());
    let n = tokens.len();
    let content: Vec<Pos> = tokens
        .iter()
        .zip(tags)
        .filter(|(t, _)| is_content_token(t, stopwords))
        .map(|(_, &p)| p)
        .collect();
    let c = content.len();
    let pos_count = |p: Pos| content.iter().filter(|&&x| x == p).count();
    let distinct: BTreeSet<&String> = tokens.iter().collect();
    LinguisticProfile {
        chain_position,
        givenness_prop: share(count_in(tokens, &GIVENNESS_MARKERS), n),
        definite_prop: share(count_in(tokens, &DEFINITE_MARKERS), n),
        seen_prop: share(count_in(tokens, &SEEN_MARKERS), n),
        indefinite_prop: share(count_in(tokens, &INDEFINITE_MARKERS), n),
        length_tokens: n,
        length_content: c,
        content_prop: share(c, n),
        noun_prop: share(pos_count(Pos::Noun), c),
        adj_prop: share(pos_count(Pos::Adj), c),
        verb_prop: share(pos_count(Pos::Verb), c),
        ttr: share(distinct.len(), n),
        empty: n == 0,
    }
}

/// Lexical entrainment of a later mention with respect to the previous one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReuseProfile {
    /// Reused content tokens over the current utterance's content tokens.
    pub reuse_c: f64,
    /// Same over content-token bigrams; `None` with fewer than two content tokens.
    pub reuse_bigrams_c: Option<f64>,
    /// Shares of the reused content tokens; `None` when nothing is reused.
    pub reused_noun: Option<f64>,
    pub reused_adj: Option<f64>,
    pub reused_verb: Option<f64>,
    /// Noun-noun pairs among the reused content bigrams.
    pub reused_nn_bigrams: Option<f64>,
}

fn multiset<T: Ord + Clone>(items: impl IntoIterator<Item = T>) -> BTreeMap<T, usize> {
    let mut m = BTreeMap::new();
    for x in items {
        *m.entry(x).or_insert(0) += 1;
    }
    m
}

/// Multiset reuse; bigrams are formed over the content-token subsequence.
/// Returns `None` when the current utterance has no content tokens.
pub fn reuse(
    prev: &[String],
    current: &[String],
    current_tags: &[Pos],
    stopwords: &StopwordList,
) -> Option<ReuseProfile> {
    debug_assert_eq!(current.len(), current_tags.len());
    let cur: Vec<(&String, Pos)> = current
        .iter()
        .zip(current_tags)
        .filter(|(t, _)| is_content_token(t, stopwords))
        .map(|(t, &p)| (t, p))
        .collect();
    if cur.is_empty() {
        return None;
    }
    let prev_c: Vec<&String> = prev.iter().filter(|t| is_content_token(t, stopwords)).collect();
    let mut available = multiset(prev_c.iter().copied());
    let mut reused_tags = Vec::new();
    for (t, p) in &cur {
        if let Some(k) = available.get_mut(*t).filter(|k| **k > 0) {
            *k -= 1;
            reused_tags.push(*p);
        }
    }
    let r = reused_tags.len();
    let tag_share = |p: Pos| (r > 0).then(|| share(reused_tags.iter().filter(|&&x| x == p).count(), r));

    let (reuse_bigrams_c, reused_nn_bigrams) = if cur.len() < 2 {
        (None, None)
    } else {
        let mut prev_bi = multiset(prev_c.windows(2).map(|w| (w[0], w[1])));
        let mut reused = 0usize;
        let mut nn = 0usize;
        for w in cur.windows(2) {
            if let Some(k) = prev_bi.get_mut(&(w[0].0, w[1].0)).filter(|k| **k > 0) {
                *k -= 1;
                reused += 1;
                nn += usize::from(w[0].1 == Pos::Noun && w[1].1 == Pos::Noun);
            }
        }
        (Some(share(reused, cur.len() - 1)), (reused > 0).then(|| share(nn, reused)))
    };
    Some(ReuseProfile {
        reuse_c: share(r, cur.len()),
        reuse_bigrams_c,
        reused_noun: tag_share(Pos::Noun),
        reused_adj: tag_share(Pos::Adj),
        reused_verb: tag_share(Pos::Verb),
        reused_nn_bigrams,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompoundKind {
    /// Both nouns occur in the previous mention.
    Reuse,
    /// At least one noun is new with respect to the previous mention.
    NonReuse,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompoundCandidate {
    pub modifier: String,
    pub head: String,
    pub kind: CompoundKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompoundAnalysis {
    /// Adjacent noun-noun bigrams over all adjacent bigrams.
    pub nn_prop: f64,
    /// Flagged only for utterances of at most the configured length.
    pub candidates: Vec<CompoundCandidate>,
}

pub const DEFAULT_COMPOUND_MAX_LEN: usize = 5;

pub fn nn_compounds(prev: Option<&[String]>, tokens: &[String], tags: &[Pos], max_len: usize) -> CompoundAnalysis {
    debug_assert_eq!(tokens.len(), tags.len());
    let pairs: Vec<usize> = (1..tokens.len())
        .filter(|&i| tags[i - 1] == Pos::Noun && tags[i] == Pos::Noun)
        .collect();
    let mut candidates = Vec::new();
    if tokens.len() <= max_len {
        for &i in &pairs {
            let (m, h) = (&tokens[i - 1], &tokens[i]);
            let kind = match prev {
                Some(p) if p.contains(m) && p.contains(h) => CompoundKind::Reuse,
                _ => CompoundKind::NonReuse,
            };
            candidates.push(CompoundCandidate {
                modifier: m.clone(),
                head: h.clone(),
                kind,
            });
        }
    }
    CompoundAnalysis {
        nn_prop: share(pairs.len(), tokens.len().saturating_sub(1)),
        candidates,
    }
}
