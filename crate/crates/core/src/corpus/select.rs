use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub message_id: u32,
    pub text: String,
    pub score: f64,
}

fn ranked(cands: &[ScoredCandidate], n: usize) -> Vec<&ScoredCandidate> {
    let mut v: Vec<&ScoredCandidate> = cands.iter().collect();
    v.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.message_id.cmp(&b.message_id)));
    v.truncate(n);
    v
}

/// Picks at most one utterance per image for one round.
///
/// Each image keeps its `n` best candidates (ties: earlier message first). A
/// pair is dropped when the same message sits in another image's list with a
/// higher score; on equal scores the lexicographically smaller image keeps
/// it. Each image then takes its best surviving candidate. Images whose whole
/// list is claimed elsewhere get nothing.
pub fn select_chain_utterances(
    candidates: &BTreeMap<String, Vec<ScoredCandidate>>,
    n: usize,
) -> BTreeMap<String, ScoredCandidate> {
    let n = n.max(1);
    let lists: BTreeMap<&str, Vec<&ScoredCandidate>> = candidates
        .iter()
        .map(|(img, c)| (img.as_str(), ranked(c, n)))
        .collect();

    let beaten = |img: &str, cand: &ScoredCandidate| {
        lists.iter().any(|(other, list)| {
            *other != img
                && list.iter().any(|o| {
                    o.message_id == cand.message_id
                        && (o.score > cand.score || (o.score == cand.score && *other < img))
                })
        })
    };

    let mut out = BTreeMap::new();
    for (img, list) in &lists {
        if let Some(best) = list.iter().find(|c| !beaten(img, c)) {
            out.insert(img.to_string(), (*best).clone());
        }
    }
    out
}
