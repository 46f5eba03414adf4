use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::extract::ReferenceChain;
use crate::error::{Error, Result};
use crate::textprep::tokenize;
use crate::util;

/// Token-length summary; `sd` uses the n - 1 denominator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthStats {
    pub count: usize,
    pub mean: f64,
    pub sd: f64,
}

impl LengthStats {
    fn of(xs: &[f64]) -> Self {
        LengthStats {
            count: xs.len(),
            mean: util::mean(xs),
            sd: util::sample_sd(xs),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainStatistics {
    pub chains: usize,
    pub utterances: usize,
    pub first: LengthStats,
    pub later: LengthStats,
    /// Chain length -> number of chains.
    pub length_distribution: BTreeMap<usize, usize>,
    pub length_mean: f64,
    pub length_sd: f64,
    pub length_median: f64,
}

pub fn chain_statistics(chains: &[ReferenceChain]) -> Result<ChainStatistics> {
    if chains.is_empty() {
        return Err(Error::Input("no chains to summarise".into()));
    }
    let mut first = Vec::new();
    let mut later = Vec::new();
    let mut lengths = Vec::new();
    let mut dist = BTreeMap::new();
    for c in chains {
        for (i, e) in c.entries.iter().enumerate() {
            let n = tokenize(&e.text).len() as f64;
            if i == 0 {
                first.push(n);
            } else {
                later.push(n);
            }
        }
        lengths.push(c.len() as f64);
        *dist.entry(c.len()).or_insert(0) += 1;
    }
    Ok(ChainStatistics {
        chains: chains.len(),
        utterances: first.len() + later.len(),
        first: LengthStats::of(&first),
        later: LengthStats::of(&later),
        length_distribution: dist,
        length_mean: util::mean(&lengths),
        length_sd: util::sample_sd(&lengths),
        length_median: util::median(&lengths),
    })
}
