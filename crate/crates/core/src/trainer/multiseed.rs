use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::{mean, sample_sd};

/// Mean and sample standard deviation over runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
    pub runs: usize,
}

impl MeanSd {
    /// Needs at least two values.
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::Contract(format!(
                "mean and sd need at least 2 runs, got {}",
                values.len()
            )));
        }
        Ok(MeanSd {
            mean: mean(values),
            sd: sample_sd(values),
            runs: values.len(),
        })
    }
}

/// `mean (sd)` with two decimals.
impl fmt::Display for MeanSd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2} ({:.2})", self.mean, self.sd)
    }
}

/// Runs `run` once per seed, in order, and summarizes every metric it
/// reports. All runs must report the same metric names.
pub fn multiseed<F>(seeds: &[u64], mut run: F) -> Result<BTreeMap<String, MeanSd>>
where
    F: FnMut(u64) -> Result<BTreeMap<String, f64>>,
{
    if seeds.len() < 2 {
        return Err(Error::Contract("multiseed needs at least 2 seeds".into()));
    }
    let mut values: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (i, &seed) in seeds.iter().enumerate() {
        let metrics = run(seed)?;
        if i > 0 && (metrics.len() != values.len() || metrics.keys().any(|k| !values.contains_key(k))) {
            return Err(Error::Contract(format!("seed {seed} reported a different metric set")));
        }
        for (k, v) in metrics {
            values.entry(k).or_default().push(v);
        }
    }
    values
        .into_iter()
        .map(|(k, v)| MeanSd::from_values(&v).map(|s| (k, s)))
        .collect()
}
