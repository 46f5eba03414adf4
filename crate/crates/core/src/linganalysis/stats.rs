use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::util::mean;

/// Two-group comparison of one measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatResult {
    pub mean_a: f64,
    pub mean_b: f64,
    pub n_a: usize,
    pub n_b: usize,
    /// `(mean_a - mean_b) / pooled_sd`; `None` when the pooled variance is 0.
    pub cohens_d: Option<f64>,
    /// Two-sided equal-variance t-test; `None` when the pooled variance is 0.
    pub p_value: Option<f64>,
    pub stars: String,
}

/// `***` below 0.001, `**` below 0.005, `*` below 0.01.
pub fn significance_stars(p: Option<f64>) -> &'static str {
    match p {
        Some(p) if p < 0.001 => "***",
        Some(p) if p < 0.005 => "**",
        Some(p) if p < 0.01 => "*",
        _ => "",
    }
}

fn pooled_variance(a: &[f64], b: &[f64]) -> f64 {
    let ss = |xs: &[f64]| {
        let m = mean(xs);
        xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>()
    };
    (ss(a) + ss(b)) / (a.len() + b.len() - 2) as f64
}

/// Cohen's d with the pooled standard deviation.
pub fn cohens_d(a: &[f64], b: &[f64]) -> Result<Option<f64>> {
    check(a, b)?;
    let v = pooled_variance(a, b);
    Ok((v > 0.0).then(|| (mean(a) - mean(b)) / v.sqrt()))
}

fn check(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Input(format!(
            "comparison needs at least 2 samples per group, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

pub fn compare(a: &[f64], b: &[f64]) -> Result<StatResult> {
    check(a, b)?;
    let (ma, mb) = (mean(a), mean(b));
    let v = pooled_variance(a, b);
    let (d, p) = if v > 0.0 {
        let se = (v * (1.0 / a.len() as f64 + 1.0 / b.len() as f64)).sqrt();
        let t = (ma - mb) / se;
        let df = (a.len() + b.len() - 2) as f64;
        let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Contract(e.to_string()))?;
        let p = (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0);
        (Some((ma - mb) / v.sqrt()), Some(p))
    } else {
        (None, None)
    };
    Ok(StatResult {
        mean_a: ma,
        mean_b: mb,
        n_a: a.len(),
        n_b: b.len(),
        cohens_d: d,
        p_value: p,
        stars: significance_stars(p).to_string(),
    })
}
