use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::pos::PosTagger;
use super::profile::{
    nn_compounds, profile, reuse, CompoundCandidate, CompoundKind, LinguisticProfile, ReuseProfile,
    DEFAULT_COMPOUND_MAX_LEN,
};
use super::stats::{compare, StatResult};
use crate::error::{Error, Result};
use crate::textprep::StopwordList;
use crate::util::mean;

/// An utterance in its chain, with the previous mention when there is one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainUtterance {
    pub id: String,
    pub chain_position: usize,
    pub tokens: Vec<String>,
    #[serde(default)]
    pub previous: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub compound_max_len: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            compound_max_len: DEFAULT_COMPOUND_MAX_LEN,
        }
    }
}

/// Per-utterance measures for one system (human or model).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemAnalysis {
    pub name: String,
    pub profiles: Vec<LinguisticProfile>,
    /// Noun-noun bigram proportion, aligned with `profiles`.
    pub nn_props: Vec<f64>,
    /// Later mentions with a previous utterance and content tokens.
    pub reuse: Vec<ReuseProfile>,
    /// Later mentions whose reuse was undefined.
    pub reuse_skipped: usize,
    pub compounds: Vec<(String, CompoundCandidate)>,
    pub vocab_first: usize,
    pub vocab_later: usize,
}

pub fn analyze(
    name: &str,
    utterances: &[ChainUtterance],
    tagger: &dyn PosTagger,
    stopwords: &StopwordList,
    config: &AnalysisConfig,
) -> SystemAnalysis {
    let mut out = SystemAnalysis {
        name: name.to_string(),
        profiles: Vec::with_capacity(utterances.len()),
        nn_props: Vec::with_capacity(utterances.len()),
        reuse: Vec::new(),
        reuse_skipped: 0,
        compounds: Vec::new(),
        vocab_first: 0,
        vocab_later: 0,
    };
    let mut vocab_first: BTreeSet<&str> = BTreeSet::new();
    let mut vocab_later: BTreeSet<&str> = BTreeSet::new();
    for u in utterances {
        let tags = tagger.tag(&u.tokens);
        let p = profile(&u.tokens, &tags, u.chain_position, stopwords);
        if p.empty {
            log::warn!("utterance {} is empty", u.id);
        }
        out.profiles.push(p);
        let c = nn_compounds(u.previous.as_deref(), &u.tokens, &tags, config.compound_max_len);
        out.nn_props.push(c.nn_prop);
        out.compounds.extend(c.candidates.into_iter().map(|k| (u.id.clone(), k)));
        let vocab = if u.chain_position == 1 {
            &mut vocab_first
        } else {
            &mut vocab_later
        };
        vocab.extend(u.tokens.iter().map(String::as_str));
        if u.chain_position > 1 {
            match u.previous.as_ref().and_then(|prev| reuse(prev, &u.tokens, &tags, stopwords)) {
                Some(r) => out.reuse.push(r),
                None => out.reuse_skipped += 1,
            }
        }
    }
    out.vocab_first = vocab_first.len();
    out.vocab_later = vocab_later.len();
    out
}

pub const TREND_MEASURES: [&str; 12] = [
    "givenness",
    "definite",
    "seen",
    "indefinite",
    "length",
    "length_c",
    "prop content",
    "prop noun",
    "prop adj",
    "prop verb",
    "ttr",
    "nn bigrams",
];

fn trend_value(p: &LinguisticProfile, nn: f64, measure: usize) -> f64 {
    match measure {
        0 => p.givenness_prop,
        1 => p.definite_prop,
        2 => p.seen_prop,
        3 => p.indefinite_prop,
        4 => p.length_tokens as f64,
        5 => p.length_content as f64,
        6 => p.content_prop,
        7 => p.noun_prop,
        8 => p.adj_prop,
        9 => p.verb_prop,
        10 => p.ttr,
        _ => nn,
    }
}

pub const ENTRAINMENT_MEASURES: [&str; 6] = ["reuse_c", "reuse_bigrams_c", "noun", "adj", "verb", "NN bigrams"];

fn entrainment_values(reuse: &[ReuseProfile], measure: usize) -> Vec<f64> {
    reuse
        .iter()
        .filter_map(|r| match measure {
            0 => Some(r.reuse_c),
            1 => r.reuse_bigrams_c,
            2 => r.reused_noun,
            3 => r.reused_adj,
            4 => r.reused_verb,
            _ => r.reused_nn_bigrams,
        })
        .collect()
}

/// First versus later mentions of one measure within one system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendRow {
    pub measure: String,
    pub first: Option<f64>,
    pub later: Option<f64>,
    /// Absent when either group has fewer than two utterances.
    pub stat: Option<StatResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSummary {
    pub name: String,
    pub n_first: usize,
    pub n_later: usize,
    pub trends: Vec<TrendRow>,
    pub reuse_means: Vec<(String, Option<f64>)>,
    pub vocab_first: usize,
    pub vocab_later: usize,
    pub reuse_compounds: usize,
    pub non_reuse_compounds: usize,
}

/// A model's entrainment measure compared with the human one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntrainmentCell {
    pub system: String,
    pub mean: Option<f64>,
    /// `mean_a` is the human mean.
    pub stat: Option<StatResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntrainmentRow {
    pub measure: String,
    pub human: Option<f64>,
    pub models: Vec<EntrainmentCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinguisticReport {
    pub systems: Vec<SystemSummary>,
    /// Empty when only the reference system was given.
    pub entrainment: Vec<EntrainmentRow>,
}

fn opt_mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| mean(xs))
}

fn maybe_compare(a: &[f64], b: &[f64]) -> Result<Option<StatResult>> {
    if a.len() < 2 || b.len() < 2 {
        return Ok(None);
    }
    compare(a, b).map(Some)
}

fn summarize(s: &SystemAnalysis) -> Result<SystemSummary> {
    let first: Vec<usize> = (0..s.profiles.len()).filter(|&i| s.profiles[i].chain_position == 1).collect();
    let later: Vec<usize> = (0..s.profiles.len()).filter(|&i| s.profiles[i].chain_position > 1).collect();
    let mut trends = Vec::new();
    for (k, name) in TREND_MEASURES.iter().enumerate() {
        let f: Vec<f64> = first.iter().map(|&i| trend_value(&s.profiles[i], s.nn_props[i], k)).collect();
        let l: Vec<f64> = later.iter().map(|&i| trend_value(&s.profiles[i], s.nn_props[i], k)).collect();
        trends.push(TrendRow {
            measure: name.to_string(),
            first: opt_mean(&f),
            later: opt_mean(&l),
            stat: maybe_compare(&f, &l)?,
        });
    }
    let reuse_means = ENTRAINMENT_MEASURES
        .iter()
        .enumerate()
        .map(|(k, m)| (m.to_string(), opt_mean(&entrainment_values(&s.reuse, k))))
        .collect();
    let count = |kind| s.compounds.iter().filter(|(_, c)| c.kind == kind).count();
    Ok(SystemSummary {
        name: s.name.clone(),
        n_first: first.len(),
        n_later: later.len(),
        trends,
        reuse_means,
        vocab_first: s.vocab_first,
        vocab_later: s.vocab_later,
        reuse_compounds: count(CompoundKind::Reuse),
        non_reuse_compounds: count(CompoundKind::NonReuse),
    })
}

/// Trends for every system and, when models are given, their entrainment
/// compared with the reference (human) system.
pub fn profile_report(reference: &SystemAnalysis, models: &[SystemAnalysis]) -> Result<LinguisticReport> {
    let mut names = BTreeSet::new();
    for s in std::iter::once(reference).chain(models) {
        if !names.insert(s.name.as_str()) {
            return Err(Error::Input(format!("system name `{}` used twice", s.name)));
        }
    }
    let systems = std::iter::once(reference)
        .chain(models)
        .map(summarize)
        .collect::<Result<Vec<_>>>()?;
    let mut entrainment = Vec::new();
    if !models.is_empty() {
        for (k, name) in ENTRAINMENT_MEASURES.iter().enumerate() {
            let h = entrainment_values(&reference.reuse, k);
            let mut cells = Vec::new();
            for m in models {
                let v = entrainment_values(&m.reuse, k);
                cells.push(EntrainmentCell {
                    system: m.name.clone(),
                    mean: opt_mean(&v),
                    stat: maybe_compare(&h, &v)?,
                });
            }
            entrainment.push(EntrainmentRow {
                measure: name.to_string(),
                human: opt_mean(&h),
                models: cells,
            });
        }
    }
    Ok(LinguisticReport { systems, entrainment })
}

fn fmt_opt(x: Option<f64>, decimals: usize) -> String {
    x.map_or("-".to_string(), |v| format!("{v:.decimals$}"))
}

fn layout(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|k| rows.iter().filter_map(|r| r.get(k)).map(String::len).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for r in rows {
        let cells: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(k, c)| if k == 0 { format!("{c:<w$}", w = widths[k]) } else { format!("{c:>w$}", w = widths[k]) })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out
}

/// Measures by rows; first, later and d columns per system.
pub fn render_trends(report: &LinguisticReport) -> String {
    let mut header = vec![String::new()];
    let mut sub = vec![String::new()];
    for s in &report.systems {
        header.extend([s.name.clone(), String::new(), String::new()]);
        sub.extend(["first".to_string(), "later".to_string(), "d".to_string()]);
    }
    let mut rows = vec![header, sub];
    for (k, m) in TREND_MEASURES.iter().enumerate() {
        let mut row = vec![m.to_string()];
        for s in &report.systems {
            let t = &s.trends[k];
            let d = t.stat.as_ref().map_or("-".to_string(), |st| {
                format!("{}{}", fmt_opt(st.cohens_d, 2), st.stars)
            });
            row.extend([fmt_opt(t.first, 2), fmt_opt(t.later, 2), d]);
        }
        rows.push(row);
    }
    let mut vocab = vec!["vocab".to_string()];
    for s in &report.systems {
        vocab.extend([s.vocab_first.to_string(), s.vocab_later.to_string(), String::new()]);
    }
    rows.push(vocab);
    layout(&rows)
}

/// Reuse measures by rows; the reference mean, then mean, d and
/// significance per model.
pub fn render_entrainment(report: &LinguisticReport) -> String {
    let Some(first) = report.entrainment.first() else {
        return String::new();
    };
    let reference = report.systems.first().map_or("", |s| s.name.as_str());
    let mut header = vec![String::new(), reference.to_string()];
    let mut sub = vec![String::new(), "mean".to_string()];
    for c in &first.models {
        header.extend([c.system.clone(), String::new(), String::new()]);
        sub.extend(["mean".to_string(), "d".to_string(), "p".to_string()]);
    }
    let mut rows = vec![header, sub];
    for r in &report.entrainment {
        let mut row = vec![r.measure.clone(), fmt_opt(r.human, 3)];
        for c in &r.models {
            let (d, p) = match &c.stat {
                Some(st) => {
                    let p = if st.stars.is_empty() { fmt_opt(st.p_value, 3) } else { st.stars.clone() };
                    (fmt_opt(st.cohens_d, 3), p)
                }
                None => ("-".to_string(), "-".to_string()),
            };
            row.extend([fmt_opt(c.mean, 3), d, p]);
        }
        rows.push(row);
    }
    layout(&rows)
}
