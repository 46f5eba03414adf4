use std::fmt;

use serde::{Deserialize, Serialize};

use super::{accuracy_mrr, bleu2, cider, embedding_f1, rouge_l, EvalItem, RankedTarget};
use crate::embed::EmbeddingProvider;
use crate::error::{Error, Result};
use crate::trainer::MeanSd;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetScores {
    pub count: usize,
    pub bleu2: f64,
    pub rouge: f64,
    /// Native CIDEr times 100.
    pub cider: f64,
    pub embedding_f1: f64,
    /// Present when every item carries a resolution.
    pub accuracy: Option<f64>,
    pub mrr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub first: Option<SubsetScores>,
    pub later: Option<SubsetScores>,
    pub overall: SubsetScores,
}

fn score_subset(items: &[&EvalItem], provider: &dyn EmbeddingProvider) -> Result<Option<SubsetScores>> {
    if items.is_empty() {
        return Ok(None);
    }
    let hyps: Vec<Vec<String>> = items.iter().map(|i| i.hypothesis.clone()).collect();
    let refs: Vec<Vec<Vec<String>>> = items.iter().map(|i| i.references.clone()).collect();
    let ranked: Option<Vec<RankedTarget>> = items.iter().map(|i| i.resolution.clone()).collect();
    let (accuracy, mrr) = match ranked {
        Some(r) => {
            let (a, m) = accuracy_mrr(&r)?;
            (Some(a), Some(m))
        }
        None => (None, None),
    };
    Ok(Some(SubsetScores {
        count: items.len(),
        bleu2: bleu2(&hyps, &refs)?,
        rouge: rouge_l(&hyps, &refs)?,
        cider: 100.0 * cider(&hyps, &refs)?,
        embedding_f1: embedding_f1(&hyps, &refs, provider)?,
        accuracy,
        mrr,
    }))
}

/// Scores the First, Later and Overall subsets separately; corpus-level
/// statistics such as CIDEr document frequencies are per subset.
pub fn evaluate(items: &[EvalItem], provider: &dyn EmbeddingProvider) -> Result<MetricReport> {
    if items.is_empty() {
        return Err(Error::Input("no items to evaluate".into()));
    }
    let all: Vec<&EvalItem> = items.iter().collect();
    let (first, later): (Vec<&EvalItem>, Vec<&EvalItem>) = all.iter().partition(|i| i.is_first());
    Ok(MetricReport {
        first: score_subset(&first, provider)?,
        later: score_subset(&later, provider)?,
        overall: score_subset(&all, provider)?.expect("non-empty"),
    })
}

/// One table cell: a single value or a mean with its sample sd.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub mean: f64,
    pub sd: Option<f64>,
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.sd {
            Some(sd) => write!(f, "{:.2} ({:.2})", self.mean, sd),
            None => write!(f, "{:.2}", self.mean),
        }
    }
}

pub const COLUMNS: [&str; 6] = ["BLEU-2", "ROUGE", "CIDEr", "EMB-F1", "ACC", "MRR"];

/// Per-subset cells in `COLUMNS` order; `None` marks an unavailable value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub runs: usize,
    pub first: Option<Vec<Option<Cell>>>,
    pub later: Option<Vec<Option<Cell>>>,
    pub overall: Vec<Option<Cell>>,
    pub counts: [usize; 3],
}

fn values(s: &SubsetScores) -> [Option<f64>; 6] {
    [Some(s.bleu2), Some(s.rouge), Some(s.cider), Some(s.embedding_f1), s.accuracy, s.mrr]
}

fn combine(subsets: &[&SubsetScores]) -> Result<Vec<Option<Cell>>> {
    let rows: Vec<[Option<f64>; 6]> = subsets.iter().map(|s| values(s)).collect();
    (0..6)
        .map(|k| {
            let col: Option<Vec<f64>> = rows.iter().map(|r| r[k]).collect();
            Ok(match col {
                None => None,
                Some(v) if v.len() == 1 => Some(Cell { mean: v[0], sd: None }),
                Some(v) => {
                    let s = MeanSd::from_values(&v)?;
                    Some(Cell {
                        mean: s.mean,
                        sd: Some(s.sd),
                    })
                }
            })
        })
        .collect()
}

/// Mean and sd per cell across runs of the same model on the same data.
pub fn aggregate(reports: &[MetricReport]) -> Result<AggregateReport> {
    let Some(head) = reports.first() else {
        return Err(Error::Input("no reports to aggregate".into()));
    };
    let count = |s: &Option<SubsetScores>| s.as_ref().map_or(0, |s| s.count);
    for r in reports {
        if count(&r.first) != count(&head.first) || count(&r.later) != count(&head.later) {
            return Err(Error::Input("reports cover different instance sets".into()));
        }
    }
    let subset = |pick: fn(&MetricReport) -> Option<&SubsetScores>| -> Result<Option<Vec<Option<Cell>>>> {
        let s: Option<Vec<&SubsetScores>> = reports.iter().map(pick).collect();
        s.map(|s| combine(&s)).transpose()
    };
    Ok(AggregateReport {
        runs: reports.len(),
        first: subset(|r| r.first.as_ref())?,
        later: subset(|r| r.later.as_ref())?,
        overall: combine(&reports.iter().map(|r| &r.overall).collect::<Vec<_>>())?,
        counts: [count(&head.first), count(&head.later), head.overall.count],
    })
}

/// Plain-text table with one First and one Later row per model, plus an
/// Overall row.
pub fn render_table(rows: &[(&str, &AggregateReport)]) -> String {
    let mut lines: Vec<Vec<String>> = vec![["Model", "Subset"]
        .iter()
        .chain(COLUMNS.iter())
        .map(|s| s.to_string())
        .collect()];
    for (name, rep) in rows {
        for (label, cells) in [
            ("First", rep.first.as_ref()),
            ("Later", rep.later.as_ref()),
            ("Overall", Some(&rep.overall)),
        ] {
            let Some(cells) = cells else { continue };
            let mut line = vec![name.to_string(), label.to_string()];
            line.extend(cells.iter().map(|c| c.map_or("-".to_string(), |c| c.to_string())));
            lines.push(line);
        }
    }
    let widths: Vec<usize> = (0..lines[0].len())
        .map(|k| lines.iter().map(|l| l[k].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, l) in lines.iter().enumerate() {
        let cells: Vec<String> = l
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(k, (c, w))| if k < 2 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        out.push_str(cells.join(" | ").trim_end());
        out.push('\n');
        if i == 0 {
            let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
            out.push_str(&rule.join("-|-"));
            out.push('\n');
        }
    }
    out
}
