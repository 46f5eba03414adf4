use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};

type Counts<'a> = BTreeMap<&'a [String], usize>;

fn ngrams(tokens: &[String], n: usize) -> Counts<'_> {
    let mut out = BTreeMap::new();
    if n == 0 || tokens.len() < n {
        return out;
    }
    for w in tokens.windows(n) {
        *out.entry(w).or_insert(0) += 1;
    }
    out
}

fn check(hypotheses: &[Vec<String>], references: &[Vec<Vec<String>>]) -> Result<()> {
    if hypotheses.is_empty() {
        return Err(Error::Input("empty hypothesis set".into()));
    }
    if hypotheses.len() != references.len() {
        return Err(Error::Input(format!(
            "{} hypotheses but {} reference sets",
            hypotheses.len(),
            references.len()
        )));
    }
    if references.iter().any(|r| r.is_empty()) {
        return Err(Error::Input("every hypothesis needs at least one reference".into()));
    }
    Ok(())
}

/// Corpus BLEU over 1- and 2-grams, x100. Counts are clipped by the maximum
/// reference count; the brevity penalty uses the reference length closest
/// to each hypothesis (shorter on ties). No smoothing.
pub fn bleu2(hypotheses: &[Vec<String>], references: &[Vec<Vec<String>>]) -> Result<f64> {
    check(hypotheses, references)?;
    let mut matched = [0usize; 2];
    let mut total = [0usize; 2];
    let mut hyp_len = 0usize;
    let mut ref_len = 0usize;
    for (hyp, refs) in hypotheses.iter().zip(references) {
        hyp_len += hyp.len();
        ref_len += refs
            .iter()
            .map(|r| r.len())
            .min_by_key(|&l| (l.abs_diff(hyp.len()), l))
            .expect("non-empty references");
        for n in 1..=2 {
            let h = ngrams(hyp, n);
            let mut max_ref: Counts<'_> = BTreeMap::new();
            for r in refs {
                for (g, c) in ngrams(r, n) {
                    let e = max_ref.entry(g).or_insert(0);
                    *e = (*e).max(c);
                }
            }
            total[n - 1] += h.values().sum::<usize>();
            matched[n - 1] += h
                .iter()
                .map(|(g, &c)| c.min(max_ref.get(g).copied().unwrap_or(0)))
                .sum::<usize>();
        }
    }
    if matched.contains(&0) || hyp_len == 0 {
        return Ok(0.0);
    }
    let log_p: f64 = (0..2)
        .map(|i| (matched[i] as f64 / total[i] as f64).ln())
        .sum::<f64>()
        / 2.0;
    let bp = if hyp_len < ref_len {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    } else {
        1.0
    };
    Ok(100.0 * bp * log_p.exp())
}

/// Length of the longest common subsequence.
pub fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    for x in a {
        let mut cur = vec![0usize; b.len() + 1];
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        prev = cur;
    }
    prev[b.len()]
}

/// Weight of recall relative to precision in ROUGE-L.
pub const ROUGE_BETA: f64 = 1.2;

/// Sentence ROUGE-L against several references: the best LCS precision and
/// the best LCS recall are combined into an F-measure with `ROUGE_BETA`.
pub fn rouge_l_sentence(hyp: &[String], refs: &[Vec<String>]) -> f64 {
    if hyp.is_empty() {
        return 0.0;
    }
    let mut p_max = 0.0f64;
    let mut r_max = 0.0f64;
    for r in refs {
        if r.is_empty() {
            continue;
        }
        let l = lcs_len(hyp, r) as f64;
        p_max = p_max.max(l / hyp.len() as f64);
        r_max = r_max.max(l / r.len() as f64);
    }
    if p_max == 0.0 || r_max == 0.0 {
        return 0.0;
    }
    let b2 = ROUGE_BETA * ROUGE_BETA;
    (1.0 + b2) * p_max * r_max / (r_max + b2 * p_max)
}

/// Mean sentence ROUGE-L, x100.
pub fn rouge_l(hypotheses: &[Vec<String>], references: &[Vec<Vec<String>>]) -> Result<f64> {
    check(hypotheses, references)?;
    let sum: f64 = hypotheses
        .iter()
        .zip(references)
        .map(|(h, r)| rouge_l_sentence(h, r))
        .sum();
    Ok(100.0 * sum / hypotheses.len() as f64)
}

const CIDER_N: usize = 4;

struct TfIdf<'a> {
    vec: Vec<BTreeMap<&'a [String], f64>>,
    norm: Vec<f64>,
}

fn tf_idf<'a>(tokens: &'a [String], df: &BTreeMap<&[String], usize>, log_docs: f64) -> TfIdf<'a> {
    let mut vec = Vec::with_capacity(CIDER_N);
    let mut norm = Vec::with_capacity(CIDER_N);
    for n in 1..=CIDER_N {
        let v: BTreeMap<&[String], f64> = ngrams(tokens, n)
            .into_iter()
            .map(|(g, tf)| {
                let d = df.get(g).copied().unwrap_or(0).max(1) as f64;
                (g, tf as f64 * (log_docs - d.ln()))
            })
            .collect();
        norm.push(v.values().map(|x| x * x).sum::<f64>().sqrt());
        vec.push(v);
    }
    TfIdf { vec, norm }
}

fn cosine_by_order(h: &TfIdf<'_>, r: &TfIdf<'_>) -> [f64; CIDER_N] {
    let mut out = [0.0; CIDER_N];
    for n in 0..CIDER_N {
        let dot: f64 = h.vec[n]
            .iter()
            .map(|(g, x)| x * r.vec[n].get(g).copied().unwrap_or(0.0))
            .sum();
        out[n] = if h.norm[n] != 0.0 && r.norm[n] != 0.0 {
            dot / (h.norm[n] * r.norm[n])
        } else {
            dot
        };
    }
    out
}

/// Corpus CIDEr on its native scale (identity maximum 10): TF-IDF cosine
/// over 1..4-grams, averaged over n-gram orders and references, times 10.
/// Document frequencies count reference sets containing an n-gram; the
/// document count is the number of reference sets.
pub fn cider(hypotheses: &[Vec<String>], references: &[Vec<Vec<String>>]) -> Result<f64> {
    check(hypotheses, references)?;
    let mut df: BTreeMap<&[String], usize> = BTreeMap::new();
    for refs in references {
        let mut seen: BTreeSet<&[String]> = BTreeSet::new();
        for r in refs {
            for n in 1..=CIDER_N {
                seen.extend(ngrams(r, n).into_keys());
            }
        }
        for g in seen {
            *df.entry(g).or_insert(0) += 1;
        }
    }
    let log_docs = (references.len() as f64).ln();
    let mut total = 0.0;
    for (hyp, refs) in hypotheses.iter().zip(references) {
        let h = tf_idf(hyp, &df, log_docs);
        let mut sum = [0.0; CIDER_N];
        for r in refs {
            let s = cosine_by_order(&h, &tf_idf(r, &df, log_docs));
            for n in 0..CIDER_N {
                sum[n] += s[n];
            }
        }
        let mean_over_n = sum.iter().sum::<f64>() / CIDER_N as f64;
        total += 10.0 * mean_over_n / refs.len() as f64;
    }
    Ok(total / hypotheses.len() as f64)
}
