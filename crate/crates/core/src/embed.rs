//! Token embedding providers and greedy-matching similarity.
//!
//! Pretrained contextual encoders are external artifacts. The crate talks to
//! them through [`EmbeddingProvider`]: a precomputed [`EmbeddingCache`] for
//! real data and deterministic providers for tests and small fixtures.

use std::collections::HashMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util;

/// Maps a token sequence to one vector per token.
pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;

    /// `key` identifies a stored utterance for cache-backed providers;
    /// content-based providers ignore it.
    fn embed(&self, key: Option<&str>, tokens: &[String]) -> Result<Vec<Vec<f32>>>;
}

/// Seeded pseudo-random vector per token type.
#[derive(Debug, Clone)]
pub struct HashEmbedding {
    dim: usize,
    seed: u64,
}

impl HashEmbedding {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim > 0);
        HashEmbedding { dim, seed }
    }

    pub fn vector(&self, token: &str) -> Vec<f32> {
        let mut bytes = self.seed.to_le_bytes().to_vec();
        bytes.extend_from_slice(token.as_bytes());
        let mut rng = ChaCha8Rng::seed_from_u64(util::fnv1a64(&bytes));
        (0..self.dim).map(|_| rng.random_range(-1.0f32..1.0)).collect()
    }
}

impl EmbeddingProvider for HashEmbedding {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, _key: Option<&str>, tokens: &[String]) -> Result<Vec<Vec<f32>>> {
        Ok(tokens.iter().map(|t| self.vector(t)).collect())
    }
}

/// One-hot vector per known token: cosine is 1 for equal tokens, 0 otherwise.
#[derive(Debug, Clone)]
pub struct IdentityEmbedding {
    index: HashMap<String, usize>,
}

impl IdentityEmbedding {
    pub fn new<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut index = HashMap::new();
        for t in tokens {
            let n = index.len();
            index.entry(t.as_ref().to_string()).or_insert(n);
        }
        IdentityEmbedding { index }
    }
}

impl EmbeddingProvider for IdentityEmbedding {
    fn dim(&self) -> usize {
        self.index.len().max(1)
    }

    fn embed(&self, _key: Option<&str>, tokens: &[String]) -> Result<Vec<Vec<f32>>> {
        tokens
            .iter()
            .map(|t| {
                let i = self
                    .index
                    .get(t)
                    .ok_or_else(|| Error::Input(format!("identity provider has no token `{t}`")))?;
                let mut v = vec![0.0; self.dim()];
                v[*i] = 1.0;
                Ok(v)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CachedEmbedding {
    pub id: String,
    pub vectors: Vec<Vec<f32>>,
}

/// Precomputed contextual embeddings keyed by utterance id.
///
/// File format: JSON lines `{"id": "...", "vectors": [[f32; dim], ...]}`.
/// Lookups without a key, or with a missing key, go to the fallback
/// provider if one is configured and fail otherwise.
pub struct EmbeddingCache {
    dim: usize,
    entries: HashMap<String, Vec<Vec<f32>>>,
    fallback: Option<Box<dyn EmbeddingProvider>>,
}

impl EmbeddingCache {
    pub fn from_entries(entries: Vec<CachedEmbedding>) -> Result<Self> {
        let dim = entries
            .iter()
            .flat_map(|e| e.vectors.first())
            .map(Vec::len)
            .next()
            .unwrap_or(0);
        let mut map = HashMap::with_capacity(entries.len());
        for e in entries {
            if e.vectors.iter().any(|v| v.len() != dim) {
                return Err(Error::Input(format!(
                    "embedding `{}` does not have dimension {dim}",
                    e.id
                )));
            }
            map.insert(e.id, e.vectors);
        }
        Ok(EmbeddingCache {
            dim,
            entries: map,
            fallback: None,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_entries(util::read_jsonl(path)?)
    }

    pub fn with_fallback(mut self, fallback: Box<dyn EmbeddingProvider>) -> Result<Self> {
        if self.dim == 0 {
            self.dim = fallback.dim();
        } else if fallback.dim() != self.dim {
            return Err(Error::Input(format!(
                "fallback dimension {} differs from cache dimension {}",
                fallback.dim(),
                self.dim
            )));
        }
        self.fallback = Some(fallback);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl EmbeddingProvider for EmbeddingCache {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, key: Option<&str>, tokens: &[String]) -> Result<Vec<Vec<f32>>> {
        if let Some(v) = key.and_then(|k| self.entries.get(k)) {
            return Ok(v.clone());
        }
        match &self.fallback {
            Some(f) => f.embed(key, tokens),
            None => Err(Error::Input(format!(
                "no cached embedding for utterance {}",
                key.unwrap_or("<unkeyed>")
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SimilarityScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let mut dot = 0.0f64;
    let mut na = 0.0f64;
    let mut nb = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (f64::from(*x), f64::from(*y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na.sqrt() * nb.sqrt())
    }
}

/// Greedy cosine matching: precision averages each candidate token's best
/// match in the reference, recall the reverse. No idf weighting and no
/// baseline rescaling. Empty inputs score 0.
pub fn greedy_match(candidate: &[Vec<f32>], reference: &[Vec<f32>]) -> SimilarityScore {
    if candidate.is_empty() || reference.is_empty() {
        return SimilarityScore::default();
    }
    let sim: Vec<Vec<f64>> = candidate
        .iter()
        .map(|c| reference.iter().map(|r| cosine(c, r)).collect())
        .collect();
    let precision = sim
        .iter()
        .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .sum::<f64>()
        / candidate.len() as f64;
    let recall = (0..reference.len())
        .map(|j| sim.iter().map(|row| row[j]).fold(f64::NEG_INFINITY, f64::max))
        .sum::<f64>()
        / reference.len() as f64;
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    SimilarityScore {
        precision,
        recall,
        f1,
    }
}

/// Embedding-based similarity between token sequences.
pub struct EmbeddingScorer<'a> {
    provider: &'a dyn EmbeddingProvider,
}

impl<'a> EmbeddingScorer<'a> {
    pub fn new(provider: &'a dyn EmbeddingProvider) -> Self {
        EmbeddingScorer { provider }
    }

    pub fn score(&self, candidate: &[String], reference: &[String]) -> Result<SimilarityScore> {
        if candidate.is_empty() || reference.is_empty() {
            return Ok(SimilarityScore::default());
        }
        let c = self.provider.embed(None, candidate)?;
        let r = self.provider.embed(None, reference)?;
        Ok(greedy_match(&c, &r))
    }

    /// Multi-reference score: the reference giving the highest F1 wins.
    pub fn best_f1(&self, candidate: &[String], references: &[Vec<String>]) -> Result<f64> {
        if references.is_empty() {
            return Err(Error::Input("empty reference set".into()));
        }
        let mut best = f64::NEG_INFINITY;
        for r in references {
            best = best.max(self.score(candidate, r)?.f1);
        }
        Ok(best)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn identical_sequence_under_identity_scores_one() {
        let p = IdentityEmbedding::new(["guy", "with", "camera", "dog"]);
        let sc = EmbeddingScorer::new(&p);
        let r = sc.score(&s(&["guy", "with", "camera"]), &s(&["guy", "with", "camera"])).unwrap();
        assert_eq!(r.f1, 1.0);
    }

    #[test]
    fn greedy_match_uses_row_and_column_maxima() {
        // cand = [e0, e1], ref = [e0, (e1+e2)/sqrt2, e2]
        let e = |i: usize| {
            let mut v = vec![0.0f32; 3];
            v[i] = 1.0;
            v
        };
        let h = std::f32::consts::FRAC_1_SQRT_2;
        let cand = vec![e(0), e(1)];
        let reference = vec![e(0), vec![0.0, h, h], e(2)];
        let r = greedy_match(&cand, &reference);
        let c = f64::from(h);
        // row maxima: 1, c ; column maxima: 1, c, 0
        assert!((r.precision - (1.0 + c) / 2.0).abs() < 1e-6);
        assert!((r.recall - (1.0 + c) / 3.0).abs() < 1e-6);
    }

    #[test]
    fn empty_candidate_scores_zero() {
        let p = HashEmbedding::new(8, 1);
        let sc = EmbeddingScorer::new(&p);
        assert_eq!(sc.score(&[], &s(&["dog"])).unwrap().f1, 0.0);
        assert!(sc.best_f1(&s(&["dog"]), &[]).is_err());
    }

    #[test]
    fn hash_embedding_is_deterministic() {
        let p = HashEmbedding::new(16, 3);
        assert_eq!(p.vector("dog"), p.vector("dog"));
        assert_ne!(p.vector("dog"), p.vector("cat"));
        assert_ne!(p.vector("dog"), HashEmbedding::new(16, 4).vector("dog"));
    }

    #[test]
    fn cache_lookup_and_fallback() {
        let cache = EmbeddingCache::from_entries(vec![CachedEmbedding {
            id: "u1".into(),
            vectors: vec![vec![1.0, 2.0]],
        }])
        .unwrap();
        assert_eq!(cache.embed(Some("u1"), &s(&["x"])).unwrap(), vec![vec![1.0, 2.0]]);
        assert!(cache.embed(Some("u2"), &s(&["x"])).is_err());
        let cache = cache.with_fallback(Box::new(HashEmbedding::new(2, 0))).unwrap();
        assert_eq!(cache.embed(Some("u2"), &s(&["x"])).unwrap().len(), 1);
    }
}
