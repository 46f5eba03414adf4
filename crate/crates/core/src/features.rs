//! Precomputed image feature vectors.
//!
//! Two on-disk layouts are accepted:
//!
//! * text: one image per line, `img_id v1 v2 ... vD`;
//! * binary: magic `RCFEAT01`, `u64` count, `u64` dim (little endian), then
//!   per image a `u32` id length, the UTF-8 id and `dim` little-endian `f32`s.
//!
//! [`FeatureTable::load`] picks the layout from the magic bytes.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::util;

const MAGIC: &[u8; 8] = b"RCFEAT01";

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    dim: usize,
    vectors: BTreeMap<String, Vec<f32>>,
}

impl FeatureTable {
    pub fn new(dim: usize) -> Self {
        FeatureTable {
            dim,
            vectors: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, id: impl Into<String>, v: Vec<f32>) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::Input(format!(
                "feature vector has {} values, expected {}",
                v.len(),
                self.dim
            )));
        }
        self.vectors.insert(id.into(), v);
        Ok(())
    }

    /// Uniform(0, 1) vectors seeded per image id, standing in for CNN features.
    pub fn synthetic<I, S>(ids: I, dim: usize, seed: u64) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut t = FeatureTable::new(dim);
        for id in ids {
            let id = id.as_ref();
            let mut rng = ChaCha8Rng::seed_from_u64(util::derive_seed(seed, id, 0));
            let v = (0..dim).map(|_| rng.random_range(0.0f32..1.0)).collect();
            t.vectors.insert(id.to_string(), v);
        }
        t
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.vectors.contains_key(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &String> {
        self.vectors.keys()
    }

    pub fn get(&self, id: &str) -> Result<&[f32]> {
        self.vectors
            .get(id)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Input(format!("no image features for {id}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.starts_with(MAGIC) {
            Self::from_binary(&bytes).map_err(|m| Error::Input(format!("{}: {m}", path.display())))
        } else {
            let text = String::from_utf8(bytes)
                .map_err(|_| Error::Input(format!("{}: not UTF-8 text", path.display())))?;
            Self::from_text(&text).map_err(|m| Error::Input(format!("{}: {m}", path.display())))
        }
    }

    fn from_text(text: &str) -> std::result::Result<Self, String> {
        let mut dim = None;
        let mut vectors = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let mut parts = line.split_whitespace();
            let Some(id) = parts.next() else { continue };
            let v: Vec<f32> = parts
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| format!("line {}: {e}", n + 1))?;
            match dim {
                None => dim = Some(v.len()),
                Some(d) if d != v.len() => {
                    return Err(format!("line {}: {} values, expected {d}", n + 1, v.len()))
                }
                _ => {}
            }
            vectors.insert(id.to_string(), v);
        }
        Ok(FeatureTable {
            dim: dim.unwrap_or(0),
            vectors,
        })
    }

    fn from_binary(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut pos = MAGIC.len();
        let mut take = |n: usize| -> std::result::Result<&[u8], String> {
            let s = bytes.get(pos..pos + n).ok_or("truncated feature file")?;
            pos += n;
            Ok(s)
        };
        let count = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        let dim = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        let mut vectors = BTreeMap::new();
        for _ in 0..count {
            let len = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
            let id = std::str::from_utf8(take(len)?)
                .map_err(|_| "image id is not UTF-8".to_string())?
                .to_string();
            let raw = take(4 * dim)?;
            let v = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            vectors.insert(id, v);
        }
        Ok(FeatureTable { dim, vectors })
    }

    pub fn save_binary(&self, path: &Path) -> Result<()> {
        let mut out = MAGIC.to_vec();
        out.extend_from_slice(&(self.vectors.len() as u64).to_le_bytes());
        out.extend_from_slice(&(self.dim as u64).to_le_bytes());
        for (id, v) in &self.vectors {
            out.extend_from_slice(&(id.len() as u32).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn save_text(&self, path: &Path) -> Result<()> {
        let mut s = String::new();
        for (id, v) in &self.vectors {
            s.push_str(id);
            for x in v {
                s.push(' ');
                s.push_str(&x.to_string());
            }
            s.push('\n');
        }
        util::write_string(path, &s)
    }
}
