use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::util;

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const SOS: usize = 2;
pub const EOS: usize = 3;
pub const NOHS: usize = 4;

pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";
pub const SOS_TOKEN: &str = "<sos>";
pub const EOS_TOKEN: &str = "<eos>";
pub const NOHS_TOKEN: &str = "<nohs>";

const SPECIALS: [&str; 5] = [PAD_TOKEN, UNK_TOKEN, SOS_TOKEN, EOS_TOKEN, NOHS_TOKEN];

/// Token-to-index map with the five special tokens at fixed indices 0..5.
///
/// Decoders predict over an *output space* that is the vocabulary with
/// `<nohs>` removed; [`Vocabulary::to_output`] and
/// [`Vocabulary::from_output`] convert between the two index spaces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn specials_only() -> Self {
        Self::from_tokens(Vec::new()).expect("specials are valid")
    }

    /// Builds from tokenized training utterances, keeping tokens seen at
    /// least `min_count` times. Order is frequency descending, then lexical.
    pub fn build<I, U, S>(utterances: I, min_count: usize) -> Self
    where
        I: IntoIterator<Item = U>,
        U: AsRef<[S]>,
        S: AsRef<str>,
    {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for utt in utterances {
            for tok in utt.as_ref() {
                *counts.entry(tok.as_ref().to_string()).or_default() += 1;
            }
        }
        let mut kept: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(t, c)| *c >= min_count.max(1) && !SPECIALS.contains(&t.as_str()))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Self::from_tokens(kept.into_iter().map(|(t, _)| t).collect()).expect("deduplicated")
    }

    fn from_tokens(regular: Vec<String>) -> Result<Self> {
        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        tokens.extend(regular);
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Input(format!("duplicate vocabulary token `{t}`")));
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Size of the decoder output space (`<nohs>` excluded).
    pub fn output_size(&self) -> usize {
        self.tokens.len() - 1
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn index_or_unk(&self, token: &str) -> usize {
        self.get(token).unwrap_or(UNK)
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.index_or_unk(t.as_ref())).collect()
    }

    /// Maps a vocabulary index into the decoder output space.
    pub fn to_output(&self, index: usize) -> Result<usize> {
        match index {
            NOHS => Err(Error::Contract("<nohs> is not in the decoder output space".into())),
            i if i < NOHS => Ok(i),
            i => Ok(i - 1),
        }
    }

    pub fn from_output(&self, out: usize) -> usize {
        if out < NOHS {
            out
        } else {
            out + 1
        }
    }

    /// One token per line; the line number is the index.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.tokens.join("\n");
        text.push('\n');
        util::write_string(path, &text)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = util::read_to_string(path)?;
        let lines: Vec<&str> = text.lines().collect();
        if lines.len() < SPECIALS.len() || lines[..SPECIALS.len()] != SPECIALS {
            return Err(Error::Input(format!(
                "{}: vocabulary must start with {:?}",
                path.display(),
                SPECIALS
            )));
        }
        Self::from_tokens(lines[SPECIALS.len()..].iter().map(|s| s.to_string()).collect())
    }

    /// Content hash used to tie checkpoints to the vocabulary they were trained with.
    pub fn content_hash(&self) -> String {
        util::sha256_hex(self.tokens.join("\n").as_bytes())
    }
}
