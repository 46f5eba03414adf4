use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util;

const BUNDLED_LEXICON: &str = include_str!("../../data/pos_lexicon.tsv");

/// Coarse universal part-of-speech classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Pos {
    Noun,
    Verb,
    Aux,
    Adj,
    Adv,
    Det,
    Pron,
    Adp,
    Conj,
    Num,
    Part,
    Intj,
    Punct,
    X,
}

impl FromStr for Pos {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_uppercase().as_str() {
            "NOUN" | "PROPN" => Pos::Noun,
            "VERB" => Pos::Verb,
            "AUX" => Pos::Aux,
            "ADJ" => Pos::Adj,
            "ADV" => Pos::Adv,
            "DET" => Pos::Det,
            "PRON" => Pos::Pron,
            "ADP" => Pos::Adp,
            "CONJ" | "CCONJ" | "SCONJ" => Pos::Conj,
            "NUM" => Pos::Num,
            "PART" => Pos::Part,
            "INTJ" => Pos::Intj,
            "PUNCT" => Pos::Punct,
            "X" | "SYM" => Pos::X,
            other => return Err(Error::Input(format!("unknown part-of-speech tag `{other}`"))),
        })
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("pos serializes");
        f.write_str(s.as_str().expect("unit variant"))
    }
}

/// Assigns one tag per token; the output has the input's length.
pub trait PosTagger: Send + Sync {
    fn tag(&self, tokens: &[String]) -> Vec<Pos>;
}

/// Lexicon lookup with suffix rules for unknown words. Unknown words with
/// no matching rule are tagged as nouns.
#[derive(Debug, Clone)]
pub struct LexiconTagger {
    lexicon: HashMap<String, Pos>,
}

impl LexiconTagger {
    /// The bundled lexicon, which covers the function words and the
    /// picture-description vocabulary used in fixtures.
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_LEXICON).expect("bundled lexicon parses")
    }

    /// `token<TAB>tag` lines; `#` starts a comment; the first entry for a
    /// token wins.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lexicon = HashMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (tok, tag) = line
                .split_once('\t')
                .ok_or_else(|| Error::Input(format!("lexicon line {}: expected token<TAB>tag", n + 1)))?;
            lexicon.entry(tok.to_lowercase()).or_insert(tag.trim().parse()?);
        }
        Ok(LexiconTagger { lexicon })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&util::read_to_string(path)?)
    }

    /// Adds or overrides entries.
    pub fn with_entries<I, S>(mut self, entries: I) -> Self
    where
        I: IntoIterator<Item = (S, Pos)>,
        S: Into<String>,
    {
        for (t, p) in entries {
            self.lexicon.insert(t.into(), p);
        }
        self
    }

    fn guess(token: &str) -> Pos {
        if !token.chars().any(char::is_alphanumeric) {
            return Pos::Punct;
        }
        if token.chars().all(|c| c.is_ascii_digit()) {
            return Pos::Num;
        }
        let rules: [(&str, Pos); 12] = [
            ("ing", Pos::Verb),
            ("ed", Pos::Verb),
            ("ly", Pos::Adv),
            ("ous", Pos::Adj),
            ("ful", Pos::Adj),
            ("ish", Pos::Adj),
            ("able", Pos::Adj),
            ("ible", Pos::Adj),
            ("ive", Pos::Adj),
            ("less", Pos::Adj),
            ("est", Pos::Adj),
            ("ic", Pos::Adj),
        ];
        for (suffix, pos) in rules {
            if token.len() > suffix.len() + 2 && token.ends_with(suffix) {
                return pos;
            }
        }
        Pos::Noun
    }
}

impl PosTagger for LexiconTagger {
    fn tag(&self, tokens: &[String]) -> Vec<Pos> {
        tokens
            .iter()
            .map(|t| {
                let low = t.to_lowercase();
                self.lexicon.get(&low).copied().unwrap_or_else(|| Self::guess(&low))
            })
            .collect()
    }
}
