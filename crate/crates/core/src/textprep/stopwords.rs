use std::collections::HashSet;

const EXTRACTION: &str = include_str!("../../data/stopwords_extraction.txt");
const ANALYSIS: &str = include_str!("../../data/stopwords_analysis.txt");

/// A versioned stopword list shipped with the crate.
#[derive(Debug, Clone)]
pub struct StopwordList {
    words: HashSet<String>,
}

impl StopwordList {
    /// List used when scoring candidate referring utterances. Numerals and
    /// spatial prepositions are kept as content.
    pub fn extraction() -> Self {
        Self::parse(EXTRACTION)
    }

    /// List used for content-word counts in the linguistic analysis.
    pub fn analysis() -> Self {
        Self::parse(ANALYSIS)
    }

    pub fn parse(text: &str) -> Self {
        let words = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_string)
            .collect();
        StopwordList { words }
    }

    pub fn contains(&self, token: &str) -> bool {
        self.words.contains(token)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Keeps content tokens, dropping stopwords and pure punctuation.
    pub fn filter<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<String> {
        tokens
            .iter()
            .map(AsRef::as_ref)
            .filter(|t| is_content_token(t, self))
            .map(str::to_string)
            .collect()
    }
}

/// A content token has at least one alphanumeric character and is not a stopword.
pub fn is_content_token(token: &str, stopwords: &StopwordList) -> bool {
    token.chars().any(char::is_alphanumeric) && !stopwords.contains(token)
}
