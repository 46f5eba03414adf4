use std::sync::OnceLock;

use regex::Regex;

// Rule table, tried in order at each position (leftmost-first):
//   1. URLs
//   2. left-to-right emoticons and <3
//   3. numbers with internal separators: 1,000  3.5
//   4. words, keeping internal apostrophes, hyphens and underscores: don't, multi-colored
//   5. ellipses
//   6. any other single non-space character
const RULES: &str = concat!(
    r"https?://\S+",
    r"|<3|[<>]?[:;=][\-o\*']?[\)\]\(\[dp/\}\{@\|\\]",
    r"|\p{N}+(?:[.,]\p{N}+)*",
    r"|\p{L}(?:[\p{L}'’\-_]*\p{L})?",
    r"|\.{2,}",
    r"|\S",
);

fn rules() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(RULES).expect("tokenizer rules compile"))
}

/// Lowercases `text` and splits it into tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    rules()
        .find_iter(&lower)
        .map(|m| m.as_str().to_string())
        .collect()
}

pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    tokens
        .iter()
        .map(|t| t.as_ref())
        .collect::<Vec<_>>()
        .join(" ")
}
