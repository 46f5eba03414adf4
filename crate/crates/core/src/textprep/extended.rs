use super::vocab::{Vocabulary, NOHS_TOKEN, UNK};

/// Out-of-vocabulary surface forms of one source utterance, given temporary
/// indices `base_size + position` after the base vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Extension {
    pub base_size: usize,
    pub extra: Vec<String>,
}

impl Extension {
    pub fn len(&self) -> usize {
        self.base_size + self.extra.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index_of(&self, surface: &str) -> Option<usize> {
        self.extra
            .iter()
            .position(|e| e == surface)
            .map(|p| self.base_size + p)
    }

    /// Surface form of an extended index.
    pub fn surface<'a>(&'a self, index: usize, vocab: &'a Vocabulary) -> Option<&'a str> {
        if index < self.base_size {
            vocab.token(index)
        } else {
            self.extra.get(index - self.base_size).map(String::as_str)
        }
    }

    /// Maps target tokens to extended indices: OOV tokens that occur in the
    /// source get their temporary index, everything else its base index.
    pub fn map_target<S: AsRef<str>>(&self, tokens: &[S], vocab: &Vocabulary) -> Vec<usize> {
        tokens
            .iter()
            .map(|t| {
                let t = t.as_ref();
                match vocab.get(t) {
                    Some(i) => i,
                    None => self.index_of(t).unwrap_or(UNK),
                }
            })
            .collect()
    }
}

/// Assigns temporary indices to OOV source tokens. Repeated forms share one
/// index and `<nohs>` is never extended.
pub fn extend_for_copy<S: AsRef<str>>(source: &[S], vocab: &Vocabulary) -> (Extension, Vec<usize>) {
    let mut ext = Extension {
        base_size: vocab.len(),
        extra: Vec::new(),
    };
    let mut indices = Vec::with_capacity(source.len());
    for tok in source {
        let tok = tok.as_ref();
        let idx = match vocab.get(tok) {
            Some(i) => i,
            None if tok == NOHS_TOKEN => unreachable!("<nohs> is always in the vocabulary"),
            None => match ext.index_of(tok) {
                Some(i) => i,
                None => {
                    ext.extra.push(tok.to_string());
                    ext.base_size + ext.extra.len() - 1
                }
            },
        };
        indices.push(idx);
    }
    (ext, indices)
}
