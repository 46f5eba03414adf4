//! Tokenization, vocabularies, copy-mechanism vocabulary extension and
//! model-instance encoding.

mod extended;
mod instance;
mod shuffle;
mod stopwords;
mod tokenize;
mod vocab;

pub use extended::{extend_for_copy, Extension};
pub use instance::{
    build_instances, GenInstance, History, InstanceSet, ResInstance, CONTEXT_SIZE,
};
pub use shuffle::{apply_permutation, shuffle_contexts, ShuffleMode, Shuffleable};
pub use stopwords::{is_content_token, StopwordList};
pub use tokenize::{detokenize, tokenize};
pub use vocab::{
    Vocabulary, EOS, EOS_TOKEN, NOHS, NOHS_TOKEN, PAD, PAD_TOKEN, SOS, SOS_TOKEN, UNK, UNK_TOKEN,
};
