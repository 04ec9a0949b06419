//! Tokenization, the base n-gram language model, and context keys.

mod io;
mod key;
mod logits;
mod ngram;
mod vocab;

pub use io::{load_lm, read_lm, save_lm, write_lm, LM_MAGIC};
pub use key::{context_key, ContextKeyConfig, ContextKeyer};
pub use logits::{argmax, softmax, Distribution, LogitVector, MIN_LOGIT};
pub use ngram::{NgramLm, SmoothingConfig};
pub use vocab::{split_words, tokenize, TokenSequence, Vocab, BOS, EOS, UNK};
