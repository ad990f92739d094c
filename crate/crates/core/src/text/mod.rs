//! Tokenization, vocabulary and the part-of-speech corruption that turns a
//! caption into the generator's encoder input.

mod corrupt;
mod tagger;
mod vocab;

use thiserror::Error;

pub use corrupt::{corrupt, mask_to_content, Corruption};
pub use tagger::{pos_tag, PosTag, TagLexicon};
pub use vocab::{build_vocab, TokenId, Vocabulary, BOS, EOS, MASK, PAD, RESERVED_TOKENS, UNK};

/// Longest caption (in tokens, EOS included) the generator is trained on or emits.
pub const MAX_CAPTION_LEN: usize = 32;

#[derive(Debug, Error, PartialEq)]
pub enum TextError {
    #[error("token id {0} is not in the vocabulary")]
    InvalidId(TokenId),
    #[error("token and tag sequences differ in length ({tokens} vs {tags})")]
    LengthMismatch { tokens: usize, tags: usize },
    #[error("line {line}: {reason}")]
    MalformedFile { line: usize, reason: String },
}

fn is_strippable(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '\u{2018}'
                | '\u{2019}'
                | '\u{201C}'
                | '\u{201D}'
                | '\u{2026}'
                | '\u{2013}'
                | '\u{2014}'
                | '\u{00AB}'
                | '\u{00BB}'
        )
}

/// Lowercases, splits on whitespace and trims punctuation from both ends of
/// every token. Tokens that end up empty are dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| w.trim_matches(is_strippable).to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}
