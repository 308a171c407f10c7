//! Vocabulary with emoticon augmentation, subword tokenization, token kinds
//! and per-kind loss weights.

mod kind;
mod vocab;
mod wordpiece;

use thiserror::Error;

pub use kind::{
    classify_token, is_emoji_char, is_mention, is_url, loss_weight_for, TokenKind, WeightTable,
};
pub use vocab::{
    SpecialIds, Vocabulary, CLS, MASK, MENTION_TOKEN, PAD, SEP, SPECIALS, UNK, URL_TOKEN,
};
pub use wordpiece::{detokenize, pretokenize, tokenize, wordpiece_tokenize, PreToken, Token};

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("duplicate token `{token}` in {file} at line {line}")]
    DuplicateToken {
        token: String,
        file: String,
        line: usize,
    },
    #[error("vocabulary is missing the special token {0}")]
    MissingSpecial(&'static str),
    #[error("[PAD] must have id 0, found at id {0}")]
    PadNotFirst(u32),
    #[error("unknown token kind `{0}`")]
    UnknownKind(String),
    #[error("weight for {kind} must be finite and non-negative, got {weight}")]
    InvalidWeight { kind: TokenKind, weight: f32 },
}
