use crate::tokenizer::{Token, TokenKind, Vocabulary};

const TERMINATORS: [&str; 3] = [".", "!", "?"];

/// Splits a tokenized tweet into sentences.
///
/// `.`, `!` and `?` close the sentence they end; an emoji or emoticon opens
/// the next one. Empty sentences are dropped.
pub fn split_sentences(tokens: &[Token], vocab: &Vocabulary) -> Vec<Vec<Token>> {
    let mut sentences = Vec::new();
    let mut current = Vec::new();
    for &tok in tokens {
        if tok.kind == TokenKind::Emoji {
            if !current.is_empty() {
                sentences.push(std::mem::take(&mut current));
            }
            current.push(tok);
            continue;
        }
        current.push(tok);
        let text = vocab.token(tok.id).unwrap_or_default();
        if TERMINATORS.contains(&text) {
            sentences.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        sentences.push(current);
    }
    sentences
}
