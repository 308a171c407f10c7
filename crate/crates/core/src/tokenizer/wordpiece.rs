use super::kind::{classify_token, is_emoji_char, is_mention, is_url, is_word_char, TokenKind};
use super::vocab::{Vocabulary, UNK};

const CONTINUATION: &str = "##";
const MAX_CHARS_PER_WORD: usize = 100;

/// One whitespace-free unit ahead of subword splitting.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PreToken {
    pub text: String,
    /// Set for url, mention and emoticon units, which are never split.
    pub whole: Option<TokenKind>,
}

/// A vocabulary id together with the kind of the text it came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Token {
    pub id: u32,
    pub kind: TokenKind,
}

/// Splits on whitespace, keeps urls, mentions and listed emoticons whole, and
/// breaks everything else into word runs and single punctuation or emoji
/// characters. Regular text is lowercased.
pub fn pretokenize(text: &str, vocab: &Vocabulary) -> Vec<PreToken> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        if is_url(chunk) {
            out.push(PreToken {
                text: chunk.to_string(),
                whole: Some(TokenKind::Url),
            });
            continue;
        }
        if vocab.is_emoticon(chunk) {
            out.push(PreToken {
                text: chunk.to_string(),
                whole: Some(TokenKind::Emoji),
            });
            continue;
        }
        let mut rest = chunk;
        if is_mention(chunk) {
            let end = chunk
                .char_indices()
                .skip(1)
                .find(|&(_, c)| !is_word_char(c))
                .map_or(chunk.len(), |(i, _)| i);
            out.push(PreToken {
                text: chunk[..end].to_string(),
                whole: Some(TokenKind::Mention),
            });
            rest = &chunk[end..];
        }
        split_punctuation(&rest.to_lowercase(), &mut out);
    }
    out
}

fn split_punctuation(text: &str, out: &mut Vec<PreToken>) {
    let mut word = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() {
            word.push(c);
            continue;
        }
        if !word.is_empty() {
            out.push(PreToken {
                text: std::mem::take(&mut word),
                whole: None,
            });
        }
        out.push(PreToken {
            text: c.to_string(),
            whole: None,
        });
    }
    if !word.is_empty() {
        out.push(PreToken {
            text: word,
            whole: None,
        });
    }
}

/// Greedy longest-match-first subword split of one pre-token. Returns a single
/// `[UNK]` when some remainder has no match.
pub fn wordpiece_tokenize(text: &str, vocab: &Vocabulary) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    if chars.is_empty() {
        return Vec::new();
    }
    if chars.len() > MAX_CHARS_PER_WORD {
        return vec![UNK.to_string()];
    }
    let mut pieces = Vec::new();
    let mut start = 0;
    while start < chars.len() {
        let mut end = chars.len();
        let mut found = None;
        while start < end {
            let mut candidate: String = chars[start..end].iter().collect();
            if start > 0 {
                candidate.insert_str(0, CONTINUATION);
            }
            if vocab.id(&candidate).is_some() {
                found = Some(candidate);
                break;
            }
            end -= 1;
        }
        match found {
            Some(piece) => {
                pieces.push(piece);
                start = end;
            }
            None => return vec![UNK.to_string()],
        }
    }
    pieces
}

/// Joins pieces back into text, dropping continuation markers.
pub fn detokenize(pieces: &[String]) -> String {
    pieces
        .iter()
        .map(|p| p.strip_prefix(CONTINUATION).unwrap_or(p))
        .collect()
}

/// Full tokenization of a raw text into vocabulary ids with kinds.
///
/// Urls and mentions map to their placeholder tokens (or `[UNK]` when the
/// vocabulary has none) and keep their url/mention kind either way.
pub fn tokenize(text: &str, vocab: &Vocabulary) -> Vec<Token> {
    let unk = vocab.specials().unk;
    let mut out = Vec::new();
    for pre in pretokenize(text, vocab) {
        match pre.whole {
            Some(TokenKind::Url) => out.push(Token {
                id: vocab.url_id().unwrap_or(unk),
                kind: TokenKind::Url,
            }),
            Some(TokenKind::Mention) => out.push(Token {
                id: vocab.mention_id().unwrap_or(unk),
                kind: TokenKind::Mention,
            }),
            Some(kind) => out.push(Token {
                id: vocab.id(&pre.text).unwrap_or(unk),
                kind,
            }),
            None => {
                let emoji = pre.text.chars().any(is_emoji_char);
                for piece in wordpiece_tokenize(&pre.text, vocab) {
                    let id = vocab.id(&piece).unwrap_or(unk);
                    let kind = if emoji {
                        TokenKind::Emoji
                    } else {
                        classify_token(&piece, vocab)
                    };
                    out.push(Token { id, kind });
                }
            }
        }
    }
    out
}
