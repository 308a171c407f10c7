use std::fmt;
use std::str::FromStr;

use super::vocab::{Vocabulary, MENTION_TOKEN, SPECIALS, URL_TOKEN};
use super::TokenizerError;

/// Loss-weighting category of a token.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TokenKind {
    Regular,
    Emoji,
    Url,
    Mention,
    Special,
}

impl TokenKind {
    pub const ALL: [TokenKind; 5] = [
        TokenKind::Regular,
        TokenKind::Emoji,
        TokenKind::Url,
        TokenKind::Mention,
        TokenKind::Special,
    ];

    pub fn code(self) -> u8 {
        match self {
            TokenKind::Regular => 0,
            TokenKind::Emoji => 1,
            TokenKind::Url => 2,
            TokenKind::Mention => 3,
            TokenKind::Special => 4,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            TokenKind::Regular => "regular",
            TokenKind::Emoji => "emoji",
            TokenKind::Url => "url",
            TokenKind::Mention => "mention",
            TokenKind::Special => "special",
        }
    }
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TokenKind {
    type Err = TokenizerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| TokenizerError::UnknownKind(s.to_string()))
    }
}

/// Emoticons, Misc Symbols and Pictographs, Transport and Map, and
/// Supplemental Symbols and Pictographs.
const EMOJI_BLOCKS: [(u32, u32); 4] = [
    (0x1F600, 0x1F64F),
    (0x1F300, 0x1F5FF),
    (0x1F680, 0x1F6FF),
    (0x1F900, 0x1F9FF),
];

pub fn is_emoji_char(c: char) -> bool {
    let cp = c as u32;
    EMOJI_BLOCKS.iter().any(|&(lo, hi)| (lo..=hi).contains(&cp))
}

pub(crate) fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

pub fn is_url(token: &str) -> bool {
    token.starts_with("http://") || token.starts_with("https://") || token.contains("t.co/")
}

pub fn is_mention(token: &str) -> bool {
    let mut chars = token.chars();
    chars.next() == Some('@') && chars.next().is_some_and(is_word_char)
}

/// Kind of a token string. Precedence: special > url > mention > emoji > regular.
pub fn classify_token(token: &str, vocab: &Vocabulary) -> TokenKind {
    if SPECIALS.contains(&token) {
        TokenKind::Special
    } else if token == URL_TOKEN || is_url(token) {
        TokenKind::Url
    } else if token == MENTION_TOKEN || is_mention(token) {
        TokenKind::Mention
    } else if vocab.is_emoticon(token) || token.chars().any(is_emoji_char) {
        TokenKind::Emoji
    } else {
        TokenKind::Regular
    }
}

/// Per-kind loss multipliers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightTable {
    pub regular: f32,
    pub emoji: f32,
    pub url: f32,
    pub mention: f32,
    pub special: f32,
}

impl Default for WeightTable {
    fn default() -> Self {
        Self {
            regular: 1.0,
            emoji: 2.0,
            url: 0.02,
            mention: 0.02,
            special: 0.0,
        }
    }
}

impl WeightTable {
    pub fn get(&self, kind: TokenKind) -> f32 {
        match kind {
            TokenKind::Regular => self.regular,
            TokenKind::Emoji => self.emoji,
            TokenKind::Url => self.url,
            TokenKind::Mention => self.mention,
            TokenKind::Special => self.special,
        }
    }

    pub fn set(&mut self, kind: TokenKind, weight: f32) -> Result<(), TokenizerError> {
        if !(weight >= 0.0 && weight.is_finite()) {
            return Err(TokenizerError::InvalidWeight { kind, weight });
        }
        let slot = match kind {
            TokenKind::Regular => &mut self.regular,
            TokenKind::Emoji => &mut self.emoji,
            TokenKind::Url => &mut self.url,
            TokenKind::Mention => &mut self.mention,
            TokenKind::Special => &mut self.special,
        };
        *slot = weight;
        Ok(())
    }
}

pub fn loss_weight_for(kind: TokenKind, table: &WeightTable) -> f32 {
    table.get(kind)
}
