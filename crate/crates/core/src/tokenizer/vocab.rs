use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use super::kind::{classify_token, TokenKind};
use super::TokenizerError;

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const MASK: &str = "[MASK]";
pub const SPECIALS: [&str; 5] = [PAD, UNK, CLS, SEP, MASK];

/// Placeholder a whole URL maps to, when the vocabulary carries it.
pub const URL_TOKEN: &str = "_URL_";
/// Placeholder a whole mention maps to, when the vocabulary carries it.
pub const MENTION_TOKEN: &str = "_MENTION_";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SpecialIds {
    pub pad: u32,
    pub unk: u32,
    pub cls: u32,
    pub sep: u32,
    pub mask: u32,
}

/// Token ↔ id mapping: base tokens first, then the emoticon augmentation.
#[derive(Clone, Debug)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
    kinds: Vec<TokenKind>,
    emoticons: HashSet<String>,
    base_size: usize,
    specials: SpecialIds,
    url: Option<u32>,
    mention: Option<u32>,
}

impl Vocabulary {
    /// Loads a base vocabulary file and an optional emoticon file, both one
    /// token per line.
    pub fn load(path: &Path, emoticon_path: Option<&Path>) -> Result<Self, TokenizerError> {
        let base = read_lines(path)?;
        let emoticons = match emoticon_path {
            Some(p) => read_lines(p)?,
            None => Vec::new(),
        };
        Self::with_sources(
            &base,
            &path.display().to_string(),
            &emoticons,
            &emoticon_path.map_or(String::new(), |p| p.display().to_string()),
        )
    }

    pub fn from_tokens(base: &[String], emoticons: &[String]) -> Result<Self, TokenizerError> {
        Self::with_sources(base, "vocabulary", emoticons, "emoticons")
    }

    fn with_sources(
        base: &[String],
        base_name: &str,
        emoticons: &[String],
        emoticon_name: &str,
    ) -> Result<Self, TokenizerError> {
        let mut tokens = Vec::with_capacity(base.len() + emoticons.len());
        let mut ids = HashMap::with_capacity(base.len() + emoticons.len());
        let sources = [(base, base_name), (emoticons, emoticon_name)];
        for (lines, source) in sources {
            for (line_no, token) in lines.iter().enumerate() {
                if ids.contains_key(token) {
                    return Err(TokenizerError::DuplicateToken {
                        token: token.clone(),
                        file: source.to_string(),
                        line: line_no + 1,
                    });
                }
                ids.insert(token.clone(), tokens.len() as u32);
                tokens.push(token.clone());
            }
        }
        let lookup = |s: &'static str| ids.get(s).copied().ok_or(TokenizerError::MissingSpecial(s));
        let specials = SpecialIds {
            pad: lookup(PAD)?,
            unk: lookup(UNK)?,
            cls: lookup(CLS)?,
            sep: lookup(SEP)?,
            mask: lookup(MASK)?,
        };
        if specials.pad != 0 {
            return Err(TokenizerError::PadNotFirst(specials.pad));
        }
        let url = ids.get(URL_TOKEN).copied();
        let mention = ids.get(MENTION_TOKEN).copied();
        let mut vocab = Self {
            tokens,
            ids,
            kinds: Vec::new(),
            emoticons: emoticons.iter().cloned().collect(),
            base_size: base.len(),
            specials,
            url,
            mention,
        };
        vocab.kinds = vocab.tokens.iter().map(|t| classify_token(t, &vocab)).collect();
        Ok(vocab)
    }

    /// V.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn base_size(&self) -> usize {
        self.base_size
    }

    pub fn augmentation_size(&self) -> usize {
        self.tokens.len() - self.base_size
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn specials(&self) -> SpecialIds {
        self.specials
    }

    pub fn is_special_id(&self, id: u32) -> bool {
        let s = self.specials;
        [s.pad, s.unk, s.cls, s.sep, s.mask].contains(&id)
    }

    pub fn is_emoticon(&self, token: &str) -> bool {
        self.emoticons.contains(token)
    }

    /// Emoticon tokens in id order.
    pub fn emoticon_tokens(&self) -> Vec<String> {
        self.tokens[self.base_size..].to_vec()
    }

    pub fn url_id(&self) -> Option<u32> {
        self.url
    }

    pub fn mention_id(&self) -> Option<u32> {
        self.mention
    }

    /// Kind of the token with this id.
    pub fn kind(&self, id: u32) -> TokenKind {
        self.kinds
            .get(id as usize)
            .copied()
            .unwrap_or(TokenKind::Special)
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>, TokenizerError> {
    let text = fs::read_to_string(path).map_err(|source| TokenizerError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(text
        .lines()
        .map(|l| l.strip_suffix('\r').unwrap_or(l).to_string())
        .collect())
}
