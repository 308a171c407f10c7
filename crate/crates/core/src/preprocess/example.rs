use rand::Rng;

use super::masking::apply_masking;
use super::pairing::SentencePair;
use super::PreprocessError;
use crate::tokenizer::{loss_weight_for, TokenKind, Vocabulary, WeightTable};

/// Sequence length every example is padded to.
pub const MAX_LEN: usize = 96;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NsLabel {
    Actual,
    Random,
}

impl NsLabel {
    /// Class index used by the next-sentence classifier.
    pub fn index(self) -> usize {
        match self {
            NsLabel::Actual => 0,
            NsLabel::Random => 1,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(NsLabel::Actual),
            1 => Some(NsLabel::Random),
            _ => None,
        }
    }
}

/// One masked, weighted, segment-labelled sentence pair.
///
/// Layout is `[CLS] A [SEP] B [SEP]` followed by `[PAD]` up to the padded
/// length. The three unmasked multisets hold content ids that were not
/// selected for masking and are not special tokens.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingExample {
    pub input_ids: Vec<u32>,
    pub segment_ids: Vec<u8>,
    pub attention_mask: Vec<u8>,
    pub masked_positions: Vec<u32>,
    pub masked_labels: Vec<u32>,
    /// Kind of the original token at each masked position.
    pub masked_kinds: Vec<TokenKind>,
    pub position_weights: Vec<f32>,
    pub ns_label: NsLabel,
    pub unmasked_ids_full: Vec<u32>,
    pub unmasked_ids_a: Vec<u32>,
    pub unmasked_ids_b: Vec<u32>,
}

impl TrainingExample {
    /// Number of non-padding positions.
    pub fn true_len(&self) -> usize {
        self.attention_mask.iter().filter(|&&m| m == 1).count()
    }

    pub fn padded_len(&self) -> usize {
        self.input_ids.len()
    }

    /// Recomputes position weights from the stored kinds.
    pub fn reweight(&mut self, table: &WeightTable) {
        self.position_weights = self
            .masked_kinds
            .iter()
            .map(|&k| loss_weight_for(k, table))
            .collect();
    }

    /// Checks every structural invariant against a vocabulary.
    pub fn validate(&self, vocab: &Vocabulary) -> Result<(), String> {
        let s = vocab.specials();
        let n = self.true_len();
        let len = self.input_ids.len();
        if self.segment_ids.len() != len || self.attention_mask.len() != len {
            return Err("per-position arrays differ in length".into());
        }
        if self.input_ids[..n].contains(&s.pad) || self.input_ids[n..].iter().any(|&t| t != s.pad)
        {
            return Err("attention mask does not match padding".into());
        }
        if self.attention_mask[..n].iter().any(|&m| m != 1) {
            return Err("attention mask is not a prefix".into());
        }
        if self.input_ids[0] != s.cls || self.input_ids[n - 1] != s.sep {
            return Err("sequence must start with [CLS] and end with [SEP]".into());
        }
        let seps: Vec<usize> = (0..n).filter(|&i| self.input_ids[i] == s.sep).collect();
        let inner_sep = match seps.as_slice() {
            [first, last] if *last == n - 1 && *first > 1 && *first < n - 2 => *first,
            _ => return Err(format!("expected exactly two [SEP] tokens, found {seps:?}")),
        };
        for i in 0..len {
            let expected = u8::from(i > inner_sep && i < n);
            if self.segment_ids[i] != expected {
                return Err(format!("segment id wrong at {i}"));
            }
        }
        let k = self.masked_positions.len();
        if self.masked_labels.len() != k
            || self.position_weights.len() != k
            || self.masked_kinds.len() != k
        {
            return Err("masked arrays differ in length".into());
        }
        let content = n - 3;
        if k != super::masking::selection_count(content) {
            return Err(format!("{k} masked positions for {content} content tokens"));
        }
        for &p in &self.masked_positions {
            let p = p as usize;
            if p == 0 || p == inner_sep || p >= n - 1 {
                return Err(format!("masked position {p} is a special position"));
            }
        }
        if self.masked_positions.windows(2).any(|w| w[0] >= w[1]) {
            return Err("masked positions not strictly ascending".into());
        }
        let visible = |range: std::ops::Range<usize>| -> Vec<u32> {
            range
                .filter(|i| !self.masked_positions.contains(&(*i as u32)))
                .map(|i| self.input_ids[i])
                .filter(|&id| !vocab.is_special_id(id))
                .collect()
        };
        let a = visible(1..inner_sep);
        let b = visible(inner_sep + 1..n - 1);
        if a != self.unmasked_ids_a || b != self.unmasked_ids_b {
            return Err("sentence multisets inconsistent".into());
        }
        if [a, b].concat() != self.unmasked_ids_full {
            return Err("full multiset inconsistent".into());
        }
        Ok(())
    }
}

/// Lengths `(a, b)` after fitting `[CLS] A [SEP] B [SEP]` into `max_len`,
/// cutting B's tail first and then A's. `None` when both cannot keep a token.
pub fn truncated_lengths(a: usize, b: usize, max_len: usize) -> Option<(usize, usize)> {
    if a == 0 || b == 0 || max_len < 5 {
        return None;
    }
    let budget = max_len - 3;
    if a + b <= budget {
        return Some((a, b));
    }
    let b_kept = budget.saturating_sub(a).max(1);
    let a_kept = budget - b_kept;
    Some((a_kept.min(a), b_kept))
}

/// Assembles, masks and pads one example. Returns `Ok(None)` when the pair
/// cannot fit with both parts non-empty.
pub fn build_example<R: Rng + ?Sized>(
    pair: &SentencePair,
    vocab: &Vocabulary,
    table: &WeightTable,
    max_len: usize,
    rng: &mut R,
) -> Result<Option<TrainingExample>, PreprocessError> {
    let Some((a_len, b_len)) = truncated_lengths(pair.tokens_a.len(), pair.tokens_b.len(), max_len)
    else {
        return Ok(None);
    };
    let a = &pair.tokens_a[..a_len];
    let b = &pair.tokens_b[..b_len];
    let s = vocab.specials();

    let content: Vec<u32> = a.iter().chain(b).map(|t| t.id).collect();
    let kinds: Vec<TokenKind> = a.iter().chain(b).map(|t| t.kind).collect();
    let masked = apply_masking(&content, vocab, rng)?;

    // content index -> sequence position
    let position_of = |c: usize| if c < a_len { c + 1 } else { c + 2 };
    let n = a_len + b_len + 3;

    let mut input_ids = Vec::with_capacity(max_len);
    input_ids.push(s.cls);
    input_ids.extend_from_slice(&masked.tokens[..a_len]);
    input_ids.push(s.sep);
    input_ids.extend_from_slice(&masked.tokens[a_len..]);
    input_ids.push(s.sep);
    input_ids.resize(max_len, s.pad);

    let mut segment_ids = vec![0u8; max_len];
    segment_ids[a_len + 2..n].iter_mut().for_each(|v| *v = 1);
    let mut attention_mask = vec![0u8; max_len];
    attention_mask[..n].iter_mut().for_each(|v| *v = 1);

    let masked_kinds: Vec<TokenKind> = masked.positions.iter().map(|&c| kinds[c]).collect();
    let position_weights = masked_kinds
        .iter()
        .map(|&k| loss_weight_for(k, table))
        .collect();

    let mut selected = vec![false; content.len()];
    for &c in &masked.positions {
        selected[c] = true;
    }
    let visible = |range: std::ops::Range<usize>| -> Vec<u32> {
        range
            .filter(|&c| !selected[c] && !vocab.is_special_id(content[c]))
            .map(|c| content[c])
            .collect()
    };
    let unmasked_ids_a = visible(0..a_len);
    let unmasked_ids_b = visible(a_len..content.len());
    let unmasked_ids_full = [unmasked_ids_a.clone(), unmasked_ids_b.clone()].concat();

    Ok(Some(TrainingExample {
        input_ids,
        segment_ids,
        attention_mask,
        masked_positions: masked.positions.iter().map(|&c| position_of(c) as u32).collect(),
        masked_labels: masked.labels,
        masked_kinds,
        position_weights,
        ns_label: if pair.is_random_next {
            NsLabel::Random
        } else {
            NsLabel::Actual
        },
        unmasked_ids_full,
        unmasked_ids_a,
        unmasked_ids_b,
    }))
}

/// Unmasked example for feature extraction: every content token is visible.
pub fn unmasked_example(
    a: &[u32],
    b: Option<&[u32]>,
    vocab: &Vocabulary,
    max_len: usize,
) -> Option<TrainingExample> {
    let s = vocab.specials();
    let (a_len, b_len) = match b {
        Some(b) => truncated_lengths(a.len(), b.len(), max_len)?,
        None => (a.len().min(max_len.saturating_sub(2)), 0),
    };
    if a_len == 0 {
        return None;
    }
    let a = &a[..a_len];
    let b = b.map_or(&[][..], |b| &b[..b_len]);
    let mut input_ids = vec![s.cls];
    input_ids.extend_from_slice(a);
    input_ids.push(s.sep);
    let split = input_ids.len();
    if !b.is_empty() {
        input_ids.extend_from_slice(b);
        input_ids.push(s.sep);
    }
    let n = input_ids.len();
    input_ids.resize(max_len, s.pad);
    let mut segment_ids = vec![0u8; max_len];
    segment_ids[split..n].iter_mut().for_each(|v| *v = 1);
    let mut attention_mask = vec![0u8; max_len];
    attention_mask[..n].iter_mut().for_each(|v| *v = 1);
    let keep = |ids: &[u32]| -> Vec<u32> {
        ids.iter().copied().filter(|&id| !vocab.is_special_id(id)).collect()
    };
    let (ua, ub) = (keep(a), keep(b));
    Some(TrainingExample {
        input_ids,
        segment_ids,
        attention_mask,
        masked_positions: Vec::new(),
        masked_labels: Vec::new(),
        masked_kinds: Vec::new(),
        position_weights: Vec::new(),
        ns_label: NsLabel::Actual,
        unmasked_ids_full: [ua.clone(), ub.clone()].concat(),
        unmasked_ids_a: ua,
        unmasked_ids_b: ub,
    })
}
