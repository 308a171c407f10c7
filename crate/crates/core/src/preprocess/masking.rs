use rand::seq::index;
use rand::Rng;

use super::PreprocessError;
use crate::tokenizer::Vocabulary;

pub const SELECTION_PERCENT: usize = 15;
pub const MASK_TOKEN_PROBABILITY: f64 = 0.8;
pub const RANDOM_TOKEN_PROBABILITY: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Masked {
    /// Tokens after replacement.
    pub tokens: Vec<u32>,
    /// Selected positions, ascending.
    pub positions: Vec<usize>,
    /// Original id at each selected position.
    pub labels: Vec<u32>,
}

/// `max(1, round(0.15·n))`, rounding halves up.
pub fn selection_count(n: usize) -> usize {
    ((SELECTION_PERCENT * n + 50) / 100).max(1)
}

/// Selects positions uniformly without replacement and replaces each with
/// `[MASK]` (80%), a random non-special id (10%) or leaves it (10%).
pub fn apply_masking<R: Rng + ?Sized>(
    tokens: &[u32],
    vocab: &Vocabulary,
    rng: &mut R,
) -> Result<Masked, PreprocessError> {
    if tokens.is_empty() {
        return Err(PreprocessError::EmptyMaskingInput);
    }
    let k = selection_count(tokens.len());
    let mut positions = index::sample(rng, tokens.len(), k).into_vec();
    positions.sort_unstable();

    let mask_id = vocab.specials().mask;
    let mut out = tokens.to_vec();
    let mut labels = Vec::with_capacity(k);
    for &p in &positions {
        labels.push(tokens[p]);
        let draw: f64 = rng.gen();
        if draw < MASK_TOKEN_PROBABILITY {
            out[p] = mask_id;
        } else if draw < MASK_TOKEN_PROBABILITY + RANDOM_TOKEN_PROBABILITY {
            out[p] = random_regular_id(vocab, rng)?;
        }
    }
    Ok(Masked {
        tokens: out,
        positions,
        labels,
    })
}

fn random_regular_id<R: Rng + ?Sized>(vocab: &Vocabulary, rng: &mut R) -> Result<u32, PreprocessError> {
    if vocab.len() <= 5 {
        return Err(PreprocessError::NoRegularTokens);
    }
    loop {
        let id = rng.gen_range(0..vocab.len() as u32);
        if !vocab.is_special_id(id) {
            return Ok(id);
        }
    }
}
