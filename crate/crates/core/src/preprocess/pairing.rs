use rand::Rng;

use crate::tokenizer::Token;

/// Probability that the second part is swapped for another tweet's.
pub const RANDOM_NEXT_PROBABILITY: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SentencePair {
    pub tokens_a: Vec<Token>,
    pub tokens_b: Vec<Token>,
    pub is_random_next: bool,
}

/// Second parts ("the rest of the tweet") of every pairable tweet.
#[derive(Clone, Debug, Default)]
pub struct DonorPool {
    rests: Vec<Vec<Token>>,
}

impl DonorPool {
    pub fn new(rests: Vec<Vec<Token>>) -> Self {
        Self { rests }
    }

    pub fn from_tweets(tweets: &[Vec<Vec<Token>>]) -> Self {
        Self::new(
            tweets
                .iter()
                .filter(|t| t.len() >= 2)
                .map(|t| t[1..].concat())
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.rests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rests.is_empty()
    }

    /// Uniform draw over donors other than `exclude`.
    pub fn sample<R: Rng + ?Sized>(&self, exclude: Option<usize>, rng: &mut R) -> Option<&[Token]> {
        let usable = self.rests.len() - usize::from(exclude.is_some_and(|e| e < self.rests.len()));
        if usable == 0 {
            return None;
        }
        let mut pick = rng.gen_range(0..usable);
        if let Some(e) = exclude {
            if pick >= e {
                pick += 1;
            }
        }
        Some(&self.rests[pick])
    }
}

/// Builds the (first sentence, rest) pair for one tweet. Returns `None` for
/// tweets with fewer than two sentences, which the caller drops.
///
/// `donor_index` is this tweet's own index in `pool`, excluded from sampling.
pub fn make_pair<R: Rng + ?Sized>(
    sentences: &[Vec<Token>],
    pool: &DonorPool,
    donor_index: Option<usize>,
    rng: &mut R,
) -> Option<SentencePair> {
    if sentences.len() < 2 {
        return None;
    }
    let tokens_a = sentences[0].clone();
    if rng.gen_bool(RANDOM_NEXT_PROBABILITY) {
        if let Some(rest) = pool.sample(donor_index, rng) {
            return Some(SentencePair {
                tokens_a,
                tokens_b: rest.to_vec(),
                is_random_next: true,
            });
        }
    }
    Some(SentencePair {
        tokens_a,
        tokens_b: sentences[1..].concat(),
        is_random_next: false,
    })
}
