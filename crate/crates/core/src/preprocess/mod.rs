//! Raw tweets to training examples: sentence splitting, next-sentence
//! pairing, masking, weighting, truncation and padding.

mod example;
mod format;
mod masking;
mod pairing;
mod sentences;

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use example::{
    build_example, truncated_lengths, unmasked_example, NsLabel, TrainingExample, MAX_LEN,
};
pub use format::{
    decode_examples, encode_examples, read_examples, write_examples, ExampleFileHeader,
    EXAMPLE_MAGIC, EXAMPLE_VERSION,
};
pub use masking::{
    apply_masking, selection_count, Masked, MASK_TOKEN_PROBABILITY, RANDOM_TOKEN_PROBABILITY,
};
pub use pairing::{make_pair, DonorPool, SentencePair, RANDOM_NEXT_PROBABILITY};
pub use sentences::split_sentences;

use crate::tokenizer::{tokenize, Vocabulary, WeightTable};

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed example file: {0}")]
    Format(String),
    #[error("cannot mask an empty token sequence")]
    EmptyMaskingInput,
    #[error("vocabulary has no non-special tokens to draw replacements from")]
    NoRegularTokens,
}

impl PreprocessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PreparedCorpus {
    pub examples: Vec<TrainingExample>,
    /// Tweets dropped for having fewer than two sentences.
    pub single_sentence: usize,
    /// Pairs dropped because both parts could not fit.
    pub unfittable: usize,
}

/// Turns raw tweets (one per entry) into examples, deterministically for a
/// given seed.
pub fn prepare_corpus<S: AsRef<str>>(
    tweets: &[S],
    vocab: &Vocabulary,
    table: &WeightTable,
    max_len: usize,
    seed: u64,
) -> Result<PreparedCorpus, PreprocessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = Vec::with_capacity(tweets.len());
    let mut single_sentence = 0;
    for tweet in tweets {
        let tokens = tokenize(tweet.as_ref(), vocab);
        let sentences = split_sentences(&tokens, vocab);
        if sentences.len() < 2 {
            single_sentence += 1;
        } else {
            split.push(sentences);
        }
    }
    let pool = DonorPool::from_tweets(&split);
    let mut out = PreparedCorpus {
        single_sentence,
        ..Default::default()
    };
    for (i, sentences) in split.iter().enumerate() {
        let Some(pair) = make_pair(sentences, &pool, Some(i), &mut rng) else {
            continue;
        };
        match build_example(&pair, vocab, table, max_len, &mut rng)? {
            Some(ex) => out.examples.push(ex),
            None => out.unfittable += 1,
        }
    }
    Ok(out)
}

/// Reads a corpus file (one tweet per line), prepares it and writes an
/// example file.
pub fn prepare_file(
    corpus: &Path,
    vocab: &Vocabulary,
    table: &WeightTable,
    out: &Path,
    seed: u64,
) -> Result<PreparedCorpus, PreprocessError> {
    let text = std::fs::read_to_string(corpus).map_err(|e| PreprocessError::io(corpus, e))?;
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let prepared = prepare_corpus(&lines, vocab, table, MAX_LEN, seed)?;
    let header = ExampleFileHeader {
        version: EXAMPLE_VERSION,
        vocab_size: vocab.len() as u32,
        max_len: MAX_LEN as u32,
    };
    write_examples(out, &header, &prepared.examples)?;
    Ok(prepared)
}
