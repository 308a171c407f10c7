//! Full forward pass: encoder, latent bias and both heads, per example and
//! per batch.

use crate::encoder::{encode, ModelConfig};
use crate::error::Result;
use crate::heads::{count_correct, mlm_logits, ns_logits_and_loss, ponder_loss, weighted_mean, LossBreakdown};
use crate::latent::{
    distance_features_var, example_bias_var, latent_distribution, latent_distribution_var,
};
use crate::numeric::{ParamStore, Real, Tape, Tensor, Var};
use crate::preprocess::{split_sentences, unmasked_example, TrainingExample};
use crate::tokenizer::{tokenize, Vocabulary};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ForwardOptions {
    /// Feed zeros instead of the distance features to the next-sentence
    /// classifier.
    pub zero_distance_features: bool,
}

#[derive(Clone, Debug)]
pub struct ExampleForward {
    /// `masked × V`.
    pub mlm_logits: Var,
    /// Per masked position cross-entropy.
    pub mlm_ce: Var,
    /// `1 × 2`.
    pub ns_logits: Var,
    pub ns_loss: Var,
    pub ponder_costs: Var,
    pub steps_taken: Vec<usize>,
    /// Category distribution over the whole example (latent variants).
    pub distribution: Option<Var>,
}

/// Forward pass for one example at its true length (padding is dropped,
/// which is exact because padded keys are invisible anyway).
pub fn forward_example<F: Real>(
    tape: &mut Tape<F>,
    config: &ModelConfig,
    example: &TrainingExample,
    options: ForwardOptions,
) -> Result<ExampleForward> {
    let n = example.true_len();
    let out = encode(
        tape,
        config,
        &example.input_ids[..n],
        &example.segment_ids[..n],
        None,
    )?;

    let (latent_bias, features, distribution) = if config.latent() > 0 {
        let b = tape.param("latent.bias_matrix")?;
        let p = latent_distribution_var(tape, b, &example.unmasked_ids_full)?;
        let bias = example_bias_var(tape, b, p)?;
        let features = if options.zero_distance_features {
            tape.constant(Tensor::zeros(vec![2]))?
        } else {
            let pa = latent_distribution_var(tape, b, &example.unmasked_ids_a)?;
            let pb = latent_distribution_var(tape, b, &example.unmasked_ids_b)?;
            distance_features_var(tape, pa, pb)?
        };
        (Some(bias), Some(features), Some(p))
    } else {
        (None, None, None)
    };

    let positions: Vec<usize> = example.masked_positions.iter().map(|&p| p as usize).collect();
    let labels: Vec<usize> = example.masked_labels.iter().map(|&l| l as usize).collect();
    let logits = mlm_logits(tape, out.states, &positions, latent_bias)?;
    let ce = tape.cross_entropy(logits, &labels)?;
    let (ns_logits, ns_loss) =
        ns_logits_and_loss(tape, config, out.states, features, example.ns_label.index())?;
    Ok(ExampleForward {
        mlm_logits: logits,
        mlm_ce: ce,
        ns_logits,
        ns_loss,
        ponder_costs: out.ponder_costs,
        steps_taken: out.steps_taken,
        distribution,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BatchStats {
    pub examples: usize,
    pub masked: usize,
    pub mlm_correct: usize,
    pub ns_correct: usize,
    /// Unpadded positions.
    pub positions: usize,
    /// Sum of recurrence steps over unpadded positions.
    pub steps: usize,
    /// Every masked position in the batch had weight zero.
    pub zero_weight: bool,
}

#[derive(Clone, Debug)]
pub struct BatchForward {
    pub loss: Var,
    pub breakdown: LossBreakdown,
    pub stats: BatchStats,
}

/// Total loss for a batch: weighted MLM loss normalised over the batch's
/// weight total, mean next-sentence loss, and `tau ×` mean ponder cost over
/// every unpadded position (recurrent variants only).
pub fn forward_batch<F: Real>(
    tape: &mut Tape<F>,
    config: &ModelConfig,
    examples: &[&TrainingExample],
    options: ForwardOptions,
) -> Result<BatchForward> {
    if examples.is_empty() {
        return Err(crate::Error::Config("empty batch".into()));
    }
    let mut ce_parts = Vec::new();
    let mut weights = Vec::new();
    let mut ns_parts = Vec::new();
    let mut cost_parts = Vec::new();
    let mut stats = BatchStats {
        examples: examples.len(),
        ..Default::default()
    };
    for ex in examples {
        let f = forward_example(tape, config, ex, options)?;
        let labels: Vec<usize> = ex.masked_labels.iter().map(|&l| l as usize).collect();
        stats.masked += labels.len();
        stats.mlm_correct += count_correct(tape.value(f.mlm_logits), &labels);
        stats.ns_correct += count_correct(tape.value(f.ns_logits), &[ex.ns_label.index()]);
        stats.positions += f.steps_taken.len();
        stats.steps += f.steps_taken.iter().sum::<usize>();
        ce_parts.push(f.mlm_ce);
        weights.extend(ex.position_weights.iter().map(|&w| F::of(w as f64)));
        ns_parts.push(f.ns_loss);
        cost_parts.push(f.ponder_costs);
    }
    let ce = tape.concat(&ce_parts)?;
    let (mlm, zero_weight) = weighted_mean(tape, ce, &weights)?;
    stats.zero_weight = zero_weight;
    let ns = tape.concat(&ns_parts)?;
    let ns = tape.masked_mean(ns, &vec![true; examples.len()])?;
    let ponder = if config.variant.is_universal() {
        let costs = tape.concat(&cost_parts)?;
        ponder_loss(tape, costs, &vec![true; stats.positions], F::of(config.act_tau))?
    } else {
        tape.constant(Tensor::scalar(F::zero()))?
    };
    let total = tape.add(mlm, ns)?;
    let total = tape.add(total, ponder)?;
    let scalar = |v: Var| tape.value(v).data()[0].as_f64();
    let breakdown = LossBreakdown {
        mlm: scalar(mlm),
        ns: scalar(ns),
        ponder: scalar(ponder),
        total: scalar(total),
    };
    Ok(BatchForward {
        loss: total,
        breakdown,
        stats,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Features<F> {
    /// Final states, `true_length × H`.
    pub token_vectors: Tensor<F>,
    /// Final `[CLS]` state.
    pub classification: Vec<F>,
    /// `None` for variants without latent categories.
    pub distribution: Option<Vec<F>>,
}

/// Final-layer states, the `[CLS]` vector and the category distribution over
/// the example's unmasked content tokens.
pub fn extract_features<F: Real>(
    store: &ParamStore<F>,
    config: &ModelConfig,
    example: &TrainingExample,
) -> Result<Features<F>> {
    let n = example.true_len();
    let mut tape = Tape::new(store);
    let out = encode(
        &mut tape,
        config,
        &example.input_ids[..n],
        &example.segment_ids[..n],
        None,
    )?;
    let states = tape.value(out.states).clone();
    let classification = states.row(0).to_vec();
    let distribution = if config.latent() > 0 {
        let b = store.require("latent.bias_matrix")?;
        Some(latent_distribution(b, &example.unmasked_ids_full)?)
    } else {
        None
    };
    Ok(Features {
        token_vectors: states,
        classification,
        distribution,
    })
}

/// Unmasked example for raw text: the first sentence is part A and the rest,
/// if any, part B. `None` when the text has no tokens.
pub fn text_example(text: &str, vocab: &Vocabulary, max_len: usize) -> Option<TrainingExample> {
    let tokens = tokenize(text, vocab);
    let sentences = split_sentences(&tokens, vocab);
    let ids = |s: &[Vec<crate::tokenizer::Token>]| -> Vec<u32> {
        s.iter().flatten().map(|t| t.id).collect()
    };
    let (first, rest) = sentences.split_first()?;
    let a = ids(std::slice::from_ref(first));
    let b = ids(rest);
    unmasked_example(&a, (!b.is_empty()).then_some(&b[..]), vocab, max_len)
}
