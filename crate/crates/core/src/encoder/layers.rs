use super::config::{ModelConfig, UNIT_BLOCKS};
use super::registry::{base_block_prefix, unit_block_prefix};
use super::EncoderError;
use crate::numeric::{Real, Tape, Tensor, Var};

pub const NORM_EPSILON: f64 = 1e-12;

/// Final states plus the ACT bookkeeping for one sequence.
#[derive(Clone, Debug)]
pub struct EncoderOutput {
    /// `positions × hidden`.
    pub states: Var,
    /// Per-position ponder cost (steps + remainder), a length-`positions`
    /// vector. All ones for the stacked encoder.
    pub ponder_costs: Var,
    pub steps_taken: Vec<usize>,
    /// `halting_weights[step][position]`; each position's column sums to 1.
    pub halting_weights: Vec<Vec<f64>>,
    /// Halting unit outputs `h`, same layout (recurrent variants only).
    pub halting_probabilities: Vec<Vec<f64>>,
}

/// Token, position and segment embeddings, summed and normalised.
pub fn embed_inputs<F: Real>(
    tape: &mut Tape<F>,
    config: &ModelConfig,
    input_ids: &[u32],
    segment_ids: &[u8],
) -> Result<Var, EncoderError> {
    let n = input_ids.len();
    if segment_ids.len() != n {
        return Err(EncoderError::InvalidInput(format!(
            "{n} ids but {} segment ids",
            segment_ids.len()
        )));
    }
    if n == 0 {
        return Err(EncoderError::InvalidInput("empty sequence".into()));
    }
    if n > config.max_positions {
        return Err(EncoderError::OutOfRange {
            what: "position",
            index: n - 1,
            extent: config.max_positions,
        });
    }
    if let Some(&id) = input_ids.iter().find(|&&id| id as usize >= config.vocab) {
        return Err(EncoderError::OutOfRange {
            what: "token id",
            index: id as usize,
            extent: config.vocab,
        });
    }
    if let Some(&s) = segment_ids.iter().find(|&&s| s > 1) {
        return Err(EncoderError::OutOfRange {
            what: "segment id",
            index: s as usize,
            extent: 2,
        });
    }
    let ids: Vec<usize> = input_ids.iter().map(|&i| i as usize).collect();
    let segs: Vec<usize> = segment_ids.iter().map(|&s| s as usize).collect();
    let positions: Vec<usize> = (0..n).collect();

    let word = tape.param("embeddings.word")?;
    let word = tape.gather_rows(word, &ids)?;
    let pos = tape.param("embeddings.position")?;
    let pos = tape.gather_rows(pos, &positions)?;
    let seg = tape.param("embeddings.segment")?;
    let seg = tape.gather_rows(seg, &segs)?;
    let sum = tape.add(word, pos)?;
    let sum = tape.add(sum, seg)?;
    layer_norm(tape, "embeddings.norm", sum)
}

fn layer_norm<F: Real>(tape: &mut Tape<F>, prefix: &str, x: Var) -> Result<Var, EncoderError> {
    let gain = tape.param(&format!("{prefix}.gain"))?;
    let shift = tape.param(&format!("{prefix}.shift"))?;
    Ok(tape.layer_norm(x, gain, shift, F::of(NORM_EPSILON))?)
}

fn dense<F: Real>(tape: &mut Tape<F>, prefix: &str, x: Var) -> Result<Var, EncoderError> {
    let w = tape.param(&format!("{prefix}.weight"))?;
    let b = tape.param(&format!("{prefix}.bias"))?;
    let y = tape.matmul(x, w)?;
    Ok(tape.add_row(y, b)?)
}

/// One self-attention + feed-forward block. `keep[j]` false hides position
/// `j` from every query. Returns the new states and each head's attention
/// probabilities (`positions × positions`).
pub fn encoder_block<F: Real>(
    tape: &mut Tape<F>,
    config: &ModelConfig,
    prefix: &str,
    states: Var,
    keep: Option<&[bool]>,
) -> Result<(Var, Vec<Var>), EncoderError> {
    let q = dense(tape, &format!("{prefix}.attn.query"), states)?;
    let wk = tape.param(&format!("{prefix}.attn.key.weight"))?;
    let k = tape.matmul(states, wk)?;
    let v = dense(tape, &format!("{prefix}.attn.value"), states)?;

    let dh = config.head_width();
    let scale = F::one() / F::of(dh as f64).sqrt();
    let mut contexts = Vec::with_capacity(config.heads);
    let mut attention = Vec::with_capacity(config.heads);
    for head in 0..config.heads {
        let (lo, hi) = (head * dh, (head + 1) * dh);
        let (qh, kh, vh) = if config.heads == 1 {
            (q, k, v)
        } else {
            (
                tape.slice_cols(q, lo, hi)?,
                tape.slice_cols(k, lo, hi)?,
                tape.slice_cols(v, lo, hi)?,
            )
        };
        let scores = tape.matmul_t(qh, kh)?;
        let scores = tape.scale(scores, scale)?;
        let probs = tape.softmax_rows(scores, keep)?;
        contexts.push(tape.matmul(probs, vh)?);
        attention.push(probs);
    }
    let context = if contexts.len() == 1 {
        contexts[0]
    } else {
        tape.concat_cols(&contexts)?
    };
    let attended = dense(tape, &format!("{prefix}.attn.output"), context)?;
    let residual = tape.add(states, attended)?;
    let mid = layer_norm(tape, &format!("{prefix}.attn.norm"), residual)?;

    let inner = dense(tape, &format!("{prefix}.ffn.inner"), mid)?;
    let inner = tape.gelu(inner)?;
    let outer = dense(tape, &format!("{prefix}.ffn.outer"), inner)?;
    let residual = tape.add(mid, outer)?;
    let out = layer_norm(tape, &format!("{prefix}.ffn.norm"), residual)?;
    Ok((out, attention))
}

/// Stacked encoder with `layers_base` distinct blocks.
pub fn encode_base<F: Real>(
    tape: &mut Tape<F>,
    config: &ModelConfig,
    states: Var,
    keep: Option<&[bool]>,
) -> Result<EncoderOutput, EncoderError> {
    if config.variant.is_universal() {
        return Err(EncoderError::InvalidConfig(format!(
            "stacked encoder called for variant {}",
            config.variant
        )));
    }
    let n = tape.shape(states)[0];
    let mut x = states;
    for i in 0..config.layers_base {
        x = encoder_block(tape, config, &base_block_prefix(i), x, keep)?.0;
    }
    let ponder_costs = tape.constant(Tensor::filled(vec![n], F::one()))?;
    Ok(EncoderOutput {
        states: x,
        ponder_costs,
        steps_taken: vec![1; n],
        halting_weights: vec![vec![1.0; n]],
        halting_probabilities: Vec::new(),
    })
}

/// Shared three-block unit applied repeatedly, with per-position adaptive
/// halting. A position stops once its accumulated halting probability would
/// pass `1 - act_epsilon` (or at `act_max_steps`); its last step is weighted
/// by the remainder and its state is frozen from then on.
pub fn encode_universal<F: Real>(
    tape: &mut Tape<F>,
    config: &ModelConfig,
    states: Var,
    keep: Option<&[bool]>,
) -> Result<EncoderOutput, EncoderError> {
    if !config.variant.is_universal() {
        return Err(EncoderError::InvalidConfig(format!(
            "recurrent encoder called for variant {}",
            config.variant
        )));
    }
    let n = tape.shape(states)[0];
    let threshold = 1.0 - config.act_epsilon;

    let step_table = tape.param("recurrent.step_embedding")?;
    let halt_w = tape.param("recurrent.halting.weight")?;
    let halt_w = tape.reshape(halt_w, &[config.hidden, 1])?;
    let halt_b = tape.param("recurrent.halting.bias")?;
    let zeros = tape.constant(Tensor::zeros(vec![n, 1]))?;

    let mut state = states;
    let mut acc = zeros;
    let mut remainder = zeros;
    let mut acc_values = vec![0.0f64; n];
    let mut halted = vec![false; n];
    let mut steps = vec![0usize; n];
    let mut output: Option<Var> = None;
    let mut halting_weights = Vec::new();
    let mut halting_probabilities = Vec::new();

    for t in 0..config.act_max_steps {
        let running: Vec<bool> = halted.iter().map(|h| !h).collect();
        if !running.iter().any(|&r| r) {
            break;
        }
        let step_row = tape.gather_rows(step_table, &[t])?;
        let step_row = tape.reshape(step_row, &[config.hidden])?;
        let mut x = tape.add_row(state, step_row)?;
        for i in 0..UNIT_BLOCKS {
            x = encoder_block(tape, config, &unit_block_prefix(i), x, keep)?.0;
        }
        let next = tape.select_rows(&running, x, state)?;

        let logit = tape.matmul(next, halt_w)?;
        let logit = tape.add_row(logit, halt_b)?;
        let h = tape.sigmoid(logit)?;
        let h_values = tape.value(h).to_f64_vec();

        let last = t + 1 == config.act_max_steps;
        let halt_now: Vec<bool> = (0..n)
            .map(|i| running[i] && (last || acc_values[i] + h_values[i] > threshold))
            .collect();
        let carry_on: Vec<bool> = (0..n).map(|i| running[i] && !halt_now[i]).collect();

        let rest = tape.affine(acc, -F::one(), F::one())?;
        let partial = tape.select_rows(&carry_on, h, zeros)?;
        let weight = tape.select_rows(&halt_now, rest, partial)?;
        remainder = tape.select_rows(&halt_now, rest, remainder)?;
        let grown = tape.add(acc, h)?;
        acc = tape.select_rows(&carry_on, grown, acc)?;

        halting_weights.push(tape.value(weight).to_f64_vec());
        halting_probabilities.push(h_values.clone());
        for i in 0..n {
            if carry_on[i] {
                acc_values[i] += h_values[i];
            }
            if running[i] {
                steps[i] += 1;
            }
            halted[i] |= halt_now[i];
        }

        let weight = tape.reshape(weight, &[n])?;
        let contribution = tape.scale_rows(next, weight)?;
        output = Some(match output {
            Some(o) => tape.add(o, contribution)?,
            None => contribution,
        });
        state = next;
    }

    let remainder = tape.reshape(remainder, &[n])?;
    let step_counts = tape.constant(Tensor::vector(
        steps.iter().map(|&s| F::of(s as f64)).collect(),
    ))?;
    let ponder_costs = tape.add(remainder, step_counts)?;
    Ok(EncoderOutput {
        states: output.expect("at least one recurrence"),
        ponder_costs,
        steps_taken: steps,
        halting_weights,
        halting_probabilities,
    })
}

/// Embedding followed by the variant's encoder.
pub fn encode<F: Real>(
    tape: &mut Tape<F>,
    config: &ModelConfig,
    input_ids: &[u32],
    segment_ids: &[u8],
    keep: Option<&[bool]>,
) -> Result<EncoderOutput, EncoderError> {
    let x = embed_inputs(tape, config, input_ids, segment_ids)?;
    if config.variant.is_universal() {
        encode_universal(tape, config, x, keep)
    } else {
        encode_base(tape, config, x, keep)
    }
}
