//! Training and evaluation loops, optimiser, checkpoints and metrics.

mod checkpoint;
mod config;
mod metrics;
mod optimizer;

use std::collections::HashSet;
use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint,
    CheckpointError, LoadedCheckpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use config::{model_config_text, parse_model_config, Timing, TrainConfig};
pub use metrics::{
    format_sig, metrics_csv, read_metrics, write_metrics, MetricsRow, METRICS_HEADER,
};
pub use optimizer::{learning_rate, AdamW, ADAM_EPSILON, BETA1, BETA2};

use crate::encoder::{init_params, ModelConfig};
use crate::error::{Error, Result};
use crate::heads::{count_correct, LossBreakdown};
use crate::model::{forward_batch, forward_example, ForwardOptions};
use crate::numeric::{NumericError, ParamStore, Real, Tape};
use crate::preprocess::{read_examples, TrainingExample};
use crate::tokenizer::Vocabulary;

/// Nominal arithmetic rate behind [`Timing::Logical`].
pub const LOGICAL_OPS_PER_SECOND: f64 = 1e9;
/// Backward plus optimiser work relative to the recorded forward work.
const STEP_WORK_FACTOR: u64 = 3;

pub const HALTING_PIN_BIAS: f32 = -10.0;

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub rows: Vec<MetricsRow>,
    pub params: ParamStore<f32>,
    pub metrics_path: PathBuf,
    pub checkpoint_path: PathBuf,
    /// Batches whose masked positions all had weight zero.
    pub zero_weight_batches: usize,
}

#[derive(Default)]
struct Interval {
    batches: usize,
    losses: LossBreakdown,
    examples: usize,
    masked: usize,
    mlm_correct: usize,
    ns_correct: usize,
    positions: usize,
    steps: usize,
    seconds: f64,
}

impl Interval {
    fn row(&self, step: usize, elapsed: f64) -> MetricsRow {
        let b = self.batches.max(1) as f64;
        let ratio = |a: usize, n: usize| if n == 0 { 0.0 } else { a as f64 / n as f64 };
        MetricsRow {
            step,
            wall_seconds: elapsed,
            total_loss: self.losses.total / b,
            mlm_loss: self.losses.mlm / b,
            ns_loss: self.losses.ns / b,
            ponder_loss: self.losses.ponder / b,
            mlm_acc: ratio(self.mlm_correct, self.masked),
            ns_acc: ratio(self.ns_correct, self.examples),
            examples_per_sec: self.examples as f64 / self.seconds.max(1e-9),
            mean_ponder_steps: ratio(self.steps, self.positions),
        }
    }
}

/// Loads the vocabulary and example file named in the configuration, then
/// trains.
pub fn train(config: &TrainConfig) -> Result<TrainOutcome> {
    let vocab_path = config
        .vocab_path
        .as_deref()
        .ok_or_else(|| Error::Config("vocab_path is required".into()))?;
    let examples_path = config
        .examples_path
        .as_deref()
        .ok_or_else(|| Error::Config("examples_path is required".into()))?;
    let vocab = Vocabulary::load(vocab_path, config.emoticons_path.as_deref())?;
    let (header, examples) = read_examples(examples_path)?;
    if header.vocab_size as usize != vocab.len() {
        return Err(Error::Mismatch(format!(
            "example file was prepared with a vocabulary of {} tokens, vocabulary has {}",
            header.vocab_size,
            vocab.len()
        )));
    }
    train_on(config, &vocab, examples)
}

/// Trains on in-memory examples. Writes `metrics.csv`, periodic
/// `checkpoint-<step>.lutlm` files and `final.lutlm` into the output
/// directory.
pub fn train_on(
    config: &TrainConfig,
    vocab: &Vocabulary,
    mut examples: Vec<TrainingExample>,
) -> Result<TrainOutcome> {
    let mut config = config.clone();
    if config.model.vocab == 0 {
        config.model.vocab = vocab.len();
    }
    config.validate()?;
    if config.model.vocab != vocab.len() {
        return Err(Error::Mismatch(format!(
            "model vocab {} but vocabulary has {} tokens",
            config.model.vocab,
            vocab.len()
        )));
    }
    if examples.is_empty() {
        return Err(Error::Config("no training examples".into()));
    }
    for (i, ex) in examples.iter().enumerate() {
        ex.validate(vocab)
            .map_err(|e| Error::Mismatch(format!("example {i} does not match vocabulary: {e}")))?;
    }
    if config.weights_overridden {
        for ex in &mut examples {
            ex.reweight(&config.weights);
        }
    }
    std::fs::create_dir_all(&config.output_dir).map_err(|e| Error::io(&config.output_dir, e))?;
    let metrics_path = config.output_dir.join("metrics.csv");
    let final_path = config.output_dir.join("final.lutlm");

    let model = &config.model;
    let mut store = init_params::<f32>(model, config.seed)?;
    let mut frozen = HashSet::new();
    if config.act_pinned {
        store
            .get_mut("recurrent.halting.weight")
            .expect("universal variant")
            .data_mut()
            .fill(0.0);
        store.get_mut("recurrent.halting.bias").expect("universal variant").data_mut()[0] =
            HALTING_PIN_BIAS;
        frozen.insert("recurrent.halting.weight".to_string());
        frozen.insert("recurrent.halting.bias".to_string());
    }
    let mut optimizer = AdamW::for_model(model, config.weight_decay, frozen);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(&mut rng);
    let mut cursor = 0;

    let mut rows = Vec::new();
    let mut interval = Interval::default();
    let mut elapsed = 0.0;
    let mut zero_weight_batches = 0;
    for step in 1..=config.steps {
        let mut batch = Vec::with_capacity(config.batch_size);
        while batch.len() < config.batch_size {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(&examples[order[cursor]]);
            cursor += 1;
        }

        let started = Instant::now();
        let mut tape = Tape::new(&store);
        let fwd = forward_batch(&mut tape, model, &batch, ForwardOptions::default())
            .map_err(|e| diverged(step, e))?;
        let grads = tape.param_gradients(fwd.loss).map_err(|e| diverged(step, e.into()))?;
        let work = tape.work();
        drop(tape);
        let lr = learning_rate(step, config.steps, config.learning_rate, config.warmup_fraction);
        optimizer.step(&mut store, &grads, lr)?;
        let seconds = match config.timing {
            Timing::Wall => started.elapsed().as_secs_f64(),
            Timing::Logical => (work * STEP_WORK_FACTOR) as f64 / LOGICAL_OPS_PER_SECOND,
        };
        elapsed += seconds;

        let s = fwd.stats;
        zero_weight_batches += usize::from(s.zero_weight);
        interval.batches += 1;
        interval.losses.mlm += fwd.breakdown.mlm;
        interval.losses.ns += fwd.breakdown.ns;
        interval.losses.ponder += fwd.breakdown.ponder;
        interval.losses.total += fwd.breakdown.total;
        interval.examples += s.examples;
        interval.masked += s.masked;
        interval.mlm_correct += s.mlm_correct;
        interval.ns_correct += s.ns_correct;
        interval.positions += s.positions;
        interval.steps += s.steps;
        interval.seconds += seconds;

        if step % config.eval_interval == 0 || step == config.steps {
            let row = interval.row(step, elapsed);
            log::info!(
                "step {step}: loss {:.4} mlm_acc {:.3} ns_acc {:.3} ponder {:.2}",
                row.total_loss,
                row.mlm_acc,
                row.ns_acc,
                row.mean_ponder_steps
            );
            rows.push(row);
            write_metrics(&metrics_path, &rows)?;
            interval = Interval::default();
        }
        if config.checkpoint_interval > 0 && step % config.checkpoint_interval == 0 {
            let path = config.output_dir.join(format!("checkpoint-{step}.lutlm"));
            save(&path, model, vocab, step, &store)?;
        }
    }
    save(&final_path, model, vocab, config.steps, &store)?;
    if zero_weight_batches > 0 {
        log::warn!("{zero_weight_batches} batches had only zero-weight masked positions");
    }
    Ok(TrainOutcome {
        rows,
        params: store,
        metrics_path,
        checkpoint_path: final_path,
        zero_weight_batches,
    })
}

fn diverged(step: usize, e: Error) -> Error {
    match e {
        Error::Numeric(
            n @ (NumericError::NonFinite { .. } | NumericError::NonFiniteGradient { .. }),
        ) => Error::Diverged {
            step,
            detail: n.to_string(),
        },
        other => other,
    }
}

fn save(
    path: &std::path::Path,
    model: &ModelConfig,
    vocab: &Vocabulary,
    step: usize,
    store: &ParamStore<f32>,
) -> Result<()> {
    let ck = Checkpoint {
        config: model.clone(),
        vocab: vocab.clone(),
        step: step as u64,
        params: store.clone(),
    };
    Ok(save_checkpoint(path, &ck)?)
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub examples: usize,
    pub mlm_accuracy: f64,
    pub ns_accuracy: f64,
    /// Means over the whole set, normalised as in training.
    pub losses: LossBreakdown,
    pub mean_ponder_steps: f64,
}

#[derive(Clone, Copy, Default)]
struct ExampleStats {
    weighted_ce: f64,
    weight: f64,
    ns_loss: f64,
    ponder_cost: f64,
    positions: usize,
    steps: usize,
    masked: usize,
    mlm_correct: usize,
    ns_correct: usize,
}

fn example_stats<F: Real>(
    store: &ParamStore<F>,
    config: &ModelConfig,
    ex: &TrainingExample,
) -> Result<ExampleStats> {
    let mut tape = Tape::new(store);
    let f = forward_example(&mut tape, config, ex, ForwardOptions::default())?;
    let labels: Vec<usize> = ex.masked_labels.iter().map(|&l| l as usize).collect();
    let ce = tape.value(f.mlm_ce).to_f64_vec();
    Ok(ExampleStats {
        weighted_ce: ce
            .iter()
            .zip(&ex.position_weights)
            .map(|(c, &w)| c * w as f64)
            .sum(),
        weight: ex.position_weights.iter().map(|&w| w as f64).sum(),
        ns_loss: tape.value(f.ns_loss).data()[0].as_f64(),
        ponder_cost: tape.value(f.ponder_costs).to_f64_vec().iter().sum(),
        positions: f.steps_taken.len(),
        steps: f.steps_taken.iter().sum(),
        masked: labels.len(),
        mlm_correct: count_correct(tape.value(f.mlm_logits), &labels),
        ns_correct: count_correct(tape.value(f.ns_logits), &[ex.ns_label.index()]),
    })
}

/// Metrics over a fixed example set. Parameters are only read. Examples are
/// spread over threads and reduced in input order, so results do not depend
/// on the thread count.
pub fn evaluate<F: Real>(
    store: &ParamStore<F>,
    config: &ModelConfig,
    examples: &[TrainingExample],
) -> Result<EvalReport> {
    if let Some((i, ex)) = examples
        .iter()
        .enumerate()
        .find(|(_, ex)| ex.input_ids.iter().any(|&id| id as usize >= config.vocab))
    {
        let bad = ex.input_ids.iter().max().copied().unwrap_or(0);
        return Err(Error::Mismatch(format!(
            "example {i} holds id {bad}, model vocabulary has {} tokens",
            config.vocab
        )));
    }
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(16);
    let chunk = examples.len().div_ceil(threads).max(1);
    let per_chunk: Vec<Result<Vec<ExampleStats>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = examples
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || {
                    part.iter()
                        .map(|ex| example_stats(store, config, ex))
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("evaluation thread panicked"))
            .collect()
    });
    let mut total = ExampleStats::default();
    for part in per_chunk {
        for s in part? {
            total.weighted_ce += s.weighted_ce;
            total.weight += s.weight;
            total.ns_loss += s.ns_loss;
            total.ponder_cost += s.ponder_cost;
            total.positions += s.positions;
            total.steps += s.steps;
            total.masked += s.masked;
            total.mlm_correct += s.mlm_correct;
            total.ns_correct += s.ns_correct;
        }
    }
    let n = examples.len();
    let ratio = |a: f64, b: f64| if b == 0.0 { 0.0 } else { a / b };
    let mlm = ratio(total.weighted_ce, total.weight);
    let ns = ratio(total.ns_loss, n as f64);
    let ponder = if config.variant.is_universal() {
        config.act_tau * ratio(total.ponder_cost, total.positions as f64)
    } else {
        0.0
    };
    Ok(EvalReport {
        examples: n,
        mlm_accuracy: ratio(total.mlm_correct as f64, total.masked as f64),
        ns_accuracy: ratio(total.ns_correct as f64, n as f64),
        losses: LossBreakdown {
            mlm,
            ns,
            ponder,
            total: mlm + ns + ponder,
        },
        mean_ponder_steps: ratio(total.steps as f64, total.positions as f64),
    })
}

/// SHA-256 over every parameter's name, shape and bytes.
pub fn parameter_digest<F: Real>(store: &ParamStore<F>) -> [u8; 32] {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    for (name, t) in store.iter() {
        h.update(name.as_bytes());
        for &d in t.shape() {
            h.update((d as u64).to_le_bytes());
        }
        for v in t.data() {
            h.update(v.as_f64().to_le_bytes());
        }
    }
    h.finalize().into()
}
