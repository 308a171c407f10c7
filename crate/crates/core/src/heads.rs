//! Pretraining heads and losses: masked-token prediction with tied output
//! embeddings, next-sentence classification, the weighted MLM loss and the
//! ponder penalty.

use crate::encoder::{ModelConfig, NORM_EPSILON};
use crate::numeric::{NumericError, Real, Tape, Tensor, Var};

type Result<T> = std::result::Result<T, NumericError>;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub mlm: f64,
    pub ns: f64,
    pub ponder: f64,
    pub total: f64,
}

/// Logits over the vocabulary at `positions` of `states`, `|positions| × V`.
/// The output projection is the token embedding table itself.
pub fn mlm_logits<F: Real>(
    tape: &mut Tape<F>,
    states: Var,
    positions: &[usize],
    latent_bias: Option<Var>,
) -> Result<Var> {
    let picked = tape.gather_rows(states, positions)?;
    let w = tape.param("mlm.transform.weight")?;
    let b = tape.param("mlm.transform.bias")?;
    let x = tape.matmul(picked, w)?;
    let x = tape.add_row(x, b)?;
    let x = tape.gelu(x)?;
    let gain = tape.param("mlm.norm.gain")?;
    let shift = tape.param("mlm.norm.shift")?;
    let x = tape.layer_norm(x, gain, shift, F::of(NORM_EPSILON))?;
    let table = tape.param("embeddings.word")?;
    let logits = tape.matmul_t(x, table)?;
    let out_bias = tape.param("mlm.output_bias")?;
    let logits = tape.add_row(logits, out_bias)?;
    match latent_bias {
        Some(v) => tape.add_row(logits, v),
        None => Ok(logits),
    }
}

/// `Σ w·CE / Σ w`. When every weight is zero the loss is a constant 0 and the
/// returned flag is set.
pub fn weighted_mlm_loss<F: Real>(
    tape: &mut Tape<F>,
    logits: Var,
    labels: &[usize],
    weights: &[F],
) -> Result<(Var, bool)> {
    let ce = tape.cross_entropy(logits, labels)?;
    weighted_mean(tape, ce, weights)
}

/// Weighted mean of a vector of per-position losses, normalised by the
/// weight total.
pub fn weighted_mean<F: Real>(tape: &mut Tape<F>, losses: Var, weights: &[F]) -> Result<(Var, bool)> {
    if weights.iter().any(|&w| !(w >= F::zero())) {
        return Err(NumericError::InvalidArgument(
            "loss weights must be non-negative".into(),
        ));
    }
    let total: F = weights.iter().copied().sum();
    if total == F::zero() {
        return Ok((tape.constant(Tensor::scalar(F::zero()))?, true));
    }
    let normalised: Vec<F> = weights.iter().map(|&w| w / total).collect();
    Ok((tape.weighted_sum(losses, &normalised)?, false))
}

/// Pooled `[CLS]` state: `tanh(W·h + b)`, shape `1 × H`.
pub fn pooled_cls<F: Real>(tape: &mut Tape<F>, states: Var) -> Result<Var> {
    let cls = tape.gather_rows(states, &[0])?;
    let w = tape.param("pooler.weight")?;
    let b = tape.param("pooler.bias")?;
    let x = tape.matmul(cls, w)?;
    let x = tape.add_row(x, b)?;
    tape.tanh(x)
}

/// Two next-sentence logits (`1 × 2`). With latent categories the classifier
/// also reads the two distance features.
pub fn ns_logits<F: Real>(
    tape: &mut Tape<F>,
    config: &ModelConfig,
    states: Var,
    features: Option<Var>,
) -> Result<Var> {
    let pooled = pooled_cls(tape, states)?;
    let w = tape.param("ns.classifier.weight")?;
    let b = tape.param("ns.classifier.bias")?;
    let logits = tape.matmul(pooled, w)?;
    let mut logits = tape.add_row(logits, b)?;
    if config.latent() > 0 {
        let features = match features {
            Some(f) => tape.reshape(f, &[1, 2])?,
            None => tape.constant(Tensor::zeros(vec![1, 2]))?,
        };
        let fw = tape.param("ns.feature_weight")?;
        let extra = tape.matmul(features, fw)?;
        logits = tape.add(logits, extra)?;
    }
    Ok(logits)
}

/// Next-sentence logits and cross-entropy against `label` (0 actual, 1 random).
pub fn ns_logits_and_loss<F: Real>(
    tape: &mut Tape<F>,
    config: &ModelConfig,
    states: Var,
    features: Option<Var>,
    label: usize,
) -> Result<(Var, Var)> {
    let logits = ns_logits(tape, config, states, features)?;
    let ce = tape.cross_entropy(logits, &[label])?;
    let loss = tape.sum(ce)?;
    Ok((logits, loss))
}

/// `tau ×` mean ponder cost over positions whose mask flag is set.
pub fn ponder_loss<F: Real>(tape: &mut Tape<F>, costs: Var, mask: &[bool], tau: F) -> Result<Var> {
    if !(tau >= F::zero()) {
        return Err(NumericError::InvalidArgument("tau must be non-negative".into()));
    }
    let mean = tape.masked_mean(costs, mask)?;
    tape.scale(mean, tau)
}

fn argmax<F: Real>(row: &[F]) -> usize {
    let mut best = 0;
    for (i, &x) in row.iter().enumerate() {
        if x > row[best] {
            best = i;
        }
    }
    best
}

/// Correct-prediction count over the rows of a logit matrix.
pub fn count_correct<F: Real>(logits: &Tensor<F>, labels: &[usize]) -> usize {
    labels
        .iter()
        .enumerate()
        .filter(|&(r, &label)| argmax(logits.row(r)) == label)
        .count()
}

/// Unweighted accuracies `(mlm, ns)`; an empty set scores 0.
pub fn compute_metrics<F: Real>(
    mlm_logits: &Tensor<F>,
    labels: &[usize],
    ns_logits: &Tensor<F>,
    ns_labels: &[usize],
) -> (f64, f64) {
    let ratio = |c: usize, n: usize| if n == 0 { 0.0 } else { c as f64 / n as f64 };
    (
        ratio(count_correct(mlm_logits, labels), labels.len()),
        ratio(count_correct(ns_logits, ns_labels), ns_labels.len()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::ParamStore;

    fn scalar(tape: &Tape<f64>, v: Var) -> f64 {
        tape.value(v).data()[0]
    }

    fn logits_store(data: &[f64], rows: usize, cols: usize) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.insert("l", Tensor::from_f64(vec![rows, cols], data).unwrap());
        s
    }

    #[test]
    fn weighted_loss_cases() {
        let store = logits_store(&[1.0, 2.0, 0.5, 0.3, -1.0, 2.0], 2, 3);
        let mut tape = Tape::new(&store);
        let l = tape.param("l").unwrap();
        let ce = tape.cross_entropy(l, &[1, 2]).unwrap();
        let c = tape.value(ce).data().to_vec();

        let (ones, _) = weighted_mlm_loss(&mut tape, l, &[1, 2], &[1.0, 1.0]).unwrap();
        assert!((scalar(&tape, ones) - (c[0] + c[1]) / 2.0).abs() < 1e-12);
        let (first, _) = weighted_mlm_loss(&mut tape, l, &[1, 2], &[2.0, 0.0]).unwrap();
        assert!((scalar(&tape, first) - c[0]).abs() < 1e-12);
        let (scaled, _) = weighted_mlm_loss(&mut tape, l, &[1, 2], &[7.0, 0.7]).unwrap();
        let (base, _) = weighted_mlm_loss(&mut tape, l, &[1, 2], &[1.0, 0.1]).unwrap();
        assert!((scalar(&tape, scaled) - scalar(&tape, base)).abs() < 1e-12);
        let (zero, event) = weighted_mlm_loss(&mut tape, l, &[1, 2], &[0.0, 0.0]).unwrap();
        assert!(event);
        assert_eq!(scalar(&tape, zero), 0.0);
        assert!(weighted_mlm_loss(&mut tape, l, &[1, 2], &[-1.0, 1.0]).is_err());
    }

    #[test]
    fn uniform_logits_give_log_v() {
        let store = logits_store(&[0.0; 10], 2, 5);
        let mut tape = Tape::new(&store);
        let l = tape.param("l").unwrap();
        let (loss, _) = weighted_mlm_loss(&mut tape, l, &[0, 4], &[2.0, 0.02]).unwrap();
        assert!((scalar(&tape, loss) - 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn ponder_cases() {
        let mut store = ParamStore::new();
        store.insert("c", Tensor::<f64>::vector(vec![1.0, 3.0, 9.0]));
        let mut tape = Tape::new(&store);
        let c = tape.param("c").unwrap();
        let p = ponder_loss(&mut tape, c, &[true, true, false], 0.5).unwrap();
        assert_eq!(scalar(&tape, p), 1.0);
        let p = ponder_loss(&mut tape, c, &[true, true, true], 0.0).unwrap();
        assert_eq!(scalar(&tape, p), 0.0);
        let ones = tape.constant(Tensor::vector(vec![1.0; 3])).unwrap();
        let p = ponder_loss(&mut tape, ones, &[true; 3], 0.01).unwrap();
        assert!((scalar(&tape, p) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn metrics_counting() {
        let mlm = Tensor::<f64>::from_f64(vec![4, 2], &[1., 0., 0., 1., 1., 0., 1., 0.]).unwrap();
        let ns = Tensor::<f64>::from_f64(vec![2, 2], &[2., 1., 2., 1.]).unwrap();
        assert_eq!(compute_metrics(&mlm, &[0, 1, 0, 1], &ns, &[0, 1]), (0.75, 0.5));
        assert_eq!(compute_metrics(&mlm, &[0, 1, 0, 0], &ns, &[0, 0]), (1.0, 1.0));
    }

    #[test]
    fn ns_extremes() {
        let store = logits_store(&[10.0, -10.0, 0.0, 0.0], 2, 2);
        let mut tape = Tape::new(&store);
        let l = tape.param("l").unwrap();
        let ce = tape.cross_entropy(l, &[0, 0]).unwrap();
        let v = tape.value(ce).data();
        assert!(v[0] < 1e-4);
        assert!((v[1] - 2f64.ln()).abs() < 1e-12);
    }
}
