//! Latent category bias: the `L × V` matrix `B`, the per-example category
//! distribution, the expected output bias and the next-sentence distance
//! features.

use thiserror::Error;

use crate::numeric::{NumericError, Real, Tape, Tensor, Var};

/// Weight of the softmax term in the category distribution; the rest is
/// spread uniformly so every probability stays at least `(1 - w) / L`.
pub const MIXTURE_WEIGHT: f64 = 0.99;

#[derive(Debug, Error)]
pub enum LatentError {
    #[error("token id {id} outside vocabulary of {vocab}")]
    IdOutOfRange { id: u32, vocab: usize },
    #[error("bias matrix must be L x V with L >= 1, got {0:?}")]
    BadShape(Vec<usize>),
    #[error("distributions of different lengths ({0} and {1})")]
    LengthMismatch(usize, usize),
    #[error(transparent)]
    Numeric(#[from] NumericError),
}

fn dims<F: Real>(b: &Tensor<F>) -> Result<(usize, usize), LatentError> {
    match *b.shape() {
        [l, v] if l >= 1 => Ok((l, v)),
        _ => Err(LatentError::BadShape(b.shape().to_vec())),
    }
}

fn check_ids(ids: &[u32], vocab: usize) -> Result<(), LatentError> {
    match ids.iter().find(|&&id| id as usize >= vocab) {
        Some(&id) => Err(LatentError::IdOutOfRange { id, vocab }),
        None => Ok(()),
    }
}

/// `p = w·softmax(s) + (1 - w)/L` where `s_i` sums row `i` of `B` over the
/// multiset. An empty multiset gives the uniform distribution.
pub fn latent_distribution<F: Real>(b: &Tensor<F>, ids: &[u32]) -> Result<Vec<F>, LatentError> {
    let (l, v) = dims(b)?;
    check_ids(ids, v)?;
    let scores: Vec<F> = (0..l)
        .map(|i| {
            let row = b.row(i);
            ids.iter().map(|&t| row[t as usize]).sum()
        })
        .collect();
    let soft = crate::numeric::softmax(&Tensor::vector(scores), 0)?;
    let w = F::of(MIXTURE_WEIGHT);
    let floor = (F::one() - w) / F::of(l as f64);
    Ok(soft.data().iter().map(|&s| w * s + floor).collect())
}

/// Expected category bias `Σ_i p_i · B[i][j]` for every id `j`.
pub fn example_bias<F: Real>(b: &Tensor<F>, p: &[F]) -> Result<Vec<F>, LatentError> {
    let (l, v) = dims(b)?;
    if p.len() != l {
        return Err(LatentError::LengthMismatch(p.len(), l));
    }
    let mut out = vec![F::zero(); v];
    for (i, &pi) in p.iter().enumerate() {
        for (o, &x) in out.iter_mut().zip(b.row(i)) {
            *o = *o + pi * x;
        }
    }
    Ok(out)
}

/// Euclidean distance and `KL(p_a ‖ p_b)`.
pub fn distance_features<F: Real>(p_a: &[F], p_b: &[F]) -> Result<(F, F), LatentError> {
    if p_a.len() != p_b.len() {
        return Err(LatentError::LengthMismatch(p_a.len(), p_b.len()));
    }
    let sq: F = p_a.iter().zip(p_b).map(|(&a, &b)| (a - b) * (a - b)).sum();
    let kl: F = p_a.iter().zip(p_b).map(|(&a, &b)| a * (a / b).ln()).sum();
    Ok((sq.sqrt(), kl))
}

/// Differentiable category distribution, a length-`L` vector.
pub fn latent_distribution_var<F: Real>(
    tape: &mut Tape<F>,
    b: Var,
    ids: &[u32],
) -> Result<Var, LatentError> {
    let (l, v) = match *tape.shape(b) {
        [l, v] if l >= 1 => (l, v),
        ref s => return Err(LatentError::BadShape(s.to_vec())),
    };
    check_ids(ids, v)?;
    let cols: Vec<usize> = ids.iter().map(|&i| i as usize).collect();
    let picked = tape.gather_cols(b, &cols)?;
    let scores = tape.sum_cols(picked)?;
    let scores = tape.reshape(scores, &[1, l])?;
    let soft = tape.softmax_rows(scores, None)?;
    let w = F::of(MIXTURE_WEIGHT);
    let p = tape.affine(soft, w, (F::one() - w) / F::of(l as f64))?;
    Ok(tape.reshape(p, &[l])?)
}

/// Differentiable expected bias, a length-`V` vector.
pub fn example_bias_var<F: Real>(tape: &mut Tape<F>, b: Var, p: Var) -> Result<Var, LatentError> {
    let l = tape.shape(p)[0];
    let v = tape.shape(b)[1];
    let row = tape.reshape(p, &[1, l])?;
    let bias = tape.matmul(row, b)?;
    Ok(tape.reshape(bias, &[v])?)
}

/// Differentiable `(euclidean, kl)` as a length-2 vector.
pub fn distance_features_var<F: Real>(
    tape: &mut Tape<F>,
    p_a: Var,
    p_b: Var,
) -> Result<Var, LatentError> {
    let diff = tape.sub(p_a, p_b)?;
    let sq = tape.mul(diff, diff)?;
    let sq = tape.sum(sq)?;
    let euclid = tape.sqrt(sq)?;
    let la = tape.ln(p_a)?;
    let lb = tape.ln(p_b)?;
    let ratio = tape.sub(la, lb)?;
    let terms = tape.mul(p_a, ratio)?;
    let kl = tape.sum(terms)?;
    Ok(tape.concat(&[euclid, kl])?)
}

/// For each category `i`, the `k` distributions with the highest `p_i` as
/// `(index, p_i)`, descending, ties kept in input order.
pub fn top_examples_per_category(distributions: &[Vec<f64>], k: usize) -> Vec<Vec<(usize, f64)>> {
    let l = distributions.first().map_or(0, Vec::len);
    (0..l)
        .map(|i| {
            let mut ranked: Vec<(usize, f64)> = distributions
                .iter()
                .enumerate()
                .map(|(j, p)| (j, p[i]))
                .collect();
            // stable: equal probabilities keep corpus order
            ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
            ranked.truncate(k);
            ranked
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::ParamStore;

    fn matrix(l: usize, v: usize, data: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(vec![l, v], data).unwrap()
    }

    #[test]
    fn zero_matrix_is_uniform() {
        let b = Tensor::<f64>::zeros(vec![8, 10]);
        let p = latent_distribution(&b, &[1, 2, 2, 9]).unwrap();
        for x in p {
            assert!((x - 0.125).abs() < 1e-15);
        }
        let p = latent_distribution(&b, &[]).unwrap();
        assert!((p[3] - 0.125).abs() < 1e-15);
    }

    #[test]
    fn two_category_closed_form() {
        let b = matrix(2, 1, &[2f64.ln(), 0.0]);
        let p = latent_distribution(&b, &[0]).unwrap();
        assert!((p[0] - 0.665).abs() < 1e-12);
        assert!((p[1] - 0.335).abs() < 1e-12);
    }

    #[test]
    fn id_out_of_range() {
        let b = Tensor::<f64>::zeros(vec![2, 4]);
        assert!(matches!(
            latent_distribution(&b, &[4]),
            Err(LatentError::IdOutOfRange { id: 4, vocab: 4 })
        ));
    }

    #[test]
    fn expected_bias() {
        let b = matrix(2, 2, &[4.0, 1.0, 0.0, 3.0]);
        let v = example_bias(&b, &[0.25, 0.75]).unwrap();
        assert_eq!(v, vec![1.0, 2.5]);
        assert_eq!(example_bias(&b, &[0.0, 1.0]).unwrap(), vec![0.0, 3.0]);
        assert_eq!(example_bias(&b, &[0.5, 0.5]).unwrap(), vec![2.0, 2.0]);
    }

    #[test]
    fn distances() {
        let (e, kl) = distance_features(&[0.6, 0.4], &[0.4, 0.6]).unwrap();
        assert!((e - 0.08f64.sqrt()).abs() < 1e-12);
        assert!((kl - 0.2 * 1.5f64.ln()).abs() < 1e-12);
        assert!((e - 0.28284).abs() < 1e-5 && (kl - 0.081093).abs() < 1e-6);
        assert_eq!(distance_features(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), (0.0, 0.0));
        let (_, ab) = distance_features::<f64>(&[0.9, 0.1], &[0.5, 0.5]).unwrap();
        let (_, ba) = distance_features(&[0.5, 0.5], &[0.9, 0.1]).unwrap();
        assert!((ab - ba).abs() > 0.1);
    }

    #[test]
    fn graph_versions_agree() {
        let data: Vec<f64> = (0..12).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut store = ParamStore::new();
        store.insert("b", matrix(3, 4, &data));
        let mut tape = Tape::new(&store);
        let b = tape.param("b").unwrap();
        let ids = [0, 3, 3, 1];
        let p = latent_distribution_var(&mut tape, b, &ids).unwrap();
        let q = latent_distribution_var(&mut tape, b, &[2]).unwrap();
        let bias = example_bias_var(&mut tape, b, p).unwrap();
        let d = distance_features_var(&mut tape, p, q).unwrap();

        let bt = store.get("b").unwrap();
        let pp = latent_distribution(bt, &ids).unwrap();
        let qq = latent_distribution(bt, &[2]).unwrap();
        let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12);
        assert!(close(tape.value(p).data(), &pp));
        assert!(close(tape.value(bias).data(), &example_bias(bt, &pp).unwrap()));
        let (e, kl) = distance_features(&pp, &qq).unwrap();
        assert!(close(tape.value(d).data(), &[e, kl]));

        let empty = latent_distribution_var(&mut tape, b, &[]).unwrap();
        assert!(close(tape.value(empty).data(), &[1.0 / 3.0; 3]));
    }

    #[test]
    fn top_examples_ranking() {
        let dists = vec![vec![0.9, 0.1], vec![0.5, 0.5], vec![0.1, 0.9], vec![0.5, 0.5]];
        let top = top_examples_per_category(&dists, 1);
        assert_eq!(top[0], vec![(0, 0.9)]);
        assert_eq!(top[1], vec![(2, 0.9)]);
        let all = top_examples_per_category(&dists, 10);
        assert_eq!(all[0].iter().map(|x| x.0).collect::<Vec<_>>(), vec![0, 1, 3, 2]);
        assert!(top_examples_per_category(&[], 3).is_empty());
    }
}
