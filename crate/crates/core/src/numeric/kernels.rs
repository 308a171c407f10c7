//! Value-level kernels shared by the recorded primitives.
//!
//! All reductions iterate in a fixed order so that results are bit-reproducible.

use super::{NumericError, Real, Result, Tensor};

/// `a (m×k) · b (k×n)`.
pub(crate) fn matmul_raw<F: Real>(a: &[F], b: &[F], m: usize, k: usize, n: usize) -> Vec<F> {
    let mut out = vec![F::zero(); m * n];
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        for (p, &av) in a[i * k..(i + 1) * k].iter().enumerate() {
            if av == F::zero() {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o = *o + av * bv;
            }
        }
    }
    out
}

/// `a (m×k) · bᵀ` where `b` is `n×k`.
pub(crate) fn matmul_t_raw<F: Real>(a: &[F], b: &[F], m: usize, k: usize, n: usize) -> Vec<F> {
    let mut out = vec![F::zero(); m * n];
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let b_row = &b[j * k..(j + 1) * k];
            let mut acc = F::zero();
            for (&x, &y) in a_row.iter().zip(b_row) {
                acc = acc + x * y;
            }
            out[i * n + j] = acc;
        }
    }
    out
}

/// `aᵀ · b` where `a` is `m×k` and `b` is `m×n`; result `k×n`.
pub(crate) fn matmul_tn_raw<F: Real>(a: &[F], b: &[F], m: usize, k: usize, n: usize) -> Vec<F> {
    let mut out = vec![F::zero(); k * n];
    for i in 0..m {
        let b_row = &b[i * n..(i + 1) * n];
        for (p, &av) in a[i * k..(i + 1) * k].iter().enumerate() {
            if av == F::zero() {
                continue;
            }
            let out_row = &mut out[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o = *o + av * bv;
            }
        }
    }
    out
}

/// In-place max-subtracted softmax over one row. Entries whose `keep` flag is
/// false receive exactly zero probability.
pub(crate) fn softmax_in_place<F: Real>(row: &mut [F], keep: Option<&[bool]>) {
    let kept = |j: usize| keep.map_or(true, |k| k[j]);
    let mut max = F::neg_infinity();
    for (j, &v) in row.iter().enumerate() {
        if kept(j) && v > max {
            max = v;
        }
    }
    if max == F::neg_infinity() {
        // every entry masked out
        row.iter_mut().for_each(|v| *v = F::zero());
        return;
    }
    let mut total = F::zero();
    for (j, v) in row.iter_mut().enumerate() {
        if kept(j) {
            *v = (*v - max).exp();
            total = total + *v;
        } else {
            *v = F::zero();
        }
    }
    for v in row.iter_mut() {
        *v = *v / total;
    }
}

/// log-sum-exp of a row with max subtraction.
pub(crate) fn log_sum_exp<F: Real>(row: &[F]) -> F {
    let max = row.iter().fold(F::neg_infinity(), |m, &v| m.max(v));
    let total: F = row.iter().map(|&v| (v - max).exp()).sum();
    max + total.ln()
}

pub(crate) fn gelu<F: Real>(x: F) -> F {
    let half = F::of(0.5);
    x * half * (F::one() + (x * F::of(std::f64::consts::FRAC_1_SQRT_2)).erf())
}

pub(crate) fn gelu_grad<F: Real>(x: F) -> F {
    let half = F::of(0.5);
    let cdf = half * (F::one() + (x * F::of(std::f64::consts::FRAC_1_SQRT_2)).erf());
    let pdf = (-(x * x) * half).exp() * F::of(1.0 / (2.0 * std::f64::consts::PI).sqrt());
    cdf + x * pdf
}

pub(crate) fn sigmoid<F: Real>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

/// Softmax of `values` along `axis`.
pub fn softmax<F: Real>(values: &Tensor<F>, axis: usize) -> Result<Tensor<F>> {
    let shape = values.shape().to_vec();
    if axis >= shape.len().max(1) {
        return Err(NumericError::InvalidArgument(format!(
            "axis {axis} out of range for shape {shape:?}"
        )));
    }
    let extent = if shape.is_empty() { 1 } else { shape[axis] };
    if extent == 0 {
        return Err(NumericError::EmptyAxis { op: "softmax" });
    }
    if !values.all_finite() {
        return Err(NumericError::NonFinite { op: "softmax" });
    }
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape.get(axis + 1..).map_or(1, |s| s.iter().product());
    let mut out = values.data().to_vec();
    let mut lane = vec![F::zero(); extent];
    for o in 0..outer {
        for i in 0..inner {
            let at = |e: usize| (o * extent + e) * inner + i;
            for (e, slot) in lane.iter_mut().enumerate() {
                *slot = out[at(e)];
            }
            softmax_in_place(&mut lane, None);
            for (e, &v) in lane.iter().enumerate() {
                out[at(e)] = v;
            }
        }
    }
    Tensor::new(shape, out)
}

/// Per-position layer normalization over the last extent.
pub fn layer_normalize<F: Real>(
    states: &Tensor<F>,
    gain: &Tensor<F>,
    shift: &Tensor<F>,
    epsilon: F,
) -> Result<Tensor<F>> {
    let width = *states.shape().last().unwrap_or(&1);
    if gain.shape() != [width] || shift.shape() != [width] {
        return Err(NumericError::ShapeMismatch {
            op: "layer_normalize",
            left: states.shape().to_vec(),
            right: gain.shape().to_vec(),
        });
    }
    if epsilon <= F::zero() {
        return Err(NumericError::InvalidArgument(
            "layer_normalize epsilon must be positive".into(),
        ));
    }
    let (out, _, _) = layer_norm_forward(states.data(), gain.data(), shift.data(), width, epsilon);
    Tensor::new(states.shape().to_vec(), out)
}

/// Returns (output, normalized inputs, reciprocal standard deviation per row).
pub(crate) fn layer_norm_forward<F: Real>(
    x: &[F],
    gain: &[F],
    shift: &[F],
    width: usize,
    epsilon: F,
) -> (Vec<F>, Vec<F>, Vec<F>) {
    let rows = if width == 0 { 0 } else { x.len() / width };
    let n = F::of(width as f64);
    let mut out = vec![F::zero(); x.len()];
    let mut normed = vec![F::zero(); x.len()];
    let mut inv_std = vec![F::zero(); rows];
    for r in 0..rows {
        let row = &x[r * width..(r + 1) * width];
        let mean = row.iter().copied().sum::<F>() / n;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() / n;
        let rstd = F::one() / (var + epsilon).sqrt();
        inv_std[r] = rstd;
        for j in 0..width {
            let xh = (row[j] - mean) * rstd;
            normed[r * width + j] = xh;
            out[r * width + j] = gain[j] * xh + shift[j];
        }
    }
    (out, normed, inv_std)
}
