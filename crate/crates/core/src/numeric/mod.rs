//! Dense tensors, a recorded-primitive graph with reverse-mode gradients, and
//! a finite-difference harness for verifying them.

mod gradcheck;
mod graph;
mod kernels;
mod params;
mod real;
mod tensor;

use thiserror::Error;

pub use gradcheck::{finite_difference_check, GradCheckReport};
pub use graph::{Gradients, Graph, Var};
pub use kernels::{layer_normalize, softmax};
pub use params::{ParamStore, Tape};
pub use real::Real;
pub use tensor::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{len} elements do not fill shape {shape:?}")]
    ElementCount { shape: Vec<usize>, len: usize },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("non-finite gradient at {op}")]
    NonFiniteGradient { op: &'static str },
    #[error("{op} over an empty axis")]
    EmptyAxis { op: &'static str },
    #[error("{op}: index {index} out of range for extent {extent}")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        extent: usize,
    },
    #[error("expected a scalar result, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("{0}")]
    InvalidArgument(String),
}

pub type Result<T, E = NumericError> = std::result::Result<T, E>;

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn softmax_examples() {
        let t = Tensor::<f64>::vector(vec![0.0, 0.0]);
        assert_eq!(softmax(&t, 0).unwrap().data(), &[0.5, 0.5]);

        let t = Tensor::<f64>::vector(vec![2f64.ln(), 0.0]);
        let s = softmax(&t, 0).unwrap();
        assert!(close(s.data()[0], 2.0 / 3.0, 1e-12));
        assert!(close(s.data()[1], 1.0 / 3.0, 1e-12));

        let x = Tensor::<f64>::vector(vec![1.0, 2.0, 3.0]);
        let shifted = Tensor::<f64>::vector(vec![1001.0, 1002.0, 1003.0]);
        let (a, b) = (softmax(&x, 0).unwrap(), softmax(&shifted, 0).unwrap());
        for (p, q) in a.data().iter().zip(b.data()) {
            assert!(close(*p, *q, 1e-12));
        }
    }

    #[test]
    fn softmax_along_leading_axis() {
        let t = Tensor::<f64>::matrix(2, 2, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        let s = softmax(&t, 0).unwrap();
        assert_eq!(s.data(), &[0.5, 0.5, 0.5, 0.5]);
    }

    #[test]
    fn softmax_empty_axis_is_error() {
        let t = Tensor::<f64>::vector(vec![]);
        assert_eq!(
            softmax(&t, 0).unwrap_err(),
            NumericError::EmptyAxis { op: "softmax" }
        );
    }

    #[test]
    fn layer_normalize_examples() {
        let ones = Tensor::<f64>::vector(vec![1.0; 3]);
        let g = Tensor::vector(vec![1.0; 3]);
        let s = Tensor::vector(vec![0.0; 3]);
        let out = layer_normalize(&ones, &g, &s, 1e-12).unwrap();
        assert!(out.data().iter().all(|v| v.abs() < 1e-9));

        let x = Tensor::<f64>::vector(vec![1.0, -1.0]);
        let out = layer_normalize(
            &x,
            &Tensor::vector(vec![1.0, 1.0]),
            &Tensor::vector(vec![0.0, 0.0]),
            1e-12,
        )
        .unwrap();
        assert!(close(out.data()[0], 1.0, 1e-6) && close(out.data()[1], -1.0, 1e-6));

        let x = Tensor::<f64>::matrix(2, 2, vec![3.0, -7.0, 0.5, 2.0]).unwrap();
        let out = layer_normalize(
            &x,
            &Tensor::vector(vec![0.0, 0.0]),
            &Tensor::vector(vec![0.25, -4.0]),
            1e-5,
        )
        .unwrap();
        assert_eq!(out.data(), &[0.25, -4.0, 0.25, -4.0]);
    }

    #[test]
    fn layer_normalize_rejects_mismatch() {
        let x = Tensor::<f64>::vector(vec![1.0, 2.0, 3.0]);
        let g = Tensor::vector(vec![1.0; 2]);
        assert!(matches!(
            layer_normalize(&x, &g, &g, 1e-5),
            Err(NumericError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn square_gradient() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::scalar(3.0)).unwrap();
        let y = g.mul(x, x).unwrap();
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.get(x).unwrap().item().unwrap(), 6.0);
    }

    #[test]
    fn constant_function_has_zero_gradient() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::scalar(3.0)).unwrap();
        let c = g.leaf(Tensor::scalar(5.0)).unwrap();
        let zero = g.scale(x, 0.0).unwrap();
        let y = g.add(zero, c).unwrap();
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.get(x).unwrap().item().unwrap(), 0.0);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::vector(vec![1.0, 2.0])).unwrap();
        assert!(matches!(g.backward(x), Err(NumericError::NotScalar(_))));
    }

    #[test]
    fn non_finite_values_name_the_primitive() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::vector(vec![-1.0])).unwrap();
        assert_eq!(g.ln(x).unwrap_err(), NumericError::NonFinite { op: "ln" });
        assert!(g.leaf(Tensor::vector(vec![f64::NAN])).is_err());
    }

    #[test]
    fn shape_mismatch_is_loud() {
        let mut g = Graph::<f64>::new();
        let a = g.leaf(Tensor::zeros(vec![2, 3])).unwrap();
        let b = g.leaf(Tensor::zeros(vec![3, 2])).unwrap();
        assert!(g.add(a, b).is_err());
        assert!(g.matmul(a, a).is_err());
        let r = g.leaf(Tensor::zeros(vec![2])).unwrap();
        assert!(g.add_row(a, r).is_err());
    }

    #[test]
    fn tensor_element_count_invariant() {
        assert!(Tensor::<f32>::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert_eq!(Tensor::<f32>::zeros(vec![2, 3]).len(), 6);
    }

    #[test]
    fn gradcheck_rejects_bad_step() {
        let r = finite_difference_check(|x| Ok(x[0]), &[1.0], &[1.0], 1e-2);
        assert!(r.is_err());
    }

    #[test]
    fn gradcheck_rejects_non_finite_function() {
        let r = finite_difference_check(|_| Ok(f64::INFINITY), &[1.0], &[1.0], 1e-5);
        assert!(matches!(r, Err(NumericError::NonFinite { .. })));
    }
}
