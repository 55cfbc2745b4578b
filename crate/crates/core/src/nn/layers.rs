//! Forward and backward passes for the primitive layers.
//!
//! Every backward takes the upstream gradient and the forward inputs and
//! returns gradients for each input and parameter. Nothing is cached
//! implicitly; callers keep what they need.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::matrix::{add_outer, dot, vecmat, Matrix};
use crate::error::{Error, Result};

/// Whether stochastic layers are active.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Softmax over the unmasked entries of `scores`; masked entries get exactly 0.
pub fn masked_softmax(scores: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
    if scores.len() != mask.len() {
        return Err(Error::Shape(format!(
            "softmax: {} scores with {} mask entries",
            scores.len(),
            mask.len()
        )));
    }
    let max = scores
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&s, _)| s)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::InvalidArgument(
            "softmax over a fully masked vector".into(),
        ));
    }
    let mut out: Vec<f64> = scores
        .iter()
        .zip(mask)
        .map(|(&s, &m)| if m { (s - max).exp() } else { 0.0 })
        .collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|x| *x /= total);
    Ok(out)
}

/// Unmasked softmax.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let mask = vec![true; scores.len()];
    masked_softmax(scores, &mask).expect("non-empty input")
}

/// Gradient of the scores given the softmax output and its upstream gradient.
/// Masked positions have zero output and therefore receive zero gradient.
pub fn softmax_backward(alpha: &[f64], grad_alpha: &[f64]) -> Vec<f64> {
    let inner = dot(alpha, grad_alpha);
    alpha
        .iter()
        .zip(grad_alpha)
        .map(|(&a, &g)| a * (g - inner))
        .collect()
}

pub fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| v.max(0.0)).collect()
}

/// Passes gradient where the forward *output* was positive.
pub fn relu_backward(out: &[f64], grad: &[f64]) -> Vec<f64> {
    out.iter()
        .zip(grad)
        .map(|(&y, &g)| if y > 0.0 { g } else { 0.0 })
        .collect()
}

pub fn tanh_elementwise(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v.tanh()).collect()
}

/// Gradient through tanh given its output `y`.
pub fn tanh_backward(y: &[f64], grad: &[f64]) -> Vec<f64> {
    y.iter()
        .zip(grad)
        .map(|(&y, &g)| g * (1.0 - y * y))
        .collect()
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Affine map `x · W + b` with `W` of shape in×out.
pub fn dense_forward(x: &[f64], w: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != w.cols() {
        return Err(Error::Shape(format!(
            "dense bias of length {} for {} outputs",
            b.len(),
            w.cols()
        )));
    }
    let mut y = vecmat(x, w)?;
    y.iter_mut().zip(b).for_each(|(y, b)| *y += b);
    Ok(y)
}

pub struct DenseGrads {
    pub input: Vec<f64>,
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

pub fn dense_backward(x: &[f64], w: &Matrix, grad_out: &[f64]) -> DenseGrads {
    let mut weight = Matrix::zeros(w.rows(), w.cols());
    add_outer(&mut weight, x, grad_out);
    let input = (0..w.rows()).map(|r| dot(w.row(r), grad_out)).collect();
    DenseGrads {
        input,
        weight,
        bias: grad_out.to_vec(),
    }
}

/// Multiplicative dropout mask: each entry is 0 with probability `rate`,
/// otherwise `1 / (1 - rate)`.
pub fn dropout_mask(len: usize, rate: f64, seed: u64) -> Vec<f64> {
    if rate <= 0.0 {
        return vec![1.0; len];
    }
    let keep = 1.0 / (1.0 - rate);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len)
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
        .collect()
}

/// Inverted dropout. Identity in inference mode.
pub fn dropout(x: &[f64], rate: f64, mode: Mode, seed: u64) -> Vec<f64> {
    match mode {
        Mode::Infer => x.to_vec(),
        Mode::Train => x
            .iter()
            .zip(dropout_mask(x.len(), rate, seed))
            .map(|(v, m)| v * m)
            .collect(),
    }
}

/// Shape of a bank of 1-D filters stored as a `ch_out × (width·ch_in)` matrix,
/// indexed `[o, w·ch_in + c]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvShape {
    pub ch_in: usize,
    pub ch_out: usize,
    pub width: usize,
}

impl ConvShape {
    pub fn output_len(&self, input_len: usize) -> Option<usize> {
        (self.width >= 1 && self.width <= input_len).then(|| input_len - self.width + 1)
    }

    fn check(&self, x: &Matrix, filters: &Matrix, bias: &[f64]) -> Result<usize> {
        if x.cols() != self.ch_in
            || filters.shape() != (self.ch_out, self.width * self.ch_in)
            || bias.len() != self.ch_out
        {
            return Err(Error::Shape(format!(
                "conv1d {self:?} with input {:?}, filters {:?}, bias {}",
                x.shape(),
                filters.shape(),
                bias.len()
            )));
        }
        self.output_len(x.rows()).ok_or_else(|| {
            Error::Shape(format!(
                "conv1d filter width {} exceeds input length {}",
                self.width,
                x.rows()
            ))
        })
    }
}

/// Valid (unpadded) stride-1 cross-correlation. `x` is len×ch_in, the result
/// is (len − width + 1)×ch_out. No activation.
pub fn conv1d_forward(
    x: &Matrix,
    filters: &Matrix,
    bias: &[f64],
    shape: ConvShape,
) -> Result<Matrix> {
    let out_len = shape.check(x, filters, bias)?;
    let span = shape.width * shape.ch_in;
    let mut y = Matrix::zeros(out_len, shape.ch_out);
    for t in 0..out_len {
        // rows t..t+width are contiguous in row-major storage
        let window = &x.as_slice()[t * shape.ch_in..t * shape.ch_in + span];
        for o in 0..shape.ch_out {
            y[(t, o)] = bias[o] + dot(filters.row(o), window);
        }
    }
    Ok(y)
}

pub struct ConvGrads {
    pub input: Matrix,
    pub filters: Matrix,
    pub bias: Vec<f64>,
}

pub fn conv1d_backward(
    x: &Matrix,
    filters: &Matrix,
    shape: ConvShape,
    grad_out: &Matrix,
) -> Result<ConvGrads> {
    let bias = vec![0.0; shape.ch_out];
    let out_len = shape.check(x, filters, &bias)?;
    if grad_out.shape() != (out_len, shape.ch_out) {
        return Err(Error::Shape(format!(
            "conv1d gradient {:?}, expected {:?}",
            grad_out.shape(),
            (out_len, shape.ch_out)
        )));
    }
    let span = shape.width * shape.ch_in;
    let mut grads = ConvGrads {
        input: Matrix::zeros(x.rows(), x.cols()),
        filters: Matrix::zeros(filters.rows(), filters.cols()),
        bias,
    };
    for t in 0..out_len {
        let start = t * shape.ch_in;
        for o in 0..shape.ch_out {
            let g = grad_out[(t, o)];
            if g == 0.0 {
                continue;
            }
            grads.bias[o] += g;
            let window = &x.as_slice()[start..start + span];
            for (f, &xv) in grads.filters.row_mut(o).iter_mut().zip(window) {
                *f += g * xv;
            }
            let gin = &mut grads.input.as_mut_slice()[start..start + span];
            for (gi, &fv) in gin.iter_mut().zip(filters.row(o)) {
                *gi += g * fv;
            }
        }
    }
    Ok(grads)
}
