//! Recurrent caption encoder and the image-region projection.

use crate::error::{Error, Result};
use crate::nn::layers::sigmoid;
use crate::nn::matrix::{add_outer, matmul, matmul_tn, matvec, vecmat};
use crate::nn::Matrix;
use crate::providers::MaskedMatrix;

/// Weights of a single-layer LSTM with gates packed as `[i | f | g | o]`.
#[derive(Clone, Copy, Debug)]
pub struct LstmWeights<'a> {
    /// D_in × 4H
    pub input: &'a Matrix,
    /// H × 4H
    pub recurrent: &'a Matrix,
    /// 1 × 4H
    pub bias: &'a Matrix,
}

impl LstmWeights<'_> {
    pub fn hidden(&self) -> usize {
        self.recurrent.rows()
    }

    fn check(&self, input_dim: usize) -> Result<()> {
        let h = self.hidden();
        if self.input.shape() != (input_dim, 4 * h)
            || self.recurrent.shape() != (h, 4 * h)
            || self.bias.shape() != (1, 4 * h)
        {
            return Err(Error::Shape(format!(
                "LSTM weights {:?}/{:?}/{:?} for input dim {input_dim}",
                self.input.shape(),
                self.recurrent.shape(),
                self.bias.shape()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct Step {
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    tanh_c: Vec<f64>,
}

/// Encoder output plus the per-step activations needed for backprop.
#[derive(Clone, Debug)]
pub struct LstmTrace {
    /// M × H hidden states; zero rows at masked steps.
    pub output: Matrix,
    pub mask: Vec<bool>,
    steps: Vec<Option<Step>>,
}

/// Runs the recurrence over the rows of `tokens`. Initial state is zero;
/// masked steps carry the state forward and emit a zero row.
pub fn lstm_encode(tokens: &MaskedMatrix, w: LstmWeights<'_>) -> Result<LstmTrace> {
    let (m, d_in) = tokens.values.shape();
    w.check(d_in)?;
    if tokens.mask.len() != m {
        return Err(Error::Shape(format!(
            "{m} tokens with mask of length {}",
            tokens.mask.len()
        )));
    }
    let h = w.hidden();
    let mut output = Matrix::zeros(m, h);
    let mut steps = Vec::with_capacity(m);
    let mut h_t = vec![0.0; h];
    let mut c_t = vec![0.0; h];
    for t in 0..m {
        if !tokens.mask[t] {
            steps.push(None);
            continue;
        }
        let mut z = vecmat(tokens.values.row(t), w.input)?;
        let zr = vecmat(&h_t, w.recurrent)?;
        for ((z, r), b) in z.iter_mut().zip(zr).zip(w.bias.as_slice()) {
            *z += r + b;
        }
        let i: Vec<f64> = z[..h].iter().map(|&x| sigmoid(x)).collect();
        let f: Vec<f64> = z[h..2 * h].iter().map(|&x| sigmoid(x)).collect();
        let g: Vec<f64> = z[2 * h..3 * h].iter().map(|x| x.tanh()).collect();
        let o: Vec<f64> = z[3 * h..].iter().map(|&x| sigmoid(x)).collect();
        let c_new: Vec<f64> = (0..h).map(|k| f[k] * c_t[k] + i[k] * g[k]).collect();
        let tanh_c: Vec<f64> = c_new.iter().map(|x| x.tanh()).collect();
        let h_new: Vec<f64> = (0..h).map(|k| o[k] * tanh_c[k]).collect();
        output.row_mut(t).copy_from_slice(&h_new);
        steps.push(Some(Step {
            h_prev: std::mem::replace(&mut h_t, h_new),
            c_prev: std::mem::replace(&mut c_t, c_new),
            i,
            f,
            g,
            o,
            tanh_c,
        }));
    }
    Ok(LstmTrace {
        output,
        mask: tokens.mask.clone(),
        steps,
    })
}

pub struct LstmGrads {
    pub input: Matrix,
    pub recurrent: Matrix,
    pub bias: Matrix,
    /// Gradient with respect to the token rows.
    pub tokens: Matrix,
}

/// Backpropagation through time given the gradient of the hidden-state matrix.
pub fn lstm_backward(
    trace: &LstmTrace,
    tokens: &Matrix,
    w: LstmWeights<'_>,
    grad_output: &Matrix,
) -> Result<LstmGrads> {
    if grad_output.shape() != trace.output.shape() {
        return Err(Error::Shape(format!(
            "LSTM output gradient {:?}, expected {:?}",
            grad_output.shape(),
            trace.output.shape()
        )));
    }
    let h = w.hidden();
    let mut grads = LstmGrads {
        input: Matrix::zeros(w.input.rows(), w.input.cols()),
        recurrent: Matrix::zeros(h, 4 * h),
        bias: Matrix::zeros(1, 4 * h),
        tokens: Matrix::zeros(tokens.rows(), tokens.cols()),
    };
    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];
    let mut dz = vec![0.0; 4 * h];
    for t in (0..trace.steps.len()).rev() {
        let Some(s) = &trace.steps[t] else {
            continue;
        };
        let grad_row = grad_output.row(t);
        for k in 0..h {
            let dh = grad_row[k] + dh_next[k];
            let d_o = dh * s.tanh_c[k];
            let dc = dc_next[k] + dh * s.o[k] * (1.0 - s.tanh_c[k] * s.tanh_c[k]);
            let di = dc * s.g[k];
            let dg = dc * s.i[k];
            let df = dc * s.c_prev[k];
            dc_next[k] = dc * s.f[k];
            dz[k] = di * s.i[k] * (1.0 - s.i[k]);
            dz[h + k] = df * s.f[k] * (1.0 - s.f[k]);
            dz[2 * h + k] = dg * (1.0 - s.g[k] * s.g[k]);
            dz[3 * h + k] = d_o * s.o[k] * (1.0 - s.o[k]);
        }
        add_outer(&mut grads.input, tokens.row(t), &dz);
        add_outer(&mut grads.recurrent, &s.h_prev, &dz);
        for (b, z) in grads.bias.as_mut_slice().iter_mut().zip(&dz) {
            *b += z;
        }
        dh_next = matvec(w.recurrent, &dz)?;
        let dx = matvec(w.input, &dz)?;
        grads.tokens.row_mut(t).copy_from_slice(&dx);
    }
    Ok(grads)
}

/// Maps each of the K region rows through one shared affine layer:
/// `V · W + 1·b`, giving K×D.
pub fn project_regions(regions: &Matrix, weight: &Matrix, bias: &Matrix) -> Result<Matrix> {
    if bias.shape() != (1, weight.cols()) {
        return Err(Error::Shape(format!(
            "projection bias {:?} for {} outputs",
            bias.shape(),
            weight.cols()
        )));
    }
    let mut out = matmul(regions, weight)?;
    for r in 0..out.rows() {
        for (o, b) in out.row_mut(r).iter_mut().zip(bias.as_slice()) {
            *o += b;
        }
    }
    Ok(out)
}

/// Weight and bias gradients of [`project_regions`].
pub fn project_regions_backward(regions: &Matrix, grad_out: &Matrix) -> Result<(Matrix, Matrix)> {
    let dw = matmul_tn(regions, grad_out)?;
    let mut db = Matrix::zeros(1, grad_out.cols());
    for r in 0..grad_out.rows() {
        for (b, g) in db.as_mut_slice().iter_mut().zip(grad_out.row(r)) {
            *b += g;
        }
    }
    Ok((dw, db))
}
