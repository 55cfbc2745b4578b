//! Hashtag-guided attention over caption tokens and image regions.
//!
//! For each modality the pooled hashtag vector `h̄` biases every row's score:
//!
//! ```text
//! Y = tanh(X·U + 1·(h̄·V))      rows × A
//! s = Y·w                      rows
//! α = masked_softmax(s)
//! x̃ = Σ_r α_r X_r
//! ```
//!
//! and the content vector is `t̃ + ĩ`. Self-attention is the same with
//! `h̄ = 0`; the no-attention variant uses uniform weights.

use crate::error::{Error, Result};
use crate::nn::layers::{masked_softmax, softmax_backward};
use crate::nn::matrix::{add_outer, dot, matmul, matmul_tn, matvec, vecmat};
use crate::nn::Matrix;
use crate::providers::MaskedMatrix;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum AttentionVariant {
    /// Hashtag-guided attention.
    #[default]
    Hga,
    /// Self-attention: same scoring with the hashtag term removed.
    Sa,
    /// No attention: masked mean of text rows plus mean of image rows.
    Na,
}

impl AttentionVariant {
    pub fn name(self) -> &'static str {
        match self {
            AttentionVariant::Hga => "hga",
            AttentionVariant::Sa => "sa",
            AttentionVariant::Na => "na",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hga" => Some(AttentionVariant::Hga),
            "sa" => Some(AttentionVariant::Sa),
            "na" => Some(AttentionVariant::Na),
            _ => None,
        }
    }

    pub fn uses_parameters(self) -> bool {
        self != AttentionVariant::Na
    }
}

/// One modality's projections: `u`, `v` are D×A, `w` is A×1.
#[derive(Clone, Copy, Debug)]
pub struct ScoreWeights<'a> {
    pub u: &'a Matrix,
    pub v: &'a Matrix,
    pub w: &'a Matrix,
}

#[derive(Clone, Copy, Debug)]
pub struct HgaWeights<'a> {
    pub text: ScoreWeights<'a>,
    pub image: ScoreWeights<'a>,
}

impl ScoreWeights<'_> {
    fn check(&self, d: usize) -> Result<usize> {
        let a = self.u.cols();
        if self.u.shape() != (d, a) || self.v.shape() != (d, a) || self.w.shape() != (a, 1) {
            return Err(Error::Shape(format!(
                "attention weights U {:?}, V {:?}, w {:?} for D = {d}",
                self.u.shape(),
                self.v.shape(),
                self.w.shape()
            )));
        }
        Ok(a)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionOutput {
    pub alpha_text: Vec<f64>,
    pub alpha_image: Vec<f64>,
    pub attended_text: Vec<f64>,
    pub attended_image: Vec<f64>,
    pub content: Vec<f64>,
}

/// Forward result with the intermediates the backward pass needs.
#[derive(Clone, Debug)]
pub struct AttentionTrace {
    pub variant: AttentionVariant,
    pub output: AttentionOutput,
    pub hashtag_mean: Vec<f64>,
    y_text: Option<Matrix>,
    y_image: Option<Matrix>,
}

/// Mean over real hashtag rows; zero when there are none.
pub fn hashtag_mean(h: &MaskedMatrix) -> Vec<f64> {
    let mut out = vec![0.0; h.values.cols()];
    let n = h.real_rows();
    if n == 0 {
        return out;
    }
    for (r, _) in h.mask.iter().enumerate().filter(|(_, &m)| m) {
        for (o, x) in out.iter_mut().zip(h.values.row(r)) {
            *o += x;
        }
    }
    out.iter_mut().for_each(|o| *o /= n as f64);
    out
}

fn weighted_sum(x: &Matrix, alpha: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.cols()];
    for (r, &a) in alpha.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        for (o, v) in out.iter_mut().zip(x.row(r)) {
            *o += a * v;
        }
    }
    out
}

fn uniform(mask: &[bool]) -> Vec<f64> {
    let n = mask.iter().filter(|&&m| m).count();
    mask.iter()
        .map(|&m| if m { 1.0 / n as f64 } else { 0.0 })
        .collect()
}

/// Scores and weights for one modality. Returns (Y, α); α is all zeros when
/// every row is masked.
fn score(
    x: &Matrix,
    mask: &[bool],
    h_bar: &[f64],
    w: ScoreWeights<'_>,
) -> Result<(Matrix, Vec<f64>)> {
    w.check(x.cols())?;
    let bias = vecmat(h_bar, w.v)?;
    let mut y = matmul(x, w.u)?;
    for r in 0..y.rows() {
        for (v, b) in y.row_mut(r).iter_mut().zip(&bias) {
            *v = (*v + b).tanh();
        }
    }
    let scores = matvec(&y, w.w.as_slice())?;
    let alpha = if mask.iter().any(|&m| m) {
        masked_softmax(&scores, mask)?
    } else {
        vec![0.0; mask.len()]
    };
    Ok((y, alpha))
}

fn check_inputs(text: &Matrix, text_mask: &[bool], image: &Matrix) -> Result<()> {
    if text.rows() != text_mask.len() {
        return Err(Error::Shape(format!(
            "{} text rows with mask of length {}",
            text.rows(),
            text_mask.len()
        )));
    }
    if text.cols() != image.cols() {
        return Err(Error::Shape(format!(
            "text dim {} differs from image dim {}",
            text.cols(),
            image.cols()
        )));
    }
    if image.rows() == 0 {
        return Err(Error::Shape("image has no regions".into()));
    }
    Ok(())
}

/// Runs the selected attention variant. `weights` is ignored for
/// [`AttentionVariant::Na`] and required otherwise.
pub fn attend(
    variant: AttentionVariant,
    text: &Matrix,
    text_mask: &[bool],
    image: &Matrix,
    hashtags: &MaskedMatrix,
    weights: Option<HgaWeights<'_>>,
) -> Result<AttentionTrace> {
    check_inputs(text, text_mask, image)?;
    let d = text.cols();
    if hashtags.values.cols() != d {
        return Err(Error::Shape(format!(
            "hashtag dim {} differs from text dim {d}",
            hashtags.values.cols()
        )));
    }
    let image_mask = vec![true; image.rows()];
    let h_bar = match variant {
        AttentionVariant::Hga => hashtag_mean(hashtags),
        AttentionVariant::Sa | AttentionVariant::Na => vec![0.0; d],
    };
    let (y_text, alpha_text, y_image, alpha_image) = match variant {
        AttentionVariant::Na => {
            let at = if text_mask.iter().any(|&m| m) {
                uniform(text_mask)
            } else {
                vec![0.0; text_mask.len()]
            };
            (None, at, None, uniform(&image_mask))
        }
        _ => {
            let w = weights.ok_or_else(|| {
                Error::InvalidArgument(format!("{} attention needs weights", variant.name()))
            })?;
            let (yt, at) = score(text, text_mask, &h_bar, w.text)?;
            let (yi, ai) = score(image, &image_mask, &h_bar, w.image)?;
            (Some(yt), at, Some(yi), ai)
        }
    };
    let attended_text = weighted_sum(text, &alpha_text);
    let attended_image = weighted_sum(image, &alpha_image);
    let content = attended_text
        .iter()
        .zip(&attended_image)
        .map(|(t, i)| t + i)
        .collect();
    Ok(AttentionTrace {
        variant,
        output: AttentionOutput {
            alpha_text,
            alpha_image,
            attended_text,
            attended_image,
            content,
        },
        hashtag_mean: h_bar,
        y_text,
        y_image,
    })
}

/// Hashtag-guided attention.
pub fn hga_attention(
    text: &Matrix,
    text_mask: &[bool],
    image: &Matrix,
    hashtags: &MaskedMatrix,
    weights: HgaWeights<'_>,
) -> Result<AttentionOutput> {
    attend(
        AttentionVariant::Hga,
        text,
        text_mask,
        image,
        hashtags,
        Some(weights),
    )
    .map(|t| t.output)
}

/// Self-attention content vector (hashtag term removed).
pub fn sa_content(
    text: &Matrix,
    text_mask: &[bool],
    image: &Matrix,
    weights: HgaWeights<'_>,
) -> Result<AttentionOutput> {
    let none = MaskedMatrix {
        values: Matrix::zeros(1, text.cols()),
        mask: vec![false],
    };
    attend(
        AttentionVariant::Sa,
        text,
        text_mask,
        image,
        &none,
        Some(weights),
    )
    .map(|t| t.output)
}

/// Masked mean of text rows plus mean of image rows.
pub fn na_content(text: &Matrix, text_mask: &[bool], image: &Matrix) -> Result<Vec<f64>> {
    let none = MaskedMatrix {
        values: Matrix::zeros(1, text.cols()),
        mask: vec![false],
    };
    attend(AttentionVariant::Na, text, text_mask, image, &none, None).map(|t| t.output.content)
}

#[derive(Clone, Debug)]
pub struct ScoreGrads {
    pub u: Matrix,
    pub v: Matrix,
    pub w: Matrix,
}

#[derive(Clone, Debug)]
pub struct AttentionGrads {
    /// `None` for the no-attention variant.
    pub text: Option<ScoreGrads>,
    pub image: Option<ScoreGrads>,
    pub text_input: Matrix,
    pub image_input: Matrix,
}

fn score_backward(
    x: &Matrix,
    y: &Matrix,
    alpha: &[f64],
    h_bar: &[f64],
    w: ScoreWeights<'_>,
    grad_attended: &[f64],
    grad_x: &mut Matrix,
) -> Result<ScoreGrads> {
    // x̃ = Σ α_r x_r
    let grad_alpha: Vec<f64> = (0..x.rows())
        .map(|r| dot(x.row(r), grad_attended))
        .collect();
    for (r, &a) in alpha.iter().enumerate() {
        if a != 0.0 {
            for (g, d) in grad_x.row_mut(r).iter_mut().zip(grad_attended) {
                *g += a * d;
            }
        }
    }
    let grad_scores = softmax_backward(alpha, &grad_alpha);

    // s = Y w, Y = tanh(Z)
    let a_units = w.u.cols();
    let mut grad_w = Matrix::zeros(a_units, 1);
    let mut grad_z = Matrix::zeros(y.rows(), a_units);
    for (r, &gs) in grad_scores.iter().enumerate() {
        if gs == 0.0 {
            continue;
        }
        for (k, (&yk, &wk)) in y.row(r).iter().zip(w.w.as_slice()).enumerate() {
            grad_w[(k, 0)] += gs * yk;
            grad_z[(r, k)] = gs * wk * (1.0 - yk * yk);
        }
    }

    // Z = X U + 1 (h̄ V)
    let grad_u = matmul_tn(x, &grad_z)?;
    let mut col_sums = vec![0.0; a_units];
    for r in 0..grad_z.rows() {
        for (c, g) in col_sums.iter_mut().zip(grad_z.row(r)) {
            *c += g;
        }
    }
    let mut grad_v = Matrix::zeros(w.v.rows(), a_units);
    add_outer(&mut grad_v, h_bar, &col_sums);
    for r in 0..x.rows() {
        let back = matvec(w.u, grad_z.row(r))?;
        for (g, b) in grad_x.row_mut(r).iter_mut().zip(back) {
            *g += b;
        }
    }
    Ok(ScoreGrads {
        u: grad_u,
        v: grad_v,
        w: grad_w,
    })
}

/// Gradients of all attention parameters and of both input matrices given
/// the gradient of the content vector.
pub fn attention_backward(
    trace: &AttentionTrace,
    text: &Matrix,
    image: &Matrix,
    weights: Option<HgaWeights<'_>>,
    grad_content: &[f64],
) -> Result<AttentionGrads> {
    let out = &trace.output;
    let mut text_input = Matrix::zeros(text.rows(), text.cols());
    let mut image_input = Matrix::zeros(image.rows(), image.cols());
    let (mut tg, mut ig) = (None, None);
    match (trace.variant, weights, &trace.y_text, &trace.y_image) {
        (AttentionVariant::Na, ..) => {
            for (r, &a) in out.alpha_text.iter().enumerate() {
                for (g, d) in text_input.row_mut(r).iter_mut().zip(grad_content) {
                    *g += a * d;
                }
            }
            for (r, &a) in out.alpha_image.iter().enumerate() {
                for (g, d) in image_input.row_mut(r).iter_mut().zip(grad_content) {
                    *g += a * d;
                }
            }
        }
        (_, Some(w), Some(yt), Some(yi)) => {
            tg = Some(score_backward(
                text,
                yt,
                &out.alpha_text,
                &trace.hashtag_mean,
                w.text,
                grad_content,
                &mut text_input,
            )?);
            ig = Some(score_backward(
                image,
                yi,
                &out.alpha_image,
                &trace.hashtag_mean,
                w.image,
                grad_content,
                &mut image_input,
            )?);
        }
        _ => {
            return Err(Error::InvalidArgument(
                "attention backward needs the forward weights".into(),
            ))
        }
    }
    Ok(AttentionGrads {
        text: tg,
        image: ig,
        text_input,
        image_input,
    })
}
