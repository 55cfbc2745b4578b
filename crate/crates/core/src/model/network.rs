//! Full model: encoders → attention → feature branches → merge → head.

use super::cache::PreparedPost;
use super::config::{Branch, ModelConfig};
use crate::attention::{attend, attention_backward, AttentionTrace, HgaWeights, ScoreWeights};
use crate::encoders::{
    lstm_backward, lstm_encode, project_regions, project_regions_backward, LstmTrace, LstmWeights,
};
use crate::error::{Error, Result};
use crate::nn::layers::{
    conv1d_backward, conv1d_forward, dense_backward, dense_forward, dropout_mask, relu,
    relu_backward, ConvShape, Mode,
};
use crate::nn::{Matrix, ParamStore};

pub const LSTM_INPUT: &str = "encoder.lstm.input";
pub const LSTM_RECURRENT: &str = "encoder.lstm.recurrent";
pub const LSTM_BIAS: &str = "encoder.lstm.bias";
pub const REGION_WEIGHT: &str = "encoder.region.weight";
pub const REGION_BIAS: &str = "encoder.region.bias";

fn attention_name(side: &str, part: &str) -> String {
    format!("attention.{side}.{part}")
}

fn branch_name(b: Branch, layer: usize, part: &str) -> String {
    format!("branch.{}.{layer}.{part}", b.name())
}

fn head_name(layer: usize, part: &str) -> String {
    format!("head.{layer:02}.{part}")
}

/// SplitMix64 step, used to derive independent seeds.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

// ---------------------------------------------------------------- branches

/// One conv branch layer's parameters.
#[derive(Clone, Copy, Debug)]
pub struct ConvLayer<'a> {
    pub filters: &'a Matrix,
    pub bias: &'a Matrix,
    pub shape: ConvShape,
}

#[derive(Clone, Debug)]
pub struct BranchTrace {
    /// Input to each layer (len × ch_in), the first being the raw feature.
    inputs: Vec<Matrix>,
    /// Post-relu output of the last layer, flattened row-major.
    pub output: Vec<f64>,
    last: Matrix,
}

/// Treats `f` as a one-channel sequence and applies each conv layer
/// followed by relu, then flattens.
pub fn branch_forward(f: &[f64], layers: &[ConvLayer<'_>]) -> Result<BranchTrace> {
    let mut x = Matrix::from_vec(f.len(), 1, f.to_vec())?;
    let mut inputs = Vec::with_capacity(layers.len());
    for l in layers {
        let y = conv1d_forward(&x, l.filters, l.bias.as_slice(), l.shape)?;
        inputs.push(std::mem::replace(&mut x, y.map(|v| v.max(0.0))));
    }
    Ok(BranchTrace {
        output: x.as_slice().to_vec(),
        inputs,
        last: x,
    })
}

/// Returns per-layer (filters, bias) gradients given the gradient of the
/// flattened output.
pub fn branch_backward(
    trace: &BranchTrace,
    layers: &[ConvLayer<'_>],
    grad_output: &[f64],
) -> Result<Vec<(Matrix, Matrix)>> {
    let mut out = trace.last.clone();
    let mut grad = Matrix::from_vec(
        out.rows(),
        out.cols(),
        relu_backward(out.as_slice(), grad_output),
    )?;
    let mut grads = vec![(Matrix::zeros(0, 0), Matrix::zeros(0, 0)); layers.len()];
    for (i, l) in layers.iter().enumerate().rev() {
        let x = &trace.inputs[i];
        let g = conv1d_backward(x, l.filters, l.shape, &grad)?;
        grads[i] = (g.filters, Matrix::row_vector(&g.bias));
        if i > 0 {
            // x is the relu output of layer i-1
            out = x.clone();
            grad = Matrix::from_vec(
                out.rows(),
                out.cols(),
                relu_backward(out.as_slice(), g.input.as_slice()),
            )?;
        }
    }
    Ok(grads)
}

// -------------------------------------------------------------------- head

#[derive(Clone, Copy, Debug)]
pub struct DenseLayer<'a> {
    pub weight: &'a Matrix,
    pub bias: &'a Matrix,
}

#[derive(Clone, Debug)]
pub struct HeadTrace {
    inputs: Vec<Vec<f64>>,
    activations: Vec<Vec<f64>>,
    masks: Vec<Vec<f64>>,
    pub output: f64,
}

/// dense → relu → dropout for every hidden layer, then a linear output.
pub fn head_forward(
    m: &[f64],
    layers: &[DenseLayer<'_>],
    dropout: f64,
    mode: Mode,
    seed: u64,
) -> Result<HeadTrace> {
    let last = layers
        .len()
        .checked_sub(1)
        .ok_or_else(|| Error::Config("head has no layers".into()))?;
    let mut x = m.to_vec();
    let mut trace = HeadTrace {
        inputs: Vec::with_capacity(layers.len()),
        activations: Vec::new(),
        masks: Vec::new(),
        output: 0.0,
    };
    for (i, l) in layers.iter().enumerate() {
        let z = dense_forward(&x, l.weight, l.bias.as_slice())?;
        trace.inputs.push(std::mem::take(&mut x));
        if i == last {
            if z.len() != 1 {
                return Err(Error::Shape(format!("head output has {} values", z.len())));
            }
            trace.output = z[0];
            break;
        }
        let a = relu(&z);
        let mask = match mode {
            Mode::Train if dropout > 0.0 => {
                dropout_mask(a.len(), dropout, mix_seed(seed, i as u64))
            }
            _ => vec![1.0; a.len()],
        };
        x = a.iter().zip(&mask).map(|(a, m)| a * m).collect();
        trace.activations.push(a);
        trace.masks.push(mask);
    }
    Ok(trace)
}

/// Per-layer (weight, bias) gradients and the gradient of the head input.
pub fn head_backward(
    trace: &HeadTrace,
    layers: &[DenseLayer<'_>],
    grad_output: f64,
) -> (Vec<(Matrix, Matrix)>, Vec<f64>) {
    let mut grad = vec![grad_output];
    let mut grads = vec![(Matrix::zeros(0, 0), Matrix::zeros(0, 0)); layers.len()];
    for (i, l) in layers.iter().enumerate().rev() {
        if i < layers.len() - 1 {
            let g: Vec<f64> = grad
                .iter()
                .zip(&trace.masks[i])
                .map(|(g, m)| g * m)
                .collect();
            grad = relu_backward(&trace.activations[i], &g);
        }
        let d = dense_backward(&trace.inputs[i], l.weight, &grad);
        grads[i] = (d.weight, Matrix::row_vector(&d.bias));
        grad = d.input;
    }
    (grads, grad)
}

// ------------------------------------------------------------------- model

#[derive(Clone, Debug)]
pub struct ForwardTrace {
    lstm: Option<LstmTrace>,
    image: Option<Matrix>,
    pub attention: Option<AttentionTrace>,
    branches: Vec<(Branch, BranchTrace)>,
    pub merged: Vec<f64>,
    head: HeadTrace,
    pub prediction: f64,
}

struct TrunkTrace {
    lstm: Option<LstmTrace>,
    image: Option<Matrix>,
    attention: Option<AttentionTrace>,
    branches: Vec<(Branch, BranchTrace)>,
    merged: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
}

impl Model {
    /// Zero-filled parameters for `config`.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        let mut m = Self::trunk_zeros(config)?;
        let mut fan_in = m.config.merged_len()?;
        for (i, &out) in m.config.head_layer_sizes()?.iter().enumerate() {
            m.params
                .insert(head_name(i, "weight"), Matrix::zeros(fan_in, out))?;
            m.params
                .insert(head_name(i, "bias"), Matrix::zeros(1, out))?;
            fan_in = out;
        }
        Ok(m)
    }

    /// Encoders, attention and branches without the regression head. Enough
    /// for [`Model::merged`]; [`Model::forward`] needs the head.
    pub fn trunk(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut m = Self::trunk_zeros(config)?;
        m.params.init_uniform(m.config.init_scale, seed);
        Ok(m)
    }

    fn trunk_zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut p = ParamStore::new();
        let d = config.embed_dim;
        let a = config.attention_units;
        if config.features.content {
            p.insert(LSTM_INPUT, Matrix::zeros(d, 4 * d))?;
            p.insert(LSTM_RECURRENT, Matrix::zeros(d, 4 * d))?;
            p.insert(LSTM_BIAS, Matrix::zeros(1, 4 * d))?;
            p.insert(REGION_WEIGHT, Matrix::zeros(config.region_channels, d))?;
            p.insert(REGION_BIAS, Matrix::zeros(1, d))?;
            if config.attention.uses_parameters() {
                for side in ["text", "image"] {
                    p.insert(attention_name(side, "u"), Matrix::zeros(d, a))?;
                    p.insert(attention_name(side, "v"), Matrix::zeros(d, a))?;
                    p.insert(attention_name(side, "w"), Matrix::zeros(a, 1))?;
                }
            }
        }
        for b in config.enabled_branches() {
            for (i, s) in config.branch_spec(b).conv_shapes().iter().enumerate() {
                p.insert(
                    branch_name(b, i, "filters"),
                    Matrix::zeros(s.ch_out, s.width * s.ch_in),
                )?;
                p.insert(branch_name(b, i, "bias"), Matrix::zeros(1, s.ch_out))?;
            }
        }
        Ok(Self { config, params: p })
    }

    /// Uniform initialisation in [-init_scale, init_scale].
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut m = Self::zeros(config)?;
        m.params.init_uniform(m.config.init_scale, seed);
        Ok(m)
    }

    fn lstm(&self) -> Result<LstmWeights<'_>> {
        Ok(LstmWeights {
            input: self.params.get(LSTM_INPUT)?,
            recurrent: self.params.get(LSTM_RECURRENT)?,
            bias: self.params.get(LSTM_BIAS)?,
        })
    }

    fn hga(&self) -> Result<Option<HgaWeights<'_>>> {
        if !self.config.attention.uses_parameters() {
            return Ok(None);
        }
        let side = |s: &str| -> Result<ScoreWeights<'_>> {
            Ok(ScoreWeights {
                u: self.params.get(&attention_name(s, "u"))?,
                v: self.params.get(&attention_name(s, "v"))?,
                w: self.params.get(&attention_name(s, "w"))?,
            })
        };
        Ok(Some(HgaWeights {
            text: side("text")?,
            image: side("image")?,
        }))
    }

    fn conv_layers(&self, b: Branch) -> Result<Vec<ConvLayer<'_>>> {
        self.config
            .branch_spec(b)
            .conv_shapes()
            .iter()
            .enumerate()
            .map(|(i, &shape)| {
                Ok(ConvLayer {
                    filters: self.params.get(&branch_name(b, i, "filters"))?,
                    bias: self.params.get(&branch_name(b, i, "bias"))?,
                    shape,
                })
            })
            .collect()
    }

    fn dense_layers(&self) -> Result<Vec<DenseLayer<'_>>> {
        (0..self.config.head_layer_sizes()?.len())
            .map(|i| {
                Ok(DenseLayer {
                    weight: self.params.get(&head_name(i, "weight"))?,
                    bias: self.params.get(&head_name(i, "bias"))?,
                })
            })
            .collect()
    }

    fn branch_input<'p>(&self, b: Branch, x: &'p PreparedPost) -> &'p [f64] {
        match b {
            Branch::Social => &x.social,
            Branch::Demographic => &x.demographic,
            Branch::Hashtag => &x.hashtag_feature,
            Branch::Sentiment => &x.sentiment,
        }
    }

    /// Forward pass. `seed` drives the dropout masks in training mode.
    pub fn forward(&self, x: &PreparedPost, mode: Mode, seed: u64) -> Result<ForwardTrace> {
        let t = self.trunk_forward(x)?;
        let head = head_forward(
            &t.merged,
            &self.dense_layers()?,
            self.config.dropout,
            mode,
            seed,
        )?;
        Ok(ForwardTrace {
            prediction: head.output,
            lstm: t.lstm,
            image: t.image,
            attention: t.attention,
            branches: t.branches,
            merged: t.merged,
            head,
        })
    }

    /// The merged vector fed to the regression head.
    pub fn merged(&self, x: &PreparedPost) -> Result<Vec<f64>> {
        Ok(self.trunk_forward(x)?.merged)
    }

    fn trunk_forward(&self, x: &PreparedPost) -> Result<TrunkTrace> {
        let cfg = &self.config;
        let mut merged = Vec::with_capacity(cfg.merged_len()?);
        let mut branches = Vec::new();
        for b in cfg.enabled_branches() {
            let t = branch_forward(self.branch_input(b, x), &self.conv_layers(b)?)?;
            merged.extend_from_slice(&t.output);
            branches.push((b, t));
        }
        let (mut lstm, mut image, mut attention) = (None, None, None);
        if cfg.features.content {
            let tr = lstm_encode(&x.tokens, self.lstm()?)?;
            let img = project_regions(
                &x.regions,
                self.params.get(REGION_WEIGHT)?,
                self.params.get(REGION_BIAS)?,
            )?;
            let at = attend(
                cfg.attention,
                &tr.output,
                &x.tokens.mask,
                &img,
                &x.hashtags,
                self.hga()?,
            )?;
            merged.extend_from_slice(&at.output.content);
            lstm = Some(tr);
            image = Some(img);
            attention = Some(at);
        }
        Ok(TrunkTrace {
            lstm,
            image,
            attention,
            branches,
            merged,
        })
    }

    pub fn predict(&self, x: &PreparedPost) -> Result<f64> {
        Ok(self.forward(x, Mode::Infer, 0)?.prediction)
    }

    /// Accumulates `d loss / d params` into `grads` given `d loss / d ŷ`.
    pub fn backward(
        &self,
        x: &PreparedPost,
        trace: &ForwardTrace,
        grad_prediction: f64,
        grads: &mut ParamStore,
    ) -> Result<()> {
        let dense = self.dense_layers()?;
        let (head_grads, grad_merged) = head_backward(&trace.head, &dense, grad_prediction);
        for (i, (w, b)) in head_grads.iter().enumerate() {
            grads.add_to(&head_name(i, "weight"), w)?;
            grads.add_to(&head_name(i, "bias"), b)?;
        }

        let mut offset = 0;
        for (b, t) in &trace.branches {
            let len = t.output.len();
            let layers = self.conv_layers(*b)?;
            let g = branch_backward(t, &layers, &grad_merged[offset..offset + len])?;
            for (i, (f, bias)) in g.iter().enumerate() {
                grads.add_to(&branch_name(*b, i, "filters"), f)?;
                grads.add_to(&branch_name(*b, i, "bias"), bias)?;
            }
            offset += len;
        }

        if let (Some(lt), Some(img), Some(at)) = (&trace.lstm, &trace.image, &trace.attention) {
            let grad_content = &grad_merged[offset..];
            let hga = self.hga()?;
            let ag = attention_backward(at, &lt.output, img, hga, grad_content)?;
            for (side, sg) in [("text", &ag.text), ("image", &ag.image)] {
                if let Some(sg) = sg {
                    grads.add_to(&attention_name(side, "u"), &sg.u)?;
                    grads.add_to(&attention_name(side, "v"), &sg.v)?;
                    grads.add_to(&attention_name(side, "w"), &sg.w)?;
                }
            }
            let lg = lstm_backward(lt, &x.tokens.values, self.lstm()?, &ag.text_input)?;
            grads.add_to(LSTM_INPUT, &lg.input)?;
            grads.add_to(LSTM_RECURRENT, &lg.recurrent)?;
            grads.add_to(LSTM_BIAS, &lg.bias)?;
            let (dw, db) = project_regions_backward(&x.regions, &ag.image_input)?;
            grads.add_to(REGION_WEIGHT, &dw)?;
            grads.add_to(REGION_BIAS, &db)?;
        }
        Ok(())
    }

    /// Training objective over a batch and its gradient. Post `i` uses
    /// dropout seed `mix_seed(seed, i)`.
    pub fn loss_and_gradients(
        &self,
        batch: &[&PreparedPost],
        mode: Mode,
        seed: u64,
    ) -> Result<(f64, ParamStore)> {
        let traces = batch
            .iter()
            .enumerate()
            .map(|(i, x)| self.forward(x, mode, mix_seed(seed, i as u64)))
            .collect::<Result<Vec<_>>>()?;
        let preds: Vec<f64> = traces.iter().map(|t| t.prediction).collect();
        let targets: Vec<f64> = batch.iter().map(|x| x.target).collect();
        let loss = loss_mse(&preds, &targets)?;
        let dl = loss_mse_grad(&preds, &targets)?;
        let mut grads = self.params.zeros_like();
        for ((x, t), g) in batch.iter().zip(&traces).zip(dl) {
            self.backward(x, t, g, &mut grads)?;
        }
        Ok((loss, grads))
    }

    /// Training objective only.
    pub fn loss(&self, batch: &[&PreparedPost], mode: Mode, seed: u64) -> Result<f64> {
        let preds = batch
            .iter()
            .enumerate()
            .map(|(i, x)| Ok(self.forward(x, mode, mix_seed(seed, i as u64))?.prediction))
            .collect::<Result<Vec<_>>>()?;
        let targets: Vec<f64> = batch.iter().map(|x| x.target).collect();
        loss_mse(&preds, &targets)
    }
}

/// `(1 / 2n) Σ (ŷ − y)²`.
pub fn loss_mse(preds: &[f64], targets: &[f64]) -> Result<f64> {
    check_pair(preds, targets)?;
    let n = preds.len() as f64;
    Ok(preds
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t).powi(2))
        .sum::<f64>()
        / (2.0 * n))
}

/// `(ŷ − y) / n`.
pub fn loss_mse_grad(preds: &[f64], targets: &[f64]) -> Result<Vec<f64>> {
    check_pair(preds, targets)?;
    let n = preds.len() as f64;
    Ok(preds
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t) / n)
        .collect())
}

fn check_pair(preds: &[f64], targets: &[f64]) -> Result<()> {
    if preds.len() != targets.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} targets",
            preds.len(),
            targets.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::EmptyDataset("loss over zero predictions".into()));
    }
    Ok(())
}
