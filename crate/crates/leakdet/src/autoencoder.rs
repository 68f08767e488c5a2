//! The convolutional autoencoder: a two-layer strided encoder, a three-layer
//! transposed-convolution decoder, MSE training on no-leak windows, and
//! encoder-only feature extraction.
//!
//! Published geometry, with nodes as channels and time as the convolution
//! axis: the encoder applies 64 then 32 filters of size 7 with stride 2, the
//! decoder applies 32 then 64 transposed filters of size 7 with stride 2 and
//! a final size-7 stride-1 layer back to `K` channels. All layers use
//! symmetric padding 3; the stride-2 transposed layers add output padding 1,
//! so a `(K, L)` window maps to a `(32, L/4)` feature map and back to
//! `(K, L)` exactly whenever `L` is divisible by 4.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::mat::Matrix;
use crate::nn::{
    adam_step, conv1d_forward, conv1d_forward_columns, conv1d_forward_dilated, conv1d_output_len,
    conv_transpose1d_forward, mse_loss, relu, AdamConfig, AdamState, Graph, Tensor3,
};
use crate::scenario::Scenario;
use crate::window::{normalize_series, window_ends, NormStats, WindowMatrix};
use crate::{Error, Result};

pub const KERNEL: usize = 7;
pub const PAD: usize = 3;
pub const ENCODER_FILTERS_1: usize = 64;
pub const ENCODER_FILTERS_2: usize = 32;

/// One convolution layer's parameters. Weights are laid out
/// `(out_channels, in_channels, kernel)` for both plain and transposed
/// convolutions.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub weights: Tensor3,
    pub bias: Tensor3,
    pub stride: usize,
    pub pad: usize,
    pub output_padding: usize,
}

impl ConvLayer {
    /// Fan-in-scaled uniform init: weights in `[-1/sqrt(in*kernel), +...]`,
    /// zero bias.
    fn seeded(out_ch: usize, in_ch: usize, kernel: usize, stride: usize, output_padding: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 1.0 / ((in_ch * kernel) as f64).sqrt();
        ConvLayer {
            weights: Tensor3::uniform(out_ch, in_ch, kernel, bound, &mut rng),
            bias: Tensor3::zeros(1, out_ch, 1),
            stride,
            pad: PAD,
            output_padding,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weights.batch
    }

    pub fn in_channels(&self) -> usize {
        self.weights.channels
    }

    fn quantize_f32(&mut self) {
        self.weights.quantize_f32();
        self.bias.quantize_f32();
    }
}

/// Encoder feature vector for one window.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub values: Vec<f64>,
    /// Sample index of the window's newest column.
    pub end_sample: usize,
}

/// The two-layer strided encoder `f = E(W)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderModel {
    pub conv1: ConvLayer,
    pub conv2: ConvLayer,
    pub nodes: usize,
    pub window_len: usize,
}

/// The three-layer transposed-convolution decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderModel {
    pub tconv1: ConvLayer,
    pub tconv2: ConvLayer,
    pub tconv3: ConvLayer,
    pub nodes: usize,
    pub window_len: usize,
}

fn check_window_len(window_len: usize) -> Result<()> {
    if window_len % 4 != 0 || window_len < 2 * KERNEL {
        return Err(Error::Config(format!(
            "window length {window_len} must be a multiple of 4 and at least {}",
            2 * KERNEL
        )));
    }
    Ok(())
}

impl EncoderModel {
    pub fn seeded(nodes: usize, window_len: usize, seed: u64) -> Result<Self> {
        check_window_len(window_len)?;
        Ok(EncoderModel {
            conv1: ConvLayer::seeded(ENCODER_FILTERS_1, nodes, KERNEL, 2, 0, seed ^ 0xE1),
            conv2: ConvLayer::seeded(ENCODER_FILTERS_2, ENCODER_FILTERS_1, KERNEL, 2, 0, seed ^ 0xE2),
            nodes,
            window_len,
        })
    }

    /// Length of the feature map the encoder produces: `ceil(ceil(L/2)/2)`.
    pub fn feature_len(&self) -> usize {
        let l1 = conv1d_output_len(self.window_len, KERNEL, 2, PAD, 1).expect("validated window length");
        conv1d_output_len(l1, KERNEL, 2, PAD, 1).expect("validated window length")
    }

    /// Flattened embedding dimension: `32 * feature_len`.
    pub fn embedding_dim(&self) -> usize {
        ENCODER_FILTERS_2 * self.feature_len()
    }

    /// Forward pass to the `(batch, 32, feature_len)` feature map.
    pub fn feature_map(&self, x: &Tensor3) -> Result<Tensor3> {
        if x.channels != self.nodes || x.len != self.window_len {
            return Err(Error::Shape(format!(
                "encoder expects ({}, {}) windows, got ({}, {})",
                self.nodes, self.window_len, x.channels, x.len
            )));
        }
        let c1 = conv1d_forward(x, &self.conv1.weights, &self.conv1.bias, self.conv1.stride, self.conv1.pad)?;
        let r1 = relu(&c1);
        let c2 = conv1d_forward(&r1, &self.conv2.weights, &self.conv2.bias, self.conv2.stride, self.conv2.pad)?;
        Ok(relu(&c2))
    }

    /// Encodes one (already normalized) window. Flattening is channel-major:
    /// `values[c * feature_len + q]` holds channel `c` at feature position `q`.
    pub fn encode(&self, window: &WindowMatrix) -> Result<Embedding> {
        let x = window_to_tensor(window);
        let features = self.feature_map(&x)?;
        Ok(Embedding { values: features.data().to_vec(), end_sample: window.end_sample })
    }

    /// Embeddings of every full window of a normalized series, oldest first
    /// (window end samples `L-1 ..= N-1`).
    ///
    /// This is the streaming fast path: both convolutions run once over the
    /// whole series, and only the handful of padding-affected columns is
    /// recomputed per window. Column values share the per-column kernel with
    /// [`EncoderModel::encode`], so the results are bit-identical to encoding
    /// each window separately.
    pub fn scan_embeddings(&self, series: &Matrix) -> Result<Vec<Embedding>> {
        let (k, n, l) = (series.rows(), series.cols(), self.window_len);
        if k != self.nodes {
            return Err(Error::Shape(format!("series has {k} rows, encoder expects {}", self.nodes)));
        }
        if n < l {
            return Err(Error::Shape(format!("series of {n} samples is shorter than the window ({l})")));
        }
        let (s1, p1, k1) = (self.conv1.stride, self.conv1.pad, KERNEL);
        let (s2, p2, k2) = (self.conv2.stride, self.conv2.pad, KERNEL);
        let l1 = conv1d_output_len(l, k1, s1, p1, 1).expect("validated");
        let l2 = self.feature_len();

        // Window conv1 column j covers window positions [j*s1-p1, j*s1-p1+k1-1];
        // interior columns see no padding and equal the unpadded full-series
        // convolution at left edge a + j*s1 - p1.
        let j_int_lo = (p1 + s1 - 1) / s1;
        let j_int_hi = (l + p1 - k1) / s1; // inclusive
        // Window conv2 column q reads conv1 columns [q*s2-p2, q*s2-p2+k2-1];
        // interior columns reference only interior conv1 columns.
        let q_int_lo = (p2 + j_int_lo + s2 - 1) / s2;
        let q_int_hi = (j_int_hi + p2 + 1 - k2) / s2; // inclusive

        let x_full = Tensor3::new(1, k, n, series.data().to_vec())?;
        // Full-series layer 1 at stride 1 without padding, then ReLU.
        let f1 = conv1d_forward(&x_full, &self.conv1.weights, &self.conv1.bias, 1, 0)?;
        let r1_full = relu(&f1);
        // Layer 2 over the stride-1 feature sequence: stride 1, dilation s1.
        let f2 = conv1d_forward_dilated(&r1_full, &self.conv2.weights, &self.conv2.bias, 1, 0, s1)?;
        let r2_full = relu(&f2);

        let mut window_buf = Tensor3::zeros(1, k, l);
        let mut r1_win = Tensor3::zeros(1, ENCODER_FILTERS_1, l1);
        let mut out = Vec::with_capacity(n - l + 1);

        for a in 0..=(n - l) {
            // Assemble the window's post-ReLU conv1 output: interior columns
            // are slices of the full scan, edge columns are recomputed on the
            // window itself.
            for c in 0..k {
                window_buf.row_mut(0, c).copy_from_slice(&series.row(c)[a..a + l]);
            }
            let edge1: Vec<usize> = (0..l1).filter(|j| *j < j_int_lo || *j > j_int_hi).collect();
            let c1_edges = conv1d_forward_columns(
                &window_buf,
                &self.conv1.weights,
                &self.conv1.bias,
                s1,
                p1,
                1,
                &edge1,
            );
            for c in 0..ENCODER_FILTERS_1 {
                let src = r1_full.row(0, c);
                let dst = r1_win.row_mut(0, c);
                for j in j_int_lo..=j_int_hi {
                    dst[j] = src[a + j * s1 - p1];
                }
                for (e, j) in edge1.iter().enumerate() {
                    dst[*j] = c1_edges[c * edge1.len() + e].max(0.0);
                }
            }

            let edge2: Vec<usize> = (0..l2).filter(|q| *q < q_int_lo || *q > q_int_hi).collect();
            let c2_edges = conv1d_forward_columns(
                &r1_win,
                &self.conv2.weights,
                &self.conv2.bias,
                s2,
                p2,
                1,
                &edge2,
            );
            let mut values = vec![0.0; ENCODER_FILTERS_2 * l2];
            for c in 0..ENCODER_FILTERS_2 {
                let src = r2_full.row(0, c);
                let dst = &mut values[c * l2..(c + 1) * l2];
                for q in q_int_lo..=q_int_hi {
                    dst[q] = src[a + (q * s2 - p2) * s1 - p1];
                }
                for (e, q) in edge2.iter().enumerate() {
                    dst[*q] = c2_edges[c * edge2.len() + e].max(0.0);
                }
            }
            out.push(Embedding { values, end_sample: a + l - 1 });
        }
        Ok(out)
    }

    fn quantize_f32(&mut self) {
        self.conv1.quantize_f32();
        self.conv2.quantize_f32();
    }
}

impl DecoderModel {
    pub fn seeded(nodes: usize, window_len: usize, seed: u64) -> Result<Self> {
        check_window_len(window_len)?;
        Ok(DecoderModel {
            tconv1: ConvLayer::seeded(ENCODER_FILTERS_2, ENCODER_FILTERS_2, KERNEL, 2, 1, seed ^ 0xD1),
            tconv2: ConvLayer::seeded(ENCODER_FILTERS_1, ENCODER_FILTERS_2, KERNEL, 2, 1, seed ^ 0xD2),
            tconv3: ConvLayer::seeded(nodes, ENCODER_FILTERS_1, KERNEL, 1, 0, seed ^ 0xD3),
            nodes,
            window_len,
        })
    }

    /// Decodes a `(batch, 32, L/4)` feature map back to `(batch, K, L)`.
    pub fn decode(&self, features: &Tensor3) -> Result<Tensor3> {
        let d1 = conv_transpose1d_forward(
            features,
            &self.tconv1.weights,
            &self.tconv1.bias,
            self.tconv1.stride,
            self.tconv1.pad,
            self.tconv1.output_padding,
        )?;
        let r1 = relu(&d1);
        let d2 = conv_transpose1d_forward(
            &r1,
            &self.tconv2.weights,
            &self.tconv2.bias,
            self.tconv2.stride,
            self.tconv2.pad,
            self.tconv2.output_padding,
        )?;
        let r2 = relu(&d2);
        conv_transpose1d_forward(
            &r2,
            &self.tconv3.weights,
            &self.tconv3.bias,
            self.tconv3.stride,
            self.tconv3.pad,
            self.tconv3.output_padding,
        )
    }

    fn quantize_f32(&mut self) {
        self.tconv1.quantize_f32();
        self.tconv2.quantize_f32();
        self.tconv3.quantize_f32();
    }
}

pub fn window_to_tensor(window: &WindowMatrix) -> Tensor3 {
    Tensor3::new(1, window.nodes(), window.len(), window.values.data().to_vec())
        .expect("window values are finite")
}

/// Runs decoder(encoder(window)); the estimate has the window's exact shape.
pub fn reconstruct(window: &WindowMatrix, encoder: &EncoderModel, decoder: &DecoderModel) -> Result<WindowMatrix> {
    let x = window_to_tensor(window);
    let features = encoder.feature_map(&x)?;
    let y = decoder.decode(&features)?;
    if y.channels != window.nodes() || y.len != window.len() {
        return Err(Error::Shape(format!(
            "reconstruction shape ({}, {}) does not match window ({}, {})",
            y.channels,
            y.len,
            window.nodes(),
            window.len()
        )));
    }
    Ok(WindowMatrix {
        values: Matrix::from_vec(y.channels, y.len, y.data().to_vec())?,
        end_sample: window.end_sample,
    })
}

/// Reconstruction MSE of one window.
pub fn reconstruction_mse(window: &WindowMatrix, encoder: &EncoderModel, decoder: &DecoderModel) -> Result<f64> {
    let x = window_to_tensor(window);
    let features = encoder.feature_map(&x)?;
    let y = decoder.decode(&features)?;
    mse_loss(&y, &x)
}

/// Training hyperparameters.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_steps: usize,
    /// Steps between validation evaluations.
    pub eval_every: usize,
    /// Early stop after this many evaluations without improvement.
    pub patience: usize,
    /// Stride, in samples, between training windows taken from a scenario.
    pub window_stride: usize,
    /// Cap on validation windows used per early-stopping evaluation; larger
    /// sets are thinned evenly. 0 disables the cap.
    pub max_val_windows: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            learning_rate: 1e-3,
            max_steps: 2000,
            eval_every: 25,
            patience: 10,
            window_stride: 24,
            max_val_windows: 128,
            seed: 0,
        }
    }
}

/// One loss-history row.
#[derive(Debug, Clone)]
pub struct LossRecord {
    pub step: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

/// Training output: models plus the loss trajectory.
#[derive(Debug)]
pub struct TrainedAutoencoder {
    pub encoder: EncoderModel,
    pub decoder: DecoderModel,
    pub history: Vec<LossRecord>,
    pub initial_val_loss: f64,
    pub final_val_loss: f64,
    pub steps: usize,
}

/// Extracts normalized training windows from scenarios at the given stride.
pub fn training_windows(
    scenarios: &[&Scenario],
    stats: &NormStats,
    window_len: usize,
    stride: usize,
) -> Result<Vec<WindowMatrix>> {
    let mut out = Vec::new();
    for s in scenarios {
        let normalized = normalize_series(&s.pressures, stats)?;
        for end in window_ends(s.sample_count(), window_len, stride) {
            out.push(crate::window::window_at(&normalized, window_len, end)?);
        }
    }
    Ok(out)
}

/// Trains the autoencoder on no-leak scenarios.
///
/// Hard-errors if any scenario is leak-labeled: anomalies must not enter the
/// training phase. Windows are taken every `window_stride` samples, z-scored
/// with `stats`, and fitted by MSE with early stopping on the validation
/// windows' loss.
pub fn train(
    train_scenarios: &[&Scenario],
    val_scenarios: &[&Scenario],
    stats: &NormStats,
    window_len: usize,
    cfg: &TrainConfig,
) -> Result<TrainedAutoencoder> {
    if train_scenarios.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    for s in train_scenarios.iter().chain(val_scenarios) {
        if s.label {
            return Err(Error::Data(format!(
                "scenario {} is leak-labeled: anomalies are not allowed in the training phase",
                s.id
            )));
        }
    }
    let train_windows = training_windows(train_scenarios, stats, window_len, cfg.window_stride)?;
    let mut val_windows = training_windows(val_scenarios, stats, window_len, cfg.window_stride)?;
    if cfg.max_val_windows > 0 && val_windows.len() > cfg.max_val_windows {
        let n = val_windows.len();
        let cap = cfg.max_val_windows;
        let mut kept = Vec::with_capacity(cap);
        for (i, w) in val_windows.into_iter().enumerate() {
            if i * cap / n != (i + 1) * cap / n {
                kept.push(w);
            }
        }
        val_windows = kept;
    }
    let val_ref = if val_windows.is_empty() { &train_windows } else { &val_windows };
    train_on_windows(&train_windows, val_ref, cfg)
}

fn windows_to_batch(windows: &[WindowMatrix], idx: &[usize]) -> Tensor3 {
    let (k, l) = (windows[0].nodes(), windows[0].len());
    let mut data = Vec::with_capacity(idx.len() * k * l);
    for &i in idx {
        data.extend_from_slice(windows[i].values.data());
    }
    Tensor3::new(idx.len(), k, l, data).expect("finite windows")
}

fn batched_val_loss(
    windows: &[WindowMatrix],
    encoder: &EncoderModel,
    decoder: &DecoderModel,
    batch: usize,
) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    let idx: Vec<usize> = (0..windows.len()).collect();
    for chunk in idx.chunks(batch) {
        let x = windows_to_batch(windows, chunk);
        let features = encoder.feature_map(&x)?;
        let y = decoder.decode(&features)?;
        total += mse_loss(&y, &x)? * chunk.len() as f64;
        count += chunk.len();
    }
    Ok(total / count as f64)
}

/// Core training loop over pre-extracted (normalized, no-leak) windows.
pub fn train_on_windows(
    train_windows: &[WindowMatrix],
    val_windows: &[WindowMatrix],
    cfg: &TrainConfig,
) -> Result<TrainedAutoencoder> {
    let first = train_windows.first().ok_or_else(|| Error::Data("no training windows".into()))?;
    let (k, l) = (first.nodes(), first.len());
    if train_windows.iter().chain(val_windows).any(|w| w.nodes() != k || w.len() != l) {
        return Err(Error::Shape("training windows disagree on shape".into()));
    }
    if cfg.batch_size == 0 || cfg.eval_every == 0 {
        return Err(Error::Config("batch_size and eval_every must be positive".into()));
    }
    let mut encoder = EncoderModel::seeded(k, l, cfg.seed)?;
    let mut decoder = DecoderModel::seeded(k, l, cfg.seed)?;

    let adam_cfg = AdamConfig { learning_rate: cfg.learning_rate, ..AdamConfig::default() };
    let mut state = AdamState::for_params(&collect_params(&encoder, &decoder));

    let mut order: Vec<usize> = (0..train_windows.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5EED);
    let mut cursor = order.len(); // forces a shuffle on first use

    let initial_val = batched_val_loss(val_windows, &encoder, &decoder, cfg.batch_size)?;
    let mut best_val = initial_val;
    let mut best = (encoder.clone(), decoder.clone());
    let mut evals_since_best = 0usize;
    let mut history = vec![LossRecord { step: 0, train_loss: f64::NAN, val_loss: Some(initial_val) }];
    let mut steps = 0usize;

    'outer: for step in 1..=cfg.max_steps {
        // Next batch of shuffled window indices, reshuffling per epoch.
        let mut batch_idx = Vec::with_capacity(cfg.batch_size);
        while batch_idx.len() < cfg.batch_size.min(train_windows.len()) {
            if cursor >= order.len() {
                shuffle(&mut order, &mut rng);
                cursor = 0;
            }
            batch_idx.push(order[cursor]);
            cursor += 1;
        }
        let x_val = windows_to_batch(train_windows, &batch_idx);

        let mut graph = Graph::new();
        let x = graph.leaf(x_val);
        let pw1 = graph.leaf(encoder.conv1.weights.clone());
        let pb1 = graph.leaf(encoder.conv1.bias.clone());
        let pw2 = graph.leaf(encoder.conv2.weights.clone());
        let pb2 = graph.leaf(encoder.conv2.bias.clone());
        let pdw1 = graph.leaf(decoder.tconv1.weights.clone());
        let pdb1 = graph.leaf(decoder.tconv1.bias.clone());
        let pdw2 = graph.leaf(decoder.tconv2.weights.clone());
        let pdb2 = graph.leaf(decoder.tconv2.bias.clone());
        let pdw3 = graph.leaf(decoder.tconv3.weights.clone());
        let pdb3 = graph.leaf(decoder.tconv3.bias.clone());

        let c1 = graph.conv1d(x, pw1, pb1, encoder.conv1.stride, encoder.conv1.pad)?;
        let r1 = graph.relu(c1);
        let c2 = graph.conv1d(r1, pw2, pb2, encoder.conv2.stride, encoder.conv2.pad)?;
        let r2 = graph.relu(c2);
        let d1 = graph.conv_transpose1d(
            r2,
            pdw1,
            pdb1,
            decoder.tconv1.stride,
            decoder.tconv1.pad,
            decoder.tconv1.output_padding,
        )?;
        let rd1 = graph.relu(d1);
        let d2 = graph.conv_transpose1d(
            rd1,
            pdw2,
            pdb2,
            decoder.tconv2.stride,
            decoder.tconv2.pad,
            decoder.tconv2.output_padding,
        )?;
        let rd2 = graph.relu(d2);
        let d3 = graph.conv_transpose1d(
            rd2,
            pdw3,
            pdb3,
            decoder.tconv3.stride,
            decoder.tconv3.pad,
            decoder.tconv3.output_padding,
        )?;
        let loss = graph.mse(d3, x)?;

        let loss_val = graph.scalar(loss)?;
        if !loss_val.is_finite() {
            return Err(Error::Numerical(format!("training diverged: loss {loss_val} at step {step}")));
        }
        graph.backward(loss)?;

        {
            let grads = [
                graph.grad(pw1)?.clone(),
                graph.grad(pb1)?.clone(),
                graph.grad(pw2)?.clone(),
                graph.grad(pb2)?.clone(),
                graph.grad(pdw1)?.clone(),
                graph.grad(pdb1)?.clone(),
                graph.grad(pdw2)?.clone(),
                graph.grad(pdb2)?.clone(),
                graph.grad(pdw3)?.clone(),
                graph.grad(pdb3)?.clone(),
            ];
            let mut params = collect_params_mut(&mut encoder, &mut decoder);
            let grad_refs: Vec<&Tensor3> = grads.iter().collect();
            adam_step(&mut params, &grad_refs, &mut state, &adam_cfg)?;
        }
        steps = step;

        let val_loss = if step % cfg.eval_every == 0 || step == cfg.max_steps {
            let v = batched_val_loss(val_windows, &encoder, &decoder, cfg.batch_size)?;
            if v < best_val {
                best_val = v;
                best = (encoder.clone(), decoder.clone());
                evals_since_best = 0;
            } else {
                evals_since_best += 1;
            }
            Some(v)
        } else {
            None
        };
        history.push(LossRecord { step, train_loss: loss_val, val_loss });
        if evals_since_best >= cfg.patience {
            break 'outer;
        }
    }

    let (mut encoder, mut decoder) = best;
    // Trained parameters are rounded through f32 so the 32-bit model file
    // (and anything recomputed from a reloaded model) is bit-exact.
    encoder.quantize_f32();
    decoder.quantize_f32();
    let final_val = batched_val_loss(val_windows, &encoder, &decoder, cfg.batch_size)?;
    Ok(TrainedAutoencoder {
        encoder,
        decoder,
        history,
        initial_val_loss: initial_val,
        final_val_loss: final_val,
        steps,
    })
}

fn collect_params<'a>(encoder: &'a EncoderModel, decoder: &'a DecoderModel) -> Vec<&'a Tensor3> {
    vec![
        &encoder.conv1.weights,
        &encoder.conv1.bias,
        &encoder.conv2.weights,
        &encoder.conv2.bias,
        &decoder.tconv1.weights,
        &decoder.tconv1.bias,
        &decoder.tconv2.weights,
        &decoder.tconv2.bias,
        &decoder.tconv3.weights,
        &decoder.tconv3.bias,
    ]
}

fn collect_params_mut<'a>(encoder: &'a mut EncoderModel, decoder: &'a mut DecoderModel) -> Vec<&'a mut Tensor3> {
    vec![
        &mut encoder.conv1.weights,
        &mut encoder.conv1.bias,
        &mut encoder.conv2.weights,
        &mut encoder.conv2.bias,
        &mut decoder.tconv1.weights,
        &mut decoder.tconv1.bias,
        &mut decoder.tconv2.weights,
        &mut decoder.tconv2.bias,
        &mut decoder.tconv3.weights,
        &mut decoder.tconv3.bias,
    ]
}

fn shuffle(order: &mut [usize], rng: &mut ChaCha8Rng) {
    use rand::Rng;
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_window(k: usize, l: usize, seed: u64) -> WindowMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..k * l).map(|_| rng.gen_range(-2.0..2.0)).collect();
        WindowMatrix { values: Matrix::from_vec(k, l, data).unwrap(), end_sample: l - 1 }
    }

    fn random_series(k: usize, n: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_vec(k, n, (0..k * n).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap()
    }

    #[test]
    fn published_shape_contract() {
        // (K, 336) -> (32, 84) -> (K, 336) for both the desk and full node
        // counts.
        for k in [16usize, 268] {
            let enc = EncoderModel::seeded(k, 336, 3).unwrap();
            let dec = DecoderModel::seeded(k, 336, 3).unwrap();
            assert_eq!(enc.feature_len(), 84);
            assert_eq!(enc.embedding_dim(), 2688);
            let w = random_window(k, 336, 17);
            let features = enc.feature_map(&window_to_tensor(&w)).unwrap();
            assert_eq!(features.shape(), (1, 32, 84));
            let back = dec.decode(&features).unwrap();
            assert_eq!(back.shape(), (1, k, 336));
        }
    }

    #[test]
    fn zero_window_with_zero_bias_encodes_to_zero() {
        let enc = EncoderModel::seeded(3, 48, 1).unwrap(); // biases init to zero
        let w = WindowMatrix { values: Matrix::zeros(3, 48), end_sample: 47 };
        let e = enc.encode(&w).unwrap();
        assert!(e.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn encode_is_pure() {
        let enc = EncoderModel::seeded(4, 48, 9).unwrap();
        let w = random_window(4, 48, 2);
        assert_eq!(enc.encode(&w).unwrap(), enc.encode(&w).unwrap());
    }

    #[test]
    fn embeddings_are_nonnegative() {
        let enc = EncoderModel::seeded(5, 64, 11).unwrap();
        let w = random_window(5, 64, 3);
        assert!(enc.encode(&w).unwrap().values.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn scan_matches_per_window_encode_bitwise() {
        let enc = EncoderModel::seeded(4, 48, 21).unwrap();
        let series = random_series(4, 130, 5);
        let scanned = enc.scan_embeddings(&series).unwrap();
        assert_eq!(scanned.len(), 130 - 48 + 1);
        for (i, e) in scanned.iter().enumerate() {
            let end = 47 + i;
            assert_eq!(e.end_sample, end);
            let w = crate::window::window_at(&series, 48, end).unwrap();
            let direct = enc.encode(&w).unwrap();
            assert_eq!(e.values, direct.values, "window ending at {end} diverged");
        }
    }

    #[test]
    fn scan_matches_encode_at_published_window_length() {
        let enc = EncoderModel::seeded(3, 336, 8).unwrap();
        let series = random_series(3, 350, 41);
        let scanned = enc.scan_embeddings(&series).unwrap();
        for e in scanned.iter().step_by(7) {
            let w = crate::window::window_at(&series, 336, e.end_sample).unwrap();
            assert_eq!(e.values, enc.encode(&w).unwrap().values);
        }
    }

    #[test]
    fn reconstruction_has_window_shape_and_is_deterministic() {
        let enc = EncoderModel::seeded(6, 48, 14).unwrap();
        let dec = DecoderModel::seeded(6, 48, 14).unwrap();
        let w = random_window(6, 48, 4);
        let a = reconstruct(&w, &enc, &dec).unwrap();
        let b = reconstruct(&w, &enc, &dec).unwrap();
        assert_eq!(a.values, b.values);
        assert_eq!(a.values.rows(), 6);
        assert_eq!(a.values.cols(), 48);
        let loss = reconstruction_mse(&w, &enc, &dec).unwrap();
        assert!(loss > 0.0 && loss.is_finite());
    }

    #[test]
    fn leak_labeled_scenario_refused_in_training() {
        use crate::scenario::{LeakSpec, Scenario, Split};
        let leak = LeakSpec::new(0, 0.5, 40, 0.5).unwrap();
        let bad = Scenario {
            id: "test-666".into(),
            split: Split::Test,
            pressures: Matrix::zeros(2, 60),
            sample_period_hours: 0.5,
            label: true,
            leak: Some(leak),
            seed: 0,
        };
        let stats = crate::window::NormStats { mean: vec![0.0; 2], std: vec![1.0; 2] };
        let err = train(&[&bad], &[], &stats, 48, &TrainConfig::default()).unwrap_err();
        assert!(err.to_string().contains("training phase"), "got: {err}");
    }

    #[test]
    fn overfits_a_single_repeated_window() {
        // Sanity run: one window, loss below 1e-3 within 2000 steps.
        let w = random_window(4, 48, 33);
        let cfg = TrainConfig {
            batch_size: 1,
            max_steps: 2000,
            eval_every: 100,
            patience: 1000,
            seed: 5,
            ..TrainConfig::default()
        };
        let out = train_on_windows(&[w.clone()], &[w], &cfg).unwrap();
        assert!(
            out.final_val_loss < 1e-3,
            "loss {} after {} steps",
            out.final_val_loss,
            out.steps
        );
    }

    #[test]
    fn saving_precision_is_f32_after_training() {
        let w = random_window(3, 48, 7);
        let cfg = TrainConfig { batch_size: 1, max_steps: 5, eval_every: 5, ..TrainConfig::default() };
        let out = train_on_windows(&[w.clone()], &[w], &cfg).unwrap();
        for v in out.encoder.conv1.weights.data() {
            assert_eq!(*v, *v as f32 as f64);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        // decoder(encoder(w)) keeps (K, L) for any K and L divisible by 4.
        #[test]
        fn shape_round_trip(k in 1usize..6, l4 in 4usize..20) {
            let l = 4 * l4;
            let enc = EncoderModel::seeded(k, l, 2).unwrap();
            let dec = DecoderModel::seeded(k, l, 2).unwrap();
            let w = random_window(k, l, 77);
            let out = reconstruct(&w, &enc, &dec).unwrap();
            prop_assert_eq!(out.values.rows(), k);
            prop_assert_eq!(out.values.cols(), l);
        }

        // The streaming scan equals per-window encoding bit for bit.
        #[test]
        fn scan_equals_encode(k in 1usize..4, extra in 0usize..30, seed in 0u64..500) {
            let l = 48;
            let n = l + extra;
            let enc = EncoderModel::seeded(k, l, seed).unwrap();
            let series = random_series(k, n, seed ^ 0xABCD);
            let scanned = enc.scan_embeddings(&series).unwrap();
            for e in &scanned {
                let w = crate::window::window_at(&series, l, e.end_sample).unwrap();
                prop_assert_eq!(&e.values, &enc.encode(&w).unwrap().values);
            }
        }
    }
}
