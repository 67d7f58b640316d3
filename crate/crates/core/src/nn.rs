//! From-scratch neural networks: the 1D-CNN and BPNN base learners, with
//! mini-batch SGD on softmax cross-entropy, inverted dropout, and
//! epoch-indexed early-stopping snapshots.
//!
//! Activations flow as flat buffers with a (channels, length) shape tracked
//! per layer. No hidden activations: only the output layer passes through
//! ReLU, matching the published layer tables.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// One layer of the architecture.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Dense { in_w: usize, out_w: usize },
    Conv1d { in_ch: usize, out_ch: usize, kernel: usize },
    MaxPool { kernel: usize },
    Dropout { rate: f64 },
    Relu,
}

/// (channels, length) of an activation buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub channels: usize,
    pub len: usize,
}

impl Shape {
    pub fn flat(&self) -> usize {
        self.channels * self.len
    }
}

/// Validated architecture: layer specs plus the shape entering each layer.
#[derive(Debug, Clone, PartialEq)]
pub struct NnArch {
    pub layers: Vec<LayerSpec>,
    pub input_width: usize,
    /// shapes[i] enters layers[i]; shapes.last() is the output shape.
    pub shapes: Vec<Shape>,
    pub name: String,
}

impl NnArch {
    /// Check shape algebra; fails fast instead of padding.
    pub fn new(name: &str, input_width: usize, layers: Vec<LayerSpec>) -> Result<NnArch> {
        if input_width == 0 {
            return Err(Error::config("nn input width must be positive".to_string()));
        }
        let mut shape = Shape { channels: 1, len: input_width };
        let mut shapes = vec![shape];
        for (i, l) in layers.iter().enumerate() {
            shape = match *l {
                LayerSpec::Dense { in_w, out_w } => {
                    if shape.flat() != in_w {
                        return Err(Error::shape(format!(
                            "{name} layer {i}: dense expects {in_w}, incoming {}",
                            shape.flat()
                        )));
                    }
                    Shape { channels: 1, len: out_w }
                }
                LayerSpec::Conv1d { in_ch, out_ch, kernel } => {
                    if shape.channels != in_ch || shape.len < kernel {
                        return Err(Error::shape(format!(
                            "{name} layer {i}: conv wants {in_ch} channels, kernel {kernel}; \
                             incoming {}x{}",
                            shape.channels, shape.len
                        )));
                    }
                    Shape { channels: out_ch, len: shape.len - kernel + 1 }
                }
                LayerSpec::MaxPool { kernel } => {
                    if kernel == 0 || shape.len < kernel {
                        return Err(Error::shape(format!(
                            "{name} layer {i}: pool kernel {kernel} on length {}",
                            shape.len
                        )));
                    }
                    Shape { channels: shape.channels, len: shape.len / kernel }
                }
                LayerSpec::Dropout { rate } => {
                    if !(0.0..1.0).contains(&rate) {
                        return Err(Error::config(format!(
                            "{name} layer {i}: dropout rate {rate} outside [0,1)"
                        )));
                    }
                    shape
                }
                LayerSpec::Relu => shape,
            };
            shapes.push(shape);
        }
        if shape.flat() != 3 {
            return Err(Error::shape(format!(
                "{name}: output width {} instead of 3",
                shape.flat()
            )));
        }
        Ok(NnArch {
            layers,
            input_width,
            shapes,
            name: name.to_string(),
        })
    }

    pub fn output_shape(&self) -> Shape {
        *self.shapes.last().unwrap()
    }
}

/// The 1D-CNN tower: halve-the-input dense front end, up to three conv/pool
/// blocks (1->26->16->16 channels, kernel 2), flatten into the output dense
/// layer, final ReLU. The flatten width is computed from the shape algebra.
/// Like the front-end halving, the conv stack adapts to the actual feature
/// width: each block is included only while the running length supports a
/// kernel-2 convolution followed by a kernel-2 pool, so narrow post-selection
/// widths yield a shallower tower instead of failing.
pub fn cnn_arch(input_width: usize) -> Result<NnArch> {
    let half = input_width / 2;
    if half < 3 {
        return Err(Error::shape(format!(
            "cnn: input width {input_width} too narrow for a conv/pool block"
        )));
    }
    let mut layers = vec![
        LayerSpec::Dense { in_w: input_width, out_w: half },
        LayerSpec::Dropout { rate: 0.2 },
    ];
    let blocks = [(1usize, 26usize, 0.3), (26, 16, 0.4), (16, 16, 0.1)];
    let mut len = half;
    let mut channels = 1;
    for &(in_ch, out_ch, rate) in &blocks {
        if len < 3 {
            break;
        }
        layers.push(LayerSpec::Conv1d { in_ch, out_ch, kernel: 2 });
        layers.push(LayerSpec::Dropout { rate });
        layers.push(LayerSpec::MaxPool { kernel: 2 });
        len = (len - 1) / 2;
        channels = out_ch;
    }
    layers.push(LayerSpec::Dense { in_w: channels * len, out_w: 3 });
    layers.push(LayerSpec::Dropout { rate: 0.2 });
    layers.push(LayerSpec::Relu);
    NnArch::new("cnn", input_width, layers)
}

/// The BPNN: halve-the-input dense, dense to 41, pool to 20, then
/// 20 -> 10 -> 5 -> 3 dense layers, final ReLU.
pub fn bpnn_arch(input_width: usize) -> Result<NnArch> {
    let half = input_width / 2;
    if half < 2 {
        return Err(Error::shape(format!("bpnn: input width {input_width} too narrow")));
    }
    NnArch::new(
        "bpnn",
        input_width,
        vec![
            LayerSpec::Dense { in_w: input_width, out_w: half },
            LayerSpec::Dropout { rate: 0.2 },
            LayerSpec::Dense { in_w: half, out_w: 41 },
            LayerSpec::Dropout { rate: 0.2 },
            LayerSpec::MaxPool { kernel: 2 },
            LayerSpec::Dense { in_w: 20, out_w: 10 },
            LayerSpec::Dropout { rate: 0.2 },
            LayerSpec::Dense { in_w: 10, out_w: 5 },
            LayerSpec::Dropout { rate: 0.1 },
            LayerSpec::Dense { in_w: 5, out_w: 3 },
            LayerSpec::Relu,
        ],
    )
}

/// Weights of one layer. Dense weights are row-major out x in; conv weights
/// are indexed [out_ch][in_ch][tap] flattened.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerParams {
    Dense { w: Vec<f64>, b: Vec<f64> },
    Conv { w: Vec<f64>, b: Vec<f64> },
    None,
}

/// A trained (or initializing) network.
#[derive(Debug, Clone, PartialEq)]
pub struct NnModel {
    pub arch: NnArch,
    pub params: Vec<LayerParams>,
    pub rng_seed: u64,
    pub epochs_trained: usize,
}

/// Forward/eval mode; dropout is active only in `Train`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Cached per-layer state from one forward pass, consumed by backward.
struct Tape {
    /// Input buffer to each layer.
    inputs: Vec<Vec<f64>>,
    /// Inverted-dropout scale per element (train mode), per layer.
    masks: Vec<Option<Vec<f64>>>,
    /// Winning flat source index per pooled output, per layer.
    argmax: Vec<Option<Vec<usize>>>,
}

impl NnModel {
    /// Xavier-uniform initialization, fully determined by `seed`.
    pub fn init(arch: NnArch, seed: u64) -> NnModel {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let params = arch
            .layers
            .iter()
            .map(|l| match *l {
                LayerSpec::Dense { in_w, out_w } => {
                    let limit = (6.0 / (in_w + out_w) as f64).sqrt();
                    LayerParams::Dense {
                        w: (0..out_w * in_w).map(|_| rng.gen_range(-limit..limit)).collect(),
                        b: vec![0.0; out_w],
                    }
                }
                LayerSpec::Conv1d { in_ch, out_ch, kernel } => {
                    let fan_in = in_ch * kernel;
                    let fan_out = out_ch * kernel;
                    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    LayerParams::Conv {
                        w: (0..out_ch * in_ch * kernel)
                            .map(|_| rng.gen_range(-limit..limit))
                            .collect(),
                        b: vec![0.0; out_ch],
                    }
                }
                _ => LayerParams::None,
            })
            .collect();
        NnModel {
            arch,
            params,
            rng_seed: seed,
            epochs_trained: 0,
        }
    }

    fn forward_tape(
        &self,
        x: &[f64],
        mode: Mode,
        rng: Option<&mut ChaCha20Rng>,
    ) -> Result<(Vec<f64>, Tape)> {
        if x.len() != self.arch.input_width {
            return Err(Error::shape(format!(
                "{}: input width {} expected {}",
                self.arch.name,
                x.len(),
                self.arch.input_width
            )));
        }
        let mut rng = rng;
        let mut tape = Tape {
            inputs: Vec::with_capacity(self.arch.layers.len()),
            masks: Vec::with_capacity(self.arch.layers.len()),
            argmax: Vec::with_capacity(self.arch.layers.len()),
        };
        let mut a = x.to_vec();
        for (i, layer) in self.arch.layers.iter().enumerate() {
            tape.inputs.push(a.clone());
            let mut mask = None;
            let mut arg = None;
            let shape_in = self.arch.shapes[i];
            a = match (layer, &self.params[i]) {
                (LayerSpec::Dense { in_w, out_w }, LayerParams::Dense { w, b }) => {
                    let mut out = b.clone();
                    for o in 0..*out_w {
                        let row = &w[o * in_w..(o + 1) * in_w];
                        out[o] += row.iter().zip(&a).map(|(wi, ai)| wi * ai).sum::<f64>();
                    }
                    out
                }
                (LayerSpec::Conv1d { in_ch, out_ch, kernel }, LayerParams::Conv { w, b }) => {
                    let l_in = shape_in.len;
                    let l_out = l_in - kernel + 1;
                    let mut out = vec![0.0; out_ch * l_out];
                    for o in 0..*out_ch {
                        for t in 0..l_out {
                            let mut acc = b[o];
                            for c in 0..*in_ch {
                                let wbase = (o * in_ch + c) * kernel;
                                let abase = c * l_in + t;
                                for j in 0..*kernel {
                                    acc += w[wbase + j] * a[abase + j];
                                }
                            }
                            out[o * l_out + t] = acc;
                        }
                    }
                    out
                }
                (LayerSpec::MaxPool { kernel }, _) => {
                    let l_in = shape_in.len;
                    let l_out = l_in / kernel;
                    let mut out = vec![0.0; shape_in.channels * l_out];
                    let mut idx = vec![0usize; shape_in.channels * l_out];
                    for c in 0..shape_in.channels {
                        for t in 0..l_out {
                            let base = c * l_in + t * kernel;
                            let mut best = base;
                            for j in 1..*kernel {
                                if a[base + j] > a[best] {
                                    best = base + j;
                                }
                            }
                            out[c * l_out + t] = a[best];
                            idx[c * l_out + t] = best;
                        }
                    }
                    arg = Some(idx);
                    out
                }
                (LayerSpec::Dropout { rate }, _) => {
                    if mode == Mode::Train {
                        let r = rng
                            .as_deref_mut()
                            .ok_or_else(|| Error::training("nn", "train-mode forward needs rng"))?;
                        let keep = 1.0 - rate;
                        let m: Vec<f64> = a
                            .iter()
                            .map(|_| if r.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
                            .collect();
                        let out = a.iter().zip(&m).map(|(v, s)| v * s).collect();
                        mask = Some(m);
                        out
                    } else {
                        a
                    }
                }
                (LayerSpec::Relu, _) => a.iter().map(|v| v.max(0.0)).collect(),
                _ => return Err(Error::shape("layer/params kind mismatch".to_string())),
            };
            tape.masks.push(mask);
            tape.argmax.push(arg);
        }
        Ok((a, tape))
    }

    /// The 3 output activations; deterministic in eval mode.
    pub fn forward(&self, x: &[f64], mode: Mode, rng: Option<&mut ChaCha20Rng>) -> Result<Vec<f64>> {
        Ok(self.forward_tape(x, mode, rng)?.0)
    }

    /// Class with the largest output activation (lowest index on ties).
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        let out = self.forward(x, Mode::Eval, None)?;
        Ok(argmax(&out))
    }

    /// Per-class scores for meta-feature construction (eval-mode activations).
    pub fn scores(&self, x: &[f64]) -> Result<[f64; 3]> {
        let out = self.forward(x, Mode::Eval, None)?;
        Ok([out[0], out[1], out[2]])
    }

    /// Total number of trainable scalars.
    pub fn param_count(&self) -> usize {
        self.params
            .iter()
            .map(|p| match p {
                LayerParams::Dense { w, b } | LayerParams::Conv { w, b } => w.len() + b.len(),
                LayerParams::None => 0,
            })
            .sum()
    }

    /// All parameters as one flat vector (canonical layer order, weights
    /// before biases). Used by the finite-difference harness and the bundle.
    pub fn param_vector(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.param_count());
        for p in &self.params {
            if let LayerParams::Dense { w, b } | LayerParams::Conv { w, b } = p {
                v.extend_from_slice(w);
                v.extend_from_slice(b);
            }
        }
        v
    }

    /// Inverse of `param_vector`.
    pub fn set_param_vector(&mut self, v: &[f64]) -> Result<()> {
        if v.len() != self.param_count() {
            return Err(Error::shape(format!(
                "param vector length {} expected {}",
                v.len(),
                self.param_count()
            )));
        }
        let mut i = 0;
        for p in &mut self.params {
            if let LayerParams::Dense { w, b } | LayerParams::Conv { w, b } = p {
                let wn = w.len();
                w.copy_from_slice(&v[i..i + wn]);
                i += wn;
                let bn = b.len();
                b.copy_from_slice(&v[i..i + bn]);
                i += bn;
            }
        }
        Ok(())
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Softmax cross-entropy loss of raw activations vs a class label.
pub fn softmax_cross_entropy(out: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = out.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = out.iter().map(|v| (v - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    let probs: Vec<f64> = exps.iter().map(|e| e / z).collect();
    let loss = -(probs[label].max(1e-300)).ln();
    // dL/d_activation = p - onehot
    let grad = probs
        .iter()
        .enumerate()
        .map(|(i, &p)| p - if i == label { 1.0 } else { 0.0 })
        .collect();
    (loss, grad)
}

/// Gradients of the batch-mean softmax cross-entropy, flat (same layout as
/// `param_vector`), plus the mean loss. Dropout is sampled from `rng` when
/// `mode` is Train; pass Eval for deterministic gradient checking.
pub fn nn_gradients(
    model: &NnModel,
    batch: &Matrix,
    labels: &[usize],
    mode: Mode,
    mut rng: Option<&mut ChaCha20Rng>,
) -> Result<(Vec<f64>, f64)> {
    if batch.rows() == 0 {
        return Err(Error::data("gradient of empty batch".to_string()));
    }
    if batch.rows() != labels.len() {
        return Err(Error::shape(format!(
            "{} rows vs {} labels",
            batch.rows(),
            labels.len()
        )));
    }
    let mut grads: Vec<LayerParams> = model
        .params
        .iter()
        .map(|p| match p {
            LayerParams::Dense { w, b } => LayerParams::Dense {
                w: vec![0.0; w.len()],
                b: vec![0.0; b.len()],
            },
            LayerParams::Conv { w, b } => LayerParams::Conv {
                w: vec![0.0; w.len()],
                b: vec![0.0; b.len()],
            },
            LayerParams::None => LayerParams::None,
        })
        .collect();
    let mut total_loss = 0.0;
    let n = batch.rows() as f64;

    for r in 0..batch.rows() {
        let (out, tape) = model.forward_tape(batch.row(r), mode, rng.as_deref_mut())?;
        let (loss, out_grad) = softmax_cross_entropy(&out, labels[r]);
        total_loss += loss;
        let mut g = out_grad;

        for i in (0..model.arch.layers.len()).rev() {
            let shape_in = model.arch.shapes[i];
            let input = &tape.inputs[i];
            g = match (&model.arch.layers[i], &model.params[i], &mut grads[i]) {
                (
                    LayerSpec::Dense { in_w, out_w },
                    LayerParams::Dense { w, .. },
                    LayerParams::Dense { w: gw, b: gb },
                ) => {
                    let mut gin = vec![0.0; *in_w];
                    for o in 0..*out_w {
                        let go = g[o];
                        gb[o] += go;
                        let wrow = &w[o * in_w..(o + 1) * in_w];
                        let gwrow = &mut gw[o * in_w..(o + 1) * in_w];
                        for k in 0..*in_w {
                            gwrow[k] += go * input[k];
                            gin[k] += go * wrow[k];
                        }
                    }
                    gin
                }
                (
                    LayerSpec::Conv1d { in_ch, out_ch, kernel },
                    LayerParams::Conv { w, .. },
                    LayerParams::Conv { w: gw, b: gb },
                ) => {
                    let l_in = shape_in.len;
                    let l_out = l_in - kernel + 1;
                    let mut gin = vec![0.0; in_ch * l_in];
                    for o in 0..*out_ch {
                        for t in 0..l_out {
                            let go = g[o * l_out + t];
                            if go == 0.0 {
                                continue;
                            }
                            gb[o] += go;
                            for c in 0..*in_ch {
                                let wbase = (o * in_ch + c) * kernel;
                                let abase = c * l_in + t;
                                for j in 0..*kernel {
                                    gw[wbase + j] += go * input[abase + j];
                                    gin[abase + j] += go * w[wbase + j];
                                }
                            }
                        }
                    }
                    gin
                }
                (LayerSpec::MaxPool { .. }, _, _) => {
                    let mut gin = vec![0.0; shape_in.flat()];
                    let arg = tape.argmax[i].as_ref().unwrap();
                    for (o, &src) in arg.iter().enumerate() {
                        gin[src] += g[o];
                    }
                    gin
                }
                (LayerSpec::Dropout { .. }, _, _) => match &tape.masks[i] {
                    Some(m) => g.iter().zip(m).map(|(gv, s)| gv * s).collect(),
                    None => g,
                },
                (LayerSpec::Relu, _, _) => g
                    .iter()
                    .zip(input)
                    .map(|(gv, &z)| if z > 0.0 { *gv } else { 0.0 })
                    .collect(),
                _ => return Err(Error::shape("layer/params kind mismatch".to_string())),
            };
        }
    }

    // flatten mean gradients in param_vector order
    let mut flat = Vec::with_capacity(model.param_count());
    for gp in &grads {
        if let LayerParams::Dense { w, b } | LayerParams::Conv { w, b } = gp {
            flat.extend(w.iter().map(|v| v / n));
            flat.extend(b.iter().map(|v| v / n));
        }
    }
    Ok((flat, total_loss / n))
}

/// Mini-batch SGD schedule with checkpoint epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub stop_epochs: Vec<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 16,
            learning_rate: 0.01,
            stop_epochs: vec![140, 200, 300],
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be >= 1".to_string()));
        }
        if self.stop_epochs.is_empty() || self.stop_epochs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config(
                "stop epochs must be non-empty and strictly ascending".to_string(),
            ));
        }
        Ok(())
    }
}

/// Per-epoch accuracies and mean loss of one training run.
#[derive(Debug, Clone, Default)]
pub struct LearningCurve {
    pub train_accuracy: Vec<f64>,
    pub validation_accuracy: Vec<f64>,
    pub mean_loss: Vec<f64>,
}

fn accuracy_of(model: &NnModel, x: &Matrix, y: &[usize]) -> Result<f64> {
    if x.rows() == 0 {
        return Ok(0.0);
    }
    let mut hits = 0;
    for r in 0..x.rows() {
        if model.predict(x.row(r))? == y[r] {
            hits += 1;
        }
    }
    Ok(hits as f64 / x.rows() as f64)
}

/// Train with per-epoch seeded reshuffling; capture a model snapshot (with
/// its curve prefix) at every `cfg.stop_epochs` entry.
pub fn nn_train(
    arch: NnArch,
    x: &Matrix,
    y: &[usize],
    cfg: &TrainConfig,
    val_x: &Matrix,
    val_y: &[usize],
) -> Result<Vec<(NnModel, LearningCurve)>> {
    cfg.validate()?;
    if x.rows() == 0 {
        return Err(Error::training("nn", "empty training set"));
    }
    if x.rows() != y.len() {
        return Err(Error::shape(format!("{} rows vs {} labels", x.rows(), y.len())));
    }
    let mut model = NnModel::init(arch, cfg.seed);
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed ^ 0x5eed_d20f);
    let mut curve = LearningCurve::default();
    let mut snapshots = Vec::new();
    let max_epochs = *cfg.stop_epochs.last().unwrap();
    let mut order: Vec<usize> = (0..x.rows()).collect();

    for epoch in 1..=max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let bx = x.select_rows(chunk);
            let by: Vec<usize> = chunk.iter().map(|&i| y[i]).collect();
            let (grad, loss) = nn_gradients(&model, &bx, &by, Mode::Train, Some(&mut rng))?;
            let mut p = model.param_vector();
            for (pi, gi) in p.iter_mut().zip(&grad) {
                *pi -= cfg.learning_rate * gi;
            }
            model.set_param_vector(&p)?;
            epoch_loss += loss;
            batches += 1.0;
        }
        model.epochs_trained = epoch;
        curve.train_accuracy.push(accuracy_of(&model, x, y)?);
        curve.validation_accuracy.push(accuracy_of(&model, val_x, val_y)?);
        curve.mean_loss.push(epoch_loss / batches);
        if !curve.mean_loss.last().unwrap().is_finite() {
            return Err(Error::training("nn", format!("loss diverged at epoch {epoch}")));
        }
        if cfg.stop_epochs.contains(&epoch) {
            let prefix = LearningCurve {
                train_accuracy: curve.train_accuracy.clone(),
                validation_accuracy: curve.validation_accuracy.clone(),
                mean_loss: curve.mean_loss.clone(),
            };
            snapshots.push((model.clone(), prefix));
        }
    }
    Ok(snapshots)
}
