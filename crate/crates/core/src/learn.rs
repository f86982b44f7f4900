//! The learned local planner: a ReLU multilayer perceptron mapping
//! (scan, local goal, current velocity) to a bounded velocity command, trained
//! with hand-written backpropagation and Adam.

use std::fs;
use std::io::Read;
use std::path::Path;

use ndarray::{Array1, Array2, Axis, NdFloat};
use num_traits::{FromPrimitive, ToPrimitive};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Configuration, Point};
use crate::halluc::TrainSample;
use crate::sim::{Command, Scan};

pub const BEAMS: usize = 720;
pub const INPUT_DIM: usize = BEAMS + 4;
pub const HIDDEN: [usize; 3] = [256, 256, 256];
pub const OUTPUT_DIM: usize = 2;
pub const ARCHITECTURE: &str = "mlp-724-256-256-256-2-relu";
const MAGIC: &[u8; 8] = b"HNAVW001";

/// Float type a network can be evaluated and trained in.
pub trait Element: NdFloat + FromPrimitive + ToPrimitive {
    const TAG: &'static str;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
    const WIDTH: usize;

    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("representable")
    }
}

impl Element for f32 {
    const TAG: &'static str = "f32";
    const WIDTH: usize = 4;
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }
}

impl Element for f64 {
    const TAG: &'static str = "f64";
    const WIDTH: usize = 8;
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }
}

/// Output squashing ranges: v in [0, v_max], omega in [-omega_max, omega_max].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutputScale {
    pub v_max: f64,
    pub omega_max: f64,
}

impl Default for OutputScale {
    fn default() -> Self {
        Self { v_max: 1.0, omega_max: 1.57 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense<F> {
    /// Shape (fan_in, fan_out).
    pub w: Array2<F>,
    pub b: Array1<F>,
}

/// Per-feature affine map applied before the first layer: `(x - shift) * gain`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputNorm {
    pub shift: Vec<f64>,
    pub gain: Vec<f64>,
}

/// Features whose spread in the training set is below this are not amplified
/// further; otherwise sensor noise on a near-constant beam would dominate.
pub const MIN_FEATURE_STD: f64 = 0.05;

impl InputNorm {
    pub fn identity(dim: usize) -> Self {
        Self { shift: vec![0.0; dim], gain: vec![1.0; dim] }
    }

    /// Standardizes every feature to zero mean and unit spread over `data`.
    /// Inputs of a purely positive range scan otherwise push all first-layer
    /// weights of a unit the same way under Adam and kill whole layers.
    pub fn fit(data: &[TrainSample], layout: &FeatureLayout) -> Result<Self> {
        let mut sum = vec![0.0f64; INPUT_DIM];
        let mut sum_sq = vec![0.0f64; INPUT_DIM];
        let mut feats: Vec<f64> = Vec::with_capacity(INPUT_DIM);
        for s in data {
            feats.clear();
            layout.sample_features(s, &mut feats)?;
            for (k, &x) in feats.iter().enumerate() {
                sum[k] += x;
                sum_sq[k] += x * x;
            }
        }
        let n = data.len().max(1) as f64;
        let shift: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let gain = sum_sq
            .iter()
            .zip(&shift)
            .map(|(sq, m)| 1.0 / (sq / n - m * m).max(0.0).sqrt().max(MIN_FEATURE_STD))
            .collect();
        Ok(Self { shift, gain })
    }
}

/// Fully connected ReLU network with a squashed two-dimensional output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<F> {
    pub norm: InputNorm,
    pub layers: Vec<Dense<F>>,
    pub scale: OutputScale,
}

/// Cached activations of a batch forward pass.
pub struct ForwardPass<F> {
    /// Inputs to every layer (`acts[0]` is the feature batch).
    acts: Vec<Array2<F>>,
    /// Output pre-activations, shape (n, 2).
    pub raw: Array2<F>,
    /// Decoded commands, shape (n, 2).
    pub decoded: Array2<F>,
}

fn sigmoid<F: Element>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

impl<F: Element> Mlp<F> {
    pub fn zeros(dims: &[usize]) -> Self {
        let layers = dims
            .windows(2)
            .map(|d| Dense { w: Array2::zeros((d[0], d[1])), b: Array1::zeros(d[1]) })
            .collect();
        Self { norm: InputNorm::identity(dims[0]), layers, scale: OutputScale::default() }
    }

    /// He-initialised network: weights ~ N(0, gain / fan_in), zero biases.
    /// The output layer uses `output_gain` instead.
    pub fn init(dims: &[usize], gain: f64, output_gain: f64, rng: &mut ChaCha8Rng) -> Self {
        let mut net = Self::zeros(dims);
        let last = net.layers.len() - 1;
        for (k, layer) in net.layers.iter_mut().enumerate() {
            let g = if k == last { output_gain } else { gain };
            let std = (g / layer.w.nrows() as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("valid std");
            layer.w.mapv_inplace(|_| F::of(normal.sample(rng)));
        }
        net
    }

    pub fn standard(gain: f64, output_gain: f64, rng: &mut ChaCha8Rng) -> Self {
        Self::init(&standard_dims(), gain, output_gain, rng)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.nrows()
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.input_dim()];
        d.extend(self.layers.iter().map(|l| l.w.ncols()));
        d
    }

    pub fn forward_batch(&self, x: &Array2<F>) -> Result<ForwardPass<F>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), actual: x.ncols() });
        }
        let last = self.layers.len() - 1;
        let mut acts = Vec::with_capacity(self.layers.len());
        let shift = Array1::from_iter(self.norm.shift.iter().map(|&v| F::of(v)));
        let gain = Array1::from_iter(self.norm.gain.iter().map(|&v| F::of(v)));
        let mut a = (x - &shift) * &gain;
        for layer in &self.layers[..last] {
            let mut z = a.dot(&layer.w);
            z += &layer.b;
            z.mapv_inplace(|v| v.max(F::zero()));
            acts.push(a);
            a = z;
        }
        let mut raw = a.dot(&self.layers[last].w);
        raw += &self.layers[last].b;
        acts.push(a);
        let mut decoded = raw.clone();
        let (vmax, wmax) = (F::of(self.scale.v_max), F::of(self.scale.omega_max));
        for mut row in decoded.rows_mut() {
            row[0] = sigmoid(row[0]) * vmax;
            row[1] = row[1].tanh() * wmax;
        }
        Ok(ForwardPass { acts, raw, decoded })
    }

    /// Raw outputs and decoded command for one feature vector.
    pub fn forward(&self, features: &[F]) -> Result<([F; 2], Command)> {
        if features.len() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), actual: features.len() });
        }
        let x = Array2::from_shape_vec((1, features.len()), features.to_vec()).expect("shape");
        let pass = self.forward_batch(&x)?;
        let raw = [pass.raw[[0, 0]], pass.raw[[0, 1]]];
        let cmd = Command::new(
            pass.decoded[[0, 0]].to_f64().unwrap_or(f64::NAN),
            pass.decoded[[0, 1]].to_f64().unwrap_or(f64::NAN),
        );
        Ok((raw, cmd))
    }

    /// Mean squared error between decoded outputs and labels, with gradients
    /// for every layer.
    pub fn loss_and_grads(&self, x: &Array2<F>, y: &Array2<F>) -> Result<(f64, Vec<Dense<F>>)> {
        let pass = self.forward_batch(x)?;
        let n = x.nrows();
        let count = F::of((n * OUTPUT_DIM) as f64);
        let diff = &pass.decoded - y;
        let loss = diff.iter().map(|d| (*d * *d).to_f64().unwrap_or(f64::NAN)).sum::<f64>()
            / (n * OUTPUT_DIM) as f64;

        // dL/d(decoded) = 2 diff / count, then through the squashing functions.
        let two = F::of(2.0);
        let (vmax, wmax) = (F::of(self.scale.v_max), F::of(self.scale.omega_max));
        let mut delta = diff.mapv(|d| two * d / count);
        for (mut row, raw) in delta.rows_mut().into_iter().zip(pass.raw.rows()) {
            let s = sigmoid(raw[0]);
            row[0] = row[0] * vmax * s * (F::one() - s);
            let t = raw[1].tanh();
            row[1] = row[1] * wmax * (F::one() - t * t);
        }

        let mut grads: Vec<Dense<F>> = Vec::with_capacity(self.layers.len());
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let input = &pass.acts[k];
            let gw = input.t().dot(&delta);
            let gb = delta.sum_axis(Axis(0));
            if k > 0 {
                let mut back = delta.dot(&layer.w.t());
                // ReLU derivative: the layer input is positive exactly where the
                // previous pre-activation was.
                back.zip_mut_with(input, |d, &a| {
                    if a <= F::zero() {
                        *d = F::zero();
                    }
                });
                delta = back;
            }
            grads.push(Dense { w: gw, b: gb });
        }
        grads.reverse();
        Ok((loss, grads))
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.w.iter().chain(l.b.iter()).all(|v| v.is_finite()))
    }

    pub fn cast<G: Element>(&self) -> Mlp<G> {
        let conv = |v: &F| G::of(v.to_f64().unwrap_or(f64::NAN));
        Mlp {
            layers: self.layers.iter().map(|l| Dense { w: l.w.map(conv), b: l.b.map(conv) }).collect(),
            norm: self.norm.clone(),
            scale: self.scale,
        }
    }
}

pub fn standard_dims() -> Vec<usize> {
    let mut d = vec![INPUT_DIM];
    d.extend(HIDDEN);
    d.push(OUTPUT_DIM);
    d
}

/// How raw perception is packed into the network input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureLayout {
    /// Ranges are clipped to this value before entering the network.
    pub range_clip: f64,
    /// When false the velocity slots are fed zeros.
    pub use_velocity: bool,
}

impl Default for FeatureLayout {
    fn default() -> Self {
        Self { range_clip: 1.0, use_velocity: true }
    }
}

impl FeatureLayout {
    pub fn write<F: Element>(
        &self,
        ranges: impl ExactSizeIterator<Item = f64>,
        goal: [f64; 2],
        vel: [f64; 2],
        out: &mut Vec<F>,
    ) -> Result<()> {
        if ranges.len() != BEAMS {
            return Err(Error::DimensionMismatch { expected: BEAMS, actual: ranges.len() });
        }
        out.extend(ranges.map(|r| F::of(r.min(self.range_clip))));
        out.push(F::of(goal[0]));
        out.push(F::of(goal[1]));
        let (v, w) = if self.use_velocity { (vel[0], vel[1]) } else { (0.0, 0.0) };
        out.push(F::of(v));
        out.push(F::of(w));
        Ok(())
    }

    pub fn sample_features<F: Element>(&self, s: &TrainSample, out: &mut Vec<F>) -> Result<()> {
        self.write(s.scan.iter().map(|&r| r as f64), s.goal_rel, s.vel_in, out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// He initialisation gain: weight variance = gain / fan_in.
    pub init_gain: f64,
    /// Output layer variance gain. Small, so the squashed outputs start in
    /// their linear range; full-batch Adam steps otherwise saturate tanh
    /// before the hidden features separate the samples.
    pub output_init_gain: f64,
    pub layout: FeatureLayout,
}

impl Default for Hyper {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 128,
            epochs: 50,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            init_gain: 2.0,
            output_init_gain: 0.02,
            layout: FeatureLayout::default(),
        }
    }
}

impl Hyper {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.batch_size >= 1
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0
            && self.init_gain > 0.0
            && self.output_init_gain > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("hyperparameters {self:?}")))
        }
    }
}

struct Adam<F> {
    m: Vec<Dense<F>>,
    v: Vec<Dense<F>>,
    step: i32,
}

impl<F: Element> Adam<F> {
    fn new(net: &Mlp<F>) -> Self {
        let zeros = || {
            net.layers
                .iter()
                .map(|l| Dense { w: Array2::zeros(l.w.raw_dim()), b: Array1::zeros(l.b.raw_dim()) })
                .collect()
        };
        Self { m: zeros(), v: zeros(), step: 0 }
    }

    fn update(&mut self, net: &mut Mlp<F>, grads: &[Dense<F>], h: &Hyper) {
        self.step += 1;
        let (b1, b2) = (F::of(h.beta1), F::of(h.beta2));
        let (c1, c2) = (F::one() - b1, F::one() - b2);
        let lr = F::of(h.learning_rate * (1.0 - h.beta2.powi(self.step)).sqrt()
            / (1.0 - h.beta1.powi(self.step)));
        let eps = F::of(h.epsilon);
        for (k, g) in grads.iter().enumerate() {
            let layer = &mut net.layers[k];
            let apply = |p: &mut F, m: &mut F, v: &mut F, g: F| {
                *m = b1 * *m + c1 * g;
                *v = b2 * *v + c2 * g * g;
                *p -= lr * *m / (v.sqrt() + eps);
            };
            ndarray::Zip::from(&mut layer.w)
                .and(&mut self.m[k].w)
                .and(&mut self.v[k].w)
                .and(&g.w)
                .for_each(|p, m, v, &g| apply(p, m, v, g));
            ndarray::Zip::from(&mut layer.b)
                .and(&mut self.m[k].b)
                .and(&mut self.v[k].b)
                .and(&g.b)
                .for_each(|p, m, v, &g| apply(p, m, v, g));
        }
    }
}

pub struct TrainOutcome<F> {
    pub net: Mlp<F>,
    /// Mean training loss of every epoch.
    pub loss_trace: Vec<f64>,
}

fn batch_arrays<F: Element>(
    data: &[TrainSample],
    idx: &[usize],
    layout: &FeatureLayout,
) -> Result<(Array2<F>, Array2<F>)> {
    let mut xs: Vec<F> = Vec::with_capacity(idx.len() * INPUT_DIM);
    let mut ys: Vec<F> = Vec::with_capacity(idx.len() * OUTPUT_DIM);
    for &i in idx {
        let s = &data[i];
        layout.sample_features(s, &mut xs)?;
        ys.push(F::of(s.label.v));
        ys.push(F::of(s.label.omega));
    }
    let x = Array2::from_shape_vec((idx.len(), INPUT_DIM), xs).expect("feature shape");
    let y = Array2::from_shape_vec((idx.len(), OUTPUT_DIM), ys).expect("label shape");
    Ok((x, y))
}

/// Fits the standard network to `data` by minibatch Adam on squared command error.
pub fn train<F: Element>(data: &[TrainSample], hyper: &Hyper) -> Result<TrainOutcome<F>> {
    hyper.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut net = Mlp::<F>::standard(hyper.init_gain, hyper.output_init_gain, &mut rng);
    net.norm = InputNorm::fit(data, &hyper.layout)?;
    let mut adam = Adam::new(&net);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut loss_trace = Vec::with_capacity(hyper.epochs);
    let mut last_loss = f64::NAN;
    for epoch in 0..hyper.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (batch, idx) in order.chunks(hyper.batch_size).enumerate() {
            let (x, y) = batch_arrays::<F>(data, idx, &hyper.layout)?;
            let (loss, grads) = net.loss_and_grads(&x, &y)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch, last_loss });
            }
            last_loss = loss;
            total += loss * idx.len() as f64;
            adam.update(&mut net, &grads, hyper);
        }
        loss_trace.push(total / data.len() as f64);
    }
    if !net.is_finite() {
        return Err(Error::NonFiniteLoss { epoch: hyper.epochs, batch: 0, last_loss });
    }
    Ok(TrainOutcome { net, loss_trace })
}

/// Mean squared command error of `net` over `data`.
pub fn evaluate_mse<F: Element>(net: &Mlp<F>, data: &[TrainSample], layout: &FeatureLayout) -> Result<f64> {
    let idx: Vec<usize> = (0..data.len()).collect();
    let mut total = 0.0;
    for chunk in idx.chunks(512) {
        let (x, y) = batch_arrays::<F>(data, chunk, layout)?;
        let pass = net.forward_batch(&x)?;
        total += (&pass.decoded - &y).iter().map(|d| d.to_f64().unwrap().powi(2)).sum::<f64>();
    }
    Ok(total / (data.len() * OUTPUT_DIM) as f64)
}

/// Metadata stored alongside the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelHeader {
    pub architecture: String,
    pub dtype: String,
    pub dims: Vec<usize>,
    pub scale: OutputScale,
    pub input_norm: InputNorm,
    pub layout: FeatureLayout,
    pub hyper: Hyper,
    pub dataset_digest: String,
    pub loss_trace: Vec<f64>,
}

/// A trained planner ready for deployment.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub net: Mlp<f32>,
    pub header: ModelHeader,
}

impl Policy {
    pub fn new(net: Mlp<f32>, hyper: Hyper, dataset_digest: String, loss_trace: Vec<f64>) -> Self {
        let header = ModelHeader {
            architecture: ARCHITECTURE.to_string(),
            dtype: f32::TAG.to_string(),
            dims: net.dims(),
            scale: net.scale,
            input_norm: net.norm.clone(),
            layout: hyper.layout,
            hyper,
            dataset_digest,
            loss_trace,
        };
        Self { net, header }
    }

    pub fn layout(&self) -> &FeatureLayout {
        &self.header.layout
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header)?;
        let mut out = Vec::with_capacity(16 + header.len() + 4 * 400_000);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for layer in &self.net.layers {
            // Standard layout arrays iterate in row-major order.
            for &v in layer.w.iter() {
                v.write_le(&mut out);
            }
            for &v in layer.b.iter() {
                v.write_le(&mut out);
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| Error::Format(format!("weights file: {msg}"));
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("bad magic"));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body_start = 16usize.checked_add(hlen).filter(|&e| e <= bytes.len()).ok_or_else(|| bad("truncated header"))?;
        let header: ModelHeader = serde_json::from_slice(&bytes[16..body_start])?;
        if header.architecture != ARCHITECTURE || header.dtype != f32::TAG {
            return Err(bad("unsupported architecture"));
        }
        if header.dims.len() < 2 {
            return Err(bad("too few layers"));
        }
        let mut net = Mlp::<f32>::zeros(&header.dims);
        net.scale = header.scale;
        if header.input_norm.shift.len() != header.dims[0] || header.input_norm.gain.len() != header.dims[0] {
            return Err(bad("input normalization does not match the input width"));
        }
        net.norm = header.input_norm.clone();
        let mut rest = &bytes[body_start..];
        let mut take = |n: usize| -> Result<Vec<f32>> {
            let len = n * f32::WIDTH;
            if rest.len() < len {
                return Err(bad("truncated weights"));
            }
            let (head, tail) = rest.split_at(len);
            rest = tail;
            Ok(head.chunks_exact(f32::WIDTH).map(f32::read_le).collect())
        };
        for layer in &mut net.layers {
            let shape = layer.w.raw_dim();
            layer.w = Array2::from_shape_vec(shape, take(layer.w.len())?).expect("shape");
            layer.b = Array1::from(take(layer.b.len())?);
        }
        if !rest.is_empty() {
            return Err(bad("trailing bytes"));
        }
        if !net.is_finite() {
            return Err(bad("non-finite weights"));
        }
        Ok(Self { net, header })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut buf = Vec::new();
        fs::File::open(path)?.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }

    pub fn predict_action(&self, scan: &Scan, goal_rel: Point, vel_in: [f64; 2]) -> Result<Command> {
        let mut feats: Vec<f32> = Vec::with_capacity(INPUT_DIM);
        self.layout().write(scan.ranges.iter().copied(), [goal_rel.x, goal_rel.y], vel_in, &mut feats)?;
        Ok(self.net.forward(&feats)?.1)
    }
}

/// Goal position in the robot frame.
pub fn goal_in_robot_frame(pose: &Configuration, goal: Point) -> Point {
    pose.to_local(goal)
}
