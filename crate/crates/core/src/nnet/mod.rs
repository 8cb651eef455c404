//! A small neural-network engine: tanh feedforward stacks and
//! unidirectional LSTMs with a linear (or sigmoid) output layer, MSE
//! training with Adam and early stopping, finite-difference gradient
//! checks and a binary checkpoint format.
//!
//! All arithmetic is done in `f64`. In the default [`Precision::F32`] mode
//! parameters are rounded to `f32` after initialization and every update,
//! so checkpoints (stored as `f32`) reproduce a model bit for bit.

mod adam;
mod checkpoint;
mod dense;
mod gradcheck;
mod lstm;
mod train;

use ndarray::{s, Array2, Array3, ArrayView2, ArrayView3, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::binio::BinError;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{
    load_checkpoint, load_checkpoint_as, read_checkpoint, save_checkpoint, write_checkpoint,
    CHECKPOINT_VERSION,
};
pub use gradcheck::{gradient_check, GradCheckReport, FD_STEP};
pub use train::{
    all_targets, evaluate, train, train_with, Dataset, EpochRecord, History, Sequence, TrainConfig,
};

#[derive(Error, Debug)]
pub enum NnetError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite gradient in {0}")]
    NonFiniteGradient(String),
    #[error("non-finite parameter in {0} after update")]
    NonFiniteParameter(String),
    #[error("loss mask selects no frames")]
    EmptyMask,
    #[error("empty {0} split")]
    EmptySplit(&'static str),
    #[error("checkpoint holds a {found:?} model, expected {expected:?}")]
    KindMismatch { expected: ModelKind, found: ModelKind },
    #[error("checkpoint version {0} is not supported")]
    Version(u32),
    #[error(transparent)]
    Bin(#[from] BinError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Feedforward,
    Recurrent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    #[default]
    Linear,
    Sigmoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub input_dim: usize,
    pub output_dim: usize,
    #[serde(default)]
    pub output: OutputActivation,
    #[serde(default)]
    pub precision: Precision,
    pub seed: u64,
}

impl ModelConfig {
    /// Four tanh layers of 512 units.
    pub fn feedforward(input_dim: usize, output_dim: usize) -> Self {
        Self {
            kind: ModelKind::Feedforward,
            hidden_layers: 4,
            hidden_width: 512,
            input_dim,
            output_dim,
            output: OutputActivation::Linear,
            precision: Precision::F32,
            seed: 0,
        }
    }

    /// Two LSTM layers of 512 units.
    pub fn recurrent(input_dim: usize, output_dim: usize) -> Self {
        Self {
            kind: ModelKind::Recurrent,
            hidden_layers: 2,
            ..Self::feedforward(input_dim, output_dim)
        }
    }

    pub fn validate(&self) -> Result<(), NnetError> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(NnetError::Config("input and output dims must be positive".into()));
        }
        if self.hidden_layers > 0 && self.hidden_width == 0 {
            return Err(NnetError::Config("hidden width must be positive".into()));
        }
        if self.kind == ModelKind::Recurrent && self.hidden_layers == 0 {
            return Err(NnetError::Config("a recurrent model needs at least one layer".into()));
        }
        Ok(())
    }
}

/// Zero-padded batch of sequences, `B x T x D`, with a `B x T` validity
/// mask. Padding only ever follows a sequence's last frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub x: Array3<f64>,
    pub mask: Array2<bool>,
}

impl Batch {
    pub fn from_sequences(seqs: &[ArrayView2<f64>]) -> Self {
        let (x, mask) = pad(seqs);
        Self { x, mask }
    }

    pub fn n_seqs(&self) -> usize {
        self.x.len_of(Axis(0))
    }

    pub fn n_steps(&self) -> usize {
        self.x.len_of(Axis(1))
    }

    pub fn lengths(&self) -> Vec<usize> {
        self.mask
            .rows()
            .into_iter()
            .map(|r| r.iter().filter(|&&m| m).count())
            .collect()
    }
}

/// Pads sequences of equal width into `B x T x D` plus the validity mask.
pub fn pad(seqs: &[ArrayView2<f64>]) -> (Array3<f64>, Array2<bool>) {
    let b = seqs.len();
    let t = seqs.iter().map(|s| s.nrows()).max().unwrap_or(0);
    let d = seqs.first().map(|s| s.ncols()).unwrap_or(0);
    let mut x = Array3::zeros((b, t, d));
    let mut mask = Array2::from_elem((b, t), false);
    for (i, s) in seqs.iter().enumerate() {
        assert_eq!(s.ncols(), d, "sequences differ in width");
        x.slice_mut(s![i, ..s.nrows(), ..]).assign(s);
        mask.slice_mut(s![i, ..s.nrows()]).fill(true);
    }
    (x, mask)
}

/// `B x T x D` to time-major rows `t * B + b`.
pub(crate) fn to_time_major(x: ArrayView3<f64>) -> Array2<f64> {
    let (b, t, d) = x.dim();
    let mut out = Array2::zeros((t * b, d));
    for ti in 0..t {
        for bi in 0..b {
            out.row_mut(ti * b + bi).assign(&x.slice(s![bi, ti, ..]));
        }
    }
    out
}

pub(crate) fn from_time_major(x: ArrayView2<f64>, b: usize, t: usize) -> Array3<f64> {
    let d = x.ncols();
    let mut out = Array3::zeros((b, t, d));
    for ti in 0..t {
        for bi in 0..b {
            out.slice_mut(s![bi, ti, ..]).assign(&x.row(ti * b + bi));
        }
    }
    out
}

/// Mean squared error over the unmasked frame elements and its gradient
/// `2 (pred - target) / N` (zero on masked frames).
pub fn mse_loss(
    pred: ArrayView3<f64>,
    target: ArrayView3<f64>,
    mask: ArrayView2<bool>,
) -> Result<(f64, Array3<f64>), NnetError> {
    let n = mask.iter().filter(|&&m| m).count() * pred.len_of(Axis(2));
    if n == 0 {
        return Err(NnetError::EmptyMask);
    }
    let (sum, grad) = sse_with_grad(pred, target, mask, n as f64)?;
    Ok((sum / n as f64, grad))
}

/// Sum of squared errors on unmasked frames and the gradient of
/// `sum / denom`.
pub(crate) fn sse_with_grad(
    pred: ArrayView3<f64>,
    target: ArrayView3<f64>,
    mask: ArrayView2<bool>,
    denom: f64,
) -> Result<(f64, Array3<f64>), NnetError> {
    if pred.dim() != target.dim() || pred.dim().0 != mask.dim().0 || pred.dim().1 != mask.dim().1 {
        return Err(NnetError::Dimension(format!(
            "prediction {:?}, target {:?}, mask {:?}",
            pred.dim(),
            target.dim(),
            mask.dim()
        )));
    }
    let mut grad = Array3::zeros(pred.dim());
    let mut sum = 0.0;
    for ((b, t), &m) in mask.indexed_iter() {
        if !m {
            continue;
        }
        let p = pred.slice(s![b, t, ..]);
        let y = target.slice(s![b, t, ..]);
        let mut g = grad.slice_mut(s![b, t, ..]);
        for k in 0..p.len() {
            let e = p[k] - y[k];
            sum += e * e;
            g[k] = 2.0 * e / denom;
        }
    }
    Ok((sum, grad))
}

/// A named parameter tensor. Biases are `1 x n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: Vec<Param>,
}

/// Gradients in the order of [`Model::params`].
pub type Grads = Vec<Array2<f64>>;

fn glorot(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize, shape: (usize, usize)) -> Array2<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Array2::from_shape_fn(shape, |_| rng.random_range(-limit..limit))
}

impl Model {
    /// Glorot-uniform weights, zero biases, forget-gate biases of 1.
    pub fn new(config: ModelConfig) -> Result<Self, NnetError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = Vec::new();
        let h = config.hidden_width;
        let mut width = config.input_dim;
        for l in 0..config.hidden_layers {
            match config.kind {
                ModelKind::Feedforward => {
                    params.push(Param {
                        name: format!("ff{l}.w"),
                        value: glorot(&mut rng, width, h, (width, h)),
                    });
                    params.push(Param {
                        name: format!("ff{l}.b"),
                        value: Array2::zeros((1, h)),
                    });
                }
                ModelKind::Recurrent => {
                    params.push(Param {
                        name: format!("lstm{l}.wx"),
                        value: glorot(&mut rng, width, h, (width, 4 * h)),
                    });
                    params.push(Param {
                        name: format!("lstm{l}.wh"),
                        value: glorot(&mut rng, h, h, (h, 4 * h)),
                    });
                    let mut b = Array2::zeros((1, 4 * h));
                    b.slice_mut(s![0, h..2 * h]).fill(1.0);
                    params.push(Param {
                        name: format!("lstm{l}.b"),
                        value: b,
                    });
                }
            }
            width = h;
        }
        params.push(Param {
            name: "out.w".into(),
            value: glorot(&mut rng, width, config.output_dim, (width, config.output_dim)),
        });
        params.push(Param {
            name: "out.b".into(),
            value: Array2::zeros((1, config.output_dim)),
        });
        let mut model = Self { config, params };
        model.round_to_precision();
        Ok(model)
    }

    pub fn kind(&self) -> ModelKind {
        self.config.kind
    }

    pub fn n_parameters(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grads(&self) -> Grads {
        self.params.iter().map(|p| Array2::zeros(p.value.dim())).collect()
    }

    pub(crate) fn round_to_precision(&mut self) {
        if self.config.precision == Precision::F32 {
            for p in &mut self.params {
                p.value.mapv_inplace(|v| v as f32 as f64);
            }
        }
    }

    /// Expected shape of every parameter, in order.
    pub(crate) fn expected_shapes(config: &ModelConfig) -> Result<Vec<(String, (usize, usize))>, NnetError> {
        Ok(Model::new(config.clone())?
            .params
            .into_iter()
            .map(|p| (p.name, p.value.dim()))
            .collect())
    }

    fn check_input(&self, batch: &Batch) -> Result<(), NnetError> {
        let d = batch.x.len_of(Axis(2));
        if d != self.config.input_dim {
            return Err(NnetError::Dimension(format!(
                "input has {d} features, model expects {}",
                self.config.input_dim
            )));
        }
        if batch.mask.dim() != (batch.n_seqs(), batch.n_steps()) {
            return Err(NnetError::Dimension("mask shape differs from input".into()));
        }
        Ok(())
    }

    /// `B x T x output_dim` predictions. Masked frames are computed but
    /// meaningless.
    pub fn forward(&self, batch: &Batch) -> Result<Array3<f64>, NnetError> {
        Ok(self.forward_cached(batch)?.0)
    }

    /// Predictions for one unpadded sequence.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, NnetError> {
        let batch = Batch::from_sequences(&[x]);
        Ok(self.forward(&batch)?.index_axis_move(Axis(0), 0))
    }

    fn forward_cached(&self, batch: &Batch) -> Result<(Array3<f64>, CacheWithTop), NnetError> {
        self.check_input(batch)?;
        let (b, t) = (batch.n_seqs(), batch.n_steps());
        let x = to_time_major(batch.x.view());
        let (hidden, cache) = match self.config.kind {
            ModelKind::Feedforward => {
                let (h, c) = dense::forward_stack(&self.params, self.config.hidden_layers, x);
                (h, Cache::Dense(c))
            }
            ModelKind::Recurrent => {
                let (h, c) = lstm::forward_stack(&self.params, self.config.hidden_layers, x, b);
                (h, Cache::Lstm(c))
            }
        };
        let n = self.params.len();
        let mut out = hidden.dot(&self.params[n - 2].value) + &self.params[n - 1].value;
        if self.config.output == OutputActivation::Sigmoid {
            out.mapv_inplace(sigmoid);
        }
        let pred = from_time_major(out.view(), b, t);
        Ok((pred, cache.with_top(hidden, out)))
    }

    /// Parameter gradients of a scalar loss whose gradient with respect to
    /// the predictions is `dpred` (`B x T x output_dim`).
    pub fn backward(&self, batch: &Batch, dpred: ArrayView3<f64>) -> Result<Grads, NnetError> {
        let (pred, cache) = self.forward_cached(batch)?;
        if dpred.dim() != pred.dim() {
            return Err(NnetError::Dimension(format!(
                "loss gradient {:?} for predictions {:?}",
                dpred.dim(),
                pred.dim()
            )));
        }
        Ok(self.backward_cached(batch, cache, dpred))
    }

    fn backward_cached(&self, batch: &Batch, cache: CacheWithTop, dpred: ArrayView3<f64>) -> Grads {
        let b = batch.n_seqs();
        let mut grads = self.zero_grads();
        let n = self.params.len();
        let mut dout = to_time_major(dpred);
        if self.config.output == OutputActivation::Sigmoid {
            dout.zip_mut_with(&cache.out, |g, &y| *g *= y * (1.0 - y));
        }
        grads[n - 2] = cache.hidden.t().dot(&dout);
        grads[n - 1] = dout.sum_axis(Axis(0)).insert_axis(Axis(0));
        let dh = dout.dot(&self.params[n - 2].value.t());
        match cache.inner {
            Cache::Dense(c) => {
                dense::backward_stack(&self.params, self.config.hidden_layers, &c, dh, &mut grads)
            }
            Cache::Lstm(c) => {
                lstm::backward_stack(&self.params, self.config.hidden_layers, &c, dh, b, &mut grads)
            }
        }
        grads
    }

    /// MSE loss over the unmasked frames of `batch` and its parameter
    /// gradients. `denom` overrides the element count used for averaging.
    pub(crate) fn loss_and_grads(
        &self,
        batch: &Batch,
        target: ArrayView3<f64>,
        denom: Option<f64>,
    ) -> Result<(f64, Grads), NnetError> {
        let (pred, cache) = self.forward_cached(batch)?;
        let n = batch.mask.iter().filter(|&&m| m).count() * self.config.output_dim;
        if n == 0 {
            return Err(NnetError::EmptyMask);
        }
        let denom = denom.unwrap_or(n as f64);
        let (sse, dpred) = sse_with_grad(pred.view(), target, batch.mask.view(), denom)?;
        Ok((sse / denom, self.backward_cached(batch, cache, dpred.view())))
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

enum Cache {
    Dense(dense::StackCache),
    Lstm(lstm::StackCache),
}

struct CacheWithTop {
    inner: Cache,
    hidden: Array2<f64>,
    out: Array2<f64>,
}

impl Cache {
    fn with_top(self, hidden: Array2<f64>, out: Array2<f64>) -> CacheWithTop {
        CacheWithTop {
            inner: self,
            hidden,
            out,
        }
    }
}
