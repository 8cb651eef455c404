use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::AdamConfig;
use super::{adam_step, pad, AdamState, Batch, Grads, Model, ModelConfig, ModelKind, NnetError};

/// One utterance: `T x input_dim` features and `T x output_dim` targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub input: Array2<f64>,
    pub target: Array2<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub train: Vec<Sequence>,
    pub dev: Vec<Sequence>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    #[serde(flatten)]
    pub adam: AdamConfig,
    /// Utterances per update.
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without dev improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Worker threads for the per-batch forward/backward; 1 is bitwise
    /// reproducible.
    pub jobs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            batch_size: 8,
            max_epochs: 25,
            patience: 5,
            seed: 0,
            jobs: 1,
        }
    }
}

impl TrainConfig {
    /// Defaults with the learning rate of the given model kind
    /// (1e-3 feedforward, 5e-4 recurrent).
    pub fn for_kind(kind: ModelKind) -> Self {
        let mut cfg = Self::default();
        if kind == ModelKind::Recurrent {
            cfg.adam.learning_rate = 5e-4;
        }
        cfg
    }

    pub fn validate(&self) -> Result<(), NnetError> {
        let a = &self.adam;
        let bad = |m: &str| Err(NnetError::Config(m.into()));
        if !(a.beta1 > 0.0 && a.beta1 < 1.0 && a.beta2 > 0.0 && a.beta2 < 1.0) {
            return bad("betas must lie in (0, 1)");
        }
        if !(a.learning_rate > 0.0 && a.epsilon > 0.0) {
            return bad("learning rate and epsilon must be positive");
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 || self.jobs == 0 {
            return bad("batch size, epochs, patience and jobs must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// Epoch (1-based) whose parameters were returned.
    pub best_epoch: usize,
    pub best_dev_loss: f64,
    /// Whether patience ran out before `max_epochs`.
    pub stopped_early: bool,
}

fn make_batch(seqs: &[&Sequence]) -> (Batch, ndarray::Array3<f64>) {
    let inputs: Vec<ArrayView2<f64>> = seqs.iter().map(|s| s.input.view()).collect();
    let targets: Vec<ArrayView2<f64>> = seqs.iter().map(|s| s.target.view()).collect();
    let batch = Batch::from_sequences(&inputs);
    let (y, _) = pad(&targets);
    (batch, y)
}

fn check(model: &Model, seqs: &[Sequence], split: &'static str) -> Result<(), NnetError> {
    if seqs.is_empty() {
        return Err(NnetError::EmptySplit(split));
    }
    for s in seqs {
        if s.input.nrows() != s.target.nrows() || s.input.nrows() == 0 {
            return Err(NnetError::Dimension(format!(
                "{split} sequence with {} input and {} target frames",
                s.input.nrows(),
                s.target.nrows()
            )));
        }
        if s.input.ncols() != model.config.input_dim || s.target.ncols() != model.config.output_dim {
            return Err(NnetError::Dimension(format!(
                "{split} sequence is {} -> {}, model is {} -> {}",
                s.input.ncols(),
                s.target.ncols(),
                model.config.input_dim,
                model.config.output_dim
            )));
        }
    }
    Ok(())
}

/// Mean squared error of `model` over all frames of `seqs`.
pub fn evaluate(model: &Model, seqs: &[Sequence], batch_size: usize) -> Result<f64, NnetError> {
    let mut sse = 0.0;
    let mut n = 0usize;
    let refs: Vec<&Sequence> = seqs.iter().collect();
    for chunk in refs.chunks(batch_size.max(1)) {
        let (batch, y) = make_batch(chunk);
        let count = batch.mask.iter().filter(|&&m| m).count() * model.config.output_dim;
        let (loss, _) = super::sse_with_grad(model.forward(&batch)?.view(), y.view(), batch.mask.view(), 1.0)?;
        sse += loss;
        n += count;
    }
    if n == 0 {
        return Err(NnetError::EmptyMask);
    }
    Ok(sse / n as f64)
}

/// Loss and gradients of one batch, split across `pool` workers when it
/// has more than one thread. Partial gradients are summed in chunk order.
fn batch_grads(
    model: &Model,
    seqs: &[&Sequence],
    pool: Option<&rayon::ThreadPool>,
) -> Result<(f64, usize, Grads), NnetError> {
    let total: usize = seqs.iter().map(|s| s.input.nrows()).sum::<usize>() * model.config.output_dim;
    let denom = total as f64;
    let Some(pool) = pool else {
        let (batch, y) = make_batch(seqs);
        let (loss, grads) = model.loss_and_grads(&batch, y.view(), Some(denom))?;
        return Ok((loss, total, grads));
    };
    let workers = pool.current_num_threads().min(seqs.len()).max(1);
    let per = seqs.len().div_ceil(workers);
    let parts: Vec<Result<(f64, Grads), NnetError>> = pool.install(|| {
        seqs.par_chunks(per)
            .map(|chunk| {
                let (batch, y) = make_batch(chunk);
                model.loss_and_grads(&batch, y.view(), Some(denom))
            })
            .collect()
    });
    let mut loss = 0.0;
    let mut grads = model.zero_grads();
    for part in parts {
        let (l, g) = part?;
        loss += l;
        for (acc, gi) in grads.iter_mut().zip(&g) {
            *acc += gi;
        }
    }
    Ok((loss, total, grads))
}

/// Trains from a fresh model; see [`train_with`].
pub fn train(model_cfg: &ModelConfig, cfg: &TrainConfig, data: &Dataset) -> Result<(Model, History), NnetError> {
    train_with(Model::new(model_cfg.clone())?, cfg, data, |_| {})
}

/// Epochs over seeded-shuffled training utterances with one Adam update
/// per batch. After each epoch the dev MSE is measured; the parameters of
/// the best dev epoch are returned, and training stops once `patience`
/// epochs pass without improvement. `on_epoch` sees every record.
pub fn train_with<F: FnMut(&EpochRecord)>(
    mut model: Model,
    cfg: &TrainConfig,
    data: &Dataset,
    mut on_epoch: F,
) -> Result<(Model, History), NnetError> {
    cfg.validate()?;
    check(&model, &data.train, "train")?;
    check(&model, &data.dev, "dev")?;
    let pool = if cfg.jobs > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(cfg.jobs)
                .build()
                .map_err(|e| NnetError::Config(e.to_string()))?,
        )
    } else {
        None
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = AdamState::new(&model);
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let mut history = History {
        best_dev_loss: f64::INFINITY,
        ..History::default()
    };
    let mut best = model.clone();
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut sse = 0.0;
        let mut count = 0usize;
        for idx in order.chunks(cfg.batch_size) {
            let seqs: Vec<&Sequence> = idx.iter().map(|&i| &data.train[i]).collect();
            let (loss, n, grads) = batch_grads(&model, &seqs, pool.as_ref())?;
            sse += loss * n as f64;
            count += n;
            adam_step(&mut model, &grads, &mut state, &cfg.adam)?;
        }
        let dev_loss = evaluate(&model, &data.dev, cfg.batch_size)?;
        let record = EpochRecord {
            epoch,
            train_loss: sse / count as f64,
            dev_loss,
        };
        on_epoch(&record);
        history.epochs.push(record);
        if dev_loss < history.best_dev_loss {
            history.best_dev_loss = dev_loss;
            history.best_epoch = epoch;
            best = model.clone();
        }
        if epoch - history.best_epoch >= cfg.patience {
            history.stopped_early = epoch < cfg.max_epochs;
            break;
        }
    }
    Ok((best, history))
}

/// Stacks every frame of `seqs` into one matrix (for normalizer fits and
/// baselines).
pub fn all_targets(seqs: &[Sequence]) -> Array2<f64> {
    let views: Vec<ArrayView2<f64>> = seqs.iter().map(|s| s.target.view()).collect();
    ndarray::concatenate(Axis(0), &views).unwrap_or_else(|_| Array2::zeros((0, 0)))
}
