use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Batch, Model, ModelConfig, ModelKind, NnetError, OutputActivation, Precision};

/// Central-difference step.
pub const FD_STEP: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub kind: ModelKind,
    pub seed: u64,
    /// `(tensor, relative error)` pairs.
    pub tensors: Vec<(String, f64)>,
    pub max_rel_error: f64,
}

/// Builds a random tiny model (all dims at most 8, at most 6 frames, two
/// sequences of different length so masking is exercised) in 64-bit mode,
/// and compares its analytic MSE gradients with central differences.
///
/// The error of a tensor is `|a - n| / max(|a|, |n|, 1e-8)` in the
/// Euclidean norm over the whole tensor.
pub fn gradient_check(kind: ModelKind, seed: u64) -> Result<GradCheckReport, NnetError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = match kind {
        ModelKind::Feedforward => rng.random_range(0..=3),
        ModelKind::Recurrent => rng.random_range(1..=2),
    };
    let cfg = ModelConfig {
        kind,
        hidden_layers: layers,
        hidden_width: rng.random_range(1..=8),
        input_dim: rng.random_range(1..=8),
        output_dim: rng.random_range(1..=8),
        output: if rng.random_bool(0.3) {
            OutputActivation::Sigmoid
        } else {
            OutputActivation::Linear
        },
        precision: Precision::F64,
        seed: rng.random(),
    };
    let mut model = Model::new(cfg.clone())?;
    // nonzero biases so their gradients are exercised away from zero
    for p in &mut model.params {
        if p.name.ends_with(".b") {
            p.value.mapv_inplace(|v| v + rng.random_range(-0.5..0.5));
        }
    }
    let t_long = rng.random_range(1..=6);
    let t_short = rng.random_range(1..=t_long);
    let mut seq = |t: usize, d: usize| Array2::from_shape_fn((t, d), |_| rng.random_range(-1.0..1.0));
    let xa = seq(t_long, cfg.input_dim);
    let xb = seq(t_short, cfg.input_dim);
    let batch = Batch::from_sequences(&[xa.view(), xb.view()]);
    let target = Array3::from_shape_fn((2, t_long, cfg.output_dim), |_| rng.random_range(-1.0..1.0));

    let (_, analytic) = model.loss_and_grads(&batch, target.view(), None)?;
    let loss = |m: &Model| -> Result<f64, NnetError> {
        let pred = m.forward(&batch)?;
        Ok(super::mse_loss(pred.view(), target.view(), batch.mask.view())?.0)
    };
    let mut tensors = Vec::with_capacity(model.params.len());
    for (pi, grad) in analytic.iter().enumerate() {
        let mut numeric = Array2::<f64>::zeros(grad.dim());
        for idx in 0..grad.len() {
            let (r, c) = (idx / grad.ncols(), idx % grad.ncols());
            let orig = model.params[pi].value[[r, c]];
            model.params[pi].value[[r, c]] = orig + FD_STEP;
            let plus = loss(&model)?;
            model.params[pi].value[[r, c]] = orig - FD_STEP;
            let minus = loss(&model)?;
            model.params[pi].value[[r, c]] = orig;
            numeric[[r, c]] = (plus - minus) / (2.0 * FD_STEP);
        }
        let norm = |a: &Array2<f64>| a.iter().map(|v| v * v).sum::<f64>().sqrt();
        let diff = norm(&(grad - &numeric));
        let scale = norm(grad).max(norm(&numeric)).max(1e-8);
        tensors.push((model.params[pi].name.clone(), diff / scale));
    }
    let max_rel_error = tensors.iter().map(|t| t.1).fold(0.0, f64::max);
    Ok(GradCheckReport {
        kind,
        seed,
        tensors,
        max_rel_error,
    })
}
