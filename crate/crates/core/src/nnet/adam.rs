use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use super::{Grads, Model, NnetError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates, one pair per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Array2<f64>>,
    pub v: Vec<Array2<f64>>,
    pub step: u64,
}

impl AdamState {
    pub fn new(model: &Model) -> Self {
        Self {
            m: model.zero_grads(),
            v: model.zero_grads(),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update. Non-finite gradients abort the step
/// before anything is modified.
pub fn adam_step(model: &mut Model, grads: &Grads, state: &mut AdamState, cfg: &AdamConfig) -> Result<(), NnetError> {
    if grads.len() != model.params.len() {
        return Err(NnetError::Dimension(format!(
            "{} gradients for {} parameters",
            grads.len(),
            model.params.len()
        )));
    }
    for (p, g) in model.params.iter().zip(grads) {
        if p.value.dim() != g.dim() {
            return Err(NnetError::Dimension(format!("gradient of {} has shape {:?}", p.name, g.dim())));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(NnetError::NonFiniteGradient(p.name.clone()));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for ((p, g), (m, v)) in model
        .params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        Zip::from(&mut p.value)
            .and(g)
            .and(m)
            .and(v)
            .for_each(|w, &g, m, v| {
                *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                let mh = *m / c1;
                let vh = *v / c2;
                *w -= cfg.learning_rate * mh / (vh.sqrt() + cfg.epsilon);
            });
    }
    model.round_to_precision();
    if let Some(p) = model.params.iter().find(|p| p.value.iter().any(|v| !v.is_finite())) {
        return Err(NnetError::NonFiniteParameter(p.name.clone()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::{ModelConfig, ModelKind, OutputActivation, Param, Precision};

    fn one_param(w: f64) -> Model {
        Model {
            config: ModelConfig {
                kind: ModelKind::Feedforward,
                hidden_layers: 0,
                hidden_width: 0,
                input_dim: 1,
                output_dim: 1,
                output: OutputActivation::Linear,
                precision: Precision::F64,
                seed: 0,
            },
            params: vec![Param {
                name: "w".into(),
                value: Array2::from_elem((1, 1), w),
            }],
        }
    }

    #[test]
    fn zero_gradients_leave_parameters() {
        let mut m = one_param(0.7);
        let mut st = AdamState::new(&m);
        for _ in 0..3 {
            adam_step(&mut m, &vec![Array2::zeros((1, 1))], &mut st, &AdamConfig::default()).unwrap();
        }
        assert_eq!(m.params[0].value[[0, 0]], 0.7);
    }

    #[test]
    fn first_step_moves_by_about_the_learning_rate() {
        let cfg = AdamConfig::default();
        for g in [1e-3, 0.5, -20.0] {
            let mut m = one_param(0.0);
            let mut st = AdamState::new(&m);
            adam_step(&mut m, &vec![Array2::from_elem((1, 1), g)], &mut st, &cfg).unwrap();
            let delta = m.params[0].value[[0, 0]];
            // bias correction makes m_hat = g and v_hat = g^2
            let expected = -cfg.learning_rate * g / (g.abs() + cfg.epsilon);
            assert!((delta - expected).abs() < 1e-15);
            assert!(delta.abs() <= cfg.learning_rate * (1.0 + 1e-12));
        }
    }

    #[test]
    fn two_steps_differ_from_one_doubled_step() {
        let cfg = AdamConfig::default();
        let g = vec![Array2::from_elem((1, 1), 0.3)];
        let mut a = one_param(1.0);
        let mut sa = AdamState::new(&a);
        adam_step(&mut a, &g, &mut sa, &cfg).unwrap();
        adam_step(&mut a, &g, &mut sa, &cfg).unwrap();
        let mut b = one_param(1.0);
        let mut sb = AdamState::new(&b);
        let g2 = vec![Array2::from_elem((1, 1), 0.6)];
        adam_step(&mut b, &g2, &mut sb, &cfg).unwrap();
        assert_ne!(a.params[0].value[[0, 0]], b.params[0].value[[0, 0]]);
    }

    #[test]
    fn non_finite_gradient_is_rejected_untouched() {
        let mut m = one_param(0.2);
        let mut st = AdamState::new(&m);
        let err = adam_step(&mut m, &vec![Array2::from_elem((1, 1), f64::NAN)], &mut st, &AdamConfig::default());
        assert!(matches!(err, Err(NnetError::NonFiniteGradient(_))));
        assert_eq!(m.params[0].value[[0, 0]], 0.2);
        assert_eq!(st.step, 0);
    }
}
