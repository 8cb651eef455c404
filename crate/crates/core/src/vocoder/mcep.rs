use std::f64::consts::PI;

use ndarray::{Array2, ArrayView2};

use super::VocoderError;

/// Uniform samples of the warped axis used for the cosine transform.
const WARPED_POINTS: usize = 2048;

/// All-pass frequency warping `w -> w + 2 atan(a sin w / (1 - a cos w))`.
/// Warping with `-a` inverts warping with `a`.
pub fn warp_frequency(omega: f64, alpha: f64) -> f64 {
    omega + 2.0 * (alpha * omega.sin()).atan2(1.0 - alpha * omega.cos())
}

/// Mel-cepstral transform between a one-sided power envelope and its
/// truncated cosine series on the warped axis.
///
/// Convention: `ln P(w) = c0 + 2 sum_{m>=1} c_m cos(m warp(w))`, so a flat
/// envelope of power `p` has `c0 = ln p` and adding `ln 2` to `c0` doubles
/// the power everywhere.
#[derive(Debug, Clone)]
pub struct MelCepstrum {
    n_bins: usize,
    order: usize,
    warp: f64,
    /// Fractional bin index of each warped-grid point.
    grid_pos: Vec<f64>,
    /// `(WARPED_POINTS + 1) x order`, trapezoid weights and `1/J` folded in.
    analysis: Array2<f64>,
    /// `n_bins x order`, with the factor 2 for `m >= 1` folded in.
    synthesis: Array2<f64>,
}

impl MelCepstrum {
    pub fn new(n_bins: usize, order: usize, warp: f64) -> Self {
        assert!(n_bins >= 2 && order >= 1);
        let j = WARPED_POINTS;
        let last = (n_bins - 1) as f64;
        let grid_pos = (0..=j)
            .map(|i| {
                let wt = PI * i as f64 / j as f64;
                (warp_frequency(wt, -warp) / PI * last).clamp(0.0, last)
            })
            .collect();
        let analysis = Array2::from_shape_fn((j + 1, order), |(i, m)| {
            let trap = if i == 0 || i == j { 0.5 } else { 1.0 };
            trap / j as f64 * (m as f64 * PI * i as f64 / j as f64).cos()
        });
        let synthesis = Array2::from_shape_fn((n_bins, order), |(k, m)| {
            let wt = warp_frequency(PI * k as f64 / last, warp);
            let scale = if m == 0 { 1.0 } else { 2.0 };
            scale * (m as f64 * wt).cos()
        });
        Self {
            n_bins,
            order,
            warp,
            grid_pos,
            analysis,
            synthesis,
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn warp(&self) -> f64 {
        self.warp
    }

    /// `T x n_bins` strictly positive power envelope -> `T x order`.
    pub fn from_envelope(&self, env: ArrayView2<f64>) -> Result<Array2<f64>, VocoderError> {
        if env.ncols() != self.n_bins {
            return Err(crate::dsp::DspError::BinCount {
                found: env.ncols(),
                expected: self.n_bins,
            }
            .into());
        }
        let mut log_env = env.to_owned();
        for ((t, k), v) in log_env.indexed_iter_mut() {
            if !(*v > 0.0 && v.is_finite()) {
                return Err(VocoderError::NonPositiveEnvelope { frame: t, bin: k });
            }
            *v = v.ln();
        }
        Ok(self.from_log_envelope(log_env.view()))
    }

    /// Same as [`from_envelope`](Self::from_envelope) for an already
    /// log-compressed envelope.
    pub fn from_log_envelope(&self, log_env: ArrayView2<f64>) -> Array2<f64> {
        let mut warped = Array2::zeros((log_env.nrows(), self.grid_pos.len()));
        let last = self.n_bins - 1;
        for (mut out, row) in warped.rows_mut().into_iter().zip(log_env.rows()) {
            for (o, &x) in out.iter_mut().zip(&self.grid_pos) {
                let k = (x.floor() as usize).min(last - 1);
                let f = x - k as f64;
                *o = (1.0 - f) * row[k] + f * row[k + 1];
            }
        }
        warped.dot(&self.analysis)
    }

    /// `T x order` -> `T x n_bins` natural-log power envelope.
    pub fn to_log_envelope(&self, mcep: ArrayView2<f64>) -> Array2<f64> {
        mcep.dot(&self.synthesis.t())
    }

    /// `T x order` -> `T x n_bins` power envelope.
    pub fn to_envelope(&self, mcep: ArrayView2<f64>) -> Array2<f64> {
        self.to_log_envelope(mcep).mapv(f64::exp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn mc() -> MelCepstrum {
        MelCepstrum::new(513, 60, 0.58)
    }

    #[test]
    fn warp_is_inverted_by_negated_alpha() {
        for i in 0..=20 {
            let w = PI * i as f64 / 20.0;
            let back = warp_frequency(warp_frequency(w, 0.58), -0.58);
            assert!((back - w).abs() < 1e-12);
        }
        assert!(warp_frequency(0.1, 0.58) > 0.1);
        assert!((warp_frequency(PI, 0.58) - PI).abs() < 1e-12);
    }

    #[test]
    fn flat_envelope_has_only_c0() {
        let p = 3.7e-3;
        let env = Array2::from_elem((2, 513), p);
        let c = mc().from_envelope(env.view()).unwrap();
        for row in c.rows() {
            assert!((row[0] - p.ln()).abs() < 1e-9);
            assert!(row.iter().skip(1).all(|v| v.abs() < 1e-6));
        }
    }

    fn formant_envelope(t: usize) -> Array2<f64> {
        Array2::from_shape_fn((t, 513), |(i, k)| {
            let f = k as f64 * 15.625;
            let shift = 1.0 + 0.05 * i as f64;
            let res = |c: f64, b: f64| 1.0 / (1.0 + ((f - c * shift) / b).powi(2));
            1e-4 * (0.05 + res(600.0, 150.0) + 0.5 * res(1700.0, 250.0) + 0.2 * res(3000.0, 400.0))
                / (1.0 + f / 2000.0)
        })
    }

    #[test]
    fn round_trip_is_below_one_db() {
        let m = mc();
        let env = formant_envelope(4);
        let back = m.to_envelope(m.from_envelope(env.view()).unwrap().view());
        let n = env.len() as f64;
        let mse: f64 = env
            .iter()
            .zip(back.iter())
            .map(|(a, b)| (10.0 * (a / b).log10()).powi(2))
            .sum::<f64>()
            / n;
        assert!(mse.sqrt() < 1.0, "{} dB", mse.sqrt());
    }

    #[test]
    fn doubling_power_shifts_c0_only() {
        let m = mc();
        let env = formant_envelope(3);
        let a = m.from_envelope(env.view()).unwrap();
        let b = m.from_envelope((&env * 2.0).view()).unwrap();
        for (ra, rb) in a.rows().into_iter().zip(b.rows()) {
            assert!((rb[0] - ra[0] - 2f64.ln()).abs() < 1e-9);
            for d in 1..60 {
                assert!((rb[d] - ra[d]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rejects_nonpositive_values() {
        let mut env = Array2::from_elem((3, 513), 1.0);
        env[[2, 17]] = 0.0;
        assert!(matches!(
            mc().from_envelope(env.view()),
            Err(VocoderError::NonPositiveEnvelope { frame: 2, bin: 17 })
        ));
    }
}
