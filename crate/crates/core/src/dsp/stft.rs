use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{DspError, FrameConfig, Waveform, WindowKind};

/// Complex one-sided STFT frames plus the information needed to invert them.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    /// `T x (fft_size / 2 + 1)`.
    pub frames: Array2<Complex64>,
    pub config: FrameConfig,
    /// Length of the analysed signal in samples.
    pub origin_len: usize,
}

impl Spectrogram {
    pub fn zeros(n_frames: usize, origin_len: usize, config: FrameConfig) -> Self {
        Self {
            frames: Array2::zeros((n_frames, config.n_bins())),
            config,
            origin_len,
        }
    }

    pub fn n_frames(&self) -> usize {
        self.frames.nrows()
    }

    pub fn n_bins(&self) -> usize {
        self.frames.ncols()
    }

    /// `|X|^2` per bin.
    pub fn power(&self) -> Array2<f64> {
        self.frames.mapv(|c| c.norm_sqr())
    }

    pub fn magnitude(&self) -> Array2<f64> {
        self.frames.mapv(|c| c.norm())
    }
}

/// Number of centered frames for a signal of `n_samples`.
pub fn frame_count(n_samples: usize, hop: usize) -> usize {
    n_samples / hop + 1
}

pub fn hann_periodic(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())
        .collect()
}

/// Mirror index into `[0, n)` without repeating the edge sample, applied
/// repeatedly so any pad length works.
pub(crate) fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut j = i.rem_euclid(period);
    if j >= n as isize {
        j = period - j;
    }
    j as usize
}

/// Reusable FFT plans and analysis window for one frame configuration.
pub struct StftPlan {
    config: FrameConfig,
    window: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl StftPlan {
    pub fn new(config: FrameConfig) -> Result<Self, DspError> {
        config.validate()?;
        let window = match config.window {
            WindowKind::Hann => hann_periodic(config.window_len),
        };
        let mut planner = FftPlanner::new();
        Ok(Self {
            forward: planner.plan_fft_forward(config.fft_size),
            inverse: planner.plan_fft_inverse(config.fft_size),
            window,
            config,
        })
    }

    pub fn config(&self) -> &FrameConfig {
        &self.config
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    /// Forward real FFT of an arbitrary frame (zero-padded to `fft_size`),
    /// returning the one-sided spectrum.
    pub fn rfft(&self, frame: &[f64]) -> Vec<Complex64> {
        let n = self.config.fft_size;
        let mut buf: Vec<Complex64> = frame
            .iter()
            .map(|&x| Complex64::new(x, 0.0))
            .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
            .take(n)
            .collect();
        self.forward.process(&mut buf);
        buf.truncate(n / 2 + 1);
        buf
    }

    /// Inverse of [`rfft`](Self::rfft) for a Hermitian one-sided spectrum;
    /// returns `fft_size` real samples.
    pub fn irfft(&self, half: &[Complex64]) -> Vec<f64> {
        let n = self.config.fft_size;
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        buf[..half.len()].copy_from_slice(half);
        for k in 1..n / 2 {
            buf[n - k] = half[k].conj();
        }
        // imaginary parts of DC / Nyquist carry no information for real signals
        buf[0].im = 0.0;
        buf[n / 2].im = 0.0;
        self.inverse.process(&mut buf);
        let scale = 1.0 / n as f64;
        buf.iter().map(|c| c.re * scale).collect()
    }

    pub fn stft(&self, wave: &Waveform) -> Result<Spectrogram, DspError> {
        if wave.is_empty() {
            return Err(DspError::EmptySignal);
        }
        let cfg = &self.config;
        if wave.sample_rate != cfg.sample_rate {
            return Err(DspError::SampleRate {
                found: wave.sample_rate,
                expected: cfg.sample_rate,
            });
        }
        let n = wave.len();
        let half = (cfg.window_len / 2) as isize;
        let n_frames = frame_count(n, cfg.hop);
        let mut out = Spectrogram::zeros(n_frames, n, *cfg);
        let mut frame = vec![0.0; cfg.window_len];
        for t in 0..n_frames {
            let start = (t * cfg.hop) as isize - half;
            for (j, f) in frame.iter_mut().enumerate() {
                let idx = reflect_index(start + j as isize, n);
                *f = wave.samples[idx] * self.window[j];
            }
            let spec = self.rfft(&frame);
            out.frames
                .row_mut(t)
                .iter_mut()
                .zip(spec)
                .for_each(|(o, s)| *o = s);
        }
        Ok(out)
    }

    /// Weighted overlap-add inverse, normalized by the summed squared window.
    pub fn istft(&self, spec: &Spectrogram) -> Result<Waveform, DspError> {
        let cfg = &self.config;
        if spec.n_bins() != cfg.n_bins() {
            return Err(DspError::BinCount {
                found: spec.n_bins(),
                expected: cfg.n_bins(),
            });
        }
        let half = cfg.window_len / 2;
        let t_frames = spec.n_frames();
        let padded_len = (t_frames.saturating_sub(1)) * cfg.hop + cfg.window_len;
        let mut acc = vec![0.0; padded_len];
        let mut norm = vec![0.0; padded_len];
        let row: &mut Vec<Complex64> = &mut vec![Complex64::new(0.0, 0.0); cfg.n_bins()];
        for t in 0..t_frames {
            row.iter_mut()
                .zip(spec.frames.row(t))
                .for_each(|(r, s)| *r = *s);
            let frame = self.irfft(row);
            let start = t * cfg.hop;
            for j in 0..cfg.window_len {
                let w = self.window[j];
                acc[start + j] += w * frame[j];
                norm[start + j] += w * w;
            }
        }
        let samples = (0..spec.origin_len)
            .map(|i| {
                let p = i + half;
                if p < padded_len && norm[p] > 1e-10 {
                    acc[p] / norm[p]
                } else {
                    0.0
                }
            })
            .collect();
        Ok(Waveform::new(samples, cfg.sample_rate))
    }
}

/// Centered STFT with `window_len / 2` reflection padding on both ends.
pub fn stft(wave: &Waveform, cfg: &FrameConfig) -> Result<Spectrogram, DspError> {
    StftPlan::new(*cfg)?.stft(wave)
}

/// Inverse of [`stft`], trimmed to the original signal length.
pub fn istft(spec: &Spectrogram) -> Result<Waveform, DspError> {
    StftPlan::new(spec.config)?.istft(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::SAMPLE_RATE;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn relative_l2(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
        let den: f64 = a.iter().map(|x| x * x).sum();
        (num / den).sqrt()
    }

    fn sine(freq: f64, len: usize) -> Waveform {
        Waveform::new(
            (0..len)
                .map(|n| (2.0 * PI * freq * n as f64 / SAMPLE_RATE as f64).sin())
                .collect(),
            SAMPLE_RATE,
        )
    }

    #[test]
    fn reflect_index_matches_numpy_reflect() {
        // np.pad([0,1,2,3], 5, mode="reflect")
        let expect = [1, 2, 3, 2, 1, 0, 1, 2, 3, 2, 1, 0, 1, 2];
        let got: Vec<usize> = (-5..9).map(|i| reflect_index(i, 4)).collect();
        assert_eq!(got, expect);
        assert_eq!(reflect_index(-3, 1), 0);
    }

    #[test]
    fn frame_count_is_centered_rule() {
        assert_eq!(frame_count(16_000, 80), 201);
        assert_eq!(frame_count(79, 80), 1);
        assert_eq!(frame_count(80, 80), 2);
    }

    #[test]
    fn silence_gives_zero_frames() {
        let spec = stft(&Waveform::zeros(16_000, SAMPLE_RATE), &FrameConfig::default()).unwrap();
        assert_eq!(spec.n_frames(), 201);
        assert!(spec.frames.iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn sine_peaks_at_expected_bin() {
        let cfg = FrameConfig::default();
        let spec = stft(&sine(1000.0, 16_000), &cfg).unwrap();
        // frames whose window lies entirely inside the signal
        let first = cfg.window_len / 2 / cfg.hop + 1;
        let last = (16_000 - cfg.window_len / 2) / cfg.hop;
        for row in spec.frames.rows().into_iter().take(last).skip(first) {
            let argmax = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
                .unwrap()
                .0;
            assert_eq!(argmax, 64);
        }
    }

    #[test]
    fn sine_peak_matches_direct_dft() {
        // oracle: naive DFT of one windowed frame
        let cfg = FrameConfig::default();
        let wave = sine(1000.0, 4000);
        let spec = stft(&wave, &cfg).unwrap();
        let t = 20;
        let w = hann_periodic(cfg.window_len);
        let start = t * cfg.hop - cfg.window_len / 2;
        let mags: Vec<f64> = (0..cfg.n_bins())
            .map(|k| {
                let mut acc = Complex64::new(0.0, 0.0);
                for j in 0..cfg.window_len {
                    let ang = -2.0 * PI * (k * j) as f64 / cfg.fft_size as f64;
                    acc += Complex64::from_polar(wave.samples[start + j] * w[j], ang);
                }
                acc.norm()
            })
            .collect();
        let oracle_argmax = mags
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(oracle_argmax, 64);
        for k in 0..cfg.n_bins() {
            assert!((spec.frames[[t, k]].norm() - mags[k]).abs() < 1e-8);
        }
    }

    #[test]
    fn round_trip_random_and_sine() {
        let cfg = FrameConfig::default();
        let plan = StftPlan::new(cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noise = Waveform::new(
            (0..7_777).map(|_| rng.random_range(-1.0..1.0)).collect(),
            SAMPLE_RATE,
        );
        for wave in [noise, sine(440.0, 12_345)] {
            let back = plan.istft(&plan.stft(&wave).unwrap()).unwrap();
            assert_eq!(back.len(), wave.len());
            let w = cfg.window_len;
            let err = relative_l2(
                &wave.samples[w..wave.len() - w],
                &back.samples[w..wave.len() - w],
            );
            assert!(err < 1e-6, "{err}");
        }
    }

    #[test]
    fn istft_trims_to_origin_len() {
        let cfg = FrameConfig::default();
        let mut spec = Spectrogram::zeros(50, 1000, cfg);
        assert!(50 * cfg.hop > 1000);
        let out = istft(&spec).unwrap();
        assert_eq!(out.len(), 1000);
        assert!(out.samples.iter().all(|&x| x == 0.0));
        spec.origin_len = 17;
        assert_eq!(istft(&spec).unwrap().len(), 17);
    }

    #[test]
    fn istft_rejects_bad_bins() {
        let cfg = FrameConfig::default();
        let spec = Spectrogram {
            frames: Array2::zeros((3, 100)),
            config: cfg,
            origin_len: 100,
        };
        assert_eq!(
            istft(&spec),
            Err(DspError::BinCount {
                found: 100,
                expected: 513
            })
        );
    }

    #[test]
    fn stft_errors() {
        let cfg = FrameConfig::default();
        assert_eq!(
            stft(&Waveform::new(vec![], SAMPLE_RATE), &cfg),
            Err(DspError::EmptySignal)
        );
        assert!(matches!(
            stft(&Waveform::new(vec![0.0; 10], 8000), &cfg),
            Err(DspError::SampleRate { .. })
        ));
    }

    #[test]
    fn parseval_per_frame() {
        let cfg = FrameConfig::default();
        let plan = StftPlan::new(cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let frame: Vec<f64> = plan
            .window()
            .iter()
            .map(|w| w * rng.random_range(-1.0..1.0))
            .collect();
        let time_power: f64 = frame.iter().map(|x| x * x).sum();
        let half = plan.rfft(&frame);
        let n = cfg.fft_size;
        // expand the one-sided spectrum to the full spectrum sum
        let full: f64 = half
            .iter()
            .enumerate()
            .map(|(k, c)| if k == 0 || k == n / 2 { c.norm_sqr() } else { 2.0 * c.norm_sqr() })
            .sum();
        let freq_power = full / n as f64;
        assert!(((time_power - freq_power) / time_power).abs() < 1e-6);
    }

    #[test]
    fn short_signals_are_padded_by_reflection() {
        let cfg = FrameConfig::default();
        let wave = Waveform::new(vec![0.5, -0.25, 0.125], SAMPLE_RATE);
        let spec = stft(&wave, &cfg).unwrap();
        assert_eq!(spec.n_frames(), 1);
        let back = istft(&spec).unwrap();
        for (a, b) in wave.samples.iter().zip(&back.samples) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}
