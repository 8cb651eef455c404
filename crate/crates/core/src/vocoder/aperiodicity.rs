use ndarray::Array2;
use num_complex::Complex64;
use rustfft::FftPlanner;

use super::{F0Track, VocoderConfig, VocoderError, BAP_DIM};
use crate::dsp::{hann_periodic, DspError, Waveform};

const PERIODS_PER_WINDOW: f64 = 6.0;
const MAX_WINDOW: usize = 4096;
/// Bins at least this far (in harmonic spacings) from the nearest harmonic
/// count as residual; the Hann main lobe of a six-period window ends at 1/3.
const RESIDUAL_DISTANCE: f64 = 0.4;
const MIN_RATIO: f64 = 1e-6;

/// Band aperiodicity in dB, `T x 5`.
///
/// For each voiced frame, the mean power of the bins lying between
/// harmonics stands in for the noise density; multiplied by the band width
/// and divided by the band's total power it gives the aperiodic fraction.
/// Unvoiced frames are fully aperiodic (0 dB).
pub fn estimate_band_aperiodicity(
    wave: &Waveform,
    f0: &F0Track,
    cfg: &VocoderConfig,
) -> Result<Array2<f64>, VocoderError> {
    cfg.validate()?;
    if wave.is_empty() {
        return Err(DspError::EmptySignal.into());
    }
    let expected = cfg.frame.frames_for(wave.len());
    if f0.len() != expected {
        return Err(VocoderError::FrameCount {
            expected,
            found: f0.len(),
        });
    }
    let sr = wave.sample_rate as f64;
    let n = wave.len();
    let x = &wave.samples;
    let edges = &cfg.band_edges_hz;
    let mut bap = Array2::zeros((f0.len(), BAP_DIM));
    let mut planner = FftPlanner::new();
    let mut buf = Vec::new();

    for t in 0..f0.len() {
        if !f0.vuv[t] {
            continue;
        }
        let period = sr / f0.f0[t];
        let len = ((PERIODS_PER_WINDOW * period).round() as usize).min(MAX_WINDOW);
        let nfft = (2 * len).next_power_of_two();
        let window = hann_periodic(len);
        let center = (t * cfg.frame.hop) as isize;
        let mut start = center - (len / 2) as isize;
        if n >= len {
            start = start.clamp(0, (n - len) as isize);
        }
        buf.clear();
        buf.extend((0..nfft).map(|j| {
            let i = start + j as isize;
            let v = if j < len && i >= 0 && (i as usize) < n {
                x[i as usize] * window[j]
            } else {
                0.0
            };
            Complex64::new(v, 0.0)
        }));
        planner.plan_fft_forward(nfft).process(&mut buf);

        let bin_hz = sr / nfft as f64;
        for b in 0..BAP_DIM {
            let (lo, hi) = (edges[b], edges[b + 1]);
            let last_band = b == BAP_DIM - 1;
            let (mut total, mut residual, mut n_band, mut n_res) = (0.0, 0.0, 0usize, 0usize);
            for (k, c) in buf.iter().enumerate().take(nfft / 2 + 1) {
                let f = k as f64 * bin_hz;
                if f < lo || f > hi || (f == hi && !last_band) {
                    continue;
                }
                let p = c.norm_sqr();
                total += p;
                n_band += 1;
                let h = f / f0.f0[t];
                if (h - h.round()).abs() >= RESIDUAL_DISTANCE {
                    residual += p;
                    n_res += 1;
                }
            }
            let ratio = if total > 0.0 && n_res > 0 {
                (residual / n_res as f64 * n_band as f64 / total).min(1.0)
            } else {
                1.0
            };
            bap[[t, b]] = 10.0 * ratio.max(MIN_RATIO).log10();
        }
    }
    Ok(bap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::SAMPLE_RATE;
    use crate::signals;
    use crate::vocoder::estimate_f0;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sawtooth_is_periodic_in_the_first_band() {
        let cfg = VocoderConfig::default();
        let wave = signals::sawtooth(200.0, 0.5, 0.5, SAMPLE_RATE);
        let f0 = estimate_f0(&wave, &cfg).unwrap();
        let bap = estimate_band_aperiodicity(&wave, &f0, &cfg).unwrap();
        let mut checked = 0;
        for t in 0..f0.len() {
            if f0.vuv[t] {
                assert!(bap[[t, 0]] <= -20.0, "frame {t}: {}", bap[[t, 0]]);
                checked += 1;
            }
        }
        assert!(checked > 80);
    }

    #[test]
    fn white_noise_is_aperiodic_everywhere() {
        let cfg = VocoderConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let wave = signals::white_noise(&mut rng, 8000, 0.3, SAMPLE_RATE);
        // force every frame voiced at an arbitrary pitch to exercise the estimator
        let f0 = F0Track::from_hz(vec![150.0; cfg.frame.frames_for(8000)], 0.005);
        let bap = estimate_band_aperiodicity(&wave, &f0, &cfg).unwrap();
        let mean = bap.mean_axis(ndarray::Axis(0)).unwrap();
        for (b, v) in mean.iter().enumerate() {
            assert!(*v >= -3.0, "band {b}: {v}");
        }
        assert!(bap.iter().all(|v| *v <= 0.0));
    }

    #[test]
    fn unvoiced_frames_are_zero_db() {
        let cfg = VocoderConfig::default();
        let wave = signals::sawtooth(120.0, 0.2, 0.5, SAMPLE_RATE);
        let f0 = F0Track::from_hz(vec![0.0; cfg.frame.frames_for(wave.len())], 0.005);
        let bap = estimate_band_aperiodicity(&wave, &f0, &cfg).unwrap();
        assert!(bap.iter().all(|&v| v == 0.0));
        let bad = F0Track::from_hz(vec![0.0; 3], 0.005);
        assert!(matches!(
            estimate_band_aperiodicity(&wave, &bad, &cfg),
            Err(VocoderError::FrameCount { .. })
        ));
    }
}
