use ndarray::Array2;

use super::{F0Track, VocoderConfig, VocoderError, ENVELOPE_FLOOR};
use crate::dsp::{hann_periodic, reflect_index, StftPlan, Waveform};

/// Voiced analysis windows span this many periods of the local F0.
const PERIODS_PER_WINDOW: f64 = 3.0;
/// Unvoiced frames use a short window so that onsets stay sharp.
const UNVOICED_WINDOW_SECS: f64 = 0.006;

/// Smooth power envelope, `T x (fft_size / 2 + 1)`.
///
/// Each voiced frame is cut with a Hann window three periods long and each
/// unvoiced frame with a 6 ms one (at most `window_len`); the power spectrum is averaged twice over a rectangle one F0 wide
/// before division by the window energy. White noise of variance `s^2`
/// therefore gives an envelope near `s^2`, and a periodic signal gives its
/// power per unit of normalized bandwidth.
pub fn estimate_envelope(
    wave: &Waveform,
    f0: &F0Track,
    cfg: &VocoderConfig,
) -> Result<Array2<f64>, VocoderError> {
    cfg.validate()?;
    let plan = StftPlan::new(cfg.frame)?;
    estimate_envelope_with(&plan, wave, f0, cfg)
}

pub(crate) fn estimate_envelope_with(
    plan: &StftPlan,
    wave: &Waveform,
    f0: &F0Track,
    cfg: &VocoderConfig,
) -> Result<Array2<f64>, VocoderError> {
    wave.validate(cfg.frame.sample_rate)?;
    let n = wave.len();
    let expected = cfg.frame.frames_for(n);
    if f0.len() != expected {
        return Err(VocoderError::FrameCount {
            expected,
            found: f0.len(),
        });
    }
    let sr = cfg.frame.sample_rate as f64;
    let bin_hz = cfg.frame.bin_hz();
    let mut env = Array2::zeros((expected, cfg.frame.n_bins()));
    let mut frame = Vec::with_capacity(cfg.frame.window_len);
    for (t, mut row) in env.rows_mut().into_iter().enumerate() {
        let (width_hz, secs) = if f0.vuv[t] {
            (f0.f0[t], PERIODS_PER_WINDOW / f0.f0[t])
        } else {
            (cfg.unvoiced_smoothing_hz, UNVOICED_WINDOW_SECS)
        };
        let len = ((secs * sr).round() as usize).clamp(4, cfg.frame.window_len);
        let window = hann_periodic(len);
        let start = (t * cfg.frame.hop) as isize - (len / 2) as isize;
        frame.clear();
        frame.extend(
            window
                .iter()
                .enumerate()
                .map(|(j, w)| w * wave.samples[reflect_index(start + j as isize, n)]),
        );
        let win_energy: f64 = window.iter().map(|w| w * w).sum();
        let p: Vec<f64> = plan
            .rfft(&frame)
            .iter()
            .map(|c| c.norm_sqr() / win_energy)
            .collect();
        let width = width_hz / bin_hz;
        let once = smooth_rect(&p, width);
        let twice = smooth_rect(&once, width);
        row.iter_mut()
            .zip(twice)
            .for_each(|(r, v)| *r = v.max(ENVELOPE_FLOOR));
    }
    Ok(env)
}

fn mirror(k: isize, n: usize) -> usize {
    let last = (n - 1) as isize;
    let period = 2 * last;
    let mut k = k.rem_euclid(period.max(1));
    if k > last {
        k = period - k;
    }
    k as usize
}

/// Moving average over a rectangle `width` bins wide (fractional widths
/// allowed), treating each bin as constant over `[k - 0.5, k + 0.5]` and
/// mirroring the spectrum at DC and Nyquist.
fn smooth_rect(p: &[f64], width: f64) -> Vec<f64> {
    let n = p.len();
    if n < 2 || width <= 0.0 {
        return p.to_vec();
    }
    let margin = (width / 2.0).ceil() as usize + 2;
    let ext: Vec<f64> = (0..n + 2 * margin)
        .map(|i| p[mirror(i as isize - margin as isize, n)])
        .collect();
    let mut cum = vec![0.0; ext.len() + 1];
    for (i, v) in ext.iter().enumerate() {
        cum[i + 1] = cum[i] + v;
    }
    // integral from the left edge of the extension up to bin coordinate x
    let integral = |x: f64| {
        let pos = x + margin as f64 + 0.5;
        let j = (pos.floor() as usize).min(ext.len() - 1);
        cum[j] + (pos - j as f64) * ext[j]
    };
    let half = width / 2.0;
    (0..n)
        .map(|k| {
            let k = k as f64;
            (integral(k + half) - integral(k - half)) / width
        })
        .collect()
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
    fn smoothing_preserves_constants_and_mass() {
        let flat = vec![2.0; 40];
        assert!(smooth_rect(&flat, 7.3).iter().all(|v| (v - 2.0).abs() < 1e-12));
        // a comb with period equal to the width is flattened exactly
        let comb: Vec<f64> = (0..200).map(|k| if k % 8 == 4 { 8.0 } else { 0.0 }).collect();
        let s = smooth_rect(&comb, 8.0);
        for v in &s[20..180] {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn white_noise_envelope_is_flat() {
        let cfg = VocoderConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let wave = signals::colored_noise(
            &mut rng,
            signals::NoiseColor::White,
            99 * 80,
            0.1,
            SAMPLE_RATE,
        );
        let f0 = F0Track::from_hz(vec![0.0; 100], 0.005);
        let env = estimate_envelope(&wave, &f0, &cfg).unwrap();
        let mean = env.mean_axis(ndarray::Axis(0)).unwrap();
        let bin_hz = cfg.frame.bin_hz();
        for (k, &v) in mean.iter().enumerate() {
            let f = k as f64 * bin_hz;
            if (300.0..=7000.0).contains(&f) {
                let db = 10.0 * (v / 0.01).log10();
                assert!(db.abs() <= 3.0, "{f} Hz: {db} dB");
            }
        }
    }

    #[test]
    fn formant_peaks_are_located() {
        let cfg = VocoderConfig::default();
        let wave = signals::vowel(100.0, &[700.0, 1200.0], 0.5, 0.1, SAMPLE_RATE);
        let f0 = estimate_f0(&wave, &cfg).unwrap();
        let env = estimate_envelope(&wave, &f0, &cfg).unwrap();
        let bin_hz = cfg.frame.bin_hz();
        let t = env.nrows() / 2;
        assert!(f0.vuv[t]);
        let row = env.row(t);
        let maxima: Vec<usize> = (1..row.len() - 1)
            .filter(|&k| row[k] > row[k - 1] && row[k] >= row[k + 1])
            .collect();
        for target in [700.0, 1200.0] {
            let bin = target / bin_hz;
            assert!(
                maxima.iter().any(|&k| (k as f64 - bin).abs() <= 2.0),
                "{target} Hz not among {maxima:?}"
            );
        }
    }

    #[test]
    fn envelope_is_positive_and_checks_frames() {
        let cfg = VocoderConfig::default();
        let wave = Waveform::zeros(1600, SAMPLE_RATE);
        let f0 = F0Track::from_hz(vec![0.0; 21], 0.005);
        let env = estimate_envelope(&wave, &f0, &cfg).unwrap();
        assert!(env.iter().all(|&v| v > 0.0));
        let short = F0Track::from_hz(vec![0.0; 20], 0.005);
        assert!(matches!(
            estimate_envelope(&wave, &short, &cfg),
            Err(VocoderError::FrameCount { expected: 21, found: 20 })
        ));
    }
}
