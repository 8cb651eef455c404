use super::{F0Track, VocoderConfig, VocoderError};
use crate::dsp::{DspError, Waveform};

/// Keep the shortest-lag candidate whose correlation is within this factor
/// of the best one; suppresses sub-octave picks on strongly periodic input.
const OCTAVE_TOLERANCE: f64 = 0.9;
/// Voiced runs shorter than this many frames are dropped as spurious.
const MIN_VOICED_RUN: usize = 3;

/// One F0 estimate per hop, centered on `t * hop`.
///
/// Each frame compares two 1.5-period (of `f0_floor`) segments placed
/// symmetrically around the frame centre over lags `[sr / f0_ceil, sr / f0_floor]` using the
/// normalized cross-correlation, refines the chosen peak with parabolic
/// interpolation, and declares the frame voiced when the peak exceeds
/// `voicing_threshold` and the RMS over the two hops around the frame
/// centre exceeds `silence_rms`. Voiced runs shorter than three frames are
/// discarded, and a median filter of `median_len` voiced neighbours then
/// removes isolated jumps.
pub fn estimate_f0(wave: &Waveform, cfg: &VocoderConfig) -> Result<F0Track, VocoderError> {
    cfg.validate()?;
    if wave.is_empty() {
        return Err(DspError::EmptySignal.into());
    }
    let sr = wave.sample_rate as f64;
    let x = &wave.samples;
    let n = x.len();
    let hop = cfg.frame.hop;
    let n_frames = cfg.frame.frames_for(n);

    let lag_min = (sr / cfg.f0_ceil).floor().max(2.0) as usize;
    let lag_max = (sr / cfg.f0_floor).ceil() as usize;
    let seg = (1.5 * sr / cfg.f0_floor).round() as usize;
    let half_seg = seg / 2;
    // room for every lag up to lag_max + 1 split evenly around the centre
    let span = seg + lag_max + 4;
    let reach = half_seg + (lag_max + 1) / 2 + 1;

    let sample = |i: isize| -> f64 {
        if i < 0 || i as usize >= n {
            0.0
        } else {
            x[i as usize]
        }
    };

    let mut f0 = vec![0.0; n_frames];
    let mut vuv = vec![false; n_frames];
    let mut buf = vec![0.0; span];
    // energy prefix sums of the buffer for the normalization terms
    let mut cum = vec![0.0; span + 1];
    let mut r = vec![0.0; lag_max + 2];
    for t in 0..n_frames {
        let center = (t * hop) as isize;
        let mut start = center - reach as isize;
        if n >= span {
            start = start.clamp(0, (n - span) as isize);
        }
        for (j, b) in buf.iter_mut().enumerate() {
            *b = sample(start + j as isize);
        }
        let mid = (center - start) as usize;
        let lo = mid.saturating_sub(hop).min(span - 2 * hop);
        let rms_energy: f64 = buf[lo..lo + 2 * hop].iter().map(|v| v * v).sum();
        let rms = (rms_energy / (2 * hop) as f64).sqrt();
        if rms <= cfg.silence_rms {
            continue;
        }

        for j in 0..span {
            cum[j + 1] = cum[j] + buf[j] * buf[j];
        }
        for lag in (lag_min - 1)..=(lag_max + 1) {
            // segments start `lag / 2` before and `lag - lag / 2` after the
            // centred position
            let a = (mid as isize - half_seg as isize - (lag / 2) as isize)
                .clamp(0, (span - lag - seg) as isize) as usize;
            let e0 = cum[a + seg] - cum[a];
            let el = cum[a + lag + seg] - cum[a + lag];
            let dot: f64 = buf[a..a + seg]
                .iter()
                .zip(&buf[a + lag..a + lag + seg])
                .map(|(p, q)| p * q)
                .sum();
            r[lag] = if e0 > 0.0 && el > 0.0 {
                dot / (e0 * el).sqrt()
            } else {
                0.0
            };
        }

        let peaks: Vec<usize> = (lag_min..=lag_max)
            .filter(|&l| r[l] >= r[l - 1] && r[l] > r[l + 1])
            .collect();
        let Some(best) = peaks.iter().map(|&l| r[l]).max_by(f64::total_cmp) else {
            continue;
        };
        if best <= cfg.voicing_threshold {
            continue;
        }
        let lag = peaks
            .iter()
            .copied()
            .find(|&l| r[l] >= OCTAVE_TOLERANCE * best)
            .unwrap();
        if r[lag] <= cfg.voicing_threshold {
            continue;
        }
        let (a, b, c) = (r[lag - 1], r[lag], r[lag + 1]);
        let denom = a - 2.0 * b + c;
        let delta = if denom.abs() > 1e-12 {
            (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
        } else {
            0.0
        };
        let freq = sr / (lag as f64 + delta);
        f0[t] = freq.clamp(cfg.f0_floor, cfg.f0_ceil);
        vuv[t] = true;
    }

    let mut t = 0;
    while t < n_frames {
        if !vuv[t] {
            t += 1;
            continue;
        }
        let end = (t..n_frames).find(|&i| !vuv[i]).unwrap_or(n_frames);
        if end - t < MIN_VOICED_RUN {
            for i in t..end {
                vuv[i] = false;
                f0[i] = 0.0;
            }
        }
        t = end;
    }

    let half = cfg.median_len / 2;
    let raw = f0.clone();
    let mut window = Vec::with_capacity(cfg.median_len);
    for t in 0..n_frames {
        if !vuv[t] {
            continue;
        }
        window.clear();
        let lo = t.saturating_sub(half);
        let hi = (t + half).min(n_frames - 1);
        window.extend((lo..=hi).filter(|&i| vuv[i]).map(|i| raw[i]));
        window.sort_by(f64::total_cmp);
        let m = window.len();
        f0[t] = if m % 2 == 1 {
            window[m / 2]
        } else {
            0.5 * (window[m / 2 - 1] + window[m / 2])
        };
    }

    Ok(F0Track {
        f0,
        vuv,
        hop_secs: cfg.frame.hop_secs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::SAMPLE_RATE;
    use crate::signals;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn median(mut v: Vec<f64>) -> f64 {
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    }

    #[test]
    fn sawtooth_200hz() {
        let cfg = VocoderConfig::default();
        let wave = signals::sawtooth(200.0, 1.0, 0.5, SAMPLE_RATE);
        let track = estimate_f0(&wave, &cfg).unwrap();
        assert_eq!(track.len(), 201);
        assert!(track.voiced_fraction() >= 0.95, "{}", track.voiced_fraction());
        let voiced: Vec<f64> = track.f0.iter().copied().filter(|&f| f > 0.0).collect();
        assert!((median(voiced) - 200.0).abs() <= 2.0);
    }

    #[test]
    fn voiced_iff_positive_f0() {
        let cfg = VocoderConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let wave = signals::vowel_sequence(&mut rng, &signals::SpeakerProfile::female(), 1.0);
        let track = estimate_f0(&wave, &cfg).unwrap();
        for (f, v) in track.f0.iter().zip(&track.vuv) {
            assert_eq!(*f > 0.0, *v);
            if *v {
                assert!((50.0..=550.0).contains(f));
            }
        }
    }

    #[test]
    fn silence_is_unvoiced() {
        let cfg = VocoderConfig::default();
        let track = estimate_f0(&Waveform::zeros(8000, SAMPLE_RATE), &cfg).unwrap();
        assert!(track.vuv.iter().all(|v| !v));
        assert!(track.f0.iter().all(|&f| f == 0.0));
    }

    #[test]
    fn white_noise_is_mostly_unvoiced() {
        let cfg = VocoderConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let wave = signals::white_noise(&mut rng, 16_000, 0.3, SAMPLE_RATE);
        let track = estimate_f0(&wave, &cfg).unwrap();
        assert!(track.voiced_fraction() <= 0.2, "{}", track.voiced_fraction());
    }

    #[test]
    fn tracks_a_range_of_pitches() {
        let cfg = VocoderConfig::default();
        for f in [70.0, 110.0, 173.3, 260.0, 420.0] {
            let wave = signals::sawtooth(f, 0.5, 0.3, SAMPLE_RATE);
            let track = estimate_f0(&wave, &cfg).unwrap();
            let voiced: Vec<f64> = track.f0.iter().copied().filter(|&v| v > 0.0).collect();
            let m = median(voiced);
            assert!((m - f).abs() < 0.01 * f, "{f}: {m}");
        }
    }

    #[test]
    fn empty_signal_errors() {
        let cfg = VocoderConfig::default();
        assert!(matches!(
            estimate_f0(&Waveform::new(vec![], SAMPLE_RATE), &cfg),
            Err(VocoderError::Dsp(DspError::EmptySignal))
        ));
    }
}
