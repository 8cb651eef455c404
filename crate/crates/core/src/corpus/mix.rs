use super::CorpusError;
use crate::dsp::Waveform;

/// Gain applied to both speech and noise when mixing.
pub const MIX_GAIN: f64 = 0.95;

/// Result of [`mix`].
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    pub noisy: Waveform,
    /// The noise as it enters the mixture, before the gain.
    pub noise_segment: Waveform,
    pub snr_db: f64,
    /// Whether any mixed sample left `[-1, 1]`.
    pub clipped: bool,
}

/// `noisy = gain * clean + gain * noise[offset..]`, reading the noise
/// cyclically when the utterance outlasts it. The SNR compares the clean
/// and noise-segment energies, so it does not depend on the gain. Nothing
/// is renormalized.
pub fn mix(clean: &Waveform, noise: &Waveform, offset: usize, gain: f64) -> Result<Mixture, CorpusError> {
    if clean.is_empty() {
        return Err(CorpusError::DegenerateMixture("empty clean signal".into()));
    }
    if noise.is_empty() {
        return Err(CorpusError::DegenerateMixture("empty noise signal".into()));
    }
    if clean.sample_rate != noise.sample_rate {
        return Err(crate::dsp::DspError::SampleRate {
            found: noise.sample_rate,
            expected: clean.sample_rate,
        }
        .into());
    }
    if !(gain > 0.0 && gain.is_finite()) {
        return Err(CorpusError::DegenerateMixture(format!("gain {gain}")));
    }
    let m = noise.len();
    let seg: Vec<f64> = (0..clean.len()).map(|i| noise.samples[(offset + i) % m]).collect();
    let e_clean = clean.energy();
    let e_noise: f64 = seg.iter().map(|v| v * v).sum();
    if e_noise == 0.0 {
        return Err(CorpusError::DegenerateMixture("noise segment is silent (infinite SNR)".into()));
    }
    if e_clean == 0.0 {
        return Err(CorpusError::DegenerateMixture("clean signal is silent".into()));
    }
    let snr_db = 10.0 * (e_clean / e_noise).log10();
    let noisy: Vec<f64> = clean
        .samples
        .iter()
        .zip(&seg)
        .map(|(c, n)| gain * c + gain * n)
        .collect();
    let clipped = noisy.iter().any(|v| v.abs() > 1.0);
    Ok(Mixture {
        noisy: Waveform::new(noisy, clean.sample_rate),
        noise_segment: Waveform::new(seg, clean.sample_rate),
        snr_db,
        clipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::SAMPLE_RATE;

    fn ramp(n: usize) -> Waveform {
        Waveform::new((0..n).map(|i| ((i % 17) as f64 - 8.0) / 20.0).collect(), SAMPLE_RATE)
    }

    #[test]
    fn snr_examples() {
        let c = ramp(500);
        let m = mix(&c, &c, 0, MIX_GAIN).unwrap();
        assert_eq!(m.snr_db, 0.0);
        let half = c.scaled(0.5);
        let m = mix(&c, &half, 0, MIX_GAIN).unwrap();
        assert!((m.snr_db - 10.0 * 4f64.log10()).abs() < 1e-12);
        assert!((m.snr_db - 6.0206).abs() < 1e-4);
    }

    #[test]
    fn noise_wraps_from_the_offset() {
        let c = Waveform::new(vec![0.0; 7], SAMPLE_RATE);
        let mut c = c;
        c.samples[0] = 0.1;
        let n = Waveform::new(vec![1.0, 2.0, 3.0].into_iter().map(|v| v / 10.0).collect(), SAMPLE_RATE);
        let m = mix(&c, &n, 2, 1.0).unwrap();
        let expected = [0.3, 0.1, 0.2, 0.3, 0.1, 0.2, 0.3];
        for (a, b) in m.noise_segment.samples.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((m.noisy.samples[0] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn gain_is_applied_to_both_and_clipping_flagged() {
        let c = Waveform::new(vec![0.8; 10], SAMPLE_RATE);
        let n = Waveform::new(vec![0.4; 10], SAMPLE_RATE);
        let m = mix(&c, &n, 3, MIX_GAIN).unwrap();
        assert!((m.noisy.samples[0] - 0.95 * 1.2).abs() < 1e-12);
        assert!(m.clipped);
        assert_eq!(m.snr_db, mix(&c, &n, 3, 0.5).unwrap().snr_db);
    }

    #[test]
    fn degenerate_inputs() {
        let c = ramp(10);
        let z = Waveform::zeros(10, SAMPLE_RATE);
        assert!(matches!(mix(&c, &z, 0, MIX_GAIN), Err(CorpusError::DegenerateMixture(_))));
        let empty = Waveform::zeros(0, SAMPLE_RATE);
        assert!(matches!(mix(&empty, &c, 0, MIX_GAIN), Err(CorpusError::DegenerateMixture(_))));
    }
}
