use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{AcousticTrack, MelCepstrum, VocoderConfig, VocoderError, SILENCE_LOG_POWER};
use crate::dsp::{hann_periodic, StftPlan, Waveform};

const OUTPUT_PEAK: f64 = 0.99;
const PERIODIC_FLOOR: f64 = 1e-12;
/// Length of the noise grains in samples (16 ms at 16 kHz).
const NOISE_GRAIN: usize = 256;

/// Waveform of `max((T - 1) * hop, 1)` samples from vocoder parameters.
///
/// The aperiodic part is seeded white noise, cut into 16 ms grains and
/// shaped per frame by the zero-phase filter `sqrt(envelope * aperiodicity)`. On voiced frames a pulse train at
/// `exp(lf0)` is added, each pulse being a minimum-phase response with
/// magnitude `sqrt(envelope * (1 - aperiodicity))`, placed at its
/// fractional position. Frames whose `mcep[0]` falls below
/// [`SILENCE_LOG_POWER`] are silent. The result is limited to a peak of 0.99.
pub fn synthesize(
    track: &AcousticTrack,
    cfg: &VocoderConfig,
    seed: u64,
) -> Result<Waveform, VocoderError> {
    cfg.validate()?;
    track.validate()?;
    let sr = cfg.frame.sample_rate;
    let t_frames = track.n_frames();
    if t_frames == 0 {
        return Ok(Waveform::zeros(1, sr));
    }
    let hop = cfg.frame.hop;
    let n_out = ((t_frames - 1) * hop).max(1);
    let plan = StftPlan::new(cfg.frame)?;
    let n_bins = cfg.frame.n_bins();
    let mc = MelCepstrum::new(n_bins, cfg.mcep_order, cfg.warp);
    let log_env = mc.to_log_envelope(track.mcep.view());
    let gate: Vec<bool> = (0..t_frames)
        .map(|t| track.mcep[[t, 0]] >= SILENCE_LOG_POWER)
        .collect();

    let bin_hz = cfg.frame.bin_hz();
    let edges = &cfg.band_edges_hz;
    let band_of: Vec<usize> = (0..n_bins)
        .map(|k| {
            let f = k as f64 * bin_hz;
            edges[1..edges.len() - 1].iter().filter(|&&e| f >= e).count()
        })
        .collect();
    let mut ap = Array2::<f64>::ones((t_frames, n_bins));
    for t in 0..t_frames {
        if track.vuv[t] {
            for k in 0..n_bins {
                ap[[t, k]] = 10f64.powf(track.bap[[t, band_of[k]]].min(0.0) / 10.0);
            }
        }
    }

    // aperiodic component: short windowed grains of fresh noise, each
    // shaped by its frame's zero-phase filter, overlap-added at unit variance
    let n_fft = cfg.frame.fft_size;
    let grain = (NOISE_GRAIN.min(n_fft / 2)).max(2 * hop.min(n_fft / 4));
    let window = hann_periodic(grain);
    let offset = (n_fft - grain) / 2;
    let grain_start = |t: usize| (t * hop) as isize - (grain / 2) as isize;
    let mut coverage = vec![0.0; n_out];
    for t in 0..t_frames {
        for (j, w) in window.iter().enumerate() {
            let i = grain_start(t) + j as isize;
            if i >= 0 && (i as usize) < n_out {
                coverage[i as usize] += w * w;
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![0.0; n_out];
    let mut buf = vec![0.0; n_fft];
    for t in 0..t_frames {
        buf.iter_mut().for_each(|b| *b = 0.0);
        for (j, w) in window.iter().enumerate() {
            let nu: f64 = StandardNormal.sample(&mut rng);
            let i = grain_start(t) + j as isize;
            if i >= 0 && (i as usize) < n_out && coverage[i as usize] > 0.0 {
                buf[offset + j] = w * nu / coverage[i as usize].sqrt();
            }
        }
        if !gate[t] {
            continue;
        }
        let mut spec = plan.rfft(&buf);
        for (k, c) in spec.iter_mut().enumerate() {
            *c *= (log_env[[t, k]].exp() * ap[[t, k]]).sqrt();
        }
        let shaped = plan.irfft(&spec);
        let base = grain_start(t) - offset as isize;
        for (j, v) in shaped.iter().enumerate() {
            let i = base + j as isize;
            if i >= 0 && (i as usize) < n_out {
                out[i as usize] += v;
            }
        }
    }

    // periodic component
    let mut pulses = vec![0.0; n_out + n_fft];
    let mut responses: Vec<Option<Vec<Complex64>>> = vec![None; t_frames];
    let nearest = |pos: f64| ((pos / hop as f64).round() as usize).min(t_frames - 1);
    let srf = sr as f64;
    let mut phase = 0.0;
    let mut in_voice = false;
    for n in 0..n_out {
        let tn = nearest(n as f64);
        if !(track.vuv[tn] && gate[tn]) {
            in_voice = false;
            continue;
        }
        let pos = n as f64 / hop as f64;
        let t0 = (pos.floor() as usize).min(t_frames - 1);
        let t1 = (t0 + 1).min(t_frames - 1);
        let lf0 = if track.vuv[t0] && track.vuv[t1] {
            let frac = pos - t0 as f64;
            (1.0 - frac) * track.lf0[t0] + frac * track.lf0[t1]
        } else {
            track.lf0[tn]
        };
        let f0 = lf0.exp();
        let inc = f0 / srf;
        if !in_voice {
            // first pulse half a period into the voiced region
            in_voice = true;
            phase = 0.5;
        }
        phase += inc;
        if phase < 1.0 {
            continue;
        }
        phase -= 1.0;
        let p = n as f64 - phase / inc;
        let tp = nearest(p);
        let h = responses[tp].get_or_insert_with(|| {
            let la: Vec<Complex64> = (0..n_bins)
                .map(|k| {
                    let periodic = (1.0 - ap[[tp, k]]).max(PERIODIC_FLOOR);
                    Complex64::new(0.5 * (log_env[[tp, k]] + periodic.ln()), 0.0)
                })
                .collect();
            minimum_phase(&plan, &la)
        });
        let start = p.floor();
        let delay = p - start;
        let height = (srf / f0).sqrt();
        let shifted: Vec<Complex64> = h
            .iter()
            .enumerate()
            .map(|(k, &c)| c * Complex64::from_polar(height, -2.0 * PI * k as f64 * delay / n_fft as f64))
            .collect();
        let response = plan.irfft(&shifted);
        let start = start as usize;
        for (o, r) in pulses[start..start + n_fft].iter_mut().zip(response) {
            *o += r;
        }
    }

    for (i, (o, p)) in out.iter_mut().zip(&pulses).enumerate() {
        *o = if gate[nearest(i as f64)] { *o + p } else { 0.0 };
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(VocoderError::NonFinite {
            what: "synthesized sample",
            frame: 0,
        });
    }
    Ok(Waveform::new(out, sr).limit_peak(OUTPUT_PEAK))
}

/// Minimum-phase spectrum with the given one-sided log magnitude, via the
/// folded real cepstrum.
fn minimum_phase(plan: &StftPlan, log_mag: &[Complex64]) -> Vec<Complex64> {
    let n = plan.config().fft_size;
    let cep = plan.irfft(log_mag);
    let folded: Vec<f64> = (0..n)
        .map(|i| match i {
            0 => cep[0],
            i if i < n / 2 => 2.0 * cep[i],
            i if i == n / 2 => cep[i],
            _ => 0.0,
        })
        .collect();
    plan.rfft(&folded).into_iter().map(|c| c.exp()).collect()
}
