//! Seeded synthetic test material: band-limited sawtooth, formant-filtered
//! vowel sequences with fricatives and pauses, and several noise colours.
//!
//! These stand in for recorded speech and noise corpora in tests, examples
//! and the desk-scale experiments.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dsp::Waveform;

/// F0 range and vocal-tract scaling of a synthetic talker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerProfile {
    pub name: String,
    pub f0_lo: f64,
    pub f0_hi: f64,
    pub formant_scale: f64,
}

impl SpeakerProfile {
    pub fn female() -> Self {
        Self {
            name: "female".into(),
            f0_lo: 165.0,
            f0_hi: 260.0,
            formant_scale: 1.15,
        }
    }

    pub fn male() -> Self {
        Self {
            name: "male".into(),
            f0_lo: 85.0,
            f0_hi: 140.0,
            formant_scale: 1.0,
        }
    }
}

/// F1-F3 of five vowels (adult male averages).
const VOWELS: [[f64; 3]; 5] = [
    [730.0, 1090.0, 2440.0],
    [270.0, 2290.0, 3010.0],
    [300.0, 870.0, 2240.0],
    [530.0, 1840.0, 2480.0],
    [570.0, 840.0, 2410.0],
];
const BANDWIDTHS: [f64; 3] = [80.0, 100.0, 140.0];

/// Band-limited sawtooth at a fixed F0.
pub fn sawtooth(f0: f64, secs: f64, amplitude: f64, sample_rate: u32) -> Waveform {
    let n = (secs * sample_rate as f64).round() as usize;
    sawtooth_contour(&vec![f0; n], amplitude, sample_rate)
}

/// Band-limited sawtooth following a per-sample F0 contour; harmonics stop
/// below 0.95 x Nyquist.
pub fn sawtooth_contour(f0: &[f64], amplitude: f64, sample_rate: u32) -> Waveform {
    let sr = sample_rate as f64;
    let limit = 0.475 * sr;
    let mut phase = 0.0;
    let samples = f0
        .iter()
        .map(|&f| {
            phase += f / sr;
            phase -= phase.floor();
            let n_harm = (limit / f).floor() as usize;
            let mut acc = 0.0;
            for h in 1..=n_harm {
                let sign = if h % 2 == 1 { 1.0 } else { -1.0 };
                acc += sign * (2.0 * PI * h as f64 * phase).sin() / h as f64;
            }
            amplitude * 2.0 / PI * acc
        })
        .collect();
    Waveform::new(samples, sample_rate)
}

/// Two-pole resonator, unity gain at DC scaled so peaks stay moderate.
fn resonate(x: &[f64], freq: f64, bandwidth: f64, sr: f64) -> Vec<f64> {
    let r = (-PI * bandwidth / sr).exp();
    let theta = 2.0 * PI * freq / sr;
    let a1 = 2.0 * r * theta.cos();
    let a2 = -r * r;
    let gain = 1.0 - a1 - a2;
    let (mut y1, mut y2) = (0.0, 0.0);
    x.iter()
        .map(|&v| {
            let y = gain * v + a1 * y1 + a2 * y2;
            y2 = y1;
            y1 = y;
            y
        })
        .collect()
}

/// Periodic source filtered through a cascade of formant resonators.
pub fn formant_filter(source: &[f64], formants: &[f64], bandwidths: &[f64], sr: f64) -> Vec<f64> {
    let mut y = source.to_vec();
    for (&f, &b) in formants.iter().zip(bandwidths) {
        y = resonate(&y, f, b, sr);
    }
    y
}

fn raised_cosine_fade(x: &mut [f64], fade: usize) {
    let n = x.len();
    let fade = fade.min(n / 2);
    for i in 0..fade {
        let g = 0.5 - 0.5 * (PI * i as f64 / fade as f64).cos();
        x[i] *= g;
        x[n - 1 - i] *= g;
    }
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64).sqrt()
}

/// A steady synthetic vowel.
pub fn vowel(f0: f64, formants: &[f64], secs: f64, target_rms: f64, sample_rate: u32) -> Waveform {
    let sr = sample_rate as f64;
    let src = sawtooth(f0, secs, 1.0, sample_rate);
    let mut y = formant_filter(&src.samples, formants, &BANDWIDTHS, sr);
    let g = target_rms / rms(&y).max(1e-12);
    y.iter_mut().for_each(|v| *v *= g);
    Waveform::new(y, sample_rate)
}

/// Roughly `secs` of "speech": leading and trailing silence around
/// alternating vowels, short fricative bursts and pauses. F0 glides
/// continuously from vowel to vowel inside the speaker's range; pauses are
/// digital silence.
pub fn vowel_sequence<R: Rng>(rng: &mut R, speaker: &SpeakerProfile, secs: f64) -> Waveform {
    let sample_rate = crate::dsp::SAMPLE_RATE;
    let sr = sample_rate as f64;
    let total = (secs * sr) as usize;
    let mut out = Vec::with_capacity(total + 8000);
    let lead = rng.random_range(0.05..0.12);
    out.resize((lead * sr) as usize, 0.0);
    let tail = (rng.random_range(0.05..0.12) * sr) as usize;
    let mut f0 = rng.random_range(speaker.f0_lo..speaker.f0_hi);
    while out.len() + tail < total {
        let remaining = (total - tail - out.len()) as f64 / sr;
        if remaining < 0.12 {
            break;
        }
        // vowel
        let dur = rng.random_range(0.15..0.32f64).min(remaining);
        let n = (dur * sr) as usize;
        let f_start = f0;
        let f_end = (f_start * rng.random_range(0.88..1.12)).clamp(speaker.f0_lo, speaker.f0_hi);
        f0 = f_end;
        let contour: Vec<f64> = (0..n)
            .map(|i| f_start + (f_end - f_start) * i as f64 / n as f64)
            .collect();
        let src = sawtooth_contour(&contour, 1.0, sample_rate);
        let v = VOWELS[rng.random_range(0..VOWELS.len())];
        let formants: Vec<f64> = v.iter().map(|f| f * speaker.formant_scale).collect();
        let mut seg = formant_filter(&src.samples, &formants, &BANDWIDTHS, sr);
        let g = rng.random_range(0.05..0.15) / rms(&seg).max(1e-12);
        seg.iter_mut().for_each(|x| *x *= g);
        raised_cosine_fade(&mut seg, (0.015 * sr) as usize);
        out.extend(seg);

        let gap = total.saturating_sub(tail + out.len()) as f64 / sr;
        match rng.random_range(0..3) {
            0 if gap > 0.1 => {
                // fricative: first-difference of white noise, high-passed
                let n = (rng.random_range(0.05..0.09f64).min(gap) * sr) as usize;
                let white: Vec<f64> = (0..n + 1)
                    .map(|_| StandardNormal.sample(rng))
                    .collect::<Vec<f64>>();
                let mut seg: Vec<f64> = white.windows(2).map(|w| w[1] - w[0]).collect();
                let g = rng.random_range(0.01..0.03) / rms(&seg).max(1e-12);
                seg.iter_mut().for_each(|x| *x *= g);
                raised_cosine_fade(&mut seg, (0.01 * sr) as usize);
                out.extend(seg);
            }
            1 if gap > 0.05 => {
                let n = (rng.random_range(0.03..0.07f64).min(gap) * sr) as usize;
                out.resize(out.len() + n, 0.0);
            }
            _ => {}
        }
    }
    out.resize(total.max(out.len()), 0.0);
    Waveform::new(out, sample_rate)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseColor {
    White,
    Pink,
    /// Leaky-integrated white noise, dominated by low frequencies.
    Brown,
    /// Pink noise with a slow random amplitude modulation.
    Modulated,
}

impl NoiseColor {
    pub const ALL: [NoiseColor; 4] = [
        NoiseColor::White,
        NoiseColor::Pink,
        NoiseColor::Brown,
        NoiseColor::Modulated,
    ];
}

/// Uniform white noise in `[-amplitude, amplitude]`.
pub fn white_noise<R: Rng>(rng: &mut R, n: usize, amplitude: f64, sample_rate: u32) -> Waveform {
    Waveform::new(
        (0..n).map(|_| rng.random_range(-amplitude..=amplitude)).collect(),
        sample_rate,
    )
}

/// Gaussian noise of the given colour, scaled to `target_rms`.
pub fn colored_noise<R: Rng>(
    rng: &mut R,
    color: NoiseColor,
    n: usize,
    target_rms: f64,
    sample_rate: u32,
) -> Waveform {
    let mut white = || -> f64 { StandardNormal.sample(&mut *rng) };
    let mut y: Vec<f64> = match color {
        NoiseColor::White => (0..n).map(|_| white()).collect(),
        NoiseColor::Pink | NoiseColor::Modulated => {
            // Paul Kellet's economy pink filter
            let (mut b0, mut b1, mut b2) = (0.0, 0.0, 0.0);
            (0..n)
                .map(|_| {
                    let w = white();
                    b0 = 0.99765 * b0 + w * 0.0990460;
                    b1 = 0.96300 * b1 + w * 0.2965164;
                    b2 = 0.57000 * b2 + w * 1.0526913;
                    b0 + b1 + b2 + w * 0.1848
                })
                .collect()
        }
        NoiseColor::Brown => {
            let mut acc = 0.0;
            (0..n)
                .map(|_| {
                    acc = 0.995 * acc + 0.1 * white();
                    acc
                })
                .collect()
        }
    };
    if color == NoiseColor::Modulated {
        let rate = rng.random_range(0.5..3.0);
        let phase = rng.random_range(0.0..2.0 * PI);
        let sr = sample_rate as f64;
        y.iter_mut().enumerate().for_each(|(i, v)| {
            *v *= 1.0 + 0.6 * (2.0 * PI * rate * i as f64 / sr + phase).sin();
        });
    }
    let g = target_rms / rms(&y).max(1e-12);
    y.iter_mut().for_each(|v| *v *= g);
    Waveform::new(y, sample_rate)
}
