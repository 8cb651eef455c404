use std::f64::consts::PI;

use ndarray::{s, Array2};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::MetricsError;
use crate::dsp::Waveform;

const FS: u32 = 10_000;
const FRAME: usize = 256;
const HOP: usize = 128;
const NFFT: usize = 512;
const BANDS: usize = 15;
const MIN_FREQ: f64 = 150.0;
const SEGMENT: usize = 30;
const BETA_DB: f64 = -15.0;
const DYN_RANGE_DB: f64 = 40.0;
const EPS: f64 = f64::EPSILON;
/// Zero crossings of the resampling kernel on each side.
const SINC_ZEROS: f64 = 16.0;

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Blackman-windowed sinc resampler between integer rates. The kernel for
/// each output phase is precomputed, so results depend only on the input.
pub fn resample(x: &[f64], from: u32, to: u32) -> Vec<f64> {
    if from == to {
        return x.to_vec();
    }
    let g = gcd(from, to);
    let (up, down) = ((to / g) as usize, (from / g) as usize);
    // cutoff in cycles per input sample
    let fc = 0.5 * (to as f64 / from as f64).min(1.0);
    let half = SINC_ZEROS / (2.0 * fc);
    let reach = half.ceil() as isize;
    let n_out = (x.len() * up).div_ceil(down);
    let kernels: Vec<Vec<f64>> = (0..up)
        .map(|phase| {
            let frac = phase as f64 / up as f64;
            (-reach..=reach)
                .map(|j| {
                    let d = j as f64 - frac;
                    if d.abs() >= half {
                        return 0.0;
                    }
                    let arg = 2.0 * fc * d;
                    let sinc = if arg == 0.0 { 1.0 } else { (PI * arg).sin() / (PI * arg) };
                    let w = 0.42 + 0.5 * (PI * d / half).cos() + 0.08 * (2.0 * PI * d / half).cos();
                    2.0 * fc * sinc * w
                })
                .collect()
        })
        .collect();
    (0..n_out)
        .map(|n| {
            let pos = n * down;
            let (base, phase) = ((pos / up) as isize, pos % up);
            kernels[phase]
                .iter()
                .enumerate()
                .map(|(i, h)| {
                    let k = base - reach + i as isize;
                    if k >= 0 && (k as usize) < x.len() {
                        h * x[k as usize]
                    } else {
                        0.0
                    }
                })
                .sum()
        })
        .collect()
}

fn hanning() -> Vec<f64> {
    // symmetric Hann of FRAME + 2 points without its zero end points
    (1..=FRAME)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / (FRAME + 1) as f64).cos())
        .collect()
}

/// Drops frames of both signals whose clean energy is more than
/// `DYN_RANGE_DB` below the loudest clean frame, then overlap-adds the rest.
fn remove_silent_frames(x: &[f64], y: &[f64], w: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let starts: Vec<usize> = (0..x.len().saturating_sub(FRAME)).step_by(HOP).collect();
    let energy = |s: usize| -> f64 {
        let e: f64 = (0..FRAME).map(|i| (w[i] * x[s + i]).powi(2)).sum();
        20.0 * (e.sqrt() + EPS).log10()
    };
    let energies: Vec<f64> = starts.iter().map(|&s| energy(s)).collect();
    let max = energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let kept: Vec<usize> = starts
        .iter()
        .zip(&energies)
        .filter(|(_, &e)| e > max - DYN_RANGE_DB)
        .map(|(&s, _)| s)
        .collect();
    let n = if kept.is_empty() { 0 } else { (kept.len() - 1) * HOP + FRAME };
    let (mut xs, mut ys) = (vec![0.0; n], vec![0.0; n]);
    for (j, &s) in kept.iter().enumerate() {
        for i in 0..FRAME {
            xs[j * HOP + i] += w[i] * x[s + i];
            ys[j * HOP + i] += w[i] * y[s + i];
        }
    }
    (xs, ys)
}

/// One-third octave band matrix over the rfft bins.
fn third_octave_bands() -> Vec<(usize, usize)> {
    let n_bins = NFFT / 2 + 1;
    let f: Vec<f64> = (0..n_bins).map(|k| k as f64 * FS as f64 / NFFT as f64).collect();
    let nearest = |target: f64| -> usize {
        (0..n_bins)
            .min_by(|&a, &b| (f[a] - target).powi(2).total_cmp(&(f[b] - target).powi(2)))
            .expect("bins")
    };
    (0..BANDS)
        .map(|k| {
            let k = k as f64;
            let lo = MIN_FREQ * 2f64.powf((2.0 * k - 1.0) / 6.0);
            let hi = MIN_FREQ * 2f64.powf((2.0 * k + 1.0) / 6.0);
            (nearest(lo), nearest(hi))
        })
        .collect()
}

/// `BANDS x frames` band magnitudes.
fn band_envelopes(x: &[f64], w: &[f64]) -> Array2<f64> {
    let fft = FftPlanner::new().plan_fft_forward(NFFT);
    let bands = third_octave_bands();
    let starts: Vec<usize> = (0..x.len().saturating_sub(FRAME)).step_by(HOP).collect();
    let mut out = Array2::zeros((BANDS, starts.len()));
    let mut buf = vec![Complex64::new(0.0, 0.0); NFFT];
    for (t, &s) in starts.iter().enumerate() {
        buf.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        for i in 0..FRAME {
            buf[i] = Complex64::new(w[i] * x[s + i], 0.0);
        }
        fft.process(&mut buf);
        for (b, &(lo, hi)) in bands.iter().enumerate() {
            out[[b, t]] = buf[lo..hi].iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        }
    }
    out
}

/// Short-time objective intelligibility of `processed` against `clean`.
/// Both are trimmed to the shorter length, resampled to 10 kHz, stripped
/// of frames 40 dB below the loudest clean frame and compared over
/// 30-frame one-third-octave envelopes with clipping at -15 dB SDR.
pub fn stoi(clean: &Waveform, processed: &Waveform) -> Result<f64, MetricsError> {
    if clean.sample_rate != processed.sample_rate {
        return Err(MetricsError::SampleRate(clean.sample_rate, processed.sample_rate));
    }
    let n = clean.len().min(processed.len());
    let x = resample(&clean.samples[..n], clean.sample_rate, FS);
    let y = resample(&processed.samples[..n], clean.sample_rate, FS);
    let w = hanning();
    let (x, y) = remove_silent_frames(&x, &y, &w);
    let xe = band_envelopes(&x, &w);
    let ye = band_envelopes(&y, &w);
    let frames = xe.ncols();
    if frames < SEGMENT {
        return Err(MetricsError::TooShort {
            frames,
            needed: SEGMENT,
        });
    }
    let clip = 10f64.powf(-BETA_DB / 20.0);
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let centered = |v: &mut Vec<f64>| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter_mut().for_each(|a| *a -= m);
        let l = norm(v) + EPS;
        v.iter_mut().for_each(|a| *a /= l);
    };
    let n_seg = frames - SEGMENT + 1;
    let mut total = 0.0;
    for m in SEGMENT..=frames {
        for b in 0..BANDS {
            let xs = xe.slice(s![b, m - SEGMENT..m]);
            let ys = ye.slice(s![b, m - SEGMENT..m]);
            let mut xv: Vec<f64> = xs.to_vec();
            let alpha = norm(&xv) / (norm(&ys.to_vec()) + EPS);
            let mut yv: Vec<f64> = ys
                .iter()
                .zip(&xv)
                .map(|(&yy, &xx)| (yy * alpha).min(xx * (1.0 + clip)))
                .collect();
            centered(&mut yv);
            centered(&mut xv);
            total += xv.iter().zip(&yv).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    Ok(total / (BANDS * n_seg) as f64)
}
