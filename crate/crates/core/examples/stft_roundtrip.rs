//! Analyze a chirp with the default STFT and resynthesize it.

use std::f64::consts::PI;

use parasynth::dsp::{FrameConfig, StftPlan, Waveform, SAMPLE_RATE};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n = SAMPLE_RATE as usize;
    let x = Waveform::new(
        (0..n)
            .map(|i| {
                let t = i as f64 / SAMPLE_RATE as f64;
                (2.0 * PI * (200.0 * t + 900.0 * t * t)).sin() * 0.5
            })
            .collect(),
        SAMPLE_RATE,
    );
    let cfg = FrameConfig::default();
    let plan = StftPlan::new(cfg)?;
    let spec = plan.stft(&x)?;
    let y = plan.istft(&spec)?;
    println!("{} samples -> {} frames x {} bins", x.len(), spec.n_frames(), spec.n_bins());

    let w = cfg.window_len;
    let err: f64 = x.samples[w..n - w]
        .iter()
        .zip(&y.samples[w..n - w])
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let norm: f64 = x.samples[w..n - w].iter().map(|a| a * a).sum::<f64>().sqrt();
    println!("interior relative error: {:.2e}", err / norm);
    Ok(())
}
