use ndarray::{concatenate, Array2, Axis};
use proptest::prelude::*;

use parasynth::corpus::{mix, Manifest, MixtureSpec, Split};
use parasynth::dsp::{FrameConfig, MelFilterbank, StftPlan, Waveform, SAMPLE_RATE};
use parasynth::features::{compute_deltas, mlpg_smooth, Normalizer};
use parasynth::metrics::{bapd, f0_rmse_corr, mcd, stoi, vuv_error_pct};
use parasynth::nnet::{read_checkpoint, write_checkpoint, Model, ModelConfig, ModelKind, OutputActivation, Precision};
use parasynth::signals::{vowel_sequence, SpeakerProfile};
use parasynth::vocoder::F0Track;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn signal(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, len)
}

fn matrix(rows: std::ops::Range<usize>, cols: usize) -> impl Strategy<Value = Array2<f64>> {
    rows.prop_flat_map(move |r| {
        prop::collection::vec(-5.0f64..5.0, r * cols)
            .prop_map(move |v| Array2::from_shape_vec((r, cols), v).expect("shape"))
    })
}

fn matrix_pair(cols: usize) -> impl Strategy<Value = (Array2<f64>, Array2<f64>)> {
    (1usize..30).prop_flat_map(move |r| (matrix(r..r + 1, cols), matrix(r..r + 1, cols)))
}

fn f0_track() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![Just(0.0), 60.0f64..400.0], 3..50)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn stft_inverts_in_the_interior(x in signal(3000..9000)) {
        let cfg = FrameConfig::default();
        let plan = StftPlan::new(cfg).unwrap();
        let w = Waveform::new(x, SAMPLE_RATE);
        let y = plan.istft(&plan.stft(&w).unwrap()).unwrap();
        prop_assert_eq!(y.len(), w.len());
        let n = w.len();
        let (a, b) = (&w.samples[1024..n - 1024], &y.samples[1024..n - 1024]);
        let num: f64 = a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum();
        let den: f64 = a.iter().map(|p| p * p).sum();
        prop_assert!((num / den).sqrt() < 1e-6);
    }

    #[test]
    fn stft_is_linear(x in signal(2000..2001), y in signal(2000..2001), a in -3.0f64..3.0) {
        let plan = StftPlan::new(FrameConfig::default()).unwrap();
        let sx = plan.stft(&Waveform::new(x.clone(), SAMPLE_RATE)).unwrap();
        let sy = plan.stft(&Waveform::new(y.clone(), SAMPLE_RATE)).unwrap();
        let z: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + q).collect();
        let sz = plan.stft(&Waveform::new(z, SAMPLE_RATE)).unwrap();
        for ((u, v), w) in sx.frames.iter().zip(sy.frames.iter()).zip(sz.frames.iter()) {
            prop_assert!((u * a + v - w).norm() < 1e-9);
        }
    }

    #[test]
    fn mel_power_is_monotone(p in prop::collection::vec(0.0f64..10.0, 513), k in 0usize..513, bump in 0.0f64..5.0) {
        let fb = MelFilterbank::new(80, &FrameConfig::default(), 0.0, 8000.0).unwrap();
        let a = Array2::from_shape_vec((1, 513), p.clone()).unwrap();
        let mut q = p;
        q[k] += bump;
        let b = Array2::from_shape_vec((1, 513), q).unwrap();
        let (ma, mb) = (fb.apply_power(a.view()).unwrap(), fb.apply_power(b.view()).unwrap());
        for (u, v) in ma.iter().zip(mb.iter()) {
            prop_assert!(v >= u);
        }
    }

    #[test]
    fn deltas_are_linear(x in matrix(1..40, 3), a in -2.0f64..2.0, c in -2.0f64..2.0) {
        let y = x.mapv(|v| a * v + c);
        let (dx, ddx) = compute_deltas(x.view());
        let (dy, ddy) = compute_deltas(y.view());
        for (p, q) in dx.iter().zip(dy.iter()).chain(ddx.iter().zip(ddy.iter())) {
            prop_assert!((a * p - q).abs() < 1e-9);
        }
    }

    #[test]
    fn mlpg_returns_consistent_statics(x in matrix(1..40, 2), v in prop::collection::vec(0.01f64..10.0, 6)) {
        let (d, dd) = compute_deltas(x.view());
        let means = concatenate![Axis(1), x, d, dd];
        let c = mlpg_smooth(means.view(), &v);
        for (p, q) in c.iter().zip(x.iter()) {
            prop_assert!((p - q).abs() < 1e-7, "{p} vs {q}");
        }
    }

    #[test]
    fn normalizer_round_trips(x in matrix(2..30, 4)) {
        let n = Normalizer::fit([x.view()], &[]).unwrap();
        let back = n.invert(n.apply(x.view()).unwrap().view()).unwrap();
        for (p, q) in back.iter().zip(x.iter()) {
            prop_assert!((p - q).abs() < 1e-9);
        }
    }

    #[test]
    fn mcd_is_a_metric((a, b) in matrix_pair(8), (_, c) in matrix_pair(8)) {
        let d_ab = mcd(a.view(), b.view()).unwrap();
        prop_assert!(d_ab >= 0.0);
        prop_assert_eq!(d_ab, mcd(b.view(), a.view()).unwrap());
        prop_assert_eq!(mcd(a.view(), a.view()).unwrap(), 0.0);
        let same_tail = a.slice(ndarray::s![.., 1..]) == b.slice(ndarray::s![.., 1..]);
        prop_assert_eq!(d_ab == 0.0, same_tail);
        if c.nrows() == a.nrows() {
            // per-frame Euclidean distances satisfy the triangle inequality
            let d_ac = mcd(a.view(), c.view()).unwrap();
            let d_cb = mcd(c.view(), b.view()).unwrap();
            prop_assert!(d_ab <= d_ac + d_cb + 1e-9);
        }
    }

    #[test]
    fn bapd_is_symmetric_and_nonnegative((a, b) in matrix_pair(5)) {
        let d = bapd(a.view(), b.view()).unwrap();
        prop_assert!(d >= 0.0);
        prop_assert_eq!(d, bapd(b.view(), a.view()).unwrap());
        prop_assert_eq!(d == 0.0, a == b);
    }

    #[test]
    fn f0_measures_are_symmetric(a in f0_track(), b in f0_track()) {
        let n = a.len().min(b.len());
        let ta = F0Track::from_hz(a[..n].to_vec(), 0.005);
        let tb = F0Track::from_hz(b[..n].to_vec(), 0.005);
        prop_assert_eq!(vuv_error_pct(&ta, &tb).unwrap(), vuv_error_pct(&tb, &ta).unwrap());
        prop_assert_eq!(vuv_error_pct(&ta, &ta).unwrap(), 0.0);
        match (f0_rmse_corr(&ta, &tb), f0_rmse_corr(&tb, &ta)) {
            (Ok((r1, c1)), Ok((r2, c2))) => {
                prop_assert!(r1 >= 0.0);
                prop_assert!((r1 - r2).abs() < 1e-12 && (c1 - c2).abs() < 1e-12);
                prop_assert!((-1.0..=1.0).contains(&c1));
            }
            (Err(e1), Err(e2)) => prop_assert_eq!(e1, e2),
            _ => prop_assert!(false, "asymmetric failure"),
        }
    }

    #[test]
    fn mixture_matches_its_snr(c in signal(200..600), n in signal(100..700), off in 0usize..1000, gain in 0.1f64..1.0) {
        prop_assume!(c.iter().any(|v| v.abs() > 1e-3) && n.iter().any(|v| v.abs() > 1e-3));
        let clean = Waveform::new(c, SAMPLE_RATE);
        let noise = Waveform::new(n, SAMPLE_RATE);
        let m = match mix(&clean, &noise, off % noise.len(), gain) {
            Ok(m) => m,
            Err(_) => return Ok(()), // silent wrapped segment
        };
        prop_assert_eq!(m.noisy.len(), clean.len());
        for i in 0..clean.len() {
            let want = gain * (clean.samples[i] + m.noise_segment.samples[i]);
            prop_assert!((m.noisy.samples[i] - want).abs() < 1e-12);
        }
        let snr = 10.0 * (clean.energy() / m.noise_segment.energy()).log10();
        prop_assert!((m.snr_db - snr).abs() < 1e-9);
    }

    #[test]
    fn manifest_jsonl_round_trips(seed in any::<u64>(), snrs in prop::collection::vec(-10.0f64..30.0, 1..6)) {
        let entries: Vec<MixtureSpec> = snrs
            .iter()
            .enumerate()
            .map(|(i, &snr)| MixtureSpec {
                utt_id: format!("spk_{i:04}"),
                split: Split::ALL[i % 3],
                clean_path: format!("/c/{i}.wav").into(),
                noise_path: "/n/0.wav".into(),
                noise_channel: (i % 2) as u16,
                noise_offset: i * 17,
                gain: 0.95,
                snr_db: snr,
                clipped: false,
                seed,
            })
            .collect();
        let m = Manifest { seed, entries };
        let mut buf = Vec::new();
        m.write(&mut buf).unwrap();
        prop_assert_eq!(Manifest::read(buf.as_slice()).unwrap(), m);
    }

    #[test]
    fn checkpoints_round_trip_exactly(recurrent in any::<bool>(), width in 1usize..6, layers in 1usize..3, seed in any::<u64>()) {
        let cfg = ModelConfig {
            kind: if recurrent { ModelKind::Recurrent } else { ModelKind::Feedforward },
            hidden_layers: layers,
            hidden_width: width,
            input_dim: 3,
            output_dim: 2,
            output: OutputActivation::Sigmoid,
            precision: Precision::F32,
            seed,
        };
        let m = Model::new(cfg).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&m, &mut buf).unwrap();
        let back = read_checkpoint(&mut buf.as_slice()).unwrap();
        let x = Array2::from_shape_fn((5, 3), |(t, d)| (t as f64 - d as f64) * 0.3);
        prop_assert_eq!(m.predict(x.view()).unwrap(), back.predict(x.view()).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn stoi_ignores_processed_gain(seed in 0u64..1000, g in prop_oneof![Just(0.5), Just(2.0)]) {
        let x = vowel_sequence(&mut ChaCha8Rng::seed_from_u64(seed), &SpeakerProfile::male(), 1.2);
        let y = vowel_sequence(&mut ChaCha8Rng::seed_from_u64(seed + 1), &SpeakerProfile::male(), 1.2);
        let z = Waveform::new(x.samples.iter().zip(&y.samples).map(|(a, b)| a + 0.5 * b).collect(), SAMPLE_RATE);
        let base = stoi(&x, &z).unwrap();
        prop_assert!((stoi(&x, &z.scaled(g)).unwrap() - base).abs() < 1e-6);
    }
}
