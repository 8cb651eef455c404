//! Deltas of a trajectory, and MLPG recovering a smooth static track from
//! noisy statics with clean deltas.

use ndarray::{concatenate, Array2, Axis};
use parasynth::features::{compute_deltas, mlpg_smooth};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let t = 200;
    let clean = Array2::from_shape_fn((t, 1), |(i, _)| (i as f64 * 0.05).sin());
    let (d, dd) = compute_deltas(clean.view());
    println!("delta at t=0..4: {:?}", &d.column(0).to_vec()[..4]);
    println!("delta-delta at t=0..4: {:?}", &dd.column(0).to_vec()[..4]);

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let noisy = clean.mapv(|v| v + rng.random_range(-0.3..0.3));
    let means = concatenate![Axis(1), noisy, d, dd];
    // trust the deltas far more than the statics
    let smooth = mlpg_smooth(means.view(), &[0.1, 1e-4, 1e-4]);

    let rmse = |a: &Array2<f64>| ((a - &clean).mapv(|e| e * e).mean().unwrap_or(0.0)).sqrt();
    println!("static RMSE: noisy {:.4}, after MLPG {:.4}", rmse(&noisy), rmse(&smooth));
}
