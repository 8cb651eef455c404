use ndarray::{Array2, ArrayView2};

/// First and second differences along time with replicated edge frames:
/// `d_t = (x[t+1] - x[t-1]) / 2`, `dd_t = x[t+1] - 2 x[t] + x[t-1]`.
pub fn compute_deltas(x: ArrayView2<f64>) -> (Array2<f64>, Array2<f64>) {
    let (t, d) = x.dim();
    let mut delta = Array2::zeros((t, d));
    let mut accel = Array2::zeros((t, d));
    for i in 0..t {
        let prev = x.row(i.saturating_sub(1));
        let next = x.row((i + 1).min(t.saturating_sub(1)));
        let cur = x.row(i);
        for j in 0..d {
            delta[[i, j]] = 0.5 * (next[j] - prev[j]);
            accel[[i, j]] = next[j] - 2.0 * cur[j] + prev[j];
        }
    }
    (delta, accel)
}

/// Nonzero taps `(frame, weight)` of the static, delta and delta-delta
/// windows at frame `t` of a `len`-frame sequence (edges replicated).
fn taps(window: usize, t: usize, len: usize) -> [(usize, f64); 3] {
    let prev = t.saturating_sub(1);
    let next = (t + 1).min(len - 1);
    match window {
        0 => [(t, 1.0), (t, 0.0), (t, 0.0)],
        1 => [(prev, -0.5), (next, 0.5), (t, 0.0)],
        _ => [(prev, 1.0), (t, -2.0), (next, 1.0)],
    }
}

/// Band storage of a symmetric positive definite matrix with two
/// sub-diagonals: `band[i][k]` holds `A[i][i - k]`.
struct Band2 {
    band: Vec<[f64; 3]>,
}

impl Band2 {
    fn zeros(n: usize) -> Self {
        Self {
            band: vec![[0.0; 3]; n],
        }
    }

    fn add(&mut self, i: usize, j: usize, v: f64) {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        self.band[hi][hi - lo] += v;
    }

    /// Solves `A x = b` in place by banded Cholesky.
    fn solve(mut self, b: &mut [f64]) {
        let n = self.band.len();
        for i in 0..n {
            for k in (0..=2.min(i)).rev() {
                let j = i - k;
                let mut s = self.band[i][k];
                for m in j.saturating_sub(2).max(i.saturating_sub(2))..j {
                    s -= self.band[i][i - m] * self.band[j][j - m];
                }
                if k == 0 {
                    assert!(s > 0.0, "MLPG system is not positive definite");
                    self.band[i][0] = s.sqrt();
                } else {
                    self.band[i][k] = s / self.band[j][0];
                }
            }
        }
        for i in 0..n {
            let mut s = b[i];
            for m in i.saturating_sub(2)..i {
                s -= self.band[i][i - m] * b[m];
            }
            b[i] = s / self.band[i][0];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for m in i + 1..(i + 3).min(n) {
                s -= self.band[m][m - i] * b[m];
            }
            b[i] = s / self.band[i][0];
        }
    }
}

/// Maximum-likelihood parameter generation for one stream.
///
/// `means` is `T x 3D` laid out as `[static, delta, delta-delta]` blocks
/// and `variances` holds the `3D` matching variances. Returns the `T x D`
/// static trajectory `c` minimizing `sum_k (W_k c - mu_k)^T S_k^-1 (W_k c - mu_k)`
/// with the windows of [`compute_deltas`].
pub fn mlpg_smooth(means: ArrayView2<f64>, variances: &[f64]) -> Array2<f64> {
    let (t, cols) = means.dim();
    assert!(cols % 3 == 0 && variances.len() == cols);
    assert!(variances.iter().all(|&v| v > 0.0), "variances must be positive");
    let d = cols / 3;
    let mut out = Array2::zeros((t, d));
    if t == 0 {
        return out;
    }
    let mut rhs = vec![0.0; t];
    for j in 0..d {
        let mut a = Band2::zeros(t);
        rhs.iter_mut().for_each(|v| *v = 0.0);
        for w in 0..3 {
            let col = w * d + j;
            let precision = 1.0 / variances[col];
            for row in 0..t {
                let tp = taps(w, row, t);
                let mu = means[[row, col]];
                for &(p, wp) in &tp {
                    if wp == 0.0 {
                        continue;
                    }
                    rhs[p] += precision * wp * mu;
                    // outer product of the window row, lower triangle only
                    for &(q, wq) in &tp {
                        if wq != 0.0 && q <= p {
                            a.add(p, q, precision * wp * wq);
                        }
                    }
                }
            }
        }
        a.solve(&mut rhs);
        for (row, v) in rhs.iter().enumerate() {
            out[[row, j]] = *v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{concatenate, s, Axis};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_sequence_has_no_deltas() {
        let x = Array2::from_elem((7, 3), 2.5);
        let (d, dd) = compute_deltas(x.view());
        assert!(d.iter().chain(dd.iter()).all(|&v| v == 0.0));
    }

    #[test]
    fn ramp_and_bump() {
        let x = Array2::from_shape_fn((6, 1), |(t, _)| t as f64);
        let (d, dd) = compute_deltas(x.view());
        for t in 1..5 {
            assert_eq!(d[[t, 0]], 1.0);
            assert_eq!(dd[[t, 0]], 0.0);
        }
        let bump = Array2::from_shape_vec((3, 1), vec![0.0, 1.0, 0.0]).unwrap();
        let (_, dd) = compute_deltas(bump.view());
        assert_eq!(dd[[1, 0]], -2.0);
    }

    #[test]
    fn single_frame_gives_zeros() {
        let x = Array2::from_elem((1, 4), 3.0);
        let (d, dd) = compute_deltas(x.view());
        assert!(d.iter().chain(dd.iter()).all(|&v| v == 0.0));
    }

    fn stacked(c: &Array2<f64>) -> Array2<f64> {
        let (d, dd) = compute_deltas(c.view());
        concatenate![Axis(1), c.view(), d.view(), dd.view()]
    }

    #[test]
    fn consistent_means_are_a_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = Array2::from_shape_fn((40, 3), |_| rng.random_range(-2.0..2.0));
        let var: Vec<f64> = (0..9).map(|_| rng.random_range(0.1..3.0)).collect();
        let out = mlpg_smooth(stacked(&c).view(), &var);
        for (a, b) in out.iter().zip(c.iter()) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_means_give_zero_output() {
        let out = mlpg_smooth(Array2::zeros((10, 6)).view(), &[1.0; 6]);
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn tiny_static_variance_pins_the_statics() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = Array2::from_shape_fn((30, 6), |_| rng.random_range(-1.0..1.0));
        let var = [1e-9, 1e-9, 1.0, 1.0, 1.0, 1.0];
        let out = mlpg_smooth(m.view(), &var);
        let statics = m.slice(s![.., 0..2]);
        for (a, b) in out.iter().zip(statics.iter()) {
            assert!((a - b).abs() < 1e-3);
        }
    }

    #[test]
    fn short_sequences_solve() {
        for t in 1..4 {
            let m = Array2::from_elem((t, 3), 1.0);
            let out = mlpg_smooth(m.view(), &[1.0; 3]);
            assert!(out.iter().all(|v| v.is_finite()));
        }
    }
}
