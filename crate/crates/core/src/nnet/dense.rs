use ndarray::{Array2, Axis};

use super::{Grads, Param};

/// Inputs to each layer followed by the last activation.
pub(crate) struct StackCache {
    acts: Vec<Array2<f64>>,
}

/// `layers` tanh layers over time-major rows; returns the top activation.
pub(crate) fn forward_stack(params: &[Param], layers: usize, x: Array2<f64>) -> (Array2<f64>, StackCache) {
    let mut acts = Vec::with_capacity(layers + 1);
    let mut h = x;
    for l in 0..layers {
        let (w, b) = (&params[2 * l].value, &params[2 * l + 1].value);
        let z = h.dot(w) + b;
        acts.push(h);
        h = z.mapv(f64::tanh);
    }
    let top = h.clone();
    acts.push(h);
    (top, StackCache { acts })
}

/// Accumulates the gradients of the hidden layers given `dh`, the loss
/// gradient with respect to the top activation.
pub(crate) fn backward_stack(
    params: &[Param],
    layers: usize,
    cache: &StackCache,
    mut dh: Array2<f64>,
    grads: &mut Grads,
) {
    for l in (0..layers).rev() {
        let out = &cache.acts[l + 1];
        dh.zip_mut_with(out, |g, &y| *g *= 1.0 - y * y);
        grads[2 * l] = cache.acts[l].t().dot(&dh);
        grads[2 * l + 1] = dh.sum_axis(Axis(0)).insert_axis(Axis(0));
        if l > 0 {
            dh = dh.dot(&params[2 * l].value.t());
        }
    }
}
