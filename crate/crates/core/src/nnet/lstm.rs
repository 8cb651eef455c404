use ndarray::{s, Array2, ArrayView2, Axis, Zip};

use super::{sigmoid, Grads, Param};

/// Per-layer activations over time-major rows (`t * B + b`).
pub(crate) struct LayerCache {
    x: Array2<f64>,
    i: Array2<f64>,
    f: Array2<f64>,
    g: Array2<f64>,
    o: Array2<f64>,
    c: Array2<f64>,
    tanh_c: Array2<f64>,
    h: Array2<f64>,
}

pub(crate) struct StackCache {
    layers: Vec<LayerCache>,
}

/// Gate order inside the `4H` blocks: input, forget, candidate, output.
fn layer_forward(wx: &Array2<f64>, wh: &Array2<f64>, bias: &Array2<f64>, x: Array2<f64>, b: usize) -> LayerCache {
    let hsz = wh.nrows();
    let rows = x.nrows();
    let steps = rows / b.max(1);
    let pre = x.dot(wx) + bias;
    let mut cache = LayerCache {
        x,
        i: Array2::zeros((rows, hsz)),
        f: Array2::zeros((rows, hsz)),
        g: Array2::zeros((rows, hsz)),
        o: Array2::zeros((rows, hsz)),
        c: Array2::zeros((rows, hsz)),
        tanh_c: Array2::zeros((rows, hsz)),
        h: Array2::zeros((rows, hsz)),
    };
    let mut h_prev = Array2::<f64>::zeros((b, hsz));
    let mut c_prev = Array2::<f64>::zeros((b, hsz));
    for t in 0..steps {
        let r = t * b..(t + 1) * b;
        let a = &pre.slice(s![r.clone(), ..]) + &h_prev.dot(wh);
        let mut gi = cache.i.slice_mut(s![r.clone(), ..]);
        gi.assign(&a.slice(s![.., 0..hsz]).mapv(sigmoid));
        let mut gf = cache.f.slice_mut(s![r.clone(), ..]);
        gf.assign(&a.slice(s![.., hsz..2 * hsz]).mapv(sigmoid));
        let mut gg = cache.g.slice_mut(s![r.clone(), ..]);
        gg.assign(&a.slice(s![.., 2 * hsz..3 * hsz]).mapv(f64::tanh));
        let mut go = cache.o.slice_mut(s![r.clone(), ..]);
        go.assign(&a.slice(s![.., 3 * hsz..]).mapv(sigmoid));
        let (i, f, g, o) = (
            cache.i.slice(s![r.clone(), ..]),
            cache.f.slice(s![r.clone(), ..]),
            cache.g.slice(s![r.clone(), ..]),
            cache.o.slice(s![r.clone(), ..]),
        );
        let c = &f * &c_prev + &i * &g;
        let tc = c.mapv(f64::tanh);
        let h = &o * &tc;
        cache.c.slice_mut(s![r.clone(), ..]).assign(&c);
        cache.tanh_c.slice_mut(s![r.clone(), ..]).assign(&tc);
        cache.h.slice_mut(s![r, ..]).assign(&h);
        h_prev = h;
        c_prev = c;
    }
    cache
}

pub(crate) fn forward_stack(params: &[Param], layers: usize, x: Array2<f64>, b: usize) -> (Array2<f64>, StackCache) {
    let mut caches = Vec::with_capacity(layers);
    let mut input = x;
    for l in 0..layers {
        let cache = layer_forward(&params[3 * l].value, &params[3 * l + 1].value, &params[3 * l + 2].value, input, b);
        input = cache.h.clone();
        caches.push(cache);
    }
    (input, StackCache { layers: caches })
}

/// Backpropagation through time over the whole sequence. Returns the
/// gradient with respect to the layer input.
fn layer_backward(
    wx: &Array2<f64>,
    wh: &Array2<f64>,
    cache: &LayerCache,
    dh_above: ArrayView2<f64>,
    b: usize,
    need_dx: bool,
) -> (Array2<f64>, Array2<f64>, Array2<f64>, Option<Array2<f64>>) {
    let hsz = wh.nrows();
    let rows = cache.h.nrows();
    let steps = rows / b.max(1);
    let mut da = Array2::<f64>::zeros((rows, 4 * hsz));
    let mut dwh = Array2::<f64>::zeros(wh.dim());
    let mut dh_next = Array2::<f64>::zeros((b, hsz));
    let mut dc_next = Array2::<f64>::zeros((b, hsz));
    let zeros = Array2::<f64>::zeros((b, hsz));
    for t in (0..steps).rev() {
        let r = t * b..(t + 1) * b;
        let dh = &dh_above.slice(s![r.clone(), ..]) + &dh_next;
        let (i, f, g, o, tc) = (
            cache.i.slice(s![r.clone(), ..]),
            cache.f.slice(s![r.clone(), ..]),
            cache.g.slice(s![r.clone(), ..]),
            cache.o.slice(s![r.clone(), ..]),
            cache.tanh_c.slice(s![r.clone(), ..]),
        );
        let c_prev = if t > 0 {
            cache.c.slice(s![(t - 1) * b..t * b, ..])
        } else {
            zeros.view()
        };
        let mut dc = Array2::<f64>::zeros((b, hsz));
        Zip::from(&mut dc)
            .and(&dh)
            .and(&o)
            .and(&tc)
            .and(&dc_next)
            .for_each(|dc, &dh, &o, &tc, &dn| *dc = dh * o * (1.0 - tc * tc) + dn);
        let mut block = da.slice_mut(s![r.clone(), ..]);
        Zip::from(block.slice_mut(s![.., 0..hsz]))
            .and(&dc)
            .and(&g)
            .and(&i)
            .for_each(|d, &dc, &g, &i| *d = dc * g * i * (1.0 - i));
        Zip::from(block.slice_mut(s![.., hsz..2 * hsz]))
            .and(&dc)
            .and(&c_prev)
            .and(&f)
            .for_each(|d, &dc, &cp, &f| *d = dc * cp * f * (1.0 - f));
        Zip::from(block.slice_mut(s![.., 2 * hsz..3 * hsz]))
            .and(&dc)
            .and(&i)
            .and(&g)
            .for_each(|d, &dc, &i, &g| *d = dc * i * (1.0 - g * g));
        Zip::from(block.slice_mut(s![.., 3 * hsz..]))
            .and(&dh)
            .and(&tc)
            .and(&o)
            .for_each(|d, &dh, &tc, &o| *d = dh * tc * o * (1.0 - o));
        dc_next = &dc * &f;
        let block = da.slice(s![r, ..]);
        dh_next = block.dot(&wh.t());
        if t > 0 {
            let h_prev = cache.h.slice(s![(t - 1) * b..t * b, ..]);
            dwh += &h_prev.t().dot(&block);
        }
    }
    let dwx = cache.x.t().dot(&da);
    let db = da.sum_axis(Axis(0)).insert_axis(Axis(0));
    let dx = need_dx.then(|| da.dot(&wx.t()));
    (dwx, dwh, db, dx)
}

pub(crate) fn backward_stack(
    params: &[Param],
    layers: usize,
    cache: &StackCache,
    dh: Array2<f64>,
    b: usize,
    grads: &mut Grads,
) {
    let mut dh = dh;
    for l in (0..layers).rev() {
        let (dwx, dwh, db, dx) = layer_backward(
            &params[3 * l].value,
            &params[3 * l + 1].value,
            &cache.layers[l],
            dh.view(),
            b,
            l > 0,
        );
        grads[3 * l] = dwx;
        grads[3 * l + 1] = dwh;
        grads[3 * l + 2] = db;
        if let Some(dx) = dx {
            dh = dx;
        }
    }
}
