//! Float forward and backward kernels, one pair per layer kind. Tensors are
//! NCHW; fully-connected outputs are `[N, out, 1, 1]`.

use alloc::vec;
use alloc::vec::Vec;

use crate::graph::LayerSpec;
use crate::tensor::FloatTensor;

fn dims(t: &FloatTensor) -> [usize; 4] {
    let s = t.shape();
    [s[0], s[1], s[2], s[3]]
}

fn out_dim(size: usize, k: usize, s: usize, p: usize) -> usize {
    (size + 2 * p - k) / s + 1
}

fn tensor(shape: Vec<usize>, data: Vec<f64>) -> FloatTensor {
    // Kernels only combine finite values; overflow is caught at the loss.
    let mut t = FloatTensor::zeros(shape);
    t.data_mut().copy_from_slice(&data);
    t
}

/// Visits every (output index, input index, weight index) triple of a
/// convolution whose input position lies inside the image.
#[inline]
fn conv_walk<F: FnMut(usize, usize, usize)>(x: [usize; 4], l: &LayerSpec, mut f: F) {
    let [n, c, h, w] = x;
    let (k, s, p) = (l.kernel, l.stride, l.pad as isize);
    let (oh, ow) = (out_dim(h, k, s, l.pad), out_dim(w, k, s, l.pad));
    let o = l.out_ch;
    for b in 0..n {
        for oc in 0..o {
            for y in 0..oh {
                for xo in 0..ow {
                    let oi = ((b * o + oc) * oh + y) * ow + xo;
                    for ic in 0..c {
                        for ky in 0..k {
                            let iy = (y * s + ky) as isize - p;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let row = ((b * c + ic) * h + iy as usize) * w;
                            let wrow = ((oc * c + ic) * k + ky) * k;
                            for kx in 0..k {
                                let ix = (xo * s + kx) as isize - p;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                f(oi, row + ix as usize, wrow + kx);
                            }
                        }
                    }
                }
            }
        }
    }
}

pub fn conv_forward(x: &FloatTensor, w: &FloatTensor, l: &LayerSpec) -> FloatTensor {
    let d = dims(x);
    let (oh, ow) = (out_dim(d[2], l.kernel, l.stride, l.pad), out_dim(d[3], l.kernel, l.stride, l.pad));
    let mut y = vec![0.0; d[0] * l.out_ch * oh * ow];
    let (xs, ws) = (x.data(), w.data());
    conv_walk(d, l, |o, i, k| y[o] += xs[i] * ws[k]);
    tensor(vec![d[0], l.out_ch, oh, ow], y)
}

/// Returns `(dW, dX)`; `dX` only when requested.
pub fn conv_backward(
    x: &FloatTensor,
    w: &FloatTensor,
    gy: &FloatTensor,
    l: &LayerSpec,
    want_dw: bool,
    want_dx: bool,
) -> (Option<FloatTensor>, Option<FloatTensor>) {
    let d = dims(x);
    let (xs, ws, g) = (x.data(), w.data(), gy.data());
    let mut dw = want_dw.then(|| vec![0.0; w.len()]);
    let mut dx = want_dx.then(|| vec![0.0; x.len()]);
    conv_walk(d, l, |o, i, k| {
        let go = g[o];
        if go == 0.0 {
            return;
        }
        if let Some(dw) = dw.as_mut() {
            dw[k] += go * xs[i];
        }
        if let Some(dx) = dx.as_mut() {
            dx[i] += go * ws[k];
        }
    });
    (dw.map(|v| tensor(w.shape().to_vec(), v)), dx.map(|v| tensor(x.shape().to_vec(), v)))
}

pub fn fc_forward(x: &FloatTensor, w: &FloatTensor, l: &LayerSpec) -> FloatTensor {
    let n = x.shape()[0];
    let f = l.in_ch;
    let o = l.out_ch;
    let mut y = vec![0.0; n * o];
    for b in 0..n {
        let xs = &x.data()[b * f..(b + 1) * f];
        for oc in 0..o {
            let ws = &w.data()[oc * f..(oc + 1) * f];
            y[b * o + oc] = xs.iter().zip(ws).map(|(a, b)| a * b).sum();
        }
    }
    tensor(vec![n, o, 1, 1], y)
}

pub fn fc_backward(
    x: &FloatTensor,
    w: &FloatTensor,
    gy: &FloatTensor,
    l: &LayerSpec,
    want_dw: bool,
    want_dx: bool,
) -> (Option<FloatTensor>, Option<FloatTensor>) {
    let n = x.shape()[0];
    let (f, o) = (l.in_ch, l.out_ch);
    let mut dw = want_dw.then(|| vec![0.0; w.len()]);
    let mut dx = want_dx.then(|| vec![0.0; x.len()]);
    for b in 0..n {
        for oc in 0..o {
            let go = gy.data()[b * o + oc];
            if go == 0.0 {
                continue;
            }
            if let Some(dw) = dw.as_mut() {
                for (d, xv) in dw[oc * f..(oc + 1) * f].iter_mut().zip(&x.data()[b * f..(b + 1) * f]) {
                    *d += go * xv;
                }
            }
            if let Some(dx) = dx.as_mut() {
                for (d, wv) in dx[b * f..(b + 1) * f].iter_mut().zip(&w.data()[oc * f..(oc + 1) * f]) {
                    *d += go * wv;
                }
            }
        }
    }
    (dw.map(|v| tensor(w.shape().to_vec(), v)), dx.map(|v| tensor(x.shape().to_vec(), v)))
}

pub fn relu_forward(x: &FloatTensor) -> FloatTensor {
    tensor(x.shape().to_vec(), x.data().iter().map(|&v| v.max(0.0)).collect())
}

/// Subgradient 0 at the kink.
pub fn relu_backward(x: &FloatTensor, gy: &FloatTensor) -> FloatTensor {
    let d = x.data().iter().zip(gy.data()).map(|(&v, &g)| if v > 0.0 { g } else { 0.0 }).collect();
    tensor(x.shape().to_vec(), d)
}

/// Visits every pooling window: (output index, in-image input indices).
fn pool_walk<F: FnMut(usize, &[usize])>(x: [usize; 4], l: &LayerSpec, mut f: F) {
    let [n, c, h, w] = x;
    let (k, s, p) = (l.kernel, l.stride, l.pad as isize);
    let (oh, ow) = (out_dim(h, k, s, l.pad), out_dim(w, k, s, l.pad));
    let mut win = Vec::with_capacity(k * k);
    for plane in 0..n * c {
        for y in 0..oh {
            for xo in 0..ow {
                win.clear();
                for ky in 0..k {
                    let iy = (y * s + ky) as isize - p;
                    for kx in 0..k {
                        let ix = (xo * s + kx) as isize - p;
                        if iy >= 0 && ix >= 0 && iy < h as isize && ix < w as isize {
                            win.push((plane * h + iy as usize) * w + ix as usize);
                        }
                    }
                }
                f((plane * oh + y) * ow + xo, &win);
            }
        }
    }
}

fn pool_shape(x: &FloatTensor, l: &LayerSpec) -> Vec<usize> {
    let d = dims(x);
    vec![d[0], d[1], out_dim(d[2], l.kernel, l.stride, l.pad), out_dim(d[3], l.kernel, l.stride, l.pad)]
}

/// Forward value and the input index each output copied (first maximum).
pub fn max_pool_forward(x: &FloatTensor, l: &LayerSpec) -> (FloatTensor, Vec<Option<usize>>) {
    let shape = pool_shape(x, l);
    let n: usize = shape.iter().product();
    let mut y = vec![0.0; n];
    let mut arg = vec![None; n];
    let xs = x.data();
    pool_walk(dims(x), l, |o, win| {
        let mut best: Option<usize> = None;
        for &i in win {
            if best.is_none_or(|b| xs[i] > xs[b]) {
                best = Some(i);
            }
        }
        y[o] = best.map_or(0.0, |b| xs[b]);
        arg[o] = best;
    });
    (tensor(shape, y), arg)
}

pub fn max_pool_backward(x: &FloatTensor, arg: &[Option<usize>], gy: &FloatTensor) -> FloatTensor {
    let mut dx = vec![0.0; x.len()];
    for (a, g) in arg.iter().zip(gy.data()) {
        if let Some(i) = a {
            dx[*i] += g;
        }
    }
    tensor(x.shape().to_vec(), dx)
}

pub fn avg_pool_forward(x: &FloatTensor, l: &LayerSpec) -> FloatTensor {
    let shape = pool_shape(x, l);
    let mut y = vec![0.0; shape.iter().product()];
    let xs = x.data();
    let area = (l.kernel * l.kernel) as f64;
    pool_walk(dims(x), l, |o, win| y[o] = win.iter().map(|&i| xs[i]).sum::<f64>() / area);
    tensor(shape, y)
}

pub fn avg_pool_backward(x: &FloatTensor, gy: &FloatTensor, l: &LayerSpec) -> FloatTensor {
    let mut dx = vec![0.0; x.len()];
    let g = gy.data();
    let area = (l.kernel * l.kernel) as f64;
    pool_walk(dims(x), l, |o, win| {
        for &i in win {
            dx[i] += g[o] / area;
        }
    });
    tensor(x.shape().to_vec(), dx)
}

pub fn add_forward(a: &FloatTensor, b: &FloatTensor) -> FloatTensor {
    tensor(a.shape().to_vec(), a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect())
}

/// Mean softmax cross-entropy over rows of `logits` (`[N, K]` row-major),
/// with its gradient and the number of rows whose argmax hits the label.
pub fn softmax_xent(logits: &[f64], k: usize, labels: &[usize]) -> (f64, Vec<f64>, usize) {
    let n = labels.len();
    let mut grad = vec![0.0; n * k];
    let mut loss = 0.0;
    let mut correct = 0;
    for (b, &label) in labels.iter().enumerate() {
        let row = &logits[b * k..(b + 1) * k];
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|v| libm::exp(v - m)).sum();
        let lse = m + libm::log(z);
        loss += lse - row[label];
        // First maximum wins ties.
        let arg = row.iter().enumerate().fold(0, |best, (i, v)| if *v > row[best] { i } else { best });
        correct += (arg == label) as usize;
        for (i, g) in grad[b * k..(b + 1) * k].iter_mut().enumerate() {
            *g = (libm::exp(row[i] - lse) - (i == label) as u8 as f64) / n as f64;
        }
    }
    (loss / n as f64, grad, correct)
}
