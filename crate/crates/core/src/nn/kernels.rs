//! Batched dense kernels over row-major buffers.
//!
//! A batch of vectors is stored as `batch * dim` contiguous values. Weight
//! matrices are `out * in`, row-major. Callers are responsible for sizes;
//! the public layer types check shapes before reaching these loops.

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `ys[b, r] = bias[r] + W[r, :] . xs[b, :]`
pub fn affine_batch(weights: &[f64], bias: &[f64], in_dim: usize, xs: &[f64], ys: &mut [f64]) {
    let out_dim = bias.len();
    let batch = xs.len() / in_dim;
    debug_assert_eq!(ys.len(), batch * out_dim);
    for (r, row) in weights.chunks_exact(in_dim).enumerate() {
        for b in 0..batch {
            ys[b * out_dim + r] = bias[r] + dot(row, &xs[b * in_dim..(b + 1) * in_dim]);
        }
    }
}

/// `dW[r, :] += sum_b dys[b, r] * xs[b, :]`
pub fn add_outer_batch(grad_w: &mut [f64], in_dim: usize, dys: &[f64], xs: &[f64]) {
    let batch = xs.len() / in_dim;
    let out_dim = dys.len() / batch;
    for (r, row) in grad_w.chunks_exact_mut(in_dim).enumerate() {
        for b in 0..batch {
            let d = dys[b * out_dim + r];
            if d != 0.0 {
                axpy(d, &xs[b * in_dim..(b + 1) * in_dim], row);
            }
        }
    }
}

/// `dxs[b, :] += sum_r dys[b, r] * W[r, :]`
pub fn add_transposed_batch(weights: &[f64], in_dim: usize, dys: &[f64], dxs: &mut [f64]) {
    let batch = dxs.len() / in_dim;
    let out_dim = dys.len() / batch;
    for (r, row) in weights.chunks_exact(in_dim).enumerate() {
        for b in 0..batch {
            let d = dys[b * out_dim + r];
            if d != 0.0 {
                axpy(d, row, &mut dxs[b * in_dim..(b + 1) * in_dim]);
            }
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
