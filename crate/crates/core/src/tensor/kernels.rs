//! Slice-level numeric kernels.
//!
//! Every kernel computes each output row independently with a fixed
//! accumulation order, so running it on one row or on a stack of rows gives
//! bitwise-identical results. Incremental decoding relies on this.

use super::Real;

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// `out[m,n] = a[m,k] · b[k,n]`; each element accumulates over `k` in order.
pub fn matmul<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        orow.fill(T::zero());
        let arow = &a[i * k..(i + 1) * k];
        for (p, &av) in arow.iter().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// `out[m,n] += a[m,k] · b[k,n]`.
pub fn matmul_acc<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        let arow = &a[i * k..(i + 1) * k];
        for (p, &av) in arow.iter().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

pub fn transpose<T: Real>(a: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = vec![T::zero(); rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j];
        }
    }
    out
}

#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut s = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

/// In-place softmax with max subtraction.
pub fn softmax_in_place<T: Real>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in row.iter_mut() {
        *x = *x / sum;
    }
}

/// In-place log-softmax: `x - max - ln Σ exp(x - max)`.
pub fn log_softmax_in_place<T: Real>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for &x in row.iter() {
        sum += (x - max).exp();
    }
    let lse = sum.ln();
    for x in row.iter_mut() {
        *x = *x - max - lse;
    }
}

/// Layer normalization of one row. Returns `(xhat, rstd)` for backward.
pub fn layer_norm_row<T: Real>(x: &[T], gain: &[T], bias: &[T], out: &mut [T], xhat: &mut [T]) -> T {
    let d = T::c(x.len() as f64);
    let mut mean = T::zero();
    for &v in x {
        mean += v;
    }
    mean = mean / d;
    let mut var = T::zero();
    for &v in x {
        let c = v - mean;
        var += c * c;
    }
    var = var / d;
    let rstd = T::one() / (var + T::c(LAYER_NORM_EPS)).sqrt();
    for i in 0..x.len() {
        let h = (x[i] - mean) * rstd;
        xhat[i] = h;
        out[i] = h * gain[i] + bias[i];
    }
    rstd
}

const GELU_K: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_C: f64 = 0.044_715;

/// tanh-approximated GELU.
#[inline]
pub fn gelu<T: Real>(x: T) -> T {
    let k = T::c(GELU_K);
    let c = T::c(GELU_C);
    T::c(0.5) * x * (T::one() + (k * (x + c * x * x * x)).tanh())
}

#[inline]
pub fn gelu_grad<T: Real>(x: T) -> T {
    let k = T::c(GELU_K);
    let c = T::c(GELU_C);
    let inner = k * (x + c * x * x * x);
    let t = inner.tanh();
    let dinner = k * (T::one() + T::c(3.0) * c * x * x);
    T::c(0.5) * (T::one() + t) + T::c(0.5) * x * (T::one() - t * t) * dinner
}

/// Multi-head scaled dot-product attention for a single query row.
///
/// `keys`/`values` are `[klen, d]` row-major; head `h` uses columns
/// `h*dh..(h+1)*dh`. Writes attention weights `[heads, klen]` into `weights`
/// and the mixed values into `out`.
#[allow(clippy::too_many_arguments)]
pub fn attend_row<T: Real>(
    q: &[T],
    keys: &[T],
    values: &[T],
    klen: usize,
    d: usize,
    heads: usize,
    weights: &mut [T],
    out: &mut [T],
) {
    let dh = d / heads;
    let scale = T::one() / T::c(dh as f64).sqrt();
    out.fill(T::zero());
    for h in 0..heads {
        let cols = h * dh..(h + 1) * dh;
        let qh = &q[cols.clone()];
        let w = &mut weights[h * klen..(h + 1) * klen];
        for j in 0..klen {
            w[j] = dot(qh, &keys[j * d + h * dh..j * d + (h + 1) * dh]) * scale;
        }
        softmax_in_place(w);
        let oh = &mut out[cols];
        for j in 0..klen {
            let wj = w[j];
            for (o, &v) in oh.iter_mut().zip(&values[j * d + h * dh..j * d + (h + 1) * dh]) {
                *o += wj * v;
            }
        }
    }
}
