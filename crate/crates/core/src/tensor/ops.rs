//! Eager (tape-free) helpers over plain slices and tensors.

use super::{kernels, Real, Tensor};
use crate::error::{Error, Result};

pub fn softmax<T: Real>(z: &[T]) -> Vec<T> {
    let mut out = z.to_vec();
    kernels::softmax_in_place(&mut out);
    out
}

pub fn log_softmax<T: Real>(z: &[T]) -> Vec<T> {
    let mut out = z.to_vec();
    kernels::log_softmax_in_place(&mut out);
    out
}

/// Single-head attention of one query over `keys`/`values` (`[k, d]`).
/// Returns `(weights, mix)`.
pub fn scaled_dot_attention<T: Real>(
    query: &[T],
    keys: &Tensor<T>,
    values: &Tensor<T>,
) -> Result<(Vec<T>, Vec<T>)> {
    let d = query.len();
    let k = keys.rows();
    if d == 0 || k == 0 || keys.cols() != d || values.cols() != d || values.rows() != k {
        return Err(Error::shape(
            "scaled_dot_attention",
            format!("query [{d}] keys {:?} values {:?}", keys.shape(), values.shape()),
        ));
    }
    let mut w = vec![T::zero(); k];
    let mut mix = vec![T::zero(); d];
    kernels::attend_row(query, keys.data(), values.data(), k, d, 1, &mut w, &mut mix);
    Ok((w, mix))
}

/// `x · w + b` for `x: [.., d_in]`, `w: [d_in, d_out]`, `b: [d_out]`.
pub fn affine<T: Real>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, k, n) = (x.rows(), x.cols(), w.cols());
    if w.rows() != k || b.len() != n {
        return Err(Error::shape(
            "affine",
            format!("x {:?} W {:?} b {:?}", x.shape(), w.shape(), b.shape()),
        ));
    }
    let mut out = vec![T::zero(); m * n];
    kernels::matmul(x.data(), w.data(), m, k, n, &mut out);
    for row in out.chunks_mut(n) {
        for (o, &bv) in row.iter_mut().zip(b.data()) {
            *o += bv;
        }
    }
    let mut shape = x.shape().to_vec();
    match shape.last_mut() {
        Some(last) => *last = n,
        None => shape.push(n),
    }
    Tensor::new(shape, out)
}

pub fn layer_norm<T: Real>(x: &Tensor<T>, gain: &[T], bias: &[T]) -> Result<Tensor<T>> {
    let d = x.cols();
    if d < 2 || gain.len() != d || bias.len() != d {
        return Err(Error::shape("layer_norm", format!("x {:?} gain [{}]", x.shape(), gain.len())));
    }
    let mut out = x.clone();
    let mut xhat = vec![T::zero(); d];
    for i in 0..x.rows() {
        kernels::layer_norm_row(x.row(i), gain, bias, out.row_mut(i), &mut xhat);
    }
    Ok(out)
}
