//! Reverse-mode tape over matrix-valued operations.
//!
//! A [`Graph`] borrows the parameter store read-only and records every forward
//! op with its value. [`Graph::backward`] walks the tape in reverse and returns
//! a [`Grads`] that the caller folds into the store once the graph is dropped.

use std::collections::HashMap;

use super::kernels;
use super::{ParamId, ParamStore, Real, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Value<T> {
    Owned(Tensor<T>),
    Param(ParamId),
}

enum Op<T> {
    Input,
    Param,
    MatMul(Var, Var),
    MatMulBT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Gelu(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<T>,
        rstd: Vec<T>,
    },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        causal: Option<usize>,
        weights: Vec<T>,
    },
    Gather {
        table: Var,
        rows: Vec<usize>,
    },
    ConcatRows(Vec<Var>),
    ConcatCols(Var, Var),
    SliceRows {
        x: Var,
        start: usize,
    },
    Softmax(Var),
    LogSoftmax(Var),
    NllSum {
        logp: Var,
        targets: Vec<usize>,
    },
    Sum(Var),
}

struct Node<T> {
    value: Value<T>,
    op: Op<T>,
    needs_grad: bool,
}

pub struct Graph<'p, T: Real> {
    store: &'p ParamStore<T>,
    nodes: Vec<Node<T>>,
    param_nodes: HashMap<ParamId, Var>,
}

/// Gradients produced by one backward pass, for leaf nodes only.
pub struct Grads<T> {
    grads: Vec<Option<Tensor<T>>>,
    params: Vec<(ParamId, Var)>,
}

impl<T: Real> Grads<T> {
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads[v.0].as_ref()
    }

    pub fn param_grads(&self) -> impl Iterator<Item = (ParamId, &Tensor<T>)> {
        self.params
            .iter()
            .filter_map(|(id, v)| self.grads[v.0].as_ref().map(|g| (*id, g)))
    }

    pub fn param_grad(&self, id: ParamId) -> Option<&Tensor<T>> {
        self.params
            .iter()
            .find(|(p, _)| *p == id)
            .and_then(|(_, v)| self.grads[v.0].as_ref())
    }
}

fn check<T: Real>(t: Tensor<T>, op: &'static str) -> Result<Tensor<T>> {
    if t.all_finite() {
        Ok(t)
    } else {
        Err(Error::NonFinite(op))
    }
}

impl<'p, T: Real> Graph<'p, T> {
    pub fn new(store: &'p ParamStore<T>) -> Self {
        Graph {
            store,
            nodes: Vec::new(),
            param_nodes: HashMap::new(),
        }
    }

    pub fn store(&self) -> &'p ParamStore<T> {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node {
            value: Value::Owned(value),
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        match &self.nodes[v.0].value {
            Value::Owned(t) => t,
            Value::Param(id) => self.store.value(*id),
        }
    }

    pub fn input(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value: Value::Owned(value),
            op: Op::Input,
            needs_grad: requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.input(value, false)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_nodes.get(&id) {
            return *v;
        }
        self.nodes.push(Node {
            value: Value::Param(id),
            op: Op::Param,
            needs_grad: true,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_nodes.insert(id, v);
        v
    }

    // ── forward ops ──

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let (m, k, n) = (av.rows(), av.cols(), bv.cols());
        if bv.rows() != k || bv.shape().len() > 2 {
            return Err(Error::shape("matmul", format!("{:?} x {:?}", av.shape(), bv.shape())));
        }
        let mut out = vec![T::zero(); m * n];
        kernels::matmul(av.data(), bv.data(), m, k, n, &mut out);
        let t = check(Tensor::matrix(m, n, out)?, "matmul")?;
        Ok(self.push(t, Op::MatMul(a, b), &[a, b]))
    }

    /// `a · bᵀ`.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let (m, k, n) = (av.rows(), av.cols(), bv.rows());
        if bv.cols() != k {
            return Err(Error::shape("matmul_bt", format!("{:?} x {:?}ᵀ", av.shape(), bv.shape())));
        }
        let bt = kernels::transpose(bv.data(), n, k);
        let mut out = vec![T::zero(); m * n];
        kernels::matmul(av.data(), &bt, m, k, n, &mut out);
        let t = check(Tensor::matrix(m, n, out)?, "matmul_bt")?;
        Ok(self.push(t, Op::MatMulBT(a, b), &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::shape("add", format!("{:?} + {:?}", av.shape(), bv.shape())));
        }
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| x + y).collect();
        let t = check(Tensor::new(av.shape().to_vec(), data)?, "add")?;
        Ok(self.push(t, Op::Add(a, b), &[a, b]))
    }

    /// Add a `[n]` or `[1, n]` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (av, rv) = (self.value(a), self.value(row));
        if rv.len() != av.cols() {
            return Err(Error::shape("add_row", format!("{:?} + {:?}", av.shape(), rv.shape())));
        }
        let mut t = av.clone();
        for i in 0..t.rows() {
            for (x, &b) in t.row_mut(i).iter_mut().zip(rv.data()) {
                *x += b;
            }
        }
        let t = check(t, "add_row")?;
        Ok(self.push(t, Op::AddRow(a, row), &[a, row]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::shape("mul", format!("{:?} * {:?}", av.shape(), bv.shape())));
        }
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| x * y).collect();
        let t = check(Tensor::new(av.shape().to_vec(), data)?, "mul")?;
        Ok(self.push(t, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Result<Var> {
        let t = check(self.value(a).map(|x| x * s), "scale")?;
        Ok(self.push(t, Op::Scale(a, s), &[a]))
    }

    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        let t = check(self.value(a).map(kernels::gelu), "gelu")?;
        Ok(self.push(t, Op::Gelu(a), &[a]))
    }

    /// `x · w + b`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = self.matmul(x, w)?;
        self.add_row(y, b)
    }

    /// Row-wise layer normalization (epsilon 1e-5) with gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let xv = self.value(x);
        let (r, d) = (xv.rows(), xv.cols());
        let (gv, bv) = (self.value(gain), self.value(bias));
        if gv.len() != d || bv.len() != d {
            return Err(Error::shape("layer_norm", format!("x {:?}, gain {:?}", xv.shape(), gv.shape())));
        }
        let mut out = vec![T::zero(); r * d];
        let mut xhat = vec![T::zero(); r * d];
        let mut rstd = Vec::with_capacity(r);
        for i in 0..r {
            rstd.push(kernels::layer_norm_row(
                xv.row(i),
                gv.data(),
                bv.data(),
                &mut out[i * d..(i + 1) * d],
                &mut xhat[i * d..(i + 1) * d],
            ));
        }
        let t = check(Tensor::new(xv.shape().to_vec(), out)?, "layer_norm")?;
        Ok(self.push(
            t,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            },
            &[x, gain, bias],
        ))
    }

    /// Multi-head scaled dot-product attention of query rows over key/value rows.
    ///
    /// With `causal = Some(offset)`, query row `i` sees keys `0..=offset+i`.
    pub fn attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        causal: Option<usize>,
    ) -> Result<Var> {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let (lq, d, lk) = (qv.rows(), qv.cols(), kv.rows());
        if heads == 0 || d % heads != 0 || kv.cols() != d || vv.cols() != d || vv.rows() != lk || lk == 0 {
            return Err(Error::shape(
                "attention",
                format!("q {:?} k {:?} v {:?} heads {heads}", qv.shape(), kv.shape(), vv.shape()),
            ));
        }
        if let Some(off) = causal {
            if off + lq > lk {
                return Err(Error::shape("attention", format!("causal offset {off} + {lq} > {lk}")));
            }
        }
        let mut out = vec![T::zero(); lq * d];
        let mut weights = vec![T::zero(); lq * heads * lk];
        let mut w = vec![T::zero(); heads * lk];
        for i in 0..lq {
            let klen = causal.map_or(lk, |off| off + i + 1);
            kernels::attend_row(
                qv.row(i),
                &kv.data()[..klen * d],
                &vv.data()[..klen * d],
                klen,
                d,
                heads,
                &mut w[..heads * klen],
                &mut out[i * d..(i + 1) * d],
            );
            for h in 0..heads {
                let dst = (i * heads + h) * lk;
                weights[dst..dst + klen].copy_from_slice(&w[h * klen..(h + 1) * klen]);
            }
        }
        let t = check(Tensor::matrix(lq, d, out)?, "attention")?;
        Ok(self.push(
            t,
            Op::Attention {
                q,
                k,
                v,
                heads,
                causal,
                weights,
            },
            &[q, k, v],
        ))
    }

    /// Select rows of `table` (embedding lookup).
    pub fn gather(&mut self, table: Var, rows: &[usize]) -> Result<Var> {
        let tv = self.value(table);
        let (r, c) = (tv.rows(), tv.cols());
        let mut out = Vec::with_capacity(rows.len() * c);
        for &i in rows {
            if i >= r {
                return Err(Error::shape("gather", format!("row {i} of {r}")));
            }
            out.extend_from_slice(tv.row(i));
        }
        let t = Tensor::matrix(rows.len(), c, out)?;
        Ok(self.push(
            t,
            Op::Gather {
                table,
                rows: rows.to_vec(),
            },
            &[table],
        ))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let c = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let pv = self.value(p);
            if pv.cols() != c {
                return Err(Error::shape("concat_rows", format!("{c} vs {}", pv.cols())));
            }
            rows += pv.rows();
            data.extend_from_slice(pv.data());
        }
        let t = Tensor::matrix(rows, c, data)?;
        Ok(self.push(t, Op::ConcatRows(parts.to_vec()), parts))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.rows() != bv.rows() {
            return Err(Error::shape("concat_cols", format!("{:?} | {:?}", av.shape(), bv.shape())));
        }
        let (ca, cb) = (av.cols(), bv.cols());
        let mut data = Vec::with_capacity(av.rows() * (ca + cb));
        for i in 0..av.rows() {
            data.extend_from_slice(av.row(i));
            data.extend_from_slice(bv.row(i));
        }
        let t = Tensor::matrix(av.rows(), ca + cb, data)?;
        Ok(self.push(t, Op::ConcatCols(a, b), &[a, b]))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xv = self.value(x);
        if start + len > xv.rows() {
            return Err(Error::shape("slice_rows", format!("{start}+{len} > {}", xv.rows())));
        }
        let t = xv.slice_rows(start, len);
        Ok(self.push(t, Op::SliceRows { x, start }, &[x]))
    }

    pub fn softmax(&mut self, z: Var) -> Result<Var> {
        let mut t = self.value(z).clone();
        for i in 0..t.rows() {
            kernels::softmax_in_place(t.row_mut(i));
        }
        let t = check(t, "softmax")?;
        Ok(self.push(t, Op::Softmax(z), &[z]))
    }

    pub fn log_softmax(&mut self, z: Var) -> Result<Var> {
        let mut t = self.value(z).clone();
        for i in 0..t.rows() {
            kernels::log_softmax_in_place(t.row_mut(i));
        }
        let t = check(t, "log_softmax")?;
        Ok(self.push(t, Op::LogSoftmax(z), &[z]))
    }

    /// `-Σ_i logp[i, targets[i]]` as a scalar.
    pub fn nll_sum(&mut self, logp: Var, targets: &[usize]) -> Result<Var> {
        let lv = self.value(logp);
        if targets.len() != lv.rows() {
            return Err(Error::shape("nll_sum", format!("{} targets for {} rows", targets.len(), lv.rows())));
        }
        let mut s = T::zero();
        for (i, &t) in targets.iter().enumerate() {
            if t >= lv.cols() {
                return Err(Error::Support {
                    index: t,
                    support: lv.cols(),
                });
            }
            s -= lv.get(i, t);
        }
        let t = Tensor::scalar(s);
        Ok(self.push(
            t,
            Op::NllSum {
                logp,
                targets: targets.to_vec(),
            },
            &[logp],
        ))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let mut s = T::zero();
        for &x in self.value(a).data() {
            s += x;
        }
        let t = check(Tensor::scalar(s), "sum")?;
        Ok(self.push(t, Op::Sum(a), &[a]))
    }

    // ── backward ──

    /// Reverse-mode gradients of a scalar `loss` with respect to every leaf.
    pub fn backward(&self, loss: Var) -> Result<Grads<T>> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::NotScalar(lv.shape().to_vec()));
        }
        self.backward_seeded(vec![(loss, Tensor::ones(lv.shape().to_vec()))])
    }

    /// Backward pass seeded with explicit output gradients.
    pub fn backward_seeded(&self, seeds: Vec<(Var, Tensor<T>)>) -> Result<Grads<T>> {
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut top = 0;
        for (v, g) in seeds {
            if g.len() != self.value(v).len() {
                return Err(Error::shape("backward", "seed shape differs from node"));
            }
            top = top.max(v.0);
            acc(&mut grads, &self.nodes, v, g);
        }
        for i in (0..=top).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Input | Op::Param) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
        }
        let params = self.param_nodes.iter().map(|(id, v)| (*id, *v)).collect::<Vec<_>>();
        let mut params = params;
        params.sort_by_key(|(id, _)| *id);
        Ok(Grads { grads, params })
    }

    fn propagate(&self, i: usize, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let nodes = &self.nodes;
        let out = self.value(Var(i));
        match &nodes[i].op {
            Op::Input | Op::Param => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                if nodes[a.0].needs_grad {
                    let bt = kernels::transpose(bv.data(), k, n);
                    let mut da = vec![T::zero(); m * k];
                    kernels::matmul(g.data(), &bt, m, n, k, &mut da);
                    acc(grads, nodes, *a, Tensor::new(av.shape().to_vec(), da).unwrap());
                }
                if nodes[b.0].needs_grad {
                    let at = kernels::transpose(av.data(), m, k);
                    let mut db = vec![T::zero(); k * n];
                    kernels::matmul(&at, g.data(), k, m, n, &mut db);
                    acc(grads, nodes, *b, Tensor::new(bv.shape().to_vec(), db).unwrap());
                }
            }
            Op::MatMulBT(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.rows(), av.cols(), bv.rows());
                if nodes[a.0].needs_grad {
                    let mut da = vec![T::zero(); m * k];
                    kernels::matmul(g.data(), bv.data(), m, n, k, &mut da);
                    acc(grads, nodes, *a, Tensor::new(av.shape().to_vec(), da).unwrap());
                }
                if nodes[b.0].needs_grad {
                    let gt = kernels::transpose(g.data(), m, n);
                    let mut db = vec![T::zero(); n * k];
                    kernels::matmul(&gt, av.data(), n, m, k, &mut db);
                    acc(grads, nodes, *b, Tensor::new(bv.shape().to_vec(), db).unwrap());
                }
            }
            Op::Add(a, b) => {
                acc(grads, nodes, *a, g.clone());
                acc(grads, nodes, *b, g.clone());
            }
            Op::AddRow(a, row) => {
                acc(grads, nodes, *a, g.clone());
                if nodes[row.0].needs_grad {
                    let rv = self.value(*row);
                    let mut dr = Tensor::zeros(rv.shape().to_vec());
                    for r in 0..g.rows() {
                        for (d, &x) in dr.data_mut().iter_mut().zip(g.row(r)) {
                            *d += x;
                        }
                    }
                    acc(grads, nodes, *row, dr);
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if nodes[a.0].needs_grad {
                    let d = g.data().iter().zip(bv.data()).map(|(&x, &y)| x * y).collect();
                    acc(grads, nodes, *a, Tensor::new(av.shape().to_vec(), d).unwrap());
                }
                if nodes[b.0].needs_grad {
                    let d = g.data().iter().zip(av.data()).map(|(&x, &y)| x * y).collect();
                    acc(grads, nodes, *b, Tensor::new(bv.shape().to_vec(), d).unwrap());
                }
            }
            Op::Scale(a, s) => acc(grads, nodes, *a, g.map(|x| x * *s)),
            Op::Gelu(a) => {
                let av = self.value(*a);
                let d = g
                    .data()
                    .iter()
                    .zip(av.data())
                    .map(|(&gy, &x)| gy * kernels::gelu_grad(x))
                    .collect();
                acc(grads, nodes, *a, Tensor::new(av.shape().to_vec(), d).unwrap());
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            } => {
                let xv = self.value(*x);
                let gv = self.value(*gain);
                let (r, d) = (xv.rows(), xv.cols());
                let dn = T::c(d as f64);
                let mut dx = vec![T::zero(); r * d];
                let mut dgain = Tensor::zeros(gv.shape().to_vec());
                let mut dbias = Tensor::zeros(gv.shape().to_vec());
                for i in 0..r {
                    let gr = g.row(i);
                    let xh = &xhat[i * d..(i + 1) * d];
                    let mut mean_dxh = T::zero();
                    let mut mean_dxh_xh = T::zero();
                    for j in 0..d {
                        let dxh = gr[j] * gv.data()[j];
                        mean_dxh += dxh;
                        mean_dxh_xh += dxh * xh[j];
                        dgain.data_mut()[j] += gr[j] * xh[j];
                        dbias.data_mut()[j] += gr[j];
                    }
                    mean_dxh = mean_dxh / dn;
                    mean_dxh_xh = mean_dxh_xh / dn;
                    for j in 0..d {
                        let dxh = gr[j] * gv.data()[j];
                        dx[i * d + j] = rstd[i] * (dxh - mean_dxh - xh[j] * mean_dxh_xh);
                    }
                }
                acc(grads, nodes, *x, Tensor::new(xv.shape().to_vec(), dx).unwrap());
                acc(grads, nodes, *gain, dgain);
                acc(grads, nodes, *bias, dbias);
            }
            Op::Attention {
                q,
                k,
                v,
                heads,
                causal,
                weights,
            } => {
                let (qv, kv, vv) = (self.value(*q), self.value(*k), self.value(*v));
                let (lq, d, lk) = (qv.rows(), qv.cols(), kv.rows());
                let heads = *heads;
                let dh = d / heads;
                let scale = T::one() / T::c(dh as f64).sqrt();
                let mut dq = vec![T::zero(); lq * d];
                let mut dk = vec![T::zero(); lk * d];
                let mut dv = vec![T::zero(); lk * d];
                let mut dw = vec![T::zero(); lk];
                for i in 0..lq {
                    let klen = causal.map_or(lk, |off| off + i + 1);
                    let go = g.row(i);
                    for h in 0..heads {
                        let cols = h * dh..(h + 1) * dh;
                        let w = &weights[(i * heads + h) * lk..(i * heads + h) * lk + klen];
                        let goh = &go[cols.clone()];
                        let mut wsum = T::zero();
                        for j in 0..klen {
                            let vrow = &vv.data()[j * d + h * dh..j * d + (h + 1) * dh];
                            dw[j] = kernels::dot(goh, vrow);
                            wsum += w[j] * dw[j];
                            let dvrow = &mut dv[j * d + h * dh..j * d + (h + 1) * dh];
                            for (o, &x) in dvrow.iter_mut().zip(goh) {
                                *o += w[j] * x;
                            }
                        }
                        let qh = &qv.row(i)[cols.clone()];
                        for j in 0..klen {
                            let ds = w[j] * (dw[j] - wsum) * scale;
                            let krow = &kv.data()[j * d + h * dh..j * d + (h + 1) * dh];
                            let dqrow = &mut dq[i * d + h * dh..i * d + (h + 1) * dh];
                            for (o, &x) in dqrow.iter_mut().zip(krow) {
                                *o += ds * x;
                            }
                            let dkrow = &mut dk[j * d + h * dh..j * d + (h + 1) * dh];
                            for (o, &x) in dkrow.iter_mut().zip(qh) {
                                *o += ds * x;
                            }
                        }
                    }
                }
                acc(grads, nodes, *q, Tensor::new(qv.shape().to_vec(), dq).unwrap());
                acc(grads, nodes, *k, Tensor::new(kv.shape().to_vec(), dk).unwrap());
                acc(grads, nodes, *v, Tensor::new(vv.shape().to_vec(), dv).unwrap());
            }
            Op::Gather { table, rows } => {
                if nodes[table.0].needs_grad {
                    let tv = self.value(*table);
                    let mut dt = Tensor::zeros(tv.shape().to_vec());
                    for (r, &src) in rows.iter().enumerate() {
                        for (o, &x) in dt.row_mut(src).iter_mut().zip(g.row(r)) {
                            *o += x;
                        }
                    }
                    acc(grads, nodes, *table, dt);
                }
            }
            Op::ConcatRows(parts) => {
                let mut start = 0;
                for p in parts {
                    let pv = self.value(*p);
                    let n = pv.rows();
                    if nodes[p.0].needs_grad {
                        let piece = g.slice_rows(start, n).reshape(pv.shape().to_vec()).unwrap();
                        acc(grads, nodes, *p, piece);
                    }
                    start += n;
                }
            }
            Op::ConcatCols(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (ca, cb) = (av.cols(), bv.cols());
                let mut da = Vec::with_capacity(av.len());
                let mut db = Vec::with_capacity(bv.len());
                for r in 0..g.rows() {
                    da.extend_from_slice(&g.row(r)[..ca]);
                    db.extend_from_slice(&g.row(r)[ca..ca + cb]);
                }
                acc(grads, nodes, *a, Tensor::new(av.shape().to_vec(), da).unwrap());
                acc(grads, nodes, *b, Tensor::new(bv.shape().to_vec(), db).unwrap());
            }
            Op::SliceRows { x, start } => {
                let xv = self.value(*x);
                let mut dx = Tensor::zeros(xv.shape().to_vec());
                let c = xv.cols();
                dx.data_mut()[start * c..start * c + g.len()].copy_from_slice(g.data());
                acc(grads, nodes, *x, dx);
            }
            Op::Softmax(z) => {
                let mut dz = Tensor::zeros(out.shape().to_vec());
                for r in 0..out.rows() {
                    let (y, gr) = (out.row(r), g.row(r));
                    let s = kernels::dot(y, gr);
                    for ((o, &yi), &gi) in dz.row_mut(r).iter_mut().zip(y).zip(gr) {
                        *o = yi * (gi - s);
                    }
                }
                acc(grads, nodes, *z, dz);
            }
            Op::LogSoftmax(z) => {
                let mut dz = Tensor::zeros(out.shape().to_vec());
                for r in 0..out.rows() {
                    let (y, gr) = (out.row(r), g.row(r));
                    let mut s = T::zero();
                    for &x in gr {
                        s += x;
                    }
                    for ((o, &yi), &gi) in dz.row_mut(r).iter_mut().zip(y).zip(gr) {
                        *o = gi - yi.exp() * s;
                    }
                }
                acc(grads, nodes, *z, dz);
            }
            Op::NllSum { logp, targets } => {
                let lv = self.value(*logp);
                let mut dl = Tensor::zeros(lv.shape().to_vec());
                let gs = g.item();
                let c = lv.cols();
                for (r, &t) in targets.iter().enumerate() {
                    dl.data_mut()[r * c + t] -= gs;
                }
                acc(grads, nodes, *logp, dl);
            }
            Op::Sum(a) => {
                let av = self.value(*a);
                acc(grads, nodes, *a, Tensor::full(av.shape().to_vec(), g.item()));
            }
        }
    }
}

fn acc<T: Real>(grads: &mut [Option<Tensor<T>>], nodes: &[Node<T>], v: Var, g: Tensor<T>) {
    if !nodes[v.0].needs_grad {
        return;
    }
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}
