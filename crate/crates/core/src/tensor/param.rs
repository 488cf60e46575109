use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Grads, Real, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A trainable tensor with its gradient slot and Adam moments.
#[derive(Clone, Debug)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
    pub first_moment: Tensor<T>,
    pub second_moment: Tensor<T>,
    pub step: u64,
}

impl<T: Real> Param<T> {
    fn new(name: String, value: Tensor<T>) -> Self {
        let z = Tensor::zeros_like(&value);
        Param {
            name,
            grad: z.clone(),
            first_moment: z.clone(),
            second_moment: z,
            value,
            step: 0,
        }
    }
}

/// Owns every parameter of a model, in registration order.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
    by_name: HashMap<String, ParamId>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            params: Vec::new(),
            by_name: HashMap::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        let name = name.into();
        assert!(
            !self.by_name.contains_key(&name),
            "duplicate parameter name {name}"
        );
        let id = ParamId(self.params.len());
        self.by_name.insert(name.clone(), id);
        self.params.push(Param::new(name, value));
        id
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn get(&self, id: ParamId) -> &Param<T> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param<T> {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].value
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param<T>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.params.iter_mut()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.data_mut().fill(T::zero());
        }
    }

    /// Add (`+=`) the parameter gradients carried by `grads`.
    pub fn accumulate(&mut self, grads: &Grads<T>) {
        for (id, g) in grads.param_grads() {
            self.params[id.0].grad.add_assign(g);
        }
    }

    /// Reset Adam moments and step counts, keeping values.
    pub fn reset_optimizer(&mut self) {
        for p in &mut self.params {
            p.first_moment.data_mut().fill(T::zero());
            p.second_moment.data_mut().fill(T::zero());
            p.step = 0;
        }
    }

    pub fn values(&self) -> Vec<Tensor<T>> {
        self.params.iter().map(|p| p.value.clone()).collect()
    }

    pub fn restore_values(&mut self, values: &[Tensor<T>]) {
        for (p, v) in self.params.iter_mut().zip(values) {
            p.value = v.clone();
        }
    }

    /// Append `extra` rows to a matrix parameter (vocabulary growth).
    pub fn grow_rows(&mut self, id: ParamId, extra: Tensor<T>) -> Result<()> {
        let p = &mut self.params[id.0];
        if extra.cols() != p.value.cols() || p.value.shape().len() != 2 {
            return Err(Error::shape("grow_rows", format!("{} vs {:?}", p.name, extra.shape())));
        }
        let rows = p.value.rows() + extra.rows();
        let cols = p.value.cols();
        let mut data = p.value.data().to_vec();
        data.extend_from_slice(extra.data());
        let value = Tensor::matrix(rows, cols, data)?;
        *p = Param::new(std::mem::take(&mut p.name), value);
        Ok(())
    }
}

// ── initialization ──

/// Normal(0, std) truncated at two standard deviations.
pub fn truncated_normal<T: Real, R: Rng>(shape: Vec<usize>, std: f64, rng: &mut R) -> Tensor<T> {
    let n: usize = shape.iter().product();
    let mut data = Vec::with_capacity(n);
    while data.len() < n {
        let z: f64 = StandardNormal.sample(rng);
        if z.abs() <= 2.0 {
            data.push(T::c(z * std));
        }
    }
    Tensor::new(shape, data).expect("shape matches")
}

pub fn identity<T: Real>(d: usize) -> Tensor<T> {
    let mut t = Tensor::zeros(vec![d, d]);
    for i in 0..d {
        t.data_mut()[i * d + i] = T::one();
    }
    t
}
