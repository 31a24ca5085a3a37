//! Named collection of trainable tensors.

use indexmap::IndexMap;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Position of a parameter inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Tape handles of every parameter, indexed by [`ParamId`].
#[derive(Clone, Debug)]
pub struct Bound(Vec<Var>);

impl Bound {
    pub fn var(&self, id: ParamId) -> Var {
        self.0[id.0]
    }
}

/// Insertion-ordered map from parameter name to tensor.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ParamStore<T> {
    params: IndexMap<String, Tensor<T>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            params: IndexMap::new(),
        }
    }

    /// Adds a trainable parameter. Names must be unique.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> ParamId {
        let (idx, previous) = self.params.insert_full(name.into(), tensor.with_grad());
        debug_assert!(previous.is_none(), "duplicate parameter name");
        ParamId(idx)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.params[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        self.params
            .get_index(id.0)
            .map(|(k, _)| k.as_str())
            .unwrap_or("")
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor<T>> {
        self.params.get(name)
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.params.get_index_of(name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn clear_grads(&mut self) {
        self.params.values_mut().for_each(Tensor::clear_grad);
    }

    /// Sets every gradient to zero (present but empty of signal).
    pub fn zero_grads(&mut self) {
        for t in self.params.values_mut() {
            t.clear_grad();
            let zeros = vec![T::zero(); t.len()];
            t.accumulate_grad(&zeros).expect("same length");
        }
    }

    /// Records every parameter on `tape`. With `trainable` false they enter
    /// as constants and collect no gradient.
    pub fn bind(&self, tape: &mut Tape<T>, trainable: bool) -> Bound {
        Bound(
            self.params
                .values()
                .map(|t| {
                    if trainable {
                        tape.leaf(t)
                    } else {
                        tape.constant(t)
                    }
                })
                .collect(),
        )
    }

    /// Adds `scale` times the gradients collected on `tape` into the
    /// parameters' gradients.
    pub fn absorb(&mut self, tape: &Tape<T>, bound: &Bound, scale: T) -> Result<()> {
        for (t, &v) in self.params.values_mut().zip(&bound.0) {
            if let Some(g) = tape.grad(v) {
                let scaled: Vec<T> = g.iter().map(|&x| x * scale).collect();
                t.accumulate_grad(&scaled)?;
            }
        }
        Ok(())
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.params.values().map(Tensor::len).sum()
    }

    /// Replaces the values of an existing parameter, keeping its shape.
    pub fn set_values(&mut self, name: &str, values: Vec<T>) -> Result<()> {
        let t = self
            .params
            .get_mut(name)
            .ok_or_else(|| Error::Config(format!("unknown parameter `{name}`")))?;
        if t.len() != values.len() {
            return Err(Error::Dimension(format!(
                "parameter `{name}` has {} values, got {}",
                t.len(),
                values.len()
            )));
        }
        t.values_mut().copy_from_slice(&values);
        Ok(())
    }
}

/// Tensor with entries drawn uniformly from `[-1/√fan_in, 1/√fan_in]`.
pub fn uniform<T: Scalar>(rng: &mut impl rand::Rng, shape: &[usize], fan_in: usize) -> Tensor<T> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let mut t = Tensor::zeros(shape);
    t.values_mut()
        .iter_mut()
        .for_each(|v| *v = T::lit(rng.gen_range(-bound..=bound)));
    t
}
