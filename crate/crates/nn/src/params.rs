//! Named parameter storage, tape binding and initialization.

use crate::real::Real;
use crate::tape::{Arr, Grads, Tape, Var};
use ndarray::{ArrayD, IxDyn};
use sha2::{Digest, Sha256};
use std::cell::RefCell;
use std::collections::HashMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamRef(pub usize);

/// Flat list of named tensors owned by one model.
pub struct ParamStore<F: Real> {
    names: Vec<String>,
    values: Vec<Arr<F>>,
    index: HashMap<String, usize>,
}

impl<F: Real> Default for ParamStore<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Real> ParamStore<F> {
    pub fn new() -> Self {
        ParamStore { names: Vec::new(), values: Vec::new(), index: HashMap::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Arr<F>) -> ParamRef {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter {name}");
        let id = self.values.len();
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.values.push(value);
        ParamRef(id)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn name(&self, r: ParamRef) -> &str {
        &self.names[r.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn value(&self, r: ParamRef) -> &Arr<F> {
        &self.values[r.0]
    }

    pub fn value_mut(&mut self, r: ParamRef) -> &mut Arr<F> {
        &mut self.values[r.0]
    }

    pub fn by_name(&self, name: &str) -> Option<ParamRef> {
        self.index.get(name).map(|i| ParamRef(*i))
    }

    pub fn total_elements(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    /// SHA-256 over names, shapes and exact value bytes; the freeze-contract
    /// fingerprint.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for (name, value) in self.names.iter().zip(&self.values) {
            hasher.update(name.as_bytes());
            for d in value.shape() {
                hasher.update((*d as u64).to_le_bytes());
            }
            let mut bytes = Vec::with_capacity(value.len() * 8);
            let flat: Vec<F> = value.iter().cloned().collect();
            F::write_le_bytes(&flat, &mut bytes);
            hasher.update(&bytes);
        }
        format!("{:x}", hasher.finalize())
    }
}

/// Memoizing bridge between a parameter store and one tape: every parameter
/// becomes at most one leaf per tape, so gradients accumulate correctly when
/// a parameter is used several times.
pub struct Binder<'t, 's, F: Real> {
    pub tape: &'t Tape<F>,
    pub store: &'s ParamStore<F>,
    bound: RefCell<Vec<Option<usize>>>,
    frozen: bool,
}

impl<'t, 's, F: Real> Binder<'t, 's, F> {
    pub fn new(tape: &'t Tape<F>, store: &'s ParamStore<F>) -> Self {
        Binder {
            tape,
            store,
            bound: RefCell::new(vec![None; store.len()]),
            frozen: false,
        }
    }

    /// Parameters bind as constants: no gradients are computed through them.
    pub fn frozen(tape: &'t Tape<F>, store: &'s ParamStore<F>) -> Self {
        Binder { frozen: true, ..Binder::new(tape, store) }
    }

    pub fn var(&self, r: ParamRef) -> Var<'t, F> {
        let mut bound = self.bound.borrow_mut();
        if let Some(id) = bound[r.0] {
            return Var { tape: self.tape, id };
        }
        let value = self.store.value(r).clone();
        let v = if self.frozen { self.tape.constant(value) } else { self.tape.leaf(value) };
        bound[r.0] = Some(v.id);
        v
    }

    /// Collects `(param, gradient)` pairs for every bound parameter that
    /// received a gradient, in parameter order.
    pub fn collect(&self, grads: &mut Grads<F>) -> Vec<(ParamRef, Arr<F>)> {
        let bound = self.bound.borrow();
        let mut out = Vec::new();
        for (i, slot) in bound.iter().enumerate() {
            let Some(id) = slot else { continue };
            let var = Var { tape: self.tape, id: *id };
            if let Some(g) = grads.take(var) {
                out.push((ParamRef(i), g));
            }
        }
        out
    }
}

/// Initialization helpers. Weights draw from a standard normal and layers
/// apply equalized-learning-rate scaling at runtime, so initialization is
/// scale-free.
pub mod init {
    use super::*;
    use rand::Rng;

    pub fn normal<F: Real>(rng: &mut impl Rng, shape: &[usize], std: f64) -> Arr<F> {
        ArrayD::from_shape_fn(IxDyn(shape), |_| {
            F::from_f64(synfp_core::rng::normal(rng) * std)
        })
    }

    pub fn constant<F: Real>(shape: &[usize], v: f64) -> Arr<F> {
        ArrayD::from_elem(IxDyn(shape), F::from_f64(v))
    }

    pub fn zeros<F: Real>(shape: &[usize]) -> Arr<F> {
        ArrayD::zeros(IxDyn(shape))
    }
}
