//! Named parameter sets and their binding onto a [`Graph`].

use std::cell::RefCell;
use std::collections::BTreeMap;

use crate::graph::{Gradients, Graph, Var};
use crate::tensor::Tensor;

/// Ordered map of named parameter tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Params {
    tensors: BTreeMap<String, Tensor>,
}

impl Params {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a tensor; panics on a duplicate name.
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        let name = name.into();
        let prev = self.tensors.insert(name.clone(), value);
        assert!(prev.is_none(), "duplicate parameter {name}");
    }

    /// Replaces the value of an existing parameter, keeping its shape.
    pub fn set(&mut self, name: &str, value: Tensor) {
        let slot = self
            .tensors
            .get_mut(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"));
        assert_eq!(slot.shape(), value.shape(), "shape change for {name}");
        *slot = value;
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.tensors.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.tensors.keys()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalars.
    pub fn num_scalars(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// Sets every scalar of every parameter to zero.
    pub fn zero_all(&mut self) {
        for t in self.tensors.values_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// Adds every parameter of `other` under `prefix`.
    pub fn extend_prefixed(&mut self, prefix: &str, other: Params) {
        for (k, v) in other.tensors {
            self.insert(format!("{prefix}{k}"), v);
        }
    }
}

/// Lazily binds parameters onto a graph, either as trainable leaves or as
/// constants.
pub struct Binder<'g> {
    graph: &'g Graph,
    params: &'g Params,
    trainable: bool,
    bound: RefCell<BTreeMap<String, Var<'g>>>,
}

impl<'g> Binder<'g> {
    pub fn new(graph: &'g Graph, params: &'g Params, trainable: bool) -> Self {
        Self {
            graph,
            params,
            trainable,
            bound: RefCell::new(BTreeMap::new()),
        }
    }

    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn params(&self) -> &'g Params {
        self.params
    }

    pub fn is_trainable(&self) -> bool {
        self.trainable
    }

    /// The graph variable for parameter `name`, bound on first use.
    pub fn get(&self, name: &str) -> Var<'g> {
        if let Some(v) = self.bound.borrow().get(name) {
            return *v;
        }
        let value = self
            .params
            .get(name)
            .unwrap_or_else(|| panic!("missing parameter {name}"))
            .clone();
        let var = if self.trainable {
            self.graph.variable(value)
        } else {
            self.graph.constant(value)
        };
        self.bound.borrow_mut().insert(name.to_string(), var);
        var
    }

    /// Gradients of every bound parameter; unused parameters get zeros.
    pub fn gradients(&self, grads: &Gradients) -> BTreeMap<String, Tensor> {
        let bound = self.bound.borrow();
        self.params
            .iter()
            .map(|(name, t)| {
                let g = bound
                    .get(name)
                    .and_then(|v| grads.get(*v).cloned())
                    .unwrap_or_else(|| Tensor::zeros(t.shape()));
                (name.clone(), g)
            })
            .collect()
    }
}
