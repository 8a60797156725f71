//! Named parameter storage shared by the codec, codebooks, and discriminator.

use std::collections::HashMap;

use crate::nn::{BnMode, BnUpdate, Graph, NodeId, Tensor};
use crate::{Error, Result};

/// Initial PReLU slope.
pub const PRELU_SLOPE_INIT: f64 = 0.25;

const BN_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone)]
struct Param {
    name: String,
    value: Tensor,
    trainable: bool,
}

/// Ordered, named parameter set. Order is fixed at construction time so
/// checkpoints and optimizer state line up deterministically. Non-trainable
/// entries hold batch-norm running statistics.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    params: Vec<Param>,
    index: HashMap<String, usize>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: Tensor, trainable: bool) -> usize {
        assert!(
            !self.index.contains_key(name),
            "duplicate parameter name {name}"
        );
        self.params.push(Param {
            name: name.to_string(),
            value,
            trainable,
        });
        self.index.insert(name.to_string(), self.params.len() - 1);
        self.params.len() - 1
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn idx(&self, name: &str) -> usize {
        *self
            .index
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.params[idx].name
    }

    pub fn value(&self, name: &str) -> &Tensor {
        &self.params[self.idx(name)].value
    }

    pub fn value_by_idx(&self, idx: usize) -> &Tensor {
        &self.params[idx].value
    }

    pub fn value_mut(&mut self, name: &str) -> &mut Tensor {
        let i = self.idx(name);
        &mut self.params[i].value
    }

    pub fn value_mut_by_idx(&mut self, idx: usize) -> &mut Tensor {
        &mut self.params[idx].value
    }

    pub fn is_trainable(&self, idx: usize) -> bool {
        self.params[idx].trainable
    }

    /// `(index, name, value, trainable)` in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &str, &Tensor, bool)> {
        self.params
            .iter()
            .enumerate()
            .map(|(i, p)| (i, p.name.as_str(), &p.value, p.trainable))
    }

    /// Replaces the value of an existing parameter, checking the shape.
    pub fn load(&mut self, name: &str, value: Tensor) -> Result<()> {
        let i = *self
            .index
            .get(name)
            .ok_or_else(|| Error::Checkpoint(format!("unexpected array {name}")))?;
        if self.params[i].value.shape() != value.shape() {
            return Err(Error::Checkpoint(format!(
                "shape mismatch for {name}: expected {:?}, got {:?}",
                self.params[i].value.shape(),
                value.shape()
            )));
        }
        self.params[i].value = value;
        Ok(())
    }
}

/// One forward pass under construction: the tape, a read-only view of the
/// parameters, the param-to-node bindings the optimizer will need, and any
/// batch-norm statistics observed along the way.
pub struct Forward<'a> {
    pub graph: &'a mut Graph,
    pub params: &'a ParamSet,
    pub training: bool,
    /// `(param index, node id)` for every parameter bound into this graph.
    pub bindings: Vec<(usize, NodeId)>,
    /// `(running-mean param index, running-var param index, update)`.
    pub bn_updates: Vec<(usize, usize, BnUpdate)>,
    bound: HashMap<usize, NodeId>,
}

impl<'a> Forward<'a> {
    pub fn new(graph: &'a mut Graph, params: &'a ParamSet, training: bool) -> Self {
        Self {
            graph,
            params,
            training,
            bindings: Vec::new(),
            bn_updates: Vec::new(),
            bound: HashMap::new(),
        }
    }

    /// Binds a named parameter into the graph (once per pass).
    pub fn p(&mut self, name: &str) -> NodeId {
        let idx = self.params.idx(name);
        if let Some(&id) = self.bound.get(&idx) {
            return id;
        }
        let id = self.graph.param(self.params.value_by_idx(idx).clone());
        self.bound.insert(idx, id);
        self.bindings.push((idx, id));
        id
    }

    /// Convolution layer `prefix.w` / `prefix.b`.
    pub fn conv(&mut self, x: NodeId, prefix: &str, stride: usize, pad: usize) -> NodeId {
        let w = self.p(&format!("{prefix}.w"));
        let b = self.p(&format!("{prefix}.b"));
        self.graph.conv2d(x, w, b, stride, pad)
    }

    /// Transposed convolution layer `prefix.w` / `prefix.b`.
    pub fn conv_t(&mut self, x: NodeId, prefix: &str, stride: usize, pad: usize) -> NodeId {
        let w = self.p(&format!("{prefix}.w"));
        let b = self.p(&format!("{prefix}.b"));
        self.graph.conv_transpose2d(x, w, b, stride, pad)
    }

    /// Batch-norm layer `prefix.gamma` / `prefix.beta` plus running stats.
    pub fn batch_norm(&mut self, x: NodeId, prefix: &str) -> NodeId {
        let gamma = self.p(&format!("{prefix}.gamma"));
        let beta = self.p(&format!("{prefix}.beta"));
        let rm_idx = self.params.idx(&format!("{prefix}.running_mean"));
        let rv_idx = self.params.idx(&format!("{prefix}.running_var"));
        let rm = self.params.value_by_idx(rm_idx).data().to_vec();
        let rv = self.params.value_by_idx(rv_idx).data().to_vec();
        let mode = if self.training {
            BnMode::Batch
        } else {
            BnMode::Running
        };
        let (id, update) = self
            .graph
            .batch_norm(x, gamma, beta, &rm, &rv, BN_EPS, mode);
        if let Some(u) = update {
            self.bn_updates.push((rm_idx, rv_idx, u));
        }
        id
    }

    /// Per-channel PReLU `prefix.a`.
    pub fn prelu(&mut self, x: NodeId, prefix: &str) -> NodeId {
        let a = self.p(&format!("{prefix}.a"));
        self.graph.prelu(x, a)
    }
}

/// Folds batch statistics observed during a training pass into the running
/// estimates (exponential moving average, momentum 0.1).
pub fn apply_bn_updates(params: &mut ParamSet, updates: &[(usize, usize, BnUpdate)]) {
    for (rm_idx, rv_idx, u) in updates {
        let rm = params.value_mut_by_idx(*rm_idx);
        for (r, b) in rm.data_mut().iter_mut().zip(&u.batch_mean) {
            *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * b;
        }
        let rv = params.value_mut_by_idx(*rv_idx);
        for (r, b) in rv.data_mut().iter_mut().zip(&u.batch_var_unbiased) {
            *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * b;
        }
    }
}
