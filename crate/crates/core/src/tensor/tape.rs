use std::cell::{Ref, RefCell};
use std::collections::BTreeMap;

use super::ops::{backprop, Op};
use super::{ParamId, Tensor, TensorError};

pub(crate) struct Node {
    pub(crate) value: Tensor,
    pub(crate) op: Op,
    pub(crate) requires_grad: bool,
}

/// Recording of a single forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    pub(crate) tape: &'t Tape,
    pub(crate) id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    /// Leaf value; gradients are reported for it when `requires_grad`.
    pub fn leaf(&self, value: Tensor, requires_grad: bool) -> Var<'_> {
        self.push(
            value,
            Op::Leaf {
                param: None,
            },
            requires_grad,
        )
    }

    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.leaf(value, false)
    }

    pub fn scalar(&self, v: f64) -> Var<'_> {
        self.constant(Tensor::scalar(v))
    }

    pub fn vector(&self, v: Vec<f64>) -> Var<'_> {
        self.constant(Tensor::vector(v))
    }

    pub fn param(&self, id: ParamId, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf { param: Some(id) }, true)
    }

    pub(crate) fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        let op = if requires_grad { op } else { Op::Leaf { param: None } };
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var { tape: self, id }
    }

    pub(crate) fn nodes(&self) -> Ref<'_, Vec<Node>> {
        self.nodes.borrow()
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&self, output: Var<'_>) -> Result<Gradients, TensorError> {
        assert!(
            std::ptr::eq(output.tape, self),
            "backward called with a Var from another tape"
        );
        let nodes = self.nodes.borrow();
        let out = &nodes[output.id];
        if !out.value.is_scalar() {
            return Err(TensorError::NonScalarOutput(out.value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = Vec::with_capacity(output.id + 1);
        grads.resize_with(output.id + 1, || None);
        if out.requires_grad {
            grads[output.id] = Some(Tensor::filled(out.value.shape(), 1.0));
        }
        let mut leaves = BTreeMap::new();
        let mut params: BTreeMap<ParamId, Tensor> = BTreeMap::new();
        for id in (0..=output.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            match &node.op {
                Op::Leaf { param } => {
                    if let Some(pid) = param {
                        match params.get_mut(pid) {
                            Some(acc) => acc.add_assign(&g),
                            None => {
                                params.insert(*pid, g.clone());
                            }
                        }
                    }
                    leaves.insert(id, g);
                }
                op => backprop(op, node, &g, &nodes, &mut grads),
            }
        }
        Ok(Gradients { leaves, params })
    }
}

/// Result of [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    leaves: BTreeMap<usize, Tensor>,
    params: BTreeMap<ParamId, Tensor>,
}

impl Gradients {
    /// Gradient for a leaf created with `requires_grad`; `None` otherwise.
    pub fn wrt(&self, v: Var<'_>) -> Option<&Tensor> {
        self.leaves.get(&v.id)
    }

    pub fn param(&self, id: ParamId) -> Option<&Tensor> {
        self.params.get(&id)
    }

    pub fn params(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.params.iter().map(|(k, v)| (*k, v))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Tensor {
        self.tape.nodes.borrow()[self.id].value.clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn item(&self) -> f64 {
        self.tape.nodes.borrow()[self.id].value.item()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.tape.nodes.borrow()[self.id].value.data().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.id].requires_grad
    }

    /// Same value, cut from the gradient graph.
    pub fn detach(&self) -> Var<'t> {
        self.tape.constant(self.value())
    }
}
