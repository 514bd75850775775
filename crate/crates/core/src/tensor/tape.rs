//! Reverse-mode differentiation by operation recording.
//!
//! Every forward op appends a node holding its output value, the ids of its
//! inputs and a [`Function`] that maps the output gradient to input
//! gradients. [`Tape::backward`] walks the nodes in exact reverse order.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Array;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Backward rule of a recorded op.
pub trait Function<T: Scalar>: Send {
    fn name(&self) -> &'static str;

    /// Returns one gradient per input (`None` for inputs that get no gradient).
    fn backward(
        &self,
        inputs: &[&Array<T>],
        output: &Array<T>,
        grad_output: &Array<T>,
    ) -> Vec<Option<Array<T>>>;
}

enum NodeKind<T> {
    Constant,
    Param,
    Op {
        inputs: Vec<Var>,
        function: Box<dyn Function<T>>,
    },
}

struct Node<T> {
    value: Array<T>,
    kind: NodeKind<T>,
    requires_grad: bool,
}

pub struct Tape<T: Scalar> {
    nodes: Vec<Node<T>>,
    consumed: bool,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            consumed: false,
        }
    }

    pub fn reset(&mut self) {
        self.nodes.clear();
        self.consumed = false;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a value that receives no gradient.
    pub fn constant(&mut self, value: Array<T>) -> Var {
        self.push_node(value, NodeKind::Constant, false)
    }

    /// Records a trainable leaf.
    pub fn param(&mut self, value: Array<T>) -> Var {
        self.push_node(value, NodeKind::Param, true)
    }

    /// Records the result of an op. The node is differentiable if any input is.
    pub fn push(&mut self, value: Array<T>, inputs: Vec<Var>, function: Box<dyn Function<T>>) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.push_node(value, NodeKind::Op { inputs, function }, requires_grad)
    }

    fn push_node(&mut self, value: Array<T>, kind: NodeKind<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            kind,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Array<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Name of the op that produced `v` (`"constant"` / `"param"` for leaves).
    pub fn op_name(&self, v: Var) -> &'static str {
        match &self.nodes[v.0].kind {
            NodeKind::Constant => "constant",
            NodeKind::Param => "param",
            NodeKind::Op { function, .. } => function.name(),
        }
    }

    /// Back-propagates from `loss` (seeded with ones of its shape). A tape can be
    /// replayed once; call [`Tape::reset`] before recording a new pass.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients<T>> {
        self.backward_with(loss, T::one())
    }

    pub fn backward_with(&mut self, loss: Var, seed: T) -> Result<Gradients<T>> {
        if self.consumed {
            return Err(Error::TapeConsumed);
        }
        self.consumed = true;
        let mut grads: Vec<Option<Array<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Array::full(self.nodes[loss.0].value.shape(), seed));

        for idx in (0..=loss.0).rev() {
            let Some(grad_out) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if let NodeKind::Op { inputs, function } = &node.kind {
                if node.requires_grad {
                    let values: Vec<&Array<T>> = inputs.iter().map(|v| &self.nodes[v.0].value).collect();
                    let input_grads = function.backward(&values, &node.value, &grad_out);
                    debug_assert_eq!(input_grads.len(), inputs.len(), "{}", function.name());
                    for (var, g) in inputs.iter().zip(input_grads) {
                        let Some(g) = g else { continue };
                        if !self.nodes[var.0].requires_grad {
                            continue;
                        }
                        debug_assert_eq!(g.shape(), self.nodes[var.0].value.shape(), "{}", function.name());
                        match &mut grads[var.0] {
                            Some(acc) => acc.axpy(T::one(), &g),
                            slot @ None => *slot = Some(g),
                        }
                    }
                }
            }
            // Keep leaf gradients; intermediates are dropped as soon as they are used.
            if !matches!(node.kind, NodeKind::Op { .. }) {
                grads[idx] = Some(grad_out);
            }
        }

        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { grads, shapes })
    }
}

/// Gradients of a scalar loss with respect to the leaves of a tape.
pub struct Gradients<T> {
    grads: Vec<Option<Array<T>>>,
    shapes: Vec<Vec<usize>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient for a leaf; a leaf the loss does not depend on gets zeros.
    pub fn get(&self, v: Var) -> Array<T> {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => Array::zeros(&self.shapes[v.0]),
        }
    }

    pub fn take(&mut self, v: Var) -> Array<T> {
        match self.grads[v.0].take() {
            Some(g) => g,
            None => Array::zeros(&self.shapes[v.0]),
        }
    }
}
