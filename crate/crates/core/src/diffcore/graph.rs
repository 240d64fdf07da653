//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! A [`Graph`] records every operation applied to its [`Var`] handles. Calling
//! [`Graph::backward`] replays the recorded rules in reverse order and yields the
//! gradient of a scalar with respect to every node that requires one. A graph is
//! meant to live for a single forward/backward pass; build a fresh one per step.
//!
//! ```
//! use hard_core::diffcore::{Graph, Tensor};
//!
//! let g = Graph::new();
//! let x = g.leaf(Tensor::from_slice(&[1.0, 2.0, 3.0]));
//! let loss = x.mul(x).unwrap().sum();
//! let grads = g.grad(loss, &[x]).unwrap();
//! assert_eq!(grads[0].data(), &[2.0, 4.0, 6.0]);
//! ```

use std::cell::RefCell;
use std::rc::Rc;

use super::Tensor;
use crate::error::{Error, Result};

/// Local gradient rule: maps the output gradient to one optional gradient per
/// parent. `None` means the parent receives nothing.
pub(crate) type BackwardFn = Box<dyn Fn(&Tensor) -> Vec<Option<Tensor>>>;

struct Node {
    value: Rc<Tensor>,
    requires_grad: bool,
    parents: Vec<usize>,
    backward: Option<BackwardFn>,
}

#[derive(Default)]
pub struct Graph {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy)]
pub struct Var<'g> {
    pub(crate) graph: &'g Graph,
    pub(crate) id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}({:?})", self.id, self.value())
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A differentiable input.
    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        self.push(Rc::new(value), true, Vec::new(), None)
    }

    /// An input that never receives a gradient.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(Rc::new(value), false, Vec::new(), None)
    }

    fn push(
        &self,
        value: Rc<Tensor>,
        requires_grad: bool,
        parents: Vec<usize>,
        backward: Option<BackwardFn>,
    ) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            requires_grad,
            parents,
            backward,
        });
        Var {
            graph: self,
            id: nodes.len() - 1,
        }
    }

    /// Records the result of an operation. The rule is only kept when some parent
    /// requires a gradient.
    pub(crate) fn record<'g>(
        &'g self,
        value: Tensor,
        parents: &[Var<'g>],
        backward: impl Fn(&Tensor) -> Vec<Option<Tensor>> + 'static,
    ) -> Var<'g> {
        for p in parents {
            debug_assert!(std::ptr::eq(p.graph, self), "mixing vars of different graphs");
        }
        let requires_grad = parents.iter().any(|p| p.requires_grad());
        if requires_grad {
            self.push(
                Rc::new(value),
                true,
                parents.iter().map(|p| p.id).collect(),
                Some(Box::new(backward)),
            )
        } else {
            self.push(Rc::new(value), false, Vec::new(), None)
        }
    }

    /// Gradients of the scalar `loss` with respect to every node that requires one.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id];
        if root.value.len() != 1 {
            return Err(Error::shape(
                "backward",
                format!("loss must be a scalar, got shape {:?}", root.value.shape()),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; nodes.len()];
        if root.requires_grad {
            grads[loss.id] = Some(Tensor::full(root.value.shape().to_vec(), 1.0));
        }
        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            let Some(rule) = node.backward.as_ref() else {
                continue;
            };
            let Some(out_grad) = grads[id].take() else {
                continue;
            };
            let parent_grads = rule(&out_grad);
            debug_assert_eq!(parent_grads.len(), node.parents.len());
            for (&pid, pg) in node.parents.iter().zip(parent_grads) {
                let Some(pg) = pg else { continue };
                if !nodes[pid].requires_grad {
                    continue;
                }
                debug_assert_eq!(pg.shape(), nodes[pid].value.shape());
                match &mut grads[pid] {
                    Some(acc) => acc.add_assign(&pg),
                    slot @ None => *slot = Some(pg),
                }
            }
        }
        Ok(Gradients { grads })
    }

    /// Gradients of `loss` with respect to `leaves`, in order. Leaves that do not
    /// participate in the loss get an all-zero gradient.
    pub fn grad(&self, loss: Var<'_>, leaves: &[Var<'_>]) -> Result<Vec<Tensor>> {
        let grads = self.backward(loss)?;
        Ok(leaves.iter().map(|v| grads.get(*v)).collect())
    }
}

/// Result of [`Graph::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient with respect to the leaf `var`; zeros when it received none.
    /// Interior gradients are released during propagation.
    pub fn get(&self, var: Var<'_>) -> Tensor {
        match self.grads.get(var.id).and_then(|g| g.as_ref()) {
            Some(g) => g.clone(),
            None => Tensor::zeros(var.value().shape().to_vec()),
        }
    }
}

impl<'g> Var<'g> {
    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    /// Shared handle to the node's value.
    pub fn value(&self) -> Rc<Tensor> {
        Rc::clone(&self.graph.nodes.borrow()[self.id].value)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.graph.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.graph.nodes.borrow()[self.id].requires_grad
    }

    /// Same value, cut from the graph.
    pub fn detach(&self) -> Var<'g> {
        self.graph.push(self.value(), false, Vec::new(), None)
    }
}
