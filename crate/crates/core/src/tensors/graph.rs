//! Dynamic tape for reverse-mode differentiation.
//!
//! Every kernel pushes one node holding its output value and, when any input is
//! tracked, a closure that maps the output gradient onto the inputs. Node ids are
//! allocated in creation order, so a reverse sweep over ids is a valid topological
//! order.

use std::cell::RefCell;
use std::sync::Arc;

use crate::error::{Error, Result};

use super::param::{ParamId, ParamStore};
use super::{Real, Tensor};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

pub(crate) type GradFn<T> = Box<dyn Fn(&Tensor<T>, &mut GradSink<T>)>;

struct Node<T> {
    value: Arc<Tensor<T>>,
    grad_fn: Option<GradFn<T>>,
    tracked: bool,
    param: Option<ParamId>,
}

#[derive(Default)]
pub struct Graph<T: Real> {
    nodes: RefCell<Vec<Node<T>>>,
}

/// Gradient buffers handed to backward closures.
pub(crate) struct GradSink<T> {
    grads: Vec<Option<Vec<T>>>,
    lens: Vec<usize>,
    tracked: Vec<bool>,
}

impl<T: Real> GradSink<T> {
    /// Mutable gradient buffer of `v`, or `None` when `v` does not need a gradient.
    pub(crate) fn slot(&mut self, v: Var) -> Option<&mut [T]> {
        if !self.tracked[v.0] {
            return None;
        }
        let len = self.lens[v.0];
        Some(
            self.grads[v.0]
                .get_or_insert_with(|| vec![T::zero(); len])
                .as_mut_slice(),
        )
    }

    pub(crate) fn wants(&self, v: Var) -> bool {
        self.tracked[v.0]
    }

    pub(crate) fn add(&mut self, v: Var, g: &[T]) {
        if let Some(slot) = self.slot(v) {
            for (s, &x) in slot.iter_mut().zip(g) {
                *s += x;
            }
        }
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push_node(&self, node: Node<T>) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(node);
        Var(nodes.len() - 1)
    }

    /// Untracked input; receives no gradient.
    pub fn constant(&self, value: Tensor<T>) -> Var {
        self.push_node(Node {
            value: Arc::new(value),
            grad_fn: None,
            tracked: false,
            param: None,
        })
    }

    /// Tracked input whose gradient is reported by [`Gradients::wrt`].
    pub fn leaf(&self, value: Tensor<T>) -> Var {
        self.push_node(Node {
            value: Arc::new(value),
            grad_fn: None,
            tracked: true,
            param: None,
        })
    }

    /// Leaf bound to a stored parameter. Frozen parameters enter as constants.
    pub fn param(&self, store: &ParamStore<T>, id: ParamId) -> Var {
        let p = store.get(id);
        self.push_node(Node {
            value: Arc::clone(&p.tensor),
            grad_fn: None,
            tracked: p.trainable,
            param: Some(id),
        })
    }

    pub fn value(&self, v: Var) -> Arc<Tensor<T>> {
        Arc::clone(&self.nodes.borrow()[v.0].value)
    }

    pub fn shape(&self, v: Var) -> Vec<usize> {
        self.nodes.borrow()[v.0].value.shape().to_vec()
    }

    pub fn is_tracked(&self, v: Var) -> bool {
        self.nodes.borrow()[v.0].tracked
    }

    /// Record a kernel output. The closure is dropped when no input is tracked.
    pub(crate) fn push<F>(&self, value: Tensor<T>, inputs: &[Var], grad_fn: F) -> Var
    where
        F: Fn(&Tensor<T>, &mut GradSink<T>) + 'static,
    {
        self.push_arc(Arc::new(value), inputs, grad_fn)
    }

    pub(crate) fn push_arc<F>(&self, value: Arc<Tensor<T>>, inputs: &[Var], grad_fn: F) -> Var
    where
        F: Fn(&Tensor<T>, &mut GradSink<T>) + 'static,
    {
        let tracked = {
            let nodes = self.nodes.borrow();
            inputs.iter().any(|v| nodes[v.0].tracked)
        };
        self.push_node(Node {
            value,
            grad_fn: if tracked { Some(Box::new(grad_fn)) } else { None },
            tracked,
            param: None,
        })
    }

    /// Reverse sweep from a scalar loss.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.0];
        if root.value.len() != 1 {
            return Err(Error::NonScalarLoss(root.value.shape().to_vec()));
        }
        let n = loss.0 + 1;
        let mut sink = GradSink {
            grads: (0..n).map(|_| None).collect(),
            lens: nodes[..n].iter().map(|nd| nd.value.len()).collect(),
            tracked: nodes[..n].iter().map(|nd| nd.tracked).collect(),
        };
        if root.tracked {
            sink.grads[loss.0] = Some(vec![T::one()]);
        }
        for id in (0..n).rev() {
            let node = &nodes[id];
            let Some(f) = &node.grad_fn else { continue };
            let Some(g) = sink.grads[id].take() else {
                continue;
            };
            let g = Tensor::new(node.value.shape(), g).expect("gradient shape");
            f(&g, &mut sink);
            // Intermediate gradients are not reported; free them as we go.
        }
        let grads = sink
            .grads
            .into_iter()
            .enumerate()
            .map(|(id, g)| {
                g.map(|data| Tensor::new(nodes[id].value.shape(), data).expect("gradient shape"))
            })
            .collect();
        let params = nodes[..n]
            .iter()
            .enumerate()
            .filter_map(|(id, nd)| nd.param.map(|p| (p, id)))
            .collect();
        Ok(Gradients { grads, params })
    }
}

/// Gradients of the leaves reachable from a loss.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
    params: Vec<(ParamId, usize)>,
}

impl<T: Real> Gradients<T> {
    pub fn wrt(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Add parameter gradients into the store; calling twice doubles them.
    pub fn accumulate_into(&self, store: &mut ParamStore<T>) {
        for &(pid, node) in &self.params {
            if let Some(g) = &self.grads[node] {
                store.accumulate_grad(pid, g);
            }
        }
    }
}
