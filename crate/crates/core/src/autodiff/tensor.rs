use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt;
use std::rc::Rc;

use super::Real;
use crate::error::{Error, Result};

/// Gradients handed back by a backward rule, one slot per parent. `None`
/// means "no contribution" (or the parent does not track gradients).
pub(crate) type ParentGrads<T> = Vec<Option<Vec<T>>>;

pub(crate) struct BackwardCtx<'a, T: Real> {
    pub grad: &'a [T],
    pub parents: &'a [Tensor<T>],
    pub output: &'a [T],
}

impl<T: Real> BackwardCtx<'_, T> {
    pub fn needs(&self, i: usize) -> bool {
        self.parents[i].requires_grad()
    }
}

type BackwardFn<T> = Box<dyn Fn(&BackwardCtx<'_, T>) -> ParentGrads<T>>;

struct GradFn<T: Real> {
    op: &'static str,
    parents: Vec<Tensor<T>>,
    backward: BackwardFn<T>,
}

struct Node<T: Real> {
    shape: Vec<usize>,
    data: Vec<T>,
    requires_grad: bool,
    grad: RefCell<Option<Vec<T>>>,
    grad_fn: Option<GradFn<T>>,
}

/// A value in the reverse-mode graph. Cloning is cheap (shared node).
///
/// Image tensors are `(N, C, H, W)`; flat activations are `(N, K)`.
pub struct Tensor<T: Real = f32>(Rc<Node<T>>);

impl<T: Real> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Tensor(Rc::clone(&self.0))
    }
}

impl<T: Real> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = f.debug_struct("Tensor");
        s.field("shape", &self.0.shape);
        if let Some(g) = &self.0.grad_fn {
            s.field("op", &g.op);
        }
        if self.numel() <= 8 {
            s.field("data", &self.0.data);
        }
        s.finish()
    }
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<T: Real> Tensor<T> {
    fn leaf(data: Vec<T>, shape: Vec<usize>, requires_grad: bool) -> Result<Self> {
        if data.len() != numel(&shape) {
            return Err(Error::InvalidArgument(format!(
                "shape {shape:?} needs {} values, got {}",
                numel(&shape),
                data.len()
            )));
        }
        Ok(Tensor(Rc::new(Node {
            shape,
            data,
            requires_grad,
            grad: RefCell::new(None),
            grad_fn: None,
        })))
    }

    /// A constant: gradients never flow into it.
    pub fn new(data: Vec<T>, shape: &[usize]) -> Result<Self> {
        Self::leaf(data, shape.to_vec(), false)
    }

    /// A leaf that accumulates gradients during [`Tensor::backward`].
    pub fn parameter(data: Vec<T>, shape: &[usize]) -> Result<Self> {
        Self::leaf(data, shape.to_vec(), true)
    }

    pub fn scalar(v: T) -> Self {
        Self::leaf(vec![v], vec![1], false).expect("scalar shape")
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: &[usize], v: T) -> Self {
        Self::leaf(vec![v; numel(shape)], shape.to_vec(), false).expect("consistent shape")
    }

    /// Same data, detached from any graph, tracking gradients as a new leaf.
    pub fn to_parameter(&self) -> Self {
        Self::leaf(self.0.data.clone(), self.0.shape.clone(), true).expect("consistent shape")
    }

    /// Same data, detached from any graph.
    pub fn detach(&self) -> Self {
        Self::leaf(self.0.data.clone(), self.0.shape.clone(), false).expect("consistent shape")
    }

    /// Records an op output. When no parent tracks gradients the result is a
    /// plain constant and `backward` is dropped.
    pub(crate) fn from_op(
        op: &'static str,
        data: Vec<T>,
        shape: Vec<usize>,
        parents: Vec<Tensor<T>>,
        backward: impl Fn(&BackwardCtx<'_, T>) -> ParentGrads<T> + 'static,
    ) -> Self {
        debug_assert_eq!(data.len(), numel(&shape), "{op}: output size");
        let requires_grad = parents.iter().any(|p| p.requires_grad());
        let grad_fn = requires_grad.then(|| GradFn {
            op,
            parents,
            backward: Box::new(backward),
        });
        Tensor(Rc::new(Node {
            shape,
            data,
            requires_grad,
            grad: RefCell::new(None),
            grad_fn,
        }))
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn numel(&self) -> usize {
        self.0.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.0.data
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    /// The op that produced this tensor, `None` for leaves and constants.
    pub fn op(&self) -> Option<&'static str> {
        self.0.grad_fn.as_ref().map(|g| g.op)
    }

    /// Accumulated gradient of a leaf, if any backward pass reached it.
    pub fn grad(&self) -> Option<Vec<T>> {
        self.0.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.borrow_mut() = None;
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> T {
        assert_eq!(self.numel(), 1, "item() on tensor of shape {:?}", self.shape());
        self.0.data[0]
    }

    /// `(N, C, H, W)` of a rank-4 tensor.
    pub fn dims4(&self) -> Result<(usize, usize, usize, usize)> {
        match self.shape() {
            &[n, c, h, w] => Ok((n, c, h, w)),
            s => Err(Error::InvalidArgument(format!(
                "expected a rank-4 (N, C, H, W) tensor, got {s:?}"
            ))),
        }
    }

    fn key(&self) -> *const Node<T> {
        Rc::as_ptr(&self.0)
    }

    /// Back-propagates from a scalar. Leaves that track gradients accumulate
    /// `d self / d leaf`; calling twice without [`Tensor::zero_grad`] sums.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::NonScalarLoss(self.shape().to_vec()));
        }
        if !self.requires_grad() {
            return Ok(());
        }
        if self.0.grad_fn.is_none() {
            accumulate_leaf(self, &[T::one()]);
            return Ok(());
        }

        // Post-order DFS over interior nodes; leaves are handled inline.
        let mut order: Vec<Tensor<T>> = Vec::new();
        let mut visited: HashMap<*const Node<T>, ()> = HashMap::new();
        let mut stack: Vec<(Tensor<T>, bool)> = vec![(self.clone(), false)];
        while let Some((t, expanded)) = stack.pop() {
            if expanded {
                order.push(t);
                continue;
            }
            if visited.insert(t.key(), ()).is_some() {
                continue;
            }
            let parents = &t.0.grad_fn.as_ref().expect("interior node").parents;
            let children: Vec<Tensor<T>> = parents
                .iter()
                .filter(|p| p.requires_grad() && p.0.grad_fn.is_some() && !visited.contains_key(&p.key()))
                .cloned()
                .collect();
            stack.push((t, true));
            for p in children {
                stack.push((p, false));
            }
        }

        let mut grads: HashMap<*const Node<T>, Vec<T>> = HashMap::new();
        grads.insert(self.key(), vec![T::one()]);
        for t in order.iter().rev() {
            let Some(g) = grads.remove(&t.key()) else {
                continue;
            };
            let gf = t.0.grad_fn.as_ref().expect("interior node");
            let ctx = BackwardCtx {
                grad: &g,
                parents: &gf.parents,
                output: &t.0.data,
            };
            let parent_grads = (gf.backward)(&ctx);
            debug_assert_eq!(parent_grads.len(), gf.parents.len(), "{}", gf.op);
            for (p, pg) in gf.parents.iter().zip(parent_grads) {
                let Some(pg) = pg else { continue };
                if !p.requires_grad() {
                    continue;
                }
                debug_assert_eq!(pg.len(), p.numel(), "{}: parent grad size", gf.op);
                if p.0.grad_fn.is_none() {
                    accumulate_leaf(p, &pg);
                } else {
                    match grads.get_mut(&p.key()) {
                        Some(acc) => acc.iter_mut().zip(&pg).for_each(|(a, &b)| *a += b),
                        None => {
                            grads.insert(p.key(), pg);
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

fn accumulate_leaf<T: Real>(t: &Tensor<T>, g: &[T]) {
    let mut slot = t.0.grad.borrow_mut();
    match slot.as_mut() {
        Some(acc) => acc.iter_mut().zip(g).for_each(|(a, &b)| *a += b),
        None => *slot = Some(g.to_vec()),
    }
}
