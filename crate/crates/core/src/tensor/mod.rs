//! Reverse-mode automatic differentiation over dense row-major tensors.
//!
//! A [`Tensor`] is an immutable value plus, when it depends on something that
//! requires a gradient, a lineage record: the producing operation, its inputs
//! and a closure computing the vector-Jacobian product. Lineage only ever
//! points at tensors that existed before the output, so the graph is acyclic
//! by construction.

mod conv;
pub mod ops;

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use crate::error::TensorError;
use crate::scalar::Scalar;

pub use conv::{conv2d, conv_output_size};

/// Vector-Jacobian product of one operation: receives the gradient of the
/// output and which inputs need a gradient, returns one entry per input.
pub(crate) type BackwardFn<T> = Box<dyn Fn(&[T], &[bool]) -> Vec<Option<Vec<T>>> + Send + Sync>;

struct Lineage<T: Scalar> {
    op: &'static str,
    inputs: Vec<Tensor<T>>,
    backward: BackwardFn<T>,
}

struct Node<T: Scalar> {
    shape: Vec<usize>,
    data: Vec<T>,
    requires_grad: bool,
    grad: Mutex<Option<Vec<T>>>,
    lineage: Option<Lineage<T>>,
}

// Unwind long lineage chains iteratively so dropping a deep graph cannot
// exhaust the stack.
impl<T: Scalar> Drop for Node<T> {
    fn drop(&mut self) {
        let Some(lineage) = self.lineage.take() else { return };
        let mut stack = lineage.inputs;
        while let Some(t) = stack.pop() {
            if let Ok(mut node) = Arc::try_unwrap(t.node) {
                if let Some(l) = node.lineage.take() {
                    stack.extend(l.inputs);
                }
            }
        }
    }
}

/// Cheaply clonable handle to an immutable tensor node.
#[derive(Clone)]
pub struct Tensor<T: Scalar> {
    node: Arc<Node<T>>,
}

impl<T: Scalar> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = f.debug_struct("Tensor");
        s.field("shape", &self.node.shape);
        if self.numel() <= 16 {
            s.field("data", &self.node.data);
        }
        s.field("requires_grad", &self.node.requires_grad);
        if let Some(l) = &self.node.lineage {
            s.field("op", &l.op);
        }
        s.finish()
    }
}

impl<T: Scalar> Tensor<T> {
    fn leaf(data: Vec<T>, shape: Vec<usize>, requires_grad: bool) -> Result<Self, TensorError> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(TensorError::shape(
                "tensor",
                format!("shape {shape:?} holds {numel} values, got {}", data.len()),
            ));
        }
        if shape.contains(&0) {
            return Err(TensorError::shape("tensor", format!("zero-sized dimension in {shape:?}")));
        }
        Ok(Self {
            node: Arc::new(Node { shape, data, requires_grad, grad: Mutex::new(None), lineage: None }),
        })
    }

    /// Constant (non-differentiable) tensor.
    pub fn new(data: Vec<T>, shape: &[usize]) -> Result<Self, TensorError> {
        Self::leaf(data, shape.to_vec(), false)
    }

    /// Trainable leaf: `backward` deposits its gradient here.
    pub fn param(data: Vec<T>, shape: &[usize]) -> Result<Self, TensorError> {
        Self::leaf(data, shape.to_vec(), true)
    }

    pub fn scalar(v: T) -> Self {
        Self::leaf(vec![v], vec![1], false).expect("scalar shape is valid")
    }

    pub fn zeros(shape: &[usize]) -> Result<Self, TensorError> {
        Self::new(vec![T::zero(); shape.iter().product()], shape)
    }

    pub fn full(shape: &[usize], v: T) -> Result<Self, TensorError> {
        Self::new(vec![v; shape.iter().product()], shape)
    }

    /// Output of an operation. Lineage is recorded only when some input needs
    /// a gradient, so inference-mode graphs stay flat.
    pub(crate) fn from_op(
        data: Vec<T>,
        shape: Vec<usize>,
        op: &'static str,
        inputs: &[&Tensor<T>],
        backward: impl Fn(&[T], &[bool]) -> Vec<Option<Vec<T>>> + Send + Sync + 'static,
    ) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len(), "{op}: bad output shape");
        let requires_grad = inputs.iter().any(|t| t.requires_grad());
        let lineage = requires_grad.then(|| Lineage {
            op,
            inputs: inputs.iter().map(|t| (*t).clone()).collect(),
            backward: Box::new(backward),
        });
        Self {
            node: Arc::new(Node { shape, data, requires_grad, grad: Mutex::new(None), lineage }),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.node.shape
    }

    pub fn data(&self) -> &[T] {
        &self.node.data
    }

    pub fn numel(&self) -> usize {
        self.node.data.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.node.requires_grad
    }

    /// Name of the producing operation, `None` for leaves and constants.
    pub fn op(&self) -> Option<&'static str> {
        self.node.lineage.as_ref().map(|l| l.op)
    }

    /// Single value of a one-element tensor.
    pub fn item(&self) -> T {
        assert_eq!(self.numel(), 1, "item() on tensor of shape {:?}", self.shape());
        self.node.data[0]
    }

    /// Accumulated gradient of a leaf after [`Tensor::backward`].
    pub fn grad(&self) -> Option<Vec<T>> {
        self.node.grad.lock().expect("grad lock poisoned").clone()
    }

    /// Gradient, or zeros when the tensor was unreachable from the loss.
    pub fn grad_or_zeros(&self) -> Vec<T> {
        self.grad().unwrap_or_else(|| vec![T::zero(); self.numel()])
    }

    pub fn zero_grad(&self) {
        *self.node.grad.lock().expect("grad lock poisoned") = None;
    }

    /// Same values, no lineage.
    pub fn detach(&self) -> Self {
        Self::leaf(self.node.data.clone(), self.node.shape.clone(), false).expect("valid shape")
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self, TensorError> {
        if shape.iter().product::<usize>() != self.numel() {
            return Err(TensorError::shape(
                "reshape",
                format!("{:?} -> {shape:?} changes element count", self.shape()),
            ));
        }
        Ok(Self::from_op(self.data().to_vec(), shape.to_vec(), "reshape", &[self], |g, _| {
            vec![Some(g.to_vec())]
        }))
    }

    fn key(&self) -> usize {
        Arc::as_ptr(&self.node) as *const () as usize
    }

    /// Reverse-mode sweep from a scalar loss. Gradients accumulate into every
    /// reachable leaf created with [`Tensor::param`].
    pub fn backward(&self) -> Result<(), TensorError> {
        if self.numel() != 1 {
            return Err(TensorError::NotScalar(self.shape().to_vec()));
        }
        if !self.requires_grad() {
            return Ok(());
        }
        let order = self.topological_order();
        let mut pending: HashMap<usize, Vec<T>> = HashMap::new();
        pending.insert(self.key(), vec![T::one()]);
        for t in order.iter().rev() {
            let Some(grad_out) = pending.remove(&t.key()) else { continue };
            match &t.node.lineage {
                None => {
                    let mut slot = t.node.grad.lock().expect("grad lock poisoned");
                    match slot.as_mut() {
                        Some(acc) => acc.iter_mut().zip(&grad_out).for_each(|(a, &g)| *a += g),
                        None => *slot = Some(grad_out),
                    }
                }
                Some(lineage) => {
                    let needs: Vec<bool> = lineage.inputs.iter().map(|i| i.requires_grad()).collect();
                    let grads = (lineage.backward)(&grad_out, &needs);
                    assert_eq!(grads.len(), lineage.inputs.len(), "{}: backward arity", lineage.op);
                    for (input, g) in lineage.inputs.iter().zip(grads) {
                        let Some(g) = g else { continue };
                        if !input.requires_grad() {
                            continue;
                        }
                        assert_eq!(g.len(), input.numel(), "{}: gradient size", lineage.op);
                        match pending.get_mut(&input.key()) {
                            Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, &v)| *a += v),
                            None => {
                                pending.insert(input.key(), g);
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    // Post-order DFS over differentiable nodes: inputs precede consumers.
    fn topological_order(&self) -> Vec<Tensor<T>> {
        let mut order = Vec::new();
        let mut visited = std::collections::HashSet::new();
        let mut stack: Vec<(Tensor<T>, usize)> = vec![(self.clone(), 0)];
        visited.insert(self.key());
        while let Some((t, next)) = stack.pop() {
            let inputs = t.node.lineage.as_ref().map(|l| l.inputs.as_slice()).unwrap_or(&[]);
            if let Some(child) = inputs.get(next) {
                let child = child.clone();
                stack.push((t, next + 1));
                if child.requires_grad() && visited.insert(child.key()) {
                    stack.push((child, 0));
                }
            } else {
                order.push(t);
            }
        }
        order
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::ops;

    #[test]
    fn shape_must_match_values() {
        assert!(Tensor::<f32>::new(vec![1.0; 5], &[2, 3]).is_err());
        assert!(Tensor::<f32>::new(vec![1.0; 6], &[2, 3]).is_ok());
    }

    #[test]
    fn grad_of_sum_is_ones() {
        let x = Tensor::<f64>::param(vec![1.0, -2.0, 3.0], &[3]).unwrap();
        ops::sum(&x).backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn grad_of_sum_of_squares_is_two_x() {
        let x = Tensor::<f64>::param(vec![1.0, 2.0], &[2]).unwrap();
        ops::sum(&ops::square(&x)).backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![2.0, 4.0]);
    }

    #[test]
    fn shared_subexpression_accumulates() {
        // loss = sum(x + x) -> grad 2
        let x = Tensor::<f64>::param(vec![0.5, 1.5], &[2]).unwrap();
        let y = ops::add(&x, &x).unwrap();
        ops::sum(&y).backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![2.0, 2.0]);
    }

    #[test]
    fn unreachable_param_has_zero_grad() {
        let x = Tensor::<f64>::param(vec![1.0], &[1]).unwrap();
        let unused = Tensor::<f64>::param(vec![1.0, 2.0], &[2]).unwrap();
        ops::sum(&x).backward().unwrap();
        assert!(unused.grad().is_none());
        assert_eq!(unused.grad_or_zeros(), vec![0.0, 0.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let x = Tensor::<f32>::param(vec![1.0, 2.0], &[2]).unwrap();
        assert!(matches!(x.backward(), Err(TensorError::NotScalar(_))));
    }

    #[test]
    fn constants_record_no_lineage() {
        let a = Tensor::<f32>::new(vec![1.0, 2.0], &[2]).unwrap();
        let b = ops::relu(&a);
        assert!(b.op().is_none());
        assert!(!b.requires_grad());
    }

    #[test]
    fn deep_chain_does_not_overflow_stack() {
        let x = Tensor::<f64>::param(vec![1.0], &[1]).unwrap();
        let mut y = x.clone();
        for _ in 0..20_000 {
            y = ops::scale(&y, 1.0);
        }
        y.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0]);
    }
}
