use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};

/// Vector-Jacobian product: given the upstream gradient, the forward output
/// and the op inputs, return one optional gradient per input.
pub(crate) type VjpFn = dyn Fn(&[f64], &[f64], &[Tensor]) -> Vec<Option<Vec<f64>>> + Send + Sync;

pub(crate) struct GradFn {
    pub(crate) name: &'static str,
    pub(crate) inputs: Vec<Tensor>,
    pub(crate) vjp: Box<VjpFn>,
}

struct Inner {
    shape: Vec<usize>,
    data: Vec<f64>,
    requires_grad: bool,
    grad: Mutex<Option<Vec<f64>>>,
    grad_fn: Option<GradFn>,
}

/// Dense row-major array of `f64` that records how it was computed.
///
/// Cloning is cheap (reference counted). Tensors are immutable once built;
/// every op allocates a fresh output.
#[derive(Clone)]
pub struct Tensor {
    inner: Arc<Inner>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut d = f.debug_struct("Tensor");
        d.field("shape", &self.inner.shape);
        if self.numel() <= 16 {
            d.field("data", &self.inner.data);
        }
        if let Some(g) = &self.inner.grad_fn {
            d.field("op", &g.name);
        }
        d.finish()
    }
}

pub(crate) fn numel_of(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    fn build(shape: Vec<usize>, data: Vec<f64>, requires_grad: bool, grad_fn: Option<GradFn>) -> Self {
        Tensor {
            inner: Arc::new(Inner {
                shape,
                data,
                requires_grad,
                grad: Mutex::new(None),
                grad_fn,
            }),
        }
    }

    /// Constant tensor (no gradient tracking).
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        Self::check_new(shape, &data)?;
        Ok(Self::build(shape.to_vec(), data, false, None))
    }

    /// Leaf tensor whose gradient is accumulated by [`Tensor::backward`].
    pub fn leaf(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        Self::check_new(shape, &data)?;
        Ok(Self::build(shape.to_vec(), data, true, None))
    }

    fn check_new(shape: &[usize], data: &[f64]) -> Result<()> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::shape("new", format!("zero extent in {shape:?}")));
        }
        if numel_of(shape) != data.len() {
            return Err(Error::shape(
                "new",
                format!("shape {shape:?} needs {} values, got {}", numel_of(shape), data.len()),
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { op: "new" });
        }
        Ok(())
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::build(shape.to_vec(), vec![0.0; numel_of(shape)], false, None)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Self::build(shape.to_vec(), vec![value; numel_of(shape)], false, None)
    }

    pub fn scalar(value: f64) -> Self {
        Self::build(Vec::new(), vec![value], false, None)
    }

    /// Output of a primitive. Gradient bookkeeping is only attached when an
    /// input requires it; non-finite outputs are rejected.
    pub(crate) fn from_op(
        name: &'static str,
        shape: Vec<usize>,
        data: Vec<f64>,
        inputs: &[&Tensor],
        vjp: Box<VjpFn>,
    ) -> Result<Self> {
        debug_assert_eq!(numel_of(&shape), data.len(), "{name}");
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { op: name });
        }
        let requires_grad = inputs.iter().any(|t| t.requires_grad());
        let grad_fn = requires_grad.then(|| GradFn {
            name,
            inputs: inputs.iter().map(|t| (*t).clone()).collect(),
            vjp,
        });
        Ok(Self::build(shape, data, requires_grad, grad_fn))
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.inner.data
    }

    pub fn numel(&self) -> usize {
        self.inner.data.len()
    }

    pub fn ndim(&self) -> usize {
        self.inner.shape.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.inner.grad_fn.is_none()
    }

    pub fn op_name(&self) -> Option<&'static str> {
        self.inner.grad_fn.as_ref().map(|g| g.name)
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.numel(), 1, "item() on tensor of shape {:?}", self.shape());
        self.inner.data[0]
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.inner.data.clone()
    }

    /// Same values, cut from the graph.
    pub fn detach(&self) -> Tensor {
        if !self.requires_grad() {
            return self.clone();
        }
        Self::build(self.inner.shape.clone(), self.inner.data.clone(), false, None)
    }

    /// Accumulated gradient of a leaf (zeros if nothing reached it).
    pub fn grad(&self) -> Vec<f64> {
        let g = self.inner.grad.lock().expect("grad lock");
        g.clone().unwrap_or_else(|| vec![0.0; self.numel()])
    }

    pub fn has_grad(&self) -> bool {
        self.inner.grad.lock().expect("grad lock").is_some()
    }

    pub fn zero_grad(&self) {
        *self.inner.grad.lock().expect("grad lock") = None;
    }

    fn accumulate_grad(&self, g: &[f64]) {
        let mut slot = self.inner.grad.lock().expect("grad lock");
        match slot.as_mut() {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
            None => *slot = Some(g.to_vec()),
        }
    }

    fn key(&self) -> usize {
        Arc::as_ptr(&self.inner) as usize
    }

    /// Reverse-mode sweep from a scalar loss; gradients land on leaves.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::NonScalarLoss(self.shape().to_vec()));
        }
        let tape = Tape::record(self);
        tape.run(self)
    }
}

/// Topologically ordered view of the graph that produced a tensor.
pub struct Tape {
    nodes: Vec<Tensor>,
}

impl Tape {
    /// Collect every node reachable from `root` that needs a gradient,
    /// ordered so each node appears after all of its inputs.
    pub fn record(root: &Tensor) -> Tape {
        let mut nodes = Vec::new();
        if !root.requires_grad() {
            return Tape { nodes };
        }
        let mut seen: HashMap<usize, ()> = HashMap::new();
        // iterative post-order DFS; the recursion depth of unrolled graphs is unbounded
        let mut stack: Vec<(Tensor, bool)> = vec![(root.clone(), false)];
        while let Some((t, expanded)) = stack.pop() {
            if expanded {
                nodes.push(t);
                continue;
            }
            if seen.insert(t.key(), ()).is_some() {
                continue;
            }
            stack.push((t.clone(), true));
            if let Some(gf) = &t.inner.grad_fn {
                for inp in gf.inputs.iter().rev() {
                    if inp.requires_grad() && !seen.contains_key(&inp.key()) {
                        stack.push((inp.clone(), false));
                    }
                }
            }
        }
        Tape { nodes }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Names of recorded primitives in execution order.
    pub fn op_names(&self) -> Vec<&'static str> {
        self.nodes.iter().filter_map(|t| t.op_name()).collect()
    }

    fn run(&self, root: &Tensor) -> Result<()> {
        if self.nodes.is_empty() {
            return Ok(());
        }
        let mut grads: HashMap<usize, Vec<f64>> = HashMap::with_capacity(self.nodes.len());
        grads.insert(root.key(), vec![1.0]);
        for node in self.nodes.iter().rev() {
            let Some(g) = grads.remove(&node.key()) else {
                continue;
            };
            match &node.inner.grad_fn {
                None => node.accumulate_grad(&g),
                Some(gf) => {
                    let input_grads = (gf.vjp)(&g, node.data(), &gf.inputs);
                    debug_assert_eq!(input_grads.len(), gf.inputs.len(), "{}", gf.name);
                    for (inp, ig) in gf.inputs.iter().zip(input_grads) {
                        let Some(ig) = ig else { continue };
                        if !inp.requires_grad() {
                            continue;
                        }
                        debug_assert_eq!(ig.len(), inp.numel(), "{}", gf.name);
                        match grads.get_mut(&inp.key()) {
                            Some(acc) => acc.iter_mut().zip(&ig).for_each(|(a, b)| *a += b),
                            None => {
                                grads.insert(inp.key(), ig);
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}
