//! Reverse-mode automatic differentiation over a linear tape.
//!
//! A [`Tape`] owns the values of every tensor produced during one forward
//! pass. Each recorded node references only earlier nodes, so walking the
//! list backwards visits every node once in a valid topological order.
//! [`Tape::backward`] returns a [`Gradients`] table; callers move gradients
//! of leaves into their tensors with [`Gradients::accumulate_into`], which
//! adds to whatever is already there.

mod ops;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::nn::conv::{self, ConvDims};
use crate::nn::{norm, pool};
use crate::tensor::check_shape;
use crate::{Error, Result, Scalar, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

pub(crate) enum Op<T> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddScalar(Var),
    MulScalar(Var, T),
    MaxScalar(Var, T),
    Sum(Var),
    Reshape(Var),
    MatMul { a: Var, b: Var, m: usize, k: usize, n: usize },
    Linear { x: Var, w: Var, b: Option<Var>, rows: usize, inputs: usize, outputs: usize },
    Conv2d { x: Var, w: Var, b: Option<Var>, dims: ConvDims },
    BatchNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<T>, inv_std: Vec<T>, train: bool },
    MaxPool { x: Var, argmax: Vec<usize> },
    GlobalAvgPool { x: Var, spatial: usize },
    GlobalMaxPool { x: Var, argmax: Vec<usize> },
    Dropout { x: Var, mask: Vec<T> },
    Sigmoid(Var),
    ChannelScale { x: Var, s: Var, spatial: usize },
    CrossEntropy { logits: Var, labels: Vec<usize>, probs: Vec<T> },
    Gather { x: Var, indices: Vec<usize> },
}

struct Node<T> {
    shape: Vec<usize>,
    data: Vec<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Record of one forward pass.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a copy of `t`; gradients flow to it iff it requires grad.
    pub fn leaf(&mut self, t: &Tensor<T>) -> Var {
        self.push_node(t.shape().to_vec(), t.data().to_vec(), Op::Leaf, t.requires_grad())
    }

    /// Records `t` without copying.
    pub fn input(&mut self, t: Tensor<T>) -> Var {
        let needs = t.requires_grad();
        let shape = t.shape().to_vec();
        self.push_node(shape, t.into_data(), Op::Leaf, needs)
    }

    /// Records a value that never receives gradients.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        let shape = t.shape().to_vec();
        self.push_node(shape, t.into_data(), Op::Leaf, false)
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn data(&self, v: Var) -> &[T] {
        &self.nodes[v.0].data
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn tensor(&self, v: Var) -> Tensor<T> {
        let node = &self.nodes[v.0];
        Tensor::from_vec(&node.shape, node.data.clone()).expect("tape holds valid shapes")
    }

    fn push_node(&mut self, shape: Vec<usize>, data: Vec<T>, op: Op<T>, needs_grad: bool) -> Var {
        debug_assert!(check_shape(&shape, data.len()).is_ok());
        self.nodes.push(Node { shape, data, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    /// Records a derived value; it needs a gradient iff any input does.
    pub(crate) fn push(&mut self, shape: Vec<usize>, data: Vec<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let needs = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.push_node(shape, data, op, needs)
    }

    /// Differentiates the single-element `root` with respect to every
    /// recorded value that requires a gradient.
    pub fn backward(&self, root: Var) -> Result<Gradients<T>> {
        let node = self.nodes.get(root.0).ok_or_else(|| Error::Contract(format!("{root:?} is not on this tape")))?;
        if node.data.len() != 1 {
            return Err(Error::Contract(format!("backward needs a single-element root, got shape {:?}", node.shape)));
        }
        if !node.needs_grad {
            return Err(Error::Contract("root is not connected to any tensor that requires grad".into()));
        }
        let mut grads: Vec<Option<Vec<T>>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        grads[root.0] = Some(vec![T::one()]);

        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            {
                let (before, _) = grads.split_at_mut(i);
                let mut sink = Sink { grads: before, nodes: &self.nodes };
                self.backward_node(node, &g, &mut sink);
            }
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn backward_node(&self, node: &Node<T>, g: &[T], sink: &mut Sink<'_, T>) {
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                sink.add(*a, g);
                sink.add(*b, g);
            }
            Op::Sub(a, b) => {
                sink.add(*a, g);
                sink.with(*b, |gb| gb.iter_mut().zip(g).for_each(|(d, &s)| *d -= s));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.data(*a), self.data(*b));
                sink.with(*a, |ga| {
                    for ((d, &s), &y) in ga.iter_mut().zip(g).zip(bv) {
                        *d += s * y;
                    }
                });
                sink.with(*b, |gb| {
                    for ((d, &s), &x) in gb.iter_mut().zip(g).zip(av) {
                        *d += s * x;
                    }
                });
            }
            Op::AddScalar(a) | Op::Reshape(a) => sink.add(*a, g),
            Op::MulScalar(a, s) => {
                sink.with(*a, |ga| ga.iter_mut().zip(g).for_each(|(d, &v)| *d += v * *s));
            }
            Op::MaxScalar(a, s) => {
                let av = self.data(*a);
                sink.with(*a, |ga| {
                    for ((d, &v), &x) in ga.iter_mut().zip(g).zip(av) {
                        if x > *s {
                            *d += v;
                        }
                    }
                });
            }
            Op::Sum(a) => sink.with(*a, |ga| ga.iter_mut().for_each(|d| *d += g[0])),
            Op::MatMul { a, b, m, k, n } => {
                ops::matmul_backward(self.data(*a), self.data(*b), g, (*m, *k, *n), *a, *b, sink);
            }
            Op::Linear { x, w, b, rows, inputs, outputs } => {
                ops::linear_backward(self.data(*x), self.data(*w), g, (*rows, *inputs, *outputs), (*x, *w, *b), sink);
            }
            Op::Conv2d { x, w, b, dims } => {
                let need_x = sink.needs(*x);
                let need_w = sink.needs(*w);
                let grads = conv::conv2d_backward(self.data(*x), self.data(*w), g, dims, need_x, need_w);
                if let Some(dx) = grads.dx {
                    sink.add(*x, &dx);
                }
                if let Some(dw) = grads.dw {
                    sink.add(*w, &dw);
                }
                if let Some(b) = b {
                    sink.add(*b, &grads.db);
                }
            }
            Op::BatchNorm { x, gamma, beta, xhat, inv_std, train } => {
                let shape = &self.nodes[x.0].shape;
                let grads = norm::batch_norm_backward(g, xhat, inv_std, self.data(*gamma), shape, *train);
                sink.add(*x, &grads.dx);
                sink.add(*gamma, &grads.dgamma);
                sink.add(*beta, &grads.dbeta);
            }
            Op::MaxPool { x, argmax } | Op::GlobalMaxPool { x, argmax } => {
                sink.with(*x, |gx| pool::scatter_argmax(gx, argmax, g));
            }
            Op::GlobalAvgPool { x, spatial } => {
                let scale = T::one() / T::lit(*spatial as f64);
                sink.with(*x, |gx| {
                    for (chunk, &v) in gx.chunks_mut(*spatial).zip(g) {
                        chunk.iter_mut().for_each(|d| *d += v * scale);
                    }
                });
            }
            Op::Dropout { x, mask } => {
                sink.with(*x, |gx| {
                    for ((d, &v), &m) in gx.iter_mut().zip(g).zip(mask) {
                        *d += v * m;
                    }
                });
            }
            Op::Sigmoid(x) => {
                let y = &node.data;
                sink.with(*x, |gx| {
                    for ((d, &v), &s) in gx.iter_mut().zip(g).zip(y) {
                        *d += v * s * (T::one() - s);
                    }
                });
            }
            Op::ChannelScale { x, s, spatial } => {
                let (xv, sv) = (self.data(*x), self.data(*s));
                sink.with(*x, |gx| {
                    for ((gc, dc), &scale) in gx.chunks_mut(*spatial).zip(g.chunks(*spatial)).zip(sv) {
                        gc.iter_mut().zip(dc).for_each(|(d, &v)| *d += v * scale);
                    }
                });
                sink.with(*s, |gs| {
                    for ((d, dc), xc) in gs.iter_mut().zip(g.chunks(*spatial)).zip(xv.chunks(*spatial)) {
                        *d += dc.iter().zip(xc).fold(T::zero(), |acc, (&a, &b)| acc + a * b);
                    }
                });
            }
            Op::CrossEntropy { logits, labels, probs } => {
                let classes = probs.len() / labels.len();
                let scale = g[0] / T::lit(labels.len() as f64);
                sink.with(*logits, |gl| {
                    for (r, &label) in labels.iter().enumerate() {
                        for c in 0..classes {
                            let onehot = if c == label { T::one() } else { T::zero() };
                            gl[r * classes + c] += (probs[r * classes + c] - onehot) * scale;
                        }
                    }
                });
            }
            Op::Gather { x, indices } => {
                sink.with(*x, |gx| {
                    for (&i, &v) in indices.iter().zip(g) {
                        gx[i] += v;
                    }
                });
            }
        }
    }
}

/// Write access to the gradient slots of nodes recorded before the one
/// currently being differentiated.
pub(crate) struct Sink<'a, T> {
    grads: &'a mut [Option<Vec<T>>],
    nodes: &'a [Node<T>],
}

impl<T: Scalar> Sink<'_, T> {
    pub(crate) fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub(crate) fn with(&mut self, v: Var, f: impl FnOnce(&mut [T])) {
        if !self.needs(v) {
            return;
        }
        let n = self.nodes[v.0].data.len();
        let slot = self.grads[v.0].get_or_insert_with(|| vec![T::zero(); n]);
        f(slot);
    }

    pub(crate) fn add(&mut self, v: Var, g: &[T]) {
        self.with(v, |dst| dst.iter_mut().zip(g).for_each(|(d, &s)| *d += s));
    }
}

/// Gradients of one backward pass, indexed by [`Var`].
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Adds the gradient of `v` (if any reached it) into `t.grad`.
    pub fn accumulate_into(&self, v: Var, t: &mut Tensor<T>) -> Result<()> {
        match self.get(v) {
            Some(g) => t.accumulate_grad(g),
            None => Ok(()),
        }
    }
}

pub(crate) fn expect_rank<T: Scalar>(tape: &Tape<T>, v: Var, rank: usize, what: &str) -> Result<()> {
    let shape = tape.shape(v);
    if shape.len() != rank {
        return Err(Error::shape(format!("{what} expects rank {rank}, got shape {shape:?}")));
    }
    Ok(())
}

pub(crate) fn same_shape<T: Scalar>(tape: &Tape<T>, a: Var, b: Var) -> Result<()> {
    if tape.shape(a) != tape.shape(b) {
        return Err(Error::shape(format!("shapes {:?} and {:?} differ", tape.shape(a), tape.shape(b))));
    }
    Ok(())
}
