//! Elementwise, reduction and matrix ops.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{expect_rank, same_shape, Op, Sink, Tape, Var};
use crate::gemm::{gemm, MatRef};
use crate::tensor::check_shape;
use crate::{Error, Result, Scalar};

impl<T: Scalar> Tape<T> {
    fn zip_with(&mut self, a: Var, b: Var, f: impl Fn(T, T) -> T, op: Op<T>) -> Result<Var> {
        same_shape(self, a, b)?;
        let data = self.data(a).iter().zip(self.data(b)).map(|(&x, &y)| f(x, y)).collect();
        Ok(self.push(self.shape(a).to_vec(), data, op, &[a, b]))
    }

    fn map(&mut self, a: Var, f: impl Fn(T) -> T, op: Op<T>) -> Var {
        let data = self.data(a).iter().map(|&x| f(x)).collect();
        self.push(self.shape(a).to_vec(), data, op, &[a])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn add_scalar(&mut self, a: Var, s: T) -> Var {
        self.map(a, |x| x + s, Op::AddScalar(a))
    }

    pub fn mul_scalar(&mut self, a: Var, s: T) -> Var {
        self.map(a, |x| x * s, Op::MulScalar(a, s))
    }

    /// `max(a, s)`; the gradient passes only where `a > s`.
    pub fn max_scalar(&mut self, a: Var, s: T) -> Var {
        self.map(a, |x| if x > s { x } else { s }, Op::MaxScalar(a, s))
    }

    /// Sum of all elements as a shape-`[1]` value.
    pub fn sum(&mut self, a: Var) -> Var {
        let total = self.data(a).iter().fold(T::zero(), |acc, &x| acc + x);
        self.push(vec![1], vec![total], Op::Sum(a), &[a])
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        check_shape(shape, self.data(a).len())?;
        let data = self.data(a).to_vec();
        Ok(self.push(shape.to_vec(), data, Op::Reshape(a), &[a]))
    }

    /// Flattens `[B, ...]` to `[B, rest]`.
    pub fn flatten(&mut self, a: Var) -> Result<Var> {
        let shape = self.shape(a);
        let rows = shape[0];
        let rest = shape[1..].iter().product();
        self.reshape(a, &[rows, rest])
    }

    /// Picks elements by flat index into a rank-1 value.
    pub fn gather(&mut self, x: Var, indices: &[usize]) -> Result<Var> {
        let len = self.data(x).len();
        if indices.is_empty() {
            return Err(Error::shape("gather needs at least one index"));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= len) {
            return Err(Error::shape(format!("gather index {bad} out of range for {len} elements")));
        }
        let data = indices.iter().map(|&i| self.data(x)[i]).collect();
        Ok(self.push(vec![indices.len()], data, Op::Gather { x, indices: indices.to_vec() }, &[x]))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        expect_rank(self, a, 2, "matmul")?;
        expect_rank(self, b, 2, "matmul")?;
        let (m, k) = (self.shape(a)[0], self.shape(a)[1]);
        let (k2, n) = (self.shape(b)[0], self.shape(b)[1]);
        if k != k2 {
            return Err(Error::shape(format!("matmul inner dimensions {k} and {k2} differ")));
        }
        let mut out = vec![T::zero(); m * n];
        gemm(T::one(), MatRef::new(self.data(a), m, k), MatRef::new(self.data(b), k, n), T::zero(), &mut out);
        Ok(self.push(vec![m, n], out, Op::MatMul { a, b, m, k, n }, &[a, b]))
    }

    /// `x · wᵀ + b` for `x: [B, in]`, `w: [out, in]`, `b: [out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        expect_rank(self, x, 2, "linear input")?;
        expect_rank(self, w, 2, "linear weight")?;
        let (rows, inputs) = (self.shape(x)[0], self.shape(x)[1]);
        let (outputs, w_in) = (self.shape(w)[0], self.shape(w)[1]);
        if inputs != w_in {
            return Err(Error::shape(format!("linear expects {w_in} features, got {inputs}")));
        }
        if let Some(b) = b {
            if self.shape(b) != [outputs] {
                return Err(Error::shape(format!("linear bias shape {:?}, expected [{outputs}]", self.shape(b))));
            }
        }
        let mut out = vec![T::zero(); rows * outputs];
        if let Some(b) = b {
            for row in out.chunks_mut(outputs) {
                row.copy_from_slice(self.data(b));
            }
        }
        gemm(T::one(), MatRef::new(self.data(x), rows, inputs), MatRef::new(self.data(w), outputs, inputs).t(), T::one(), &mut out);
        let mut inputs_v: Vec<Var> = vec![x, w];
        inputs_v.extend(b);
        Ok(self.push(vec![rows, outputs], out, Op::Linear { x, w, b, rows, inputs, outputs }, &inputs_v))
    }
}

pub(super) fn matmul_backward<T: Scalar>(
    a: &[T],
    b: &[T],
    g: &[T],
    (m, k, n): (usize, usize, usize),
    va: Var,
    vb: Var,
    sink: &mut Sink<'_, T>,
) {
    let gm = MatRef::new(g, m, n);
    sink.with(va, |ga| gemm(T::one(), gm, MatRef::new(b, k, n).t(), T::one(), ga));
    sink.with(vb, |gb| gemm(T::one(), MatRef::new(a, m, k).t(), gm, T::one(), gb));
}

pub(super) fn linear_backward<T: Scalar>(
    x: &[T],
    w: &[T],
    g: &[T],
    (rows, inputs, outputs): (usize, usize, usize),
    (vx, vw, vb): (Var, Var, Option<Var>),
    sink: &mut Sink<'_, T>,
) {
    let gm = MatRef::new(g, rows, outputs);
    sink.with(vx, |gx| gemm(T::one(), gm, MatRef::new(w, outputs, inputs), T::one(), gx));
    sink.with(vw, |gw| gemm(T::one(), gm.t(), MatRef::new(x, rows, inputs), T::one(), gw));
    if let Some(vb) = vb {
        sink.with(vb, |gb| {
            for row in g.chunks(outputs) {
                gb.iter_mut().zip(row).for_each(|(d, &v)| *d += v);
            }
        });
    }
}
