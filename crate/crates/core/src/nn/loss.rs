use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::autograd::{expect_rank, Op, Tape, Var};
use crate::{Error, Result, Scalar, Tensor};

/// Numerically stable softmax of one row, written into `out`.
pub fn softmax_row<T: Scalar>(z: &[T], out: &mut [T]) -> Result<()> {
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericInput);
    }
    let max = z.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let mut total = T::zero();
    for (o, &v) in out.iter_mut().zip(z) {
        *o = (v - max).exp();
        total += *o;
    }
    out.iter_mut().for_each(|o| *o /= total);
    Ok(())
}

/// Row-wise softmax of `[B, C]` logits (or a single `[C]` row).
pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    let classes = *logits.shape().last().expect("tensors have rank >= 1");
    let mut out = vec![T::zero(); logits.numel()];
    for (row, dst) in logits.data().chunks(classes).zip(out.chunks_mut(classes)) {
        softmax_row(row, dst)?;
    }
    Tensor::from_vec(logits.shape(), out)
}

/// Index of the largest value; the first one on ties.
pub fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

impl<T: Scalar> Tape<T> {
    /// Mean over the batch of `-log softmax(z)[label]`, computed as
    /// log-sum-exp minus the true logit.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        expect_rank(self, logits, 2, "cross entropy")?;
        let (rows, classes) = (self.shape(logits)[0], self.shape(logits)[1]);
        if labels.len() != rows {
            return Err(Error::shape(format!("{} labels for a batch of {rows}", labels.len())));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::Label(bad));
        }
        let z = self.data(logits);
        let mut probs = vec![T::zero(); z.len()];
        let mut total = T::zero();
        for ((row, p), &label) in z.chunks(classes).zip(probs.chunks_mut(classes)).zip(labels) {
            let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
            let mut sum = T::zero();
            for (pi, &v) in p.iter_mut().zip(row) {
                *pi = (v - max).exp();
                sum += *pi;
            }
            p.iter_mut().for_each(|pi| *pi /= sum);
            total += max + sum.ln() - row[label];
        }
        let loss = total / T::lit(rows as f64);
        let op = Op::CrossEntropy { logits, labels: labels.to_vec(), probs };
        Ok(self.push(vec![1], vec![loss], op, &[logits]))
    }
}

/// Per-row probabilities as plain vectors.
pub fn probabilities<T: Scalar>(logits: &Tensor<T>) -> Result<Vec<Vec<T>>> {
    let classes = *logits.shape().last().expect("tensors have rank >= 1");
    Ok(softmax(logits)?.data().chunks(classes).map(<[T]>::to_vec).collect())
}
