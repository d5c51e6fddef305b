use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::autograd::{expect_rank, Op, Tape, Var};
use crate::{Error, Result, Scalar};

/// Per-channel statistics of one training batch.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    /// Variance with Bessel's correction, used for the running estimate.
    pub var_unbiased: Vec<T>,
}

struct Layout {
    batch: usize,
    channels: usize,
    spatial: usize,
}

impl Layout {
    fn of(shape: &[usize]) -> Self {
        Layout { batch: shape[0], channels: shape[1], spatial: shape[2] * shape[3] }
    }

    /// Calls `f` with every plane that belongs to channel `c`.
    fn planes<'a, T>(&self, data: &'a [T], c: usize) -> impl Iterator<Item = &'a [T]> + 'a {
        let (ch, sp) = (self.channels, self.spatial);
        (0..self.batch).map(move |b| &data[(b * ch + c) * sp..][..sp])
    }

    fn count(&self) -> usize {
        self.batch * self.spatial
    }
}

fn check_params<T: Scalar>(tape: &Tape<T>, x: Var, gamma: Var, beta: Var) -> Result<()> {
    expect_rank(tape, x, 4, "batch norm input")?;
    let c = tape.shape(x)[1];
    if tape.shape(gamma) != [c] || tape.shape(beta) != [c] {
        return Err(Error::shape(format!(
            "batch norm over {c} channels got gamma {:?} and beta {:?}",
            tape.shape(gamma),
            tape.shape(beta)
        )));
    }
    Ok(())
}

fn normalize<T: Scalar>(x: &[T], layout: &Layout, gamma: &[T], beta: &[T], mean: &[T], inv_std: &[T]) -> (Vec<T>, Vec<T>) {
    let mut xhat = vec![T::zero(); x.len()];
    let mut y = vec![T::zero(); x.len()];
    let (ch, sp) = (layout.channels, layout.spatial);
    for b in 0..layout.batch {
        for c in 0..ch {
            let off = (b * ch + c) * sp;
            for i in off..off + sp {
                let h = (x[i] - mean[c]) * inv_std[c];
                xhat[i] = h;
                y[i] = gamma[c] * h + beta[c];
            }
        }
    }
    (xhat, y)
}

impl<T: Scalar> Tape<T> {
    /// Normalizes each channel of `x: [B, C, H, W]` by its batch mean and
    /// (biased) variance, then scales by `gamma` and shifts by `beta`.
    pub fn batch_norm_train(&mut self, x: Var, gamma: Var, beta: Var, eps: T) -> Result<(Var, BatchStats<T>)> {
        check_params(self, x, gamma, beta)?;
        let layout = Layout::of(self.shape(x));
        let n = layout.count();
        if n < 2 {
            return Err(Error::DegenerateBatch);
        }
        let nf = T::lit(n as f64);
        let data = self.data(x);
        let mut mean = vec![T::zero(); layout.channels];
        let mut var = vec![T::zero(); layout.channels];
        for c in 0..layout.channels {
            let m = layout.planes(data, c).flatten().fold(T::zero(), |a, &v| a + v) / nf;
            let ss = layout.planes(data, c).flatten().fold(T::zero(), |a, &v| a + (v - m) * (v - m));
            mean[c] = m;
            var[c] = ss / nf;
        }
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let (xhat, y) = normalize(data, &layout, self.data(gamma), self.data(beta), &mean, &inv_std);
        let bessel = nf / T::lit((n - 1) as f64);
        let stats = BatchStats { mean, var_unbiased: var.iter().map(|&v| v * bessel).collect() };
        let shape = self.shape(x).to_vec();
        let op = Op::BatchNorm { x, gamma, beta, xhat, inv_std, train: true };
        Ok((self.push(shape, y, op, &[x, gamma, beta]), stats))
    }

    /// Normalizes with fixed (running) statistics.
    pub fn batch_norm_eval(&mut self, x: Var, gamma: Var, beta: Var, mean: &[T], var: &[T], eps: T) -> Result<Var> {
        check_params(self, x, gamma, beta)?;
        let layout = Layout::of(self.shape(x));
        if mean.len() != layout.channels || var.len() != layout.channels {
            return Err(Error::shape("running statistics do not match channel count"));
        }
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let (xhat, y) = normalize(self.data(x), &layout, self.data(gamma), self.data(beta), mean, &inv_std);
        let shape = self.shape(x).to_vec();
        let op = Op::BatchNorm { x, gamma, beta, xhat, inv_std, train: false };
        Ok(self.push(shape, y, op, &[x, gamma, beta]))
    }
}

pub(crate) struct NormGrads<T> {
    pub dx: Vec<T>,
    pub dgamma: Vec<T>,
    pub dbeta: Vec<T>,
}

pub(crate) fn batch_norm_backward<T: Scalar>(
    g: &[T],
    xhat: &[T],
    inv_std: &[T],
    gamma: &[T],
    shape: &[usize],
    train: bool,
) -> NormGrads<T> {
    let layout = Layout::of(shape);
    let (ch, sp) = (layout.channels, layout.spatial);
    let mut dgamma = vec![T::zero(); ch];
    let mut dbeta = vec![T::zero(); ch];
    for c in 0..ch {
        for (gp, hp) in layout.planes(g, c).zip(layout.planes(xhat, c)) {
            for (&gv, &hv) in gp.iter().zip(hp) {
                dgamma[c] += gv * hv;
                dbeta[c] += gv;
            }
        }
    }
    let mut dx = vec![T::zero(); g.len()];
    let nf = T::lit(layout.count() as f64);
    for b in 0..layout.batch {
        for c in 0..ch {
            let off = (b * ch + c) * sp;
            let scale = gamma[c] * inv_std[c];
            for i in off..off + sp {
                dx[i] = if train {
                    // d/dx of gamma·(x − μ)/σ with μ, σ taken from the same batch
                    scale * (g[i] - dbeta[c] / nf - xhat[i] * dgamma[c] / nf)
                } else {
                    scale * g[i]
                };
            }
        }
    }
    NormGrads { dx, dgamma, dbeta }
}
