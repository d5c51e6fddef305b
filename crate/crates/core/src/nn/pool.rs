use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::autograd::{expect_rank, Op, Tape, Var};
use crate::{Error, Result, Scalar};

/// Window of a max pooling layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PoolGeometry {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl PoolGeometry {
    /// Non-overlapping 2×2 windows; halves height and width.
    pub const HALVE: PoolGeometry = PoolGeometry { kernel: 2, stride: 2, padding: 0 };
}

pub(crate) fn scatter_argmax<T: Scalar>(gx: &mut [T], argmax: &[usize], g: &[T]) {
    for (&i, &v) in argmax.iter().zip(g) {
        gx[i] += v;
    }
}

impl<T: Scalar> Tape<T> {
    /// Max over each window. Ties go to the first element in row-major
    /// order, which also receives the whole gradient.
    pub fn max_pool2d(&mut self, x: Var, geom: PoolGeometry) -> Result<Var> {
        expect_rank(self, x, 4, "max pool")?;
        let [b, c, h, w] = [0, 1, 2, 3].map(|i| self.shape(x)[i]);
        if geom == PoolGeometry::HALVE && (h % 2 != 0 || w % 2 != 0) {
            return Err(Error::shape(format!("2x2 max pool needs even height and width, got {h}x{w}")));
        }
        if geom.kernel == 0 || geom.stride == 0 || h + 2 * geom.padding < geom.kernel || w + 2 * geom.padding < geom.kernel {
            return Err(Error::shape(format!("pool window {geom:?} does not fit {h}x{w}")));
        }
        let oh = (h + 2 * geom.padding - geom.kernel) / geom.stride + 1;
        let ow = (w + 2 * geom.padding - geom.kernel) / geom.stride + 1;
        let data = self.data(x);
        let mut out = Vec::with_capacity(b * c * oh * ow);
        let mut argmax = Vec::with_capacity(b * c * oh * ow);
        for plane in 0..b * c {
            let base = plane * h * w;
            for oi in 0..oh {
                for oj in 0..ow {
                    let mut best: Option<(T, usize)> = None;
                    for ki in 0..geom.kernel {
                        let ii = (oi * geom.stride + ki).wrapping_sub(geom.padding);
                        if ii >= h {
                            continue;
                        }
                        for kj in 0..geom.kernel {
                            let jj = (oj * geom.stride + kj).wrapping_sub(geom.padding);
                            if jj >= w {
                                continue;
                            }
                            let idx = base + ii * w + jj;
                            if best.is_none_or(|(v, _)| data[idx] > v) {
                                best = Some((data[idx], idx));
                            }
                        }
                    }
                    let (v, idx) = best.expect("window overlaps the input");
                    out.push(v);
                    argmax.push(idx);
                }
            }
        }
        Ok(self.push(vec![b, c, oh, ow], out, Op::MaxPool { x, argmax }, &[x]))
    }

    /// Mean over height and width: `[B, C, H, W] -> [B, C, 1, 1]`.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        expect_rank(self, x, 4, "average pool")?;
        let [b, c, h, w] = [0, 1, 2, 3].map(|i| self.shape(x)[i]);
        let spatial = h * w;
        let scale = T::one() / T::lit(spatial as f64);
        let out = self.data(x).chunks(spatial).map(|p| p.iter().fold(T::zero(), |a, &v| a + v) * scale).collect();
        Ok(self.push(vec![b, c, 1, 1], out, Op::GlobalAvgPool { x, spatial }, &[x]))
    }

    /// Max over height and width: `[B, C, H, W] -> [B, C, 1, 1]`.
    pub fn global_max_pool(&mut self, x: Var) -> Result<Var> {
        expect_rank(self, x, 4, "max pool")?;
        let [b, c, h, w] = [0, 1, 2, 3].map(|i| self.shape(x)[i]);
        let spatial = h * w;
        let mut out = Vec::with_capacity(b * c);
        let mut argmax = Vec::with_capacity(b * c);
        for (p, plane) in self.data(x).chunks(spatial).enumerate() {
            let mut best = 0;
            for (i, &v) in plane.iter().enumerate() {
                if v > plane[best] {
                    best = i;
                }
            }
            out.push(plane[best]);
            argmax.push(p * spatial + best);
        }
        Ok(self.push(vec![b, c, 1, 1], out, Op::GlobalMaxPool { x, argmax }, &[x]))
    }
}
