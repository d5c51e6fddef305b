//! 2-D convolution lowered to a single matrix product per batch.
//!
//! The input batch is unfolded into a `[in_ch·kh·kw, batch·oh·ow]` column
//! matrix; the weight `[out_ch, in_ch·kh·kw]` times the columns gives every
//! output pixel of every image at once. Backward recomputes the columns
//! rather than keeping them on the tape.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::autograd::{expect_rank, Op, Tape, Var};
use crate::gemm::{gemm, MatRef};
use crate::{Error, Result, Scalar};

/// Stride and zero padding of a convolution; the kernel size comes from
/// the weight shape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeometry {
    /// Stride 1, padding 1: keeps the spatial size of a 3×3 convolution.
    pub const SAME_3X3: ConvGeometry = ConvGeometry { stride: 1, padding: 1 };
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvDims {
    pub batch: usize,
    pub in_ch: usize,
    pub h: usize,
    pub w: usize,
    pub out_ch: usize,
    pub kh: usize,
    pub kw: usize,
    pub oh: usize,
    pub ow: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvDims {
    pub(crate) fn new(x: &[usize], w: &[usize], geom: ConvGeometry) -> Result<Self> {
        if x.len() != 4 || w.len() != 4 {
            return Err(Error::shape(format!("conv2d expects rank-4 input and weight, got {x:?} and {w:?}")));
        }
        if x[1] != w[1] {
            return Err(Error::shape(format!("conv2d input has {} channels, weight expects {}", x[1], w[1])));
        }
        if geom.stride == 0 {
            return Err(Error::config("conv2d stride must be at least 1"));
        }
        let (h, wd, kh, kw) = (x[2], x[3], w[2], w[3]);
        if h + 2 * geom.padding < kh || wd + 2 * geom.padding < kw {
            return Err(Error::shape(format!("kernel {kh}x{kw} larger than padded input {h}x{wd}")));
        }
        Ok(ConvDims {
            batch: x[0],
            in_ch: x[1],
            h,
            w: wd,
            out_ch: w[0],
            kh,
            kw,
            oh: (h + 2 * geom.padding - kh) / geom.stride + 1,
            ow: (wd + 2 * geom.padding - kw) / geom.stride + 1,
            stride: geom.stride,
            padding: geom.padding,
        })
    }

    fn patch(&self) -> usize {
        self.in_ch * self.kh * self.kw
    }

    fn out_spatial(&self) -> usize {
        self.oh * self.ow
    }

    fn columns(&self) -> usize {
        self.batch * self.out_spatial()
    }

    pub(crate) fn out_shape(&self) -> Vec<usize> {
        vec![self.batch, self.out_ch, self.oh, self.ow]
    }

    /// Input coordinate hit by output index `o` and kernel tap `k`.
    #[inline]
    fn src(&self, o: usize, k: usize, limit: usize) -> Option<usize> {
        let pos = o * self.stride + k;
        (pos >= self.padding && pos - self.padding < limit).then(|| pos - self.padding)
    }
}

fn im2col<T: Scalar>(x: &[T], d: &ConvDims) -> Vec<T> {
    let cols = d.columns();
    let mut out = vec![T::zero(); d.patch() * cols];
    let plane = d.h * d.w;
    for c in 0..d.in_ch {
        for ki in 0..d.kh {
            for kj in 0..d.kw {
                let row = (c * d.kh + ki) * d.kw + kj;
                let dst_row = &mut out[row * cols..(row + 1) * cols];
                for b in 0..d.batch {
                    let src_plane = &x[(b * d.in_ch + c) * plane..][..plane];
                    let dst = &mut dst_row[b * d.out_spatial()..][..d.out_spatial()];
                    for oi in 0..d.oh {
                        let Some(ii) = d.src(oi, ki, d.h) else { continue };
                        let src_row = &src_plane[ii * d.w..][..d.w];
                        let dst_px = &mut dst[oi * d.ow..][..d.ow];
                        if d.stride == 1 {
                            // contiguous run of valid columns
                            let lo = d.padding.saturating_sub(kj);
                            let hi = (d.w + d.padding).saturating_sub(kj).min(d.ow);
                            if lo < hi {
                                let start = lo + kj - d.padding;
                                dst_px[lo..hi].copy_from_slice(&src_row[start..start + (hi - lo)]);
                            }
                        } else {
                            for (oj, v) in dst_px.iter_mut().enumerate() {
                                if let Some(jj) = d.src(oj, kj, d.w) {
                                    *v = src_row[jj];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

fn col2im_add<T: Scalar>(cols_data: &[T], d: &ConvDims, dx: &mut [T]) {
    let cols = d.columns();
    let plane = d.h * d.w;
    for c in 0..d.in_ch {
        for ki in 0..d.kh {
            for kj in 0..d.kw {
                let row = (c * d.kh + ki) * d.kw + kj;
                let src_row = &cols_data[row * cols..(row + 1) * cols];
                for b in 0..d.batch {
                    let dst_plane = &mut dx[(b * d.in_ch + c) * plane..][..plane];
                    let src = &src_row[b * d.out_spatial()..][..d.out_spatial()];
                    for oi in 0..d.oh {
                        let Some(ii) = d.src(oi, ki, d.h) else { continue };
                        for oj in 0..d.ow {
                            if let Some(jj) = d.src(oj, kj, d.w) {
                                dst_plane[ii * d.w + jj] += src[oi * d.ow + oj];
                            }
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn conv2d_forward<T: Scalar>(x: &[T], w: &[T], bias: Option<&[T]>, d: &ConvDims) -> Vec<T> {
    let cols = im2col(x, d);
    let n = d.columns();
    let mut prod = vec![T::zero(); d.out_ch * n];
    gemm(T::one(), MatRef::new(w, d.out_ch, d.patch()), MatRef::new(&cols, d.patch(), n), T::zero(), &mut prod);
    let spatial = d.out_spatial();
    let mut out = vec![T::zero(); d.batch * d.out_ch * spatial];
    for o in 0..d.out_ch {
        let bias_o = bias.map_or(T::zero(), |b| b[o]);
        for b in 0..d.batch {
            let src = &prod[o * n + b * spatial..][..spatial];
            let dst = &mut out[(b * d.out_ch + o) * spatial..][..spatial];
            dst.iter_mut().zip(src).for_each(|(y, &v)| *y = v + bias_o);
        }
    }
    out
}

pub(crate) struct ConvGrads<T> {
    pub dx: Option<Vec<T>>,
    pub dw: Option<Vec<T>>,
    pub db: Vec<T>,
}

pub(crate) fn conv2d_backward<T: Scalar>(x: &[T], w: &[T], dy: &[T], d: &ConvDims, need_dx: bool, need_dw: bool) -> ConvGrads<T> {
    let n = d.columns();
    let spatial = d.out_spatial();
    // dy as [out_ch, batch·oh·ow]
    let mut g = vec![T::zero(); d.out_ch * n];
    let mut db = vec![T::zero(); d.out_ch];
    for o in 0..d.out_ch {
        for b in 0..d.batch {
            let src = &dy[(b * d.out_ch + o) * spatial..][..spatial];
            g[o * n + b * spatial..][..spatial].copy_from_slice(src);
            db[o] += src.iter().fold(T::zero(), |acc, &v| acc + v);
        }
    }
    let gm = MatRef::new(&g, d.out_ch, n);
    let dw = need_dw.then(|| {
        let cols = im2col(x, d);
        let mut dw = vec![T::zero(); d.out_ch * d.patch()];
        gemm(T::one(), gm, MatRef::new(&cols, d.patch(), n).t(), T::zero(), &mut dw);
        dw
    });
    let dx = need_dx.then(|| {
        let mut dcols = vec![T::zero(); d.patch() * n];
        gemm(T::one(), MatRef::new(w, d.out_ch, d.patch()).t(), gm, T::zero(), &mut dcols);
        let mut dx = vec![T::zero(); x.len()];
        col2im_add(&dcols, d, &mut dx);
        dx
    });
    ConvGrads { dx, dw, db }
}

impl<T: Scalar> Tape<T> {
    /// Cross-correlation of `x: [B, Cin, H, W]` with `w: [Cout, Cin, kh, kw]`
    /// plus an optional per-channel bias `[Cout]`, zero padded.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, geom: ConvGeometry) -> Result<Var> {
        expect_rank(self, x, 4, "conv2d input")?;
        let dims = ConvDims::new(self.shape(x), self.shape(w), geom)?;
        if let Some(b) = b {
            if self.shape(b) != [dims.out_ch] {
                return Err(Error::shape(format!("conv2d bias shape {:?}, expected [{}]", self.shape(b), dims.out_ch)));
            }
        }
        let out = conv2d_forward(self.data(x), self.data(w), b.map(|b| self.data(b)), &dims);
        let mut inputs = vec![x, w];
        inputs.extend(b);
        Ok(self.push(dims.out_shape(), out, Op::Conv2d { x, w, b, dims }, &inputs))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Tensor;

    #[test]
    fn ones_kernel_counts_overlaps() {
        let mut tape = Tape::<f32>::new();
        let x = tape.leaf(&Tensor::full(&[1, 1, 3, 3], 1.0));
        let w = tape.leaf(&Tensor::full(&[1, 1, 3, 3], 1.0));
        let b = tape.leaf(&Tensor::zeros(&[1]));
        let y = tape.conv2d(x, w, Some(b), ConvGeometry::SAME_3X3).unwrap();
        assert_eq!(tape.shape(y), &[1, 1, 3, 3]);
        assert_eq!(tape.data(y), &[4.0, 6.0, 4.0, 6.0, 9.0, 6.0, 4.0, 6.0, 4.0]);
    }

    #[test]
    fn delta_kernel_is_identity() {
        let vals: Vec<f32> = (0..2 * 5 * 4).map(|i| (i as f32 * 0.37).sin()).collect();
        let mut tape = Tape::<f32>::new();
        let x = tape.leaf(&Tensor::from_vec(&[2, 1, 5, 4], vals.clone()).unwrap());
        let mut k = Tensor::zeros(&[1, 1, 3, 3]);
        k.data_mut()[4] = 1.0;
        let w = tape.leaf(&k);
        let y = tape.conv2d(x, w, None, ConvGeometry::SAME_3X3).unwrap();
        assert_eq!(tape.data(y), &vals[..]);
    }

    #[test]
    fn channel_mismatch() {
        let mut tape = Tape::<f32>::new();
        let x = tape.leaf(&Tensor::zeros(&[1, 2, 4, 4]));
        let w = tape.leaf(&Tensor::zeros(&[3, 1, 3, 3]));
        assert!(matches!(tape.conv2d(x, w, None, ConvGeometry::SAME_3X3), Err(Error::Shape(_))));
    }

    #[test]
    fn strided_output_size() {
        let mut tape = Tape::<f32>::new();
        let x = tape.leaf(&Tensor::full(&[1, 3, 64, 64], 1.0));
        let w = tape.leaf(&Tensor::full(&[8, 3, 7, 7], 1.0));
        let y = tape.conv2d(x, w, None, ConvGeometry { stride: 2, padding: 3 }).unwrap();
        assert_eq!(tape.shape(y), &[1, 8, 32, 32]);
        // interior pixel sees the full 3·7·7 patch
        assert_eq!(tape.data(y)[16 * 32 + 16], 147.0);
    }
}
