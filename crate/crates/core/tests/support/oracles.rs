//! Straightforward nested-loop versions of the kernels.

use rand::Rng;

/// `x: [b, c, h, w]`, `w: [o, c, k, k]`, zero padding.
#[allow(clippy::too_many_arguments)]
pub fn conv2d(
    x: &[f32],
    [b, c, h, wd]: [usize; 4],
    w: &[f32],
    [o, _, kh, kw]: [usize; 4],
    bias: Option<&[f32]>,
    stride: usize,
    pad: usize,
) -> (Vec<f32>, [usize; 4]) {
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (wd + 2 * pad - kw) / stride + 1;
    let mut out = vec![0f32; b * o * oh * ow];
    for n in 0..b {
        for oc in 0..o {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = bias.map_or(0.0, |bb| bb[oc]);
                    for ic in 0..c {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                let xv = x[((n * c + ic) * h + iy as usize) * wd + ix as usize];
                                acc += xv * w[((oc * c + ic) * kh + ky) * kw + kx];
                            }
                        }
                    }
                    out[((n * o + oc) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    (out, [b, o, oh, ow])
}

/// Max over windows; padded positions never win.
pub fn max_pool(x: &[f32], [b, c, h, w]: [usize; 4], k: usize, stride: usize, pad: usize) -> (Vec<f32>, [usize; 4]) {
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (w + 2 * pad - k) / stride + 1;
    let mut out = Vec::new();
    for plane in 0..b * c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = f32::NEG_INFINITY;
                for ky in 0..k {
                    for kx in 0..k {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                            best = best.max(x[(plane * h + iy as usize) * w + ix as usize]);
                        }
                    }
                }
                out.push(best);
            }
        }
    }
    (out, [b, c, oh, ow])
}

pub fn global_avg(x: &[f32], planes: usize, spatial: usize) -> Vec<f32> {
    (0..planes).map(|p| x[p * spatial..(p + 1) * spatial].iter().sum::<f32>() / spatial as f32).collect()
}

pub fn global_max(x: &[f32], planes: usize, spatial: usize) -> Vec<f32> {
    (0..planes).map(|p| x[p * spatial..(p + 1) * spatial].iter().fold(f32::NEG_INFINITY, |m, &v| m.max(v))).collect()
}

pub fn window_sum(img: &[u8], width: usize, x: usize, y: usize, w: usize, h: usize) -> u64 {
    let mut s = 0;
    for yy in y..y + h {
        for xx in x..x + w {
            s += img[yy * width + xx] as u64;
        }
    }
    s
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub fn uniform_vec<R: Rng>(rng: &mut R, n: usize, lo: f32, hi: f32) -> Vec<f32> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}
