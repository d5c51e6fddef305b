//! Grad-CAM properties and an independent oracle on a two-block network.

use std::collections::HashMap;

use gmf_core::data::ClassLabel;
use gmf_core::gradcam::{cam_from, grad_cam, CamResult};
use gmf_core::model::{Model, ModelSpec};
use gmf_core::nn::{Module, TensorKind};
use gmf_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TOY_SIZE: usize = 8;
const BN_EPS: f64 = 1e-5;

/// conv-bn-relu-pool twice, one linear layer, 8×8 input; batch-norm
/// statistics and affine terms randomized.
pub fn toy_model(seed: u64) -> Model<f32> {
    let mut spec = ModelSpec::gimefive(2);
    spec.input_shape = [3, TOY_SIZE, TOY_SIZE];
    spec.fc_layers = 1;
    let mut model = Model::<f32>::build(&spec, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xbeef);
    model.visit_mut(&mut |name, _, t| {
        let vals: Vec<f32> = match name.rsplit('.').next().unwrap() {
            "running_mean" => (0..t.numel()).map(|_| rng.random_range(-0.2..0.2)).collect(),
            "running_var" => (0..t.numel()).map(|_| rng.random_range(0.5..1.5)).collect(),
            "weight" if name.starts_with("bn") => (0..t.numel()).map(|_| rng.random_range(0.5..1.5)).collect(),
            "bias" if name.starts_with("bn") => (0..t.numel()).map(|_| rng.random_range(-0.3..0.3)).collect(),
            _ => return,
        };
        t.data_mut().copy_from_slice(&vals);
    });
    model
}

pub fn toy_input(seed: u64) -> Tensor<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..3 * TOY_SIZE * TOY_SIZE).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::from_vec(&[1, 3, TOY_SIZE, TOY_SIZE], data).unwrap()
}

fn params(model: &Model<f32>) -> HashMap<String, Vec<f64>> {
    let mut out = HashMap::new();
    model.visit(&mut |name, _, t| {
        out.insert(name.to_string(), t.data().iter().map(|&v| v as f64).collect());
    });
    out
}

fn conv_same(x: &[f64], c: usize, s: usize, w: &[f64], b: &[f64], o: usize) -> Vec<f64> {
    let mut out = vec![0.0; o * s * s];
    for oc in 0..o {
        for y in 0..s {
            for xx in 0..s {
                let mut acc = b[oc];
                for ic in 0..c {
                    for ky in 0..3 {
                        for kx in 0..3 {
                            let (iy, ix) = (y as isize + ky as isize - 1, xx as isize + kx as isize - 1);
                            if iy >= 0 && ix >= 0 && (iy as usize) < s && (ix as usize) < s {
                                acc += x[(ic * s + iy as usize) * s + ix as usize] * w[((oc * c + ic) * 3 + ky) * 3 + kx];
                            }
                        }
                    }
                }
                out[(oc * s + y) * s + xx] = acc;
            }
        }
    }
    out
}

fn bn_relu(x: &mut [f64], p: &HashMap<String, Vec<f64>>, name: &str, spatial: usize) {
    let (g, b) = (&p[&format!("{name}.weight")], &p[&format!("{name}.bias")]);
    let (m, v) = (&p[&format!("{name}.running_mean")], &p[&format!("{name}.running_var")]);
    for (ch, plane) in x.chunks_mut(spatial).enumerate() {
        for val in plane {
            *val = (g[ch] * (*val - m[ch]) / (v[ch] + BN_EPS).sqrt() + b[ch]).max(0.0);
        }
    }
}

/// 2×2 max pool; returns the pooled values and the flat index of each
/// window's first maximal element.
fn pool2(x: &[f64], c: usize, s: usize) -> (Vec<f64>, Vec<usize>) {
    let h = s / 2;
    let (mut vals, mut arg) = (Vec::new(), Vec::new());
    for ch in 0..c {
        for y in 0..h {
            for xx in 0..h {
                let mut best = (f64::NEG_INFINITY, 0);
                for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                    let i = (ch * s + 2 * y + dy) * s + 2 * xx + dx;
                    if x[i] > best.0 {
                        best = (x[i], i);
                    }
                }
                vals.push(best.0);
                arg.push(best.1);
            }
        }
    }
    (vals, arg)
}

/// Grad-CAM computed by hand: nested-loop forward to the second block's
/// activations, the target logit's gradient derived in closed form through
/// pool → mean → linear, then weights, weighted sum, ReLU and peak scaling.
pub fn oracle_cam(model: &Model<f32>, x: &Tensor<f32>, target: usize) -> Vec<f64> {
    let p = params(model);
    let s = TOY_SIZE;
    let x: Vec<f64> = x.data().iter().map(|&v| v as f64).collect();
    let mut h1 = conv_same(&x, 3, s, &p["conv1.weight"], &p["conv1.bias"], 64);
    bn_relu(&mut h1, &p, "bn1", s * s);
    let (h1, _) = pool2(&h1, 64, s);
    let s2 = s / 2;
    let mut a = conv_same(&h1, 64, s2, &p["conv2.weight"], &p["conv2.bias"], 128);
    bn_relu(&mut a, &p, "bn2", s2 * s2);
    let (_, arg) = pool2(&a, 128, s2);
    let cells = (s2 / 2) * (s2 / 2);
    let w = &p["fc1.weight"];
    let mut grad = vec![0.0; a.len()];
    for (cell, &i) in arg.iter().enumerate() {
        let ch = cell / cells;
        grad[i] += w[target * 128 + ch] / cells as f64;
    }
    let spatial = s2 * s2;
    let alpha: Vec<f64> = grad.chunks(spatial).map(|g| g.iter().sum::<f64>() / spatial as f64).collect();
    let mut map = vec![0.0; spatial];
    for (k, plane) in a.chunks(spatial).enumerate() {
        for (m, v) in map.iter_mut().zip(plane) {
            *m += alpha[k] * v;
        }
    }
    map.iter_mut().for_each(|v| *v = v.max(0.0));
    let peak = map.iter().cloned().fold(0.0, f64::max);
    if peak > 0.0 {
        map.iter_mut().for_each(|v| *v /= peak);
    }
    map
}

pub struct CamReport {
    pub maps_checked: usize,
    /// Maps with a negative entry.
    pub negative: usize,
    /// Maps whose maximum is neither 1 nor (with all entries) 0.
    pub bad_peak: usize,
    /// Largest entry of the map for a class wired to no activation.
    pub disconnected_max: f64,
    /// Largest change of the normalized map when the logits are scaled.
    pub scale_dev: f64,
    /// Largest deviation from the hand-computed map.
    pub oracle_dev: f64,
    /// Model maps with at least one positive entry.
    pub nonzero: usize,
}

fn peak_ok(r: &CamResult) -> bool {
    let max = r.map.max();
    (max - 1.0).abs() < 1e-12 || r.map.values.iter().all(|&v| v == 0.0)
}

pub fn cam_properties(models: u64, inputs: u64) -> CamReport {
    let mut rep =
        CamReport { maps_checked: 0, negative: 0, bad_peak: 0, disconnected_max: 0.0, scale_dev: 0.0, oracle_dev: 0.0, nonzero: 0 };
    for m in 0..models {
        let mut model = toy_model(m);
        for i in 0..inputs {
            let x = toy_input(100 * m + i);
            for t in ClassLabel::ALL {
                let r = grad_cam(&mut model, &x, Some(t)).unwrap();
                rep.maps_checked += 1;
                rep.negative += r.map.values.iter().any(|&v| v < 0.0) as usize;
                rep.bad_peak += !peak_ok(&r) as usize;
                rep.nonzero += (r.map.max() > 0.0) as usize;
                let oracle = oracle_cam(&model, &x, t.id());
                let dev = r.map.values.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                rep.oracle_dev = rep.oracle_dev.max(dev);
            }
        }

        // classifier row of the target zeroed: its logit is the bias alone
        let target = ClassLabel::from_id((m % 6) as usize).unwrap();
        let mut cut = model.clone();
        cut.visit_mut(&mut |name, kind, t| {
            if name == "fc1.weight" && kind == TensorKind::Parameter {
                t.data_mut()[target.id() * 128..(target.id() + 1) * 128].fill(0.0);
            }
        });
        let r = grad_cam(&mut cut, &toy_input(7 + m), Some(target)).unwrap();
        rep.disconnected_max = rep.disconnected_max.max(r.map.max());

        let mut scaled = model.clone();
        scaled.visit_mut(&mut |name, _, t| {
            if name.starts_with("fc1.") {
                t.data_mut().iter_mut().for_each(|v| *v *= 3.5);
            }
        });
        let x = toy_input(11 + m);
        for t in ClassLabel::ALL {
            let a = grad_cam(&mut model, &x, Some(t)).unwrap();
            let b = grad_cam(&mut scaled, &x, Some(t)).unwrap();
            let dev = a.map.values.iter().zip(&b.map.values).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
            rep.scale_dev = rep.scale_dev.max(dev);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let a: Vec<f64> = (0..4 * 9).map(|_| rng.random_range(0.0..2.0)).collect();
        let g: Vec<f64> = (0..4 * 9).map(|_| rng.random_range(-1.0..1.0)).collect();
        let c = rng.random_range(0.01..100.0);
        let gs: Vec<f64> = g.iter().map(|v| v * c).collect();
        let p = cam_from(&a, &g, 4, 3, 3, ClassLabel::Happiness);
        let q = cam_from(&a, &gs, 4, 3, 3, ClassLabel::Happiness);
        rep.maps_checked += 2;
        rep.negative += [&p, &q].iter().filter(|r| r.map.values.iter().any(|&v| v < 0.0)).count();
        rep.bad_peak += [&p, &q].iter().filter(|r| !peak_ok(r)).count();
        let dev = p.map.values.iter().zip(&q.map.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        rep.scale_dev = rep.scale_dev.max(dev);
    }
    rep
}
