//! Central finite differences against the tape's gradients.

use gmf_core::model::Model;
use gmf_core::nn::TensorKind;
use gmf_core::{Mode, Result, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const H: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1f64.max(a.abs()).max(b.abs())
}

pub fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::from_vec(shape, data).unwrap().with_requires_grad(true)
}

/// Values bounded away from zero so kinks at 0 are not crossed by ±h.
pub fn random_away_from_zero(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let mut t = random(shape, rng);
    t.data_mut().iter_mut().for_each(|v| *v = v.signum() * (0.1 + 0.9 * v.abs()));
    t
}

pub type Graph = dyn Fn(&mut Tape<f64>, &[Var]) -> Result<Var>;

pub struct Case {
    pub name: &'static str,
    pub inputs: Vec<Tensor<f64>>,
    pub graph: Box<Graph>,
}

impl Case {
    pub fn new(name: &'static str, inputs: Vec<Tensor<f64>>, graph: impl Fn(&mut Tape<f64>, &[Var]) -> Result<Var> + 'static) -> Self {
        Case { name, inputs, graph: Box::new(graph) }
    }
}

/// Contracts the output with fixed pseudo-random weights so every output
/// element contributes to the checked scalar.
fn scalar(tape: &mut Tape<f64>, out: Var) -> Result<Var> {
    let shape = tape.shape(out).to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let r = random(&shape, &mut rng).with_requires_grad(false);
    let r = tape.constant(r);
    let prod = tape.mul(out, r)?;
    Ok(tape.sum(prod))
}

fn value(case: &Case, inputs: &[Tensor<f64>]) -> Result<f64> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t)).collect();
    let out = (case.graph)(&mut tape, &vars)?;
    let s = scalar(&mut tape, out)?;
    Ok(tape.data(s)[0])
}

/// Largest relative error over every coordinate of every input that
/// requires a gradient.
pub fn max_error(case: &Case) -> Result<f64> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = case.inputs.iter().map(|t| tape.leaf(t)).collect();
    let out = (case.graph)(&mut tape, &vars)?;
    let s = scalar(&mut tape, out)?;
    let grads = tape.backward(s)?;
    let mut worst = 0f64;
    for (i, input) in case.inputs.iter().enumerate() {
        if !input.requires_grad() {
            continue;
        }
        let analytic = grads.get(vars[i]).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; input.numel()]);
        for (j, &a) in analytic.iter().enumerate() {
            let mut shifted = case.inputs.clone();
            shifted[i].data_mut()[j] += H;
            let plus = value(case, &shifted)?;
            shifted[i].data_mut()[j] -= 2.0 * H;
            let minus = value(case, &shifted)?;
            let numeric = (plus - minus) / (2.0 * H);
            worst = worst.max(rel_err(a, numeric));
        }
    }
    Ok(worst)
}

/// Cross-entropy of a whole model on `x`. Dropout masks are drawn from a
/// freshly seeded generator so every evaluation sees the same mask.
fn model_loss(model: &mut Model<f64>, x: &Tensor<f64>, labels: &[usize], mode: Mode) -> Result<f64> {
    let mut tape = Tape::new();
    let xv = tape.leaf(x);
    let pass = model.forward(&mut tape, xv, mode, &mut ChaCha8Rng::seed_from_u64(99))?;
    let loss = tape.cross_entropy(pass.logits, labels)?;
    Ok(tape.data(loss)[0])
}

fn perturb(model: &mut Model<f64>, tensor: usize, coord: usize, delta: f64) {
    let mut k = 0;
    model.visit_params_mut(&mut |t| {
        if k == tensor {
            t.data_mut()[coord] += delta;
        }
        k += 1;
    });
}

/// Finite-difference check of a full model on sampled coordinates:
/// `per_tensor` entries of every parameter tensor and `input_coords`
/// entries of the input, with step `h`. Returns the largest relative
/// error and the number of coordinates checked.
#[allow(clippy::too_many_arguments)]
pub fn model_error(
    model: &mut Model<f64>,
    x: &Tensor<f64>,
    labels: &[usize],
    mode: Mode,
    per_tensor: usize,
    input_coords: usize,
    seed: u64,
    h: f64,
) -> Result<(f64, usize)> {
    let x = x.clone().with_requires_grad(true);
    let mut tape = Tape::new();
    let xv = tape.leaf(&x);
    let pass = model.forward(&mut tape, xv, mode, &mut ChaCha8Rng::seed_from_u64(99))?;
    let loss = tape.cross_entropy(pass.logits, labels)?;
    let grads = tape.backward(loss)?;
    let dx = grads.get(xv).unwrap().to_vec();
    model.zero_grads();
    model.accumulate_grads(&grads, &pass)?;
    drop(tape);

    let mut param_grads = Vec::new();
    model.visit_params(&mut |t| param_grads.push(t.grad().map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; t.numel()])));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0f64;
    let mut checked = 0;
    for (ti, g) in param_grads.iter().enumerate() {
        for _ in 0..per_tensor.min(g.len()) {
            let j = rng.random_range(0..g.len());
            perturb(model, ti, j, h);
            let plus = model_loss(model, &x, labels, mode)?;
            perturb(model, ti, j, -2.0 * h);
            let minus = model_loss(model, &x, labels, mode)?;
            perturb(model, ti, j, h);
            worst = worst.max(rel_err(g[j], (plus - minus) / (2.0 * h)));
            checked += 1;
        }
    }
    for _ in 0..input_coords {
        let j = rng.random_range(0..x.numel());
        let mut xs = x.clone();
        xs.data_mut()[j] += h;
        let plus = model_loss(model, &xs, labels, mode)?;
        xs.data_mut()[j] -= 2.0 * h;
        let minus = model_loss(model, &xs, labels, mode)?;
        worst = worst.max(rel_err(dx[j], (plus - minus) / (2.0 * h)));
        checked += 1;
    }
    Ok((worst, checked))
}

pub trait VisitParams {
    fn visit_params(&self, f: &mut dyn FnMut(&Tensor<f64>));
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Tensor<f64>));
}

impl VisitParams for Model<f64> {
    fn visit_params(&self, f: &mut dyn FnMut(&Tensor<f64>)) {
        use gmf_core::nn::Module;
        self.visit(&mut |_, kind, t| {
            if kind == TensorKind::Parameter {
                f(t)
            }
        });
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Tensor<f64>)) {
        use gmf_core::nn::Module;
        self.visit_mut(&mut |_, kind, t| {
            if kind == TensorKind::Parameter {
                f(t)
            }
        });
    }
}

/// One case per differentiable op, plus a small composite network.
pub fn op_cases() -> Vec<Case> {
    use gmf_core::nn::{ConvGeometry, PoolGeometry};
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let r = &mut rng;
    let conv = |stride, padding| ConvGeometry { stride, padding };
    vec![
        Case::new("add", vec![random(&[2, 3], r), random(&[2, 3], r)], |t, v| t.add(v[0], v[1])),
        Case::new("sub", vec![random(&[2, 3], r), random(&[2, 3], r)], |t, v| t.sub(v[0], v[1])),
        Case::new("mul", vec![random(&[4], r), random(&[4], r)], |t, v| t.mul(v[0], v[1])),
        Case::new("add_scalar", vec![random(&[5], r)], |t, v| Ok(t.add_scalar(v[0], 0.7))),
        Case::new("mul_scalar", vec![random(&[5], r)], |t, v| Ok(t.mul_scalar(v[0], -1.3))),
        Case::new("relu", vec![random_away_from_zero(&[2, 6], r)], |t, v| Ok(t.relu(v[0]))),
        Case::new("sum", vec![random(&[3, 2], r)], |t, v| Ok(t.sum(v[0]))),
        Case::new("reshape", vec![random(&[2, 6], r)], |t, v| t.reshape(v[0], &[3, 4])),
        Case::new("flatten", vec![random(&[2, 2, 3], r)], |t, v| t.flatten(v[0])),
        Case::new("gather", vec![random(&[6], r)], |t, v| t.gather(v[0], &[4, 1, 4])),
        Case::new("matmul", vec![random(&[3, 4], r), random(&[4, 5], r)], |t, v| t.matmul(v[0], v[1])),
        Case::new("linear", vec![random(&[3, 4], r), random(&[5, 4], r), random(&[5], r)], |t, v| t.linear(v[0], v[1], Some(v[2]))),
        Case::new("linear_no_bias", vec![random(&[2, 3], r), random(&[4, 3], r)], |t, v| t.linear(v[0], v[1], None)),
        Case::new("conv3x3_same", vec![random(&[2, 2, 5, 5], r), random(&[3, 2, 3, 3], r), random(&[3], r)], move |t, v| {
            t.conv2d(v[0], v[1], Some(v[2]), conv(1, 1))
        }),
        Case::new("conv3x3_stride2", vec![random(&[1, 2, 6, 6], r), random(&[2, 2, 3, 3], r)], move |t, v| {
            t.conv2d(v[0], v[1], None, conv(2, 1))
        }),
        Case::new("conv1x1_stride2", vec![random(&[2, 3, 4, 4], r), random(&[2, 3, 1, 1], r)], move |t, v| {
            t.conv2d(v[0], v[1], None, conv(2, 0))
        }),
        Case::new("conv7x7_stride2", vec![random(&[1, 1, 9, 9], r), random(&[2, 1, 7, 7], r)], move |t, v| {
            t.conv2d(v[0], v[1], None, conv(2, 3))
        }),
        Case::new("batch_norm_train", vec![random(&[2, 3, 3, 3], r), random(&[3], r), random(&[3], r)], |t, v| {
            t.batch_norm_train(v[0], v[1], v[2], 1e-5).map(|(y, _)| y)
        }),
        Case::new("batch_norm_eval", vec![random(&[2, 3, 2, 2], r), random(&[3], r), random(&[3], r)], |t, v| {
            t.batch_norm_eval(v[0], v[1], v[2], &[0.1, -0.2, 0.3], &[0.5, 1.5, 2.0], 1e-5)
        }),
        Case::new("max_pool_2x2", vec![random(&[2, 2, 4, 4], r)], |t, v| t.max_pool2d(v[0], PoolGeometry::HALVE)),
        Case::new("max_pool_3x3_s2_p1", vec![random(&[1, 2, 5, 5], r)], |t, v| {
            t.max_pool2d(v[0], PoolGeometry { kernel: 3, stride: 2, padding: 1 })
        }),
        Case::new("global_avg_pool", vec![random(&[2, 3, 3, 2], r)], |t, v| t.global_avg_pool(v[0])),
        Case::new("global_max_pool", vec![random(&[2, 3, 3, 2], r)], |t, v| t.global_max_pool(v[0])),
        Case::new("dropout", vec![random(&[4, 5], r)], |t, v| t.dropout(v[0], 0.4, Mode::Train, &mut ChaCha8Rng::seed_from_u64(3))),
        Case::new("sigmoid", vec![random(&[2, 4], r)], |t, v| Ok(t.sigmoid(v[0]))),
        Case::new("channel_scale", vec![random(&[2, 3, 2, 2], r), random(&[2, 3], r)], |t, v| t.channel_scale(v[0], v[1])),
        Case::new("cross_entropy", vec![random(&[3, 6], r)], |t, v| t.cross_entropy(v[0], &[0, 5, 2])),
        Case::new(
            "conv_relu_linear_ce",
            vec![random(&[2, 1, 4, 4], r), random(&[2, 1, 3, 3], r), random(&[2], r), random(&[6, 32], r), random(&[6], r)],
            move |t, v| {
                let h = t.conv2d(v[0], v[1], Some(v[2]), conv(1, 1))?;
                let h = t.relu(h);
                let h = t.flatten(h)?;
                let z = t.linear(h, v[3], Some(v[4]))?;
                t.cross_entropy(z, &[1, 4])
            },
        ),
    ]
}
