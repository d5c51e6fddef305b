//! Architectures as flat layer lists.

mod spec;

pub use spec::{Family, GlobalPool, ModelSpec, ARCH_NAMES};

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autograd::{Gradients, Tape, Var};
use crate::nn::{BatchNorm2d, Conv2d, ConvGeometry, Linear, Module, PoolGeometry, ResidualBlock, SqueezeExcite, TensorKind};
use crate::{Error, Mode, Result, Scalar, Tensor};

/// Reduction ratio of the squeeze-excitation block.
pub const SE_REDUCTION: usize = 16;

/// One step of a sequential network.
#[derive(Clone, Debug)]
pub enum Layer<T> {
    Conv(Conv2d<T>),
    BatchNorm(BatchNorm2d<T>),
    SqueezeExcite(SqueezeExcite<T>),
    Residual(Box<ResidualBlock<T>>),
    Linear(Linear<T>),
    Relu,
    MaxPool(PoolGeometry),
    Dropout(f64),
    GlobalPool(GlobalPool),
    Flatten,
    /// Marks the activation Grad-CAM explains.
    Capture,
}

impl<T: Scalar> Layer<T> {
    fn init<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        match self {
            Layer::Conv(l) => l.init(rng),
            Layer::SqueezeExcite(l) => l.init(rng),
            Layer::Residual(l) => l.init(rng),
            Layer::Linear(l) => l.init(rng),
            _ => {}
        }
    }

    fn module(&self) -> Option<&dyn Module<T>> {
        match self {
            Layer::Conv(l) => Some(l),
            Layer::BatchNorm(l) => Some(l),
            Layer::SqueezeExcite(l) => Some(l),
            Layer::Residual(l) => Some(l.as_ref()),
            Layer::Linear(l) => Some(l),
            _ => None,
        }
    }

    fn module_mut(&mut self) -> Option<&mut dyn Module<T>> {
        match self {
            Layer::Conv(l) => Some(l),
            Layer::BatchNorm(l) => Some(l),
            Layer::SqueezeExcite(l) => Some(l),
            Layer::Residual(l) => Some(l.as_mut()),
            Layer::Linear(l) => Some(l),
            _ => None,
        }
    }
}

/// Output of [`Model::forward`].
#[derive(Clone, Debug)]
pub struct ForwardPass {
    pub logits: Var,
    /// Activation at the [`Layer::Capture`] marker, if the model has one.
    pub captured: Option<Var>,
    /// One tape leaf per trainable parameter, in visit order.
    pub bindings: Vec<Var>,
}

/// A built network together with the spec it came from.
#[derive(Clone, Debug)]
pub struct Model<T> {
    spec: ModelSpec,
    layers: Vec<Layer<T>>,
}

impl<T: Scalar> Model<T> {
    /// Builds `spec` with parameters drawn from a generator seeded by `seed`.
    pub fn build(spec: &ModelSpec, seed: u64) -> Result<Self> {
        let mut model = Self::build_uninit(spec)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        model.layers.iter_mut().for_each(|l| l.init(&mut rng));
        Ok(model)
    }

    /// Builds `spec` with zero weights, unit BN scale and default buffers.
    pub fn build_uninit(spec: &ModelSpec) -> Result<Self> {
        spec.validate()?;
        let layers = match spec.family {
            Family::Gimefive => gimefive(spec)?,
            Family::Resnet18 => resnet(&[2, 2, 2, 2]),
            Family::Resnet34 => resnet(&[3, 4, 6, 3]),
            Family::Vgg16bn => vgg16bn(),
        };
        Ok(Model { spec: spec.clone(), layers })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    /// Records `x: [B, 3, H, W]` through the network. In train mode batch
    /// norm layers update their running statistics and dropout draws from
    /// `rng`.
    pub fn forward<R: Rng + ?Sized>(&mut self, tape: &mut Tape<T>, x: Var, mode: Mode, rng: &mut R) -> Result<ForwardPass> {
        let [c, h, w] = self.spec.input_shape;
        let shape = tape.shape(x);
        if shape.len() != 4 || shape[1..] != [c, h, w] {
            return Err(Error::shape(format!("model expects [B, {c}, {h}, {w}], got {shape:?}")));
        }
        let mut bindings = Vec::new();
        let mut captured = None;
        let mut h = x;
        for layer in &mut self.layers {
            h = match layer {
                Layer::Conv(l) => l.forward(tape, h, &mut bindings)?,
                Layer::BatchNorm(l) => l.forward(tape, h, mode, &mut bindings)?,
                Layer::SqueezeExcite(l) => l.forward(tape, h, &mut bindings)?,
                Layer::Residual(l) => l.forward(tape, h, mode, &mut bindings)?,
                Layer::Linear(l) => l.forward(tape, h, &mut bindings)?,
                Layer::Relu => tape.relu(h),
                Layer::MaxPool(g) => tape.max_pool2d(h, *g)?,
                Layer::Dropout(rate) => tape.dropout(h, *rate, mode, rng)?,
                Layer::GlobalPool(GlobalPool::AdaptiveAvg) => tape.global_avg_pool(h)?,
                Layer::GlobalPool(GlobalPool::Max) => tape.global_max_pool(h)?,
                Layer::Flatten => tape.flatten(h)?,
                Layer::Capture => {
                    captured = Some(h);
                    h
                }
            };
        }
        Ok(ForwardPass { logits: h, captured, bindings })
    }

    /// Eval-mode logits `[B, classes]` for a batch.
    pub fn predict(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let xv = tape.leaf(x);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pass = self.forward(&mut tape, xv, Mode::Eval, &mut rng)?;
        Ok(tape.tensor(pass.logits))
    }

    /// Adds the gradients of `pass.bindings` into each parameter's `grad`.
    pub fn accumulate_grads(&mut self, grads: &Gradients<T>, pass: &ForwardPass) -> Result<()> {
        let mut bindings = pass.bindings.iter();
        let mut result = Ok(());
        self.visit_mut(&mut |name, kind, t| {
            if kind != TensorKind::Parameter || result.is_err() {
                return;
            }
            result = match bindings.next() {
                Some(&v) => grads.accumulate_into(v, t),
                None => Err(Error::Contract(format!("no tape binding for {name}"))),
            };
        });
        result?;
        if bindings.next().is_some() {
            return Err(Error::Contract("more bindings than parameters".into()));
        }
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        self.visit_mut(&mut |_, _, t| t.zero_grad());
    }

    pub fn count_parameters(&self) -> usize {
        crate::nn::count_parameters(self)
    }

    /// Names, kinds and shapes of all tensors in visit order.
    pub fn tensor_names(&self) -> Vec<(String, TensorKind, Vec<usize>)> {
        let mut out = Vec::new();
        self.visit(&mut |name, kind, t| out.push((name.into(), kind, t.shape().to_vec())));
        out
    }

    /// Same network at another precision.
    pub fn cast<U: Scalar>(&self) -> Model<U> {
        let mut out = Model::<U>::build_uninit(&self.spec).expect("spec was valid when built");
        let mut src = Vec::new();
        self.visit(&mut |_, _, t| src.push(t.cast::<U>()));
        let mut src = src.into_iter();
        out.visit_mut(&mut |_, _, t| *t = src.next().expect("identical layout"));
        out
    }
}

impl<T: Scalar> Module<T> for Model<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, TensorKind, &Tensor<T>)) {
        self.layers.iter().filter_map(Layer::module).for_each(|m| m.visit(f));
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, TensorKind, &mut Tensor<T>)) {
        self.layers.iter_mut().filter_map(Layer::module_mut).for_each(|m| m.visit_mut(f));
    }
}

fn gimefive<T: Scalar>(spec: &ModelSpec) -> Result<Vec<Layer<T>>> {
    let mut layers = Vec::new();
    let mut in_ch = spec.input_shape[0];
    let last = spec.conv_blocks - 1;
    for i in 0..spec.conv_blocks {
        let out_ch = ModelSpec::block_channels(i);
        let n = i + 1;
        layers.push(Layer::Conv(Conv2d::same_3x3(format!("conv{n}"), in_ch, out_ch)));
        if spec.batch_norm {
            layers.push(Layer::BatchNorm(BatchNorm2d::new(format!("bn{n}"), out_ch)));
        }
        if spec.use_se && i == 0 {
            layers.push(Layer::SqueezeExcite(SqueezeExcite::new("se1", out_ch, SE_REDUCTION, false)?));
        }
        layers.push(Layer::Relu);
        if i == last {
            layers.push(Layer::Capture);
        }
        layers.push(Layer::MaxPool(PoolGeometry::HALVE));
        if spec.use_dropout && i != last {
            layers.push(Layer::Dropout(spec.conv_dropout));
        }
        in_ch = out_ch;
    }
    layers.push(Layer::GlobalPool(spec.global_pool));
    layers.push(Layer::Flatten);
    let widths: Vec<usize> = match spec.fc_layers {
        1 => vec![in_ch, spec.num_classes],
        2 => vec![in_ch, 2 * in_ch, spec.num_classes],
        _ => vec![in_ch, 2 * in_ch, in_ch, spec.num_classes],
    };
    let fcs = widths.len() - 1;
    for (j, pair) in widths.windows(2).enumerate() {
        layers.push(Layer::Linear(Linear::new(format!("fc{}", j + 1), pair[0], pair[1], true)));
        if j + 1 < fcs {
            layers.push(Layer::Relu);
            if j == 0 && spec.use_dropout {
                layers.push(Layer::Dropout(spec.fc_dropout));
            }
        }
    }
    Ok(layers)
}

fn resnet<T: Scalar>(depths: &[usize; 4]) -> Vec<Layer<T>> {
    let mut layers = vec![
        Layer::Conv(Conv2d::new("conv1", 3, 64, 7, ConvGeometry { stride: 2, padding: 3 }, false)),
        Layer::BatchNorm(BatchNorm2d::new("bn1", 64)),
        Layer::Relu,
        Layer::MaxPool(PoolGeometry { kernel: 3, stride: 2, padding: 1 }),
    ];
    let mut in_ch = 64;
    for (stage, &depth) in depths.iter().enumerate() {
        let out_ch = 64 << stage;
        for b in 0..depth {
            let stride = if stage > 0 && b == 0 { 2 } else { 1 };
            layers.push(Layer::Residual(Box::new(ResidualBlock::new(format!("layer{}.{b}", stage + 1), in_ch, out_ch, stride))));
            in_ch = out_ch;
        }
    }
    layers.extend([
        Layer::Capture,
        Layer::GlobalPool(GlobalPool::AdaptiveAvg),
        Layer::Flatten,
        Layer::Linear(Linear::new("fc", in_ch, crate::NUM_CLASSES, true)),
    ]);
    layers
}

fn vgg16bn<T: Scalar>() -> Vec<Layer<T>> {
    const CFG: [usize; 18] = [64, 64, 0, 128, 128, 0, 256, 256, 256, 0, 512, 512, 512, 0, 512, 512, 512, 0];
    let mut layers = Vec::new();
    let mut in_ch = 3;
    for (i, &c) in CFG.iter().enumerate() {
        if c == 0 {
            if i == CFG.len() - 1 {
                layers.push(Layer::Capture);
            }
            layers.push(Layer::MaxPool(PoolGeometry::HALVE));
            continue;
        }
        layers.push(Layer::Conv(Conv2d::same_3x3(format!("features.{i}.conv"), in_ch, c)));
        layers.push(Layer::BatchNorm(BatchNorm2d::new(format!("features.{i}.bn"), c)));
        layers.push(Layer::Relu);
        in_ch = c;
    }
    // 64×64 input leaves a 2×2×512 map after five poolings.
    layers.push(Layer::Flatten);
    let widths = [2 * 2 * 512, 4096, 4096, crate::NUM_CLASSES];
    for (j, pair) in widths.windows(2).enumerate() {
        layers.push(Layer::Linear(Linear::new(format!("classifier.{j}"), pair[0], pair[1], true)));
        if j < 2 {
            layers.push(Layer::Relu);
            layers.push(Layer::Dropout(0.5));
        }
    }
    layers
}
