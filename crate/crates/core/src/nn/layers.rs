//! Layers that own parameters.
//!
//! Every layer reports its tensors through [`Module::visit`] in a fixed
//! order, and its `forward` records one tape leaf per trainable parameter in
//! exactly that order. Models rely on this to route gradients back and to
//! lay out checkpoints.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::conv::ConvGeometry;
use super::norm::BatchStats;
use crate::autograd::{Tape, Var};
use crate::{Error, Mode, Result, Scalar, Tensor};

/// Trainable parameters receive gradients; buffers hold running state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TensorKind {
    Parameter,
    Buffer,
}

pub trait Module<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, TensorKind, &Tensor<T>));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, TensorKind, &mut Tensor<T>));
}

fn param<T: Scalar>(shape: &[usize]) -> Tensor<T> {
    Tensor::zeros(shape).with_requires_grad(true)
}

fn kaiming<T: Scalar, R: Rng + ?Sized>(t: &mut Tensor<T>, fan_in: usize, rng: &mut R) {
    let std = libm::sqrt(2.0 / fan_in as f64);
    let normal = Normal::new(0.0, std).expect("finite standard deviation");
    t.data_mut().iter_mut().for_each(|v| *v = T::lit(normal.sample(rng)));
}

/// Convolution weights `[out, in, k, k]` with optional bias.
#[derive(Clone, Debug)]
pub struct Conv2d<T> {
    pub name: String,
    pub weight: Tensor<T>,
    pub bias: Option<Tensor<T>>,
    pub geometry: ConvGeometry,
}

/// The 3×3, stride 1, padding 1 convolution used by every GiMeFive block.
pub type Conv2dParams<T> = Conv2d<T>;

impl<T: Scalar> Conv2d<T> {
    pub fn new(name: impl Into<String>, in_ch: usize, out_ch: usize, kernel: usize, geometry: ConvGeometry, bias: bool) -> Self {
        Conv2d { name: name.into(), weight: param(&[out_ch, in_ch, kernel, kernel]), bias: bias.then(|| param(&[out_ch])), geometry }
    }

    pub fn same_3x3(name: impl Into<String>, in_ch: usize, out_ch: usize) -> Self {
        Self::new(name, in_ch, out_ch, 3, ConvGeometry::SAME_3X3, true)
    }

    pub fn init<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let s = self.weight.shape();
        let fan_in = s[1] * s[2] * s[3];
        kaiming(&mut self.weight, fan_in, rng);
        if let Some(b) = &mut self.bias {
            b.data_mut().iter_mut().for_each(|v| *v = T::zero());
        }
    }

    pub fn forward(&self, tape: &mut Tape<T>, x: Var, binds: &mut Vec<Var>) -> Result<Var> {
        let w = tape.leaf(&self.weight);
        binds.push(w);
        let b = self.bias.as_ref().map(|b| tape.leaf(b));
        binds.extend(b);
        tape.conv2d(x, w, b, self.geometry)
    }
}

impl<T: Scalar> Module<T> for Conv2d<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, TensorKind, &Tensor<T>)) {
        f(&format!("{}.weight", self.name), TensorKind::Parameter, &self.weight);
        if let Some(b) = &self.bias {
            f(&format!("{}.bias", self.name), TensorKind::Parameter, b);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, TensorKind, &mut Tensor<T>)) {
        f(&format!("{}.weight", self.name), TensorKind::Parameter, &mut self.weight);
        if let Some(b) = &mut self.bias {
            f(&format!("{}.bias", self.name), TensorKind::Parameter, b);
        }
    }
}

/// Per-channel batch normalization with running statistics.
#[derive(Clone, Debug)]
pub struct BatchNorm2d<T> {
    pub name: String,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub momentum: f64,
    pub eps: f64,
}

pub type BatchNorm2dParams<T> = BatchNorm2d<T>;

impl<T: Scalar> BatchNorm2d<T> {
    pub fn new(name: impl Into<String>, channels: usize) -> Self {
        BatchNorm2d {
            name: name.into(),
            gamma: Tensor::full(&[channels], T::one()).with_requires_grad(true),
            beta: param(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], T::one()),
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    /// Train mode normalizes by batch statistics and folds them into the
    /// running estimates; eval mode uses the running estimates.
    pub fn forward(&mut self, tape: &mut Tape<T>, x: Var, mode: Mode, binds: &mut Vec<Var>) -> Result<Var> {
        let g = tape.leaf(&self.gamma);
        let b = tape.leaf(&self.beta);
        binds.extend([g, b]);
        let eps = T::lit(self.eps);
        match mode {
            Mode::Train => {
                let (y, stats) = tape.batch_norm_train(x, g, b, eps)?;
                self.update_running(&stats);
                Ok(y)
            }
            Mode::Eval => tape.batch_norm_eval(x, g, b, self.running_mean.data(), self.running_var.data(), eps),
        }
    }

    fn update_running(&mut self, stats: &BatchStats<T>) {
        let m = T::lit(self.momentum);
        let keep = T::one() - m;
        for (r, &s) in self.running_mean.data_mut().iter_mut().zip(&stats.mean) {
            *r = keep * *r + m * s;
        }
        for (r, &s) in self.running_var.data_mut().iter_mut().zip(&stats.var_unbiased) {
            *r = keep * *r + m * s;
        }
    }
}

impl<T: Scalar> Module<T> for BatchNorm2d<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, TensorKind, &Tensor<T>)) {
        f(&format!("{}.weight", self.name), TensorKind::Parameter, &self.gamma);
        f(&format!("{}.bias", self.name), TensorKind::Parameter, &self.beta);
        f(&format!("{}.running_mean", self.name), TensorKind::Buffer, &self.running_mean);
        f(&format!("{}.running_var", self.name), TensorKind::Buffer, &self.running_var);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, TensorKind, &mut Tensor<T>)) {
        f(&format!("{}.weight", self.name), TensorKind::Parameter, &mut self.gamma);
        f(&format!("{}.bias", self.name), TensorKind::Parameter, &mut self.beta);
        f(&format!("{}.running_mean", self.name), TensorKind::Buffer, &mut self.running_mean);
        f(&format!("{}.running_var", self.name), TensorKind::Buffer, &mut self.running_var);
    }
}

/// Fully connected layer, weight `[out, in]`.
#[derive(Clone, Debug)]
pub struct Linear<T> {
    pub name: String,
    pub weight: Tensor<T>,
    pub bias: Option<Tensor<T>>,
}

impl<T: Scalar> Linear<T> {
    pub fn new(name: impl Into<String>, inputs: usize, outputs: usize, bias: bool) -> Self {
        Linear { name: name.into(), weight: param(&[outputs, inputs]), bias: bias.then(|| param(&[outputs])) }
    }

    pub fn init<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let fan_in = self.weight.shape()[1];
        kaiming(&mut self.weight, fan_in, rng);
        if let Some(b) = &mut self.bias {
            b.data_mut().iter_mut().for_each(|v| *v = T::zero());
        }
    }

    pub fn forward(&self, tape: &mut Tape<T>, x: Var, binds: &mut Vec<Var>) -> Result<Var> {
        let w = tape.leaf(&self.weight);
        binds.push(w);
        let b = self.bias.as_ref().map(|b| tape.leaf(b));
        binds.extend(b);
        tape.linear(x, w, b)
    }
}

impl<T: Scalar> Module<T> for Linear<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, TensorKind, &Tensor<T>)) {
        f(&format!("{}.weight", self.name), TensorKind::Parameter, &self.weight);
        if let Some(b) = &self.bias {
            f(&format!("{}.bias", self.name), TensorKind::Parameter, b);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, TensorKind, &mut Tensor<T>)) {
        f(&format!("{}.weight", self.name), TensorKind::Parameter, &mut self.weight);
        if let Some(b) = &mut self.bias {
            f(&format!("{}.bias", self.name), TensorKind::Parameter, b);
        }
    }
}

/// Squeeze-and-excitation: channel gates computed from globally pooled
/// features, `sigmoid(expand(relu(reduce(mean(x)))))`.
#[derive(Clone, Debug)]
pub struct SqueezeExcite<T> {
    pub name: String,
    pub reduce: Linear<T>,
    pub expand: Linear<T>,
}

impl<T: Scalar> SqueezeExcite<T> {
    pub fn new(name: impl Into<String>, channels: usize, reduction: usize, bias: bool) -> Result<Self> {
        if reduction == 0 || !channels.is_multiple_of(reduction) || channels / reduction == 0 {
            return Err(Error::config(format!("{channels} channels are not divisible by reduction {reduction}")));
        }
        let name = name.into();
        let hidden = channels / reduction;
        Ok(SqueezeExcite {
            reduce: Linear::new(format!("{name}.fc1"), channels, hidden, bias),
            expand: Linear::new(format!("{name}.fc2"), hidden, channels, bias),
            name,
        })
    }

    pub fn init<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.reduce.init(rng);
        self.expand.init(rng);
    }

    pub fn forward(&self, tape: &mut Tape<T>, x: Var, binds: &mut Vec<Var>) -> Result<Var> {
        let pooled = tape.global_avg_pool(x)?;
        let squeezed = tape.flatten(pooled)?;
        let h = self.reduce.forward(tape, squeezed, binds)?;
        let h = tape.relu(h);
        let e = self.expand.forward(tape, h, binds)?;
        let gates = tape.sigmoid(e);
        tape.channel_scale(x, gates)
    }
}

impl<T: Scalar> Module<T> for SqueezeExcite<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, TensorKind, &Tensor<T>)) {
        self.reduce.visit(f);
        self.expand.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, TensorKind, &mut Tensor<T>)) {
        self.reduce.visit_mut(f);
        self.expand.visit_mut(f);
    }
}

/// ResNet basic block: two 3×3 convolutions with batch norm plus an
/// identity or 1×1-projection shortcut, followed by ReLU.
#[derive(Clone, Debug)]
pub struct ResidualBlock<T> {
    pub name: String,
    pub conv1: Conv2d<T>,
    pub bn1: BatchNorm2d<T>,
    pub conv2: Conv2d<T>,
    pub bn2: BatchNorm2d<T>,
    pub downsample: Option<(Conv2d<T>, BatchNorm2d<T>)>,
}

impl<T: Scalar> ResidualBlock<T> {
    pub fn new(name: impl Into<String>, in_ch: usize, out_ch: usize, stride: usize) -> Self {
        let name = name.into();
        let downsample = (stride != 1 || in_ch != out_ch).then(|| {
            (
                Conv2d::new(format!("{name}.downsample.0"), in_ch, out_ch, 1, ConvGeometry { stride, padding: 0 }, false),
                BatchNorm2d::new(format!("{name}.downsample.1"), out_ch),
            )
        });
        ResidualBlock {
            conv1: Conv2d::new(format!("{name}.conv1"), in_ch, out_ch, 3, ConvGeometry { stride, padding: 1 }, false),
            bn1: BatchNorm2d::new(format!("{name}.bn1"), out_ch),
            conv2: Conv2d::new(format!("{name}.conv2"), out_ch, out_ch, 3, ConvGeometry::SAME_3X3, false),
            bn2: BatchNorm2d::new(format!("{name}.bn2"), out_ch),
            downsample,
            name,
        }
    }

    pub fn init<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.conv1.init(rng);
        self.conv2.init(rng);
        if let Some((conv, _)) = &mut self.downsample {
            conv.init(rng);
        }
    }

    pub fn forward(&mut self, tape: &mut Tape<T>, x: Var, mode: Mode, binds: &mut Vec<Var>) -> Result<Var> {
        let h = self.conv1.forward(tape, x, binds)?;
        let h = self.bn1.forward(tape, h, mode, binds)?;
        let h = tape.relu(h);
        let h = self.conv2.forward(tape, h, binds)?;
        let branch = self.bn2.forward(tape, h, mode, binds)?;
        let shortcut = match &mut self.downsample {
            Some((conv, bn)) => {
                let s = conv.forward(tape, x, binds)?;
                bn.forward(tape, s, mode, binds)?
            }
            None => x,
        };
        let sum = tape.add(branch, shortcut)?;
        Ok(tape.relu(sum))
    }
}

impl<T: Scalar> Module<T> for ResidualBlock<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, TensorKind, &Tensor<T>)) {
        self.conv1.visit(f);
        self.bn1.visit(f);
        self.conv2.visit(f);
        self.bn2.visit(f);
        if let Some((conv, bn)) = &self.downsample {
            conv.visit(f);
            bn.visit(f);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, TensorKind, &mut Tensor<T>)) {
        self.conv1.visit_mut(f);
        self.bn1.visit_mut(f);
        self.conv2.visit_mut(f);
        self.bn2.visit_mut(f);
        if let Some((conv, bn)) = &mut self.downsample {
            conv.visit_mut(f);
            bn.visit_mut(f);
        }
    }
}

/// Number of trainable scalars reported by a module.
pub fn count_parameters<T: Scalar, M: Module<T> + ?Sized>(m: &M) -> usize {
    let mut n = 0;
    m.visit(&mut |_, kind, t| {
        if kind == TensorKind::Parameter {
            n += t.data().len();
        }
    });
    n
}
