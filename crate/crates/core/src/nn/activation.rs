use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::autograd::{expect_rank, Op, Tape, Var};
use crate::{Error, Mode, Result, Scalar};

impl<T: Scalar> Tape<T> {
    /// `max(x, 0)` with subgradient 0 at 0.
    pub fn relu(&mut self, x: Var) -> Var {
        self.max_scalar(x, T::zero())
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let data = self.data(x).iter().map(|&v| T::one() / (T::one() + (-v).exp())).collect();
        self.push(self.shape(x).to_vec(), data, Op::Sigmoid(x), &[x])
    }

    /// Inverted dropout: in train mode each element is zeroed with
    /// probability `rate` and survivors are scaled by `1 / (1 - rate)`.
    /// Eval mode (or rate 0) returns `x` unchanged.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, rate: f64, mode: Mode, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::config(format!("dropout rate {rate} outside [0, 1)")));
        }
        if mode == Mode::Eval || rate == 0.0 {
            return Ok(x);
        }
        let keep = T::lit(1.0 / (1.0 - rate));
        let mask: Vec<T> = (0..self.data(x).len()).map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep }).collect();
        let data = self.data(x).iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        Ok(self.push(self.shape(x).to_vec(), data, Op::Dropout { x, mask }, &[x]))
    }

    /// Scales every channel plane of `x: [B, C, H, W]` by `s[b, c]`;
    /// `s` may be `[B, C]` or `[B, C, 1, 1]`.
    pub fn channel_scale(&mut self, x: Var, s: Var) -> Result<Var> {
        expect_rank(self, x, 4, "channel scale")?;
        let shape = self.shape(x).to_vec();
        let planes = shape[0] * shape[1];
        if self.data(s).len() != planes || self.shape(s)[..2] != shape[..2] {
            return Err(Error::shape(format!("channel scale {:?} does not match input {shape:?}", self.shape(s))));
        }
        let spatial = shape[2] * shape[3];
        let sv = self.data(s);
        let data = self.data(x).chunks(spatial).zip(sv).flat_map(|(p, &k)| p.iter().map(move |&v| v * k)).collect();
        Ok(self.push(shape, data, Op::ChannelScale { x, s, spatial }, &[x, s]))
    }
}
