use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::nn::Mode;
use crate::rng::SeededRng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Inverted dropout: survivors are scaled by `1 / (1 - rate)` at train time,
/// inference is the identity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DropoutLayer {
    rate: f64,
}

impl DropoutLayer {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Parameter(format!("dropout rate must be in [0,1), got {rate}")));
        }
        Ok(Self { rate })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, x: Var, mode: Mode, rng: &mut SeededRng) -> Result<Var> {
        if mode == Mode::Infer || self.rate == 0.0 {
            return Ok(x);
        }
        let keep = T::of(1.0 / (1.0 - self.rate));
        let n = tape.value(x).len();
        let mask: Vec<T> = (0..n).map(|_| if rng.uniform() < self.rate { T::zero() } else { keep }).collect();
        let mask = Tensor::new(tape.shape(x).to_vec(), mask)?;
        tape.mark_stochastic();
        tape.mul_const(x, mask)
    }
}
