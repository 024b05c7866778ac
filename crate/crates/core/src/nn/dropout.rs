use ndarray::Array2;
use rand::Rng;

use super::Mode;
use crate::{Error, Result, Scalar};

/// Inverted dropout: survivors are scaled by `1 / (1 − rate)` at train
/// time so inference is the identity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dropout {
    rate: f64,
}

impl Dropout {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Parameter(format!(
                "dropout rate must lie in [0, 1), got {rate}"
            )));
        }
        Ok(Self { rate })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Returns the output and the per-entry multiplier (0 or 1/(1−rate)).
    pub(crate) fn forward<T: Scalar>(
        &self,
        input: &Array2<T>,
        mode: Mode,
        rng: &mut impl Rng,
    ) -> (Array2<T>, Array2<T>) {
        if mode == Mode::Infer || self.rate == 0.0 {
            return (input.clone(), Array2::ones(input.raw_dim()));
        }
        let keep_scale = T::of(1.0 / (1.0 - self.rate));
        let mask = Array2::from_shape_simple_fn(input.raw_dim(), || {
            if rng.random::<f64>() < self.rate {
                T::zero()
            } else {
                keep_scale
            }
        });
        (input * &mask, mask)
    }
}

/// Applies dropout and reports which entries were kept.
pub fn dropout_apply<T: Scalar>(
    rate: f64,
    input: &Array2<T>,
    mode: Mode,
    rng: &mut impl Rng,
) -> Result<(Array2<T>, Array2<bool>)> {
    let layer = Dropout::new(rate)?;
    let (out, mask) = layer.forward(input, mode, rng);
    Ok((out, mask.mapv(|m| m != T::zero())))
}
