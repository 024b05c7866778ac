use ndarray::Array2;
use rand::seq::index::sample;
use serde::Serialize;

use super::{mse_loss, Network};
use crate::rng::substream;
use crate::{Result, Scalar};

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    /// max over checked coordinates of |analytic − numeric| / max(1, |analytic| + |numeric|)
    pub max_relative_error: f64,
    pub checked: usize,
    /// (tensor index, entry index) of the worst coordinate
    pub worst: Option<(usize, usize)>,
}

/// Central-difference check of every parameter of `model` under MSE loss.
///
/// Each loss evaluation runs a fresh train-mode forward pass on a copy of
/// the model with the randomness reseeded from `seed`, so dropout masks are
/// identical across evaluations and batch normalisation uses batch statistics.
pub fn grad_check<T: Scalar, N: Network<T>>(
    model: &N,
    input: &N::Input,
    target: &Array2<T>,
    eps: T,
    seed: u64,
) -> Result<GradCheckReport> {
    grad_check_sampled(model, input, target, eps, seed, None)
}

/// Like [`grad_check`], but checks at most `per_tensor` randomly chosen
/// coordinates of each parameter tensor.
pub fn grad_check_sampled<T: Scalar, N: Network<T>>(
    model: &N,
    input: &N::Input,
    target: &Array2<T>,
    eps: T,
    seed: u64,
    per_tensor: Option<usize>,
) -> Result<GradCheckReport> {
    let loss_of = |m: &N| -> Result<(T, Vec<Vec<T>>)> {
        let mut work = m.clone();
        let (pred, cache) = work.forward_train(input, &mut substream(seed, "gradcheck/noise"))?;
        let (loss, grad) = mse_loss(&pred, target)?;
        let grads = work.backward(&cache, &grad)?;
        Ok((loss, grads))
    };
    let (_, analytic) = loss_of(model)?;

    let mut pick_rng = substream(seed, "gradcheck/coordinates");
    let sizes: Vec<usize> = model.params().iter().map(|p| p.len()).collect();
    let mut probe = model.clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        checked: 0,
        worst: None,
    };
    let two = T::one() + T::one();
    for (tensor, &len) in sizes.iter().enumerate() {
        let entries: Vec<usize> = match per_tensor {
            Some(k) if k < len => sample(&mut pick_rng, len, k).into_vec(),
            _ => (0..len).collect(),
        };
        for entry in entries {
            let original = probe.params()[tensor][entry];
            probe.params_mut()[tensor][entry] = original + eps;
            let up = loss_of(&probe)?.0;
            probe.params_mut()[tensor][entry] = original - eps;
            let down = loss_of(&probe)?.0;
            probe.params_mut()[tensor][entry] = original;

            let numeric = ((up - down) / (two * eps)).as_f64();
            let a = analytic[tensor][entry].as_f64();
            let rel = (a - numeric).abs() / 1f64.max(a.abs() + numeric.abs());
            report.checked += 1;
            if rel > report.max_relative_error {
                report.max_relative_error = rel;
                report.worst = Some((tensor, entry));
            }
        }
    }
    Ok(report)
}
