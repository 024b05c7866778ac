use crate::{Error, Result, Scalar};

/// Bias-corrected Adam.
///
/// Moment buffers are allocated on the first update to match the tensors
/// they track; the tensor list must keep the same shapes afterwards.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T> {
    pub learning_rate: T,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
    state: AdamState<T>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState<T> {
    pub step: u64,
    pub first_moment: Vec<Vec<T>>,
    pub second_moment: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(learning_rate: T) -> Self {
        Self {
            learning_rate,
            beta1: T::of(0.9),
            beta2: T::of(0.999),
            epsilon: T::of(1e-8),
            state: AdamState {
                step: 0,
                first_moment: Vec::new(),
                second_moment: Vec::new(),
            },
        }
    }

    pub fn state(&self) -> &AdamState<T> {
        &self.state
    }

    pub fn update(&mut self, mut params: Vec<&mut [T]>, grads: &[Vec<T>]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::shape(params.len(), grads.len()));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != g.len() {
                return Err(Error::shape(format!("tensor {i} of {}", p.len()), g.len()));
            }
            if let Some(pos) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!(
                    "non-finite gradient {} at tensor {i}, entry {pos} (step {})",
                    g[pos], self.state.step
                )));
            }
        }
        if self.state.first_moment.is_empty() {
            self.state.first_moment = grads.iter().map(|g| vec![T::zero(); g.len()]).collect();
            self.state.second_moment = self.state.first_moment.clone();
        } else if self
            .state
            .first_moment
            .iter()
            .zip(grads)
            .any(|(m, g)| m.len() != g.len())
        {
            return Err(Error::Invariant("parameter shapes changed between Adam steps".into()));
        }

        self.state.step += 1;
        let t = self.state.step as i32;
        let one = T::one();
        let (b1, b2) = (self.beta1, self.beta2);
        let correction1 = one - b1.powi(t);
        let correction2 = one - b2.powi(t);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.state.first_moment)
            .zip(&mut self.state.second_moment)
        {
            for j in 0..g.len() {
                m[j] = b1 * m[j] + (one - b1) * g[j];
                v[j] = b2 * v[j] + (one - b2) * g[j] * g[j];
                let m_hat = m[j] / correction1;
                let v_hat = v[j] / correction2;
                p[j] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}
