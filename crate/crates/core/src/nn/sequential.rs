use ndarray::{Array2, ArrayView2};

use super::{flat, relu, relu_backward, BatchNorm, BatchNormCache, Dense, Dropout, Grads, Mode, Network};
use crate::rng::PipelineRng;
use crate::{Error, Result, Scalar};

#[derive(Clone, Debug, PartialEq)]
pub enum Layer<T> {
    Dense(Dense<T>),
    BatchNorm(BatchNorm<T>),
    Dropout(Dropout),
    Relu,
}

impl<T: Scalar> Layer<T> {
    fn out_dim(&self, in_dim: usize) -> usize {
        match self {
            Layer::Dense(d) => d.out_dim(),
            _ => in_dim,
        }
    }
}

#[derive(Clone, Debug)]
enum LayerCache<T> {
    Dense(Array2<T>),
    BatchNorm(BatchNormCache<T>),
    Dropout(Array2<T>),
    Relu(Array2<T>),
}

#[derive(Clone, Debug)]
pub struct SequentialCache<T>(Vec<LayerCache<T>>);

/// A feed-forward stack of layers.
#[derive(Clone, Debug, PartialEq)]
pub struct Sequential<T> {
    layers: Vec<Layer<T>>,
    in_dim: usize,
}

impl<T: Scalar> Sequential<T> {
    pub fn new(layers: Vec<Layer<T>>) -> Result<Self> {
        let in_dim = layers
            .iter()
            .find_map(|l| match l {
                Layer::Dense(d) => Some(d.in_dim()),
                Layer::BatchNorm(b) => Some(b.width()),
                _ => None,
            })
            .ok_or_else(|| Error::Parameter("a layer stack needs a dense or batchnorm layer".into()))?;
        let mut width = in_dim;
        for layer in &layers {
            match layer {
                Layer::Dense(d) if d.in_dim() != width => {
                    return Err(Error::shape(format!("dense input {width}"), d.in_dim()));
                }
                Layer::BatchNorm(b) if b.width() != width => {
                    return Err(Error::shape(format!("batchnorm width {width}"), b.width()));
                }
                _ => {}
            }
            width = layer.out_dim(width);
        }
        Ok(Self { layers, in_dim })
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers.iter().fold(self.in_dim, |w, l| l.out_dim(w))
    }

    pub fn forward_train(
        &mut self,
        input: ArrayView2<T>,
        rng: &mut PipelineRng,
    ) -> Result<(Array2<T>, SequentialCache<T>)> {
        let mut x = input.to_owned();
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &mut self.layers {
            x = match layer {
                Layer::Dense(d) => {
                    let y = d.forward(x.view())?;
                    caches.push(LayerCache::Dense(x));
                    y
                }
                Layer::BatchNorm(b) => {
                    let (y, c) = b.forward_train(x.view())?;
                    caches.push(LayerCache::BatchNorm(c));
                    y
                }
                Layer::Dropout(d) => {
                    let (y, mask) = d.forward(&x, Mode::Train, rng);
                    caches.push(LayerCache::Dropout(mask));
                    y
                }
                Layer::Relu => {
                    let y = relu(&x);
                    caches.push(LayerCache::Relu(x));
                    y
                }
            };
        }
        Ok((x, SequentialCache(caches)))
    }

    pub fn forward_infer(&self, input: ArrayView2<T>) -> Result<Array2<T>> {
        let mut x = input.to_owned();
        for layer in &self.layers {
            x = match layer {
                Layer::Dense(d) => d.forward(x.view())?,
                Layer::BatchNorm(b) => b.forward_infer(x.view())?,
                Layer::Dropout(_) => x,
                Layer::Relu => relu(&x),
            };
        }
        Ok(x)
    }

    /// Returns `dL/d(input)` and the parameter gradients in [`Network::params`] order.
    pub fn backward_full(
        &self,
        cache: &SequentialCache<T>,
        grad_output: &Array2<T>,
    ) -> Result<(Array2<T>, Grads<T>)> {
        if cache.0.len() != self.layers.len() {
            return Err(Error::Invariant("cache does not match layer stack".into()));
        }
        let mut grad = grad_output.clone();
        let mut per_layer: Vec<Grads<T>> = Vec::with_capacity(self.layers.len());
        for (layer, c) in self.layers.iter().zip(&cache.0).rev() {
            let (next, g) = match (layer, c) {
                (Layer::Dense(d), LayerCache::Dense(x)) => {
                    let g = d.backward(x.view(), grad.view());
                    (g.input, vec![flat(&g.weight), flat(&g.bias)])
                }
                (Layer::BatchNorm(b), LayerCache::BatchNorm(bc)) => {
                    let (gi, gs, gb) = b.backward(bc, grad.view());
                    (gi, vec![flat(&gs), flat(&gb)])
                }
                (Layer::Dropout(_), LayerCache::Dropout(mask)) => (grad * mask, vec![]),
                (Layer::Relu, LayerCache::Relu(pre)) => (relu_backward(pre, &grad), vec![]),
                _ => return Err(Error::Invariant("cache kind does not match layer".into())),
            };
            grad = next;
            per_layer.push(g);
        }
        Ok((grad, per_layer.into_iter().rev().flatten().collect()))
    }
}

impl<T: Scalar> Network<T> for Sequential<T> {
    type Input = Array2<T>;
    type Cache = SequentialCache<T>;

    fn forward_train(
        &mut self,
        input: &Array2<T>,
        rng: &mut PipelineRng,
    ) -> Result<(Array2<T>, SequentialCache<T>)> {
        Sequential::forward_train(self, input.view(), rng)
    }

    fn backward(&self, cache: &SequentialCache<T>, grad_output: &Array2<T>) -> Result<Grads<T>> {
        self.backward_full(cache, grad_output).map(|(_, g)| g)
    }

    fn predict(&self, input: &Array2<T>) -> Result<Array2<T>> {
        self.forward_infer(input.view())
    }

    fn params(&self) -> Vec<&[T]> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Dense(d) => out.extend(d.param_slices()),
                Layer::BatchNorm(b) => out.extend(b.param_slices()),
                _ => {}
            }
        }
        out
    }

    fn params_mut(&mut self) -> Vec<&mut [T]> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Dense(d) => out.extend(d.param_slices_mut()),
                Layer::BatchNorm(b) => out.extend(b.param_slices_mut()),
                _ => {}
            }
        }
        out
    }
}
