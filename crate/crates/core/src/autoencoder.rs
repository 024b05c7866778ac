//! Stage one: compress a flattened 7-season career into a 64-dimensional embedding.
//!
//! Encoder: dense(in→128) → batchnorm → dropout(0.1) → ReLU → dense(128→64) → ReLU.
//! Decoder: dense(64→128) → ReLU → dense(128→in), linear output.
//! Trained on mean squared reconstruction error.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::ingest::{CareerSequence, Dataset};
use crate::nn::serial::{stack_from_layers, stack_to_layers, ModelDocument};
use crate::nn::{
    train_loop, BatchNorm, Dense, Dropout, Grads, Layer, Network, Sequential, SequentialCache,
    TrainConfig, TrainOutcome,
};
use crate::rng::{substream, PipelineRng};
use crate::{Error, Result, Scalar};

pub const HIDDEN_WIDTH: usize = 128;
pub const EMBEDDING_DIM: usize = 64;
pub const DROPOUT_RATE: f64 = 0.1;
pub const KIND: &str = "stage1-autoencoder";

#[derive(Clone, Debug, PartialEq)]
pub struct AutoencoderModel<T> {
    encoder: Sequential<T>,
    decoder: Sequential<T>,
}

#[derive(Clone, Debug)]
pub struct AutoencoderCache<T> {
    encoder: SequentialCache<T>,
    decoder: SequentialCache<T>,
}

fn encoder_layers<T: Scalar>(first: Dense<T>, second: Dense<T>) -> Vec<Layer<T>> {
    let width = first.out_dim();
    vec![
        Layer::Dense(first),
        Layer::BatchNorm(BatchNorm::new(width)),
        Layer::Dropout(Dropout::new(DROPOUT_RATE).expect("valid rate")),
        Layer::Relu,
        Layer::Dense(second),
        Layer::Relu,
    ]
}

impl<T: Scalar> AutoencoderModel<T> {
    /// Freshly initialised model with the production widths.
    pub fn new(input_dim: usize, rng: &mut PipelineRng) -> Self {
        Self::with_dims(input_dim, HIDDEN_WIDTH, EMBEDDING_DIM, rng)
    }

    /// Same topology with arbitrary widths (used for small gradient checks).
    pub fn with_dims(input_dim: usize, hidden: usize, embedding: usize, rng: &mut PipelineRng) -> Self {
        let encoder = Sequential::new(encoder_layers(
            Dense::glorot(input_dim, hidden, rng),
            Dense::glorot(hidden, embedding, rng),
        ))
        .expect("consistent widths");
        let decoder = Sequential::new(vec![
            Layer::Dense(Dense::glorot(embedding, hidden, rng)),
            Layer::Relu,
            Layer::Dense(Dense::glorot(hidden, input_dim, rng)),
        ])
        .expect("consistent widths");
        Self { encoder, decoder }
    }

    /// All weights and biases zero.
    pub fn zeros(input_dim: usize, hidden: usize, embedding: usize) -> Self {
        Self {
            encoder: Sequential::new(encoder_layers(
                Dense::zeros(input_dim, hidden),
                Dense::zeros(hidden, embedding),
            ))
            .expect("consistent widths"),
            decoder: Sequential::new(vec![
                Layer::Dense(Dense::zeros(embedding, hidden)),
                Layer::Relu,
                Layer::Dense(Dense::zeros(hidden, input_dim)),
            ])
            .expect("consistent widths"),
        }
    }

    pub fn from_stacks(encoder: Sequential<T>, decoder: Sequential<T>) -> Result<Self> {
        if decoder.in_dim() != encoder.out_dim() || decoder.out_dim() != encoder.in_dim() {
            return Err(Error::shape(
                (encoder.out_dim(), encoder.in_dim()),
                (decoder.in_dim(), decoder.out_dim()),
            ));
        }
        Ok(Self { encoder, decoder })
    }

    pub fn encoder(&self) -> &Sequential<T> {
        &self.encoder
    }

    pub fn decoder(&self) -> &Sequential<T> {
        &self.decoder
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.in_dim()
    }

    pub fn embedding_dim(&self) -> usize {
        self.encoder.out_dim()
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.input_dim() {
            return Err(Error::shape(self.input_dim(), len));
        }
        Ok(())
    }

    /// Inference-mode embedding of one flattened career.
    pub fn encode(&self, flat: ArrayView1<T>) -> Result<Array1<T>> {
        self.check_len(flat.len())?;
        let out = self.encoder.forward_infer(flat.insert_axis(Axis(0)))?;
        Ok(out.row(0).to_owned())
    }

    pub fn encode_batch(&self, flat: &Array2<T>) -> Result<Array2<T>> {
        self.check_len(flat.ncols())?;
        self.encoder.forward_infer(flat.view())
    }

    /// ‖x − decode(encode(x))‖² / input length.
    pub fn reconstruction_error(&self, flat: ArrayView1<T>) -> Result<T> {
        self.check_len(flat.len())?;
        let recon = self.predict(&flat.insert_axis(Axis(0)).to_owned())?;
        let sq: T = recon
            .row(0)
            .iter()
            .zip(flat.iter())
            .map(|(&r, &x)| (x - r) * (x - r))
            .sum();
        Ok(sq / T::of_usize(flat.len()))
    }

    pub fn to_document(&self, meta: BTreeMap<String, String>) -> ModelDocument {
        let mut layers = stack_to_layers("encoder", &self.encoder);
        layers.extend(stack_to_layers("decoder", &self.decoder));
        ModelDocument::new(KIND, meta, layers)
    }

    pub fn from_document(doc: &ModelDocument) -> Result<Self> {
        doc.expect_kind(KIND)?;
        Self::from_stacks(
            stack_from_layers("encoder", &doc.layers)?,
            stack_from_layers("decoder", &doc.layers)?,
        )
    }
}

impl<T: Scalar> Network<T> for AutoencoderModel<T> {
    type Input = Array2<T>;
    type Cache = AutoencoderCache<T>;

    fn forward_train(&mut self, input: &Array2<T>, rng: &mut PipelineRng) -> Result<(Array2<T>, Self::Cache)> {
        let (z, encoder) = self.encoder.forward_train(input.view(), rng)?;
        let (out, decoder) = self.decoder.forward_train(z.view(), rng)?;
        Ok((out, AutoencoderCache { encoder, decoder }))
    }

    fn backward(&self, cache: &Self::Cache, grad_output: &Array2<T>) -> Result<Grads<T>> {
        let (grad_z, mut dec) = self.decoder.backward_full(&cache.decoder, grad_output)?;
        let (_, mut grads) = self.encoder.backward_full(&cache.encoder, &grad_z)?;
        grads.append(&mut dec);
        Ok(grads)
    }

    fn predict(&self, input: &Array2<T>) -> Result<Array2<T>> {
        let z = self.encoder.forward_infer(input.view())?;
        self.decoder.forward_infer(z.view())
    }

    fn params(&self) -> Vec<&[T]> {
        let mut p = self.encoder.params();
        p.extend(self.decoder.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut [T]> {
        let mut p = self.encoder.params_mut();
        p.extend(self.decoder.params_mut());
        p
    }
}

/// Row-major flattening: the age-22 row first, so entry (r, c) lands at `r * width + c`.
pub fn flatten_sequence(input: &Array2<f64>) -> Array1<f64> {
    input.iter().copied().collect()
}

pub fn reshape_flat(flat: &Array1<f64>, rows: usize, cols: usize) -> Result<Array2<f64>> {
    Array2::from_shape_vec((rows, cols), flat.to_vec()).map_err(|_| Error::shape(rows * cols, flat.len()))
}

/// `n × (7·width)` matrix of flattened inputs.
pub fn flatten_batch<T: Scalar>(seqs: &[CareerSequence]) -> Array2<T> {
    let width = seqs.first().map_or(0, |s| s.input.len());
    let mut out = Array2::zeros((seqs.len(), width));
    for (mut row, s) in out.rows_mut().into_iter().zip(seqs) {
        row.iter_mut()
            .zip(s.input.iter())
            .for_each(|(o, &v)| *o = T::of(v));
    }
    out
}

/// Trains on flattened inputs, initialising from the `autoencoder/init` stream.
pub fn ae_train_on<T: Scalar>(inputs: &Array2<T>, config: &TrainConfig) -> Result<(AutoencoderModel<T>, TrainOutcome)> {
    let mut model = AutoencoderModel::new(inputs.ncols(), &mut substream(config.seed, "autoencoder/init"));
    let outcome = train_loop(&mut model, inputs, inputs, config)?;
    Ok((model, outcome))
}

/// Trains on the training split only.
pub fn ae_train<T: Scalar>(dataset: &Dataset, config: &TrainConfig) -> Result<(AutoencoderModel<T>, TrainOutcome)> {
    if dataset.train.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    ae_train_on(&flatten_batch(&dataset.train), config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::grad_check;

    #[test]
    fn flatten_layout() {
        let m = Array2::from_shape_fn((7, 48), |(r, c)| (r * 1000 + c) as f64);
        let f = flatten_sequence(&m);
        assert_eq!(f.len(), 336);
        assert_eq!(f[0], m[[0, 0]]);
        assert_eq!(f[48], m[[1, 0]]);
        assert_eq!(reshape_flat(&f, 7, 48).unwrap(), m);
    }

    #[test]
    fn embedding_width_and_determinism() {
        let model = AutoencoderModel::<f64>::new(336, &mut substream(1, "t"));
        let x = Array1::from_shape_fn(336, |i| (i as f64 * 0.1).sin());
        let a = model.encode(x.view()).unwrap();
        assert_eq!(a.len(), 64);
        assert_eq!(a, model.encode(x.view()).unwrap());
        assert_eq!(model.decoder().out_dim(), 336);
    }

    #[test]
    fn wrong_length_rejected() {
        let model = AutoencoderModel::<f64>::new(336, &mut substream(1, "t"));
        assert!(model.encode(Array1::zeros(335).view()).is_err());
        assert!(model.reconstruction_error(Array1::zeros(337).view()).is_err());
    }

    #[test]
    fn zero_model_reconstructs_zero_exactly() {
        let model = AutoencoderModel::<f64>::zeros(336, 128, 64);
        let e = model.reconstruction_error(Array1::zeros(336).view()).unwrap();
        assert_eq!(e, 0.0);
    }

    #[test]
    fn small_autoencoder_gradients() {
        let mut rng = substream(4, "t");
        let model = AutoencoderModel::<f64>::with_dims(12, 8, 5, &mut rng);
        let x = Array2::from_shape_fn((6, 12), |(i, j)| ((i * 13 + j * 7) % 9) as f64 / 4.0 - 1.0);
        let report = grad_check(&model, &x, &x, 1e-5, 4).unwrap();
        assert!(report.max_relative_error < 1e-4, "{report:?}");
    }

    #[test]
    fn document_round_trip() {
        let model = AutoencoderModel::<f64>::with_dims(10, 6, 4, &mut substream(2, "t"));
        let doc = model.to_document(BTreeMap::new());
        let back = AutoencoderModel::from_document(&ModelDocument::from_json(&doc.to_json().unwrap()).unwrap()).unwrap();
        assert_eq!(back, model);
    }
}
