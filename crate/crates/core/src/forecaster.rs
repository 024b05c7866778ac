//! Stage two: an LSTM over the 7-season input whose final hidden state,
//! optionally joined with a one-hot cluster code, feeds a small dense head
//! predicting BPM at ages 29, 30 and 31.
//!
//! With `k = 0` the same model is the cluster-free "standard LSTM".

use std::collections::BTreeMap;

use ndarray::{concatenate, s, Array1, Array2, Array3, ArrayView1, ArrayView2, Axis};

use crate::artifact::json_hash;
use crate::autoencoder::{flatten_batch, AutoencoderModel};
use crate::clustering::{assign, one_hot, ClusterModel};
use crate::ingest::{CareerSequence, Dataset};
use crate::nn::serial::{stack_from_layers, stack_to_layers, LayerParams, ModelDocument};
use crate::nn::{
    train_loop, Batch, Dense, Grads, Layer, Lstm, LstmCache, Network, Sequential, SequentialCache,
    TrainConfig, TrainOutcome,
};
use crate::rng::{substream, PipelineRng};
use crate::{Error, Result, Scalar, INPUT_SEASONS, TARGET_SEASONS};

pub const HIDDEN_UNITS: usize = 64;
pub const HEAD_WIDTHS: [usize; 2] = [32, 16];
pub const KIND: &str = "stage2-forecaster";

/// Sequences plus the per-row conditioning code (zero columns when unconditioned).
#[derive(Clone, Debug)]
pub struct SeqBatch<T> {
    /// `batch × steps × features`
    pub sequences: Array3<T>,
    /// `batch × k`
    pub conditioning: Array2<T>,
}

impl<T: Clone> Batch for SeqBatch<T> {
    fn batch_len(&self) -> usize {
        self.sequences.len_of(Axis(0))
    }

    fn take_rows(&self, rows: &[usize]) -> Self {
        Self {
            sequences: self.sequences.select(Axis(0), rows),
            conditioning: self.conditioning.select(Axis(0), rows),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForecasterModel<T> {
    lstm: Lstm<T>,
    head: Sequential<T>,
    k: usize,
}

#[derive(Clone, Debug)]
pub struct ForecasterCache<T> {
    lstm: LstmCache<T>,
    head: SequentialCache<T>,
}

fn head_stack<T: Scalar>(dense: [Dense<T>; 3]) -> Sequential<T> {
    let [a, b, c] = dense;
    Sequential::new(vec![
        Layer::Dense(a),
        Layer::Relu,
        Layer::Dense(b),
        Layer::Relu,
        Layer::Dense(c),
    ])
    .expect("consistent widths")
}

impl<T: Scalar> ForecasterModel<T> {
    /// Production widths: 64 hidden units, head (64+k)→32→16→3.
    pub fn new(features: usize, k: usize, rng: &mut PipelineRng) -> Self {
        Self::with_dims(features, HIDDEN_UNITS, k, rng)
    }

    pub fn with_dims(features: usize, hidden: usize, k: usize, rng: &mut PipelineRng) -> Self {
        let lstm = Lstm::glorot(features, hidden, rng);
        let head = head_stack([
            Dense::glorot(hidden + k, HEAD_WIDTHS[0], rng),
            Dense::glorot(HEAD_WIDTHS[0], HEAD_WIDTHS[1], rng),
            Dense::glorot(HEAD_WIDTHS[1], TARGET_SEASONS, rng),
        ]);
        Self { lstm, head, k }
    }

    pub fn from_parts(lstm: Lstm<T>, head: Sequential<T>, k: usize) -> Result<Self> {
        if head.in_dim() != lstm.hidden_dim() + k {
            return Err(Error::Config(format!(
                "head input width {} does not match {} hidden units + k = {k}",
                head.in_dim(),
                lstm.hidden_dim()
            )));
        }
        if head.out_dim() != TARGET_SEASONS {
            return Err(Error::shape(TARGET_SEASONS, head.out_dim()));
        }
        Ok(Self { lstm, head, k })
    }

    pub fn lstm(&self) -> &Lstm<T> {
        &self.lstm
    }

    pub fn head(&self) -> &Sequential<T> {
        &self.head
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn is_conditioned(&self) -> bool {
        self.k > 0
    }

    pub fn features(&self) -> usize {
        self.lstm.input_dim()
    }

    fn check_batch(&self, batch: &SeqBatch<T>) -> Result<()> {
        let (n, steps, width) = batch.sequences.dim();
        if steps != INPUT_SEASONS || width != self.features() {
            return Err(Error::shape((INPUT_SEASONS, self.features()), (steps, width)));
        }
        if batch.conditioning.dim() != (n, self.k) {
            return Err(Error::shape((n, self.k), batch.conditioning.dim()));
        }
        Ok(())
    }

    /// One player: a normalised 7×F matrix and, for conditioned models, the one-hot code.
    pub fn predict_one(&self, seq: ArrayView2<T>, code: Option<ArrayView1<T>>) -> Result<Array1<T>> {
        let code = match (code, self.k) {
            (None, 0) => Array2::zeros((1, 0)),
            (Some(c), k) if k > 0 && c.len() == k => c.to_owned().insert_axis(Axis(0)),
            (c, k) => {
                return Err(Error::shape(k, c.map_or(0, |c| c.len())));
            }
        };
        let batch = SeqBatch {
            sequences: seq.to_owned().insert_axis(Axis(0)),
            conditioning: code,
        };
        Ok(self.predict(&batch)?.row(0).to_owned())
    }

    pub fn to_document(&self, meta: BTreeMap<String, String>) -> ModelDocument {
        let mut layers = vec![LayerParams::from_lstm("lstm".into(), &self.lstm)];
        layers.extend(stack_to_layers("head", &self.head));
        let mut meta = meta;
        meta.insert("k".into(), self.k.to_string());
        ModelDocument::new(KIND, meta, layers)
    }

    pub fn from_document(doc: &ModelDocument) -> Result<Self> {
        doc.expect_kind(KIND)?;
        let k: usize = doc
            .meta_value("k")?
            .parse()
            .map_err(|_| Error::Artifact("meta k is not an integer".into()))?;
        let lstm = doc
            .layers
            .iter()
            .find(|l| l.name == "lstm")
            .ok_or_else(|| Error::Artifact("forecaster document has no lstm layer".into()))?
            .to_lstm()?;
        Self::from_parts(lstm, stack_from_layers("head", &doc.layers)?, k)
    }
}

impl<T: Scalar> Network<T> for ForecasterModel<T> {
    type Input = SeqBatch<T>;
    type Cache = ForecasterCache<T>;

    fn forward_train(&mut self, input: &SeqBatch<T>, rng: &mut PipelineRng) -> Result<(Array2<T>, Self::Cache)> {
        self.check_batch(input)?;
        let (h, lstm) = self.lstm.forward_sequence(input.sequences.view())?;
        let joined = concatenate![Axis(1), h, input.conditioning];
        let (out, head) = self.head.forward_train(joined.view(), rng)?;
        Ok((out, ForecasterCache { lstm, head }))
    }

    fn backward(&self, cache: &Self::Cache, grad_output: &Array2<T>) -> Result<Grads<T>> {
        let (grad_joined, head) = self.head.backward_full(&cache.head, grad_output)?;
        let hd = self.lstm.hidden_dim();
        let g = self.lstm.backward(&cache.lstm, grad_joined.slice(s![.., 0..hd]));
        let mut grads = vec![
            g.w_input.iter().copied().collect(),
            g.w_hidden.iter().copied().collect(),
            g.bias.to_vec(),
        ];
        grads.extend(head);
        Ok(grads)
    }

    fn predict(&self, input: &SeqBatch<T>) -> Result<Array2<T>> {
        self.check_batch(input)?;
        let h = self.lstm.final_hidden(input.sequences.view())?;
        let joined = concatenate![Axis(1), h, input.conditioning];
        self.head.forward_infer(joined.view())
    }

    fn params(&self) -> Vec<&[T]> {
        let mut p: Vec<&[T]> = self.lstm.param_slices().into();
        p.extend(self.head.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut [T]> {
        let mut p: Vec<&mut [T]> = self.lstm.param_slices_mut().into();
        p.extend(self.head.params_mut());
        p
    }
}

/// Cluster index of every sequence, via inference-mode embedding and nearest centroid.
pub fn cluster_labels<T: Scalar>(
    autoencoder: &AutoencoderModel<T>,
    clusters: &ClusterModel<T>,
    seqs: &[CareerSequence],
) -> Result<BTreeMap<String, usize>> {
    if seqs.is_empty() {
        return Ok(BTreeMap::new());
    }
    let z = autoencoder.encode_batch(&flatten_batch(seqs))?;
    seqs.iter()
        .zip(z.rows())
        .map(|(s, row)| Ok((s.player_id.clone(), assign(clusters, row)?)))
        .collect()
}

/// Packs sequences into a batch; `labels` must cover every player when `k > 0`.
pub fn make_batch<T: Scalar>(
    seqs: &[CareerSequence],
    labels: Option<&BTreeMap<String, usize>>,
    k: usize,
) -> Result<SeqBatch<T>> {
    let width = seqs.first().map_or(0, |s| s.input.ncols());
    let mut sequences = Array3::zeros((seqs.len(), INPUT_SEASONS, width));
    let mut conditioning = Array2::zeros((seqs.len(), k));
    for (i, s) in seqs.iter().enumerate() {
        if s.input.dim() != (INPUT_SEASONS, width) {
            return Err(Error::shape((INPUT_SEASONS, width), s.input.dim()));
        }
        sequences
            .index_axis_mut(Axis(0), i)
            .zip_mut_with(&s.input, |o, &v| *o = T::of(v));
        if k > 0 {
            let labels = labels.ok_or_else(|| Error::Config("conditioned model needs cluster labels".into()))?;
            let c = *labels
                .get(&s.player_id)
                .ok_or_else(|| Error::Config(format!("no cluster label for player {}", s.player_id)))?;
            conditioning.row_mut(i).assign(&one_hot::<T>(c, k)?);
        }
    }
    Ok(SeqBatch { sequences, conditioning })
}

pub fn target_matrix<T: Scalar>(seqs: &[CareerSequence]) -> Array2<T> {
    Array2::from_shape_fn((seqs.len(), TARGET_SEASONS), |(i, j)| T::of(seqs[i].target[j]))
}

/// Trains on prepared sequences; `k = 0` gives the standard LSTM.
pub fn forecaster_train_on<T: Scalar>(
    seqs: &[CareerSequence],
    labels: Option<&BTreeMap<String, usize>>,
    k: usize,
    config: &TrainConfig,
) -> Result<(ForecasterModel<T>, TrainOutcome)> {
    let batch = make_batch(seqs, labels, k)?;
    let features = batch.sequences.len_of(Axis(2));
    let mut model = ForecasterModel::new(features, k, &mut substream(config.seed, "forecaster/init"));
    let outcome = train_loop(&mut model, &batch, &target_matrix(seqs), config)?;
    Ok((model, outcome))
}

/// Trains on the training split. Passing stage-one models gives the
/// conditioned variant; `None` gives the standard LSTM.
pub fn forecaster_train<T: Scalar>(
    dataset: &Dataset,
    stage1: Option<(&AutoencoderModel<T>, &ClusterModel<T>)>,
    config: &TrainConfig,
) -> Result<(ForecasterModel<T>, TrainOutcome)> {
    if dataset.train.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    match stage1 {
        None => forecaster_train_on(&dataset.train, None, 0, config),
        Some((ae, clusters)) => {
            if clusters.centroids.ncols() != ae.embedding_dim() {
                return Err(Error::Config(format!(
                    "cluster centroids have width {} but embeddings have {}",
                    clusters.centroids.ncols(),
                    ae.embedding_dim()
                )));
            }
            let labels = cluster_labels(ae, clusters, &dataset.train)?;
            forecaster_train_on(&dataset.train, Some(&labels), clusters.k, config)
        }
    }
}

/// Predictions keyed by player id, in raw BPM units.
pub fn predict_batch<T: Scalar>(
    model: &ForecasterModel<T>,
    seqs: &[CareerSequence],
    labels: Option<&BTreeMap<String, usize>>,
) -> Result<BTreeMap<String, [f64; 3]>> {
    if seqs.is_empty() {
        return Ok(BTreeMap::new());
    }
    let out = model.predict(&make_batch(seqs, labels, model.k())?)?;
    Ok(seqs
        .iter()
        .zip(out.rows())
        .map(|(s, r)| (s.player_id.clone(), [r[0].as_f64(), r[1].as_f64(), r[2].as_f64()]))
        .collect())
}

/// Metadata tying a forecaster to the data scaling and cluster model it was trained with.
pub fn provenance_meta<T: Scalar + serde::Serialize>(
    dataset: &Dataset,
    clusters: Option<&ClusterModel<T>>,
) -> Result<BTreeMap<String, String>> {
    let mut meta = BTreeMap::new();
    meta.insert("norm_hash".into(), dataset.norm_hash()?);
    meta.insert(
        "cluster_hash".into(),
        match clusters {
            Some(c) => json_hash(c)?,
            None => "none".into(),
        },
    );
    Ok(meta)
}

/// Rejects a document recorded against different scaling or clusters.
pub fn check_provenance(doc: &ModelDocument, expected: &BTreeMap<String, String>) -> Result<()> {
    for (key, want) in expected {
        let got = doc.meta_value(key)?;
        if got != want {
            return Err(Error::Artifact(format!("{key} mismatch: model has {got}, expected {want}")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::grad_check;
    use approx::assert_abs_diff_eq;

    fn batch(n: usize, features: usize, k: usize, seed: u64) -> SeqBatch<f64> {
        use rand::Rng;
        let mut rng = substream(seed, "test/batch");
        let sequences = Array3::from_shape_simple_fn((n, INPUT_SEASONS, features), || rng.random_range(-1.0..1.0));
        let conditioning = Array2::from_shape_fn((n, k), |(i, j)| if i % k.max(1) == j { 1.0 } else { 0.0 });
        SeqBatch { sequences, conditioning }
    }

    #[test]
    fn head_widths() {
        let rng = &mut substream(0, "t");
        let standard = ForecasterModel::<f64>::new(48, 0, rng);
        assert_eq!(standard.head().in_dim(), 64);
        let conditioned = ForecasterModel::<f64>::new(48, 2, rng);
        assert_eq!(conditioned.head().in_dim(), 66);
        assert_eq!(conditioned.head().out_dim(), 3);
    }

    #[test]
    fn k_mismatch_is_config_error() {
        let rng = &mut substream(0, "t");
        let m = ForecasterModel::<f64>::new(4, 2, rng);
        let err = ForecasterModel::from_parts(m.lstm().clone(), m.head().clone(), 3).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn predict_checks_code() {
        let rng = &mut substream(0, "t");
        let m = ForecasterModel::<f64>::new(4, 2, rng);
        let seq = Array2::zeros((7, 4));
        assert!(m.predict_one(seq.view(), None).is_err());
        assert!(m.predict_one(seq.view(), Some(Array1::zeros(3).view())).is_err());
        let a = m.predict_one(seq.view(), Some(one_hot(1, 2).unwrap().view())).unwrap();
        let b = m.predict_one(seq.view(), Some(one_hot(1, 2).unwrap().view())).unwrap();
        assert_eq!(a.len(), 3);
        assert_eq!(a, b);
        assert!(m.predict_one(Array2::zeros((6, 4)).view(), Some(one_hot(1, 2).unwrap().view())).is_err());
    }

    #[test]
    fn gradcheck_conditioned() {
        let mut model = ForecasterModel::<f64>::with_dims(5, 6, 2, &mut substream(3, "t"));
        // non-zero biases so the ReLU kinks are unlikely to sit at zero
        for p in model.params_mut() {
            p.iter_mut().enumerate().for_each(|(i, v)| *v += 0.01 * ((i % 7) as f64 - 3.0));
        }
        let x = batch(4, 5, 2, 1);
        let y = Array2::from_shape_fn((4, 3), |(i, j)| (i as f64) - (j as f64) * 0.5);
        let report = grad_check(&model, &x, &y, 1e-6, 0).unwrap();
        assert!(report.max_relative_error < 1e-4, "{report:?}");
    }

    #[test]
    fn swapping_labels_and_columns_is_symmetric() {
        let model = ForecasterModel::<f64>::with_dims(4, 8, 2, &mut substream(9, "t"));
        let Layer::Dense(first) = &model.head().layers()[0] else { panic!() };
        let mut w = first.weight().clone();
        let (a, b) = (8, 9);
        for r in 0..w.nrows() {
            w.swap([r, a], [r, b]);
        }
        let mut layers = model.head().layers().to_vec();
        layers[0] = Layer::Dense(Dense::new(w, first.bias().clone()).unwrap());
        let swapped = ForecasterModel::from_parts(model.lstm().clone(), Sequential::new(layers).unwrap(), 2).unwrap();

        let x = batch(6, 4, 2, 2);
        let mut flipped = x.clone();
        flipped.conditioning.mapv_inplace(|v| 1.0 - v);
        let p = model.predict(&x).unwrap();
        let q = swapped.predict(&flipped).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn document_round_trip() {
        let model = ForecasterModel::<f64>::with_dims(4, 5, 3, &mut substream(2, "t"));
        let doc = model.to_document(BTreeMap::new());
        assert_eq!(doc.meta_value("k").unwrap(), "3");
        let back = ForecasterModel::from_document(&ModelDocument::from_json(&doc.to_json().unwrap()).unwrap()).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn provenance_mismatch_rejected() {
        let model = ForecasterModel::<f64>::with_dims(4, 5, 0, &mut substream(2, "t"));
        let meta: BTreeMap<String, String> = [("norm_hash".to_string(), "abc".to_string())].into();
        let doc = model.to_document(meta.clone());
        check_provenance(&doc, &meta).unwrap();
        let other: BTreeMap<String, String> = [("norm_hash".to_string(), "def".to_string())].into();
        assert!(matches!(check_provenance(&doc, &other), Err(Error::Artifact(_))));
    }

    fn toy_sequences(n: usize, shift: f64) -> Vec<CareerSequence> {
        use rand::Rng;
        let mut rng = substream(11, "test/toy");
        (0..n)
            .map(|i| {
                let input = Array2::from_shape_simple_fn((7, 3), || rng.random_range(-1.0..1.0));
                let m = input.column(0).mean().unwrap();
                CareerSequence {
                    player_id: format!("p{i:03}"),
                    player_name: String::new(),
                    target: [2.0 * m + shift, m + shift, -m + shift],
                    last_bpm: 0.0,
                    input,
                    category: None,
                }
            })
            .collect()
    }

    #[test]
    fn shifted_targets_shift_predictions() {
        let config = TrainConfig {
            max_epochs: 150,
            learning_rate: 1e-2,
            patience: 30,
            ..TrainConfig::default()
        };
        let base = toy_sequences(200, 0.0);
        let shifted = toy_sequences(200, 5.0);
        let (m0, _) = forecaster_train_on::<f64>(&base, None, 0, &config).unwrap();
        let (m1, _) = forecaster_train_on::<f64>(&shifted, None, 0, &config).unwrap();
        let p0 = predict_batch(&m0, &base, None).unwrap();
        let p1 = predict_batch(&m1, &base, None).unwrap();
        let mean_gap: f64 = p0
            .values()
            .zip(p1.values())
            .map(|(a, b)| (0..3).map(|j| b[j] - a[j]).sum::<f64>() / 3.0)
            .sum::<f64>()
            / p0.len() as f64;
        assert_abs_diff_eq!(mean_gap, 5.0, epsilon = 0.1);
    }

    #[test]
    fn batch_prediction_is_order_independent() {
        let seqs = toy_sequences(12, 0.0);
        let model = ForecasterModel::<f64>::with_dims(3, 8, 2, &mut substream(5, "t"));
        let labels: BTreeMap<String, usize> = seqs.iter().enumerate().map(|(i, s)| (s.player_id.clone(), i % 2)).collect();
        let all = predict_batch(&model, &seqs, Some(&labels)).unwrap();
        let mut rev = seqs.clone();
        rev.reverse();
        assert_eq!(predict_batch(&model, &rev, Some(&labels)).unwrap(), all);
        let single = predict_batch(&model, &seqs[3..4], Some(&labels)).unwrap();
        assert_eq!(single[&seqs[3].player_id], all[&seqs[3].player_id]);
        let missing = BTreeMap::new();
        assert!(predict_batch(&model, &seqs, Some(&missing)).is_err());
    }
}
