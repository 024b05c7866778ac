//! Versioned JSON model documents.
//!
//! A document carries a `kind` tag, free-form string metadata (hashes of
//! the artifacts a model was trained against) and an ordered list of
//! layers. Every tensor is stored as its shape plus a flat row-major value
//! array. Values are written with the shortest decimal representation that
//! parses back to the same double, so save → load is bit-exact.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{BatchNorm, Dense, Dropout, Layer, Lstm, Sequential};
use crate::{Error, Result, Scalar};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format_version: u32,
    pub kind: String,
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
    pub layers: Vec<LayerParams>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Dense,
    Batchnorm,
    Dropout,
    Relu,
    Lstm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub name: String,
    pub kind: LayerKind,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub settings: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tensors: Vec<Tensor>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl Tensor {
    fn from_array<T: Scalar, D: ndarray::Dimension>(name: &str, a: &ndarray::Array<T, D>) -> Self {
        Self {
            name: name.to_string(),
            shape: a.shape().to_vec(),
            values: a.iter().map(|v| v.as_f64()).collect(),
        }
    }

    fn check(&self) -> Result<()> {
        let expected: usize = self.shape.iter().product();
        if expected != self.values.len() {
            return Err(Error::Artifact(format!(
                "tensor `{}` has shape {:?} but {} values",
                self.name,
                self.shape,
                self.values.len()
            )));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Artifact(format!("tensor `{}` holds non-finite values", self.name)));
        }
        Ok(())
    }

    fn to_matrix<T: Scalar>(&self) -> Result<Array2<T>> {
        self.check()?;
        if self.shape.len() != 2 {
            return Err(Error::Artifact(format!("tensor `{}` must be 2-D", self.name)));
        }
        Array2::from_shape_vec(
            (self.shape[0], self.shape[1]),
            self.values.iter().map(|&v| T::of(v)).collect(),
        )
        .map_err(|e| Error::Artifact(e.to_string()))
    }

    fn to_vector<T: Scalar>(&self) -> Result<Array1<T>> {
        self.check()?;
        if self.shape.len() != 1 {
            return Err(Error::Artifact(format!("tensor `{}` must be 1-D", self.name)));
        }
        Ok(self.values.iter().map(|&v| T::of(v)).collect())
    }
}

impl LayerParams {
    fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Artifact(format!("layer `{}` lacks tensor `{name}`", self.name)))
    }

    fn setting(&self, name: &str) -> Result<f64> {
        self.settings
            .get(name)
            .copied()
            .ok_or_else(|| Error::Artifact(format!("layer `{}` lacks setting `{name}`", self.name)))
    }

    pub fn from_layer<T: Scalar>(name: String, layer: &Layer<T>) -> Self {
        let (kind, settings, tensors) = match layer {
            Layer::Dense(d) => (
                LayerKind::Dense,
                BTreeMap::new(),
                vec![Tensor::from_array("weight", d.weight()), Tensor::from_array("bias", d.bias())],
            ),
            Layer::BatchNorm(b) => (
                LayerKind::Batchnorm,
                BTreeMap::from([
                    ("momentum".to_string(), b.momentum().as_f64()),
                    ("epsilon".to_string(), b.epsilon().as_f64()),
                ]),
                vec![
                    Tensor::from_array("scale", b.scale()),
                    Tensor::from_array("shift", b.shift()),
                    Tensor::from_array("running_mean", b.running_mean()),
                    Tensor::from_array("running_var", b.running_var()),
                ],
            ),
            Layer::Dropout(d) => (
                LayerKind::Dropout,
                BTreeMap::from([("rate".to_string(), d.rate())]),
                vec![],
            ),
            Layer::Relu => (LayerKind::Relu, BTreeMap::new(), vec![]),
        };
        Self {
            name,
            kind,
            settings,
            tensors,
        }
    }

    pub fn to_layer<T: Scalar>(&self) -> Result<Layer<T>> {
        Ok(match self.kind {
            LayerKind::Dense => Layer::Dense(Dense::new(
                self.tensor("weight")?.to_matrix()?,
                self.tensor("bias")?.to_vector()?,
            )?),
            LayerKind::Batchnorm => Layer::BatchNorm(BatchNorm::from_parts(
                self.tensor("scale")?.to_vector()?,
                self.tensor("shift")?.to_vector()?,
                self.tensor("running_mean")?.to_vector()?,
                self.tensor("running_var")?.to_vector()?,
                T::of(self.setting("momentum")?),
                T::of(self.setting("epsilon")?),
            )?),
            LayerKind::Dropout => Layer::Dropout(Dropout::new(self.setting("rate")?)?),
            LayerKind::Relu => Layer::Relu,
            LayerKind::Lstm => {
                return Err(Error::Artifact(format!(
                    "layer `{}` is an LSTM, not a feed-forward layer",
                    self.name
                )))
            }
        })
    }

    pub fn from_lstm<T: Scalar>(name: String, lstm: &Lstm<T>) -> Self {
        Self {
            name,
            kind: LayerKind::Lstm,
            settings: BTreeMap::new(),
            tensors: vec![
                Tensor::from_array("w_input", lstm.w_input()),
                Tensor::from_array("w_hidden", lstm.w_hidden()),
                Tensor::from_array("bias", lstm.bias()),
            ],
        }
    }

    pub fn to_lstm<T: Scalar>(&self) -> Result<Lstm<T>> {
        if self.kind != LayerKind::Lstm {
            return Err(Error::Artifact(format!("layer `{}` is not an LSTM", self.name)));
        }
        Lstm::new(
            self.tensor("w_input")?.to_matrix()?,
            self.tensor("w_hidden")?.to_matrix()?,
            self.tensor("bias")?.to_vector()?,
        )
    }
}

/// Serialises a stack as layers named `{prefix}.{index}`.
pub fn stack_to_layers<T: Scalar>(prefix: &str, stack: &Sequential<T>) -> Vec<LayerParams> {
    stack
        .layers()
        .iter()
        .enumerate()
        .map(|(i, l)| LayerParams::from_layer(format!("{prefix}.{i}"), l))
        .collect()
}

/// Rebuilds the stack whose layers are named `{prefix}.*`, in document order.
pub fn stack_from_layers<T: Scalar>(prefix: &str, layers: &[LayerParams]) -> Result<Sequential<T>> {
    let head = format!("{prefix}.");
    let selected: Vec<Layer<T>> = layers
        .iter()
        .filter(|l| l.name.starts_with(&head))
        .map(|l| l.to_layer())
        .collect::<Result<_>>()?;
    if selected.is_empty() {
        return Err(Error::Artifact(format!("document has no `{prefix}` layers")));
    }
    Sequential::new(selected)
}

impl ModelDocument {
    pub fn new(kind: &str, meta: BTreeMap<String, String>, layers: Vec<LayerParams>) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            kind: kind.to_string(),
            meta,
            layers,
        }
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Artifact(format!(
                "unsupported model format version {} (expected {FORMAT_VERSION})",
                self.format_version
            )));
        }
        if self.kind != kind {
            return Err(Error::Artifact(format!(
                "expected a `{kind}` model, found `{}`",
                self.kind
            )));
        }
        Ok(())
    }

    pub fn meta_value(&self, key: &str) -> Result<&str> {
        self.meta
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Artifact(format!("model metadata lacks `{key}`")))
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
