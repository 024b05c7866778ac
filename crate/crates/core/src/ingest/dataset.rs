use std::collections::BTreeMap;
use std::path::Path;

use log::warn;
use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{CareerSequence, CellSource, FeatureSchema, SeasonRecord};
use crate::artifact::sha256_hex;
use crate::rng::substream;
use crate::{Error, Result, FIRST_INPUT_AGE, INPUT_SEASONS, TARGET_AGES};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStat {
    pub mean: f64,
    pub std: f64,
}

/// Normalised train/test careers plus everything needed to normalise new
/// inputs the same way.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub schema_hash: String,
    /// Retained features, in schema order.
    pub feature_names: Vec<String>,
    /// Schema index of each retained feature.
    pub kept_columns: Vec<usize>,
    /// Features that were constant over the training inputs.
    pub dropped_features: Vec<String>,
    /// Train-split z-score parameters, one per retained feature.
    pub norm_stats: Vec<NormStat>,
    pub seed: u64,
    pub test_fraction: f64,
    pub train: Vec<CareerSequence>,
    pub test: Vec<CareerSequence>,
}

/// One sequence per player from rows covering ages 22–28 plus observed BPM
/// at 29–31.
pub fn build_sequences(
    complete: &BTreeMap<String, Vec<SeasonRecord>>,
    schema: &FeatureSchema,
) -> Result<Vec<CareerSequence>> {
    let bpm = schema.target_index();
    let width = schema.len();
    complete
        .iter()
        .map(|(id, rows)| {
            let broken = |what: String| Error::Invariant(format!("player `{id}`: {what}"));
            let mut input = Array2::zeros((INPUT_SEASONS, width));
            for (i, age) in (FIRST_INPUT_AGE..).take(INPUT_SEASONS).enumerate() {
                let row = rows
                    .iter()
                    .find(|r| r.age == age)
                    .ok_or_else(|| broken(format!("no row for age {age}")))?;
                if row.features.len() != width {
                    return Err(broken(format!("age {age} row has {} features", row.features.len())));
                }
                for (j, v) in row.features.iter().enumerate() {
                    input[[i, j]] = v.ok_or_else(|| {
                        broken(format!("`{}` still missing at age {age}", schema.names[j]))
                    })?;
                }
            }
            let mut target = [0.0; 3];
            for (k, &age) in TARGET_AGES.iter().enumerate() {
                target[k] = rows
                    .iter()
                    .find(|r| r.age == age && r.sources.get(bpm) == Some(&CellSource::Observed))
                    .and_then(|r| r.features[bpm])
                    .ok_or_else(|| broken(format!("no observed BPM at age {age}")))?;
            }
            let first = &rows[0];
            Ok(CareerSequence {
                player_id: id.clone(),
                player_name: first.player_name.clone(),
                last_bpm: input[[INPUT_SEASONS - 1, bpm]],
                input,
                target,
                category: rows.iter().find_map(|r| r.category),
            })
        })
        .collect()
}

/// Seeded player-level split, then z-scoring with train-only statistics.
///
/// Targets stay in raw BPM units. Features that are constant over the
/// training inputs are removed from both splits.
pub fn split_and_normalize(
    sequences: Vec<CareerSequence>,
    schema: &FeatureSchema,
    test_fraction: f64,
    seed: u64,
) -> Result<Dataset> {
    let n = sequences.len();
    if n < 2 {
        return Err(Error::Split(format!("need at least 2 players to split, got {n}")));
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Split(format!("test_fraction must lie in (0, 1), got {test_fraction}")));
    }
    for s in &sequences {
        s.check(schema.len())?;
    }
    let n_test = ((test_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut substream(seed, "ingest/split"));
    let is_test: Vec<bool> = {
        let mut flags = vec![false; n];
        for &i in &order[..n_test] {
            flags[i] = true;
        }
        flags
    };
    let (mut test, mut train): (Vec<_>, Vec<_>) = sequences
        .into_iter()
        .zip(is_test)
        .partition(|(_, t)| *t);
    let mut train: Vec<CareerSequence> = train.drain(..).map(|(s, _)| s).collect();
    let mut test: Vec<CareerSequence> = test.drain(..).map(|(s, _)| s).collect();
    train.sort_by(|a, b| a.player_id.cmp(&b.player_id));
    test.sort_by(|a, b| a.player_id.cmp(&b.player_id));

    let stacked = ndarray::concatenate(
        Axis(0),
        &train.iter().map(|s| s.input.view()).collect::<Vec<_>>(),
    )
    .expect("uniform widths");
    let mean = stacked.mean_axis(Axis(0)).expect("non-empty");
    let std = stacked.std_axis(Axis(0), 0.0);

    let mut kept_columns = Vec::new();
    let mut dropped_features = Vec::new();
    let mut norm_stats = Vec::new();
    for j in 0..schema.len() {
        if std[j] <= 1e-12 * mean[j].abs().max(1.0) {
            warn!("dropping feature `{}`: constant over the training inputs", schema.names[j]);
            dropped_features.push(schema.names[j].clone());
        } else {
            kept_columns.push(j);
            norm_stats.push(NormStat {
                mean: mean[j],
                std: std[j],
            });
        }
    }

    let mut dataset = Dataset {
        schema_hash: schema.hash(),
        feature_names: kept_columns.iter().map(|&j| schema.names[j].clone()).collect(),
        kept_columns,
        dropped_features,
        norm_stats,
        seed,
        test_fraction,
        train: Vec::new(),
        test: Vec::new(),
    };
    for s in train.iter_mut().chain(test.iter_mut()) {
        s.input = dataset.normalize_raw(&s.input)?;
    }
    dataset.train = train;
    dataset.test = test;
    Ok(dataset)
}

impl Dataset {
    /// Number of retained features per season.
    pub fn width(&self) -> usize {
        self.kept_columns.len()
    }

    /// Flattened input length (7 × width).
    pub fn flat_width(&self) -> usize {
        INPUT_SEASONS * self.width()
    }

    /// Selects the retained columns of a raw 7 × schema-width matrix and z-scores them.
    pub fn normalize_raw(&self, raw: &Array2<f64>) -> Result<Array2<f64>> {
        let full = self.kept_columns.last().map_or(0, |&j| j + 1);
        if raw.nrows() != INPUT_SEASONS || raw.ncols() < full {
            return Err(Error::shape((INPUT_SEASONS, full), raw.dim()));
        }
        let mut out = raw.select(Axis(1), &self.kept_columns);
        for (j, stat) in self.norm_stats.iter().enumerate() {
            out.column_mut(j).mapv_inplace(|v| (v - stat.mean) / stat.std);
        }
        Ok(out)
    }

    pub fn all_sequences(&self) -> impl Iterator<Item = &CareerSequence> {
        self.train.iter().chain(self.test.iter())
    }

    pub fn find(&self, player_id: &str) -> Option<&CareerSequence> {
        self.all_sequences().find(|s| s.player_id == player_id)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Content hash of the serialised dataset; chains downstream artifacts.
    pub fn hash(&self) -> Result<String> {
        Ok(sha256_hex(self.to_json()?.as_bytes()))
    }

    /// Hash of the normalisation statistics alone; models trained on these
    /// inputs record it so they can refuse differently scaled data.
    pub fn norm_hash(&self) -> Result<String> {
        crate::artifact::json_hash(&(&self.kept_columns, &self.norm_stats))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
