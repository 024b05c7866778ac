//! Season-level ingestion: CSV parsing, eligibility, gap filling and the
//! train/test career dataset.

mod dataset;
mod eligibility;
mod impute;
mod parse;
mod schema;

use std::fmt;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

pub use dataset::{build_sequences, split_and_normalize, Dataset, NormStat};
pub use eligibility::{select_eligible_players, select_with_report, Eligibility, Exclusion};
pub use impute::impute_missing;
pub use parse::{parse_season_csv, parse_season_reader, write_season_csv, RecordBounds};
pub use schema::{FeatureSchema, ImputationClass};

use crate::{Error, Result, TARGET_AGES};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Star,
    Regular,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::Star => "star",
            Category::Regular => "regular",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "star" => Some(Category::Star),
            "regular" => Some(Category::Regular),
            _ => None,
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where a cell's value came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellSource {
    Observed,
    Missing,
    PeerMedian,
    ForwardFill,
    BackwardFill,
}

/// One player-season. `features` and `sources` follow the schema order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeasonRecord {
    pub player_id: String,
    pub player_name: String,
    pub season_end_year: i32,
    pub age: u32,
    pub features: Vec<Option<f64>>,
    pub sources: Vec<CellSource>,
    pub category: Option<Category>,
}

impl SeasonRecord {
    /// Record with every feature observed.
    pub fn observed(
        player_id: &str,
        player_name: &str,
        season_end_year: i32,
        age: u32,
        values: Vec<f64>,
        category: Option<Category>,
    ) -> Self {
        let n = values.len();
        Self {
            player_id: player_id.to_string(),
            player_name: player_name.to_string(),
            season_end_year,
            age,
            features: values.into_iter().map(Some).collect(),
            sources: vec![CellSource::Observed; n],
            category,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.features.iter().all(Option::is_some)
    }

    pub fn observed_value(&self, index: usize) -> Option<f64> {
        match self.sources.get(index) {
            Some(CellSource::Observed) => self.features[index],
            _ => None,
        }
    }
}

/// A player's development window and the three BPM values that follow it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CareerSequence {
    pub player_id: String,
    pub player_name: String,
    /// 7 × features; row `i` is age `22 + i`.
    pub input: Array2<f64>,
    /// BPM at ages 29, 30, 31.
    pub target: [f64; 3],
    /// Unnormalised BPM at age 28.
    pub last_bpm: f64,
    pub category: Option<Category>,
}

impl CareerSequence {
    pub fn check(&self, width: usize) -> Result<()> {
        if self.input.dim() != (crate::INPUT_SEASONS, width) {
            return Err(Error::shape((crate::INPUT_SEASONS, width), self.input.dim()));
        }
        if self.input.iter().any(|v| !v.is_finite()) || self.target.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invariant(format!(
                "sequence for `{}` holds non-finite values",
                self.player_id
            )));
        }
        Ok(())
    }
}

/// Counts from one ingestion run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub rows: usize,
    pub players_seen: usize,
    pub players_kept: usize,
    pub dropped_too_few_seasons: usize,
    pub dropped_missing_target: usize,
    pub imputed_peer_median: usize,
    pub imputed_forward_fill: usize,
    pub imputed_backward_fill: usize,
    pub dropped_constant_features: Vec<String>,
    pub train_players: usize,
    pub test_players: usize,
}

/// Eligibility → imputation → sequences → split, in one call.
pub fn ingest_records(
    records: &[SeasonRecord],
    schema: &FeatureSchema,
    test_fraction: f64,
    seed: u64,
) -> Result<(Dataset, IngestSummary)> {
    let eligibility = select_with_report(records, schema);
    let mut summary = IngestSummary {
        rows: records.len(),
        players_seen: eligibility.kept.len() + eligibility.dropped.len(),
        players_kept: eligibility.kept.len(),
        ..Default::default()
    };
    for reason in eligibility.dropped.values() {
        match reason {
            Exclusion::TooFewSeasons { .. } => summary.dropped_too_few_seasons += 1,
            Exclusion::MissingTargetBpm { .. } => summary.dropped_missing_target += 1,
        }
    }
    if eligibility.kept.is_empty() {
        return Err(Error::Split("no eligible players".into()));
    }

    let peers: Vec<SeasonRecord> = eligibility.kept.values().flatten().cloned().collect();
    let mut complete = std::collections::BTreeMap::new();
    for (id, seasons) in &eligibility.kept {
        let mut rows = impute_missing(seasons, schema, &peers)?;
        for row in &rows {
            for s in &row.sources {
                match s {
                    CellSource::PeerMedian => summary.imputed_peer_median += 1,
                    CellSource::ForwardFill => summary.imputed_forward_fill += 1,
                    CellSource::BackwardFill => summary.imputed_backward_fill += 1,
                    _ => {}
                }
            }
        }
        rows.extend(
            seasons
                .iter()
                .filter(|s| TARGET_AGES.contains(&s.age))
                .cloned(),
        );
        complete.insert(id.clone(), rows);
    }
    let sequences = build_sequences(&complete, schema)?;
    let dataset = split_and_normalize(sequences, schema, test_fraction, seed)?;
    summary.dropped_constant_features = dataset.dropped_features.clone();
    summary.train_players = dataset.train.len();
    summary.test_players = dataset.test.len();
    Ok((dataset, summary))
}
