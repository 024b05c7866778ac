use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::artifact::json_hash;
use crate::{Error, Result};

const NBA48: &str = include_str!("../../schemas/nba48.json");

/// How a missing cell is filled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImputationClass {
    /// Rates and percentages: median over peers of the same age.
    RatioLike,
    /// Totals: carried from the player's nearest earlier season, else the nearest later one.
    Counting,
}

/// Ordered feature list, the prediction target, and per-feature imputation rules.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSchema {
    pub names: Vec<String>,
    #[serde(rename = "target")]
    pub target_name: String,
    #[serde(rename = "imputation")]
    pub imputation_class: BTreeMap<String, ImputationClass>,
}

impl FeatureSchema {
    /// The bundled 48-feature basketball schema with `BPM` as target.
    pub fn nba48() -> Self {
        Self::from_json(NBA48).expect("bundled schema is valid")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let schema: Self = serde_json::from_str(s)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.names.is_empty() {
            return Err(Error::Schema("schema lists no features".into()));
        }
        if self.target_name != "BPM" {
            return Err(Error::Schema(format!(
                "target must be `BPM`, got `{}`",
                self.target_name
            )));
        }
        let mut seen = BTreeSet::new();
        for n in &self.names {
            if !seen.insert(n) {
                return Err(Error::Schema(format!("feature `{n}` listed twice")));
            }
            if !self.imputation_class.contains_key(n) {
                return Err(Error::Schema(format!("feature `{n}` has no imputation class")));
            }
        }
        if !seen.contains(&self.target_name) {
            return Err(Error::Schema(format!(
                "target `{}` is not among the features",
                self.target_name
            )));
        }
        if let Some(extra) = self.imputation_class.keys().find(|k| !seen.contains(k)) {
            return Err(Error::Schema(format!(
                "imputation class given for unknown feature `{extra}`"
            )));
        }
        for reserved in ["player_id", "player_name", "season", "age", "category"] {
            if seen.iter().any(|n| n.as_str() == reserved) {
                return Err(Error::Schema(format!("`{reserved}` is reserved and cannot be a feature")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn target_index(&self) -> usize {
        self.index_of(&self.target_name).expect("validated schema contains its target")
    }

    pub fn class_of(&self, index: usize) -> ImputationClass {
        self.imputation_class[&self.names[index]]
    }

    pub fn hash(&self) -> String {
        json_hash(self).expect("schema serialises")
    }
}
