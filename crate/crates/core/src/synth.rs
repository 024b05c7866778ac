//! Synthetic careers with known archetypes, written in the ingest format so
//! the full pipeline can run without real data.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::ingest::{build_sequences, write_season_csv, CareerSequence, Category, FeatureSchema, SeasonRecord};
use crate::rng::substream;
use crate::{Error, Result, FIRST_INPUT_AGE, INPUT_SEASONS, TARGET_SEASONS};

const LAST_SEASON: i32 = 2023;
const FIRST_SEASON: i32 = 1995;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchetypeSpec {
    pub count: usize,
    pub peak_age: f64,
    pub peak_bpm: f64,
    /// Quadratic aging coefficient, `<= 0`.
    pub curvature: f64,
    pub noise_std: f64,
    pub category: Category,
}

impl ArchetypeSpec {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::Parameter("archetype count must be >= 1".into()));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::Parameter(format!("noise_std must be >= 0, got {}", self.noise_std)));
        }
        if !(self.curvature <= 0.0) {
            return Err(Error::Parameter(format!("curvature must be <= 0, got {}", self.curvature)));
        }
        if !self.peak_age.is_finite() || !self.peak_bpm.is_finite() {
            return Err(Error::Parameter("peak age and BPM must be finite".into()));
        }
        Ok(())
    }

    /// Noise-free BPM at `age`.
    pub fn curve(&self, age: f64) -> f64 {
        self.peak_bpm + self.curvature * (age - self.peak_age).powi(2)
    }
}

/// Seasons for ages 22–31 of every generated player, plus each player's archetype index.
pub fn generate_records(
    specs: &[ArchetypeSpec],
    schema: &FeatureSchema,
    seed: u64,
) -> Result<(Vec<SeasonRecord>, BTreeMap<String, usize>)> {
    if specs.is_empty() {
        return Err(Error::Parameter("at least one archetype is required".into()));
    }
    specs.iter().try_for_each(ArchetypeSpec::validate)?;
    let width = schema.len();
    let bpm = schema.target_index();
    let seasons = (INPUT_SEASONS + TARGET_SEASONS) as u32;

    let mut records = Vec::new();
    let mut labels = BTreeMap::new();
    for (a, spec) in specs.iter().enumerate() {
        // each non-BPM feature is intercept + slope·BPM + noise
        let mut coef_rng = substream(seed, &format!("synth/archetype{a}/coefficients"));
        let coefs: Vec<(f64, f64)> = (0..width)
            .map(|_| (coef_rng.random_range(-2.0..2.0), coef_rng.random_range(-1.0..1.0)))
            .collect();
        let mut rng = substream(seed, &format!("synth/archetype{a}/players"));
        let noise = Normal::new(0.0, spec.noise_std).map_err(|e| Error::Parameter(e.to_string()))?;
        let last_start = LAST_SEASON - seasons as i32 + 1;
        for i in 0..spec.count {
            let id = format!("syn{a}-{i:04}");
            let name = format!("Synthetic {a}-{i}");
            let start = rng.random_range(FIRST_SEASON..=last_start);
            for offset in 0..seasons {
                let age = FIRST_INPUT_AGE + offset;
                let b = spec.curve(age as f64) + noise.sample(&mut rng);
                let values = (0..width)
                    .map(|j| {
                        if j == bpm {
                            b
                        } else {
                            coefs[j].0 + coefs[j].1 * b + noise.sample(&mut rng)
                        }
                    })
                    .collect();
                records.push(SeasonRecord::observed(&id, &name, start + offset as i32, age, values, Some(spec.category)));
            }
            labels.insert(id, a);
        }
    }
    Ok((records, labels))
}

/// Unnormalised sequences and archetype labels.
pub fn generate(
    specs: &[ArchetypeSpec],
    schema: &FeatureSchema,
    seed: u64,
) -> Result<(Vec<CareerSequence>, BTreeMap<String, usize>)> {
    let (records, labels) = generate_records(specs, schema, seed)?;
    let mut by_player: BTreeMap<String, Vec<SeasonRecord>> = BTreeMap::new();
    for r in records {
        by_player.entry(r.player_id.clone()).or_default().push(r);
    }
    Ok((build_sequences(&by_player, schema)?, labels))
}

/// Writes generated seasons as an ingest CSV and returns the labels.
pub fn write_csv(
    specs: &[ArchetypeSpec],
    schema: &FeatureSchema,
    seed: u64,
    path: &Path,
) -> Result<BTreeMap<String, usize>> {
    let (records, labels) = generate_records(specs, schema, seed)?;
    write_season_csv(&records, schema, std::fs::File::create(path)?)?;
    Ok(labels)
}

/// Two archetypes: 30 star-like careers peaking at BPM 6 and 170 regular
/// ones peaking at −1.
pub fn two_archetypes(noise_std: f64) -> Vec<ArchetypeSpec> {
    vec![
        ArchetypeSpec {
            count: 30,
            peak_age: 27.0,
            peak_bpm: 6.0,
            curvature: -0.1,
            noise_std,
            category: Category::Star,
        },
        ArchetypeSpec {
            count: 170,
            peak_age: 27.0,
            peak_bpm: -1.0,
            curvature: -0.1,
            noise_std,
            category: Category::Regular,
        },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_labels() {
        let schema = FeatureSchema::nba48();
        let (seqs, labels) = generate(&two_archetypes(1.0), &schema, 3).unwrap();
        assert_eq!(seqs.len(), 200);
        assert_eq!(labels.values().filter(|&&l| l == 0).count(), 30);
        for s in &seqs {
            let expected = if labels[&s.player_id] == 0 { Category::Star } else { Category::Regular };
            assert_eq!(s.category, Some(expected));
            assert_eq!(s.input.dim(), (7, 48));
        }
    }

    #[test]
    fn noiseless_curve_is_exact() {
        let schema = FeatureSchema::nba48();
        let specs = two_archetypes(0.0);
        let (records, labels) = generate_records(&specs, &schema, 0).unwrap();
        let bpm = schema.target_index();
        for r in &records {
            let spec = &specs[labels[&r.player_id]];
            assert_eq!(r.features[bpm], Some(spec.curve(r.age as f64)));
            assert!((FIRST_SEASON..=LAST_SEASON).contains(&r.season_end_year));
        }
        assert_eq!(specs[0].curve(specs[0].peak_age), 6.0);
    }

    #[test]
    fn deterministic() {
        let schema = FeatureSchema::nba48();
        let a = generate_records(&two_archetypes(1.0), &schema, 7).unwrap();
        let b = generate_records(&two_archetypes(1.0), &schema, 7).unwrap();
        assert_eq!(a, b);
        let c = generate_records(&two_archetypes(1.0), &schema, 8).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn rejects_bad_specs() {
        let schema = FeatureSchema::nba48();
        assert!(generate(&[], &schema, 0).is_err());
        let mut specs = two_archetypes(1.0);
        specs[0].curvature = 0.5;
        assert!(generate(&specs, &schema, 0).is_err());
        specs[0].curvature = -0.1;
        specs[1].count = 0;
        assert!(generate(&specs, &schema, 0).is_err());
    }
}
