use super::{CellSource, FeatureSchema, ImputationClass, SeasonRecord};
use crate::{Error, Result, FIRST_INPUT_AGE, INPUT_SEASONS};

const LAST_INPUT_AGE: u32 = FIRST_INPUT_AGE + INPUT_SEASONS as u32 - 1;

/// Fills the development window (ages 22–28) of one player.
///
/// Missing ratio-like cells take the median of observed peer values at the
/// same age. Missing counting cells take the player's nearest earlier
/// observed value, else the nearest later one (never from a target-age
/// season), falling back to the peer median. Ages with no row at all are
/// copies of the nearest earlier filled row, else the nearest later one.
pub fn impute_missing(
    seasons: &[SeasonRecord],
    schema: &FeatureSchema,
    peers: &[SeasonRecord],
) -> Result<Vec<SeasonRecord>> {
    let mut sources: Vec<&SeasonRecord> = seasons.iter().filter(|s| s.age <= LAST_INPUT_AGE).collect();
    sources.sort_by_key(|s| s.age);
    if sources.is_empty() {
        return Err(Error::Imputation {
            feature: "(all features)".into(),
            age: FIRST_INPUT_AGE,
        });
    }
    for s in &sources {
        if s.features.len() != schema.len() || s.sources.len() != schema.len() {
            return Err(Error::shape(schema.len(), s.features.len()));
        }
    }

    let mut filled: Vec<SeasonRecord> = Vec::with_capacity(sources.len());
    for (pos, row) in sources.iter().enumerate() {
        let mut out = (*row).clone();
        for j in 0..schema.len() {
            if out.features[j].is_some() {
                continue;
            }
            let carried = match schema.class_of(j) {
                ImputationClass::RatioLike => None,
                ImputationClass::Counting => carry(&sources, pos, j),
            };
            let (value, source) = match carried {
                Some(v) => v,
                None => (
                    peer_median(peers, row.age, j).ok_or_else(|| Error::Imputation {
                        feature: schema.names[j].clone(),
                        age: row.age,
                    })?,
                    CellSource::PeerMedian,
                ),
            };
            out.features[j] = Some(value);
            out.sources[j] = source;
        }
        filled.push(out);
    }

    (FIRST_INPUT_AGE..=LAST_INPUT_AGE)
        .map(|age| {
            if let Some(row) = filled.iter().find(|r| r.age == age) {
                return Ok(row.clone());
            }
            let (donor, source) = match filled.iter().rev().find(|r| r.age < age) {
                Some(r) => (r, CellSource::ForwardFill),
                None => (
                    filled.iter().find(|r| r.age > age).expect("non-empty"),
                    CellSource::BackwardFill,
                ),
            };
            let mut copy = donor.clone();
            copy.season_end_year = donor.season_end_year + age as i32 - donor.age as i32;
            copy.age = age;
            copy.sources = vec![source; copy.features.len()];
            Ok(copy)
        })
        .collect()
}

fn carry(rows: &[&SeasonRecord], pos: usize, j: usize) -> Option<(f64, CellSource)> {
    rows[..pos]
        .iter()
        .rev()
        .find_map(|r| r.observed_value(j))
        .map(|v| (v, CellSource::ForwardFill))
        .or_else(|| {
            rows[pos + 1..]
                .iter()
                .find_map(|r| r.observed_value(j))
                .map(|v| (v, CellSource::BackwardFill))
        })
}

fn peer_median(peers: &[SeasonRecord], age: u32, j: usize) -> Option<f64> {
    let mut values: Vec<f64> = peers
        .iter()
        .filter(|p| p.age == age)
        .filter_map(|p| p.observed_value(j))
        .collect();
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    Some(if values.len() % 2 == 1 {
        values[mid]
    } else {
        (values[mid - 1] + values[mid]) / 2.0
    })
}
