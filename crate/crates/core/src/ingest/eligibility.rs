use std::collections::BTreeMap;

use log::warn;
use serde::{Deserialize, Serialize};

use super::{FeatureSchema, SeasonRecord};
use crate::TARGET_AGES;

pub const MIN_SEASONS: usize = 5;
pub const WINDOW: std::ops::RangeInclusive<u32> = 22..=31;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum Exclusion {
    TooFewSeasons { observed: usize },
    MissingTargetBpm { age: u32 },
}

#[derive(Clone, Debug, Default)]
pub struct Eligibility {
    pub kept: BTreeMap<String, Vec<SeasonRecord>>,
    pub dropped: BTreeMap<String, Exclusion>,
}

/// Players with at least five seasons at ages 22–31 and an observed BPM at
/// each of ages 29, 30 and 31. Retained lists are age-sorted.
pub fn select_eligible_players(
    records: &[SeasonRecord],
    schema: &FeatureSchema,
) -> BTreeMap<String, Vec<SeasonRecord>> {
    select_with_report(records, schema).kept
}

pub fn select_with_report(records: &[SeasonRecord], schema: &FeatureSchema) -> Eligibility {
    let bpm = schema.target_index();
    let mut by_player: BTreeMap<&str, Vec<&SeasonRecord>> = BTreeMap::new();
    for r in records {
        by_player.entry(&r.player_id).or_default().push(r);
    }

    let mut out = Eligibility::default();
    for (id, mut seasons) in by_player {
        seasons.sort_by_key(|s| s.age);
        let before = seasons.len();
        seasons.dedup_by_key(|s| s.age);
        if seasons.len() != before {
            warn!("player `{id}` has several rows for one age; keeping the first");
        }

        let in_window = seasons.iter().filter(|s| WINDOW.contains(&s.age)).count();
        if in_window < MIN_SEASONS {
            out.dropped.insert(id.to_string(), Exclusion::TooFewSeasons { observed: in_window });
            continue;
        }
        let missing_target = TARGET_AGES.iter().copied().find(|&age| {
            !seasons
                .iter()
                .any(|s| s.age == age && s.observed_value(bpm).is_some())
        });
        if let Some(age) = missing_target {
            out.dropped.insert(id.to_string(), Exclusion::MissingTargetBpm { age });
            continue;
        }
        out.kept
            .insert(id.to_string(), seasons.into_iter().cloned().collect());
    }
    out
}
