use std::io::Read;
use std::ops::RangeInclusive;
use std::path::Path;

use super::{CellSource, FeatureSchema, SeasonRecord, Category};
use crate::{Error, Result};

/// Plausibility bounds applied to each parsed row.
#[derive(Clone, Debug, PartialEq)]
pub struct RecordBounds {
    pub ages: RangeInclusive<u32>,
    pub seasons: RangeInclusive<i32>,
}

impl Default for RecordBounds {
    fn default() -> Self {
        Self {
            ages: 18..=45,
            seasons: 1995..=2023,
        }
    }
}

pub fn parse_season_csv(path: &Path, schema: &FeatureSchema, bounds: &RecordBounds) -> Result<Vec<SeasonRecord>> {
    let file = std::fs::File::open(path)?;
    parse_season_reader(file, schema, bounds)
}

/// Parses the season table. Unparseable or empty feature cells become
/// missing values; identity columns must parse.
pub fn parse_season_reader<R: Read>(
    reader: R,
    schema: &FeatureSchema,
    bounds: &RecordBounds,
) -> Result<Vec<SeasonRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::EmptyFile);
    }
    let column = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let id_col = column("player_id")?;
    let name_col = column("player_name")?;
    let season_col = column("season")?;
    let age_col = column("age")?;
    let feature_cols: Vec<usize> = schema
        .names
        .iter()
        .map(|n| column(n))
        .collect::<Result<_>>()?;
    let category_col = headers.iter().position(|h| h == "category");

    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let err = |message: String| Error::Parse { line, message };

        let player_id = row[id_col].to_string();
        if player_id.is_empty() {
            return Err(err("empty player_id".into()));
        }
        let season_end_year: i32 = row[season_col]
            .parse()
            .map_err(|_| err(format!("season `{}` is not an integer year", &row[season_col])))?;
        let age: u32 = row[age_col]
            .parse()
            .map_err(|_| err(format!("age `{}` is not an integer", &row[age_col])))?;
        if !bounds.ages.contains(&age) {
            return Err(err(format!("age {age} outside {:?}", bounds.ages)));
        }
        if !bounds.seasons.contains(&season_end_year) {
            return Err(err(format!("season {season_end_year} outside {:?}", bounds.seasons)));
        }
        let category = match category_col.map(|c| &row[c]) {
            None | Some("") => None,
            Some(v) => Some(
                Category::parse(v)
                    .ok_or_else(|| err(format!("category `{v}` is neither `star` nor `regular`")))?,
            ),
        };
        let features: Vec<Option<f64>> = feature_cols
            .iter()
            .map(|&c| row[c].parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect();
        let sources = features
            .iter()
            .map(|f| if f.is_some() { CellSource::Observed } else { CellSource::Missing })
            .collect();
        out.push(SeasonRecord {
            player_id,
            player_name: row[name_col].to_string(),
            season_end_year,
            age,
            features,
            sources,
            category,
        });
    }
    Ok(out)
}

/// Writes records in the format [`parse_season_reader`] accepts. Missing
/// cells are left blank; values use shortest round-trip formatting.
pub fn write_season_csv<W: std::io::Write>(
    records: &[SeasonRecord],
    schema: &FeatureSchema,
    writer: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["player_id", "player_name", "season", "age"];
    header.extend(schema.names.iter().map(String::as_str));
    header.push("category");
    w.write_record(&header)?;
    for r in records {
        if r.features.len() != schema.len() {
            return Err(Error::shape(schema.len(), r.features.len()));
        }
        let mut row = vec![
            r.player_id.clone(),
            r.player_name.clone(),
            r.season_end_year.to_string(),
            r.age.to_string(),
        ];
        row.extend(r.features.iter().map(|f| f.map_or_else(String::new, |v| format!("{v:?}"))));
        row.push(r.category.map_or_else(String::new, |c| c.as_str().to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(schema: &FeatureSchema, skip: Option<&str>) -> String {
        let mut cols = vec!["player_id", "player_name", "season", "age"];
        cols.extend(schema.names.iter().map(String::as_str));
        cols.push("category");
        cols.into_iter().filter(|c| Some(*c) != skip).collect::<Vec<_>>().join(",")
    }

    fn row(schema: &FeatureSchema, blank: Option<&str>) -> String {
        let mut cells = vec!["p1".to_string(), "Some Player".into(), "2010".into(), "25".into()];
        for (i, n) in schema.names.iter().enumerate() {
            cells.push(if Some(n.as_str()) == blank { String::new() } else { format!("{}.5", i) });
        }
        cells.push("star".into());
        cells.join(",")
    }

    #[test]
    fn writer_round_trip() {
        let s = FeatureSchema::nba48();
        let mut rec = SeasonRecord::observed("p,1", "A \"B\"", 2001, 24, (0..48).map(|i| i as f64 / 7.0).collect(), Some(Category::Regular));
        rec.features[5] = None;
        rec.sources[5] = CellSource::Missing;
        let mut buf = Vec::new();
        write_season_csv(std::slice::from_ref(&rec), &s, &mut buf).unwrap();
        let back = parse_season_reader(buf.as_slice(), &s, &RecordBounds::default()).unwrap();
        assert_eq!(back, vec![rec]);
    }

    #[test]
    fn fully_populated_row() {
        let s = FeatureSchema::nba48();
        let text = format!("{}\n{}\n", header(&s, None), row(&s, None));
        let recs = parse_season_reader(text.as_bytes(), &s, &RecordBounds::default()).unwrap();
        assert_eq!(recs.len(), 1);
        assert!(recs[0].is_complete());
        assert_eq!(recs[0].features[3], Some(3.5));
        assert_eq!(recs[0].category, Some(Category::Star));
        assert_eq!(recs[0].age, 25);
    }

    #[test]
    fn empty_ts_cell_is_missing() {
        let s = FeatureSchema::nba48();
        let text = format!("{}\n{}\n", header(&s, None), row(&s, Some("TS")));
        let recs = parse_season_reader(text.as_bytes(), &s, &RecordBounds::default()).unwrap();
        let ts = s.index_of("TS").unwrap();
        assert_eq!(recs[0].features[ts], None);
        assert_eq!(recs[0].sources[ts], CellSource::Missing);
        assert_eq!(recs[0].features.iter().filter(|f| f.is_none()).count(), 1);
    }

    #[test]
    fn missing_age_column_is_named() {
        let s = FeatureSchema::nba48();
        let text = format!("{}\n", header(&s, Some("age")));
        match parse_season_reader(text.as_bytes(), &s, &RecordBounds::default()) {
            Err(Error::MissingColumn(c)) => assert_eq!(c, "age"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_input_is_distinct() {
        let s = FeatureSchema::nba48();
        assert!(matches!(
            parse_season_reader(&b""[..], &s, &RecordBounds::default()),
            Err(Error::EmptyFile)
        ));
    }

    #[test]
    fn bad_age_reports_line() {
        let s = FeatureSchema::nba48();
        let good = row(&s, None);
        let bad = good.replacen(",25,", ",abc,", 1);
        let text = format!("{}\n{}\n{}\n", header(&s, None), good, bad);
        match parse_season_reader(text.as_bytes(), &s, &RecordBounds::default()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn row_order_preserved_and_garbage_numbers_missing() {
        let s = FeatureSchema::nba48();
        let r1 = row(&s, None);
        let r2 = row(&s, None).replacen("p1", "p2", 1).replacen(",0.5,", ",n/a,", 1);
        let text = format!("{}\n{}\n{}\n", header(&s, None), r1, r2);
        let recs = parse_season_reader(text.as_bytes(), &s, &RecordBounds::default()).unwrap();
        assert_eq!(recs[0].player_id, "p1");
        assert_eq!(recs[1].player_id, "p2");
        assert_eq!(recs[1].features[0], None);
    }
}
