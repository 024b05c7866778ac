//! One function per subcommand. Each reads and writes artifacts under the
//! configured output directory.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use careertrend::artifact::sha256_hex;
use careertrend::autoencoder::{ae_train, flatten_batch, flatten_sequence};
use careertrend::baselines::{
    last_value_predict, linear_fit_dataset, linear_predict_all, mlp_baseline_train, mlp_predict_all, mlp_to_document,
};
use careertrend::clustering::{assign, one_hot, select_k};
use careertrend::eval::{
    comparison_csv, evaluate_keyed, export_curves, export_scatter, per_category_csv, predictions_csv, summary_json,
    CurveMode, EvalReport,
};
use careertrend::forecaster::{check_provenance, cluster_labels, forecaster_train, predict_batch, provenance_meta};
use careertrend::ingest::{ingest_records, parse_season_csv, Dataset, IngestSummary, RecordBounds};
use careertrend::nn::serial::ModelDocument;
use careertrend::nn::TrainOutcome;
use careertrend::synth::{two_archetypes, write_csv, ArchetypeSpec};
use careertrend::{AutoencoderModel, ClusterModel, Error, ForecasterModel, FIRST_INPUT_AGE, INPUT_SEASONS};
use ndarray::Array2;
use serde::Serialize;

use crate::config::PipelineConfig;
use crate::gradcheck::{self, GradCheckRow};
use crate::CliError;

pub const DATASET: &str = "dataset.json";
pub const AUTOENCODER: &str = "autoencoder.json";
pub const CLUSTERS: &str = "clusters.json";
pub const FORECASTER: &str = "forecaster.json";
pub const FORECASTER_STANDARD: &str = "forecaster_standard.json";
pub const MLP: &str = "mlp.json";
pub const REPORTS: &str = "reports";
/// The only file holding wall-clock data.
pub const RUN_META: &str = "run_meta.json";

type CliResult<T> = Result<T, CliError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, clap::ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum ModelName {
    Proposed,
    StandardLstm,
    LastValue,
    Linear,
    Ridge,
    Mlp,
}

impl ModelName {
    pub const ALL: [ModelName; 6] = [
        ModelName::Proposed,
        ModelName::StandardLstm,
        ModelName::LastValue,
        ModelName::Linear,
        ModelName::Ridge,
        ModelName::Mlp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelName::Proposed => "proposed",
            ModelName::StandardLstm => "standard_lstm",
            ModelName::LastValue => "last_value",
            ModelName::Linear => "linear",
            ModelName::Ridge => "ridge",
            ModelName::Mlp => "mlp",
        }
    }
}

fn out_path(cfg: &PipelineConfig, name: &str) -> PathBuf {
    cfg.out.join(name)
}

fn write_artifact(cfg: &PipelineConfig, name: &str, contents: &str) -> CliResult<PathBuf> {
    let path = out_path(cfg, name);
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(&path, contents)?;
    Ok(path)
}

fn write_json<S: Serialize>(cfg: &PipelineConfig, name: &str, value: &S) -> CliResult<PathBuf> {
    let mut s = serde_json::to_string_pretty(value).map_err(Error::from)?;
    s.push('\n');
    write_artifact(cfg, name, &s)
}

/// Records the command, finish time and artifact digests in the sidecar.
fn record_run(cfg: &PipelineConfig, command: &str, artifacts: &[&str]) -> CliResult<()> {
    let mut digests = BTreeMap::new();
    for name in artifacts {
        digests.insert(name.to_string(), sha256_hex(&fs::read(out_path(cfg, name))?));
    }
    let finished = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    write_json(
        cfg,
        RUN_META,
        &serde_json::json!({
            "command": command,
            "seed": cfg.seed,
            "finished_unix": finished,
            "version": env!("CARGO_PKG_VERSION"),
            "artifacts": digests,
        }),
    )?;
    Ok(())
}

fn require(cfg: &PipelineConfig, name: &str, step: &str) -> CliResult<PathBuf> {
    let path = out_path(cfg, name);
    if !path.exists() {
        return Err(CliError::MissingArtifact {
            file: name.into(),
            dir: cfg.out.display().to_string(),
            step: step.into(),
        });
    }
    Ok(path)
}

fn file_hash(path: &Path) -> CliResult<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

fn input_err(path: &Path) -> impl Fn(Error) -> CliError + '_ {
    move |source| CliError::Input { path: path.display().to_string(), source }
}

fn stale(what: &str, key: &str) -> CliError {
    CliError::Core(Error::Artifact(format!(
        "{what} was built from a different {key}; rerun the earlier steps"
    )))
}

fn meta_matches(meta: &BTreeMap<String, String>, key: &str, want: &str, what: &str) -> CliResult<()> {
    match meta.get(key) {
        Some(v) if v == want => Ok(()),
        _ => Err(stale(what, key)),
    }
}

pub fn load_dataset(cfg: &PipelineConfig) -> CliResult<(Dataset, String)> {
    let ds = Dataset::load(&require(cfg, DATASET, "ingest")?)?;
    let hash = ds.hash()?;
    Ok((ds, hash))
}

/// Season CSV → `dataset.json` plus `reports/ingest_summary.json`.
pub fn cmd_ingest(cfg: &PipelineConfig) -> CliResult<IngestSummary> {
    cfg.validate()?;
    let input = cfg
        .input
        .as_deref()
        .ok_or_else(|| CliError::Usage("no input CSV; pass --input or set `input` in the config".into()))?;
    let schema = cfg.schema()?;
    let records = parse_season_csv(input, &schema, &RecordBounds::default()).map_err(input_err(input))?;
    let (dataset, summary) =
        ingest_records(&records, &schema, cfg.test_fraction, cfg.seed).map_err(input_err(input))?;
    fs::create_dir_all(&cfg.out)?;
    dataset.save(&out_path(cfg, DATASET))?;
    let summary_name = format!("{REPORTS}/ingest_summary.json");
    write_json(cfg, &summary_name, &summary)?;
    log::info!(
        "kept {} of {} players ({} train / {} test); dropped {} with too few seasons, {} missing target BPM",
        summary.players_kept,
        summary.players_seen,
        summary.train_players,
        summary.test_players,
        summary.dropped_too_few_seasons,
        summary.dropped_missing_target
    );
    record_run(cfg, "ingest", &[DATASET, &summary_name])?;
    Ok(summary)
}

#[derive(Clone, Debug, Serialize)]
pub struct Stage1Summary {
    pub k: usize,
    pub silhouette: BTreeMap<usize, f64>,
    pub autoencoder: TrainOutcome,
}

/// Autoencoder on the training split, then K selection on its embeddings.
pub fn cmd_stage1(cfg: &PipelineConfig) -> CliResult<Stage1Summary> {
    cfg.validate()?;
    let (ds, ds_hash) = load_dataset(cfg)?;
    let (ae, outcome) = ae_train::<f64>(&ds, &cfg.seeded(&cfg.autoencoder))?;
    let meta = BTreeMap::from([("dataset_hash".to_string(), ds_hash.clone())]);
    let ae_path = out_path(cfg, AUTOENCODER);
    ae.to_document(meta).save(&ae_path)?;
    let ae_hash = file_hash(&ae_path)?;

    let embeddings = ae.encode_batch(&flatten_batch(&ds.train))?;
    let ids: Vec<String> = ds.train.iter().map(|s| s.player_id.clone()).collect();
    let mut clusters = select_k(
        embeddings.view(),
        &ids,
        cfg.k_range(),
        cfg.kmeans_restarts,
        cfg.kmeans_max_iters,
        cfg.seed,
    )?;
    clusters.meta.insert("dataset_hash".into(), ds_hash);
    clusters.meta.insert("autoencoder_hash".into(), ae_hash);
    clusters.save(&out_path(cfg, CLUSTERS))?;

    let sil = format!("{REPORTS}/silhouette.csv");
    let assignments = format!("{REPORTS}/cluster_assignments.csv");
    let history = format!("{REPORTS}/autoencoder_history.json");
    write_artifact(cfg, &sil, &clusters.silhouette_csv())?;
    write_artifact(cfg, &assignments, &clusters.assignments_csv())?;
    write_json(cfg, &history, &outcome)?;
    log::info!("selected K = {} (silhouette {:?})", clusters.k, clusters.silhouette_table);
    record_run(cfg, "stage1", &[AUTOENCODER, CLUSTERS, &sil, &assignments, &history])?;
    Ok(Stage1Summary { k: clusters.k, silhouette: clusters.silhouette_table, autoencoder: outcome })
}

/// Loads stage-one artifacts and checks they were built from `ds_hash`.
pub fn load_stage1(cfg: &PipelineConfig, ds_hash: &str) -> CliResult<(AutoencoderModel, ClusterModel)> {
    let ae_path = require(cfg, AUTOENCODER, "stage1")?;
    let cl_path = require(cfg, CLUSTERS, "stage1")?;
    let doc = ModelDocument::load(&ae_path)?;
    meta_matches(&doc.meta, "dataset_hash", ds_hash, AUTOENCODER)?;
    let ae = AutoencoderModel::from_document(&doc)?;
    let clusters = ClusterModel::load(&cl_path)?;
    meta_matches(&clusters.meta, "dataset_hash", ds_hash, CLUSTERS)?;
    meta_matches(&clusters.meta, "autoencoder_hash", &file_hash(&ae_path)?, CLUSTERS)?;
    Ok((ae, clusters))
}

fn forecaster_file(conditioned: bool) -> &'static str {
    if conditioned {
        FORECASTER
    } else {
        FORECASTER_STANDARD
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Stage2Summary {
    pub conditioned: bool,
    pub k: usize,
    pub outcome: TrainOutcome,
}

/// Trains the cluster-conditioned forecaster, or the standard LSTM when
/// `conditioned` is false.
pub fn cmd_stage2(cfg: &PipelineConfig, conditioned: bool) -> CliResult<Stage2Summary> {
    cfg.validate()?;
    let (ds, ds_hash) = load_dataset(cfg)?;
    let stage1 = if conditioned { Some(load_stage1(cfg, &ds_hash)?) } else { None };
    let (model, outcome) = forecaster_train(
        &ds,
        stage1.as_ref().map(|(ae, cm)| (ae, cm)),
        &cfg.seeded(&cfg.forecaster),
    )?;
    let mut meta = provenance_meta(&ds, stage1.as_ref().map(|(_, cm)| cm))?;
    meta.insert("dataset_hash".into(), ds_hash);
    meta.insert("stopped_epoch".into(), outcome.stopped_epoch.to_string());
    meta.insert("best_epoch".into(), outcome.best_epoch.to_string());
    let name = forecaster_file(conditioned);
    model.to_document(meta).save(&out_path(cfg, name))?;
    let history = format!("{REPORTS}/{}_history.json", name.trim_end_matches(".json"));
    write_json(cfg, &history, &outcome)?;
    log::info!(
        "{} forecaster stopped at epoch {} (best {}, validation loss {:.4})",
        if conditioned { "conditioned" } else { "standard" },
        outcome.stopped_epoch,
        outcome.best_epoch,
        outcome.best_validation_loss
    );
    record_run(cfg, if conditioned { "stage2" } else { "stage2 --standard" }, &[name, &history])?;
    Ok(Stage2Summary { conditioned, k: model.k(), outcome })
}

/// A trained forecaster plus, when conditioned, the stage-one models it needs.
pub struct LoadedForecaster {
    pub model: ForecasterModel,
    pub stage1: Option<(AutoencoderModel, ClusterModel)>,
}

impl LoadedForecaster {
    /// Prediction for one normalised 7×F input.
    pub fn predict(&self, input: &Array2<f64>) -> CliResult<[f64; 3]> {
        let code = match &self.stage1 {
            Some((ae, cm)) => {
                let z = ae.encode(flatten_sequence(input).view())?;
                Some(one_hot::<f64>(assign(cm, z.view())?, cm.k)?)
            }
            None => None,
        };
        let out = self.model.predict_one(input.view(), code.as_ref().map(|c| c.view()))?;
        Ok([out[0], out[1], out[2]])
    }
}

pub fn load_forecaster(cfg: &PipelineConfig, ds: &Dataset, ds_hash: &str, conditioned: bool) -> CliResult<LoadedForecaster> {
    let step = if conditioned { "stage2" } else { "stage2 --standard" };
    let doc = ModelDocument::load(&require(cfg, forecaster_file(conditioned), step)?)?;
    let stage1 = if conditioned { Some(load_stage1(cfg, ds_hash)?) } else { None };
    let mut expected = provenance_meta(ds, stage1.as_ref().map(|(_, cm)| cm))?;
    expected.insert("dataset_hash".into(), ds_hash.to_string());
    check_provenance(&doc, &expected)?;
    let model = ForecasterModel::from_document(&doc)?;
    if model.k() != stage1.as_ref().map_or(0, |(_, cm)| cm.k) {
        return Err(stale(forecaster_file(conditioned), "cluster model"));
    }
    Ok(LoadedForecaster { model, stage1 })
}

fn model_predictions(
    cfg: &PipelineConfig,
    ds: &Dataset,
    ds_hash: &str,
    model: ModelName,
) -> CliResult<BTreeMap<String, [f64; 3]>> {
    let test = &ds.test;
    Ok(match model {
        ModelName::Proposed | ModelName::StandardLstm => {
            let loaded = load_forecaster(cfg, ds, ds_hash, model == ModelName::Proposed)?;
            let labels = match &loaded.stage1 {
                Some((ae, cm)) => Some(cluster_labels(ae, cm, test)?),
                None => None,
            };
            predict_batch(&loaded.model, test, labels.as_ref())?
        }
        ModelName::LastValue => test.iter().map(|s| (s.player_id.clone(), last_value_predict(s))).collect(),
        ModelName::Linear => {
            let fit = match linear_fit_dataset::<f64>(ds, 0.0) {
                Err(Error::RankDeficient) => {
                    log::warn!("plain least squares is rank-deficient on this split; refitting with lambda 1e-8");
                    linear_fit_dataset::<f64>(ds, 1e-8)?
                }
                other => other?,
            };
            linear_predict_all(&fit, test)?
        }
        ModelName::Ridge => linear_predict_all(&linear_fit_dataset::<f64>(ds, cfg.ridge_lambda)?, test)?,
        ModelName::Mlp => {
            let (mlp, outcome) = mlp_baseline_train::<f64>(ds, &cfg.seeded(&cfg.mlp))?;
            let meta = BTreeMap::from([
                ("dataset_hash".to_string(), ds_hash.to_string()),
                ("stopped_epoch".to_string(), outcome.stopped_epoch.to_string()),
            ]);
            mlp_to_document(&mlp, meta).save(&out_path(cfg, MLP))?;
            mlp_predict_all(&mlp, test)?
        }
    })
}

/// Scores the requested models on the test split and writes the comparison
/// tables and plot exports. An empty list means every enabled model.
pub fn cmd_evaluate(cfg: &PipelineConfig, models: &[ModelName]) -> CliResult<Vec<EvalReport>> {
    cfg.validate()?;
    let (ds, ds_hash) = load_dataset(cfg)?;
    let models: Vec<ModelName> = if models.is_empty() {
        let b = &cfg.baselines;
        ModelName::ALL
            .into_iter()
            .filter(|m| match m {
                ModelName::LastValue => b.last_value,
                ModelName::Linear => b.linear,
                ModelName::Ridge => b.ridge,
                ModelName::Mlp => b.mlp,
                _ => true,
            })
            .collect()
    } else {
        models.to_vec()
    };

    let mut written = Vec::new();
    let mut reports = Vec::new();
    for model in models {
        let predictions = model_predictions(cfg, &ds, &ds_hash, model)?;
        let report = evaluate_keyed(model.as_str(), &ds.test, &predictions)?;
        let dir = format!("{REPORTS}/{}", model.as_str());
        for (file, text) in [
            ("predictions.csv", predictions_csv(&report)?),
            ("curves_player.csv", export_curves(&report, CurveMode::Player)?),
            ("curves_category.csv", export_curves(&report, CurveMode::Category)?),
            ("scatter.csv", export_scatter(&report)?),
        ] {
            let name = format!("{dir}/{file}");
            write_artifact(cfg, &name, &text)?;
            written.push(name);
        }
        log::info!(
            "{}: MAE {:.4}, R² {}",
            model.as_str(),
            report.overall.mae,
            report.overall.r2.map_or("undefined".into(), |r| format!("{r:.4}"))
        );
        reports.push(report);
    }
    for (file, text) in [
        ("comparison.csv", comparison_csv(&reports)?),
        ("per_category.csv", per_category_csv(&reports)?),
        ("summary.json", summary_json(&reports)?),
    ] {
        let name = format!("{REPORTS}/{file}");
        write_artifact(cfg, &name, &text)?;
        written.push(name);
    }
    let names: Vec<&str> = written.iter().map(String::as_str).collect();
    record_run(cfg, "evaluate", &names)?;
    Ok(reports)
}

/// Where `predict` takes its seven input seasons from.
#[derive(Clone, Debug)]
pub enum PredictSource {
    /// A player already in the dataset artifact.
    Player(String),
    /// A season CSV holding ages 22–28 of exactly one player, every feature present.
    Csv(PathBuf),
}

fn sequence_from_csv(cfg: &PipelineConfig, ds: &Dataset, path: &Path) -> CliResult<(String, Array2<f64>)> {
    let schema = cfg.schema()?;
    if schema.hash() != ds.schema_hash {
        return Err(CliError::Usage("the configured schema differs from the one used at ingest".into()));
    }
    let mut records = parse_season_csv(path, &schema, &RecordBounds::default()).map_err(input_err(path))?;
    let bad = |msg: String| CliError::Input { path: path.display().to_string(), source: Error::Config(msg) };
    let ids: std::collections::BTreeSet<&str> = records.iter().map(|r| r.player_id.as_str()).collect();
    if ids.len() != 1 {
        return Err(bad(format!("expected rows for exactly one player, found {}", ids.len())));
    }
    let id = records[0].player_id.clone();
    let last = FIRST_INPUT_AGE + INPUT_SEASONS as u32 - 1;
    records.retain(|r| (FIRST_INPUT_AGE..=last).contains(&r.age));
    records.sort_by_key(|r| r.age);
    let ages: Vec<u32> = records.iter().map(|r| r.age).collect();
    if ages != (FIRST_INPUT_AGE..=last).collect::<Vec<_>>() {
        return Err(bad(format!("need one row for each age {FIRST_INPUT_AGE}..={last}, found ages {ages:?}")));
    }
    let mut raw = Array2::zeros((INPUT_SEASONS, schema.len()));
    for (i, r) in records.iter().enumerate() {
        for (j, v) in r.features.iter().enumerate() {
            raw[[i, j]] = v.ok_or_else(|| bad(format!("age {}: `{}` is missing", r.age, schema.names[j])))?;
        }
    }
    Ok((id, ds.normalize_raw(&raw)?))
}

/// Prints BPM predictions for ages 29–31 and appends them to `reports/predictions_log.csv`.
pub fn cmd_predict(cfg: &PipelineConfig, source: &PredictSource, conditioned: bool) -> CliResult<[f64; 3]> {
    let (ds, ds_hash) = load_dataset(cfg)?;
    let loaded = load_forecaster(cfg, &ds, &ds_hash, conditioned)?;
    let (id, input) = match source {
        PredictSource::Player(id) => {
            let seq = ds
                .find(id)
                .ok_or_else(|| CliError::Core(Error::Artifact(format!("unknown player `{id}`: not in dataset.json"))))?;
            (id.clone(), seq.input.clone())
        }
        PredictSource::Csv(path) => sequence_from_csv(cfg, &ds, path)?,
    };
    let pred = loaded.predict(&input)?;

    let log_path = out_path(cfg, &format!("{REPORTS}/predictions_log.csv"));
    fs::create_dir_all(log_path.parent().expect("has parent"))?;
    let fresh = !log_path.exists();
    let mut f = fs::OpenOptions::new().create(true).append(true).open(&log_path)?;
    if fresh {
        writeln!(f, "player_id,model,bpm_29,bpm_30,bpm_31")?;
    }
    let model = if conditioned { ModelName::Proposed } else { ModelName::StandardLstm };
    writeln!(f, "{id},{},{:?},{:?},{:?}", model.as_str(), pred[0], pred[1], pred[2])?;
    Ok(pred)
}

/// Writes a synthetic season CSV and a `player_id,archetype` label file beside it.
pub fn cmd_synth(
    cfg: &PipelineConfig,
    output: &Path,
    specs_path: Option<&Path>,
    noise_std: f64,
) -> CliResult<BTreeMap<String, usize>> {
    let specs: Vec<ArchetypeSpec> = match specs_path {
        Some(p) => serde_json::from_str(&fs::read_to_string(p)?)
            .map_err(|e| CliError::Usage(format!("archetype file {}: {e}", p.display())))?,
        None => two_archetypes(noise_std),
    };
    let schema = cfg.schema()?;
    if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let labels = write_csv(&specs, &schema, cfg.seed, output)?;
    let mut text = String::from("player_id,archetype\n");
    for (id, a) in &labels {
        text.push_str(&format!("{id},{a}\n"));
    }
    fs::write(output.with_extension("labels.csv"), text)?;
    Ok(labels)
}

/// Runs the finite-difference suite over `seeds` seeds; fails on any row over tolerance.
pub fn cmd_gradcheck(seeds: u64) -> CliResult<Vec<GradCheckRow>> {
    let (rows, elapsed) = gradcheck::run(seeds)?;
    log::info!("{} checks in {:.2?}", rows.len(), elapsed);
    let failed: Vec<String> = rows
        .iter()
        .filter(|r| !r.passed)
        .map(|r| format!("{} seed {}: {:.3e}", r.config, r.seed, r.max_relative_error))
        .collect();
    if !failed.is_empty() {
        return Err(CliError::GradCheck(failed.join("; ")));
    }
    Ok(rows)
}
