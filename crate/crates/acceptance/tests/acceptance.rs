//! Acceptance checks. Prints one PASS/FAIL/SKIP line per criterion and exits
//! nonzero if any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use careertrend::baselines::{last_value_predict, linear_fit};
use careertrend::clustering::{kmeans_fit, silhouette, ClusterModel};
use careertrend::eval::{mae, r2};
use careertrend::ingest::{write_season_csv, CellSource, Dataset, FeatureSchema};
use careertrend::rng::substream;
use careertrend::synth::{generate_records, two_archetypes};
use careertrend::Error;
use careertrend_validation::{exhaustive_bipartition_sse, purity, silhouette_direct, Ledger, Verdict};
use careertrend_cli::{
    cmd_evaluate, cmd_ingest, cmd_stage1, cmd_stage2, cmd_synth, gradcheck, ModelName, PipelineConfig,
};
use ndarray::Array2;
use rand::Rng;

const E2E_SEEDS: u64 = 10;
const E2E_REQUIRED_WINS: usize = 8;
const E2E_BUDGET: Duration = Duration::from_secs(5 * 60);

fn uniform(rows: usize, cols: usize, seed: u64, label: &str) -> Array2<f64> {
    let mut rng = substream(seed, label);
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-1.0..1.0))
}

fn gradients(ledger: &mut Ledger) {
    let (rows, elapsed) = gradcheck::run(20).expect("gradcheck runs");
    let failed: Vec<String> =
        rows.iter().filter(|r| !r.passed).map(|r| format!("{}@{}={:.2e}", r.config, r.seed, r.max_relative_error)).collect();
    let worst = rows.iter().map(|r| r.max_relative_error / r.tolerance).fold(0.0, f64::max);
    ledger.check(
        failed.is_empty() && elapsed < Duration::from_secs(30),
        "gradient correctness",
        format!(
            "{} checks over 20 seeds, worst error/tolerance {worst:.2e}, {:.1?} (limit 30s){}",
            rows.len(),
            elapsed,
            if failed.is_empty() { String::new() } else { format!("; failed {failed:?}") }
        ),
    );
}

fn clustering(ledger: &mut Ledger) {
    let mut worst_gap = 0.0f64;
    let mut worst_sil = 0.0f64;
    let mut rng = substream(0, "acceptance/clustering");
    for inst in 0..10u64 {
        let n = rng.random_range(3..=8);
        let d = rng.random_range(1..=4);
        let x = uniform(n, d, inst, "acceptance/clustering/points");
        let fit = kmeans_fit(x.view(), 2, 50, 300, inst).expect("fit");
        let best = exhaustive_bipartition_sse(x.view());
        worst_gap = worst_gap.max((fit.sse - best) / best.max(1.0));

        let k = rng.random_range(2..=n.min(4));
        let mut labels: Vec<usize> = (0..n).map(|i| i % k).collect();
        for i in (1..n).rev() {
            labels.swap(i, rng.random_range(0..=i));
        }
        let ours: f64 = silhouette(x.view(), &labels).expect("silhouette");
        worst_sil = worst_sil.max((ours - silhouette_direct(x.view(), &labels)).abs());
    }
    ledger.check(
        worst_gap <= 1e-12 && worst_sil <= 1e-10,
        "clustering oracle",
        format!("10 instances; worst relative SSE gap to exhaustive minimum {worst_gap:.1e}, worst silhouette difference {worst_sil:.1e} (limit 1e-10)"),
    );
}

fn normal_equations(x: &Array2<f64>, y: &Array2<f64>) -> nalgebra::DMatrix<f64> {
    let (n, f) = x.dim();
    let a = nalgebra::DMatrix::from_fn(n, f + 1, |i, j| if j < f { x[[i, j]] } else { 1.0 });
    let b = nalgebra::DMatrix::from_fn(n, y.ncols(), |i, j| y[[i, j]]);
    let gram = a.transpose() * &a;
    gram.lu().solve(&(a.transpose() * b)).expect("full rank")
}

fn regression(ledger: &mut Ledger) {
    let mut worst = 0.0f64;
    let mut beaten = 0usize;
    let mut trials = 0usize;
    for inst in 0..10u64 {
        let x = uniform(50, 10, inst, "acceptance/regression/x");
        let y = uniform(50, 3, inst, "acceptance/regression/y");
        let ours = linear_fit(x.view(), y.view(), 1e-8).expect("fit");
        let beta = normal_equations(&x, &y);
        for j in 0..3 {
            for i in 0..10 {
                worst = worst.max((ours.weights[[i, j]] - beta[(i, j)]).abs());
            }
            worst = worst.max((ours.bias[j] - beta[(10, j)]).abs());
        }

        let ridge = linear_fit(x.view(), y.view(), 1.0).expect("fit");
        let best = ridge.objective(x.view(), y.view()).expect("objective");
        let mut rng = substream(inst, "acceptance/regression/perturb");
        for _ in 0..100 {
            let mut p = ridge.clone();
            p.weights.mapv_inplace(|w| w + rng.random_range(-1e-3..1e-3));
            p.bias.mapv_inplace(|b| b + rng.random_range(-1e-3..1e-3));
            trials += 1;
            beaten += usize::from(p.objective(x.view(), y.view()).expect("objective") > best);
        }
    }
    ledger.check(
        worst <= 1e-8 && beaten == trials,
        "regression oracle",
        format!("10 instances of 50x10; max coefficient difference to OLS {worst:.1e} (limit 1e-8); closed form beat {beaten}/{trials} perturbations"),
    );
}

fn metrics(ledger: &mut Ledger) {
    let actual = vec![[1.0, 2.0, 3.0], [-1.0, 0.5, 4.0]];
    let pooled = actual.iter().flatten().sum::<f64>() / 6.0;
    let mean_pred = vec![[pooled; 3]; 2];
    let r2_mean = r2(&mean_pred, &actual).unwrap();
    let checks = [
        ("mae(x, x) = 0", mae(&actual, &actual).unwrap() == 0.0),
        ("mae([0,0,0], [1,2,3]) = 2", mae(&[[0.0; 3]], &[[1.0, 2.0, 3.0]]).unwrap() == 2.0),
        ("r2(x, x) = 1", r2(&actual, &actual).unwrap() == 1.0),
        ("r2(pooled mean) = 0", r2_mean.abs() <= 1e-12),
        ("constant wrong r2 < 0", r2(&[[10.0; 3], [10.0; 3]], &actual).unwrap() < 0.0),
        ("zero variance undefined", matches!(r2(&[[1.0; 3]], &[[2.0; 3]]), Err(Error::UndefinedMetric(_)))),
        ("empty input rejected", mae(&[], &[]).is_err()),
    ];
    let failed: Vec<&str> = checks.iter().filter(|(_, ok)| !ok).map(|(n, _)| *n).collect();
    ledger.check(
        failed.is_empty(),
        "metric identities",
        format!("{} identities, r2 of pooled mean {r2_mean:.1e}{}", checks.len(), if failed.is_empty() { String::new() } else { format!("; failed {failed:?}") }),
    );
}

fn config(dir: &Path, seed: u64) -> PipelineConfig {
    PipelineConfig { input: Some(dir.join("players.csv")), out: dir.join("out"), seed, ..PipelineConfig::default() }
}

/// synth → ingest → stage1 → both forecasters. Returns the archetype labels.
fn run_pipeline(cfg: &PipelineConfig, noise: f64) -> BTreeMap<String, usize> {
    let labels = cmd_synth(cfg, cfg.input.as_deref().unwrap(), None, noise).expect("synth");
    cmd_ingest(cfg).expect("ingest");
    cmd_stage1(cfg).expect("stage1");
    cmd_stage2(cfg, true).expect("stage2");
    cmd_stage2(cfg, false).expect("stage2 standard");
    labels
}

fn end_to_end(ledger: &mut Ledger) {
    let mut chose_two = 0usize;
    let mut min_purity = f64::INFINITY;
    let mut wins = 0usize;
    let mut slowest = Duration::ZERO;
    let mut per_seed = Vec::new();
    for seed in 0..E2E_SEEDS {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(dir.path(), seed);
        let start = Instant::now();
        let labels = run_pipeline(&cfg, 1.0);
        let reports = cmd_evaluate(&cfg, &[ModelName::Proposed, ModelName::StandardLstm]).expect("evaluate");
        slowest = slowest.max(start.elapsed());

        let clusters = ClusterModel::<f64>::load(&cfg.out.join("clusters.json")).unwrap();
        chose_two += usize::from(clusters.k == 2);
        min_purity = min_purity.min(purity(&clusters.train_assignments, &labels));
        let (p, s) = (reports[0].overall.mae, reports[1].overall.mae);
        wins += usize::from(p < s);
        per_seed.push(format!("{p:.3}/{s:.3}"));
    }
    ledger.check(chose_two == E2E_SEEDS as usize, "synthetic (a) K=2 selected", format!("{chose_two}/{E2E_SEEDS} seeds"));
    ledger.check(min_purity >= 0.9, "synthetic (b) cluster purity", format!("minimum {min_purity:.3} over {E2E_SEEDS} seeds (limit 0.9)"));
    ledger.check(
        wins >= E2E_REQUIRED_WINS,
        "synthetic (c) conditioned beats standard",
        format!("{wins}/{E2E_SEEDS} seeds (need {E2E_REQUIRED_WINS}); test MAE proposed/standard per seed: {}", per_seed.join(" ")),
    );
    ledger.check(slowest < E2E_BUDGET, "synthetic (d) runtime", format!("slowest full run {slowest:.1?} (limit 5 min)"));
}

fn noiseless_units(ledger: &mut Ledger) {
    let regular = two_archetypes(0.0)[1].clone();
    let mut per_seed = Vec::new();
    for seed in 0..5 {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(dir.path(), seed);
        let labels = run_pipeline(&cfg, 0.0);
        let reports = cmd_evaluate(&cfg, &[ModelName::Proposed]).expect("evaluate");
        let mut worst = 0.0f64;
        for row in reports[0].rows.iter().filter(|r| labels[&r.player_id] == 1) {
            for (j, age) in [29.0, 30.0, 31.0].iter().enumerate() {
                worst = worst.max((row.predicted[j] - regular.curve(*age)).abs());
            }
        }
        per_seed.push(worst);
    }
    let worst = per_seed.iter().copied().fold(0.0, f64::max);
    let shown: Vec<String> = per_seed.iter().map(|w| format!("{w:.2e}")).collect();
    ledger.check(
        worst <= 1.0,
        "noiseless units sanity",
        format!("max |prediction - quadratic curve| over regular test players per seed: {} BPM (limit 1.0)", shown.join(" ")),
    );
}

fn last_value(ledger: &mut Ledger) {
    let schema = FeatureSchema::nba48();
    let bpm = schema.target_index();
    let (mut records, _) = generate_records(&two_archetypes(1.0), &schema, 11).unwrap();
    // awkward values and gaps elsewhere must not disturb the raw BPM
    let mut rng = substream(11, "acceptance/last-value");
    for r in &mut records {
        if let Some(v) = r.features[bpm].as_mut() {
            *v = (*v * 1e3).sin() * 7.0 + 1.0 / 3.0;
        }
        for j in (0..r.features.len()).filter(|&j| j != bpm) {
            if rng.random::<f64>() < 0.05 {
                r.features[j] = None;
                r.sources[j] = CellSource::Missing;
            }
        }
    }
    let dir = tempfile::tempdir().unwrap();
    let file = fs::File::create(dir.path().join("players.csv")).unwrap();
    write_season_csv(&records, &schema, file).unwrap();
    let cfg = config(dir.path(), 11);
    cmd_ingest(&cfg).expect("ingest");
    let ds = Dataset::load(&cfg.out.join("dataset.json")).unwrap();

    let raw: BTreeMap<&str, f64> =
        records.iter().filter(|r| r.age == 28).map(|r| (r.player_id.as_str(), r.features[bpm].unwrap())).collect();
    let mut checked = 0usize;
    let mut mismatched = 0usize;
    for s in ds.all_sequences() {
        let expect = raw[s.player_id.as_str()].to_bits();
        checked += 1;
        mismatched += usize::from(last_value_predict(s).iter().any(|v| v.to_bits() != expect));
    }
    ledger.check(mismatched == 0 && checked > 0, "last value exactness", format!("{checked} players, {mismatched} not bit-identical to the raw age-28 BPM"));
}

fn paper_reproduction(ledger: &mut Ledger) {
    let Some(input) = std::env::var_os("CAREERTREND_DATASET").map(PathBuf::from) else {
        ledger.record(Verdict::Skip, "real-data reproduction", "set CAREERTREND_DATASET (and optionally CAREERTREND_SCHEMA) to run");
        return;
    };
    let dir = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig {
        input: Some(input),
        schema: std::env::var_os("CAREERTREND_SCHEMA").map(PathBuf::from),
        out: dir.path().join("out"),
        ..PipelineConfig::default()
    };
    let result = (|| -> Result<String, careertrend_cli::CliError> {
        let summary = cmd_ingest(&cfg)?;
        cmd_stage1(&cfg)?;
        cmd_stage2(&cfg, true)?;
        cmd_stage2(&cfg, false)?;
        let reports = cmd_evaluate(&cfg, &ModelName::ALL)?;
        let line = |m: &str| {
            reports.iter().find(|r| r.model_name == m).map_or("-".into(), |r| {
                format!("{m} {:.2}/{}", r.overall.mae, r.overall.r2.map_or("-".into(), |v| format!("{v:.2}")))
            })
        };
        Ok(format!(
            "{} players kept; MAE/R2 {}, {} (reference 1.42/0.55 vs 1.84/0.19)",
            summary.players_kept,
            line("proposed"),
            line("standard_lstm")
        ))
    })();
    let shaped = ["comparison.csv", "per_category.csv"].iter().all(|f| cfg.out.join("reports").join(f).exists());
    match result {
        Ok(detail) => ledger.check(shaped, "real-data reproduction", detail),
        Err(e) => ledger.check(false, "real-data reproduction", e),
    }
}

fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().is_some_and(|n| n != "run_meta.json") {
                files.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    files
}

fn determinism(ledger: &mut Ledger) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), 21);
    let run = || {
        run_pipeline(&cfg, 1.0);
        cmd_evaluate(&cfg, &ModelName::ALL).expect("evaluate");
        let mut files = snapshot(&cfg.out);
        files.insert("players.csv".into(), fs::read(cfg.input.as_ref().unwrap()).unwrap());
        files
    };
    let first = run();
    let second = run();
    let differing: Vec<String> = first
        .keys()
        .chain(second.keys())
        .filter(|k| first.get(*k) != second.get(*k))
        .map(|k| k.display().to_string())
        .collect();
    ledger.check(
        differing.is_empty(),
        "determinism",
        format!("{} artifacts compared across two full runs{}", first.len(), if differing.is_empty() { String::new() } else { format!("; differing {differing:?}") }),
    );
}

fn main() {
    let mut ledger = Ledger::default();
    gradients(&mut ledger);
    clustering(&mut ledger);
    regression(&mut ledger);
    metrics(&mut ledger);
    end_to_end(&mut ledger);
    noiseless_units(&mut ledger);
    last_value(&mut ledger);
    paper_reproduction(&mut ledger);
    determinism(&mut ledger);

    let failed = ledger.failures();
    println!(
        "acceptance: {} passed, {} failed, {} skipped",
        ledger.count(Verdict::Pass),
        failed.len(),
        ledger.count(Verdict::Skip)
    );
    if !failed.is_empty() {
        println!("failed criteria: {}", failed.join(", "));
        std::process::exit(1);
    }
}
