//! Replication experiments.
//!
//! - `under_specificity`: prompted backends over the 8 information-seeking
//!   classes, swept over shot counts, with exemplars drawn from the plan's
//!   training split.
//! - `over_specificity`: models trained on collapsed-toxic and
//!   separate-toxic plans, the latter's predictions collapsed, both
//!   evaluated on one shared 21-class test set with toxic / non-toxic blocks.
//! - `distribution`: models trained on balanced / imbalanced plans and
//!   evaluated on one shared balanced test set.
//!
//! Every test set is drawn first and excluded from all training samples.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bundle::{BundleManifest, BundleRun, BUNDLE_SCHEMA};
use super::{
    collapse_predictions, evaluate_with_groups, toxic_groups, write_predictions, EvalError, EvalReport,
    GroupSpec, LatencyReport, PredictionRecord,
};
use crate::classifier::{
    build_backend, BackendConfig, BackendKind, Classifier, ClassifyError, NaiveBayesClassifier, Prediction,
    REPLICATION_SHOTS,
};
use crate::dataset::{
    export_split, sample, sample_excluding, DatasetSplit, Holdout, PlanKind, Pool, SamplingPlan, SplitEntry,
};
use crate::taxonomy::{LabelMapping, Taxonomy};
use crate::text::sha256_hex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    UnderSpecificity,
    OverSpecificity,
    Distribution,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::UnderSpecificity => "under_specificity",
            ExperimentKind::OverSpecificity => "over_specificity",
            ExperimentKind::Distribution => "distribution",
        }
    }
}

/// A model trained per plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Trainer {
    /// Fitted in-process on the plan's training split.
    NaiveBayes {
        id: String,
        #[serde(default = "default_alpha")]
        alpha: f64,
    },
    /// Trained elsewhere; one served backend per plan name.
    Remote {
        id: String,
        per_plan: BTreeMap<String, BackendConfig>,
    },
}

fn default_alpha() -> f64 {
    1.0
}

impl Trainer {
    pub fn id(&self) -> &str {
        match self {
            Trainer::NaiveBayes { id, .. } | Trainer::Remote { id, .. } => id,
        }
    }
}

fn default_shots() -> Vec<usize> {
    REPLICATION_SHOTS.to_vec()
}
fn default_true() -> bool {
    true
}
fn default_test_per_class() -> usize {
    100
}
fn default_concurrency() -> usize {
    8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub kind: ExperimentKind,
    /// Labeled pool file.
    pub pool: PathBuf,
    pub output: PathBuf,
    pub seed: u64,
    #[serde(default)]
    pub plans: Vec<SamplingPlan>,
    /// Backends evaluated as-is (under_specificity).
    #[serde(default)]
    pub backends: Vec<BackendConfig>,
    /// Models trained per plan (over_specificity, distribution).
    #[serde(default)]
    pub trainers: Vec<Trainer>,
    #[serde(default = "default_shots")]
    pub shots: Vec<usize>,
    /// Restrict the shot sweep to the published grid.
    #[serde(default = "default_true")]
    pub replication: bool,
    #[serde(default = "default_test_per_class")]
    pub test_per_class: usize,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    /// Canonical taxonomy file; the embedded one when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub taxonomy: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub separate_taxonomy: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mapping: Option<PathBuf>,
    /// Label subset for under_specificity; the 8 information-seeking classes by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

impl ExperimentConfig {
    pub fn parse_toml(text: &str) -> Result<Self, EvalError> {
        toml::from_str(text).map_err(|e| EvalError::Config(e.to_string()))
    }

    /// Loads a TOML config and resolves relative paths against its directory.
    pub fn load_file(path: &Path) -> Result<Self, EvalError> {
        let text = std::fs::read_to_string(path).map_err(EvalError::io(path))?;
        let mut cfg = Self::parse_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.pool);
        fix(&mut self.output);
        for p in [&mut self.taxonomy, &mut self.separate_taxonomy, &mut self.mapping]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        for b in &mut self.backends {
            b.resolve_paths(base);
        }
        for t in &mut self.trainers {
            if let Trainer::Remote { per_plan, .. } = t {
                for b in per_plan.values_mut() {
                    b.resolve_paths(base);
                }
            }
        }
    }

    /// Digest over the config with output location removed, so moving the
    /// output directory does not change bundle identity.
    pub fn digest(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(o) = v.as_object_mut() {
            o.remove("output");
        }
        sha256_hex(serde_json::to_string(&v).expect("value serializes").as_bytes())
    }

    fn validate(&self) -> Result<(), EvalError> {
        if self.replication {
            if let Some(k) = self.shots.iter().find(|k| !REPLICATION_SHOTS.contains(k)) {
                return Err(EvalError::Config(format!(
                    "shot count {k} is outside the replication grid {REPLICATION_SHOTS:?}"
                )));
            }
        }
        match self.kind {
            ExperimentKind::UnderSpecificity if self.backends.is_empty() => {
                Err(EvalError::Config("under_specificity needs at least one backend".into()))
            }
            ExperimentKind::UnderSpecificity if self.plans.len() != 1 => {
                Err(EvalError::Config("under_specificity takes exactly one plan".into()))
            }
            ExperimentKind::OverSpecificity | ExperimentKind::Distribution if self.trainers.is_empty() => {
                Err(EvalError::Config(format!("{} needs at least one trainer", self.kind.as_str())))
            }
            ExperimentKind::Distribution if self.plans.is_empty() => {
                Err(EvalError::Config("distribution needs at least one plan".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub dir: PathBuf,
    pub manifest: BundleManifest,
    pub metrics: BTreeMap<String, EvalReport>,
    pub latency: BTreeMap<String, LatencyReport>,
}

struct TestSet {
    entries: Vec<SplitEntry>,
    texts: Vec<String>,
}

impl TestSet {
    fn from_split(split: &DatasetSplit, pool: &Pool) -> Self {
        let entries = split.train.clone();
        let texts = entries
            .iter()
            .map(|e| pool.get(&e.id).expect("sampled from pool").text.clone())
            .collect();
        Self { entries, texts }
    }

    fn ids(&self) -> HashSet<String> {
        self.entries.iter().map(|e| e.id.clone()).collect()
    }

    fn digest(&self) -> String {
        let joined: Vec<String> = self.entries.iter().map(|e| format!("{}\t{}", e.id, e.label_id)).collect();
        sha256_hex(joined.join("\n").as_bytes())
    }
}

struct RunResult {
    predictions: Vec<Prediction>,
    /// Test indices that were classified.
    kept: Vec<usize>,
    failed: usize,
}

fn predict_all(
    backend: &dyn Classifier,
    texts: &[String],
    threads: &rayon::ThreadPool,
) -> Result<RunResult, EvalError> {
    let results: Vec<Result<Prediction, ClassifyError>> =
        threads.install(|| texts.par_iter().map(|t| backend.classify(t)).collect());
    let mut out = RunResult {
        predictions: Vec::with_capacity(texts.len()),
        kept: Vec::with_capacity(texts.len()),
        failed: 0,
    };
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(p) => {
                out.predictions.push(p);
                out.kept.push(i);
            }
            Err(e @ ClassifyError::Unparseable { .. }) => {
                tracing::warn!(backend = backend.id(), item = i, error = %e, "excluded from evaluation");
                out.failed += 1;
            }
            Err(e) => {
                return Err(EvalError::Backend {
                    backend: backend.id().to_string(),
                    message: e.to_string(),
                })
            }
        }
    }
    Ok(out)
}

fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect()
}

struct Writer {
    dir: PathBuf,
    runs: Vec<BundleRun>,
    metrics: BTreeMap<String, EvalReport>,
    latency: BTreeMap<String, LatencyReport>,
    files: Vec<String>,
}

impl Writer {
    fn new(dir: PathBuf) -> Result<Self, EvalError> {
        for sub in ["confusion", "plots", "predictions", "data"] {
            let p = dir.join(sub);
            std::fs::create_dir_all(&p).map_err(EvalError::io(&p))?;
        }
        Ok(Self {
            dir,
            runs: Vec::new(),
            metrics: BTreeMap::new(),
            latency: BTreeMap::new(),
            files: Vec::new(),
        })
    }

    fn json(&mut self, rel: &str, value: &impl Serialize) -> Result<(), EvalError> {
        let path = self.dir.join(rel);
        let text = serde_json::to_string_pretty(value).expect("serializable") + "\n";
        std::fs::write(&path, text).map_err(EvalError::io(&path))?;
        self.files.push(rel.to_string());
        Ok(())
    }

    fn export(&mut self, split: &DatasetSplit, pool: &Pool) -> Result<PathBuf, EvalError> {
        let rel = format!("data/{}", sanitize(&split.plan.name));
        let report = export_split(split, pool, self.dir.join(&rel))?;
        for f in report.files {
            if let Ok(r) = f.strip_prefix(&self.dir) {
                self.files.push(r.to_string_lossy().into_owned());
            }
        }
        Ok(self.dir.join(rel))
    }

    #[allow(clippy::too_many_arguments)]
    fn record(
        &mut self,
        mut run: BundleRun,
        taxonomy: &Taxonomy,
        test: &TestSet,
        gold: &[String],
        result: &RunResult,
        groups: &[GroupSpec],
    ) -> Result<(), EvalError> {
        let kept_gold: Vec<&str> = result.kept.iter().map(|&i| gold[i].as_str()).collect();
        let report = evaluate_with_groups(&kept_gold, &result.predictions, taxonomy, groups)?;
        let id = sanitize(&run.run_id);
        run.run_id = id.clone();
        run.n_items = result.predictions.len();
        run.failed_items = result.failed;

        let csv = format!("confusion/{id}.csv");
        let plot = format!("plots/confusion-{id}.json");
        report
            .confusion
            .write_files(&self.dir.join(&csv), &self.dir.join(&plot), &run.run_id)?;
        self.files.push(csv);
        self.files.push(plot);

        let records: Vec<PredictionRecord> = result
            .kept
            .iter()
            .zip(&result.predictions)
            .map(|(&i, p)| PredictionRecord {
                id: test.entries[i].id.clone(),
                gold: gold[i].clone(),
                predicted: p.label_id.clone(),
                scores: p.scores.clone(),
            })
            .collect();
        let preds = format!("predictions/{id}.jsonl");
        write_predictions(&self.dir.join(&preds), taxonomy, &run.backend_id, &records)?;
        self.files.push(preds);

        let latencies: Vec<f64> = result.predictions.iter().map(|p| p.latency).collect();
        self.latency.insert(
            id.clone(),
            LatencyReport::from_samples(&run.backend_id, run.shots, &latencies, 0, result.failed),
        );
        self.metrics.insert(id, report);
        self.runs.push(run);
        Ok(())
    }
}

fn load_taxonomy(path: &Option<PathBuf>, fallback: fn() -> Taxonomy) -> Result<Taxonomy, EvalError> {
    match path {
        Some(p) => Taxonomy::load_file(p).map_err(|e| EvalError::Config(e.to_string())),
        None => Ok(fallback()),
    }
}

fn train_pairs(split: &DatasetSplit, pool: &Pool) -> Vec<(String, String)> {
    split
        .train
        .iter()
        .map(|e| (pool.get(&e.id).expect("sampled from pool").text.clone(), e.label_id.clone()))
        .collect()
}

fn build_trained(
    trainer: &Trainer,
    plan: &SamplingPlan,
    split: &DatasetSplit,
    pool: &Pool,
    taxonomy: &Taxonomy,
) -> Result<Box<dyn Classifier>, EvalError> {
    let id = format!("{}-{}", trainer.id(), plan.name);
    let backend_err = |e: ClassifyError| EvalError::Backend {
        backend: id.clone(),
        message: e.to_string(),
    };
    match trainer {
        Trainer::NaiveBayes { alpha, .. } => Ok(Box::new(
            NaiveBayesClassifier::train(&id, taxonomy.clone(), &train_pairs(split, pool), *alpha)
                .map_err(backend_err)?,
        )),
        Trainer::Remote { per_plan, .. } => {
            let cfg = per_plan
                .get(&plan.name)
                .ok_or_else(|| EvalError::Config(format!("trainer {} has no backend for plan {}", trainer.id(), plan.name)))?;
            build_backend(cfg, taxonomy).map_err(backend_err)
        }
    }
}

/// Runs `config` and writes its report bundle. Reruns with the same config
/// and pool produce identical files apart from `latency.json`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome, EvalError> {
    config.validate()?;
    let pool = Pool::read(&config.pool)?;
    let digest = config.digest();
    let dir = config.output.join(format!("{}-{}", config.kind.as_str(), &digest[..12]));
    if dir.exists() {
        std::fs::remove_dir_all(&dir).map_err(EvalError::io(&dir))?;
    }
    let mut w = Writer::new(dir.clone())?;
    let threads = rayon::ThreadPoolBuilder::new()
        .num_threads(config.concurrency.max(1))
        .build()
        .map_err(|e| EvalError::Config(e.to_string()))?;
    let test_seed = config.seed ^ 0x7465_7374;

    let test = match config.kind {
        ExperimentKind::UnderSpecificity => under_specificity(config, &pool, &mut w, &threads, test_seed)?,
        ExperimentKind::OverSpecificity => over_specificity(config, &pool, &mut w, &threads, test_seed)?,
        ExperimentKind::Distribution => distribution(config, &pool, &mut w, &threads, test_seed)?,
    };

    let metrics = std::mem::take(&mut w.metrics);
    let latency = std::mem::take(&mut w.latency);
    w.json("metrics.json", &metrics)?;
    let latency_path = dir.join("latency.json");
    std::fs::write(
        &latency_path,
        serde_json::to_string_pretty(&latency).expect("serializable") + "\n",
    )
    .map_err(EvalError::io(&latency_path))?;
    w.files.push("latency.json".into());
    w.files.sort();

    let manifest = BundleManifest {
        schema: BUNDLE_SCHEMA.into(),
        version: 1,
        kind: config.kind.as_str().into(),
        name: config.name.clone(),
        config_digest: digest,
        config: {
            let mut v = serde_json::to_value(config).expect("config serializes");
            if let Some(o) = v.as_object_mut() {
                o.remove("output");
                o.remove("pool");
            }
            v
        },
        seed: config.seed,
        pool_digest: pool.digest(),
        test_set_size: test.entries.len(),
        test_set_digest: test.digest(),
        runs: std::mem::take(&mut w.runs),
        files: std::mem::take(&mut w.files),
    };
    let path = dir.join("bundle.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest).expect("serializable") + "\n")
        .map_err(EvalError::io(&path))?;
    Ok(ExperimentOutcome {
        dir,
        manifest,
        metrics,
        latency,
    })
}

fn draw_test(
    pool: &Pool,
    taxonomy: &Taxonomy,
    kind: PlanKind,
    seed: u64,
    w: &mut Writer,
) -> Result<TestSet, EvalError> {
    let plan = SamplingPlan::new("test", kind, seed).with_holdout(Holdout::None);
    let split = sample(pool, taxonomy, &plan)?;
    w.export(&split, pool)?;
    Ok(TestSet::from_split(&split, pool))
}

fn under_specificity(
    config: &ExperimentConfig,
    pool: &Pool,
    w: &mut Writer,
    threads: &rayon::ThreadPool,
    test_seed: u64,
) -> Result<TestSet, EvalError> {
    let canonical = load_taxonomy(&config.taxonomy, Taxonomy::canonical)?;
    let taxonomy = match &config.labels {
        Some(l) => canonical.restrict(l, "subset"),
        None => canonical.information_seeking_subset(),
    }
    .map_err(|e| EvalError::Config(e.to_string()))?;
    let labels: Vec<String> = taxonomy.ids().map(String::from).collect();
    let test = draw_test(
        pool,
        &taxonomy,
        PlanKind::PerClassFixed {
            per_class: config.test_per_class,
            labels: labels.clone(),
        },
        test_seed,
        w,
    )?;
    let plan = &config.plans[0];
    let split = sample_excluding(pool, &taxonomy, plan, &test.ids())?;
    let data_dir = w.export(&split, pool)?;
    let exemplars = data_dir.join("train.jsonl");
    let gold: Vec<String> = test.entries.iter().map(|e| e.label_id.clone()).collect();

    let mut sweep = BTreeMap::<String, Vec<serde_json::Value>>::new();
    for backend in &config.backends {
        let variants: Vec<(BackendConfig, Option<usize>)> = match &backend.kind {
            BackendKind::Prompt { .. } => config
                .shots
                .iter()
                .map(|&k| {
                    let mut b = backend.clone();
                    b.id = format!("{}-k{k}", backend.id);
                    if let BackendKind::Prompt { shots, exemplars: ex, .. } = &mut b.kind {
                        *shots = k;
                        ex.get_or_insert_with(|| exemplars.clone());
                    }
                    (b, Some(k))
                })
                .collect(),
            _ => vec![(backend.clone(), None)],
        };
        for (cfg, shots) in variants {
            let classifier = build_backend(&cfg, &taxonomy).map_err(|e| EvalError::Backend {
                backend: cfg.id.clone(),
                message: e.to_string(),
            })?;
            let result = predict_all(classifier.as_ref(), &test.texts, threads)?;
            let run = BundleRun {
                run_id: cfg.id.clone(),
                backend_id: backend.id.clone(),
                plan: Some(plan.name.clone()),
                scheme: None,
                shots,
                n_items: 0,
                failed_items: 0,
            };
            w.record(run, &taxonomy, &test, &gold, &result, &[])?;
            let id = sanitize(&cfg.id);
            let m = &w.metrics[&id];
            sweep.entry(backend.id.clone()).or_default().push(serde_json::json!({
                "run_id": id,
                "shots": shots,
                "accuracy": m.accuracy,
                "macro_f1": m.macro_f1,
                "macro_auprc": m.macro_auprc,
            }));
        }
    }
    w.json("plots/shot-sweep.json", &sweep)?;
    Ok(test)
}

#[derive(Serialize)]
struct Table1Row {
    model: String,
    scheme: String,
    total_accuracy: f64,
    total_f1: f64,
    total_auprc: Option<f64>,
    toxic_accuracy: f64,
    toxic_f1: f64,
    toxic_f1_weighted: f64,
    toxic_f1_union: f64,
    non_toxic_accuracy: f64,
    non_toxic_f1: f64,
    non_toxic_auprc: Option<f64>,
}

fn over_specificity(
    config: &ExperimentConfig,
    pool: &Pool,
    w: &mut Writer,
    threads: &rayon::ThreadPool,
    test_seed: u64,
) -> Result<TestSet, EvalError> {
    let total = load_taxonomy(&config.taxonomy, Taxonomy::canonical)?;
    let separate = load_taxonomy(&config.separate_taxonomy, Taxonomy::separate_toxic)?;
    let mapping = match &config.mapping {
        Some(p) => LabelMapping::load_file(p, &total)?,
        None => LabelMapping::separate_to_total(&total)?,
    };
    mapping.check_source(&separate)?;
    let toxic_target = crate::dataset::TOXIC_TARGET;
    let toxic_labels: Vec<String> = mapping
        .entries()
        .iter()
        .filter(|(s, t)| t.as_str() == toxic_target && s.as_str() != toxic_target)
        .map(|(s, _)| s.clone())
        .collect();

    let plans: Vec<SamplingPlan> = if config.plans.is_empty() {
        vec![
            SamplingPlan::new(
                "total",
                PlanKind::ToxicTotal {
                    per_class: 100,
                    toxic_labels: toxic_labels.clone(),
                    toxic_target: toxic_target.into(),
                },
                config.seed,
            )
            .with_holdout(Holdout::None),
            SamplingPlan::new(
                "separate",
                PlanKind::ToxicSeparate {
                    per_class: 100,
                    toxic_labels: toxic_labels.clone(),
                },
                config.seed,
            )
            .with_holdout(Holdout::None),
        ]
    } else {
        config.plans.clone()
    };
    let find = |total_kind: bool| {
        plans
            .iter()
            .find(|p| matches!(p.kind, PlanKind::ToxicTotal { .. }) == total_kind
                && matches!(p.kind, PlanKind::ToxicTotal { .. } | PlanKind::ToxicSeparate { .. }))
            .ok_or_else(|| EvalError::Config("over_specificity needs one toxic_total and one toxic_separate plan".into()))
    };
    let (total_plan, separate_plan) = (find(true)?, find(false)?);

    let test = draw_test(
        pool,
        &separate,
        PlanKind::ToxicTotal {
            per_class: config.test_per_class,
            toxic_labels: toxic_labels.clone(),
            toxic_target: toxic_target.into(),
        },
        test_seed,
        w,
    )?;
    let gold: Vec<String> = test.entries.iter().map(|e| e.label_id.clone()).collect();
    let groups = toxic_groups(&total, toxic_target);

    let total_split = sample_excluding(pool, &separate, total_plan, &test.ids())?;
    let separate_split = sample_excluding(pool, &separate, separate_plan, &test.ids())?;
    w.export(&total_split, pool)?;
    w.export(&separate_split, pool)?;

    let mut rows = Vec::new();
    for trainer in &config.trainers {
        for (scheme, plan, split) in [("separate", separate_plan, &separate_split), ("total", total_plan, &total_split)] {
            let frame = if scheme == "total" { &total } else { &separate };
            let model = build_trained(trainer, plan, split, pool, frame)?;
            let mut result = predict_all(model.as_ref(), &test.texts, threads)?;
            if scheme == "separate" {
                result.predictions = collapse_predictions(&result.predictions, &mapping, &separate, &total)?;
            }
            let run = BundleRun {
                run_id: format!("{}-{scheme}", trainer.id()),
                backend_id: trainer.id().to_string(),
                plan: Some(plan.name.clone()),
                scheme: Some(scheme.into()),
                shots: None,
                n_items: 0,
                failed_items: 0,
            };
            w.record(run, &total, &test, &gold, &result, &groups)?;
            let r = &w.metrics[&sanitize(&format!("{}-{scheme}", trainer.id()))];
            let (tox, non) = (
                &r.group("toxic").expect("toxic group").metrics,
                &r.group("non_toxic").expect("non-toxic group").metrics,
            );
            rows.push(Table1Row {
                model: trainer.id().into(),
                scheme: scheme.into(),
                total_accuracy: r.accuracy,
                total_f1: r.macro_f1,
                total_auprc: r.macro_auprc,
                toxic_accuracy: tox.accuracy,
                toxic_f1: tox.macro_f1,
                toxic_f1_weighted: tox.weighted_f1,
                toxic_f1_union: tox.union_macro_f1,
                non_toxic_accuracy: non.accuracy,
                non_toxic_f1: non.macro_f1,
                non_toxic_auprc: non.macro_auprc,
            });
        }
    }
    w.json("table1.json", &rows)?;
    let mut csv = csv::Writer::from_writer(Vec::new());
    for row in &rows {
        csv.serialize(row).expect("in-memory write");
    }
    let bytes = csv.into_inner().expect("in-memory flush");
    let path = w.dir.join("table1.csv");
    std::fs::write(&path, bytes).map_err(EvalError::io(&path))?;
    w.files.push("table1.csv".into());
    Ok(test)
}

fn distribution(
    config: &ExperimentConfig,
    pool: &Pool,
    w: &mut Writer,
    threads: &rayon::ThreadPool,
    test_seed: u64,
) -> Result<TestSet, EvalError> {
    let taxonomy = load_taxonomy(&config.taxonomy, Taxonomy::canonical)?;
    let test = draw_test(
        pool,
        &taxonomy,
        PlanKind::Balanced {
            per_class: config.test_per_class,
        },
        test_seed,
        w,
    )?;
    let gold: Vec<String> = test.entries.iter().map(|e| e.label_id.clone()).collect();

    let mut train_distribution = BTreeMap::new();
    let mut splits = Vec::new();
    for plan in &config.plans {
        let split = sample_excluding(pool, &taxonomy, plan, &test.ids())?;
        w.export(&split, pool)?;
        let counts: Vec<usize> = taxonomy
            .ids()
            .map(|id| split.train.iter().filter(|e| e.label_id == id).count())
            .collect();
        train_distribution.insert(plan.name.clone(), counts);
        splits.push((plan, split));
    }
    w.json(
        "plots/train-distribution.json",
        &serde_json::json!({"labels": taxonomy.ids().collect::<Vec<_>>(), "counts": train_distribution}),
    )?;

    let mut grid = Vec::new();
    for trainer in &config.trainers {
        for (plan, split) in &splits {
            let model = build_trained(trainer, plan, split, pool, &taxonomy)?;
            let result = predict_all(model.as_ref(), &test.texts, threads)?;
            let run_id = format!("{}-{}", trainer.id(), plan.name);
            let run = BundleRun {
                run_id: run_id.clone(),
                backend_id: trainer.id().to_string(),
                plan: Some(plan.name.clone()),
                scheme: None,
                shots: None,
                n_items: 0,
                failed_items: 0,
            };
            w.record(run, &taxonomy, &test, &gold, &result, &[])?;
            let m = &w.metrics[&sanitize(&run_id)];
            grid.push(serde_json::json!({
                "model": trainer.id(),
                "plan": plan.name,
                "accuracy": m.accuracy,
                "macro_f1": m.macro_f1,
                "macro_auprc": m.macro_auprc,
            }));
        }
    }
    w.json("plots/plan-comparison.json", &grid)?;
    Ok(test)
}
