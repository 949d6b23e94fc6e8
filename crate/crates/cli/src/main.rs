use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use tacos_core::classifier::{build_backend, BackendConfig, ChatClient, Classifier, KeywordClassifier};
use tacos_core::dataset::{
    augment_to_parity, export_split, ingest, llm_label, sample, AugmentOptions, DatasetSplit, LabelOptions, Pool,
    SamplingPlan,
};
use tacos_core::eval::{
    benchmark_latency, collapse_predictions, confusion, evaluate_with_groups, read_predictions, run_experiment,
    toxic_groups, ExperimentConfig,
};
use tacos_core::routing::{route, RoutingPolicy};
use tacos_core::taxonomy::ToolSet;
use tacos_core::{LabelMapping, Taxonomy};
use tacos_gateway::GatewayConfig;

#[derive(Parser)]
#[command(name = "tacos", version, about = "Clinical query classification, routing and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print or check a taxonomy definition.
    Taxonomy {
        #[command(flatten)]
        tax: TaxonomyArg,
        /// Emit JSON instead of the indented tree.
        #[arg(long)]
        json: bool,
    },
    /// Show the routing decision for a label.
    Route {
        label: String,
        #[command(flatten)]
        tax: TaxonomyArg,
        #[arg(long)]
        policy: Option<PathBuf>,
    },
    /// Classify and route queries given as arguments, or one per stdin line.
    Classify {
        texts: Vec<String>,
        #[command(flatten)]
        backend: BackendArg,
        #[arg(long)]
        policy: Option<PathBuf>,
    },
    /// Add raw corpus files (JSON lines with a `text` field) to a pool.
    Ingest {
        #[arg(long)]
        pool: PathBuf,
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Label unlabeled pool items with a backend. The pool is checkpointed
    /// after every batch.
    Label {
        #[arg(long)]
        pool: PathBuf,
        #[command(flatten)]
        backend: BackendArg,
        #[arg(long, default_value_t = 8)]
        concurrency: usize,
        #[arg(long, default_value_t = 64)]
        batch_size: usize,
        #[arg(long)]
        retry_flagged: bool,
    },
    /// Generate synthetic queries until every class matches the largest.
    Augment {
        #[arg(long)]
        pool: PathBuf,
        #[command(flatten)]
        tax: TaxonomyArg,
        /// Chat-completions endpoint of the generator model.
        #[arg(long)]
        endpoint: String,
        #[arg(long)]
        model: String,
        #[arg(long)]
        credentials_env: Option<String>,
        #[arg(long, default_value_t = 0.9)]
        temperature: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        locale: Option<String>,
        #[arg(long, default_value_t = 8)]
        concurrency: usize,
        #[arg(long, default_value_t = 60.0)]
        timeout_secs: f64,
    },
    /// Draw a split from a pool according to a plan.
    Sample {
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        plan: PathBuf,
        /// Overrides the plan's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        tax: TaxonomyArg,
        /// Split JSON destination; stdout if absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write train/validation/test files for a plan or a saved split.
    Export {
        #[arg(long)]
        pool: PathBuf,
        #[arg(long, conflicts_with = "split", required_unless_present = "split")]
        plan: Option<PathBuf>,
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        tax: TaxonomyArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Metrics for a predictions file.
    Evaluate {
        #[command(flatten)]
        preds: PredictionsArg,
        /// Add Toxic / Non-Toxic group blocks.
        #[arg(long)]
        toxic_groups: bool,
    },
    /// Confusion matrix CSV and plot data for a predictions file.
    Confusion {
        #[command(flatten)]
        preds: PredictionsArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-query latency of a backend.
    Bench {
        #[command(flatten)]
        backend: BackendArg,
        /// Queries: plain lines or JSON lines with a `text` field.
        #[arg(long)]
        queries: PathBuf,
        #[arg(long, default_value_t = 10)]
        warmup: usize,
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Run an experiment config and write its report bundle.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the HTTP gateway.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct TaxonomyArg {
    /// Taxonomy definition file, or `canonical` / `separate_toxic`.
    #[arg(long, default_value = "canonical")]
    taxonomy: String,
}

impl TaxonomyArg {
    fn load(&self) -> Result<Taxonomy> {
        load_taxonomy(&self.taxonomy)
    }
}

fn load_taxonomy(spec: &str) -> Result<Taxonomy> {
    Ok(match spec {
        "canonical" => Taxonomy::canonical(),
        "separate_toxic" => Taxonomy::separate_toxic(),
        path => Taxonomy::load_file(path).with_context(|| format!("loading taxonomy {path}"))?,
    })
}

#[derive(Args)]
struct BackendArg {
    #[command(flatten)]
    tax: TaxonomyArg,
    /// TOML file with `[[backends]]` tables; the keyword baseline if absent.
    #[arg(long)]
    backends: Option<PathBuf>,
    /// Backend id within the file; the first one if absent.
    #[arg(long)]
    backend: Option<String>,
}

#[derive(Deserialize)]
struct BackendsFile {
    backends: Vec<BackendConfig>,
}

impl BackendArg {
    fn build(&self) -> Result<(Taxonomy, Box<dyn Classifier>)> {
        let taxonomy = self.tax.load()?;
        let Some(path) = &self.backends else {
            if self.tax.taxonomy != "canonical" {
                bail!("the built-in keyword baseline only covers the canonical taxonomy; pass --backends");
            }
            return Ok((taxonomy, Box::new(KeywordClassifier::default_canonical())));
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut file: BackendsFile = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let mut config = match &self.backend {
            Some(id) => file
                .backends
                .into_iter()
                .find(|b| &b.id == id)
                .with_context(|| format!("no backend {id:?} in {}", path.display()))?,
            None if !file.backends.is_empty() => file.backends.remove(0),
            None => bail!("{} defines no backends", path.display()),
        };
        config.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        let backend = build_backend(&config, &taxonomy)?;
        let taxonomy = backend.taxonomy().clone();
        Ok((taxonomy, backend))
    }
}

#[derive(Args)]
struct PredictionsArg {
    #[arg(long)]
    predictions: PathBuf,
    /// Frame the predictions were made in.
    #[command(flatten)]
    tax: TaxonomyArg,
    /// Collapse into the canonical frame with this mapping CSV, or `default`
    /// for the built-in toxic subtype mapping.
    #[arg(long)]
    collapse: Option<String>,
}

impl PredictionsArg {
    /// Gold labels and predictions, collapsed if requested, with their frame.
    fn load(&self) -> Result<(Taxonomy, Vec<String>, Vec<tacos_core::Prediction>)> {
        let source = self.tax.load()?;
        let (header, records) = read_predictions(&self.predictions)?;
        if records.is_empty() {
            bail!("{} has no predictions", self.predictions.display());
        }
        let backend = header.map(|h| h.backend_id).unwrap_or_else(|| "file".into());
        let preds: Vec<_> = records.iter().map(|r| r.prediction(&backend)).collect();
        let gold: Vec<String> = records.iter().map(|r| r.gold.clone()).collect();
        let Some(mapping) = &self.collapse else {
            return Ok((source, gold, preds));
        };
        let target = Taxonomy::canonical();
        let mapping = match mapping.as_str() {
            "default" => LabelMapping::separate_to_total(&target)?,
            path => LabelMapping::load_file(path, &target)?,
        };
        mapping.check_source(&source)?;
        let preds = collapse_predictions(&preds, &mapping, &source, &target)?;
        let gold = mapping.collapse_labels(&gold)?;
        Ok((target, gold, preds))
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn load_plan(path: &Path, seed: Option<u64>) -> Result<SamplingPlan> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut plan = SamplingPlan::parse_toml(&text)?;
    if let Some(s) = seed {
        plan.seed = s;
    }
    Ok(plan)
}

fn read_queries(path: &Path) -> Result<Vec<String>> {
    let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for line in std::io::BufReader::new(file).lines() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if trimmed.starts_with('{') {
            let v: serde_json::Value = serde_json::from_str(trimmed)?;
            if let Some(t) = v.get("text").and_then(|t| t.as_str()) {
                out.push(t.to_string());
            }
        } else {
            out.push(trimmed.to_string());
        }
    }
    Ok(out)
}

fn print_tree(t: &Taxonomy) {
    println!("{} ({} leaves)", t.version, t.len());
    let mut last: Vec<&str> = Vec::new();
    for (i, leaf) in t.leaves().iter().enumerate() {
        let segs = leaf.path.segments();
        for (depth, seg) in segs.iter().enumerate() {
            if last.get(depth) != Some(seg) {
                println!("{}{seg}", "  ".repeat(depth + 1));
            }
        }
        last = segs.clone();
        let tools = match t.tool_requirements(&leaf.id) {
            Ok(ToolSet::Tools(set)) => {
                let names: Vec<String> = set.iter().map(|x| format!("{x:?}")).collect();
                format!("  tools: [{}]", names.join(", "))
            }
            _ => String::new(),
        };
        println!("{}{i:>2} {}{tools}", "  ".repeat(segs.len() + 1), leaf.id);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Taxonomy { tax, json } => {
            let t = tax.load()?;
            if json {
                print_json(&t)?;
            } else {
                print_tree(&t);
            }
        }
        Command::Route { label, tax, policy } => {
            let t = tax.load()?;
            let policy = match policy {
                Some(p) => RoutingPolicy::load_file(p)?,
                None => RoutingPolicy::default_policy(),
            };
            print_json(&route(&t, &policy, &label))?;
        }
        Command::Classify { texts, backend, policy } => {
            let (t, clf) = backend.build()?;
            let policy = match policy {
                Some(p) => RoutingPolicy::load_file(p)?,
                None => RoutingPolicy::default_policy(),
            };
            let texts = if texts.is_empty() {
                std::io::stdin().lock().lines().collect::<Result<Vec<_>, _>>()?
            } else {
                texts
            };
            let mut out = std::io::stdout().lock();
            for text in texts.iter().filter(|s| !s.trim().is_empty()) {
                let line = match clf.classify(text) {
                    Ok(p) => serde_json::json!({
                        "label_id": p.label_id,
                        "latency": p.latency,
                        "decision": route(&t, &policy, &p.label_id),
                    }),
                    Err(e) => serde_json::json!({
                        "error": e.to_string(),
                        "decision": tacos_core::RoutingDecision::fail_closed("unclassified", "classification failed"),
                    }),
                };
                writeln!(out, "{line}")?;
            }
        }
        Command::Ingest { pool, files } => {
            let mut p = if pool.exists() { Pool::read(&pool)? } else { Pool::new() };
            let report = ingest(&mut p, &files)?;
            p.write(&pool)?;
            for (file, line, why) in &report.skipped {
                eprintln!("skipped {}:{line}: {why}", file.display());
            }
            eprintln!(
                "read {}, added {}, duplicates {}, pool size {}",
                report.read,
                report.added,
                report.duplicates,
                p.len()
            );
        }
        Command::Label {
            pool,
            backend,
            concurrency,
            batch_size,
            retry_flagged,
        } => {
            let (_, clf) = backend.build()?;
            let mut p = Pool::read(&pool)?;
            let opts = LabelOptions {
                concurrency,
                checkpoint: Some(pool.clone()),
                batch_size,
                retry_flagged,
            };
            let report = llm_label(&mut p, clf.as_ref(), &opts)?;
            p.write(&pool)?;
            print_json(&report)?;
        }
        Command::Augment {
            pool,
            tax,
            endpoint,
            model,
            credentials_env,
            temperature,
            seed,
            locale,
            concurrency,
            timeout_secs,
        } => {
            let t = tax.load()?;
            let client = ChatClient::new(
                &endpoint,
                &model,
                credentials_env,
                Duration::from_secs_f64(timeout_secs),
                2,
                concurrency,
            )?
            .with_temperature(temperature);
            let mut p = Pool::read(&pool)?;
            let opts = AugmentOptions {
                seed,
                concurrency,
                checkpoint: Some(pool.clone()),
                locale,
                ..Default::default()
            };
            let report = augment_to_parity(&mut p, &t, &client, &opts)?;
            p.write(&pool)?;
            print_json(&report)?;
        }
        Command::Sample {
            pool,
            plan,
            seed,
            tax,
            out,
        } => {
            let t = tax.load()?;
            let split = sample(&Pool::read(&pool)?, &t, &load_plan(&plan, seed)?)?;
            eprintln!(
                "train {}, validation {}, test {}",
                split.train.len(),
                split.validation.len(),
                split.test.len()
            );
            match out {
                Some(path) => std::fs::write(&path, serde_json::to_vec_pretty(&split)?)?,
                None => print_json(&split)?,
            }
        }
        Command::Export {
            pool,
            plan,
            split,
            seed,
            tax,
            out,
        } => {
            let p = Pool::read(&pool)?;
            let split: DatasetSplit = match (plan, split) {
                (Some(plan), _) => sample(&p, &tax.load()?, &load_plan(&plan, seed)?)?,
                (None, Some(path)) => serde_json::from_slice(&std::fs::read(&path)?)
                    .with_context(|| format!("parsing split {}", path.display()))?,
                (None, None) => unreachable!("clap requires one of --plan / --split"),
            };
            print_json(&export_split(&split, &p, &out)?)?;
        }
        Command::Evaluate { preds, toxic_groups: groups } => {
            let (t, gold, predictions) = preds.load()?;
            let specs = if groups { toxic_groups(&t, "crime_or_toxic") } else { Vec::new() };
            print_json(&evaluate_with_groups(&gold, &predictions, &t, &specs)?)?;
        }
        Command::Confusion { preds, out } => {
            let (t, gold, predictions) = preds.load()?;
            let labels: Vec<&str> = predictions.iter().map(|p| p.label_id.as_str()).collect();
            let m = confusion(&gold, &labels, &t)?;
            std::fs::create_dir_all(&out)?;
            m.write_files(&out.join("confusion.csv"), &out.join("confusion-plot.json"), "confusion")?;
            print!("{}", m.to_csv());
        }
        Command::Bench {
            backend,
            queries,
            warmup,
            limit,
        } => {
            let (_, clf) = backend.build()?;
            let mut qs = read_queries(&queries)?;
            if let Some(n) = limit {
                qs.truncate(n + warmup);
            }
            let report = benchmark_latency(clf.as_ref(), &qs, warmup)?;
            eprintln!(
                "{}: p50 {:.3} ms, p95 {:.3} ms, mean {:.3} ms over {} queries ({} failed)",
                report.backend_id,
                report.p50 * 1e3,
                report.p95 * 1e3,
                report.mean * 1e3,
                report.samples.len(),
                report.failures
            );
            print_json(&report)?;
        }
        Command::Experiment { config, seed } => {
            let mut cfg = ExperimentConfig::load_file(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let outcome = run_experiment(&cfg)?;
            let summary: BTreeMap<&str, serde_json::Value> = outcome
                .metrics
                .iter()
                .map(|(run, r)| {
                    (
                        run.as_str(),
                        serde_json::json!({
                            "accuracy": r.accuracy,
                            "macro_f1": r.macro_f1,
                            "macro_auprc": r.macro_auprc,
                        }),
                    )
                })
                .collect();
            print_json(&summary)?;
            println!("{}", outcome.dir.display());
        }
        Command::Serve { config } => {
            let config = GatewayConfig::load_file(&config)?;
            tacos_gateway::serve(config, |addr| eprintln!("listening on {addr}"))?;
        }
    }
    Ok(())
}

fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
