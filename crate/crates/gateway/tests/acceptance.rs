//! One check per primary acceptance criterion. Run with
//! `cargo test -p tacos-gateway --test acceptance`; prints a PASS/FAIL line
//! per criterion and exits non-zero if any fails.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tacos_core::classifier::{
    build_backend, BackendConfig, BackendKind, ClassifyError, KeywordClassifier, ScoreFnClassifier, ScoreKind,
};
use tacos_core::dataset::{
    augment_to_parity, sample, AugmentOptions, Holdout, PlanKind, Provenance, SamplingPlan,
};
use tacos_core::eval::{
    benchmark_latency, collapse_predictions, evaluate, evaluate_with_groups, run_experiment, toxic_groups,
    ExperimentConfig, ExperimentKind, LatencyReport, Trainer,
};
use tacos_core::routing::{read_records, route, AuditStore, RoutingAction, RoutingPolicy, TemplateSet};
use tacos_core::synthetic::{skewed_counts, synthetic_pool};
use tacos_core::taxonomy::{ToolRequirement, ToolSet, INFORMATION_SEEKING_IDS};
use tacos_core::{LabelMapping, Prediction, Taxonomy};
use tacos_gateway::{AppState, Snapshot};

type Check = Result<(), String>;
type CheckFn = fn() -> Check;

// `ensure!` negates its condition so that NaN fails the check
macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn taxonomy_structure() -> Check {
    let start = Instant::now();
    let t = Taxonomy::canonical();
    ensure!(t.len() == 21, "{} leaves", t.len());
    let mut sizes: Vec<usize> = t.bucket_counts().into_values().collect();
    sizes.sort_unstable();
    ensure!(sizes == [2, 2, 4, 5, 8], "bucket sizes {sizes:?}");
    let mut seen = BTreeSet::new();
    for id in INFORMATION_SEEKING_IDS {
        match t.tool_requirements(id) {
            Ok(ToolSet::Tools(set)) => {
                ensure!(seen.insert(set.clone()), "{id} repeats tool set {set:?}");
            }
            other => return Err(format!("{id}: {other:?}")),
        }
    }
    // every subset of the three tool axes, exactly once
    let power: BTreeSet<BTreeSet<ToolRequirement>> = (0u8..8)
        .map(|m| ToolRequirement::ALL.iter().enumerate().filter(|(i, _)| m >> i & 1 == 1).map(|(_, t)| *t).collect())
        .collect();
    ensure!(seen == power, "tool sets are not the power set");
    ensure!(start.elapsed() < Duration::from_secs(1), "took {:?}", start.elapsed());
    Ok(())
}

// brute-force oracles, written without reference to the library

fn oracle_f1(gold: &[usize], pred: &[usize], c: usize) -> f64 {
    let tp = gold.iter().zip(pred).filter(|(g, p)| **g == c && **p == c).count() as f64;
    let fp = gold.iter().zip(pred).filter(|(g, p)| **g != c && **p == c).count() as f64;
    let fneg = gold.iter().zip(pred).filter(|(g, p)| **g == c && **p != c).count() as f64;
    let p = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
    let r = if tp + fneg > 0.0 { tp / (tp + fneg) } else { 0.0 };
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

/// Mean over positives of the precision at that positive's score threshold.
fn oracle_ap(gold: &[usize], scores: &[Vec<f64>], c: usize) -> f64 {
    let positives: Vec<usize> = (0..gold.len()).filter(|&i| gold[i] == c).collect();
    let mut total = 0.0;
    for &i in &positives {
        let s = scores[i][c];
        let above: Vec<usize> = (0..gold.len()).filter(|&j| scores[j][c] >= s).collect();
        let hits = above.iter().filter(|&&j| gold[j] == c).count();
        total += hits as f64 / above.len() as f64;
    }
    total / positives.len() as f64
}

fn metric_oracles() -> Check {
    let start = Instant::now();
    let full = Taxonomy::canonical();
    let ids: Vec<String> = full.ids().map(String::from).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for instance in 0..100 {
        let k = rng.random_range(2..=5);
        let t = full.restrict(&ids[..k], "oracle").map_err(|e| e.to_string())?;
        let n = rng.random_range(1..=50);
        let gold: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let mut preds = Vec::new();
        let mut scores = Vec::new();
        for _ in 0..n {
            // coarse integer weights produce plenty of ties
            let mut w: Vec<f64> = (0..k).map(|_| rng.random_range(0..4) as f64).collect();
            if w.iter().sum::<f64>() == 0.0 {
                w[0] = 1.0;
            }
            let sum: f64 = w.iter().sum();
            let s: Vec<f64> = w.iter().map(|x| x / sum).collect();
            let p = Prediction::from_scores(&t, s.clone(), 0.0, "oracle").map_err(|e| e.to_string())?;
            scores.push(s);
            preds.push(p);
        }
        let pred_idx: Vec<usize> = preds.iter().map(|p| t.index_of(&p.label_id).unwrap()).collect();
        let gold_ids: Vec<&str> = gold.iter().map(|&g| ids[g].as_str()).collect();
        let report = evaluate(&gold_ids, &preds, &t).map_err(|e| e.to_string())?;

        let present: Vec<usize> = (0..k).filter(|c| gold.contains(c)).collect();
        let acc = gold.iter().zip(&pred_idx).filter(|(g, p)| g == p).count() as f64 / n as f64;
        let f1 = present.iter().map(|&c| oracle_f1(&gold, &pred_idx, c)).sum::<f64>() / present.len() as f64;
        let auprc = (present.len() >= 2)
            .then(|| present.iter().map(|&c| oracle_ap(&gold, &scores, c)).sum::<f64>() / present.len() as f64);

        ensure!((report.accuracy - acc).abs() <= 1e-9, "instance {instance}: accuracy {} vs {acc}", report.accuracy);
        ensure!((report.macro_f1 - f1).abs() <= 1e-9, "instance {instance}: macro F1 {} vs {f1}", report.macro_f1);
        match (report.macro_auprc, auprc) {
            (Some(a), Some(b)) => ensure!((a - b).abs() <= 1e-9, "instance {instance}: AUPRC {a} vs {b}"),
            (None, None) => {}
            (a, b) => return Err(format!("instance {instance}: AUPRC {a:?} vs {b:?}")),
        }
    }
    ensure!(start.elapsed() < Duration::from_secs(10), "took {:?}", start.elapsed());
    Ok(())
}

fn collapse_protocol() -> Check {
    let total = Taxonomy::canonical();
    let sep = Taxonomy::separate_toxic();
    let mapping = LabelMapping::separate_to_total(&total).map_err(|e| e.to_string())?;
    let sep_ids: Vec<&str> = sep.ids().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = 400;
    let gold_sep: Vec<&str> = (0..n).map(|_| sep_ids[rng.random_range(0..sep.len())]).collect();
    let mut preds = Vec::new();
    for _ in 0..n {
        let w: Vec<f64> = (0..sep.len()).map(|_| rng.random_range(1..16) as f64).collect();
        let sum: f64 = w.iter().sum();
        preds.push(Prediction::from_scores(&sep, w.iter().map(|x| x / sum).collect(), 0.0, "m").map_err(|e| e.to_string())?);
    }
    let groups = toxic_groups(&total, "crime_or_toxic");

    // route A: the harness's collapse
    let collapsed = collapse_predictions(&preds, &mapping, &sep, &total).map_err(|e| e.to_string())?;
    let gold_total = mapping.collapse_labels(&gold_sep).map_err(|e| e.to_string())?;
    let a = evaluate_with_groups(&gold_total, &collapsed, &total, &groups).map_err(|e| e.to_string())?;

    // route B: predictions built directly in the 21-class frame
    let direct: Vec<Prediction> = preds
        .iter()
        .map(|p| {
            let mut scores = vec![0.0; total.len()];
            for (i, s) in p.scores.iter().enumerate() {
                let target = mapping.map(sep_ids[i]).unwrap();
                scores[total.index_of(target).unwrap()] += s;
            }
            Prediction {
                label_id: mapping.map(&p.label_id).unwrap().to_string(),
                scores,
                latency: 0.0,
                backend_id: "m".into(),
            }
        })
        .collect();
    let b = evaluate_with_groups(&gold_total, &direct, &total, &groups).map_err(|e| e.to_string())?;
    ensure!(
        serde_json::to_value(&a).unwrap() == serde_json::to_value(&b).unwrap(),
        "collapsed and pre-collapsed reports differ"
    );

    // the harness's Table-1 comparison
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    synthetic_pool(&sep, &vec![70; sep.len()], 8).write(dir.path().join("pool.jsonl")).map_err(|e| e.to_string())?;
    let toxic: Vec<String> = sep.ids().filter(|id| id.starts_with("toxic_")).map(String::from).collect();
    let mut cfg = experiment_config(ExperimentKind::OverSpecificity, dir.path());
    cfg.plans = vec![
        SamplingPlan::new(
            "total",
            PlanKind::ToxicTotal {
                per_class: 40,
                toxic_labels: toxic.clone(),
                toxic_target: "crime_or_toxic".into(),
            },
            2,
        )
        .with_holdout(Holdout::None),
        SamplingPlan::new("separate", PlanKind::ToxicSeparate { per_class: 40, toxic_labels: toxic }, 2)
            .with_holdout(Holdout::None),
    ];
    cfg.test_per_class = 20;
    let out = run_experiment(&cfg).map_err(|e| e.to_string())?;
    let table: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.dir.join("table1.json")).map_err(|e| e.to_string())?).unwrap();
    let rows = table.as_array().ok_or("table1.json is not an array")?;
    ensure!(rows.len() == 2, "{} rows", rows.len());
    for row in rows {
        for key in ["total_accuracy", "total_f1", "total_auprc", "toxic_accuracy", "toxic_f1", "non_toxic_accuracy", "non_toxic_f1", "non_toxic_auprc"] {
            ensure!(row.get(key).is_some(), "row lacks {key}");
        }
    }
    let sizes: BTreeSet<usize> = out.metrics.values().map(|r| r.n_items).collect();
    ensure!(sizes.len() == 1, "runs used different test sets: {sizes:?}");
    Ok(())
}

fn experiment_config(kind: ExperimentKind, dir: &std::path::Path) -> ExperimentConfig {
    ExperimentConfig {
        name: "acceptance".into(),
        kind,
        pool: dir.join("pool.jsonl"),
        output: dir.join("reports"),
        seed: 5,
        plans: Vec::new(),
        backends: Vec::new(),
        trainers: vec![Trainer::NaiveBayes {
            id: "nb".into(),
            alpha: 1.0,
        }],
        shots: vec![0, 1, 5],
        replication: true,
        test_per_class: 10,
        concurrency: 4,
        taxonomy: None,
        separate_taxonomy: None,
        mapping: None,
        labels: None,
    }
}

fn sampling_plans() -> Check {
    let t = Taxonomy::canonical();
    let counts: Vec<usize> = skewed_counts(21, 39_500, 11).iter().map(|c| c + 500).collect();
    let pool = synthetic_pool(&t, &counts, 11);
    ensure!(pool.len() >= 50_000, "pool has {} items", pool.len());
    let n_pool = pool.len() as f64;

    let start = Instant::now();
    let run = |kind: PlanKind| -> Result<(Vec<u8>, BTreeMap<String, usize>), String> {
        let plan = SamplingPlan::new("p", kind, 99).with_holdout(Holdout::None);
        let a = sample(&pool, &t, &plan).map_err(|e| e.to_string())?;
        let b = sample(&pool, &t, &plan).map_err(|e| e.to_string())?;
        let (ja, jb) = (serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap());
        ensure!(ja == jb, "plan is not byte-deterministic");
        let mut per = BTreeMap::new();
        for e in &a.train {
            *per.entry(e.label_id.clone()).or_insert(0) += 1;
        }
        Ok((ja, per))
    };
    let (_, balanced) = run(PlanKind::Balanced { per_class: 500 })?;
    ensure!(balanced.values().sum::<usize>() == 10_500 && balanced.len() == 21, "balanced: {balanced:?}");
    let (_, fixed) = run(PlanKind::PerClassFixed {
        per_class: 200,
        labels: INFORMATION_SEEKING_IDS.iter().map(|s| s.to_string()).collect(),
    })?;
    ensure!(fixed.values().sum::<usize>() == 1_600 && fixed.len() == 8, "per_class_fixed: {fixed:?}");
    for (kind, total) in [
        (PlanKind::Imbalanced { total: 10_500 }, 10_500),
        (PlanKind::ImbalancedLarge { base_total: 10_500 }, 21_000),
    ] {
        let (_, per) = run(kind)?;
        for (c, leaf) in t.leaves().iter().enumerate() {
            let expected = total as f64 * counts[c] as f64 / n_pool;
            let got = per.get(&leaf.id).copied().unwrap_or(0) as f64;
            ensure!((got - expected).abs() <= 1.0, "{}: {got} vs proportional {expected:.2}", leaf.id);
        }
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(5), "50K-pool sampling took {elapsed:?}");

    let sep = Taxonomy::separate_toxic();
    let sep_pool = synthetic_pool(&sep, &vec![120; sep.len()], 12);
    let toxic: Vec<String> = sep.ids().filter(|id| id.starts_with("toxic_")).map(String::from).collect();
    let plan = SamplingPlan::new("s", PlanKind::ToxicSeparate { per_class: 100, toxic_labels: toxic }, 3)
        .with_holdout(Holdout::None);
    let a = sample(&sep_pool, &sep, &plan).map_err(|e| e.to_string())?;
    let b = sample(&sep_pool, &sep, &plan).map_err(|e| e.to_string())?;
    ensure!(serde_json::to_vec(&a).unwrap() == serde_json::to_vec(&b).unwrap(), "toxic_separate not deterministic");
    let labels: BTreeSet<&str> = a.train.iter().map(|e| e.label_id.as_str()).collect();
    ensure!(a.train.len() == 2_900 && labels.len() == 29, "toxic_separate: {} items over {} labels", a.train.len(), labels.len());
    Ok(())
}

fn augmentation_parity() -> Check {
    let t = Taxonomy::canonical();
    let counts = skewed_counts(21, 600, 4);
    let mut pool = synthetic_pool(&t, &counts, 4);
    let max = *counts.iter().max().unwrap();
    let calls = AtomicUsize::new(0);
    let generator = |_: &str| -> Result<String, ClassifyError> {
        Ok(format!("stub generated query number {}", calls.fetch_add(1, Ordering::SeqCst)))
    };
    let report = augment_to_parity(&mut pool, &t, &generator, &AugmentOptions::default()).map_err(|e| e.to_string())?;
    ensure!(report.target == max, "target {} vs max {max}", report.target);
    let after = pool.label_counts(&t);
    ensure!(after.iter().all(|&c| c == max), "counts after augmentation: {after:?}");
    let synthetic = pool.iter().filter(|i| i.provenance == Provenance::Synthetic).count();
    ensure!(synthetic == 21 * max - counts.iter().sum::<usize>(), "{synthetic} synthetic items");
    Ok(())
}

fn routing_table() -> Check {
    let t = Taxonomy::canonical();
    let policy = RoutingPolicy::default_policy();
    let mut unsafe_blocked = 0;
    for leaf in t.leaves() {
        let d = route(&t, &policy, &leaf.id);
        ensure!(d.fail_closed.is_none(), "{} fails closed: {:?}", leaf.id, d.fail_closed);
        if leaf.path.is_unsafe() {
            ensure!(d.action == RoutingAction::BlockWithWarning && d.log_unsafe, "{} is unsafe but {:?}", leaf.id, d.action);
            unsafe_blocked += 1;
        }
        if let Ok(ToolSet::Tools(set)) = t.tool_requirements(&leaf.id) {
            ensure!(d.tools == set, "{}: tools {:?} vs {:?}", leaf.id, d.tools, set);
        }
    }
    ensure!(unsafe_blocked == 9, "{unsafe_blocked} unsafe leaves");

    let broken = ScoreFnClassifier::new("down", t.clone(), ScoreKind::Probabilistic, |_| {
        Err(ClassifyError::Transport("connection refused".into()))
    });
    let h = common::Harness::new(AppState::new(
        Snapshot {
            taxonomy: t,
            policy,
            templates: TemplateSet::default_templates(),
            backend: Arc::new(broken),
        },
        AuditStore::in_memory(),
    ));
    let r = h.classify("how much ibuprofen can I take");
    ensure!(r.status != StatusCode::OK, "failure path returned 200");
    ensure!(r.json()["decision"]["action"] == "block_with_warning", "failure path: {}", r.json());
    Ok(())
}

fn latency_harness() -> Check {
    let t = Taxonomy::canonical();
    let pool = synthetic_pool(&t, &[50; 21], 6);
    let queries: Vec<&str> = pool.iter().map(|i| i.text.as_str()).take(1_010).collect();
    let kw = KeywordClassifier::default_canonical();
    let report = benchmark_latency(&kw, &queries, 10).map_err(|e| e.to_string())?;
    ensure!(report.samples.len() == 1_000, "{} samples", report.samples.len());
    ensure!(report.p50 < 1e-3, "keyword p50 {:.3} ms", report.p50 * 1e3);

    let url = common::serve(Router::new().route(
        "/chat",
        post(|Json(_): Json<serde_json::Value>| async {
            Json(serde_json::json!({"choices": [{"message": {"role": "assistant", "content": "general_inquiry"}}]}))
        }),
    ));
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    synthetic_pool(&t, &[30; 21], 7).write(dir.path().join("pool.jsonl")).map_err(|e| e.to_string())?;
    let mut cfg = experiment_config(ExperimentKind::UnderSpecificity, dir.path());
    cfg.trainers.clear();
    cfg.plans = vec![SamplingPlan::new(
        "is8",
        PlanKind::PerClassFixed {
            per_class: 20,
            labels: INFORMATION_SEEKING_IDS.iter().map(|s| s.to_string()).collect(),
        },
        3,
    )
    .with_holdout(Holdout::None)];
    cfg.backends = vec![BackendConfig {
        id: "chat".into(),
        labels: None,
        kind: BackendKind::Prompt {
            endpoint: format!("{url}/chat"),
            model: "stub".into(),
            credentials_env: None,
            shots: 0,
            seed: 1,
            exemplars: None,
            timeout_secs: 5.0,
            retries: 0,
            max_in_flight: 4,
        },
    }];
    let out = run_experiment(&cfg).map_err(|e| e.to_string())?;
    let latency: BTreeMap<String, LatencyReport> =
        serde_json::from_slice(&std::fs::read(out.dir.join("latency.json")).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    let shots: BTreeSet<Option<usize>> = latency.values().map(|l| l.shots).collect();
    ensure!(shots == [Some(0), Some(1), Some(5)].into_iter().collect(), "latency shots {shots:?}");
    ensure!(latency.values().all(|l| !l.samples.is_empty()), "empty latency samples");
    Ok(())
}

fn gateway_end_to_end() -> Check {
    let t = Taxonomy::canonical();
    let policy = RoutingPolicy::default_policy();
    let url = common::encoder_stub(&t);
    let cfg = BackendConfig {
        id: "encoder".into(),
        labels: None,
        kind: BackendKind::Encoder {
            endpoint: format!("{url}/score"),
            credentials_env: None,
            timeout_secs: 5.0,
            retries: 0,
            max_in_flight: 8,
        },
    };
    let backend = build_backend(&cfg, &t).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let audit_path = dir.path().join("audit.jsonl");
    let audit = AuditStore::open(&audit_path).map_err(|e| e.to_string())?;
    let h = common::Harness::new(AppState::new(
        Snapshot {
            taxonomy: t.clone(),
            policy: policy.clone(),
            templates: TemplateSet::default_templates(),
            backend: Arc::from(backend),
        },
        audit,
    ));

    let mut expected_counts: BTreeMap<String, u64> = BTreeMap::new();
    for i in 0..100 {
        let leaf = &t.leaves()[i % t.len()];
        let r = h.classify(&common::tagged(&format!("synthetic suite query {i}"), &leaf.id));
        ensure!(r.status == StatusCode::OK, "query {i}: HTTP {}", r.status);
        let v = r.json();
        let rule = &policy.rules[&leaf.id];
        let expected_tools: Vec<String> = match (rule.action, t.tool_requirements(&leaf.id)) {
            (RoutingAction::AnswerWithTools, Ok(ToolSet::Tools(set))) => {
                set.iter().map(|x| serde_json::to_value(x).unwrap().as_str().unwrap().to_string()).collect()
            }
            _ => Vec::new(),
        };
        let tools: Vec<String> = serde_json::from_value(v["decision"]["tools"].clone()).map_err(|e| e.to_string())?;
        ensure!(v["label_id"] == leaf.id.as_str(), "query {i}: label {} vs {}", v["label_id"], leaf.id);
        ensure!(
            v["decision"]["action"] == serde_json::to_value(rule.action).unwrap(),
            "query {i}: action {}",
            v["decision"]["action"]
        );
        ensure!(tools == expected_tools, "query {i}: tools {tools:?} vs {expected_tools:?}");
        if leaf.path.is_unsafe() {
            *expected_counts.entry(leaf.id.clone()).or_insert(0) += 1;
        }
    }
    let counters = h.state.audit.counters();
    ensure!(counters == expected_counts, "audit counters {counters:?} vs {expected_counts:?}");
    let served = h.get("/v1/audit/counters").json();
    ensure!(
        served["counters"] == serde_json::to_value(&expected_counts).unwrap(),
        "served counters {}",
        served["counters"]
    );
    let records = read_records(&audit_path).map_err(|e| e.to_string())?;
    ensure!(records.len() as u64 == expected_counts.values().sum::<u64>(), "{} audit records", records.len());
    Ok(())
}

fn main() {
    let checks: [(&str, CheckFn); 8] = [
        ("taxonomy structure", taxonomy_structure),
        ("metric oracles", metric_oracles),
        ("collapse protocol", collapse_protocol),
        ("sampling plans", sampling_plans),
        ("augmentation parity", augmentation_parity),
        ("routing table", routing_table),
        ("latency harness", latency_harness),
        ("end-to-end gateway", gateway_end_to_end),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let start = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let ms = start.elapsed().as_secs_f64() * 1e3;
        match result {
            Ok(()) => println!("PASS  {name} ({ms:.0} ms)"),
            Err(e) => {
                failed += 1;
                println!("FAIL  {name} ({ms:.0} ms): {e}");
            }
        }
    }
    println!("{} of {} acceptance criteria passed", checks.len() - failed, checks.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
