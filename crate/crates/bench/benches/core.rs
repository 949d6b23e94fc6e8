use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};
use tacos_core::classifier::{KeywordClassifier, NaiveBayesClassifier};
use tacos_core::dataset::{sample, Holdout, PlanKind, SamplingPlan};
use tacos_core::routing::RoutingPolicy;
use tacos_core::synthetic::{skewed_counts, synthetic_pool};
use tacos_core::{evaluate, route, Classifier, Prediction, Taxonomy};

fn classify(c: &mut Criterion) {
    let t = Taxonomy::canonical();
    let pool = synthetic_pool(&t, &[40; 21], 1);
    let texts: Vec<String> = pool.iter().map(|i| i.text.clone()).collect();
    let kw = KeywordClassifier::default_canonical();
    let mut i = 0;
    c.bench_function("keyword_classify", |b| {
        b.iter(|| {
            i = (i + 1) % texts.len();
            kw.classify(black_box(&texts[i])).unwrap()
        })
    });

    let examples: Vec<(&str, &str)> = pool.iter().map(|q| (q.text.as_str(), q.label_id.as_deref().unwrap())).collect();
    let nb = NaiveBayesClassifier::train("nb", t.clone(), &examples, 1.0).unwrap();
    c.bench_function("naive_bayes_classify", |b| {
        b.iter(|| {
            i = (i + 1) % texts.len();
            nb.classify(black_box(&texts[i])).unwrap()
        })
    });
}

fn routing(c: &mut Criterion) {
    let t = Taxonomy::canonical();
    let policy = RoutingPolicy::default_policy();
    let ids: Vec<String> = t.ids().map(String::from).collect();
    c.bench_function("route_all_leaves", |b| {
        b.iter(|| {
            for id in &ids {
                black_box(route(&t, &policy, id));
            }
        })
    });
}

fn metrics(c: &mut Criterion) {
    let t = Taxonomy::canonical();
    let n = t.len();
    let gold: Vec<String> = (0..2_100).map(|i| t.leaves()[i % n].id.clone()).collect();
    let preds: Vec<Prediction> = (0..2_100)
        .map(|i| {
            let scores: Vec<f64> = (0..n).map(|j| ((i * 7 + j * 13) % 17 + 1) as f64).collect();
            let sum: f64 = scores.iter().sum();
            Prediction::from_scores(&t, scores.iter().map(|s| s / sum).collect(), 0.0, "b").unwrap()
        })
        .collect();
    c.bench_function("evaluate_2100x21", |b| b.iter(|| evaluate(black_box(&gold), &preds, &t).unwrap()));
}

fn sampling(c: &mut Criterion) {
    let t = Taxonomy::canonical();
    let counts: Vec<usize> = skewed_counts(21, 39_500, 3).iter().map(|c| c + 500).collect();
    let pool = synthetic_pool(&t, &counts, 3);
    let mut group = c.benchmark_group("sample_50k");
    group.sample_size(20);
    for (name, kind) in [
        ("balanced_500", PlanKind::Balanced { per_class: 500 }),
        ("imbalanced_10500", PlanKind::Imbalanced { total: 10_500 }),
    ] {
        let plan = SamplingPlan::new(name, kind, 7).with_holdout(Holdout::None);
        group.bench_function(name, |b| {
            b.iter_batched(|| plan.clone(), |p| sample(&pool, &t, &p).unwrap(), BatchSize::SmallInput)
        });
    }
    group.finish();
}

criterion_group!(benches, classify, routing, metrics, sampling);
criterion_main!(benches);
