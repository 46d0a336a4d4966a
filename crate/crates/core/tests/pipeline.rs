mod common;

use fontpair::dataset::{sample_negatives, split_by_header, FontFeature};
use fontpair::evaluation::{binary_eval, evaluate_topn, EvalConfig, Recommender};
use fontpair::metric_learning::{train_asml, train_ml, LearningRateSchedule};
use fontpair::pair_extraction::{extract_from_text, ExtractionConfig};
use fontpair::{DsknnParams, Engine, EngineSnapshot, FeatureStore, Method, PairDataset, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Page records for `docs` documents where each header family has a
/// preferred body family, plus some noise.
fn synthetic_pages(docs: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::new();
    for d in 0..docs {
        let family = rng.random_range(0..8);
        let body = if rng.random_bool(0.95) { family } else { rng.random_range(0..8) };
        let header = format!("Head{family}v{}-Bold", rng.random_range(0..5));
        let body_font = format!("Text{body}-Regular");
        out.push_str(&format!("doc{d}\t0\t{header}\t36\t50,40,550,90\t20\n"));
        out.push_str(&format!("doc{d}\t0\t{body_font}\t11\t50,120,550,700\t1500\n"));
    }
    out
}

/// Header and body features sharing a latent family direction.
fn synthetic_features(seed: u64) -> FeatureStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = FeatureStore::new();
    let draw = |f: usize, rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..8).map(|j| if j == f { 2.0 } else { 0.0 } + rng.random_range(-0.3..0.3)).collect()
    };
    for f in 0..8 {
        for k in 0..5 {
            let v = draw(f, &mut rng);
            store.insert(FontFeature::new(format!("Head{f}v{k}-Bold"), v)).unwrap();
        }
        let v = draw(f, &mut rng);
        store.insert(FontFeature::new(format!("Text{f}-Regular"), v)).unwrap();
    }
    store
}

#[test]
fn extraction_to_evaluation() {
    let extraction = extract_from_text(&synthetic_pages(200, 1), &ExtractionConfig::default()).unwrap();
    assert_eq!(extraction.diagnostics.body_pairs, 200);
    let pairs: PairDataset = extraction.header_body;
    let features = synthetic_features(2);

    let (train, test) = split_by_header(&pairs, 0.5, 3).unwrap();
    let labeled_train = sample_negatives(&train, 4).unwrap();
    let labeled_test = sample_negatives(&test, 5).unwrap();

    let cfg = TrainConfig {
        learning_rate: 0.1,
        schedule: LearningRateSchedule::Constant,
        epochs: 40,
        batch_size: 16,
        ..TrainConfig::default()
    };
    let asml = train_asml(&labeled_train, &features, &cfg, 0.01, false).unwrap();
    assert!(asml.objective_log[asml.best_epoch] <= asml.objective_log[0]);
    let ml = train_ml(&labeled_train, &features, &cfg).unwrap();

    let followers = features.subset(features.ids().filter(|id| id.starts_with("Text")));
    let snapshot = EngineSnapshot::build(
        features.clone(),
        followers,
        train.clone(),
        [asml.model, ml.model],
        DsknnParams::default(),
    )
    .unwrap();
    let engine = Engine::new(snapshot).unwrap();

    let accuracy = |m: Method| {
        let scorer = |h: &str, f: &str| engine.score(m, h, f);
        binary_eval(&scorer, &labeled_train, &labeled_test, &EvalConfig::default()).unwrap().accuracy
    };
    let asml_acc = accuracy(Method::Asml);
    assert!(asml_acc > 0.8, "ASML pair accuracy {asml_acc}");
    assert!(accuracy(Method::Ml) > 0.7, "ML pair accuracy {}", accuracy(Method::Ml));

    let cfg = EvalConfig::default();
    let dsknn = evaluate_topn(&engine.recommender(Method::Dsknn), &test, &train, &[1, 3], &cfg).unwrap();
    let pop = evaluate_topn(&engine.recommender(Method::Popularity), &test, &train, &[1, 3], &cfg).unwrap();
    assert_eq!(dsknn.evaluated_headers, test.num_headers());
    // matching families is learnable from neighbors, not from global counts
    assert!(
        dsknn.reports[0].precision > pop.reports[0].precision,
        "dsknn {} vs popularity {}",
        dsknn.reports[0].precision,
        pop.reports[0].precision
    );
    assert_eq!(engine.recommender(Method::Dsknn).name(), "dsknn");
}

#[test]
fn planted_generator_is_reproducible() {
    let a = common::planted(4, 20, 10, 9);
    let b = common::planted(4, 20, 10, 9);
    assert_eq!(a.train, b.train);
    assert_eq!(a.store.to_text(), b.store.to_text());
    assert_eq!(a.train.len(), 40);
    assert!((a.rule.clone() + a.rule.transpose()).norm() < 1e-12);
}
