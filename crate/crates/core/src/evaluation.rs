//! Experimental harness: top-N retrieval metrics, binary pair
//! classification with a cross-validated threshold, rating prediction and
//! popularity filtering.

use std::collections::{BTreeSet, HashSet};

use log::debug;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    compute_idf, popularity_counts, rank_by_popularity, FeatureStore, IdfTable, Label, LabeledPair, PairDataset,
};
use crate::error::{Error, Result};
use crate::metric_learning::{train_asml, TrainConfig};
use crate::ScoredFont;

pub const DEFAULT_POPULAR_TOP_K: usize = 50;

/// Regularization weights tried when none is given.
pub const DEFAULT_GAMMA_GRID: [f64; 5] = [1e-3, 1e-2, 1e-1, 1.0, 10.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Evaluate only on followers outside the training set's most popular
    /// `popular_top_k`.
    pub non_popular_filter: bool,
    pub popular_top_k: usize,
    /// Folds for threshold cross-validation.
    pub folds: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            non_popular_filter: false,
            popular_top_k: DEFAULT_POPULAR_TOP_K,
            folds: 5,
            seed: 0,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::InvalidArgument(format!("folds must be at least 2, got {}", self.folds)));
        }
        Ok(())
    }
}

/// Retrieval quality of one top-N list, or a macro-average of many.
///
/// `weighted_precision` divides the idf mass of the hits by `N`, so it can
/// exceed 1 when idf weights do.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopNReport {
    pub n: usize,
    pub precision: f64,
    pub recall: f64,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    /// Number of hits (averaged when macro-averaged).
    pub hits: f64,
}

/// Metrics of the first `n` entries of `recommended` against the header's
/// observed followers.
pub fn topn_metrics<S: AsRef<str>>(
    recommended: &[S],
    ground_truth: &BTreeSet<String>,
    n: usize,
    idf: &IdfTable,
) -> Result<TopNReport> {
    if n == 0 {
        return Err(Error::InvalidArgument("N must be at least 1".into()));
    }
    if ground_truth.is_empty() {
        return Err(Error::Empty("ground truth follower set"));
    }
    let mut seen = HashSet::new();
    let mut hits = 0usize;
    let mut hit_mass = 0.0;
    for id in recommended.iter().take(n).map(AsRef::as_ref) {
        if seen.insert(id) && ground_truth.contains(id) {
            hits += 1;
            hit_mass += idf.weight(id);
        }
    }
    let truth_mass: f64 = ground_truth.iter().map(|id| idf.weight(id)).sum();
    Ok(TopNReport {
        n,
        precision: hits as f64 / n as f64,
        recall: hits as f64 / ground_truth.len() as f64,
        weighted_precision: hit_mass / n as f64,
        weighted_recall: hit_mass / truth_mass,
        hits: hits as f64,
    })
}

/// Anything that can rank followers for a header id.
pub trait Recommender: Sync {
    fn name(&self) -> &str;
    fn recommend(&self, header_id: &str, n: usize) -> Result<Vec<ScoredFont>>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopNEvaluation {
    /// One macro-averaged report per requested `N`, in request order.
    pub reports: Vec<TopNReport>,
    pub evaluated_headers: usize,
    /// Headers the recommender could not serve (for example, no features).
    pub skipped_headers: usize,
    /// Headers whose whole ground truth was removed by popularity filtering.
    pub empty_headers: usize,
}

/// Most frequent `top_k` followers, ties by id.
pub fn popular_followers(dataset: &PairDataset, top_k: usize) -> BTreeSet<String> {
    rank_by_popularity(&popularity_counts(dataset))
        .into_iter()
        .take(top_k)
        .map(|(id, _)| id)
        .collect()
}

/// Drops every record whose follower is in `excluded`.
pub fn remove_followers(dataset: &PairDataset, excluded: &BTreeSet<String>) -> PairDataset {
    dataset.filter(|r| !excluded.contains(&r.follower_id))
}

/// Drops every record whose follower is among the dataset's `top_k` most
/// popular followers.
pub fn filter_non_popular(dataset: &PairDataset, top_k: usize) -> PairDataset {
    remove_followers(dataset, &popular_followers(dataset, top_k))
}

/// Macro-averaged top-N metrics over the test headers. Idf weights come
/// from `train` only.
pub fn evaluate_topn(
    recommender: &dyn Recommender,
    test: &PairDataset,
    train: &PairDataset,
    ns: &[usize],
    cfg: &EvalConfig,
) -> Result<TopNEvaluation> {
    cfg.validate()?;
    if ns.is_empty() || ns.contains(&0) {
        return Err(Error::InvalidArgument("N values must be positive and non-empty".into()));
    }
    let train_headers: HashSet<&str> = train.headers().into_iter().collect();
    if let Some(h) = test.headers().into_iter().find(|h| train_headers.contains(h)) {
        return Err(Error::InvalidArgument(format!("header `{h}` is in both train and test")));
    }
    let idf = compute_idf(train)?;
    let excluded = if cfg.non_popular_filter {
        popular_followers(train, cfg.popular_top_k)
    } else {
        BTreeSet::new()
    };
    let max_n = *ns.iter().max().expect("non-empty");

    enum Outcome {
        Scored(Vec<TopNReport>),
        Skipped,
        Empty,
    }
    let headers = test.headers();
    let outcomes = headers
        .par_iter()
        .map(|&header| -> Result<Outcome> {
            let truth: BTreeSet<String> = test
                .followers_of(header)
                .into_iter()
                .filter(|f| !excluded.contains(f))
                .collect();
            if truth.is_empty() {
                return Ok(Outcome::Empty);
            }
            let ranked = match recommender.recommend(header, max_n + excluded.len()) {
                Ok(r) => r,
                Err(Error::UnknownFont(_)) => return Ok(Outcome::Skipped),
                Err(e) => return Err(e),
            };
            let ranked: Vec<&str> = ranked
                .iter()
                .map(|s| s.font_id.as_str())
                .filter(|id| !excluded.contains(*id))
                .collect();
            ns.iter()
                .map(|&n| topn_metrics(&ranked, &truth, n, &idf))
                .collect::<Result<Vec<_>>>()
                .map(Outcome::Scored)
        })
        .collect::<Vec<_>>();

    let mut sums: Vec<TopNReport> = ns
        .iter()
        .map(|&n| TopNReport {
            n,
            precision: 0.0,
            recall: 0.0,
            weighted_precision: 0.0,
            weighted_recall: 0.0,
            hits: 0.0,
        })
        .collect();
    let (mut evaluated, mut skipped, mut empty) = (0usize, 0usize, 0usize);
    for outcome in outcomes {
        match outcome? {
            Outcome::Scored(reports) => {
                evaluated += 1;
                for (acc, r) in sums.iter_mut().zip(reports) {
                    acc.precision += r.precision;
                    acc.recall += r.recall;
                    acc.weighted_precision += r.weighted_precision;
                    acc.weighted_recall += r.weighted_recall;
                    acc.hits += r.hits;
                }
            }
            Outcome::Skipped => skipped += 1,
            Outcome::Empty => empty += 1,
        }
    }
    debug!(
        "{}: evaluated {evaluated} headers, skipped {skipped}, empty {empty}",
        recommender.name()
    );
    if evaluated == 0 {
        return Err(Error::Empty("no test header could be evaluated"));
    }
    for acc in &mut sums {
        let k = evaluated as f64;
        acc.precision /= k;
        acc.recall /= k;
        acc.weighted_precision /= k;
        acc.weighted_recall /= k;
        acc.hits /= k;
    }
    Ok(TopNEvaluation {
        reports: sums,
        evaluated_headers: evaluated,
        skipped_headers: skipped,
        empty_headers: empty,
    })
}

/// Classification accuracy when pairs scoring at least `threshold` are
/// called positive.
pub fn accuracy_at(scored: &[(f64, Label)], threshold: f64) -> f64 {
    if scored.is_empty() {
        return 0.0;
    }
    let correct = scored
        .iter()
        .filter(|(s, l)| (*s >= threshold) == (*l == Label::Positive))
        .count();
    correct as f64 / scored.len() as f64
}

/// Threshold maximizing accuracy on `scored`. Candidates are the midpoints
/// between consecutive distinct scores plus one value below and one above
/// all scores; the smallest best candidate wins.
pub fn best_threshold(scored: &[(f64, Label)]) -> Result<(f64, f64)> {
    if scored.is_empty() {
        return Err(Error::Empty("no scored pairs"));
    }
    if scored.iter().any(|(s, _)| !s.is_finite()) {
        return Err(Error::InvalidArgument("scores must be finite".into()));
    }
    let mut sorted = scored.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total = sorted.len();
    // threshold below everything: all predicted positive
    let mut correct = sorted.iter().filter(|(_, l)| *l == Label::Positive).count() as i64;
    let mut best = (sorted[0].0 - 1.0, correct);
    let mut i = 0;
    while i < total {
        let score = sorted[i].0;
        while i < total && sorted[i].0 == score {
            // this score now falls below the threshold: predicted negative
            correct += if sorted[i].1 == Label::Positive { -1 } else { 1 };
            i += 1;
        }
        let threshold = if i < total { 0.5 * (score + sorted[i].0) } else { score + 1.0 };
        if correct > best.1 {
            best = (threshold, correct);
        }
    }
    Ok((best.0, best.1 as f64 / total as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryEvalReport {
    pub accuracy: f64,
    pub threshold: f64,
    pub fold_thresholds: Vec<f64>,
}

/// Mean of the per-fold accuracy-maximizing thresholds, each fitted on the
/// training pairs outside that fold.
pub fn cross_validated_threshold(scored: &[(f64, Label)], cfg: &EvalConfig) -> Result<(f64, Vec<f64>)> {
    cfg.validate()?;
    if scored.len() < cfg.folds {
        return Err(Error::InvalidArgument(format!(
            "{} training pairs cannot fill {} folds",
            scored.len(),
            cfg.folds
        )));
    }
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let mut thresholds = Vec::with_capacity(cfg.folds);
    for fold in 0..cfg.folds {
        let fit: Vec<(f64, Label)> = order
            .iter()
            .enumerate()
            .filter(|(pos, _)| pos % cfg.folds != fold)
            .map(|(_, &i)| scored[i])
            .collect();
        thresholds.push(best_threshold(&fit)?.0);
    }
    let mean = thresholds.iter().sum::<f64>() / thresholds.len() as f64;
    Ok((mean, thresholds))
}

fn score_pairs<F>(scorer: &F, pairs: &[LabeledPair]) -> Result<Vec<(f64, Label)>>
where
    F: Fn(&str, &str) -> Result<f64> + Sync,
{
    pairs
        .par_iter()
        .map(|p| Ok((scorer(&p.header_id, &p.follower_id)?, p.label)))
        .collect()
}

/// Test accuracy of `scorer` as a pair classifier, with the decision
/// threshold cross-validated on `train`.
pub fn binary_eval<F>(scorer: &F, train: &[LabeledPair], test: &[LabeledPair], cfg: &EvalConfig) -> Result<BinaryEvalReport>
where
    F: Fn(&str, &str) -> Result<f64> + Sync,
{
    let has = |set: &[LabeledPair], l: Label| set.iter().any(|p| p.label == l);
    if !(has(train, Label::Positive) && has(train, Label::Negative)) {
        return Err(Error::SingleClass);
    }
    if test.is_empty() {
        return Err(Error::Empty("no test pairs"));
    }
    let train_scored = score_pairs(scorer, train)?;
    let (threshold, fold_thresholds) = cross_validated_threshold(&train_scored, cfg)?;
    let test_scored = score_pairs(scorer, test)?;
    Ok(BinaryEvalReport {
        accuracy: accuracy_at(&test_scored, threshold),
        threshold,
        fold_thresholds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaSelection {
    pub gamma: f64,
    /// `(gamma, mean held-out accuracy)` for every candidate, in grid order.
    pub accuracies: Vec<(f64, f64)>,
}

/// Picks the regularization weight of a bilinear-plus-distance model by
/// k-fold cross-validation of pair classification accuracy. Each fold's
/// threshold is fit on its own training part. Ties go to the larger weight.
pub fn select_gamma(
    pairs: &[LabeledPair],
    store: &FeatureStore,
    train_cfg: &TrainConfig,
    symmetric_g: bool,
    grid: &[f64],
    cfg: &EvalConfig,
) -> Result<GammaSelection> {
    cfg.validate()?;
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty gamma grid".into()));
    }
    if pairs.len() < cfg.folds {
        return Err(Error::InvalidArgument(format!("{} pairs cannot fill {} folds", pairs.len(), cfg.folds)));
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let folds: Vec<(Vec<LabeledPair>, Vec<LabeledPair>)> = (0..cfg.folds)
        .map(|fold| {
            let (mut fit, mut held) = (Vec::new(), Vec::new());
            for (pos, &i) in order.iter().enumerate() {
                if pos % cfg.folds == fold { &mut held } else { &mut fit }.push(pairs[i].clone());
            }
            (fit, held)
        })
        .collect();

    let accuracies = grid
        .par_iter()
        .map(|&gamma| {
            let per_fold = folds
                .iter()
                .map(|(fit, held)| {
                    let model = train_asml(fit, store, train_cfg, gamma, symmetric_g)?.model;
                    let scorer = |h: &str, f: &str| model.score(store.require(h)?, store.require(f)?);
                    let (threshold, _) = best_threshold(&score_pairs(&scorer, fit)?)?;
                    Ok(accuracy_at(&score_pairs(&scorer, held)?, threshold))
                })
                .collect::<Result<Vec<f64>>>()?;
            let mean = per_fold.iter().sum::<f64>() / per_fold.len() as f64;
            debug!("gamma {gamma}: cross-validated accuracy {mean}");
            Ok((gamma, mean))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let gamma = accuracies
        .iter()
        .copied()
        .reduce(|best, c| if c.1 > best.1 || (c.1 == best.1 && c.0 > best.0) { c } else { best })
        .map(|(g, _)| g)
        .expect("non-empty grid");
    Ok(GammaSelection { gamma, accuracies })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Polarity {
    /// Larger scores mean better pairs.
    Similarity,
    /// Smaller scores mean better pairs.
    Distance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    First,
    Second,
}

/// "Which follower suits this header better?" with the human answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingComparison {
    pub header_id: String,
    pub first: String,
    pub second: String,
    pub preferred: Side,
}

/// Fraction of comparisons where the scorer prefers the same side as the
/// raters; exact score ties count half.
pub fn rating_prediction<F>(scorer: &F, polarity: Polarity, comparisons: &[RatingComparison]) -> Result<f64>
where
    F: Fn(&str, &str) -> Result<f64> + Sync,
{
    if comparisons.is_empty() {
        return Err(Error::Empty("no rating comparisons"));
    }
    let credit = comparisons
        .par_iter()
        .map(|c| {
            let a = scorer(&c.header_id, &c.first)?;
            let b = scorer(&c.header_id, &c.second)?;
            let (a, b) = match polarity {
                Polarity::Similarity => (a, b),
                Polarity::Distance => (-a, -b),
            };
            Ok(if a == b {
                0.5
            } else if (a > b) == (c.preferred == Side::First) {
                1.0
            } else {
                0.0
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(credit.iter().sum::<f64>() / comparisons.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{PairRecord, PairRole};
    use proptest::prelude::*;
    use rand::Rng;
    use std::collections::BTreeMap;

    fn ds(records: &[(&str, &str, u64)]) -> PairDataset {
        PairDataset::new(
            PairRole::HeaderBody,
            records.iter().map(|(h, f, c)| PairRecord::new(*h, *f, *c)),
        )
        .unwrap()
    }

    fn set(ids: &[&str]) -> BTreeSet<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn perfect_and_disjoint_retrieval() {
        let idf = IdfTable::from_weights(BTreeMap::from([("a".into(), 2.0), ("b".into(), 3.0)]), 4.0);
        let r = topn_metrics(&["a", "b"], &set(&["a", "b"]), 2, &idf).unwrap();
        assert_eq!((r.precision, r.recall, r.weighted_recall), (1.0, 1.0, 1.0));
        let r = topn_metrics(&["c", "d"], &set(&["a", "b"]), 2, &idf).unwrap();
        assert_eq!((r.precision, r.recall, r.weighted_precision, r.weighted_recall), (0.0, 0.0, 0.0, 0.0));
        assert!(topn_metrics(&["a"], &BTreeSet::new(), 1, &idf).is_err());
    }

    #[test]
    fn weighted_metrics_hand_example() {
        // five fonts; ground truth {a, b} with idf 2 + 3 = 5; one hit `a`
        let idf = IdfTable::from_weights(
            BTreeMap::from([
                ("a".into(), 2.0),
                ("b".into(), 3.0),
                ("c".into(), 1.0),
                ("d".into(), 1.0),
                ("e".into(), 1.5),
            ]),
            5.0,
        );
        let r = topn_metrics(&["a", "c", "d"], &set(&["a", "b"]), 2, &idf).unwrap();
        assert_eq!(r.weighted_precision, 1.0);
        assert_eq!(r.weighted_recall, 0.4);
        assert_eq!((r.precision, r.recall), (0.5, 0.5));
    }

    #[test]
    fn weighted_precision_can_exceed_one() {
        let idf = IdfTable::from_weights(BTreeMap::from([("a".into(), 10.0)]), 10.0);
        let r = topn_metrics(&["a"], &set(&["a"]), 1, &idf).unwrap();
        assert_eq!(r.weighted_precision, 10.0);
    }

    struct Fixed(Vec<(String, Vec<String>)>);
    impl Recommender for Fixed {
        fn name(&self) -> &str {
            "fixed"
        }
        fn recommend(&self, header: &str, n: usize) -> Result<Vec<ScoredFont>> {
            let list = self
                .0
                .iter()
                .find(|(h, _)| h == header)
                .ok_or_else(|| Error::UnknownFont(header.into()))?;
            Ok(list.1.iter().take(n).map(|f| ScoredFont::new(f.clone(), 1.0)).collect())
        }
    }

    #[test]
    fn oracle_recommender_has_full_precision() {
        let train = ds(&[("h0", "a", 1), ("h0", "b", 1)]);
        let test = ds(&[("h1", "a", 1), ("h1", "c", 2), ("h2", "b", 1), ("h3", "a", 1)]);
        let rec = Fixed(vec![
            ("h1".into(), vec!["a".into(), "c".into()]),
            ("h2".into(), vec!["b".into()]),
        ]);
        let ev = evaluate_topn(&rec, &test, &train, &[1], &EvalConfig::default()).unwrap();
        assert_eq!(ev.reports[0].precision, 1.0);
        assert_eq!(ev.evaluated_headers, 2);
        assert_eq!(ev.skipped_headers, 1);
        assert!(evaluate_topn(&rec, &train, &train, &[1], &EvalConfig::default()).is_err());
    }

    struct Random {
        fonts: Vec<String>,
        seed: u64,
    }
    impl Recommender for Random {
        fn name(&self) -> &str {
            "random"
        }
        fn recommend(&self, header: &str, n: usize) -> Result<Vec<ScoredFont>> {
            let h: u64 = header.bytes().map(u64::from).sum();
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed * 1_000_003 + h);
            let mut f = self.fonts.clone();
            f.shuffle(&mut rng);
            Ok(f.into_iter().take(n).map(|id| ScoredFont::new(id, 0.0)).collect())
        }
    }

    #[test]
    fn random_recommender_precision_near_analytic_expectation() {
        // 200 headers each with 5 followers among 100 fonts; E[precision] = 5/100
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let fonts: Vec<String> = (0..100).map(|i| format!("f{i:03}")).collect();
        let mut records = Vec::new();
        for h in 0..200 {
            let mut f = fonts.clone();
            f.shuffle(&mut rng);
            for id in f.into_iter().take(5) {
                records.push(PairRecord::new(format!("t{h}"), id, 1));
            }
        }
        let test = PairDataset::new(PairRole::HeaderBody, records).unwrap();
        let train = ds(&[("x", "f000", 1)]);
        let n = 10;
        let expected = 0.05;
        // per-header precision is hypergeometric/N; std of the mean over 200 headers
        let var = (n as f64 * 0.05 * 0.95 * (90.0 / 99.0)) / (n * n) as f64 / 200.0;
        for seed in 0..5 {
            let rec = Random { fonts: fonts.clone(), seed };
            let ev = evaluate_topn(&rec, &test, &train, &[n], &EvalConfig::default()).unwrap();
            assert!((ev.reports[0].precision - expected).abs() < 3.0 * var.sqrt(), "seed {seed}: {}", ev.reports[0].precision);
        }
    }

    #[test]
    fn non_popular_filter_examples() {
        let d = ds(&[("A", "X", 5), ("B", "Y", 3), ("C", "Z", 1), ("A", "W", 2)]);
        assert_eq!(filter_non_popular(&d, 0), d);
        assert!(filter_non_popular(&d, 4).is_empty());
        let kept = filter_non_popular(&d, 2);
        let ids: Vec<&str> = kept.records().iter().map(|r| r.follower_id.as_str()).collect();
        assert_eq!(ids, vec!["W", "Z"]);
    }

    #[test]
    fn best_threshold_separable() {
        let s = vec![(0.1, Label::Negative), (0.2, Label::Negative), (0.8, Label::Positive), (0.9, Label::Positive)];
        let (t, acc) = best_threshold(&s).unwrap();
        assert_eq!(acc, 1.0);
        assert!((t - 0.5).abs() < 1e-12);
    }

    fn balanced(n: usize) -> Vec<LabeledPair> {
        (0..n)
            .map(|i| {
                let label = if i % 2 == 0 { Label::Positive } else { Label::Negative };
                LabeledPair::new(format!("h{i}"), format!("f{i}"), label, 1)
            })
            .collect()
    }

    #[test]
    fn label_oracle_and_constant_scorers() {
        let pairs = balanced(200);
        let (train, test) = pairs.split_at(100);
        let truth: BTreeMap<String, f64> = pairs.iter().map(|p| (p.header_id.clone(), p.label.sign())).collect();
        let oracle = |h: &str, _: &str| Ok(truth[h]);
        assert_eq!(binary_eval(&oracle, train, test, &EvalConfig::default()).unwrap().accuracy, 1.0);
        let constant = |_: &str, _: &str| Ok(0.3);
        assert_eq!(binary_eval(&constant, train, test, &EvalConfig::default()).unwrap().accuracy, 0.5);
        let pos: Vec<_> = train.iter().filter(|p| p.label == Label::Positive).cloned().collect();
        assert!(matches!(binary_eval(&constant, &pos, test, &EvalConfig::default()), Err(Error::SingleClass)));
    }

    #[test]
    fn rating_prediction_examples() {
        let cmp = vec![
            RatingComparison { header_id: "h".into(), first: "a".into(), second: "b".into(), preferred: Side::First },
            RatingComparison { header_id: "h".into(), first: "c".into(), second: "a".into(), preferred: Side::Second },
        ];
        let counts: BTreeMap<&str, f64> = BTreeMap::from([("a", 5.0), ("b", 2.0), ("c", 9.0)]);
        let pop = |_: &str, f: &str| Ok(counts[f]);
        // a beats b (correct), c beats a (wrong)
        assert_eq!(rating_prediction(&pop, Polarity::Similarity, &cmp).unwrap(), 0.5);
        assert_eq!(rating_prediction(&pop, Polarity::Distance, &cmp).unwrap(), 0.5);
        let equal = |_: &str, _: &str| Ok(1.0);
        assert_eq!(rating_prediction(&equal, Polarity::Similarity, &cmp).unwrap(), 0.5);
        let aligned = |_: &str, f: &str| Ok(if f == "a" { 1.0 } else { 0.0 });
        assert_eq!(rating_prediction(&aligned, Polarity::Similarity, &cmp).unwrap(), 1.0);
    }

    #[test]
    fn gamma_selection_avoids_identity_lock_in() {
        use crate::dataset::FontFeature;
        use crate::metric_learning::LearningRateSchedule;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut store = FeatureStore::new();
        let mut pairs = Vec::new();
        for i in 0..160 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            // antisymmetric rule: identity-anchored scores cannot express it
            let s = x[0] * y[1] - x[1] * y[0];
            let label = if s >= 0.0 { Label::Positive } else { Label::Negative };
            store.insert(FontFeature::new(format!("h{i}"), x)).unwrap();
            store.insert(FontFeature::new(format!("f{i}"), y)).unwrap();
            pairs.push(LabeledPair::new(format!("h{i}"), format!("f{i}"), label, 1));
        }
        let train_cfg = TrainConfig {
            learning_rate: 0.2,
            schedule: LearningRateSchedule::Constant,
            epochs: 30,
            batch_size: 32,
            ..TrainConfig::default()
        };
        let sel = select_gamma(&pairs, &store, &train_cfg, false, &[1e-3, 1e5], &EvalConfig::default()).unwrap();
        assert_eq!(sel.gamma, 1e-3);
        assert!(sel.accuracies[0].1 > sel.accuracies[1].1 + 0.1, "{:?}", sel.accuracies);
        assert!(matches!(
            select_gamma(&pairs, &store, &train_cfg, false, &[], &EvalConfig::default()),
            Err(Error::InvalidArgument(_))
        ));
    }

    proptest! {
        #[test]
        fn consistency_identities(
            seed in 0u64..10_000,
            n in 1usize..12,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let fonts: Vec<String> = (0..20).map(|i| format!("f{i}")).collect();
            let truth: BTreeSet<String> = fonts.iter().filter(|_| rng.random_bool(0.3)).cloned().collect();
            prop_assume!(!truth.is_empty());
            let mut rec = fonts.clone();
            rec.shuffle(&mut rng);
            let r = topn_metrics(&rec, &truth, n, &IdfTable::unit()).unwrap();
            prop_assert_eq!(r.precision * n as f64, r.hits);
            prop_assert!((r.recall * truth.len() as f64 - r.hits).abs() < 1e-9);
            prop_assert_eq!(r.weighted_precision, r.precision);
            prop_assert_eq!(r.weighted_recall, r.recall);
        }

        #[test]
        fn filtering_with_a_fixed_set_is_idempotent(k in 0usize..6) {
            let d = ds(&[("A", "X", 5), ("B", "Y", 3), ("C", "Z", 1), ("A", "W", 2), ("C", "V", 2)]);
            let excluded = popular_followers(&d, k);
            let once = remove_followers(&d, &excluded);
            prop_assert_eq!(remove_followers(&once, &excluded), once);
        }

        #[test]
        fn best_threshold_beats_chance(scores in proptest::collection::vec((-5.0f64..5.0, any::<bool>()), 2..60)) {
            let s: Vec<(f64, Label)> = scores
                .iter()
                .map(|&(v, b)| (v, if b { Label::Positive } else { Label::Negative }))
                .collect();
            let (t, acc) = best_threshold(&s).unwrap();
            prop_assert_eq!(acc, accuracy_at(&s, t));
            let pos = s.iter().filter(|(_, l)| *l == Label::Positive).count() as f64 / s.len() as f64;
            prop_assert!(acc >= pos.max(1.0 - pos) - 1e-12);
            // brute force over every candidate score
            for &(c, _) in &s {
                prop_assert!(accuracy_at(&s, c) <= acc + 1e-12);
            }
        }
    }
}
