//! Command-line verbs. Every verb writes its report to the given writer so
//! it can be driven from tests as well as from `main`.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use fontpair::dataset::{data_lines, labeled_to_text, sample_negatives, split_by_header};
use fontpair::evaluation::{
    binary_eval, evaluate_topn, rating_prediction, select_gamma, EvalConfig, Polarity, RatingComparison, Side,
    DEFAULT_GAMMA_GRID, DEFAULT_POPULAR_TOP_K,
};
use fontpair::metric_learning::{train_asml, train_ml, LearningRateSchedule};
use fontpair::pair_extraction::{extract_from_file, DistanceAxis, ExtractionConfig};
use fontpair::similarity::knn;
use fontpair::study_analytics::{
    bradley_terry_fit, consistency_report, load_comparisons, WinMatrix, CHI2_CRITICAL_005_FIVE_BINS,
    CHI2_CRITICAL_005_SIX_BINS, DEFAULT_BINS,
};
use fontpair::{
    DsknnParams, Engine, EngineSnapshot, FeatureStore, Label, LabeledPair, Method, MetricModel, PairDataset, PairRole,
    TrainConfig, Variant,
};
use log::info;

use crate::service::{self, AppState};

#[derive(Debug, Parser)]
#[command(name = "fontpair", version, about = "Font pairing recommendation")]
pub struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Mine header/body and header/sub-header pairs from page layouts.
    ExtractPairs(ExtractArgs),
    /// Train a pair scoring model.
    Train(TrainArgs),
    /// Recommend followers for a header font.
    Recommend(RecommendArgs),
    /// Nearest fonts by feature cosine similarity.
    Similar(SimilarArgs),
    /// Evaluate a method on held-out data.
    Evaluate(EvaluateArgs),
    /// Consistency and ranking analysis of pairwise comparisons.
    AnalyzeStudy(AnalyzeArgs),
    /// Serve the HTTP query interface.
    Serve(ServeArgs),
    /// Build and save an engine snapshot.
    Snapshot(SnapshotArgs),
    /// Split a pair file by header into train and test files.
    Split(SplitArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Axis {
    Planar,
    Vertical,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Text-box records, one per line.
    #[arg(long)]
    pub pages: PathBuf,
    #[arg(long)]
    pub out_body: PathBuf,
    #[arg(long)]
    pub out_subheader: PathBuf,
    /// Largest header to sub-header distance.
    #[arg(long)]
    pub dist_threshold: Option<f64>,
    /// Fewest characters a body box needs.
    #[arg(long)]
    pub min_chars: Option<u64>,
    #[arg(long, value_enum, default_value = "planar")]
    pub axis: Axis,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Schedule {
    Constant,
    InverseSqrt,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_parser = parse_variant)]
    pub method: Variant,
    /// Labeled pairs (`header, follower, count, ±1`), or observed pairs
    /// whose negatives are then sampled.
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Regularization weight; chosen by cross-validation when omitted.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Candidates for cross-validating the regularization weight.
    #[arg(long, value_delimiter = ',')]
    pub gamma_grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, value_enum)]
    pub schedule: Option<Schedule>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Keep the distance matrix positive semidefinite.
    #[arg(long)]
    pub psd: bool,
    /// Reduce features to this many principal components first.
    #[arg(long)]
    pub projection_dim: Option<usize>,
    /// Give every positive pair weight 1 regardless of its count.
    #[arg(long)]
    pub ignore_counts: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Role {
    Body,
    Subheader,
}

impl From<Role> for PairRole {
    fn from(r: Role) -> Self {
        match r {
            Role::Body => PairRole::HeaderBody,
            Role::Subheader => PairRole::HeaderSubheader,
        }
    }
}

/// Where an engine comes from: a saved snapshot, or training pairs plus
/// features and any trained models.
#[derive(Debug, Args)]
pub struct EngineSource {
    #[arg(long, conflicts_with_all = ["pairs", "features", "models"])]
    pub snapshot: Option<PathBuf>,
    #[arg(long, requires = "features")]
    pub pairs: Option<PathBuf>,
    #[arg(long, requires = "pairs")]
    pub features: Option<PathBuf>,
    /// Trained model file; repeat for several variants.
    #[arg(long = "model")]
    pub models: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "body")]
    pub role: Role,
    /// Neighboring training headers for dual-space kNN.
    #[arg(long)]
    pub k1: Option<usize>,
    /// Candidate instances averaged per follower for dual-space kNN.
    #[arg(long)]
    pub k2: Option<usize>,
    /// Weight candidates by inverse header frequency.
    #[arg(long)]
    pub idf: bool,
}

#[derive(Debug, Args)]
pub struct RecommendArgs {
    #[command(flatten)]
    pub source: EngineSource,
    #[arg(long, value_parser = parse_method)]
    pub method: Method,
    #[arg(long)]
    pub header: String,
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct SimilarArgs {
    #[arg(long)]
    pub font: String,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long)]
    pub features: PathBuf,
    /// List the query font among its own neighbors.
    #[arg(long)]
    pub include_self: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Task {
    Topn,
    Binary,
    Rating,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long, value_parser = parse_method)]
    pub method: Method,
    #[arg(long, value_enum)]
    pub task: Task,
    #[arg(long)]
    pub train: PathBuf,
    /// Pairs for topn and binary; rating comparisons
    /// (`header, first, second, 1|2`) for rating.
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long = "model")]
    pub models: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "body")]
    pub role: Role,
    /// Ignore the training set's most popular followers.
    #[arg(long)]
    pub non_popular: bool,
    #[arg(long, default_value_t = DEFAULT_POPULAR_TOP_K)]
    pub popular_top_k: usize,
    /// List lengths for topn.
    #[arg(long = "n", value_delimiter = ',', default_value = "1,2,3,4,5,6,7,8,9,10")]
    pub ns: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub k1: Option<usize>,
    #[arg(long)]
    pub k2: Option<usize>,
    #[arg(long)]
    pub idf: bool,
    /// Write `n, precision, recall, weighted_precision, weighted_recall`
    /// rows here.
    #[arg(long)]
    pub plot_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub comparisons: PathBuf,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    pub bins: usize,
    /// Raters per record; each record's own vote total when omitted.
    #[arg(long)]
    pub raters: Option<u64>,
    /// Write the histogram as CSV here.
    #[arg(long)]
    pub histogram_csv: Option<PathBuf>,
    /// Write Bradley-Terry strengths as CSV here.
    #[arg(long)]
    pub ranking_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub snapshot: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: SocketAddr,
    #[arg(long, default_value = "comparisons.tsv")]
    pub comparison_log: PathBuf,
}

#[derive(Debug, Args)]
pub struct SnapshotArgs {
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long = "model")]
    pub models: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "body")]
    pub role: Role,
    #[arg(long)]
    pub k1: Option<usize>,
    #[arg(long)]
    pub k2: Option<usize>,
    #[arg(long)]
    pub idf: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub pairs: PathBuf,
    /// Fraction of headers kept for training.
    #[arg(long, default_value_t = 0.8)]
    pub ratio: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "body")]
    pub role: Role,
    #[arg(long)]
    pub out_train: PathBuf,
    #[arg(long)]
    pub out_test: PathBuf,
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    s.parse().map_err(|e: fontpair::Error| e.to_string())
}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    s.parse().map_err(|e: fontpair::Error| e.to_string())
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::ExtractPairs(a) => extract_pairs(a, out),
        Command::Train(a) => train(a, out),
        Command::Recommend(a) => recommend(a, out),
        Command::Similar(a) => similar(a, out),
        Command::Evaluate(a) => evaluate(a, out),
        Command::AnalyzeStudy(a) => analyze_study(a, out),
        Command::Serve(a) => serve(a),
        Command::Snapshot(a) => snapshot(a, out),
        Command::Split(a) => split(a, out),
    }
}

/// A pair file is either labeled (four columns) or a list of observed
/// pairings (two or three columns).
pub enum PairFile {
    Labeled(Vec<LabeledPair>),
    Observed(PairDataset),
}

impl PairFile {
    pub fn load(path: &Path, role: PairRole) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let columns = data_lines(&text).next().map_or(0, |(_, l)| l.split('\t').count());
        let parsed = if columns == 4 {
            fontpair::dataset::parse_labeled(&text).map(PairFile::Labeled)
        } else {
            PairDataset::parse(role, &text).map(PairFile::Observed)
        };
        parsed.with_context(|| format!("parsing {}", path.display()))
    }

    /// Observed pairings; the positives of a labeled file.
    pub fn positives(&self, role: PairRole) -> Result<PairDataset> {
        Ok(match self {
            PairFile::Observed(d) => d.clone(),
            PairFile::Labeled(pairs) => PairDataset::new(
                role,
                pairs
                    .iter()
                    .filter(|p| p.label == Label::Positive)
                    .map(|p| fontpair::PairRecord::new(&p.header_id, &p.follower_id, p.count)),
            )?,
        })
    }

    /// Labeled pairs, sampling as many negatives as positives for an
    /// observed file.
    pub fn labeled(&self, seed: u64) -> Result<Vec<LabeledPair>> {
        Ok(match self {
            PairFile::Labeled(p) => p.clone(),
            PairFile::Observed(d) => sample_negatives(d, seed)?,
        })
    }

    fn follower_ids(&self) -> Vec<String> {
        match self {
            PairFile::Labeled(p) => p.iter().map(|p| p.follower_id.clone()).collect(),
            PairFile::Observed(d) => d.followers().into_iter().map(String::from).collect(),
        }
    }
}

fn load_features(path: &Path) -> Result<FeatureStore> {
    FeatureStore::load(path).with_context(|| format!("reading features {}", path.display()))
}

fn load_models(paths: &[PathBuf]) -> Result<Vec<MetricModel>> {
    paths
        .iter()
        .map(|p| MetricModel::load(p).with_context(|| format!("reading model {}", p.display())))
        .collect()
}

fn dsknn_params(k1: Option<usize>, k2: Option<usize>, idf: bool) -> DsknnParams {
    let d = DsknnParams::default();
    DsknnParams {
        k1: k1.unwrap_or(d.k1),
        k2: k2.unwrap_or(d.k2),
        use_idf: idf || d.use_idf,
        n: d.n,
    }
}

/// Every font can be queried as a header; the ranked followers are the
/// fonts seen as followers in `train` or in any of `extra`.
pub fn build_snapshot(
    features: &FeatureStore,
    train: PairDataset,
    extra_followers: &[String],
    models: Vec<MetricModel>,
    dsknn: DsknnParams,
) -> Result<EngineSnapshot> {
    let ids: BTreeSet<&str> = train
        .followers()
        .into_iter()
        .chain(extra_followers.iter().map(String::as_str))
        .collect();
    if let Some(missing) = ids.iter().find(|id| !features.contains(id)) {
        bail!("follower font `{missing}` has no features");
    }
    let followers = features.subset(ids.iter().copied());
    Ok(EngineSnapshot::build(features.clone(), followers, train, models, dsknn)?)
}

fn extract_pairs(a: ExtractArgs, out: &mut dyn Write) -> Result<()> {
    let d = ExtractionConfig::default();
    let cfg = ExtractionConfig {
        subheader_distance_threshold: a.dist_threshold.unwrap_or(d.subheader_distance_threshold),
        body_min_chars: a.min_chars.unwrap_or(d.body_min_chars),
        distance_axis: match a.axis {
            Axis::Planar => DistanceAxis::Planar,
            Axis::Vertical => DistanceAxis::Vertical,
        },
        ..d
    };
    let ex = extract_from_file(&a.pages, &cfg).with_context(|| format!("extracting {}", a.pages.display()))?;
    fs::write(&a.out_body, ex.header_body.to_text())?;
    fs::write(&a.out_subheader, ex.header_subheader.to_text())?;
    let g = &ex.diagnostics;
    writeln!(out, "documents={}", g.documents)?;
    writeln!(out, "pages={}", g.pages)?;
    writeln!(out, "skipped_pages={}", g.skipped_pages)?;
    writeln!(out, "malformed_records={}", g.malformed_records)?;
    writeln!(out, "body_pairs={}", g.body_pairs)?;
    writeln!(out, "subheader_pairs={}", g.subheader_pairs)?;
    Ok(())
}

fn train(a: TrainArgs, out: &mut dyn Write) -> Result<()> {
    let store = load_features(&a.features)?;
    let pairs = PairFile::load(&a.pairs, PairRole::HeaderBody)?.labeled(a.seed)?;
    let d = TrainConfig::default();
    let cfg = TrainConfig {
        learning_rate: a.lr.unwrap_or(d.learning_rate),
        schedule: match a.schedule {
            Some(Schedule::Constant) => LearningRateSchedule::Constant,
            Some(Schedule::InverseSqrt) => LearningRateSchedule::InverseSqrt,
            None => d.schedule,
        },
        epochs: a.epochs.unwrap_or(d.epochs),
        batch_size: a.batch_size.unwrap_or(d.batch_size),
        seed: a.seed,
        psd_projection: a.psd,
        multiplicity_weighting: !a.ignore_counts,
        projection_dim: a.projection_dim,
    };
    writeln!(out, "variant={}", a.method)?;
    writeln!(out, "pairs={}", pairs.len())?;
    let trained = match a.method {
        Variant::Ml => train_ml(&pairs, &store, &cfg)?,
        v => {
            let symmetric = v == Variant::Sml;
            let gamma = match a.gamma {
                Some(g) => g,
                None => {
                    let grid = a.gamma_grid.clone().unwrap_or_else(|| DEFAULT_GAMMA_GRID.to_vec());
                    let eval = EvalConfig {
                        folds: a.folds,
                        seed: a.seed,
                        ..EvalConfig::default()
                    };
                    let sel = select_gamma(&pairs, &store, &cfg, symmetric, &grid, &eval)?;
                    for (g, acc) in &sel.accuracies {
                        writeln!(out, "cv_accuracy[gamma={g}]={acc}")?;
                    }
                    sel.gamma
                }
            };
            train_asml(&pairs, &store, &cfg, gamma, symmetric)?
        }
    };
    writeln!(out, "gamma={}", trained.model.gamma)?;
    writeln!(out, "best_epoch={}", trained.best_epoch)?;
    writeln!(out, "initial_objective={}", trained.objective_log[0])?;
    writeln!(out, "final_objective={}", trained.objective_log[trained.best_epoch])?;
    trained.model.save(&a.out)?;
    info!("model written to {}", a.out.display());
    Ok(())
}

fn engine_from(source: &EngineSource) -> Result<Engine> {
    let mut snapshot = match (&source.snapshot, &source.pairs, &source.features) {
        (Some(path), _, _) => {
            EngineSnapshot::load(path).with_context(|| format!("loading snapshot {}", path.display()))?
        }
        (None, Some(pairs), Some(features)) => {
            let role = source.role.into();
            let train = PairFile::load(pairs, role)?.positives(role)?;
            let features = load_features(features)?;
            build_snapshot(&features, train, &[], load_models(&source.models)?, DsknnParams::default())?
        }
        _ => bail!("give either --snapshot or both --pairs and --features"),
    };
    let p = &mut snapshot.dsknn;
    p.k1 = source.k1.unwrap_or(p.k1);
    p.k2 = source.k2.unwrap_or(p.k2);
    p.use_idf |= source.idf;
    Ok(Engine::new(snapshot)?)
}

fn recommend(a: RecommendArgs, out: &mut dyn Write) -> Result<()> {
    let engine = engine_from(&a.source)?;
    let list = engine.recommend(a.method, &a.header, a.n)?;
    if a.json {
        writeln!(out, "{}", serde_json::to_string(&list)?)?;
    } else {
        for (rank, s) in list.iter().enumerate() {
            writeln!(out, "{}\t{}\t{}", rank + 1, s.font_id, s.score)?;
        }
    }
    Ok(())
}

fn similar(a: SimilarArgs, out: &mut dyn Write) -> Result<()> {
    let store = load_features(&a.features)?;
    let query = store.require(&a.font)?.to_vec();
    let exclude: std::collections::HashSet<String> =
        if a.include_self { Default::default() } else { [a.font.clone()].into() };
    for (rank, n) in knn(&query, &store, a.k, Some(&exclude))?.iter().enumerate() {
        writeln!(out, "{}\t{}\t{}", rank + 1, n.font_id, n.score)?;
    }
    Ok(())
}

fn parse_rating_comparisons(path: &Path) -> Result<Vec<RatingComparison>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    data_lines(&text)
        .map(|(lineno, line)| {
            let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
            if cols.len() != 4 {
                bail!("{}:{lineno}: expected 4 columns, found {}", path.display(), cols.len());
            }
            let preferred = match cols[3] {
                "1" | "first" => Side::First,
                "2" | "second" => Side::Second,
                other => bail!("{}:{lineno}: preferred side must be 1 or 2, got `{other}`", path.display()),
            };
            Ok(RatingComparison {
                header_id: cols[0].to_string(),
                first: cols[1].to_string(),
                second: cols[2].to_string(),
                preferred,
            })
        })
        .collect()
}

fn evaluate(a: EvaluateArgs, out: &mut dyn Write) -> Result<()> {
    let role: PairRole = a.role.into();
    let features = load_features(&a.features)?;
    let train_file = PairFile::load(&a.train, role)?;
    let train = train_file.positives(role)?;
    let cfg = EvalConfig {
        non_popular_filter: a.non_popular,
        popular_top_k: a.popular_top_k,
        folds: a.folds,
        seed: a.seed,
    };
    let dsknn = dsknn_params(a.k1, a.k2, a.idf);
    let models = load_models(&a.models)?;
    if let Some(v) = a.method.variant() {
        if !models.iter().any(|m| m.variant == v) {
            bail!("method {} needs a trained {v} model (--model)", a.method);
        }
    }
    writeln!(out, "method={}", a.method)?;
    writeln!(out, "task={}", format!("{:?}", a.task).to_lowercase())?;

    match a.task {
        Task::Topn => {
            let test = PairFile::load(&a.test, role)?.positives(role)?;
            let extra = test.followers().into_iter().map(String::from).collect::<Vec<_>>();
            let engine = Engine::new(build_snapshot(&features, train.clone(), &extra, models, dsknn)?)?;
            let ev = evaluate_topn(&engine.recommender(a.method), &test, &train, &a.ns, &cfg)?;
            writeln!(out, "non_popular={}", a.non_popular)?;
            writeln!(out, "evaluated_headers={}", ev.evaluated_headers)?;
            writeln!(out, "skipped_headers={}", ev.skipped_headers)?;
            writeln!(out, "empty_headers={}", ev.empty_headers)?;
            let mut csv = String::from("n,precision,recall,weighted_precision,weighted_recall\n");
            for r in &ev.reports {
                writeln!(out, "precision@{}={}", r.n, r.precision)?;
                writeln!(out, "recall@{}={}", r.n, r.recall)?;
                writeln!(out, "weighted_precision@{}={}", r.n, r.weighted_precision)?;
                writeln!(out, "weighted_recall@{}={}", r.n, r.weighted_recall)?;
                csv.push_str(&format!(
                    "{},{},{},{},{}\n",
                    r.n, r.precision, r.recall, r.weighted_precision, r.weighted_recall
                ));
            }
            if let Some(path) = &a.plot_csv {
                fs::write(path, csv)?;
            }
        }
        Task::Binary => {
            let test_file = PairFile::load(&a.test, role)?;
            let train_pairs = train_file.labeled(a.seed)?;
            let test_pairs = test_file.labeled(a.seed.wrapping_add(1))?;
            let mut extra = train_file.follower_ids();
            extra.extend(test_file.follower_ids());
            let engine = Engine::new(build_snapshot(&features, train, &extra, models, dsknn)?)?;
            let scorer = |h: &str, f: &str| engine.score(a.method, h, f);
            let r = binary_eval(&scorer, &train_pairs, &test_pairs, &cfg)?;
            writeln!(out, "test_pairs={}", test_pairs.len())?;
            writeln!(out, "accuracy={}", r.accuracy)?;
            writeln!(out, "threshold={}", r.threshold)?;
            for (i, t) in r.fold_thresholds.iter().enumerate() {
                writeln!(out, "fold_threshold[{i}]={t}")?;
            }
        }
        Task::Rating => {
            let comparisons = parse_rating_comparisons(&a.test)?;
            let extra: Vec<String> =
                comparisons.iter().flat_map(|c| [c.first.clone(), c.second.clone()]).collect();
            let engine = Engine::new(build_snapshot(&features, train, &extra, models, dsknn)?)?;
            let scorer = |h: &str, f: &str| engine.score(a.method, h, f);
            let acc = rating_prediction(&scorer, Polarity::Similarity, &comparisons)?;
            writeln!(out, "comparisons={}", comparisons.len())?;
            writeln!(out, "accuracy={acc}")?;
        }
    }
    Ok(())
}

fn analyze_study(a: AnalyzeArgs, out: &mut dyn Write) -> Result<()> {
    let records = load_comparisons(&a.comparisons).with_context(|| format!("reading {}", a.comparisons.display()))?;
    let report = consistency_report(&records, a.raters, a.bins)?;
    writeln!(out, "records={}", records.len())?;
    writeln!(out, "bins={}", a.bins)?;
    let critical = |bins_used: usize| match bins_used {
        6 => Some(CHI2_CRITICAL_005_SIX_BINS),
        5 => Some(CHI2_CRITICAL_005_FIVE_BINS),
        _ => None,
    };
    let mut tests = vec![("all_bins", Some(&report.all_bins))];
    tests.push(("large_bins", report.large_bins.as_ref()));
    for (name, chi) in tests {
        match chi {
            Some(c) => {
                writeln!(out, "chi2.{name}={}", c.statistic)?;
                writeln!(out, "chi2.{name}.bins_used={}", c.bins_used)?;
                writeln!(out, "chi2.{name}.dof={}", c.degrees_of_freedom())?;
                if let Some(crit) = critical(c.bins_used) {
                    writeln!(out, "chi2.{name}.critical={crit}")?;
                    writeln!(out, "chi2.{name}.exceeds_critical={}", c.statistic > crit)?;
                }
            }
            None => writeln!(out, "chi2.{name}=none")?,
        }
    }
    let h = &report.histogram;
    let mut csv = String::from("bin_low,bin_high,observed,expected\n");
    for j in 0..h.bins() {
        writeln!(out, "histogram[{j}]={},{}", h.counts[j], h.expected[j])?;
        csv.push_str(&format!("{},{},{},{}\n", h.bin_edges[j], h.bin_edges[j + 1], h.counts[j], h.expected[j]));
    }
    if let Some(path) = &a.histogram_csv {
        fs::write(path, csv)?;
    }

    match bradley_terry_fit(&WinMatrix::from_comparisons(&records)) {
        Ok(bt) => {
            writeln!(out, "bradley_terry.converged={}", bt.converged)?;
            let mut csv = String::from("item,strength\n");
            for (item, s) in bt.ranking() {
                writeln!(out, "bradley_terry[{item}]={s}")?;
                csv.push_str(&format!("{item},{s}\n"));
            }
            if let Some(path) = &a.ranking_csv {
                fs::write(path, csv)?;
            }
        }
        Err(fontpair::Error::Disconnected(parts)) => {
            let groups: Vec<String> = parts.iter().map(|p| p.join("|")).collect();
            writeln!(out, "bradley_terry=disconnected:{}", groups.join(";"))?;
        }
        Err(e) => return Err(e.into()),
    }
    Ok(())
}

fn serve(a: ServeArgs) -> Result<()> {
    let snapshot =
        EngineSnapshot::load(&a.snapshot).with_context(|| format!("loading snapshot {}", a.snapshot.display()))?;
    let state = Arc::new(AppState::new(Engine::new(snapshot)?, &a.comparison_log)?);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(service::serve(state, a.bind))
}

fn snapshot(a: SnapshotArgs, out: &mut dyn Write) -> Result<()> {
    let role: PairRole = a.role.into();
    let train = PairFile::load(&a.pairs, role)?.positives(role)?;
    let features = load_features(&a.features)?;
    let snap = build_snapshot(&features, train, &[], load_models(&a.models)?, dsknn_params(a.k1, a.k2, a.idf))?;
    snap.save(&a.out)?;
    let engine = Engine::new(snap)?;
    writeln!(out, "headers={}", engine.header_ids().len())?;
    writeln!(out, "followers={}", engine.follower_ids().len())?;
    let methods: Vec<&str> = engine.methods().into_iter().map(Method::as_str).collect();
    writeln!(out, "methods={}", methods.join(","))?;
    writeln!(out, "written={}", a.out.display())?;
    Ok(())
}

fn split(a: SplitArgs, out: &mut dyn Write) -> Result<()> {
    let role: PairRole = a.role.into();
    let file = PairFile::load(&a.pairs, role)?;
    match file {
        PairFile::Observed(d) => {
            let (train, test) = split_by_header(&d, a.ratio, a.seed)?;
            fs::write(&a.out_train, train.to_text())?;
            fs::write(&a.out_test, test.to_text())?;
            writeln!(out, "train_headers={}", train.num_headers())?;
            writeln!(out, "test_headers={}", test.num_headers())?;
        }
        PairFile::Labeled(pairs) => {
            // split on the headers of the labeled pairs themselves
            let keys = PairDataset::new(
                role,
                pairs.iter().map(|p| fontpair::PairRecord::new(&p.header_id, &p.follower_id, 1)),
            )?;
            let (train, _) = split_by_header(&keys, a.ratio, a.seed)?;
            let train_headers: BTreeSet<&str> = train.headers().into_iter().collect();
            let (tr, te): (Vec<LabeledPair>, Vec<LabeledPair>) =
                pairs.into_iter().partition(|p| train_headers.contains(p.header_id.as_str()));
            fs::write(&a.out_train, labeled_to_text(&tr))?;
            fs::write(&a.out_test, labeled_to_text(&te))?;
            writeln!(out, "train_pairs={}", tr.len())?;
            writeln!(out, "test_pairs={}", te.len())?;
        }
    }
    Ok(())
}
