//! Learned pair scoring functions.
//!
//! Three variants share one model type:
//!
//! * `ML`: `f(x, y) = d - (x - y)ᵀ M (x - y)` with `M ⪰ 0`, learned by
//!   minimizing the positive-pair distance subject to the negative-pair
//!   distance sum being at least 1.
//! * `ASML`: `f(x, y) = xᵀ G y - (x - y)ᵀ M (x - y)` with an unconstrained
//!   (asymmetric) `G`, learned by minimizing
//!   `Σ w_p (1 - y_p f(x_p, y_p))₊ + γ/2 (‖M - I‖²_F + ‖G - I‖²_F)`.
//! * `SML`: ASML with `G` kept symmetric.
//!
//! ASML/SML are trained with mini-batch subgradient descent on the primal.
//! The quadratic regularizer is applied through its proximal map, which
//! keeps the iteration stable for any `γ`. `M` is symmetrized after every
//! step.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use log::debug;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{data_lines, push_joined, FeatureStore, Label, LabeledPair};
use crate::error::{parse_err, Error, Result};
use crate::linalg::{bilinear, project_psd, quadratic_distance, symmetrize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Ml,
    Sml,
    Asml,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Ml => "ml",
            Variant::Sml => "sml",
            Variant::Asml => "asml",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ml" => Ok(Variant::Ml),
            "sml" => Ok(Variant::Sml),
            "asml" => Ok(Variant::Asml),
            other => Err(Error::UnknownMethod(other.to_string())),
        }
    }
}

/// A linear map `x -> basis (x - mean)` applied to features before scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub mean: DVector<f64>,
    /// `out_dim × in_dim`, rows are principal directions.
    pub basis: DMatrix<f64>,
}

impl Projection {
    /// Principal-component projection onto the top `out_dim` directions of
    /// the given vectors.
    pub fn fit_pca(vectors: &[&[f64]], out_dim: usize) -> Result<Self> {
        let first = vectors.first().ok_or(Error::Empty("PCA needs at least one vector"))?;
        let in_dim = first.len();
        if out_dim == 0 || out_dim > in_dim {
            return Err(Error::InvalidArgument(format!(
                "projection dimension {out_dim} must lie in 1..={in_dim}"
            )));
        }
        let n = vectors.len() as f64;
        let mut mean = DVector::zeros(in_dim);
        for v in vectors {
            if v.len() != in_dim {
                return Err(Error::VectorDimension(v.len(), in_dim));
            }
            mean += DVector::from_column_slice(v);
        }
        mean /= n;
        let mut cov = DMatrix::zeros(in_dim, in_dim);
        for v in vectors {
            let c = DVector::from_column_slice(v) - &mean;
            cov.ger(1.0 / n, &c, &c, 1.0);
        }
        let eig = cov.symmetric_eigen();
        let mut order: Vec<usize> = (0..in_dim).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let mut basis = DMatrix::zeros(out_dim, in_dim);
        for (row, &k) in order.iter().take(out_dim).enumerate() {
            basis.set_row(row, &eig.eigenvectors.column(k).transpose());
        }
        Ok(Self { mean, basis })
    }

    pub fn in_dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn apply(&self, x: &[f64]) -> DVector<f64> {
        &self.basis * (DVector::from_column_slice(x) - &self.mean)
    }
}

/// Learned scoring matrices and decision parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricModel {
    pub variant: Variant,
    /// Distance matrix, always symmetric.
    pub m: DMatrix<f64>,
    /// Similarity matrix; unused by `ML`, symmetric for `SML`.
    pub g: DMatrix<f64>,
    pub gamma: f64,
    /// The constant `d` of the `ML` score.
    pub offset: f64,
    /// Decision threshold used by [`classify`]: a pair is positive iff its
    /// score is at least this value.
    pub threshold: f64,
    pub projection: Option<Projection>,
}

impl MetricModel {
    /// `M = G = I` of the given dimension.
    pub fn identity(variant: Variant, dim: usize, gamma: f64) -> Self {
        Self {
            variant,
            m: DMatrix::identity(dim, dim),
            g: DMatrix::identity(dim, dim),
            gamma,
            offset: 0.0,
            threshold: 0.0,
            projection: None,
        }
    }

    /// Dimension of the matrices.
    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    /// Dimension of the raw feature vectors the model accepts.
    pub fn input_dim(&self) -> usize {
        self.projection.as_ref().map_or(self.dim(), Projection::in_dim)
    }

    fn embed(&self, v: &[f64]) -> Result<DVector<f64>> {
        if v.len() != self.input_dim() {
            return Err(Error::VectorDimension(v.len(), self.input_dim()));
        }
        Ok(match &self.projection {
            Some(p) => p.apply(v),
            None => DVector::from_column_slice(v),
        })
    }

    /// `d - (x - y)ᵀ M (x - y)`; only for `ML` models.
    pub fn score_ml(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if self.variant != Variant::Ml {
            return Err(Error::WrongVariant {
                expected: "ml",
                found: self.variant.as_str(),
            });
        }
        let (x, y) = (self.embed(x)?, self.embed(y)?);
        Ok(self.offset - quadratic_distance(&self.m, &x, &y))
    }

    /// `xᵀ G y - (x - y)ᵀ M (x - y)`; only for `SML` and `ASML` models.
    pub fn score_asml(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if self.variant == Variant::Ml {
            return Err(Error::WrongVariant {
                expected: "sml or asml",
                found: self.variant.as_str(),
            });
        }
        let (x, y) = (self.embed(x)?, self.embed(y)?);
        Ok(bilinear(&self.g, &x, &y) - quadratic_distance(&self.m, &x, &y))
    }

    /// The variant's own score.
    pub fn score(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        match self.variant {
            Variant::Ml => self.score_ml(x, y),
            Variant::Sml | Variant::Asml => self.score_asml(x, y),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# fontpair metric model\n");
        out.push_str(&format!("variant\t{}\n", self.variant));
        out.push_str(&format!("dim\t{}\n", self.dim()));
        out.push_str(&format!("gamma\t{}\n", self.gamma));
        out.push_str(&format!("offset\t{}\n", self.offset));
        out.push_str(&format!("threshold\t{}\n", self.threshold));
        match &self.projection {
            None => out.push_str("projection\tnone\n"),
            Some(p) => {
                out.push_str(&format!("projection\t{}\n", p.in_dim()));
                out.push_str("mean\t");
                push_joined(&mut out, p.mean.as_slice(), ',');
                out.push('\n');
                push_rows(&mut out, "P", &p.basis);
            }
        }
        push_rows(&mut out, "M", &self.m);
        push_rows(&mut out, "G", &self.g);
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut variant = None;
        let mut dim = None;
        let (mut gamma, mut offset, mut threshold) = (None, 0.0, 0.0);
        let mut projection_in: Option<usize> = None;
        let mut mean = None;
        let (mut p_rows, mut m_rows, mut g_rows) = (Vec::new(), Vec::new(), Vec::new());
        for (lineno, line) in data_lines(text) {
            let (key, value) = line
                .split_once('\t')
                .ok_or_else(|| parse_err(lineno, "expected `key<TAB>value`"))?;
            let num = |v: &str| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|e| parse_err(lineno, format!("bad number `{v}`: {e}")))
            };
            let row = |v: &str| v.split(',').map(num).collect::<Result<Vec<f64>>>();
            match key {
                "variant" => variant = Some(value.trim().parse::<Variant>()?),
                "dim" => {
                    dim = Some(value.trim().parse::<usize>().map_err(|e| parse_err(lineno, e.to_string()))?)
                }
                "gamma" => gamma = Some(num(value)?),
                "offset" => offset = num(value)?,
                "threshold" => threshold = num(value)?,
                "projection" => {
                    projection_in = match value.trim() {
                        "none" => None,
                        v => Some(v.parse::<usize>().map_err(|e| parse_err(lineno, e.to_string()))?),
                    }
                }
                "mean" => mean = Some(row(value)?),
                "P" => p_rows.push(row(value)?),
                "M" => m_rows.push(row(value)?),
                "G" => g_rows.push(row(value)?),
                other => return Err(parse_err(lineno, format!("unknown key `{other}`"))),
            }
        }
        let variant = variant.ok_or_else(|| parse_err(0, "missing `variant`"))?;
        let dim = dim.ok_or_else(|| parse_err(0, "missing `dim`"))?;
        let gamma = gamma.ok_or_else(|| parse_err(0, "missing `gamma`"))?;
        let m = square_from_rows("M", &m_rows, dim)?;
        let g = square_from_rows("G", &g_rows, dim)?;
        let projection = match projection_in {
            None => None,
            Some(in_dim) => {
                let mean = mean.ok_or_else(|| parse_err(0, "missing `mean`"))?;
                if mean.len() != in_dim || p_rows.len() != dim || p_rows.iter().any(|r| r.len() != in_dim) {
                    return Err(parse_err(0, "projection shape does not match header"));
                }
                let flat: Vec<f64> = p_rows.concat();
                Some(Projection {
                    mean: DVector::from_vec(mean),
                    basis: DMatrix::from_row_slice(dim, in_dim, &flat),
                })
            }
        };
        Ok(Self {
            variant,
            m,
            g,
            gamma,
            offset,
            threshold,
            projection,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

fn push_rows(out: &mut String, tag: &str, m: &DMatrix<f64>) {
    for r in 0..m.nrows() {
        out.push_str(tag);
        out.push('\t');
        let row: Vec<f64> = m.row(r).iter().copied().collect();
        push_joined(out, &row, ',');
        out.push('\n');
    }
}

fn square_from_rows(tag: &str, rows: &[Vec<f64>], dim: usize) -> Result<DMatrix<f64>> {
    if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
        return Err(parse_err(0, format!("matrix {tag} is not {dim}x{dim}")));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(parse_err(0, format!("matrix {tag} has non-finite entries")));
    }
    Ok(DMatrix::from_row_slice(dim, dim, &rows.concat()))
}

/// `ML` score of `model` for the pair `(x, y)`.
pub fn score_ml(model: &MetricModel, x: &[f64], y: &[f64]) -> Result<f64> {
    model.score_ml(x, y)
}

/// `SML`/`ASML` score of `model` for the pair `(x, y)`.
pub fn score_asml(model: &MetricModel, x: &[f64], y: &[f64]) -> Result<f64> {
    model.score_asml(x, y)
}

/// Positive iff the model's score reaches `threshold`; a score exactly at
/// the threshold is positive.
pub fn classify(model: &MetricModel, x: &[f64], y: &[f64], threshold: f64) -> Result<Label> {
    Ok(if model.score(x, y)? >= threshold {
        Label::Positive
    } else {
        Label::Negative
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LearningRateSchedule {
    Constant,
    /// `lr / sqrt(t)` for step `t = 1, 2, ...`
    InverseSqrt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub schedule: LearningRateSchedule,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Project `M` onto the PSD cone after every epoch (always on for ML).
    pub psd_projection: bool,
    /// Weight positive pairs by their observed count.
    pub multiplicity_weighting: bool,
    /// Optional PCA projection of features before training.
    pub projection_dim: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            schedule: LearningRateSchedule::InverseSqrt,
            epochs: 50,
            batch_size: 64,
            seed: 0,
            psd_projection: false,
            multiplicity_weighting: true,
            projection_dim: None,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument("learning rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be at least 1".into()));
        }
        Ok(())
    }

    fn rate(&self, step: usize) -> f64 {
        match self.schedule {
            LearningRateSchedule::Constant => self.learning_rate,
            LearningRateSchedule::InverseSqrt => self.learning_rate / (step as f64).sqrt(),
        }
    }
}

/// One training example with resolved (and possibly projected) features.
#[derive(Debug, Clone)]
pub struct PairSample {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    /// `+1` or `-1`.
    pub label: f64,
    pub weight: f64,
}

/// The regularized hinge objective of ASML/SML.
#[derive(Debug, Clone)]
pub struct AsmlObjective {
    pub samples: Vec<PairSample>,
    pub gamma: f64,
}

impl AsmlObjective {
    pub fn new(samples: Vec<PairSample>, gamma: f64) -> Self {
        Self { samples, gamma }
    }

    fn pair_score(m: &DMatrix<f64>, g: &DMatrix<f64>, s: &PairSample) -> f64 {
        bilinear(g, &s.x, &s.y) - quadratic_distance(m, &s.x, &s.y)
    }

    pub fn hinge_loss(&self, m: &DMatrix<f64>, g: &DMatrix<f64>) -> f64 {
        self.samples
            .iter()
            .map(|s| s.weight * (1.0 - s.label * Self::pair_score(m, g, s)).max(0.0))
            .sum()
    }

    pub fn regularizer(&self, m: &DMatrix<f64>, g: &DMatrix<f64>) -> f64 {
        let n = m.nrows();
        let id = DMatrix::<f64>::identity(n, n);
        0.5 * self.gamma * ((m - &id).norm_squared() + (g - &id).norm_squared())
    }

    pub fn value(&self, m: &DMatrix<f64>, g: &DMatrix<f64>) -> f64 {
        self.hinge_loss(m, g) + self.regularizer(m, g)
    }

    /// Smallest `|1 - y f|` over the samples: the distance to a hinge kink.
    pub fn kink_distance(&self, m: &DMatrix<f64>, g: &DMatrix<f64>) -> f64 {
        self.samples
            .iter()
            .map(|s| (1.0 - s.label * Self::pair_score(m, g, s)).abs())
            .fold(f64::INFINITY, f64::min)
    }

    /// Subgradient of the weighted hinge terms over `indices`, accumulated
    /// into `(dm, dg)`.
    fn accumulate_hinge_gradient(
        &self,
        m: &DMatrix<f64>,
        g: &DMatrix<f64>,
        indices: impl Iterator<Item = usize>,
        scale: f64,
        dm: &mut DMatrix<f64>,
        dg: &mut DMatrix<f64>,
    ) {
        for i in indices {
            let s = &self.samples[i];
            if 1.0 - s.label * Self::pair_score(m, g, s) > 0.0 {
                // d/dG of -y xᵀGy is -y x yᵀ; d/dM of +y δᵀMδ is y δ δᵀ
                let c = scale * s.weight * s.label;
                dg.ger(-c, &s.x, &s.y, 1.0);
                let delta = &s.x - &s.y;
                dm.ger(c, &delta, &delta, 1.0);
            }
        }
    }

    /// Gradient of [`value`](Self::value) with respect to `(M, G)`.
    pub fn gradient(&self, m: &DMatrix<f64>, g: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = m.nrows();
        let id = DMatrix::<f64>::identity(n, n);
        let mut dm = (m - &id) * self.gamma;
        let mut dg = (g - &id) * self.gamma;
        self.accumulate_hinge_gradient(m, g, 0..self.samples.len(), 1.0, &mut dm, &mut dg);
        (dm, dg)
    }
}

/// A trained model and its per-epoch objective trace. `objective_log[0]`
/// is the objective at initialization.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: MetricModel,
    pub objective_log: Vec<f64>,
    /// Epoch whose iterate was returned (0 = initialization).
    pub best_epoch: usize,
}

fn check_both_classes(pairs: &[LabeledPair]) -> Result<()> {
    let pos = pairs.iter().any(|p| p.label == Label::Positive);
    let neg = pairs.iter().any(|p| p.label == Label::Negative);
    if pos && neg {
        Ok(())
    } else {
        Err(Error::SingleClass)
    }
}

fn resolve_samples(
    pairs: &[LabeledPair],
    store: &FeatureStore,
    cfg: &TrainConfig,
) -> Result<(Vec<PairSample>, Option<Projection>)> {
    let projection = match cfg.projection_dim {
        None => None,
        Some(dim) => {
            let mut ids: Vec<&str> = pairs
                .iter()
                .flat_map(|p| [p.header_id.as_str(), p.follower_id.as_str()])
                .collect();
            ids.sort_unstable();
            ids.dedup();
            let vectors = ids
                .iter()
                .map(|id| store.require(id))
                .collect::<Result<Vec<_>>>()?;
            Some(Projection::fit_pca(&vectors, dim)?)
        }
    };
    let embed = |v: &[f64]| match &projection {
        Some(p) => p.apply(v),
        None => DVector::from_column_slice(v),
    };
    let samples = pairs
        .iter()
        .map(|p| {
            let weight = if cfg.multiplicity_weighting { p.count.max(1) as f64 } else { 1.0 };
            Ok(PairSample {
                x: embed(store.require(&p.header_id)?),
                y: embed(store.require(&p.follower_id)?),
                label: p.label.sign(),
                weight,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((samples, projection))
}

/// Trains an ASML model, or an SML model when `symmetric_g` is set.
pub fn train_asml(
    pairs: &[LabeledPair],
    store: &FeatureStore,
    cfg: &TrainConfig,
    gamma: f64,
    symmetric_g: bool,
) -> Result<TrainedModel> {
    cfg.validate()?;
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidArgument(format!("gamma must be non-negative, got {gamma}")));
    }
    let variant = if symmetric_g { Variant::Sml } else { Variant::Asml };
    let dim = match (cfg.projection_dim, store.dim()) {
        (Some(d), _) => d,
        (None, Some(d)) => d,
        (None, None) => return Err(Error::Empty("feature store is empty")),
    };
    if pairs.is_empty() {
        let model = MetricModel::identity(variant, dim, gamma);
        return Ok(TrainedModel {
            model,
            objective_log: vec![0.0],
            best_epoch: 0,
        });
    }
    check_both_classes(pairs)?;
    let (samples, projection) = resolve_samples(pairs, store, cfg)?;
    let objective = AsmlObjective::new(samples, gamma);
    let (m, g, log, best_epoch) = optimize_asml(&objective, dim, cfg, symmetric_g)?;
    Ok(TrainedModel {
        model: MetricModel {
            variant,
            m,
            g,
            gamma,
            offset: 0.0,
            threshold: 0.0,
            projection,
        },
        objective_log: log,
        best_epoch,
    })
}

type Optimized = (DMatrix<f64>, DMatrix<f64>, Vec<f64>, usize);

/// Mini-batch proximal subgradient descent on the hinge objective,
/// normalized by the total sample weight. Returns the best epoch-end
/// iterate (including the initialization).
pub fn optimize_asml(
    objective: &AsmlObjective,
    dim: usize,
    cfg: &TrainConfig,
    symmetric_g: bool,
) -> Result<Optimized> {
    cfg.validate()?;
    let id = DMatrix::<f64>::identity(dim, dim);
    let mut m = id.clone();
    let mut g = id.clone();
    let n = objective.samples.len();
    let total_weight: f64 = objective.samples.iter().map(|s| s.weight).sum();
    if n == 0 || total_weight == 0.0 {
        return Ok((m, g, vec![objective.value(&id, &id)], 0));
    }
    let reg = objective.gamma / total_weight;

    let mut log = vec![objective.value(&m, &g)];
    let (mut best_m, mut best_g, mut best_value, mut best_epoch) = (m.clone(), g.clone(), log[0], 0);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let batch = cfg.batch_size.min(n);
    let mut step = 0usize;
    let mut dm = DMatrix::zeros(dim, dim);
    let mut dg = DMatrix::zeros(dim, dim);

    for epoch in 1..=cfg.epochs {
        if batch < n {
            order.shuffle(&mut rng);
        }
        for chunk in order.chunks(batch) {
            step += 1;
            let eta = cfg.rate(step);
            dm.fill(0.0);
            dg.fill(0.0);
            // unbiased estimate of (1/W) Σ w_i ∇hinge_i
            let scale = n as f64 / (chunk.len() as f64 * total_weight);
            objective.accumulate_hinge_gradient(&m, &g, chunk.iter().copied(), scale, &mut dm, &mut dg);
            let shrink = 1.0 / (1.0 + eta * reg);
            m = (&m - &dm * eta - &id) * shrink + &id;
            g = (&g - &dg * eta - &id) * shrink + &id;
            symmetrize(&mut m);
            if symmetric_g {
                symmetrize(&mut g);
            }
        }
        if cfg.psd_projection {
            m = project_psd(&m);
        }
        let value = objective.value(&m, &g);
        if !value.is_finite() || m.iter().chain(g.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Diverged { epoch, value });
        }
        debug!("epoch {epoch}: objective {value}");
        log.push(value);
        if value <= best_value {
            best_value = value;
            best_m.copy_from(&m);
            best_g.copy_from(&g);
            best_epoch = epoch;
        }
    }
    Ok((best_m, best_g, log, best_epoch))
}

/// Conventional metric learning:
/// minimize `Σ_pos ‖x - y‖²_M` subject to `M ⪰ 0` and
/// `Σ_neg ‖x - y‖²_M ≥ 1`.
///
/// Both the objective and the constraint are linear in `M`, so with
/// `A_S = Σ_pos w δδᵀ` and `A_D = Σ_neg δδᵀ` the problem reads
/// `min ⟨M, A_S⟩ s.t. ⟨M, A_D⟩ ≥ 1, M ⪰ 0`. It is solved by projected
/// gradient descent on a quadratic penalty whose weight grows tenfold per
/// stage; the final iterate is rescaled so the constraint is active.
pub fn train_ml(pairs: &[LabeledPair], store: &FeatureStore, cfg: &TrainConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    check_both_classes(pairs)?;
    let (samples, projection) = resolve_samples(pairs, store, cfg)?;
    let dim = samples[0].x.len();
    let mut a_s = DMatrix::zeros(dim, dim);
    let mut a_d = DMatrix::zeros(dim, dim);
    for s in &samples {
        let delta = &s.x - &s.y;
        if s.label > 0.0 {
            a_s.ger(s.weight, &delta, &delta, 1.0);
        } else {
            a_d.ger(1.0, &delta, &delta, 1.0);
        }
    }
    if a_d.trace() <= 0.0 {
        return Err(Error::Infeasible("every negative pair has zero separation"));
    }
    let objective = |m: &DMatrix<f64>| m.dot(&a_s);
    let constraint = |m: &DMatrix<f64>| m.dot(&a_d);

    let mut m = DMatrix::<f64>::identity(dim, dim) / a_d.trace();
    let mut log = vec![objective(&m)];
    let (a_s_norm, a_d_norm) = (a_s.norm(), a_d.norm());
    const STAGES: usize = 6;
    let per_stage = cfg.epochs.div_ceil(STAGES).max(1);
    let mut mu = 1.0;
    for _ in 0..STAGES {
        let eta = 1.0 / (a_s_norm + mu * a_d_norm * a_d_norm);
        for _ in 0..per_stage {
            let violation = (1.0 - constraint(&m)).max(0.0);
            let grad = &a_s - &a_d * (mu * violation);
            m = project_psd(&(&m - grad * eta));
            log.push(objective(&m));
        }
        mu *= 10.0;
    }
    let c = constraint(&m);
    if !(c > 0.0) {
        return Err(Error::Infeasible("penalty iteration collapsed to zero"));
    }
    m /= c;
    symmetrize(&mut m);
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Diverged {
            epoch: log.len(),
            value: f64::NAN,
        });
    }
    log.push(objective(&m));

    // d halfway between the mean positive and mean negative distance
    let mean_dist = |sign: f64| {
        let (sum, n) = samples
            .iter()
            .filter(|s| s.label == sign)
            .fold((0.0, 0usize), |(acc, k), s| (acc + quadratic_distance(&m, &s.x, &s.y), k + 1));
        sum / n as f64
    };
    let offset = 0.5 * (mean_dist(1.0) + mean_dist(-1.0));
    let best_epoch = log.len() - 1;
    Ok(TrainedModel {
        model: MetricModel {
            variant: Variant::Ml,
            g: DMatrix::identity(dim, dim),
            m,
            gamma: 0.0,
            offset,
            threshold: 0.0,
            projection,
        },
        objective_log: log,
        best_epoch,
    })
}
