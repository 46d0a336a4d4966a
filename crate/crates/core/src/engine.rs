//! Immutable snapshot of everything needed to answer queries, and the
//! engine that serves them with any method.
//!
//! On disk a snapshot is one header line
//! `fontpair-snapshot v1 sha256=<hex>` followed by a JSON document whose
//! SHA-256 digest is the one in the header.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{consim_recommend, same_family, same_family_recommend, sknn_recommend, ConsimHook, ContrastTarget};
use crate::dataset::{compute_idf, popularity_counts, rank_by_popularity, FeatureStore, IdfTable, PairDataset};
use crate::dsknn::{DsknnIndex, DsknnParams};
use crate::error::{Error, Result};
use crate::evaluation::Recommender;
use crate::metric_learning::{MetricModel, Variant};
use crate::similarity::cosine;
use crate::{top_n, ScoredFont};

pub const SNAPSHOT_MAGIC: &str = "fontpair-snapshot";
pub const SNAPSHOT_VERSION: &str = "v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Dsknn,
    Asml,
    Sml,
    Ml,
    Popularity,
    Sknn,
    Family,
    Consim,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Dsknn,
        Method::Asml,
        Method::Sml,
        Method::Ml,
        Method::Popularity,
        Method::Sknn,
        Method::Family,
        Method::Consim,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Dsknn => "dsknn",
            Method::Asml => "asml",
            Method::Sml => "sml",
            Method::Ml => "ml",
            Method::Popularity => "popularity",
            Method::Sknn => "sknn",
            Method::Family => "family",
            Method::Consim => "consim",
        }
    }

    /// The learned model a method needs, if any.
    pub fn variant(self) -> Option<Variant> {
        match self {
            Method::Asml => Some(Variant::Asml),
            Method::Sml => Some(Variant::Sml),
            Method::Ml => Some(Variant::Ml),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::UnknownMethod(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineSnapshot {
    pub version: String,
    /// Query-side fonts.
    pub headers: FeatureStore,
    /// Fonts that get recommended.
    pub followers: FeatureStore,
    pub train: PairDataset,
    pub models: BTreeMap<Variant, MetricModel>,
    pub dsknn: DsknnParams,
    pub popularity: BTreeMap<String, u64>,
    pub idf: IdfTable,
    /// Contrast target of the stand-in contrast scorer.
    pub consim_target: f64,
    /// Seed for same-family sampling.
    pub family_seed: u64,
}

impl EngineSnapshot {
    pub fn build(
        headers: FeatureStore,
        followers: FeatureStore,
        train: PairDataset,
        models: impl IntoIterator<Item = MetricModel>,
        dsknn: DsknnParams,
    ) -> Result<Self> {
        let models: BTreeMap<Variant, MetricModel> = models.into_iter().map(|m| (m.variant, m)).collect();
        let snapshot = Self {
            version: SNAPSHOT_VERSION.to_string(),
            popularity: popularity_counts(&train),
            idf: compute_idf(&train)?,
            headers,
            followers,
            train,
            models,
            dsknn,
            consim_target: ContrastTarget::default().target,
            family_seed: 0,
        };
        snapshot.validate()?;
        Ok(snapshot)
    }

    /// Every referenced font resolves and every model accepts the feature
    /// dimension.
    pub fn validate(&self) -> Result<()> {
        if self.version != SNAPSHOT_VERSION {
            return Err(Error::VersionMismatch {
                found: self.version.clone(),
                expected: SNAPSHOT_VERSION.to_string(),
            });
        }
        self.dsknn.validate()?;
        for r in self.train.records() {
            if !self.headers.contains(&r.header_id) {
                return Err(Error::UnknownFont(r.header_id.clone()));
            }
            if !self.followers.contains(&r.follower_id) {
                return Err(Error::UnknownFont(r.follower_id.clone()));
            }
        }
        for (variant, model) in &self.models {
            if *variant != model.variant {
                return Err(Error::Snapshot(format!("model stored under {variant} is a {} model", model.variant)));
            }
            for store in [&self.headers, &self.followers] {
                if let Some(d) = store.dim() {
                    if d != model.input_dim() {
                        return Err(Error::VectorDimension(d, model.input_dim()));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> Result<String> {
        let json = serde_json::to_string(self).map_err(|e| Error::Snapshot(e.to_string()))?;
        let digest = hex::encode(Sha256::digest(json.as_bytes()));
        Ok(format!("{SNAPSHOT_MAGIC} {SNAPSHOT_VERSION} sha256={digest}\n{json}"))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let (header, json) = text
            .split_once('\n')
            .ok_or_else(|| Error::Snapshot("missing snapshot header line".into()))?;
        let mut parts = header.split(' ');
        if parts.next() != Some(SNAPSHOT_MAGIC) {
            return Err(Error::Snapshot("not a fontpair snapshot".into()));
        }
        let version = parts.next().unwrap_or_default();
        if version != SNAPSHOT_VERSION {
            return Err(Error::VersionMismatch {
                found: version.to_string(),
                expected: SNAPSHOT_VERSION.to_string(),
            });
        }
        let digest = parts
            .next()
            .and_then(|p| p.strip_prefix("sha256="))
            .ok_or_else(|| Error::Snapshot("missing checksum".into()))?;
        if hex::encode(Sha256::digest(json.as_bytes())) != digest {
            return Err(Error::Checksum);
        }
        let snapshot: Self = serde_json::from_str(json).map_err(|e| Error::Snapshot(e.to_string()))?;
        snapshot.validate()?;
        Ok(snapshot)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

/// Query engine over one snapshot. Immutable and shareable across threads.
#[derive(Debug, Clone)]
pub struct Engine {
    snapshot: EngineSnapshot,
    index: DsknnIndex,
    popular: Vec<ScoredFont>,
}

impl Engine {
    pub fn new(snapshot: EngineSnapshot) -> Result<Self> {
        snapshot.validate()?;
        let index = DsknnIndex::build(&snapshot.train, &snapshot.headers, &snapshot.followers)?;
        let popular = rank_by_popularity(&snapshot.popularity)
            .into_iter()
            .map(|(id, c)| ScoredFont::new(id, c as f64))
            .collect();
        Ok(Self {
            snapshot,
            index,
            popular,
        })
    }

    pub fn snapshot(&self) -> &EngineSnapshot {
        &self.snapshot
    }

    pub fn header_ids(&self) -> Vec<&str> {
        self.snapshot.headers.ids().collect()
    }

    pub fn follower_ids(&self) -> Vec<&str> {
        self.snapshot.followers.ids().collect()
    }

    /// Methods this snapshot can serve.
    pub fn methods(&self) -> Vec<Method> {
        Method::ALL
            .into_iter()
            .filter(|m| m.variant().is_none_or(|v| self.snapshot.models.contains_key(&v)))
            .collect()
    }

    fn header(&self, id: &str) -> Result<&[f64]> {
        self.snapshot.headers.get(id).ok_or_else(|| Error::UnknownFont(id.to_string()))
    }

    fn follower(&self, id: &str) -> Result<&[f64]> {
        self.snapshot.followers.get(id).ok_or_else(|| Error::UnknownFont(id.to_string()))
    }

    fn model(&self, method: Method) -> Result<&MetricModel> {
        let variant = method.variant().expect("learned method");
        self.snapshot
            .models
            .get(&variant)
            .ok_or_else(|| Error::InvalidArgument(format!("snapshot has no trained {variant} model")))
    }

    fn consim(&self) -> ContrastTarget {
        ContrastTarget {
            target: self.snapshot.consim_target,
        }
    }

    /// Top `n` followers for a header, best first.
    pub fn recommend(&self, method: Method, header_id: &str, n: usize) -> Result<Vec<ScoredFont>> {
        let query = self.header(header_id)?;
        if n == 0 {
            return Ok(Vec::new());
        }
        match method {
            Method::Dsknn => self.index.recommend(query, &DsknnParams { n, ..self.snapshot.dsknn }),
            Method::Asml | Method::Sml | Method::Ml => {
                let model = self.model(method)?;
                let scored = self
                    .snapshot
                    .followers
                    .iter()
                    .map(|f| Ok(ScoredFont::new(f.font_id.clone(), model.score(query, &f.vector)?)))
                    .collect::<Result<Vec<_>>>()?;
                Ok(top_n(scored, n))
            }
            Method::Popularity => Ok(self.popular.iter().take(n).cloned().collect()),
            Method::Sknn => sknn_recommend(query, &self.snapshot.followers, n),
            Method::Family => Ok(same_family_recommend(header_id, &self.snapshot.followers, n, self.snapshot.family_seed)
                .into_iter()
                .map(|id| ScoredFont::new(id, 1.0))
                .collect()),
            Method::Consim => consim_recommend(query, &self.snapshot.followers, n, Some(&self.consim() as &dyn ConsimHook)),
        }
    }

    /// Score of one (header, follower) pair; larger is better for every
    /// method.
    pub fn score(&self, method: Method, header_id: &str, follower_id: &str) -> Result<f64> {
        let query = self.header(header_id)?;
        let follower = self.follower(follower_id)?;
        match method {
            Method::Dsknn => self.index.score(query, follower, &self.snapshot.dsknn),
            Method::Asml | Method::Sml | Method::Ml => self.model(method)?.score(query, follower),
            Method::Popularity => Ok(self.snapshot.popularity.get(follower_id).copied().unwrap_or(0) as f64),
            Method::Sknn => cosine(query, follower),
            Method::Family => Ok(if same_family(header_id, follower_id) { 1.0 } else { 0.0 }),
            Method::Consim => self.consim().score(query, follower),
        }
    }

    pub fn recommender(&self, method: Method) -> MethodRecommender<'_> {
        MethodRecommender { engine: self, method }
    }
}

/// One engine method viewed as a [`Recommender`].
pub struct MethodRecommender<'a> {
    engine: &'a Engine,
    method: Method,
}

impl Recommender for MethodRecommender<'_> {
    fn name(&self) -> &str {
        self.method.as_str()
    }

    fn recommend(&self, header_id: &str, n: usize) -> Result<Vec<ScoredFont>> {
        self.engine.recommend(self.method, header_id, n)
    }
}
