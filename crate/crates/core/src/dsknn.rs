//! Dual-space k-nearest-neighbor recommendation.
//!
//! The query header's `K1` nearest training headers (header space) supply
//! a multiset of candidate followers. Every follower font `y` is then
//! scored in follower space against its `K2` most similar candidate
//! instances:
//!
//! ```text
//! S(y) = 1/K2 * Σ cos(y, y_l) * cos(x_q, x_l) [* idf(y_l)]
//! ```
//!
//! where `x_l` is the training header that contributed candidate `y_l`.
//! A candidate paired `c` times with its header occupies up to `c` of the
//! `K2` slots. When fewer than `K2` instances exist the sum is divided by
//! the number actually used.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{compute_idf, l2_norm, FeatureStore, IdfTable, PairDataset};
use crate::error::{Error, Result};
use crate::similarity::{cosine_with_norms, knn};
use crate::{top_n, ScoredFont};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DsknnParams {
    /// Number of neighboring training headers.
    pub k1: usize,
    /// Number of candidate instances averaged per scored follower.
    pub k2: usize,
    pub use_idf: bool,
    /// Length of the recommendation list.
    pub n: usize,
}

impl Default for DsknnParams {
    fn default() -> Self {
        Self {
            k1: 10,
            k2: 5,
            use_idf: false,
            n: 10,
        }
    }
}

impl DsknnParams {
    pub fn validate(&self) -> Result<()> {
        if self.k1 == 0 || self.k2 == 0 || self.n == 0 {
            return Err(Error::InvalidArgument(format!(
                "K1, K2 and N must be at least 1 (got {}, {}, {})",
                self.k1, self.k2, self.n
            )));
        }
        Ok(())
    }
}

/// A candidate follower contributed by one neighboring training header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub follower_id: String,
    pub source_header_id: String,
    /// Cosine similarity between the query and the source header.
    pub header_similarity: f64,
    pub multiplicity: u64,
}

/// Candidate followers for `query` from its `k1` nearest headers in `train`.
pub fn candidate_bodies(
    query: &[f64],
    train: &PairDataset,
    header_store: &FeatureStore,
    k1: usize,
) -> Result<Vec<Candidate>> {
    let headers = training_headers(train, header_store)?;
    candidates_from(query, train, &headers, k1)
}

fn training_headers(train: &PairDataset, header_store: &FeatureStore) -> Result<FeatureStore> {
    if train.is_empty() {
        return Err(Error::Empty("no training headers"));
    }
    let ids = train.headers();
    if let Some(missing) = ids.iter().find(|id| !header_store.contains(id)) {
        return Err(Error::UnknownFont(missing.to_string()));
    }
    Ok(header_store.subset(ids))
}

fn candidates_from(
    query: &[f64],
    train: &PairDataset,
    headers: &FeatureStore,
    k1: usize,
) -> Result<Vec<Candidate>> {
    let neighbors = knn(query, headers, k1, None)?;
    let mut out = Vec::new();
    for nb in neighbors {
        for r in train.records_for(&nb.font_id) {
            out.push(Candidate {
                follower_id: r.follower_id.clone(),
                source_header_id: nb.font_id.clone(),
                header_similarity: nb.score,
                multiplicity: r.count,
            });
        }
    }
    Ok(out)
}

/// Scores one follower vector against a candidate multiset.
///
/// Candidate follower vectors are looked up in `follower_store`. When
/// `idf` is given every term is multiplied by the candidate's idf weight.
pub fn score_follower(
    follower: &[f64],
    candidates: &[Candidate],
    follower_store: &FeatureStore,
    k2: usize,
    idf: Option<&IdfTable>,
) -> Result<f64> {
    let pool = CandidatePool::new(candidates, follower_store, idf)?;
    pool.score(follower, k2)
}

/// Candidates with their follower vectors resolved, ready for scoring many
/// followers against the same pool.
struct CandidatePool<'a> {
    candidates: &'a [Candidate],
    /// Per candidate: index into `vectors`.
    vector_of: Vec<usize>,
    vectors: Vec<(&'a [f64], f64)>,
    idf: Vec<f64>,
}

impl<'a> CandidatePool<'a> {
    fn new(
        candidates: &'a [Candidate],
        follower_store: &'a FeatureStore,
        idf: Option<&IdfTable>,
    ) -> Result<Self> {
        if candidates.is_empty() {
            return Err(Error::Empty("candidate multiset is empty"));
        }
        let mut slot: HashMap<&str, usize> = HashMap::new();
        let mut vectors = Vec::new();
        let mut vector_of = Vec::with_capacity(candidates.len());
        for c in candidates {
            let id = c.follower_id.as_str();
            let idx = match slot.get(id) {
                Some(&i) => i,
                None => {
                    let pos = follower_store
                        .position(id)
                        .ok_or_else(|| Error::UnknownFont(id.to_string()))?;
                    let v = follower_store.fonts()[pos].vector.as_slice();
                    vectors.push((v, follower_store.norm_at(pos)));
                    slot.insert(id, vectors.len() - 1);
                    vectors.len() - 1
                }
            };
            vector_of.push(idx);
        }
        let idf = candidates
            .iter()
            .map(|c| idf.map_or(1.0, |t| t.weight(&c.follower_id)))
            .collect();
        Ok(Self {
            candidates,
            vector_of,
            vectors,
            idf,
        })
    }

    fn score(&self, follower: &[f64], k2: usize) -> Result<f64> {
        if k2 == 0 {
            return Err(Error::InvalidArgument("K2 must be at least 1".into()));
        }
        let norm = l2_norm(follower);
        if norm == 0.0 {
            return Err(Error::ZeroNorm);
        }
        if let Some(&(v, _)) = self.vectors.first() {
            if v.len() != follower.len() {
                return Err(Error::VectorDimension(follower.len(), v.len()));
            }
        }
        let sims: Vec<f64> = self
            .vectors
            .iter()
            .map(|&(v, vn)| cosine_with_norms(follower, norm, v, vn))
            .collect();

        let mut order: Vec<usize> = (0..self.candidates.len()).collect();
        order.sort_by(|&a, &b| {
            let (ca, cb) = (&self.candidates[a], &self.candidates[b]);
            sims[self.vector_of[b]]
                .total_cmp(&sims[self.vector_of[a]])
                .then_with(|| cb.header_similarity.total_cmp(&ca.header_similarity))
                .then_with(|| ca.follower_id.cmp(&cb.follower_id))
                .then_with(|| ca.source_header_id.cmp(&cb.source_header_id))
        });

        let mut remaining = k2 as u64;
        let mut used = 0u64;
        let mut sum = 0.0;
        for i in order {
            if remaining == 0 {
                break;
            }
            let c = &self.candidates[i];
            let take = c.multiplicity.min(remaining);
            sum += take as f64 * sims[self.vector_of[i]] * c.header_similarity * self.idf[i];
            used += take;
            remaining -= take;
        }
        Ok(sum / used as f64)
    }
}

/// A prepared recommender over a training set: training header features,
/// the follower fonts to rank, and the training idf table.
#[derive(Debug, Clone)]
pub struct DsknnIndex {
    train: PairDataset,
    headers: FeatureStore,
    followers: FeatureStore,
    idf: IdfTable,
}

impl DsknnIndex {
    /// `follower_store` defines the fonts that get ranked; it must contain
    /// every follower of `train`.
    pub fn build(
        train: &PairDataset,
        header_store: &FeatureStore,
        follower_store: &FeatureStore,
    ) -> Result<Self> {
        let headers = training_headers(train, header_store)?;
        if let Some(missing) = train.followers().into_iter().find(|f| !follower_store.contains(f)) {
            return Err(Error::UnknownFont(missing.to_string()));
        }
        Ok(Self {
            train: train.clone(),
            headers,
            followers: follower_store.clone(),
            idf: compute_idf(train)?,
        })
    }

    pub fn idf(&self) -> &IdfTable {
        &self.idf
    }

    pub fn followers(&self) -> &FeatureStore {
        &self.followers
    }

    pub fn candidates(&self, query: &[f64], k1: usize) -> Result<Vec<Candidate>> {
        candidates_from(query, &self.train, &self.headers, k1)
    }

    /// Score of a single follower font for `query`.
    pub fn score(&self, query: &[f64], follower: &[f64], params: &DsknnParams) -> Result<f64> {
        params.validate()?;
        let candidates = self.candidates(query, params.k1)?;
        let pool = CandidatePool::new(&candidates, &self.followers, self.idf_for(params))?;
        pool.score(follower, params.k2)
    }

    /// Ranks every follower font and returns the top `params.n`.
    pub fn recommend(&self, query: &[f64], params: &DsknnParams) -> Result<Vec<ScoredFont>> {
        Ok(top_n(self.score_all(query, params)?, params.n))
    }

    /// Scores of every follower font, in store order.
    pub fn score_all(&self, query: &[f64], params: &DsknnParams) -> Result<Vec<ScoredFont>> {
        params.validate()?;
        let candidates = self.candidates(query, params.k1)?;
        let pool = CandidatePool::new(&candidates, &self.followers, self.idf_for(params))?;
        self.followers
            .iter()
            .map(|f| Ok(ScoredFont::new(f.font_id.clone(), pool.score(&f.vector, params.k2)?)))
            .collect()
    }

    fn idf_for(&self, params: &DsknnParams) -> Option<&IdfTable> {
        params.use_idf.then_some(&self.idf)
    }
}

/// One-shot recommendation; builds a [`DsknnIndex`] and queries it.
pub fn recommend(
    query: &[f64],
    train: &PairDataset,
    header_store: &FeatureStore,
    follower_store: &FeatureStore,
    params: &DsknnParams,
) -> Result<Vec<ScoredFont>> {
    DsknnIndex::build(train, header_store, follower_store)?.recommend(query, params)
}
