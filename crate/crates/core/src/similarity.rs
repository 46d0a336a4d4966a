//! Cosine similarity and exact nearest-neighbor search over a
//! [`FeatureStore`].

use std::collections::HashSet;

use crate::dataset::{l2_norm, FeatureStore};
use crate::error::{Error, Result};
use crate::{top_n, ScoredFont};

/// A neighbor returned by [`knn`]; `score` is the cosine similarity.
pub type Neighbor = ScoredFont;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cosine similarity of two equal-length, non-zero vectors, clamped to
/// `[-1, 1]`.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::VectorDimension(a.len(), b.len()));
    }
    let (na, nb) = (l2_norm(a), l2_norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok(cosine_with_norms(a, na, b, nb))
}

pub(crate) fn cosine_with_norms(a: &[f64], norm_a: f64, b: &[f64], norm_b: f64) -> f64 {
    (dot(a, b) / (norm_a * norm_b)).clamp(-1.0, 1.0)
}

/// Exact top-`k` fonts by cosine similarity to `query`, descending, ties
/// broken by font id. Fonts in `exclude` are skipped.
pub fn knn(
    query: &[f64],
    store: &FeatureStore,
    k: usize,
    exclude: Option<&HashSet<String>>,
) -> Result<Vec<Neighbor>> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let scored = score_all(query, store, exclude)?;
    if scored.is_empty() {
        return Err(Error::Empty("knn over an empty store"));
    }
    Ok(top_n(scored, k))
}

/// Cosine similarity of `query` to every font in the store, in store order.
pub fn score_all(
    query: &[f64],
    store: &FeatureStore,
    exclude: Option<&HashSet<String>>,
) -> Result<Vec<Neighbor>> {
    if let Some(dim) = store.dim() {
        if dim != query.len() {
            return Err(Error::VectorDimension(query.len(), dim));
        }
    }
    let qn = l2_norm(query);
    if qn == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok(store
        .fonts()
        .iter()
        .enumerate()
        .filter(|(_, f)| exclude.is_none_or(|ex| !ex.contains(&f.font_id)))
        .map(|(i, f)| {
            ScoredFont::new(
                f.font_id.clone(),
                cosine_with_norms(query, qn, &f.vector, store.norm_at(i)),
            )
        })
        .collect())
}
