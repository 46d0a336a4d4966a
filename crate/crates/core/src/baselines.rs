//! Non-learned comparison methods.

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{popularity_counts, rank_by_popularity, FeatureStore, PairDataset};
use crate::error::{Error, Result};
use crate::similarity::{cosine, knn};
use crate::{top_n, ScoredFont};

/// The `n` most frequent followers of `train`, scored by their count. The
/// list does not depend on any query.
pub fn popularity_recommend(train: &PairDataset, n: usize) -> Result<Vec<ScoredFont>> {
    if train.is_empty() {
        return Err(Error::Empty("popularity needs a non-empty training set"));
    }
    Ok(rank_by_popularity(&popularity_counts(train))
        .into_iter()
        .take(n)
        .map(|(id, c)| ScoredFont::new(id, c as f64))
        .collect())
}

/// The `n` followers most cosine-similar to the query header.
pub fn sknn_recommend(query: &[f64], follower_store: &FeatureStore, n: usize) -> Result<Vec<ScoredFont>> {
    knn(query, follower_store, n, None)
}

const STYLE_SUFFIXES: &[&str] = &[
    "semibold", "demibold", "extrabold", "ultrabold", "bold", "italic", "oblique", "light", "thin",
    "black", "heavy", "medium", "regular", "condensed", "narrow", "extended", "book",
    "mt", "ps",
];

/// Family part of a PostScript-style font name: the text before the first
/// hyphen (or comma), with trailing style words removed.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FamilyName(String);

impl FamilyName {
    pub fn parse(font_id: &str) -> Self {
        let head = font_id
            .split(['-', ','])
            .next()
            .unwrap_or(font_id)
            .trim();
        let head = if head.is_empty() { font_id.trim() } else { head };
        let mut family = head.to_string();
        'strip: loop {
            let lower = family.to_ascii_lowercase();
            for suffix in STYLE_SUFFIXES {
                if lower.len() > suffix.len() && lower.ends_with(suffix) {
                    family.truncate(family.len() - suffix.len());
                    family.truncate(family.trim_end_matches([' ', '_']).len());
                    continue 'strip;
                }
            }
            break;
        }
        if family.is_empty() {
            family = font_id.to_string();
        }
        FamilyName(family)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Case-insensitive family equality.
    pub fn same_as(&self, other: &FamilyName) -> bool {
        self.0.eq_ignore_ascii_case(&other.0)
    }
}

impl fmt::Display for FamilyName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Whether two font ids share a parsed family.
pub fn same_family(a: &str, b: &str) -> bool {
    FamilyName::parse(a).same_as(&FamilyName::parse(b))
}

/// Up to `n` fonts of the query's family, sampled uniformly without
/// replacement. The query font itself is never returned.
pub fn same_family_recommend(query_header_id: &str, follower_store: &FeatureStore, n: usize, seed: u64) -> Vec<String> {
    let family = FamilyName::parse(query_header_id);
    let mut pool: Vec<&str> = follower_store
        .ids()
        .filter(|id| *id != query_header_id && FamilyName::parse(id).same_as(&family))
        .collect();
    pool.sort_unstable();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let take = n.min(pool.len());
    let (picked, _) = pool.partial_shuffle(&mut rng, take);
    picked.iter().map(|s| s.to_string()).collect()
}

/// A pluggable contrast/similarity pair scorer.
pub trait ConsimHook: Send + Sync {
    fn name(&self) -> &str;
    fn score(&self, x: &[f64], y: &[f64]) -> Result<f64>;
}

/// Stand-in scorer `-|cos(x, y) - target|`, rewarding pairs that are
/// neither too similar nor too different. Not the published ConSim metric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContrastTarget {
    pub target: f64,
}

impl Default for ContrastTarget {
    fn default() -> Self {
        Self { target: 0.5 }
    }
}

impl ConsimHook for ContrastTarget {
    fn name(&self) -> &str {
        "contrast-target stand-in"
    }

    fn score(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        Ok(-(cosine(x, y)? - self.target).abs())
    }
}

/// Delegates to `hook`; errors when none is registered.
pub fn consim_score(x: &[f64], y: &[f64], hook: Option<&dyn ConsimHook>) -> Result<f64> {
    hook.ok_or(Error::NoConsimHook)?.score(x, y)
}

/// The `n` followers with the highest hook score for the query.
pub fn consim_recommend(
    query: &[f64],
    follower_store: &FeatureStore,
    n: usize,
    hook: Option<&dyn ConsimHook>,
) -> Result<Vec<ScoredFont>> {
    let hook = hook.ok_or(Error::NoConsimHook)?;
    let scored = follower_store
        .iter()
        .map(|f| Ok(ScoredFont::new(f.font_id.clone(), hook.score(query, &f.vector)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(top_n(scored, n))
}
