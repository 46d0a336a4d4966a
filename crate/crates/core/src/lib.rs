//! Font pairing recommendation.
//!
//! Given feature vectors for fonts and observed (header, follower) pairings
//! mined from document layouts, this crate recommends follower fonts (body
//! or sub-header) for a query header font. It provides:
//!
//! * [`dsknn`]: dual-space k-nearest-neighbor recommendation, where similar
//!   headers supply candidate followers that are scored in follower space.
//! * [`metric_learning`]: learned pair scoring functions, including the
//!   asymmetric bilinear-plus-distance score trained with a hinge loss.
//! * [`baselines`]: popularity, visual similarity, same-family and a
//!   pluggable contrast-similarity scorer.
//! * [`evaluation`] and [`study_analytics`]: retrieval metrics, binary
//!   classification, rating prediction, χ² consistency tests and
//!   Bradley-Terry ranking of pairwise preferences.
//! * [`pair_extraction`]: header/body and header/sub-header detection over
//!   laid-out text boxes.
//! * [`engine`]: an immutable snapshot bundling everything needed to
//!   answer queries with any method.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod dataset;
pub mod dsknn;
pub mod engine;
pub mod error;
pub mod evaluation;
pub mod linalg;
pub mod metric_learning;
pub mod pair_extraction;
pub mod similarity;
pub mod study_analytics;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

pub use dataset::{
    FeatureStore, FontFeature, IdfTable, Label, LabeledPair, PairDataset, PairRecord, PairRole,
};
pub use dsknn::{DsknnIndex, DsknnParams};
pub use engine::{Engine, EngineSnapshot, Method};
pub use error::{Error, Result};
pub use metric_learning::{MetricModel, TrainConfig, Variant};
pub use similarity::Neighbor;

/// A font with a score, the element of every ranked list in this crate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredFont {
    pub font_id: String,
    pub score: f64,
}

impl ScoredFont {
    pub fn new(font_id: impl Into<String>, score: f64) -> Self {
        Self {
            font_id: font_id.into(),
            score,
        }
    }
}

impl AsRef<str> for ScoredFont {
    fn as_ref(&self) -> &str {
        &self.font_id
    }
}

/// Descending score, ties broken by ascending font id.
pub(crate) fn rank_order(a: &ScoredFont, b: &ScoredFont) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.font_id.cmp(&b.font_id))
}

/// Sorts by [`rank_order`] and keeps the first `n`.
pub(crate) fn top_n(mut scored: Vec<ScoredFont>, n: usize) -> Vec<ScoredFont> {
    if n < scored.len() {
        scored.select_nth_unstable_by(n, rank_order);
        scored.truncate(n);
    }
    scored.sort_by(rank_order);
    scored
}
