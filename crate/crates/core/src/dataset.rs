//! Font features, pair records and the dataset operations built on them:
//! header-disjoint splits, negative sampling, popularity and idf tables.
//!
//! Text formats are line-delimited and tab-separated; `#` starts a comment
//! line and blank lines are ignored.
//!
//! ```text
//! features:  font_id <TAB> v1,v2,...,vD
//! pairs:     header_id <TAB> follower_id [<TAB> count]
//! labeled:   header_id <TAB> follower_id <TAB> count <TAB> +1|-1
//! ```

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{parse_err, Error, Result};

/// Default feature dimension of the font embeddings.
pub const DEFAULT_FEATURE_DIM: usize = 768;

/// A named font and its feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FontFeature {
    pub font_id: String,
    pub vector: Vec<f64>,
}

impl FontFeature {
    pub fn new(font_id: impl Into<String>, vector: Vec<f64>) -> Self {
        Self {
            font_id: font_id.into(),
            vector,
        }
    }
}

/// An indexed collection of font features sharing one dimension.
///
/// The dimension is fixed by the first inserted vector. Vectors must be
/// finite and non-zero so that cosine similarity is always defined.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<FontFeature>", into = "Vec<FontFeature>")]
pub struct FeatureStore {
    fonts: Vec<FontFeature>,
    norms: Vec<f64>,
    index: HashMap<String, usize>,
}

impl PartialEq for FeatureStore {
    fn eq(&self, other: &Self) -> bool {
        self.fonts == other.fonts
    }
}

impl TryFrom<Vec<FontFeature>> for FeatureStore {
    type Error = Error;

    fn try_from(fonts: Vec<FontFeature>) -> Result<Self> {
        let mut store = FeatureStore::new();
        for font in fonts {
            store.insert(font)?;
        }
        Ok(store)
    }
}

impl From<FeatureStore> for Vec<FontFeature> {
    fn from(store: FeatureStore) -> Self {
        store.fonts
    }
}

impl FeatureStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Dimension of the stored vectors, `None` while the store is empty.
    pub fn dim(&self) -> Option<usize> {
        self.fonts.first().map(|f| f.vector.len())
    }

    pub fn len(&self) -> usize {
        self.fonts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fonts.is_empty()
    }

    pub fn insert(&mut self, font: FontFeature) -> Result<()> {
        if let Some(dim) = self.dim() {
            if font.vector.len() != dim {
                return Err(Error::DimensionMismatch {
                    font_id: font.font_id,
                    expected: dim,
                    found: font.vector.len(),
                });
            }
        }
        if font.vector.is_empty() {
            return Err(Error::ZeroVector(font.font_id));
        }
        if self.index.contains_key(&font.font_id) {
            return Err(Error::DuplicateFont(font.font_id));
        }
        if font.vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(font.font_id));
        }
        let norm = l2_norm(&font.vector);
        if norm == 0.0 {
            return Err(Error::ZeroVector(font.font_id));
        }
        self.index.insert(font.font_id.clone(), self.fonts.len());
        self.norms.push(norm);
        self.fonts.push(font);
        Ok(())
    }

    pub fn contains(&self, font_id: &str) -> bool {
        self.index.contains_key(font_id)
    }

    pub fn get(&self, font_id: &str) -> Option<&[f64]> {
        self.index
            .get(font_id)
            .map(|&i| self.fonts[i].vector.as_slice())
    }

    /// Like [`get`](Self::get) but reports the missing id as an error.
    pub fn require(&self, font_id: &str) -> Result<&[f64]> {
        self.get(font_id)
            .ok_or_else(|| Error::UnknownFont(font_id.to_string()))
    }

    pub fn position(&self, font_id: &str) -> Option<usize> {
        self.index.get(font_id).copied()
    }

    pub fn fonts(&self) -> &[FontFeature] {
        &self.fonts
    }

    /// Euclidean norm of the vector at `position`.
    pub fn norm_at(&self, position: usize) -> f64 {
        self.norms[position]
    }

    pub fn iter(&self) -> impl Iterator<Item = &FontFeature> {
        self.fonts.iter()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.fonts.iter().map(|f| f.font_id.as_str())
    }

    /// A new store holding the listed fonts that are present here, in the
    /// order they appear in `self`.
    pub fn subset<'a>(&self, ids: impl IntoIterator<Item = &'a str>) -> FeatureStore {
        let wanted: HashSet<&str> = ids.into_iter().collect();
        let mut out = FeatureStore::new();
        for (font, &norm) in self.fonts.iter().zip(&self.norms) {
            if wanted.contains(font.font_id.as_str()) {
                out.index.insert(font.font_id.clone(), out.fonts.len());
                out.norms.push(norm);
                out.fonts.push(font.clone());
            }
        }
        out
    }

    /// Parses the tab-separated feature format.
    pub fn parse(text: &str) -> Result<Self> {
        let mut store = FeatureStore::new();
        for (lineno, line) in data_lines(text) {
            let (id, values) = line
                .split_once('\t')
                .ok_or_else(|| parse_err(lineno, "expected `font_id<TAB>v1,v2,...`"))?;
            let id = id.trim();
            if id.is_empty() {
                return Err(parse_err(lineno, "empty font id"));
            }
            let vector = values
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|e| parse_err(lineno, format!("bad value `{v}`: {e}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            store.insert(FontFeature::new(id, vector))?;
        }
        Ok(store)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for font in &self.fonts {
            out.push_str(&font.font_id);
            out.push('\t');
            push_joined(&mut out, &font.vector, ',');
            out.push('\n');
        }
        out
    }
}

pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn push_joined(out: &mut String, values: &[f64], sep: char) {
    use std::fmt::Write;
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(sep);
        }
        write!(out, "{v}").expect("writing to a String cannot fail");
    }
}

/// Yields `(1-based line number, line)` for non-blank, non-comment lines.
pub fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let line = line.trim_end_matches('\r');
        let trimmed = line.trim();
        (!trimmed.is_empty() && !trimmed.starts_with('#')).then_some((i + 1, line))
    })
}

/// Which document roles a pair dataset relates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairRole {
    HeaderBody,
    HeaderSubheader,
}

impl fmt::Display for PairRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PairRole::HeaderBody => "header_body",
            PairRole::HeaderSubheader => "header_subheader",
        })
    }
}

impl FromStr for PairRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "header_body" | "body" => Ok(PairRole::HeaderBody),
            "header_subheader" | "subheader" => Ok(PairRole::HeaderSubheader),
            other => Err(Error::InvalidArgument(format!("unknown pair role `{other}`"))),
        }
    }
}

/// One observed (header, follower) pairing and how often it was seen.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRecord {
    pub header_id: String,
    pub follower_id: String,
    pub count: u64,
}

impl PairRecord {
    pub fn new(header_id: impl Into<String>, follower_id: impl Into<String>, count: u64) -> Self {
        Self {
            header_id: header_id.into(),
            follower_id: follower_id.into(),
            count,
        }
    }
}

/// A multiset of pair records. Duplicate (header, follower) records are
/// merged by summing their counts and records are kept sorted by
/// `(header_id, follower_id)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDataset {
    role: PairRole,
    records: Vec<PairRecord>,
}

impl PairDataset {
    pub fn new(role: PairRole, records: impl IntoIterator<Item = PairRecord>) -> Result<Self> {
        let mut merged: BTreeMap<(String, String), u64> = BTreeMap::new();
        for r in records {
            if r.count == 0 {
                return Err(Error::InvalidArgument(format!(
                    "pair ({}, {}) has count 0",
                    r.header_id, r.follower_id
                )));
            }
            *merged.entry((r.header_id, r.follower_id)).or_default() += r.count;
        }
        Ok(Self::from_merged(role, merged))
    }

    fn from_merged(role: PairRole, merged: BTreeMap<(String, String), u64>) -> Self {
        let records = merged
            .into_iter()
            .map(|((header_id, follower_id), count)| PairRecord {
                header_id,
                follower_id,
                count,
            })
            .collect();
        Self { role, records }
    }

    pub fn empty(role: PairRole) -> Self {
        Self {
            role,
            records: Vec::new(),
        }
    }

    pub fn role(&self) -> PairRole {
        self.role
    }

    pub fn records(&self) -> &[PairRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Sum of all record counts.
    pub fn total_count(&self) -> u64 {
        self.records.iter().map(|r| r.count).sum()
    }

    /// Unique header ids, sorted.
    pub fn headers(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for r in &self.records {
            if out.last() != Some(&r.header_id.as_str()) {
                out.push(&r.header_id);
            }
        }
        out
    }

    /// Unique follower ids, sorted.
    pub fn followers(&self) -> Vec<&str> {
        let set: BTreeSet<&str> = self.records.iter().map(|r| r.follower_id.as_str()).collect();
        set.into_iter().collect()
    }

    /// Number of unique headers (`m`).
    pub fn num_headers(&self) -> usize {
        self.headers().len()
    }

    /// Number of unique followers (`n`).
    pub fn num_followers(&self) -> usize {
        self.followers().len()
    }

    /// Records grouped by header, in header order.
    pub fn by_header(&self) -> Vec<(&str, &[PairRecord])> {
        let mut out = Vec::new();
        let mut start = 0;
        for i in 1..=self.records.len() {
            if i == self.records.len() || self.records[i].header_id != self.records[start].header_id
            {
                out.push((self.records[start].header_id.as_str(), &self.records[start..i]));
                start = i;
            }
        }
        out
    }

    /// Records whose header is `header_id`.
    pub fn records_for(&self, header_id: &str) -> &[PairRecord] {
        let start = self
            .records
            .partition_point(|r| r.header_id.as_str() < header_id);
        let end = self.records[start..]
            .partition_point(|r| r.header_id.as_str() == header_id)
            + start;
        &self.records[start..end]
    }

    /// The distinct followers observed with `header_id`.
    pub fn followers_of(&self, header_id: &str) -> BTreeSet<String> {
        self.records_for(header_id)
            .iter()
            .map(|r| r.follower_id.clone())
            .collect()
    }

    pub fn filter(&self, mut keep: impl FnMut(&PairRecord) -> bool) -> PairDataset {
        PairDataset {
            role: self.role,
            records: self.records.iter().filter(|r| keep(r)).cloned().collect(),
        }
    }

    /// Merges another dataset of the same role into a new one.
    pub fn union(&self, other: &PairDataset) -> Result<PairDataset> {
        if self.role != other.role {
            return Err(Error::InvalidArgument(format!(
                "cannot merge {} with {}",
                self.role, other.role
            )));
        }
        PairDataset::new(
            self.role,
            self.records.iter().chain(&other.records).cloned(),
        )
    }

    /// Parses the pair format; the count column defaults to 1.
    pub fn parse(role: PairRole, text: &str) -> Result<Self> {
        let mut records = Vec::new();
        for (lineno, line) in data_lines(text) {
            let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
            let count = match cols.len() {
                2 => 1,
                3 => cols[2]
                    .parse::<u64>()
                    .map_err(|e| parse_err(lineno, format!("bad count `{}`: {e}", cols[2])))?,
                n => return Err(parse_err(lineno, format!("expected 2 or 3 columns, found {n}"))),
            };
            if cols[0].is_empty() || cols[1].is_empty() {
                return Err(parse_err(lineno, "empty font id"));
            }
            if count == 0 {
                return Err(parse_err(lineno, "count must be at least 1"));
            }
            records.push(PairRecord::new(cols[0], cols[1], count));
        }
        PairDataset::new(role, records)
    }

    pub fn load(role: PairRole, path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(role, &std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        self.records
            .iter()
            .map(|r| format!("{}\t{}\t{}\n", r.header_id, r.follower_id, r.count))
            .collect()
    }
}

/// Class label of a training or evaluation pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    /// `+1.0` or `-1.0`.
    pub fn sign(self) -> f64 {
        match self {
            Label::Positive => 1.0,
            Label::Negative => -1.0,
        }
    }
}

/// A (header, follower) pair with a class label. `count` carries the
/// multiplicity of positive records and is 1 for sampled negatives.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabeledPair {
    pub header_id: String,
    pub follower_id: String,
    pub label: Label,
    pub count: u64,
}

impl LabeledPair {
    pub fn new(
        header_id: impl Into<String>,
        follower_id: impl Into<String>,
        label: Label,
        count: u64,
    ) -> Self {
        Self {
            header_id: header_id.into(),
            follower_id: follower_id.into(),
            label,
            count,
        }
    }
}

pub fn labeled_to_text(pairs: &[LabeledPair]) -> String {
    pairs
        .iter()
        .map(|p| {
            let label = match p.label {
                Label::Positive => "+1",
                Label::Negative => "-1",
            };
            format!("{}\t{}\t{}\t{}\n", p.header_id, p.follower_id, p.count, label)
        })
        .collect()
}

pub fn parse_labeled(text: &str) -> Result<Vec<LabeledPair>> {
    data_lines(text)
        .map(|(lineno, line)| {
            let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
            if cols.len() != 4 {
                return Err(parse_err(lineno, format!("expected 4 columns, found {}", cols.len())));
            }
            let count = cols[2]
                .parse::<u64>()
                .map_err(|e| parse_err(lineno, format!("bad count: {e}")))?;
            let label = match cols[3] {
                "+1" | "1" => Label::Positive,
                "-1" => Label::Negative,
                other => return Err(parse_err(lineno, format!("bad label `{other}`"))),
            };
            Ok(LabeledPair::new(cols[0], cols[1], label, count.max(1)))
        })
        .collect()
}

pub fn load_labeled(path: impl AsRef<Path>) -> Result<Vec<LabeledPair>> {
    parse_labeled(&std::fs::read_to_string(path)?)
}

/// Partitions the unique headers into train and test sides; every record
/// follows its header. `ratio` is the train fraction of headers.
pub fn split_by_header(
    dataset: &PairDataset,
    ratio: f64,
    seed: u64,
) -> Result<(PairDataset, PairDataset)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "split ratio must lie in (0, 1), got {ratio}"
        )));
    }
    let mut headers = dataset.headers();
    let m = headers.len();
    if m < 2 {
        return Err(Error::TooFewHeaders(m));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    headers.shuffle(&mut rng);
    let n_train = ((ratio * m as f64).round() as usize).clamp(1, m - 1);
    let train_headers: HashSet<&str> = headers[..n_train].iter().copied().collect();

    let train = dataset.filter(|r| train_headers.contains(r.header_id.as_str()));
    let test = dataset.filter(|r| !train_headers.contains(r.header_id.as_str()));
    Ok((train, test))
}

/// Returns every unique record as a positive followed by the same number
/// of negatives drawn uniformly without replacement from the
/// header × follower grid minus the positives.
pub fn sample_negatives(dataset: &PairDataset, seed: u64) -> Result<Vec<LabeledPair>> {
    let headers = dataset.headers();
    let followers = dataset.followers();
    let needed = dataset.len();
    let grid = headers.len() * followers.len();
    let available = grid - needed;
    if available == 0 || available < needed {
        return Err(Error::Saturated { available, needed });
    }

    let follower_pos: HashMap<&str, usize> =
        followers.iter().enumerate().map(|(i, f)| (*f, i)).collect();
    let header_pos: HashMap<&str, usize> =
        headers.iter().enumerate().map(|(i, h)| (*h, i)).collect();
    let positive_cells: HashSet<usize> = dataset
        .records()
        .iter()
        .map(|r| header_pos[r.header_id.as_str()] * followers.len() + follower_pos[r.follower_id.as_str()])
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cells: Vec<usize> = if available >= 2 * needed {
        let mut chosen = HashSet::with_capacity(needed);
        let mut order = Vec::with_capacity(needed);
        while order.len() < needed {
            let cell = rng.random_range(0..grid);
            if !positive_cells.contains(&cell) && chosen.insert(cell) {
                order.push(cell);
            }
        }
        order
    } else {
        let mut free: Vec<usize> = (0..grid).filter(|c| !positive_cells.contains(c)).collect();
        let (picked, _) = free.partial_shuffle(&mut rng, needed);
        picked.to_vec()
    };

    let mut out: Vec<LabeledPair> = dataset
        .records()
        .iter()
        .map(|r| LabeledPair::new(&r.header_id, &r.follower_id, Label::Positive, r.count))
        .collect();
    out.extend(cells.into_iter().map(|cell| {
        let (h, f) = (cell / followers.len(), cell % followers.len());
        LabeledPair::new(headers[h], followers[f], Label::Negative, 1)
    }));
    Ok(out)
}

/// Inverse header frequency of follower fonts: `idf(y) = m / t_y`, where
/// `t_y` is the number of distinct headers paired with `y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdfTable {
    num_headers: usize,
    weights: BTreeMap<String, f64>,
    fallback: f64,
}

impl IdfTable {
    /// A table that weights every follower 1.
    pub fn unit() -> Self {
        Self {
            num_headers: 0,
            weights: BTreeMap::new(),
            fallback: 1.0,
        }
    }

    pub fn from_weights(weights: BTreeMap<String, f64>, fallback: f64) -> Self {
        Self {
            num_headers: 0,
            weights,
            fallback,
        }
    }

    pub fn num_headers(&self) -> usize {
        self.num_headers
    }

    pub fn get(&self, follower_id: &str) -> Option<f64> {
        self.weights.get(follower_id).copied()
    }

    /// The weight of `follower_id`, or the fallback for unseen followers.
    pub fn weight(&self, follower_id: &str) -> f64 {
        self.get(follower_id).unwrap_or(self.fallback)
    }

    pub fn fallback(&self) -> f64 {
        self.fallback
    }

    pub fn with_fallback(mut self, fallback: f64) -> Self {
        self.fallback = fallback;
        self
    }

    pub fn max_weight(&self) -> f64 {
        self.weights.values().copied().fold(self.fallback, f64::max)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.weights.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

/// Builds the idf table of a dataset. Followers never seen fall back to
/// `m`, the weight of a follower paired with a single header.
pub fn compute_idf(dataset: &PairDataset) -> Result<IdfTable> {
    if dataset.is_empty() {
        return Err(Error::Empty("idf requires a non-empty dataset"));
    }
    let m = dataset.num_headers();
    let mut header_counts: BTreeMap<String, usize> = BTreeMap::new();
    // records are unique per (header, follower), so each one is a distinct header
    for r in dataset.records() {
        *header_counts.entry(r.follower_id.clone()).or_default() += 1;
    }
    let weights = header_counts
        .into_iter()
        .map(|(id, t)| (id, m as f64 / t as f64))
        .collect();
    Ok(IdfTable {
        num_headers: m,
        weights,
        fallback: m as f64,
    })
}

/// Count-weighted frequency of each follower.
pub fn popularity_counts(dataset: &PairDataset) -> BTreeMap<String, u64> {
    let mut counts = BTreeMap::new();
    for r in dataset.records() {
        *counts.entry(r.follower_id.clone()).or_default() += r.count;
    }
    counts
}

/// Followers ordered by descending count, ties by ascending id.
pub fn rank_by_popularity(counts: &BTreeMap<String, u64>) -> Vec<(String, u64)> {
    let mut ranked: Vec<(String, u64)> = counts.iter().map(|(k, v)| (k.clone(), *v)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(records: &[(&str, &str, u64)]) -> PairDataset {
        PairDataset::new(
            PairRole::HeaderBody,
            records.iter().map(|(h, f, c)| PairRecord::new(*h, *f, *c)),
        )
        .unwrap()
    }

    #[test]
    fn load_three_fonts() {
        let store = FeatureStore::parse("# comment\nA\t1,0,0,0\nB\t0,1,0,0\n\nC\t0,0,1,0.5\n").unwrap();
        assert_eq!(store.dim(), Some(4));
        assert_eq!(store.len(), 3);
        assert_eq!(store.get("C").unwrap(), &[0.0, 0.0, 1.0, 0.5]);
    }

    #[test]
    fn load_rejects_mismatched_dimension() {
        let err = FeatureStore::parse("A\t1,0,0,0\nB\t1,0,0,0,0\n").unwrap_err();
        match err {
            Error::DimensionMismatch { font_id, expected, found } => {
                assert_eq!((font_id.as_str(), expected, found), ("B", 4, 5));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn load_rejects_duplicates_nonfinite_and_zero() {
        assert!(matches!(
            FeatureStore::parse("A\t1,0\nA\t0,1\n"),
            Err(Error::DuplicateFont(_))
        ));
        assert!(matches!(FeatureStore::parse("A\t1,NaN\n"), Err(Error::NonFinite(_))));
        assert!(matches!(FeatureStore::parse("A\t1,inf\n"), Err(Error::NonFinite(_))));
        assert!(matches!(FeatureStore::parse("A\t0,0\n"), Err(Error::ZeroVector(_))));
    }

    #[test]
    fn empty_file_is_empty_store() {
        let store = FeatureStore::parse("").unwrap();
        assert!(store.is_empty());
        assert_eq!(store.dim(), None);
    }

    #[test]
    fn feature_text_round_trips() {
        let store = FeatureStore::parse("A\t0.1,-2.5e-7\nB\t3,4\n").unwrap();
        assert_eq!(FeatureStore::parse(&store.to_text()).unwrap(), store);
    }

    #[test]
    fn duplicate_records_merge() {
        let d = PairDataset::parse(PairRole::HeaderBody, "A\tX\t2\nA\tX\nB\tY\t3\n").unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.total_count(), 6);
        assert_eq!(d.records()[0], PairRecord::new("A", "X", 3));
        assert_eq!((d.num_headers(), d.num_followers()), (2, 2));
    }

    #[test]
    fn pair_parse_rejects_zero_count() {
        assert!(PairDataset::parse(PairRole::HeaderBody, "A\tX\t0\n").is_err());
        assert!(PairDataset::parse(PairRole::HeaderBody, "A\n").is_err());
    }

    #[test]
    fn records_for_finds_header_slice() {
        let d = ds(&[("A", "X", 1), ("B", "X", 1), ("B", "Y", 2), ("C", "Z", 1)]);
        let b = d.records_for("B");
        assert_eq!(b.len(), 2);
        assert!(d.records_for("Q").is_empty());
        assert_eq!(d.by_header().len(), 3);
    }

    #[test]
    fn split_ten_headers_nine_to_one() {
        let records: Vec<_> = (0..10).map(|i| PairRecord::new(format!("H{i}"), "X", 1)).collect();
        let d = PairDataset::new(PairRole::HeaderBody, records).unwrap();
        let (train, test) = split_by_header(&d, 0.9, 7).unwrap();
        assert_eq!(train.num_headers(), 9);
        assert_eq!(test.num_headers(), 1);
        let (train2, test2) = split_by_header(&d, 0.9, 7).unwrap();
        assert_eq!((train, test), (train2, test2));
    }

    #[test]
    fn split_keeps_dominant_header_together() {
        let d = ds(&[
            ("A", "X", 50),
            ("A", "Y", 50),
            ("B", "X", 10),
            ("C", "Y", 10),
            ("D", "Z", 10),
        ]);
        for seed in 0..10 {
            let (train, test) = split_by_header(&d, 0.5, seed).unwrap();
            let in_train = train.records_for("A").len();
            let in_test = test.records_for("A").len();
            assert!(in_train == 2 && in_test == 0 || in_train == 0 && in_test == 2);
        }
    }

    #[test]
    fn split_rejects_single_header_and_bad_ratio() {
        let d = ds(&[("A", "X", 1), ("A", "Y", 1)]);
        assert!(matches!(split_by_header(&d, 0.9, 0), Err(Error::TooFewHeaders(1))));
        let d = ds(&[("A", "X", 1), ("B", "Y", 1)]);
        assert!(split_by_header(&d, 1.0, 0).is_err());
        assert!(split_by_header(&d, 0.0, 0).is_err());
    }

    #[test]
    fn negatives_match_positive_count() {
        let d = ds(&[("A", "W", 1), ("B", "X", 1), ("C", "Y", 1), ("D", "Z", 1), ("A", "X", 1)]);
        let labeled = sample_negatives(&d, 3).unwrap();
        let pos: Vec<_> = labeled.iter().filter(|p| p.label == Label::Positive).collect();
        let neg: Vec<_> = labeled.iter().filter(|p| p.label == Label::Negative).collect();
        assert_eq!((pos.len(), neg.len()), (5, 5));
        for n in &neg {
            assert!(!pos.iter().any(|p| p.header_id == n.header_id && p.follower_id == n.follower_id));
        }
    }

    #[test]
    fn negatives_saturated_grid_errors() {
        let d = ds(&[("A", "X", 1), ("A", "Y", 1), ("B", "X", 1), ("B", "Y", 1)]);
        assert!(matches!(sample_negatives(&d, 0), Err(Error::Saturated { .. })));
    }

    #[test]
    fn negatives_exhaustive_membership_on_ten_by_ten() {
        let mut records = vec![
            PairRecord::new("H0", "F0", 1),
            PairRecord::new("H1", "F5", 2),
            PairRecord::new("H2", "F9", 1),
        ];
        // widen the grid to 10x10 without adding positives beyond the three
        for i in 3..10 {
            records.push(PairRecord::new(format!("H{i}"), format!("F{i}"), 1));
        }
        let d = PairDataset::new(PairRole::HeaderBody, records).unwrap();
        let positives: HashSet<(String, String)> = d
            .records()
            .iter()
            .map(|r| (r.header_id.clone(), r.follower_id.clone()))
            .collect();
        let labeled = sample_negatives(&d, 11).unwrap();
        let negatives: Vec<_> = labeled.iter().filter(|p| p.label == Label::Negative).collect();
        assert_eq!(negatives.len(), d.len());
        let mut seen = HashSet::new();
        for h in d.headers() {
            for f in d.followers() {
                let is_neg = negatives.iter().any(|n| n.header_id == h && n.follower_id == f);
                if is_neg {
                    assert!(!positives.contains(&(h.to_string(), f.to_string())));
                    assert!(seen.insert((h, f)));
                }
            }
        }
        assert_eq!(seen.len(), negatives.len());
        assert_eq!(labeled, sample_negatives(&d, 11).unwrap());
    }

    #[test]
    fn negatives_dense_grid_uses_enumeration() {
        // 3x3 grid with 3 positives leaves 6 free cells: fewer than 2x needed
        let d = ds(&[("A", "X", 1), ("B", "Y", 1), ("C", "Z", 1), ("A", "Y", 1)]);
        let labeled = sample_negatives(&d, 5).unwrap();
        assert_eq!(labeled.len(), 8);
        let negs: HashSet<_> = labeled
            .iter()
            .filter(|p| p.label == Label::Negative)
            .map(|p| (p.header_id.clone(), p.follower_id.clone()))
            .collect();
        assert_eq!(negs.len(), 4);
    }

    #[test]
    fn idf_floor_and_ceiling() {
        let mut records: Vec<_> = (0..10).map(|i| PairRecord::new(format!("H{i}"), "X", 1)).collect();
        records.push(PairRecord::new("H3", "Y", 4));
        let d = PairDataset::new(PairRole::HeaderBody, records).unwrap();
        let idf = compute_idf(&d).unwrap();
        assert_eq!(idf.get("X"), Some(1.0));
        assert_eq!(idf.get("Y"), Some(10.0));
        assert_eq!(idf.get("Q"), None);
        assert_eq!(idf.weight("Q"), 10.0);
    }

    #[test]
    fn idf_six_header_toy() {
        // follower Z appears with 4 of 6 headers, twice with H0
        let d = ds(&[
            ("H0", "Z", 2),
            ("H1", "Z", 1),
            ("H2", "Z", 1),
            ("H3", "Z", 5),
            ("H4", "W", 1),
            ("H5", "W", 1),
        ]);
        let idf = compute_idf(&d).unwrap();
        assert_eq!(idf.get("Z"), Some(1.5));
        assert_eq!(idf.get("W"), Some(3.0));
    }

    #[test]
    fn idf_of_empty_dataset_errors() {
        assert!(compute_idf(&PairDataset::empty(PairRole::HeaderBody)).is_err());
    }

    #[test]
    fn popularity_sums_counts() {
        let d = ds(&[("A", "X", 3), ("B", "X", 2), ("A", "Y", 1)]);
        let counts = popularity_counts(&d);
        assert_eq!(counts.get("X"), Some(&5));
        assert_eq!(counts.get("Y"), Some(&1));
        assert!(popularity_counts(&PairDataset::empty(PairRole::HeaderBody)).is_empty());
        assert_eq!(rank_by_popularity(&counts)[0], ("X".to_string(), 5));
    }

    #[test]
    fn labeled_text_round_trips() {
        let pairs = vec![
            LabeledPair::new("A", "X", Label::Positive, 3),
            LabeledPair::new("B", "Y", Label::Negative, 1),
        ];
        assert_eq!(parse_labeled(&labeled_to_text(&pairs)).unwrap(), pairs);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn dataset_strategy() -> impl Strategy<Value = PairDataset> {
            proptest::collection::vec((0u8..12, 0u8..12, 1u64..5), 2..40).prop_map(|v| {
                PairDataset::new(
                    PairRole::HeaderBody,
                    v.into_iter()
                        .map(|(h, f, c)| PairRecord::new(format!("h{h}"), format!("f{f}"), c)),
                )
                .unwrap()
            })
        }

        proptest! {
            #[test]
            fn split_partitions_headers(d in dataset_strategy(), seed in 0u64..1000, ratio in 0.05f64..0.95) {
                prop_assume!(d.num_headers() >= 2);
                let (train, test) = split_by_header(&d, ratio, seed).unwrap();
                let a: HashSet<&str> = train.headers().into_iter().collect();
                let b: HashSet<&str> = test.headers().into_iter().collect();
                prop_assert!(a.is_disjoint(&b));
                prop_assert_eq!(a.len() + b.len(), d.num_headers());
                prop_assert_eq!(train.total_count() + test.total_count(), d.total_count());
            }

            #[test]
            fn idf_is_antitone(d in dataset_strategy()) {
                let idf = compute_idf(&d).unwrap();
                let mut t: BTreeMap<&str, usize> = BTreeMap::new();
                for r in d.records() {
                    *t.entry(r.follower_id.as_str()).or_default() += 1;
                }
                for (a, ta) in &t {
                    let wa = idf.get(a).unwrap();
                    prop_assert!(wa >= 1.0 && wa <= d.num_headers() as f64);
                    for (b, tb) in &t {
                        if ta < tb {
                            prop_assert!(wa > idf.get(b).unwrap());
                        }
                    }
                }
            }

            #[test]
            fn negatives_never_positive(d in dataset_strategy(), seed in 0u64..100) {
                let grid = d.num_headers() * d.num_followers();
                prop_assume!(grid >= 2 * d.len());
                let labeled = sample_negatives(&d, seed).unwrap();
                let pos: HashSet<(&str, &str)> = d.records().iter()
                    .map(|r| (r.header_id.as_str(), r.follower_id.as_str())).collect();
                let negs: Vec<_> = labeled.iter().filter(|p| p.label == Label::Negative).collect();
                prop_assert_eq!(negs.len(), d.len());
                let uniq: HashSet<(&str, &str)> = negs.iter()
                    .map(|p| (p.header_id.as_str(), p.follower_id.as_str())).collect();
                prop_assert_eq!(uniq.len(), negs.len());
                prop_assert!(uniq.is_disjoint(&pos));
            }
        }
    }
}
