//! Analytics for pairwise human comparisons: rater consistency against a
//! random-rater null and Bradley-Terry strengths.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::dataset::data_lines;
use crate::error::{parse_err, Error, Result};

/// Upper 0.005 critical value of χ² with 5 degrees of freedom (six bins).
pub const CHI2_CRITICAL_005_SIX_BINS: f64 = 16.750;
/// Upper 0.005 critical value of χ² with 4 degrees of freedom (five bins).
pub const CHI2_CRITICAL_005_FIVE_BINS: f64 = 14.860;

pub const DEFAULT_BINS: usize = 6;

/// One pairwise comparison: how many raters preferred each side.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonRecord {
    pub id: String,
    pub method1: String,
    pub method2: String,
    pub hit1: u64,
    pub hit2: u64,
}

impl ComparisonRecord {
    pub fn new(id: impl Into<String>, method1: impl Into<String>, method2: impl Into<String>, hit1: u64, hit2: u64) -> Self {
        Self {
            id: id.into(),
            method1: method1.into(),
            method2: method2.into(),
            hit1,
            hit2,
        }
    }

    pub fn total(&self) -> u64 {
        self.hit1 + self.hit2
    }

    pub fn to_line(&self) -> String {
        format!("{}\t{}\t{}\t{}\t{}", self.id, self.method1, self.method2, self.hit1, self.hit2)
    }
}

pub fn parse_comparisons(text: &str) -> Result<Vec<ComparisonRecord>> {
    data_lines(text)
        .map(|(lineno, line)| {
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 5 {
                return Err(parse_err(lineno, format!("expected 5 columns, found {}", cols.len())));
            }
            let hit = |s: &str| {
                s.trim()
                    .parse::<u64>()
                    .map_err(|e| parse_err(lineno, format!("bad hit count `{s}`: {e}")))
            };
            let rec = ComparisonRecord::new(cols[0], cols[1], cols[2], hit(cols[3])?, hit(cols[4])?);
            if rec.total() == 0 {
                return Err(parse_err(lineno, "comparison has no votes"));
            }
            Ok(rec)
        })
        .collect()
}

pub fn load_comparisons(path: impl AsRef<Path>) -> Result<Vec<ComparisonRecord>> {
    parse_comparisons(&std::fs::read_to_string(path)?)
}

pub fn comparisons_to_text(records: &[ComparisonRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&r.to_line());
        out.push('\n');
    }
    out
}

/// `|hit1 - hit2| / (hit1 + hit2)` as an exact fraction `(numerator, denominator)`.
pub fn normalized_difference_ratio(hit1: u64, hit2: u64) -> Result<(u64, u64)> {
    let total = hit1 + hit2;
    if total == 0 {
        return Err(Error::InvalidArgument("comparison has no votes".into()));
    }
    Ok((hit1.abs_diff(hit2), total))
}

/// `|hit1 - hit2| / (hit1 + hit2)`, in `[0, 1]`.
pub fn normalized_difference(rec: &ComparisonRecord) -> Result<f64> {
    let (num, den) = normalized_difference_ratio(rec.hit1, rec.hit2)?;
    Ok(num as f64 / den as f64)
}

/// Bin of an exact fraction among `bins` even bins of `[0, 1]`; bins are
/// left-closed, right-open, and the last one also contains 1.
pub fn bin_of_ratio(num: u64, den: u64, bins: usize) -> usize {
    let b = bins as u128;
    ((num as u128 * b / den as u128) as usize).min(bins - 1)
}

/// Binomial(n, 1/2) probabilities of every outcome `k = 0..=n`.
fn fair_binomial(n: u64) -> Vec<f64> {
    let ln2 = std::f64::consts::LN_2;
    let mut ln_choose = 0.0;
    let mut out = Vec::with_capacity(n as usize + 1);
    for k in 0..=n {
        if k > 0 {
            ln_choose += ((n - k + 1) as f64).ln() - (k as f64).ln();
        }
        out.push((ln_choose - n as f64 * ln2).exp());
    }
    out
}

/// Probability mass per bin of the normalized difference when each of
/// `num_raters` raters picks a side by a fair coin.
pub fn random_rater_pdf(num_raters: u64, bins: usize) -> Result<Vec<f64>> {
    if num_raters == 0 {
        return Err(Error::InvalidArgument("at least one rater is needed".into()));
    }
    if bins == 0 {
        return Err(Error::InvalidArgument("at least one bin is needed".into()));
    }
    let mut mass = vec![0.0; bins];
    for (k, p) in fair_binomial(num_raters).into_iter().enumerate() {
        let (num, den) = normalized_difference_ratio(k as u64, num_raters - k as u64)?;
        mass[bin_of_ratio(num, den, bins)] += p;
    }
    Ok(mass)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquared {
    pub statistic: f64,
    pub bins_used: usize,
}

impl ChiSquared {
    pub fn degrees_of_freedom(&self) -> usize {
        self.bins_used.saturating_sub(1)
    }
}

/// `Σ (n_j - e_j)² / e_j` over bins with `e_j > 0` and, when `omit_below`
/// is set, `e_j >= omit_below`.
pub fn chi_squared(observed: &[f64], expected: &[f64], omit_below: Option<f64>) -> Result<ChiSquared> {
    if observed.len() != expected.len() {
        return Err(Error::InvalidArgument(format!(
            "{} observed bins vs {} expected bins",
            observed.len(),
            expected.len()
        )));
    }
    let mut statistic = 0.0;
    let mut bins_used = 0;
    for (&n, &e) in observed.iter().zip(expected) {
        if e <= 0.0 || omit_below.is_some_and(|t| e < t) {
            continue;
        }
        statistic += (n - e) * (n - e) / e;
        bins_used += 1;
    }
    if bins_used == 0 {
        return Err(Error::AllBinsOmitted);
    }
    Ok(ChiSquared { statistic, bins_used })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyHistogram {
    /// `bins + 1` edges from 0 to 1.
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub expected: Vec<f64>,
}

impl ConsistencyHistogram {
    pub fn bins(&self) -> usize {
        self.counts.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub histogram: ConsistencyHistogram,
    /// Every bin with non-zero expectation.
    pub all_bins: ChiSquared,
    /// Bins with expectation below 5 dropped; absent when none remain.
    pub large_bins: Option<ChiSquared>,
}

/// Bins observed consistencies and tests them against the random-rater
/// null. With `num_raters` unset, each record's null uses its own vote
/// total.
pub fn consistency_report(records: &[ComparisonRecord], num_raters: Option<u64>, bins: usize) -> Result<ConsistencyReport> {
    if records.is_empty() {
        return Err(Error::Empty("no comparison records"));
    }
    if bins == 0 {
        return Err(Error::InvalidArgument("at least one bin is needed".into()));
    }
    let mut counts = vec![0u64; bins];
    let mut expected = vec![0.0; bins];
    let mut null_cache: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for r in records {
        let (num, den) = normalized_difference_ratio(r.hit1, r.hit2)?;
        counts[bin_of_ratio(num, den, bins)] += 1;
        let raters = num_raters.unwrap_or(den);
        let null = match null_cache.entry(raters) {
            std::collections::btree_map::Entry::Occupied(e) => e.into_mut(),
            std::collections::btree_map::Entry::Vacant(e) => e.insert(random_rater_pdf(raters, bins)?),
        };
        for (e, p) in expected.iter_mut().zip(null.iter()) {
            *e += p;
        }
    }
    let observed: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let all_bins = chi_squared(&observed, &expected, None)?;
    let large_bins = match chi_squared(&observed, &expected, Some(5.0)) {
        Ok(c) => Some(c),
        Err(Error::AllBinsOmitted) => None,
        Err(e) => return Err(e),
    };
    let bin_edges = (0..=bins).map(|j| j as f64 / bins as f64).collect();
    Ok(ConsistencyReport {
        histogram: ConsistencyHistogram {
            bin_edges,
            counts,
            expected,
        },
        all_bins,
        large_bins,
    })
}

/// Pairwise win counts over named items; `wins[i][j]` is how often item `i`
/// beat item `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinMatrix {
    pub items: Vec<String>,
    pub wins: Vec<Vec<f64>>,
}

impl WinMatrix {
    pub fn new(items: Vec<String>, wins: Vec<Vec<f64>>) -> Result<Self> {
        let k = items.len();
        if wins.len() != k || wins.iter().any(|r| r.len() != k) {
            return Err(Error::InvalidArgument(format!("win matrix must be {k}x{k}")));
        }
        if wins.iter().flatten().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidArgument("win counts must be finite and non-negative".into()));
        }
        Ok(Self { items, wins })
    }

    /// Each comparison credits `hit1` wins to `method1` over `method2` and
    /// `hit2` the other way.
    pub fn from_comparisons(records: &[ComparisonRecord]) -> Self {
        let items: Vec<String> = records
            .iter()
            .flat_map(|r| [r.method1.clone(), r.method2.clone()])
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let index: BTreeMap<&str, usize> = items.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let mut wins = vec![vec![0.0; items.len()]; items.len()];
        for r in records {
            let (a, b) = (index[r.method1.as_str()], index[r.method2.as_str()]);
            if a != b {
                wins[a][b] += r.hit1 as f64;
                wins[b][a] += r.hit2 as f64;
            }
        }
        Self { items, wins }
    }

    fn games(&self, i: usize, j: usize) -> f64 {
        self.wins[i][j] + self.wins[j][i]
    }

    /// Connected components of the graph linking items that met at least once.
    pub fn components(&self) -> Vec<Vec<String>> {
        let k = self.items.len();
        let mut seen = vec![false; k];
        let mut out = Vec::new();
        for start in 0..k {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut queue = VecDeque::from([start]);
            let mut comp = Vec::new();
            while let Some(i) = queue.pop_front() {
                comp.push(self.items[i].clone());
                for (j, s) in seen.iter_mut().enumerate() {
                    if !*s && self.games(i, j) > 0.0 {
                        *s = true;
                        queue.push_back(j);
                    }
                }
            }
            comp.sort();
            out.push(comp);
        }
        out
    }

    /// `Σ_{i≠j} w_ij ln(π_i / (π_i + π_j))`
    pub fn log_likelihood(&self, strengths: &[f64]) -> f64 {
        let mut ll = 0.0;
        for (i, row) in self.wins.iter().enumerate() {
            for (j, &w) in row.iter().enumerate() {
                if i != j && w > 0.0 {
                    ll += w * (strengths[i] / (strengths[i] + strengths[j])).ln();
                }
            }
        }
        ll
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BradleyTerry {
    pub items: Vec<String>,
    /// Normalized to sum to 1.
    pub strengths: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Items that never won; their strength is driven to zero.
    pub zero_win_items: Vec<String>,
}

impl BradleyTerry {
    /// Items sorted by descending strength, ties by name.
    pub fn ranking(&self) -> Vec<(&str, f64)> {
        let mut out: Vec<(&str, f64)> = self.items.iter().map(String::as_str).zip(self.strengths.iter().copied()).collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        out
    }

    pub fn strength(&self, item: &str) -> Option<f64> {
        self.items.iter().position(|i| i == item).map(|p| self.strengths[p])
    }
}

pub const BT_TOLERANCE: f64 = 1e-10;
pub const BT_MAX_ITERATIONS: usize = 10_000;

/// Maximum-likelihood Bradley-Terry strengths by minorization-maximization:
/// `π_i ← W_i / Σ_j n_ij / (π_i + π_j)`, renormalized every sweep.
pub fn bradley_terry_fit(matrix: &WinMatrix) -> Result<BradleyTerry> {
    let k = matrix.items.len();
    if k == 0 {
        return Err(Error::Empty("no items to rank"));
    }
    let total: f64 = matrix.wins.iter().flatten().sum();
    if total <= 0.0 {
        return Err(Error::Empty("no wins recorded"));
    }
    let components = matrix.components();
    if components.len() > 1 {
        return Err(Error::Disconnected(components));
    }
    let won: Vec<f64> = (0..k).map(|i| (0..k).filter(|&j| j != i).map(|j| matrix.wins[i][j]).sum()).collect();
    let zero_win_items: Vec<String> = (0..k).filter(|&i| won[i] == 0.0).map(|i| matrix.items[i].clone()).collect();
    if !zero_win_items.is_empty() {
        warn!("items without any win get strength 0: {}", zero_win_items.join(", "));
    }

    let mut pi = vec![1.0 / k as f64; k];
    let mut next = vec![0.0; k];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < BT_MAX_ITERATIONS {
        iterations += 1;
        for i in 0..k {
            let denom: f64 = (0..k)
                .filter(|&j| j != i)
                .filter_map(|j| {
                    let n = matrix.games(i, j);
                    let s = pi[i] + pi[j];
                    (n > 0.0 && s > 0.0).then(|| n / s)
                })
                .sum();
            next[i] = if denom > 0.0 { won[i] / denom } else { 0.0 };
        }
        let norm: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= norm);
        let change = pi
            .iter()
            .zip(&next)
            .map(|(&old, &new)| if old > 0.0 { (new - old).abs() / old } else { new })
            .fold(0.0, f64::max);
        std::mem::swap(&mut pi, &mut next);
        if change < BT_TOLERANCE {
            converged = true;
            break;
        }
    }
    Ok(BradleyTerry {
        items: matrix.items.clone(),
        strengths: pi,
        iterations,
        converged,
        zero_win_items,
    })
}
