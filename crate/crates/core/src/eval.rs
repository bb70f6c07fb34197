//! Top-N accuracy metrics over binary relevance: Recall@N, MAP@N and NDCG@N.
//!
//! Conventions:
//! - AP@N divides by `min(N, |relevant|)`.
//! - NDCG@N uses binary gains with a `1 / log2(rank + 1)` discount (ranks from 1).
//! - Users without relevant items or without recommendations are skipped and counted,
//!   never scored as zero.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::hash::Hash;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Relevant cold items per user index.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GroundTruth {
    sets: BTreeMap<usize, BTreeSet<usize>>,
}

impl GroundTruth {
    pub fn from_pairs<I: IntoIterator<Item = (usize, usize)>>(pairs: I) -> Self {
        let mut sets: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
        for (user, item) in pairs {
            sets.entry(user).or_default().insert(item);
        }
        Self { sets }
    }

    pub fn get(&self, user: usize) -> Option<&BTreeSet<usize>> {
        self.sets.get(&user)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &BTreeSet<usize>)> {
        self.sets.iter().map(|(&u, s)| (u, s))
    }

    pub fn n_users(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }
}

fn check_relevant<I>(relevant: &HashSet<I>) -> Result<()> {
    if relevant.is_empty() {
        Err(Error::EmptyRelevant)
    } else {
        Ok(())
    }
}

pub fn recall_at_n<I: Eq + Hash>(ranked: &[I], relevant: &HashSet<I>, n: usize) -> Result<f64> {
    check_relevant(relevant)?;
    let hits = ranked.iter().take(n).filter(|i| relevant.contains(*i)).count();
    Ok(hits as f64 / relevant.len() as f64)
}

pub fn ap_at_n<I: Eq + Hash>(ranked: &[I], relevant: &HashSet<I>, n: usize) -> Result<f64> {
    check_relevant(relevant)?;
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (pos, item) in ranked.iter().take(n).enumerate() {
        if relevant.contains(item) {
            hits += 1;
            sum += hits as f64 / (pos + 1) as f64;
        }
    }
    Ok(sum / n.min(relevant.len()) as f64)
}

#[inline]
fn discount(rank: usize) -> f64 {
    1.0 / ((rank + 1) as f64).log2()
}

pub fn ndcg_at_n<I: Eq + Hash>(ranked: &[I], relevant: &HashSet<I>, n: usize) -> Result<f64> {
    check_relevant(relevant)?;
    let dcg: f64 = ranked
        .iter()
        .take(n)
        .enumerate()
        .filter(|(_, item)| relevant.contains(*item))
        .map(|(pos, _)| discount(pos + 1))
        .sum();
    let idcg: f64 = (1..=n.min(relevant.len())).map(discount).sum();
    Ok(dcg / idcg)
}

/// Aggregated metrics of one algorithm.
#[derive(Clone, Debug, PartialEq)]
pub struct AlgorithmMetrics {
    pub recall: f64,
    pub map: f64,
    pub ndcg: f64,
    pub n_users_evaluated: usize,
    pub n_users_skipped: usize,
}

/// Pairwise summation; the result only depends on the order of `values`.
fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n if n <= 8 => values.iter().sum(),
        n => {
            let (left, right) = values.split_at(n / 2);
            pairwise_sum(left) + pairwise_sum(right)
        }
    }
}

/// Averages the metrics over users that have both relevant items and a nonempty list.
///
/// `lists[u]` is the ranked item list of user index `u`. Users that appear in either
/// the ground truth or with a nonempty list but lack the other are counted as skipped.
pub fn evaluate(lists: &[Vec<usize>], truth: &GroundTruth, n: usize) -> AlgorithmMetrics {
    let mut users: BTreeSet<usize> = truth.iter().filter(|(_, s)| !s.is_empty()).map(|(u, _)| u).collect();
    users.extend(lists.iter().enumerate().filter(|(_, l)| !l.is_empty()).map(|(u, _)| u));

    let mut recalls = Vec::new();
    let mut aps = Vec::new();
    let mut ndcgs = Vec::new();
    let mut skipped = 0;
    for u in users {
        let list = lists.get(u).map(Vec::as_slice).unwrap_or(&[]);
        let relevant: HashSet<usize> = truth.get(u).map(|s| s.iter().copied().collect()).unwrap_or_default();
        if list.is_empty() || relevant.is_empty() {
            skipped += 1;
            continue;
        }
        recalls.push(recall_at_n(list, &relevant, n).expect("nonempty relevant set"));
        aps.push(ap_at_n(list, &relevant, n).expect("nonempty relevant set"));
        ndcgs.push(ndcg_at_n(list, &relevant, n).expect("nonempty relevant set"));
    }
    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { pairwise_sum(v) / v.len() as f64 };
    AlgorithmMetrics {
        recall: mean(&recalls),
        map: mean(&aps),
        ndcg: mean(&ndcgs),
        n_users_evaluated: recalls.len(),
        n_users_skipped: skipped,
    }
}

/// Metrics of several algorithms at a common cutoff, in insertion order.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub cutoff: usize,
    pub rows: Vec<(String, AlgorithmMetrics)>,
}

impl MetricReport {
    pub fn new(cutoff: usize) -> Self {
        Self {
            cutoff,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, metrics: AlgorithmMetrics) {
        self.rows.push((name.into(), metrics));
    }

    pub fn get(&self, name: &str) -> Option<&AlgorithmMetrics> {
        self.rows.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    /// Renders the report: `#` header lines documenting the metric definitions, then
    /// one `name recall map ndcg n_users n_skipped` line per algorithm.
    pub fn render(&self) -> String {
        let n = self.cutoff;
        let mut out = String::new();
        let _ = writeln!(out, "# cutoff N = {n}; binary relevance over held-out cold items");
        let _ = writeln!(out, "# recall = |top-N & relevant| / |relevant|");
        let _ = writeln!(out, "# map = sum of precision@i at hits i <= N, divided by min(N, |relevant|)");
        let _ = writeln!(out, "# ndcg = DCG / IDCG with gain 1 and discount 1/log2(rank+1)");
        let _ = writeln!(out, "# users without relevant items or recommendations are skipped");
        let _ = writeln!(out, "# name recall map ndcg n_users n_skipped");
        for (name, m) in &self.rows {
            let _ = writeln!(
                out,
                "{name} {:.5} {:.5} {:.5} {} {}",
                m.recall, m.map, m.ndcg, m.n_users_evaluated, m.n_users_skipped
            );
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let io = |source| Error::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut file = std::fs::File::create(path).map_err(io)?;
        file.write_all(self.render().as_bytes()).map_err(io)
    }
}
