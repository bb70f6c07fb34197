//! The five cold-item recommenders: CBF, CBF-IDF, CP3, HP3 and HP3_R.
//!
//! Every recommender is an item-item matrix `s`; users are scored as
//! `scorer * s` restricted to the candidate (cold) columns. Graph recommenders
//! score with the row-normalized training matrix, CBF with the raw one.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::eval::{evaluate, GroundTruth};
use crate::learner::FeatureWeights;
use crate::scalar::Scalar;
use crate::sparse::SparseMatrix;
use crate::walk::PathMatrices;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    Cbf,
    CbfIdf,
    Cp3,
    Hp3,
    Hp3R,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [ModelKind::Cbf, ModelKind::CbfIdf, ModelKind::Cp3, ModelKind::Hp3, ModelKind::Hp3R];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Cbf => "cbf",
            ModelKind::CbfIdf => "cbf_idf",
            ModelKind::Cp3 => "cp3",
            ModelKind::Hp3 => "hp3",
            ModelKind::Hp3R => "hp3_r",
        }
    }

    pub fn is_graph(self) -> bool {
        matches!(self, ModelKind::Cp3 | ModelKind::Hp3 | ModelKind::Hp3R)
    }

    pub fn is_hybrid(self) -> bool {
        matches!(self, ModelKind::Hp3 | ModelKind::Hp3R)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown algorithm {s:?}; expected one of cbf, cbf_idf, cp3, hp3, hp3_r")))
    }
}

/// Which user profile multiplies the item-item matrix.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Scorer {
    /// Row-normalized profile for graph models, raw profile for CBF.
    #[default]
    Native,
    Normalized,
    Raw,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecConfig {
    pub knn_k: usize,
    pub shrink: f64,
    pub top_n: usize,
    pub scorer: Scorer,
}

impl Default for RecConfig {
    fn default() -> Self {
        Self {
            knn_k: 100,
            shrink: 0.0,
            top_n: 5,
            scorer: Scorer::Native,
        }
    }
}

impl RecConfig {
    pub fn validate(&self) -> Result<()> {
        if self.knn_k == 0 || self.top_n == 0 {
            return Err(Error::Config("knn_k and top_n must be >= 1".into()));
        }
        if !(self.shrink >= 0.0 && self.shrink.is_finite()) {
            return Err(Error::Config(format!("shrink must be >= 0, got {}", self.shrink)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ItemItemModel<T> {
    pub s: SparseMatrix<T>,
    pub kind: ModelKind,
}

/// `ln(|I| / df_f)` per feature.
pub fn idf_weights<T: Scalar>(icm: &SparseMatrix<T>) -> Result<Vec<T>> {
    let n_items = T::lit(icm.n_rows() as f64);
    icm.col_nnz()
        .into_iter()
        .enumerate()
        .map(|(f, df)| {
            if df == 0 {
                Err(Error::UnusedFeature(f))
            } else {
                Ok((n_items / T::lit(df as f64)).ln())
            }
        })
        .collect()
}

/// Weighted cosine similarity between item feature vectors with shrinkage,
/// zero diagonal, and each column cut to its `knn_k` largest entries.
///
/// With `columns`, only the marked columns (scored items) are computed.
pub fn cbf_similarity<T: Scalar>(
    icm: &SparseMatrix<T>,
    feature_weights: Option<&[T]>,
    config: &RecConfig,
    columns: Option<&[bool]>,
) -> Result<ItemItemModel<T>> {
    config.validate()?;
    let x = match feature_weights {
        Some(w) => icm.scale_columns(w)?,
        None => icm.clone(),
    };
    let norms: Vec<T> = (0..x.n_rows())
        .map(|j| x.row(j).1.iter().fold(T::zero(), |acc, &v| acc + v * v).sqrt())
        .collect();
    let right = match columns {
        Some(mask) => x.restrict_rows(mask)?,
        None => x.clone(),
    };
    let shrink = T::lit(config.shrink);
    let mut s = x.spmm(&right.transpose())?;
    s.retain(|j, k, _| j != k);
    let s = s.map_entries(|j, k, v| v / (norms[j] * norms[k] + shrink));
    let s = s.transpose().top_k_per_row(config.knn_k).transpose();
    let kind = if feature_weights.is_some() { ModelKind::CbfIdf } else { ModelKind::Cbf };
    Ok(ItemItemModel { s, kind })
}

/// Item-item matrix of a graph recommender: `p_if * p_fi` for CP3, `P'_if * p_fi`
/// with the learned weights for HP3 and HP3_R.
pub fn build_item_item<T: Scalar>(
    kind: ModelKind,
    p: &PathMatrices<T>,
    weights: Option<&FeatureWeights<T>>,
    columns: Option<&[bool]>,
) -> Result<ItemItemModel<T>> {
    match (kind, weights) {
        (ModelKind::Cp3, Some(_)) => return Err(Error::Config("cp3 takes no feature weights".into())),
        (ModelKind::Hp3 | ModelKind::Hp3R, None) => {
            return Err(Error::Config(format!("{kind} requires learned feature weights")))
        }
        (ModelKind::Cbf | ModelKind::CbfIdf, _) => {
            return Err(Error::Config(format!("{kind} is not a graph recommender; use cbf_similarity")))
        }
        _ => {}
    }
    let p_fi = match columns {
        Some(mask) => p.p_fi.restrict_columns(mask)?,
        None => p.p_fi.clone(),
    };
    Ok(ItemItemModel {
        s: p.weighted_p_if(weights)?.spmm(&p_fi)?,
        kind,
    })
}

/// Users per rayon task in [`score_and_rank`].
const SCORE_CHUNK: usize = 256;

/// Ranked `(item, score)` lists, indexed by user.
#[derive(Clone, Debug, PartialEq)]
pub struct RankedLists<T> {
    pub lists: Vec<Vec<(usize, T)>>,
}

impl<T: Scalar> RankedLists<T> {
    pub fn items(&self) -> Vec<Vec<usize>> {
        self.lists.iter().map(|l| l.iter().map(|&(i, _)| i).collect()).collect()
    }

    pub fn n_empty(&self) -> usize {
        self.lists.iter().filter(|l| l.is_empty()).count()
    }
}

/// Scores users with `profile * model.s`, keeps candidate columns with positive
/// score, and returns the `top_n` best per user (ties to the smaller item index).
pub fn score_and_rank<T: Scalar>(
    profile: &SparseMatrix<T>,
    model: &ItemItemModel<T>,
    candidates: &[usize],
    top_n: usize,
) -> Result<RankedLists<T>> {
    if candidates.is_empty() {
        return Err(Error::Config("candidate set is empty".into()));
    }
    let mut mask = vec![false; model.s.n_cols()];
    for &c in candidates {
        if c >= mask.len() {
            return Err(Error::Config(format!("candidate item {c} out of range")));
        }
        mask[c] = true;
    }
    if profile.n_cols() != model.s.n_rows() {
        return Err(Error::DimensionMismatch {
            op: "score_and_rank",
            left_rows: profile.n_rows(),
            left_cols: profile.n_cols(),
            right_rows: model.s.n_rows(),
            right_cols: model.s.n_cols(),
        });
    }
    let s = model.s.restrict_columns(&mask)?;
    // Scores are accumulated one user at a time and cut to `top_n` right away, so the
    // full user x candidate score matrix never exists.
    let tol = T::drop_tolerance();
    let users: Vec<usize> = (0..profile.n_rows()).collect();
    let lists = users
        .par_chunks(SCORE_CHUNK)
        .flat_map_iter(|chunk| {
            let mut acc = vec![T::zero(); s.n_cols()];
            let mut touched = vec![false; s.n_cols()];
            let mut pattern = Vec::new();
            let s = &s;
            chunk
                .iter()
                .map(move |&u| {
                    let (items, weights) = profile.row(u);
                    for (&j, &p) in items.iter().zip(weights) {
                        let (cols, vals) = s.row(j);
                        for (&c, &v) in cols.iter().zip(vals) {
                            if !touched[c] {
                                touched[c] = true;
                                pattern.push(c);
                            }
                            acc[c] = acc[c] + p * v;
                        }
                    }
                    let mut row: Vec<(usize, T)> = Vec::with_capacity(pattern.len());
                    for &c in &pattern {
                        if acc[c] > T::zero() && acc[c] >= tol {
                            row.push((c, acc[c]));
                        }
                        acc[c] = T::zero();
                        touched[c] = false;
                    }
                    pattern.clear();
                    row.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal).then(a.0.cmp(&b.0)));
                    row.truncate(top_n);
                    row
                })
                .collect::<Vec<_>>()
        })
        .collect();
    Ok(RankedLists { lists })
}

/// Picks the scoring profile for `kind`.
pub fn profile_for<'a, T>(kind: ModelKind, scorer: Scorer, raw_urm: &'a SparseMatrix<T>, p: &'a PathMatrices<T>) -> &'a SparseMatrix<T> {
    match (scorer, kind.is_graph()) {
        (Scorer::Normalized, _) | (Scorer::Native, true) => &p.p_ui,
        (Scorer::Raw, _) | (Scorer::Native, false) => raw_urm,
    }
}

/// Mean NDCG@`top_n` of the hybrid recommender with `weights` on held-out items.
/// Used as the validation signal while learning weights.
pub fn hybrid_validation_ndcg<T: Scalar>(
    p: &PathMatrices<T>,
    weights: &FeatureWeights<T>,
    candidates: &[usize],
    truth: &GroundTruth,
    top_n: usize,
) -> Result<f64> {
    let mut mask = vec![false; p.n_items()];
    for &c in candidates {
        mask[c] = true;
    }
    let model = build_item_item(ModelKind::Hp3, p, Some(weights), Some(&mask))?;
    let ranked = score_and_rank(&p.p_ui, &model, candidates, top_n)?;
    Ok(evaluate(&ranked.items(), truth, top_n).ndcg)
}
