//! Three-step random walks over the user-item-feature graph.
//!
//! Only the user-to-item block of `P^3` is ever needed, so it is computed as a
//! product of three transition submatrices instead of cubing the full transition
//! matrix. The [`oracle`] module does the full computation densely for tests.

use crate::error::{Error, Result};
use crate::learner::FeatureWeights;
use crate::scalar::Scalar;
use crate::sparse::SparseMatrix;

/// Row-stochastic transition blocks of the tripartite graph.
#[derive(Clone, Debug)]
pub struct PathMatrices<T> {
    /// user -> item
    pub p_ui: SparseMatrix<T>,
    /// item -> user
    pub p_iu: SparseMatrix<T>,
    /// item -> feature
    pub p_if: SparseMatrix<T>,
    /// feature -> item
    pub p_fi: SparseMatrix<T>,
    /// Raw item-feature edges, kept so reweighted item -> feature blocks can be
    /// normalized from the original edge weights.
    pub icm: SparseMatrix<T>,
}

impl<T: Scalar> PathMatrices<T> {
    pub fn build(urm: &SparseMatrix<T>, icm: &SparseMatrix<T>) -> Result<Self> {
        if urm.n_cols() != icm.n_rows() {
            return Err(Error::DimensionMismatch {
                op: "build_path_matrices",
                left_rows: urm.n_rows(),
                left_cols: urm.n_cols(),
                right_rows: icm.n_rows(),
                right_cols: icm.n_cols(),
            });
        }
        Ok(Self {
            p_ui: urm.row_normalize()?,
            p_iu: urm.transpose().row_normalize()?,
            p_if: icm.row_normalize()?,
            p_fi: icm.transpose().row_normalize()?,
            icm: icm.clone(),
        })
    }

    pub fn n_users(&self) -> usize {
        self.p_ui.n_rows()
    }

    pub fn n_items(&self) -> usize {
        self.p_ui.n_cols()
    }

    pub fn n_features(&self) -> usize {
        self.p_if.n_cols()
    }

    /// Item -> feature transitions with feature `f` edges scaled by `w[f]` before
    /// row normalization. `None` returns the unweighted block.
    pub fn weighted_p_if(&self, weights: Option<&FeatureWeights<T>>) -> Result<SparseMatrix<T>> {
        match weights {
            None => Ok(self.p_if.clone()),
            Some(w) => weighted_item_features(&self.icm, w),
        }
    }
}

pub fn build_path_matrices<T: Scalar>(urm: &SparseMatrix<T>, icm: &SparseMatrix<T>) -> Result<PathMatrices<T>> {
    PathMatrices::build(urm, icm)
}

/// `row_normalize(icm * diag(w))`.
pub fn weighted_item_features<T: Scalar>(icm: &SparseMatrix<T>, weights: &FeatureWeights<T>) -> Result<SparseMatrix<T>> {
    weights.check_positive()?;
    icm.scale_columns(weights.as_slice())?.row_normalize()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TargetKind {
    Collaborative,
    Reranked { beta: f64 },
}

/// Item-item matrix the feature weights are fitted against.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetMatrix<T> {
    pub t: SparseMatrix<T>,
    pub kind: TargetKind,
}

/// Training interactions per item.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ItemPopularity {
    pub pop: Vec<usize>,
}

impl ItemPopularity {
    pub fn from_urm<T: Scalar>(urm: &SparseMatrix<T>) -> Self {
        Self { pop: urm.col_nnz() }
    }
}

/// Two-step item -> user -> item probabilities. Items without training interactions
/// have empty rows and columns.
pub fn collaborative_target<T: Scalar>(p: &PathMatrices<T>) -> Result<TargetMatrix<T>> {
    Ok(TargetMatrix {
        t: p.p_iu.spmm(&p.p_ui)?,
        kind: TargetKind::Collaborative,
    })
}

/// [`collaborative_target`] keeping only the `k` largest entries of each row, for
/// catalogs where the full item-item matrix does not fit in memory.
pub fn collaborative_target_top_k<T: Scalar>(p: &PathMatrices<T>, k: usize) -> Result<TargetMatrix<T>> {
    Ok(TargetMatrix {
        t: p.p_iu.spmm_top_k(&p.p_ui, k)?,
        kind: TargetKind::Collaborative,
    })
}

/// Item -> item probabilities through features: `P'_if * P_fi`, where `P'_if` uses
/// the given feature weights (or none).
pub fn content_item_item<T: Scalar>(p: &PathMatrices<T>, weights: Option<&FeatureWeights<T>>) -> Result<SparseMatrix<T>> {
    p.weighted_p_if(weights)?.spmm(&p.p_fi)
}

/// As [`content_item_item`] but only computes the columns whose `mask` entry is set.
pub fn content_item_item_columns<T: Scalar>(
    p: &PathMatrices<T>,
    weights: Option<&FeatureWeights<T>>,
    mask: &[bool],
) -> Result<SparseMatrix<T>> {
    p.weighted_p_if(weights)?.spmm(&p.p_fi.restrict_columns(mask)?)
}

/// Popularity re-ranking: `t'[j, k] = t[j, k] / pop[k]^beta`.
pub fn rerank_target<T: Scalar>(target: &TargetMatrix<T>, pop: &ItemPopularity, beta: f64) -> Result<TargetMatrix<T>> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::Config(format!("beta must be a finite value >= 0, got {beta}")));
    }
    if target.kind != TargetKind::Collaborative {
        return Err(Error::Config("only a collaborative target can be re-ranked".into()));
    }
    if pop.pop.len() != target.t.n_cols() {
        return Err(Error::LengthMismatch {
            op: "rerank_target",
            expected: target.t.n_cols(),
            actual: pop.pop.len(),
        });
    }
    let t = if beta == 0.0 {
        target.t.clone()
    } else {
        let b = T::lit(beta);
        let denom: Vec<T> = pop.pop.iter().map(|&n| T::lit(n as f64).powf(b)).collect();
        target
            .t
            .map_entries(|_, k, v| if pop.pop[k] == 0 { T::zero() } else { v / denom[k] })
    };
    Ok(TargetMatrix {
        t,
        kind: TargetKind::Reranked { beta },
    })
}

/// User -> item scores of a 3-step walk: `P_ui * item_item`.
pub fn p3_user_scores<T: Scalar>(p: &PathMatrices<T>, item_item: &SparseMatrix<T>) -> Result<SparseMatrix<T>> {
    p.p_ui.spmm(item_item)
}

/// Dense reference computation of 3-step walk probabilities. Test-scale only.
pub mod oracle {
    use super::*;

    pub const MAX_NODES: usize = 200;

    #[derive(Clone, Copy, Debug, PartialEq, Eq)]
    pub enum PathKind {
        /// user -> item -> user -> item; item -> feature edges removed.
        Collaborative,
        /// user -> item -> feature -> item; item -> user edges removed.
        Content,
    }

    /// Builds the full adjacency matrix over users, items and features, drops the
    /// edges excluded by `kind`, row-normalizes, cubes it, and returns the user x item
    /// block.
    pub fn oracle_p3_block<T: Scalar>(urm: &SparseMatrix<T>, icm: &SparseMatrix<T>, kind: PathKind) -> Result<Vec<Vec<T>>> {
        let (n_u, n_i, n_f) = (urm.n_rows(), urm.n_cols(), icm.n_cols());
        if icm.n_rows() != n_i {
            return Err(Error::DimensionMismatch {
                op: "oracle_p3_block",
                left_rows: n_u,
                left_cols: n_i,
                right_rows: icm.n_rows(),
                right_cols: n_f,
            });
        }
        let n = n_u + n_i + n_f;
        if n > MAX_NODES {
            return Err(Error::Other(format!("oracle limited to {MAX_NODES} nodes, graph has {n}")));
        }
        let item = |i: usize| n_u + i;
        let feature = |f: usize| n_u + n_i + f;
        let mut a = vec![vec![T::zero(); n]; n];
        for (u, i, v) in urm.iter() {
            a[u][item(i)] = v;
            if kind == PathKind::Collaborative {
                a[item(i)][u] = v;
            }
        }
        for (i, f, v) in icm.iter() {
            if kind == PathKind::Content {
                a[item(i)][feature(f)] = v;
            }
            a[feature(f)][item(i)] = v;
        }
        for row in &mut a {
            let s = row.iter().fold(T::zero(), |acc, &x| acc + x);
            if s > T::zero() {
                row.iter_mut().for_each(|x| *x = *x / s);
            }
        }
        let mul = |x: &[Vec<T>], y: &[Vec<T>]| -> Vec<Vec<T>> {
            let mut out = vec![vec![T::zero(); n]; n];
            for r in 0..n {
                for k in 0..n {
                    let xv = x[r][k];
                    if xv == T::zero() {
                        continue;
                    }
                    for c in 0..n {
                        out[r][c] = out[r][c] + xv * y[k][c];
                    }
                }
            }
            out
        };
        let cube = mul(&mul(&a, &a), &a);
        Ok((0..n_u).map(|u| cube[u][n_u..n_u + n_i].to_vec()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::oracle::{oracle_p3_block, PathKind};
    use super::*;

    fn m(rows: &[&[f64]]) -> SparseMatrix<f64> {
        SparseMatrix::from_dense(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn toy() -> PathMatrices<f64> {
        PathMatrices::build(&m(&[&[1.0, 1.0], &[1.0, 0.0]]), &m(&[&[1.0], &[1.0]])).unwrap()
    }

    #[test]
    fn path_matrices_toy() {
        let p = toy();
        assert_eq!(p.p_ui.to_dense(), vec![vec![0.5, 0.5], vec![1.0, 0.0]]);
        assert_eq!(p.p_iu.to_dense(), vec![vec![0.5, 0.5], vec![1.0, 0.0]]);
        let single = PathMatrices::build(&m(&[&[4.0]]), &m(&[&[1.0]])).unwrap();
        assert_eq!(single.p_ui.to_dense(), vec![vec![1.0]]);
        assert_eq!(single.p_iu.to_dense(), vec![vec![1.0]]);
    }

    #[test]
    fn cold_item_has_empty_item_user_row() {
        let p = PathMatrices::build(&m(&[&[1.0, 0.0], &[2.0, 0.0]]), &m(&[&[1.0], &[1.0]])).unwrap();
        assert_eq!(p.p_iu.row_nnz(1), 0);
        assert_eq!(p.p_fi.get(0, 1), 0.5);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        assert!(PathMatrices::build(&m(&[&[1.0, 1.0]]), &m(&[&[1.0]])).is_err());
    }

    #[test]
    fn collaborative_target_toy() {
        let t = collaborative_target(&toy()).unwrap();
        assert_eq!(t.t.to_dense(), vec![vec![0.75, 0.25], vec![0.5, 0.5]]);
        let single = PathMatrices::build(&m(&[&[3.0]]), &m(&[&[1.0]])).unwrap();
        assert_eq!(collaborative_target(&single).unwrap().t.to_dense(), vec![vec![1.0]]);
    }

    #[test]
    fn p3_scores_toy_and_identity() {
        let p = toy();
        let t = collaborative_target(&p).unwrap();
        let scores = p3_user_scores(&p, &t.t).unwrap();
        assert_eq!(scores.to_dense(), vec![vec![0.625, 0.375], vec![0.75, 0.25]]);
        assert_eq!(p3_user_scores(&p, &SparseMatrix::identity(2)).unwrap(), p.p_ui);
        assert!(p3_user_scores(&p, &SparseMatrix::identity(3)).is_err());
    }

    #[test]
    fn oracle_toy_cases() {
        let urm = m(&[&[1.0, 1.0], &[1.0, 0.0]]);
        let icm = m(&[&[1.0], &[1.0]]);
        let block = oracle_p3_block(&urm, &icm, PathKind::Collaborative).unwrap();
        assert_eq!(block, vec![vec![0.625, 0.375], vec![0.75, 0.25]]);

        let p = PathMatrices::build(&urm, &icm).unwrap();
        let via_paths = p3_user_scores(&p, &content_item_item(&p, None).unwrap()).unwrap();
        let block = oracle_p3_block(&urm, &icm, PathKind::Content).unwrap();
        for (u, row) in block.iter().enumerate() {
            for (i, v) in row.iter().enumerate() {
                assert!((v - via_paths.get(u, i)).abs() < 1e-15);
            }
        }

        let no_features = SparseMatrix::zeros(2, 1);
        let block = oracle_p3_block(&urm, &no_features, PathKind::Content).unwrap();
        assert!(block.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn oracle_size_limit() {
        let urm = SparseMatrix::<f64>::zeros(150, 60);
        assert!(oracle_p3_block(&urm, &SparseMatrix::zeros(60, 1), PathKind::Content).is_err());
    }

    #[test]
    fn content_item_item_reductions() {
        let icm = m(&[&[1.0, 1.0, 0.0], &[0.0, 1.0, 1.0], &[1.0, 0.0, 1.0], &[0.0, 0.0, 1.0]]);
        let urm = m(&[&[1.0, 0.0, 1.0, 0.0]]);
        let p = PathMatrices::build(&urm, &icm).unwrap();
        let plain = content_item_item(&p, None).unwrap();
        let ones = content_item_item(&p, Some(&FeatureWeights::uniform(3))).unwrap();
        assert_eq!(plain, ones);
        let scaled = content_item_item(&p, Some(&FeatureWeights::new(vec![7.0; 3]).unwrap())).unwrap();
        for (a, b) in plain.values().iter().zip(scaled.values()) {
            assert!((a - b).abs() < 1e-12);
        }
        let single = PathMatrices::build(&m(&[&[1.0]]), &m(&[&[1.0]])).unwrap();
        assert_eq!(content_item_item(&single, None).unwrap().to_dense(), vec![vec![1.0]]);
    }

    #[test]
    fn content_item_item_matches_dense_weighted_computation() {
        let icm = m(&[
            &[1.0, 0.0, 1.0, 0.0],
            &[0.0, 1.0, 1.0, 0.0],
            &[1.0, 1.0, 0.0, 1.0],
            &[0.0, 0.0, 0.0, 1.0],
            &[1.0, 0.0, 0.0, 0.0],
            &[0.0, 1.0, 1.0, 1.0],
        ]);
        let urm = SparseMatrix::zeros(1, 6);
        let p = PathMatrices::build(&urm, &icm).unwrap();
        let w = vec![0.3, 2.5, 1.0, 4.0];
        let s = content_item_item(&p, Some(&FeatureWeights::new(w.clone()).unwrap())).unwrap();
        let d = icm.to_dense();
        let df: Vec<f64> = (0..4).map(|f| d.iter().map(|r| r[f]).sum()).collect();
        for j in 0..6 {
            let denom: f64 = (0..4).map(|f| d[j][f] * w[f]).sum();
            for k in 0..6 {
                let expected: f64 = (0..4).map(|f| d[j][f] * w[f] / denom * d[k][f] / df[f]).sum();
                assert!((s.get(j, k) - expected).abs() < 1e-14, "{j},{k}");
            }
        }
        let masked = content_item_item_columns(&p, None, &[false, true, false, false, true, false]).unwrap();
        let full = content_item_item(&p, None).unwrap();
        for (j, k, v) in full.iter() {
            let expected = if k == 1 || k == 4 { v } else { 0.0 };
            assert_eq!(masked.get(j, k), expected);
        }
    }

    #[test]
    fn rerank_cases() {
        let target = TargetMatrix {
            t: m(&[&[0.5, 0.5]]),
            kind: TargetKind::Collaborative,
        };
        let pop = ItemPopularity { pop: vec![1, 4] };
        let neutral = rerank_target(&target, &pop, 0.0).unwrap();
        assert_eq!(neutral.t, target.t);
        assert_eq!(neutral.kind, TargetKind::Reranked { beta: 0.0 });
        let r = rerank_target(&target, &pop, 1.0).unwrap();
        assert_eq!(r.t.to_dense(), vec![vec![0.5, 0.125]]);
        assert!(rerank_target(&target, &pop, -0.1).is_err());
        assert!(rerank_target(&r, &pop, 0.5).is_err());
    }

    #[test]
    fn popularity_counts_training_interactions() {
        let pop = ItemPopularity::from_urm(&m(&[&[1.0, 0.0, 5.0], &[2.0, 0.0, 0.0]]));
        assert_eq!(pop.pop, vec![2, 0, 1]);
    }
}
