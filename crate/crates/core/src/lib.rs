//! Graph-based hybrid recommendation for item cold-start.
//!
//! Users, items and item features form a tripartite graph. Recommendations come
//! from 3-step random walks user -> item -> feature -> item, whose item -> feature
//! transitions are reweighted with feature weights learned to reproduce the
//! collaborative walk user -> item -> user -> item on warm items. Cold items have
//! no interactions but are reachable through their features.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix it to `f64`, which is what the pipeline uses.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod learner;
pub mod recommenders;
pub mod scalar;
pub mod sparse;
pub mod walk;

pub use error::{Error, Result};
pub use eval::{AlgorithmMetrics, GroundTruth, MetricReport};
pub use learner::{FeatureWeights, TrainConfig, TrainReport};
pub use recommenders::{ItemItemModel, ModelKind, RecConfig, RankedLists, Scorer};
pub use scalar::Scalar;
pub use sparse::SparseMatrix;
pub use walk::{ItemPopularity, PathMatrices, TargetKind, TargetMatrix};

pub type Matrix = SparseMatrix<f64>;
pub type Weights = FeatureWeights<f64>;
pub type Paths = PathMatrices<f64>;
pub type Target = TargetMatrix<f64>;
pub type Dataset = dataset::Dataset<f64>;
pub type Split = dataset::SplitOutput<f64>;
pub type Model = ItemItemModel<f64>;

pub type MatrixF32 = SparseMatrix<f32>;
pub type WeightsF32 = FeatureWeights<f32>;
pub type PathsF32 = PathMatrices<f32>;
