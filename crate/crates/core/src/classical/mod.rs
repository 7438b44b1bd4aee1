//! From-scratch classical regressors.

pub mod boosting;
pub mod forest;
pub mod knn;
pub mod linear;
pub mod tree;

pub use boosting::{fit_boosted, BoostParams, GradientBoosting};
pub use forest::{fit_forest, ForestParams, RandomForest};
pub use knn::{fit_knn, Knn, KnnParams};
pub use linear::{fit_linear, LinearModel, LinearParams};
pub use tree::{fit_tree, DecisionTree, Node, TreeParams};
