//! Neural regressors built on a small reverse-mode autodiff tape.

pub mod graph;
pub mod layers;
pub mod mlp;
pub mod optim;
pub mod sparsemax;
pub mod tabnet;
mod train;

pub use graph::{Gradients, Graph, ParamId, ParamStore, Var};
pub use layers::Mode;
pub use mlp::{train_attention_mlp, train_mlp, AttentionMlpModel, MlpConfig, MlpModel};
pub use tabnet::{train_tabnet, update_prior, TabNetConfig, TabNetModel};
pub use train::TargetScaler;
