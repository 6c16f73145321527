//! FlyNN: a nearest-neighbor style classifier built from per-class Fly Bloom
//! Filters over sparse FlyHash codes, with exact one-round federated training,
//! an optional differentially private aggregation path, and an experiment
//! harness.

pub mod classifier;
pub mod data;
pub mod dp;
pub mod error;
pub mod federated;
pub mod harness;
pub mod hash;
pub mod knn;
pub mod rng;
pub mod theory;
mod varint;

pub use classifier::{
    infer, merge_counts, novelty_scores, train, train_sbfc, ClassCounts, FilterCounts, FlyNNModel, Gamma, NoveltyScores,
};
pub use data::{Dataset, LabelTable, SynthSpec};
pub use dp::{privatize, sample_laplace, DpParams, PrivatizedCounts};
pub use error::{Error, ErrorCategory, Result};
pub use hash::{fly_hash, gen_lifting_matrix, sim_hash, HashParams, LiftingMatrix, SparseBitVector};
pub use knn::{knn_classify, margin, SimilarityKind};
pub use rng::RngState;
