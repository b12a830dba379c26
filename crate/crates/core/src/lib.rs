//! Training-free classification under label noise, on top of precomputed
//! embeddings.
//!
//! The pipeline is:
//!
//! 1. load a [`LabeledDataset`] (EVEC container, see [`store`]);
//! 2. score every training label with a leave-one-out reliability
//!    `eta = 1/k*`, where `k*` is the smallest odd neighborhood size at which
//!    the sample's own neighbors agree with its label ([`reliability`]);
//! 3. classify queries with fixed k-NN, the adaptive neighborhood rule (ANN)
//!    or the reliability-weighted adaptive rule (WANN) ([`classifiers`]);
//! 4. optionally reduce dimension with PCA, LDA, or LDA fitted only on the
//!    labels that survived reliability filtering ([`dimred`]).
//!
//! [`noise`] and [`experiment`] provide the label-corruption generators and
//! the seeded evaluation harness used to compare those methods.

pub mod classifiers;
pub mod dimred;
pub mod error;
pub mod experiment;
pub mod knn;
pub mod noise;
pub mod reliability;
pub mod rng;
pub mod store;

pub use classifiers::{ann_predict, fixed_knn_predict, wann_predict, Prediction};
pub use dimred::{fit_flda, fit_lda, fit_pca, project, Projection, ProjectionKind};
pub use error::{Error, Result};
pub use knn::{majority_vote, nearest_neighbors, pairwise_sq_distances, NeighborList, VoteResult};
pub use noise::{FlipMap, NoiseKind, NoiseOutcome, NoiseSpec};
pub use reliability::{compute_reliability_map, filter_unreliable, ReliabilityConfig, ReliabilityMap};
pub use store::{LabeledDataset, StandardizationStats, SyntheticSpec};
