//! Topology-aware two-level attention networks with dual-role user
//! embeddings for predicting the next activated user of an information
//! cascade.
//!
//! Layout:
//! - [`numeric`]: tensors, reverse-mode tape, Adam.
//! - [`data`]: cascade and social-graph ingestion, splits, time bins.
//! - [`graphembed`]: Node2Vec walks and skip-gram topological embeddings.
//! - [`model`]: the network, its loss and checkpoints.
//! - [`trainer`]: training loop, ranking metrics, diffusion-tree
//!   inference and a synthetic cascade generator.

pub mod data;
pub mod graphembed;
pub mod model;
pub mod numeric;
pub mod trainer;
