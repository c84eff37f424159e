//! Sparse + low-rank separation of a streaming data matrix by recursive
//! projected compressive sensing, with optional cluster-PCA deletion of
//! stale subspace directions.

pub mod linalg;
pub mod sparse;
pub mod datagen;
pub mod theory;
pub mod tracker;
pub mod harness;
