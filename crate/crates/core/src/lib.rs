//! Geometric connectome classification with an edge-weighted graph attention
//! network.
//!
//! The crate is organised bottom-up:
//!
//! * [`spd`]: SPD validation and repair, matrix log/exp, log-Euclidean tangent
//!   vectors and the LERM/AIRM/sKLDM distances.
//! * [`graph`]: connectome graphs and degree/closeness/eigenvector centrality.
//! * [`selection`]: pairwise tangent-difference regression, stratified top-k
//!   sample selection and random oversampling.
//! * [`autodiff`]: a small reverse-mode tape over dense matrices plus Adam and
//!   the checkpoint format.
//! * [`gnn`]: edge-weighted GATv2 layers, readout, weighted NLL and training.
//! * [`explain`]: attention explanation masks, top-L thresholding, network
//!   summaries and viewer file export.
//! * [`pipeline`]: dataset I/O, preprocessing, cross-validation, metrics,
//!   synthetic cohorts, configuration and the end-to-end runner behind the CLI.

pub use nalgebra;

pub mod autodiff;
pub mod explain;
pub mod gnn;
pub mod graph;
pub mod spd;
pub mod pipeline;
pub mod selection;
