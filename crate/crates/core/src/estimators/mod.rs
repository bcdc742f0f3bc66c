//! Estimators for the load of sleeping small cells.

pub mod distance;
pub mod kmeans;
pub mod lstm;
pub mod mlc;
