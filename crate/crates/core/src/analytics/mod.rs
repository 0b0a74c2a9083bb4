//! Offline analysis: online prediction error, clustering and group statistics.

pub mod cluster;
pub mod eval;
pub mod ingest;
pub mod report;
pub mod stats;
