//! Operator surface for the LLCM laboratory: run configuration, pipeline
//! orchestration (teacher → distill → sample → eval), checkpoint/CSV/PGM
//! persistence, and run manifests. The numerics live in `llcm-core`; this
//! crate owns everything that touches a filesystem or a terminal.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod csvio;
pub mod error;
pub mod manifest;
pub mod pgm;
pub mod pipeline;
