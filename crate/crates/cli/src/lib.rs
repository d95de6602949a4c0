//! Batch command line and local HTTP service over `osteo-core`.
//!
//! The binary is a thin shell around [`cli::run`]; the service router is
//! exposed so it can be driven in-process by tests.

pub mod cli;
pub mod service;
pub mod summary;
