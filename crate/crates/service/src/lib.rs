//! HTTP service and command line for the citeqa pipeline.

pub mod cli;
pub mod config;
pub mod engine;
pub mod http;
pub mod remote;
