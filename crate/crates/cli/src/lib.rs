//! Experiment runner for the boson-sampling kernel classifier.

pub mod cache;
pub mod commands;
pub mod config;
pub mod error;
pub mod fetch;
pub mod output;
pub mod pipeline;
