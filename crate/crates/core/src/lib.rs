//! Boson-sampling quantum kernels for support vector classification.
//!
//! Classical feature vectors are compressed by a single sigmoid layer into
//! the phase settings of a linear-optical mesh of tunable basic units (TBUs).
//! The kernel between two points is the coincidence probability of the
//! composite circuit `U†(x_i) U(x_j)` for single photons injected into the
//! first `n` modes, evaluated exactly through matrix permanents of the
//! `m × m` mode unitary. The kernel feeds a dual soft-margin SVM.
//!
//! Module map:
//!
//! - [`fock`]: occupation patterns and Hilbert-space counting
//! - [`mesh`]: TBU layout, per-unit matrices, mode-unitary assembly
//! - [`permanent`]: Ryser/naive permanents and Fock transition probabilities
//! - [`qkernel`]: the fidelity kernel, its gradients, Gram matrices, shot noise
//! - [`encoder`]: the neural compressor and its pairwise kernel-target training
//! - [`svm`]: SMO dual solver, one-vs-rest, readout-subset prediction
//! - [`baselines`]: linear/sigmoid kernels and the classical network
//! - [`metrics`]: accuracy, kernel histograms, JSD, Chernoff information
//! - [`data`]: dataset loaders, normalization, stratified splitting

pub mod baselines;
pub mod data;
pub mod encoder;
mod error;
pub mod fock;
pub mod mesh;
pub mod metrics;
pub mod optim;
pub mod permanent;
pub mod qkernel;
pub mod svm;

pub use error::{Error, Result};
pub use num_complex::Complex64;
