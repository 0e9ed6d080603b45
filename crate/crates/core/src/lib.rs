//! Frobenius-regularized squared-loss training of depth-2 nets.
//!
//! The crate covers the analytic side (activations and their bound
//! constants, loss/gradient/Laplacian, the critical regularizer λ_c and the
//! smoothness bound), Villani-condition diagnostics, discrete SGD and its
//! SDE limit, a finite-difference Fokker–Planck solver for toy parameter
//! spaces, synthetic data generators, and the sweep/ablation harness.

pub mod activation;
pub mod config;
pub mod data;
pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod fpe;
pub mod harness;
pub mod model;

pub use activation::{Activation, ActivationKind};
pub use dynamics::{InitSpec, SdeConfig, SgdConfig, Trajectory};
pub use error::{Error, Result};
pub use model::{lambda_c, Dataset, Evaluation, LossSpec, Net, OuterWeights};
