//! Measuring and repairing what fine-tuning a classifier on a subset of its
//! classes does to the classes that were left out.
//!
//! The label space is split into fine-tuning classes `S` and absent classes
//! `U`. The crate provides the accuracy family used to tell apart feature
//! damage from classifier bias ([`metrics`]), post-hoc logit calibration
//! ([`calibration`]), nearest class mean evaluation ([`ncm`]), weight and logit
//! diagnostics ([`analysis`]), a small reference trainer ([`trainer`]) and the
//! text formats the CLI speaks ([`io`]).

pub mod analysis;
pub mod calibration;
pub mod data;
pub mod error;
pub mod io;
pub mod metrics;
pub mod ncm;
pub mod rng;
pub mod trainer;

pub use calibration::{apply_gamma, GammaEstimate, GammaMethod};
pub use data::{Group, LabelPartition, LabeledFeatures, LabeledLogits, LinearHead};
pub use error::{Error, Result};
pub use metrics::{AccReport, SeenUnseenCurve};
pub use trainer::{Activation, MlpModel, TrainConfig, TrainMode};
