//! Adversarial-example detection from the way inputs move between classes
//! across a network's activation spaces.
//!
//! The crate trains a small ReLU classifier ([`mlp`]), crafts FGSM, BIM and
//! C&W-L2 adversarial examples against it ([`attacks`]), and detects them
//! ([`detector`]) by labelling every layer's PCA-projected activations
//! ([`numerics`]) with a k-NN classifier ([`knn`]) and scoring the resulting
//! label sequence with a naive-Bayes switching likelihood. [`eval`] holds
//! ROC/AUC and reporting, [`pipeline`] the seeded end-to-end experiment.

pub mod attacks;
pub mod cli;
pub mod config;
pub mod data;
pub mod detector;
pub mod error;
pub mod eval;
pub mod io;
pub mod knn;
pub mod mlp;
pub mod numerics;
pub mod pipeline;
pub mod rng;

pub use error::{Error, Result};
