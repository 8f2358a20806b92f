//! Multimodal churn-risk scoring.
//!
//! Three unimodal predictors feed a rule-based decision layer:
//!
//! * [`fl`]: semi-supervised k-NN co-training regressor for a financial-literacy score in `[0, 1]`,
//!   with rare-target oversampling of the labeled set.
//! * [`audio`] + [`ser`]: harmonic/percussive log-Mel feature maps and a binary emotion classifier.
//! * [`churn`]: recursive feature elimination, SMOTE and an MLP producing churn propensity.
//!
//! [`fusion`] maps the three outputs onto nominal indicators, sums them into a
//! decision weight and assigns low/mid/high risk. [`pipeline`] runs the
//! none/late/hybrid strategies end to end on [`synth`] cohorts and
//! [`metrics`] scores them.

pub mod audio;
pub mod churn;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod fl;
pub mod fusion;
pub mod knn;
pub mod metrics;
pub mod mlp;
pub mod norm;
pub mod pipeline;
pub mod ser;
pub mod synth;

pub use error::{Error, Result};
