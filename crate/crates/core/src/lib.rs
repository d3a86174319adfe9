//! One-class classification toolkit: presence-background learning (PBL),
//! positive-unlabeled learning (PUL), one-class and biased SVMs, an
//! approximate maximum-entropy model, binary baselines, accuracy assessment
//! and a seeded multi-trial benchmark harness.

pub mod data;
pub mod error;
pub mod harness;
pub mod ingest;
pub mod maxent;
pub mod metrics;
pub mod optim;
pub mod pu;
pub mod rng;
pub mod soft;
pub mod svm;
pub mod synth;
pub mod tuning;

pub use error::{Error, Result};
