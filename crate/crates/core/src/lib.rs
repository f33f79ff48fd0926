//! Simultaneous translation toolkit: prefix-level preference data, latency
//! and preference metrics, latency-aware preference losses, a
//! confidence-driven read/write policy, and a small trainable toy model.

#[cfg(feature = "annotate")]
pub mod annotate;
pub mod config;
pub mod corpus;
pub mod error;
pub mod gradcheck;
pub mod latency;
pub mod losses;
pub mod metrics;
pub mod policy;
pub mod prefix;
pub mod prompt;
pub mod report;
pub mod toy;

pub use error::{Error, Result};
