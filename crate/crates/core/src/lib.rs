//! Diarization-guided continuous speech separation pipeline.
//!
//! The crate decodes long multi-speaker recordings with a sliding-window
//! scheme: a global speaker-activity prior is cut into fixed-length windows
//! with compacted speaker indices (SWSP), each window is separated with
//! prior-guided time-frequency masks, the windowed masks are stitched back
//! to global speaker identities (SIS), and the separated streams can be
//! re-clustered into a refreshed prior. Evaluation metrics (DER, cpWER,
//! tcpWER, SI-SDR), the joint diarization/separation losses, and a
//! deterministic conversation simulator round out the toolkit.

pub mod cli;
pub mod config;
pub mod dcft;
pub mod error;
pub mod estim;
pub mod manifest;
pub mod metrics;
pub mod pipeline;
pub mod priors;
pub mod recluster;
pub mod signal;
pub mod sim;

pub use error::{Error, Result};
