//! Speech enhancement by parametric resynthesis.
//!
//! A network predicts clean vocoder parameters from noisy log-mel features
//! and a source-filter vocoder resynthesizes the speech from them. Mask
//! baselines, the evaluation metrics and a small corpus toolkit live
//! alongside.

pub mod binio;
pub mod cli;
pub mod corpus;
pub mod dsp;
pub mod enhance;
pub mod features;
pub mod metrics;
pub mod nnet;
pub mod signals;
pub mod vocoder;
