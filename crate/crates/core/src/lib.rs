//! Uncertainty transfer function model (UTFM) for airline disruption
//! management.
//!
//! The crate learns a fixed 12-node graph of hidden Markov models from
//! flight-leg records and decodes disrupted flights into a stochastic matrix
//! describing how uncertainty moves across flight phases (turnaround,
//! taxi-out, enroute, taxi-in) and schedule-evolution rows (schedule,
//! decision, outcome).
//!
//! * [`hmm`]: Gaussian-emission HMM engine (forward-backward, Baum-Welch,
//!   Viterbi, sampling).
//! * [`features`]: geographic, periodic and categorical encodings plus
//!   standardization.
//! * [`dataset`]: CSV ingestion, validation, segmentation and cross-validation.
//! * [`utfm`]: topology, learning, decoding, reports and model files.
//! * [`synthgen`]: seeded synthetic flight-leg generator.

pub mod dataset;
pub mod features;
pub mod hmm;
pub mod json;
pub mod synthgen;
pub mod utfm;
