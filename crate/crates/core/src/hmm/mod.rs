//! Hidden Markov models with diagonal Gaussian emissions.
//!
//! All recursions run in log-space. A model is either ergodic (every
//! `end_probs` entry is zero, sequences have no explicit end) or absorbing
//! (each state may exit into an implicit end state, and every row of
//! `transitions` together with its `end_probs` entry sums to one).

mod inference;
mod sample;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use inference::{forward_backward, log_likelihood, viterbi};
pub use sample::{sample, sample_with_states};
pub use train::{baum_welch, TrainConfig, TrainOutcome};

/// Lower bound applied to every emission variance.
pub const VARIANCE_FLOOR: f64 = 1e-6;

/// Tolerance used when validating that probability vectors sum to one.
pub const SIMPLEX_TOL: f64 = 1e-12;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HmmError {
    #[error("schema error: observation dimension {found} does not match model dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("input error: non-finite observation at step {step}, dimension {dim}")]
    NonFiniteObservation { step: usize, dim: usize },
    #[error("input error: observation sequence is empty")]
    EmptySequence,
    #[error("input error: ragged observation rows (row {row} has {found} values, expected {expected})")]
    RaggedRows { row: usize, expected: usize, found: usize },
    #[error("input error: no training sequences")]
    EmptyData,
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("observation sequence has zero probability under the model")]
    ZeroLikelihood,
}

/// A `T x D` matrix of finite observations, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSequence {
    values: Vec<f64>,
    dim: usize,
}

impl ObservationSequence {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, HmmError> {
        let dim = rows.first().map(Vec::len).ok_or(HmmError::EmptySequence)?;
        if dim == 0 {
            return Err(HmmError::EmptySequence);
        }
        let mut values = Vec::with_capacity(rows.len() * dim);
        for (t, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(HmmError::RaggedRows {
                    row: t,
                    expected: dim,
                    found: row.len(),
                });
            }
            values.extend_from_slice(row);
        }
        Self::from_flat(values, dim)
    }

    /// Builds a one-dimensional sequence, one step per value.
    pub fn scalar(values: Vec<f64>) -> Result<Self, HmmError> {
        Self::from_flat(values, 1)
    }

    pub fn from_flat(values: Vec<f64>, dim: usize) -> Result<Self, HmmError> {
        if dim == 0 || values.is_empty() {
            return Err(HmmError::EmptySequence);
        }
        if !values.len().is_multiple_of(dim) {
            return Err(HmmError::RaggedRows {
                row: values.len() / dim,
                expected: dim,
                found: values.len() % dim,
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(HmmError::NonFiniteObservation {
                step: i / dim,
                dim: i % dim,
            });
        }
        Ok(Self { values, dim })
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.dim..(t + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim)
    }
}

/// State and pairwise posteriors from one forward-backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Posteriors {
    pub log_likelihood: f64,
    /// `T x K`
    pub gamma: Vec<Vec<f64>>,
    /// `(T-1) x K x K`
    pub xi: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViterbiResult {
    pub path: Vec<usize>,
    /// Joint log-probability of `path` and the observations.
    pub log_prob: f64,
    /// `log_prob / T`.
    pub per_step_log_prob: f64,
}

/// Hidden Markov model with `K` states and diagonal Gaussian emissions over
/// `D`-dimensional observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianHmm {
    pub state_labels: Vec<String>,
    pub initial: Vec<f64>,
    pub transitions: Vec<Vec<f64>>,
    pub end_probs: Vec<f64>,
    pub emission_means: Vec<Vec<f64>>,
    pub emission_vars: Vec<Vec<f64>>,
}

impl GaussianHmm {
    /// Validates and wraps raw parameters.
    pub fn new(
        state_labels: Vec<String>,
        initial: Vec<f64>,
        transitions: Vec<Vec<f64>>,
        end_probs: Vec<f64>,
        emission_means: Vec<Vec<f64>>,
        emission_vars: Vec<Vec<f64>>,
    ) -> Result<Self, HmmError> {
        let hmm = Self {
            state_labels,
            initial,
            transitions,
            end_probs,
            emission_means,
            emission_vars,
        };
        hmm.validate()?;
        Ok(hmm)
    }

    /// Standard starting point for Baum-Welch: uniform initial and transition
    /// rows, unit variances and means at `0.01 * state_index` in every
    /// dimension. Absorbing models split each row uniformly over the `K`
    /// successors and the end state.
    pub fn standard_init(
        state_labels: Vec<String>,
        dim: usize,
        absorbing: bool,
    ) -> Result<Self, HmmError> {
        let k = state_labels.len();
        if k == 0 || dim == 0 {
            return Err(HmmError::InvalidModel(
                "need at least one state and one dimension".into(),
            ));
        }
        let outcomes = if absorbing { k + 1 } else { k };
        let row_p = 1.0 / outcomes as f64;
        let end = if absorbing { row_p } else { 0.0 };
        Self::new(
            state_labels,
            vec![1.0 / k as f64; k],
            vec![vec![row_p; k]; k],
            vec![end; k],
            (0..k).map(|i| vec![0.01 * i as f64; dim]).collect(),
            vec![vec![1.0; dim]; k],
        )
    }

    pub fn n_states(&self) -> usize {
        self.initial.len()
    }

    pub fn dim(&self) -> usize {
        self.emission_means.first().map_or(0, Vec::len)
    }

    /// True when any state can exit into the end state.
    pub fn is_absorbing(&self) -> bool {
        self.end_probs.iter().any(|&p| p > 0.0)
    }

    pub fn validate(&self) -> Result<(), HmmError> {
        let k = self.initial.len();
        let bad = |msg: String| Err(HmmError::InvalidModel(msg));
        if k == 0 {
            return bad("model has no states".into());
        }
        if self.state_labels.len() != k {
            return bad(format!(
                "{} state labels for {} states",
                self.state_labels.len(),
                k
            ));
        }
        let mut seen = std::collections::HashSet::new();
        for label in &self.state_labels {
            if !seen.insert(label.as_str()) {
                return bad(format!("duplicate state label {label:?}"));
            }
        }
        if self.transitions.len() != k
            || self.end_probs.len() != k
            || self.emission_means.len() != k
            || self.emission_vars.len() != k
        {
            return bad("parameter arrays disagree on the number of states".into());
        }
        let d = self.emission_means[0].len();
        if d == 0 {
            return bad("emission dimension is zero".into());
        }
        let is_prob = |p: f64| p.is_finite() && (0.0..=1.0).contains(&p);
        if !self.initial.iter().all(|&p| is_prob(p)) {
            return bad("initial contains a value outside [0, 1]".into());
        }
        let init_sum: f64 = self.initial.iter().sum();
        if (init_sum - 1.0).abs() > SIMPLEX_TOL {
            return bad(format!("initial sums to {init_sum}"));
        }
        for i in 0..k {
            let row = &self.transitions[i];
            if row.len() != k {
                return bad(format!("transition row {i} has {} entries", row.len()));
            }
            if !row.iter().all(|&p| is_prob(p)) || !is_prob(self.end_probs[i]) {
                return bad(format!("transition row {i} contains a value outside [0, 1]"));
            }
            let sum: f64 = row.iter().sum::<f64>() + self.end_probs[i];
            if (sum - 1.0).abs() > SIMPLEX_TOL {
                return bad(format!("transition row {i} plus end probability sums to {sum}"));
            }
            if self.emission_means[i].len() != d || self.emission_vars[i].len() != d {
                return bad(format!("emission parameters of state {i} have wrong dimension"));
            }
            if !self.emission_means[i].iter().all(|m| m.is_finite()) {
                return bad(format!("non-finite emission mean in state {i}"));
            }
            if !self.emission_vars[i]
                .iter()
                .all(|&v| v.is_finite() && v >= VARIANCE_FLOOR)
            {
                return bad(format!("emission variance of state {i} below floor"));
            }
        }
        Ok(())
    }

    /// Log-density of `x` under the emission distribution of `state`.
    pub fn log_emission(&self, state: usize, x: &[f64]) -> f64 {
        gaussian_log_pdf(&self.emission_means[state], &self.emission_vars[state], x)
    }

    pub(crate) fn check_sequence(&self, seq: &ObservationSequence) -> Result<(), HmmError> {
        if seq.dim() != self.dim() {
            return Err(HmmError::DimensionMismatch {
                expected: self.dim(),
                found: seq.dim(),
            });
        }
        Ok(())
    }
}

pub(crate) fn gaussian_log_pdf(means: &[f64], vars: &[f64], x: &[f64]) -> f64 {
    let mut acc = 0.0;
    for ((&m, &v), &xi) in means.iter().zip(vars).zip(x) {
        let diff = xi - m;
        acc -= 0.5 * (LN_2PI + v.ln() + diff * diff / v);
    }
    acc
}

/// `ln(sum(exp(values)))`, returning `-inf` for an empty or all `-inf` slice.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}
