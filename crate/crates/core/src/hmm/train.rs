use serde::{Deserialize, Serialize};

use super::inference::{Lattice, LogParams};
use super::{GaussianHmm, HmmError, ObservationSequence, VARIANCE_FLOOR};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Stop once the absolute change in total log-likelihood drops below this.
    pub tol: f64,
    /// Maximum number of M-steps.
    pub max_iter: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: GaussianHmm,
    /// Total log-likelihood of the data under the model after each M-step;
    /// entry 0 is the initial model.
    pub trace: Vec<f64>,
    pub converged: bool,
    /// Number of M-steps applied.
    pub iterations: usize,
}

/// Sufficient statistics gathered by one E-step.
struct Stats {
    k: usize,
    dim: usize,
    log_likelihood: f64,
    initial: Vec<f64>,
    trans: Vec<f64>,
    end: Vec<f64>,
    weight: Vec<f64>,
    /// First and second moments about the current means, `K x D`.
    shifted_sum: Vec<f64>,
    shifted_sq: Vec<f64>,
}

impl Stats {
    fn new(k: usize, dim: usize) -> Self {
        Self {
            k,
            dim,
            log_likelihood: 0.0,
            initial: vec![0.0; k],
            trans: vec![0.0; k * k],
            end: vec![0.0; k],
            weight: vec![0.0; k],
            shifted_sum: vec![0.0; k * dim],
            shifted_sq: vec![0.0; k * dim],
        }
    }

    fn accumulate(
        &mut self,
        params: &LogParams<'_>,
        seq: &ObservationSequence,
        absorbing: bool,
    ) -> Result<(), HmmError> {
        let (k, dim) = (self.k, self.dim);
        let lattice = Lattice::compute(params, seq);
        if lattice.log_likelihood == f64::NEG_INFINITY {
            return Err(HmmError::ZeroLikelihood);
        }
        self.log_likelihood += lattice.log_likelihood;

        let means = &params.hmm.emission_means;
        let mut gamma = vec![0.0; k];
        let mut xi = vec![0.0; k * k];
        let len = seq.len();
        for t in 0..len {
            lattice.gamma_into(t, &mut gamma);
            if t == 0 {
                for (acc, g) in self.initial.iter_mut().zip(&gamma) {
                    *acc += g;
                }
            }
            if absorbing && t == len - 1 {
                for (acc, g) in self.end.iter_mut().zip(&gamma) {
                    *acc += g;
                }
            }
            let x = seq.row(t);
            for i in 0..k {
                let g = gamma[i];
                self.weight[i] += g;
                for d in 0..dim {
                    let diff = x[d] - means[i][d];
                    self.shifted_sum[i * dim + d] += g * diff;
                    self.shifted_sq[i * dim + d] += g * diff * diff;
                }
            }
            if t + 1 < len {
                lattice.xi_into(params, t, &mut xi);
                for (acc, v) in self.trans.iter_mut().zip(&xi) {
                    *acc += v;
                }
            }
        }
        Ok(())
    }

    fn maximize(&self, current: &GaussianHmm, absorbing: bool) -> GaussianHmm {
        let (k, dim) = (self.k, self.dim);
        let mut next = current.clone();

        let init_total: f64 = self.initial.iter().sum();
        if init_total > 0.0 {
            next.initial = self.initial.iter().map(|v| v / init_total).collect();
        }

        for i in 0..k {
            let row = &self.trans[i * k..(i + 1) * k];
            let end = if absorbing { self.end[i] } else { 0.0 };
            let total: f64 = row.iter().sum::<f64>() + end;
            // States never left keep their previous row.
            if total > 0.0 {
                next.transitions[i] = row.iter().map(|v| v / total).collect();
                next.end_probs[i] = end / total;
            }
        }

        for i in 0..k {
            let w = self.weight[i];
            if w <= f64::MIN_POSITIVE {
                continue;
            }
            for d in 0..dim {
                let shift = self.shifted_sum[i * dim + d] / w;
                let var = self.shifted_sq[i * dim + d] / w - shift * shift;
                next.emission_means[i][d] = current.emission_means[i][d] + shift;
                next.emission_vars[i][d] = var.max(VARIANCE_FLOOR);
            }
        }
        next
    }
}

fn e_step(model: &GaussianHmm, data: &[ObservationSequence]) -> Result<Stats, HmmError> {
    let params = LogParams::new(model);
    let absorbing = model.is_absorbing();
    let mut stats = Stats::new(model.n_states(), model.dim());
    for seq in data {
        stats.accumulate(&params, seq, absorbing)?;
    }
    Ok(stats)
}

/// Maximum-likelihood refinement of `init` by expectation-maximization.
///
/// Sequences of length one contribute to the initial distribution, the
/// emissions and (for absorbing models) the end probabilities, but carry no
/// transition evidence.
pub fn baum_welch(
    init: &GaussianHmm,
    data: &[ObservationSequence],
    config: &TrainConfig,
) -> Result<TrainOutcome, HmmError> {
    if config.tol.is_nan() || config.tol <= 0.0 {
        return Err(HmmError::InvalidConfig(format!("tol must be positive, got {}", config.tol)));
    }
    if config.max_iter == 0 {
        return Err(HmmError::InvalidConfig("max_iter must be at least 1".into()));
    }
    if data.is_empty() {
        return Err(HmmError::EmptyData);
    }
    init.validate()?;
    for seq in data {
        init.check_sequence(seq)?;
    }
    if init.n_states() > 1 && data.iter().all(|s| s.len() < 2) {
        return Err(HmmError::DegenerateData(
            "every sequence has length 1, so transitions cannot be estimated".into(),
        ));
    }

    let absorbing = init.is_absorbing();
    let mut model = init.clone();
    let mut trace: Vec<f64> = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    loop {
        let stats = e_step(&model, data)?;
        let ll = stats.log_likelihood;
        if let Some(&prev) = trace.last() {
            if (ll - prev).abs() < config.tol {
                trace.push(ll);
                converged = true;
                break;
            }
        }
        trace.push(ll);
        if iterations == config.max_iter {
            break;
        }
        model = stats.maximize(&model, absorbing);
        iterations += 1;
    }
    Ok(TrainOutcome {
        model,
        trace,
        converged,
        iterations,
    })
}
