use super::{gaussian_log_pdf, log_sum_exp, GaussianHmm, HmmError, ObservationSequence, Posteriors, ViterbiResult};

/// Per-model quantities reused across every sequence of an E-step or decode.
pub(crate) struct LogParams<'a> {
    pub hmm: &'a GaussianHmm,
    pub k: usize,
    pub log_initial: Vec<f64>,
    /// Row-major `K x K` probabilities.
    pub trans: Vec<f64>,
    pub log_trans: Vec<f64>,
    /// `ln(end_prob)` for absorbing models, `0` for ergodic ones.
    pub log_end: Vec<f64>,
}

impl<'a> LogParams<'a> {
    pub fn new(hmm: &'a GaussianHmm) -> Self {
        let k = hmm.n_states();
        let trans: Vec<f64> = hmm.transitions.iter().flatten().copied().collect();
        let log_end = if hmm.is_absorbing() {
            hmm.end_probs.iter().map(|p| p.ln()).collect()
        } else {
            vec![0.0; k]
        };
        Self {
            hmm,
            k,
            log_initial: hmm.initial.iter().map(|p| p.ln()).collect(),
            log_trans: trans.iter().map(|p| p.ln()).collect(),
            trans,
            log_end,
        }
    }

    pub fn log_emissions(&self, seq: &ObservationSequence) -> Vec<f64> {
        let hmm = self.hmm;
        let mut out = Vec::with_capacity(seq.len() * self.k);
        for x in seq.rows() {
            for i in 0..self.k {
                out.push(gaussian_log_pdf(&hmm.emission_means[i], &hmm.emission_vars[i], x));
            }
        }
        out
    }
}

/// Forward and backward log-messages for one sequence.
pub(crate) struct Lattice {
    pub k: usize,
    pub len: usize,
    pub log_emit: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub log_likelihood: f64,
}

fn max_of(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

impl Lattice {
    pub fn compute(params: &LogParams<'_>, seq: &ObservationSequence) -> Self {
        let k = params.k;
        let len = seq.len();
        let log_emit = params.log_emissions(seq);
        let mut alpha = vec![f64::NEG_INFINITY; len * k];
        let mut beta = vec![f64::NEG_INFINITY; len * k];
        let mut scratch = vec![0.0; k];

        for i in 0..k {
            alpha[i] = params.log_initial[i] + log_emit[i];
        }
        for t in 1..len {
            let (prev, cur) = alpha.split_at_mut(t * k);
            let prev = &prev[(t - 1) * k..];
            let m = max_of(prev);
            if m == f64::NEG_INFINITY {
                break;
            }
            for (s, &a) in scratch.iter_mut().zip(prev) {
                *s = (a - m).exp();
            }
            for j in 0..k {
                let mut acc = 0.0;
                for i in 0..k {
                    acc += scratch[i] * params.trans[i * k + j];
                }
                cur[j] = m + acc.ln() + log_emit[t * k + j];
            }
        }

        let last = (len - 1) * k;
        let terminal: Vec<f64> = (0..k).map(|i| alpha[last + i] + params.log_end[i]).collect();
        let log_likelihood = log_sum_exp(&terminal);

        beta[last..].copy_from_slice(&params.log_end);
        for t in (0..len - 1).rev() {
            let (head, tail) = beta.split_at_mut((t + 1) * k);
            let next = &tail[..k];
            let cur = &mut head[t * k..];
            for j in 0..k {
                scratch[j] = log_emit[(t + 1) * k + j] + next[j];
            }
            let m = max_of(&scratch);
            if m == f64::NEG_INFINITY {
                continue;
            }
            for s in scratch.iter_mut() {
                *s = (*s - m).exp();
            }
            for (i, c) in cur.iter_mut().enumerate() {
                let row = &params.trans[i * k..(i + 1) * k];
                let acc: f64 = row.iter().zip(&scratch).map(|(a, s)| a * s).sum();
                *c = m + acc.ln();
            }
        }

        Self {
            k,
            len,
            log_emit,
            alpha,
            beta,
            log_likelihood,
        }
    }

    /// Normalized state posterior at step `t`, written into `out`.
    pub fn gamma_into(&self, t: usize, out: &mut [f64]) {
        let k = self.k;
        let row: Vec<f64> = (0..k)
            .map(|i| self.alpha[t * k + i] + self.beta[t * k + i])
            .collect();
        let m = max_of(&row);
        let mut sum = 0.0;
        for (o, v) in out.iter_mut().zip(&row) {
            *o = (v - m).exp();
            sum += *o;
        }
        for o in out.iter_mut() {
            *o /= sum;
        }
    }

    /// Normalized pairwise posterior between steps `t` and `t + 1`, row-major.
    pub fn xi_into(&self, params: &LogParams<'_>, t: usize, out: &mut [f64]) {
        let k = self.k;
        let a = &self.alpha[t * k..(t + 1) * k];
        let w: Vec<f64> = (0..k)
            .map(|j| self.log_emit[(t + 1) * k + j] + self.beta[(t + 1) * k + j])
            .collect();
        let ma = max_of(a);
        let mw = max_of(&w);
        let pa: Vec<f64> = a.iter().map(|v| (v - ma).exp()).collect();
        let pw: Vec<f64> = w.iter().map(|v| (v - mw).exp()).collect();
        let mut sum = 0.0;
        for i in 0..k {
            for j in 0..k {
                let v = pa[i] * params.trans[i * k + j] * pw[j];
                out[i * k + j] = v;
                sum += v;
            }
        }
        if !(sum > 0.0 && sum.is_finite()) {
            // Every product underflowed; fall back to the exact log-space form.
            let logs: Vec<f64> = (0..k * k)
                .map(|ij| a[ij / k] + params.log_trans[ij] + w[ij % k])
                .collect();
            let norm = log_sum_exp(&logs);
            for (o, l) in out.iter_mut().zip(&logs) {
                *o = (l - norm).exp();
            }
            return;
        }
        for o in out.iter_mut() {
            *o /= sum;
        }
    }
}

/// Exact `ln P(seq | model)`.
pub fn log_likelihood(model: &GaussianHmm, seq: &ObservationSequence) -> Result<f64, HmmError> {
    model.check_sequence(seq)?;
    let params = LogParams::new(model);
    Ok(Lattice::compute(&params, seq).log_likelihood)
}

/// Log-likelihood plus normalized state and pairwise posteriors.
pub fn forward_backward(
    model: &GaussianHmm,
    seq: &ObservationSequence,
) -> Result<Posteriors, HmmError> {
    model.check_sequence(seq)?;
    let params = LogParams::new(model);
    let lattice = Lattice::compute(&params, seq);
    if lattice.log_likelihood == f64::NEG_INFINITY {
        return Err(HmmError::ZeroLikelihood);
    }
    let k = lattice.k;
    let gamma = (0..lattice.len)
        .map(|t| {
            let mut row = vec![0.0; k];
            lattice.gamma_into(t, &mut row);
            row
        })
        .collect();
    let mut flat = vec![0.0; k * k];
    let xi = (0..lattice.len.saturating_sub(1))
        .map(|t| {
            lattice.xi_into(&params, t, &mut flat);
            flat.chunks_exact(k).map(<[f64]>::to_vec).collect()
        })
        .collect();
    Ok(Posteriors {
        log_likelihood: lattice.log_likelihood,
        gamma,
        xi,
    })
}

/// Most probable state path. Ties go to the lowest state index, both for the
/// final state and at every backtracking step.
pub fn viterbi(model: &GaussianHmm, seq: &ObservationSequence) -> Result<ViterbiResult, HmmError> {
    model.check_sequence(seq)?;
    let params = LogParams::new(model);
    let k = params.k;
    let len = seq.len();
    let log_emit = params.log_emissions(seq);

    let mut delta: Vec<f64> = (0..k).map(|i| params.log_initial[i] + log_emit[i]).collect();
    let mut next = vec![0.0; k];
    let mut back = vec![0usize; len * k];
    for t in 1..len {
        for j in 0..k {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0;
            for (i, &d) in delta.iter().enumerate() {
                let score = d + params.log_trans[i * k + j];
                if score > best {
                    best = score;
                    arg = i;
                }
            }
            next[j] = best + log_emit[t * k + j];
            back[t * k + j] = arg;
        }
        std::mem::swap(&mut delta, &mut next);
    }

    let mut best = f64::NEG_INFINITY;
    let mut state = 0;
    for (i, &d) in delta.iter().enumerate() {
        let score = d + params.log_end[i];
        if score > best {
            best = score;
            state = i;
        }
    }
    let mut path = vec![0; len];
    path[len - 1] = state;
    for t in (1..len).rev() {
        state = back[t * k + state];
        path[t - 1] = state;
    }
    Ok(ViterbiResult {
        path,
        log_prob: best,
        per_step_log_prob: best / len as f64,
    })
}
