use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{GaussianHmm, HmmError, ObservationSequence};

fn draw(weights: impl Iterator<Item = f64>, u: f64) -> Option<usize> {
    let mut acc = 0.0;
    let mut last = None;
    for (i, w) in weights.enumerate() {
        if w > 0.0 {
            last = Some(i);
        }
        acc += w;
        if u < acc {
            return Some(i);
        }
    }
    // Rounding left `u` past the cumulative total.
    last
}

/// Draws a state path and emissions. Absorbing models may stop before
/// `max_len` when the end state is drawn; ergodic models always emit exactly
/// `max_len` rows.
pub fn sample(model: &GaussianHmm, max_len: usize, rng_seed: u64) -> Result<ObservationSequence, HmmError> {
    Ok(sample_with_states(model, max_len, rng_seed)?.0)
}

/// Like [`sample`], also returning the hidden state path.
pub fn sample_with_states(
    model: &GaussianHmm,
    max_len: usize,
    rng_seed: u64,
) -> Result<(ObservationSequence, Vec<usize>), HmmError> {
    if max_len == 0 {
        return Err(HmmError::InvalidConfig("max_len must be at least 1".into()));
    }
    model.validate()?;
    let k = model.n_states();
    let dim = model.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut values = Vec::with_capacity(max_len * dim);
    let mut states = Vec::with_capacity(max_len);

    let mut state = draw(model.initial.iter().copied(), rng.random())
        .ok_or_else(|| HmmError::InvalidModel("initial distribution has no mass".into()))?;
    loop {
        states.push(state);
        for d in 0..dim {
            let z: f64 = StandardNormal.sample(&mut rng);
            values.push(model.emission_means[state][d] + z * model.emission_vars[state][d].sqrt());
        }
        if states.len() == max_len {
            break;
        }
        let outcomes = model.transitions[state]
            .iter()
            .copied()
            .chain(std::iter::once(model.end_probs[state]));
        match draw(outcomes, rng.random()) {
            Some(next) if next < k => state = next,
            _ => break,
        }
    }
    Ok((ObservationSequence::from_flat(values, dim)?, states))
}
