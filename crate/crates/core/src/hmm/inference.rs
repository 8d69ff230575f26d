//! Scaled forward and forward-backward recursions.
//!
//! Per-step normalizers c_t keep the recursion in f64 range for arbitrarily
//! long sequences; log-likelihood is the sum of ln c_t. With this scaling the
//! smoothed posteriors come out already normalized: gamma_t = alpha_hat_t *
//! beta_hat_t sums to one at every t.

use ndarray::Array2;

use super::{HmmError, HmmModel};

/// Forward pass state shared by likelihood, smoothing, and training.
pub(crate) struct Scaled {
    /// Row-major T x n, each row normalized.
    pub alpha: Vec<f64>,
    /// Per-step normalizers; ln-sum is the log-likelihood.
    pub c: Vec<f64>,
    pub log_likelihood: f64,
}

pub(crate) fn check_observations(model: &HmmModel, obs: &[usize]) -> Result<(), HmmError> {
    if obs.is_empty() {
        return Err(HmmError::EmptyObservation);
    }
    let m = model.n_symbols();
    for (position, &symbol) in obs.iter().enumerate() {
        if symbol >= m {
            return Err(HmmError::SymbolOutOfRange {
                position,
                symbol,
                n_symbols: m,
            });
        }
    }
    Ok(())
}

/// Run the scaled forward recursion. `Err(t)` reports the first step whose
/// total probability is zero, meaning the observation is impossible under
/// the model.
pub(crate) fn scaled_forward(model: &HmmModel, obs: &[usize]) -> Result<Scaled, usize> {
    let n = model.n_states();
    let m = model.n_symbols();
    let a = model.a().as_slice().expect("a is standard layout");
    let b = model.b().as_slice().expect("b is standard layout");
    let pi = model.pi().as_slice().expect("pi is standard layout");
    let tlen = obs.len();

    let mut alpha = vec![0.0; tlen * n];
    let mut c = vec![0.0; tlen];

    let mut sum = 0.0;
    for i in 0..n {
        let v = pi[i] * b[i * m + obs[0]];
        alpha[i] = v;
        sum += v;
    }
    if sum <= 0.0 {
        return Err(0);
    }
    let inv = 1.0 / sum;
    for i in 0..n {
        alpha[i] *= inv;
    }
    c[0] = sum;

    for t in 1..tlen {
        let ot = obs[t];
        let (done, rest) = alpha.split_at_mut(t * n);
        let prev = &done[(t - 1) * n..];
        let cur = &mut rest[..n];
        let mut sum = 0.0;
        for (j, slot) in cur.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (i, &p) in prev.iter().enumerate() {
                acc += p * a[i * n + j];
            }
            let v = acc * b[j * m + ot];
            *slot = v;
            sum += v;
        }
        if sum <= 0.0 {
            return Err(t);
        }
        let inv = 1.0 / sum;
        for v in cur.iter_mut() {
            *v *= inv;
        }
        c[t] = sum;
    }

    let log_likelihood = c.iter().map(|v| v.ln()).sum();
    Ok(Scaled {
        alpha,
        c,
        log_likelihood,
    })
}

/// Scaled backward pass matching [`scaled_forward`]'s normalizers.
pub(crate) fn scaled_backward(model: &HmmModel, obs: &[usize], c: &[f64]) -> Vec<f64> {
    let n = model.n_states();
    let m = model.n_symbols();
    let a = model.a().as_slice().expect("a is standard layout");
    let b = model.b().as_slice().expect("b is standard layout");
    let tlen = obs.len();

    let mut beta = vec![0.0; tlen * n];
    for v in &mut beta[(tlen - 1) * n..] {
        *v = 1.0;
    }
    for t in (0..tlen - 1).rev() {
        let ot1 = obs[t + 1];
        let inv_c = 1.0 / c[t + 1];
        let (head, tail) = beta.split_at_mut((t + 1) * n);
        let next = &tail[..n];
        let cur = &mut head[t * n..];
        for (i, slot) in cur.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (j, &bn) in next.iter().enumerate() {
                acc += a[i * n + j] * b[j * m + ot1] * bn;
            }
            *slot = acc * inv_c;
        }
    }
    beta
}

/// Smoothed posteriors for one sequence.
#[derive(Debug, Clone)]
pub struct ForwardBackward {
    pub log_likelihood: f64,
    /// T x n; row t is the posterior state distribution at step t.
    pub gamma: Array2<f64>,
}

/// Log-likelihood of the observations under the model. An impossible
/// sequence yields exactly `f64::NEG_INFINITY` rather than an error.
pub fn forward_log_likelihood(model: &HmmModel, obs: &[usize]) -> Result<f64, HmmError> {
    check_observations(model, obs)?;
    match scaled_forward(model, obs) {
        Ok(s) => Ok(s.log_likelihood),
        Err(_) => Ok(f64::NEG_INFINITY),
    }
}

/// Full smoothing pass. Impossible observations are an error here because no
/// posterior exists for them.
pub fn forward_backward(model: &HmmModel, obs: &[usize]) -> Result<ForwardBackward, HmmError> {
    check_observations(model, obs)?;
    let fwd = scaled_forward(model, obs).map_err(|slot| HmmError::ImpossibleObservation { slot })?;
    let beta = scaled_backward(model, obs, &fwd.c);
    let n = model.n_states();
    let gamma_flat: Vec<f64> = fwd
        .alpha
        .iter()
        .zip(&beta)
        .map(|(&av, &bv)| av * bv)
        .collect();
    let gamma = Array2::from_shape_vec((obs.len(), n), gamma_flat).expect("T x n posterior");
    Ok(ForwardBackward {
        log_likelihood: fwd.log_likelihood,
        gamma,
    })
}

/// Expected slot counts per state: column sums of gamma. Sums to the
/// sequence length.
pub fn posterior_occupancy(model: &HmmModel, obs: &[usize]) -> Result<Vec<f64>, HmmError> {
    let fb = forward_backward(model, obs)?;
    Ok(fb
        .gamma
        .columns()
        .into_iter()
        .map(|col| col.sum())
        .collect())
}
