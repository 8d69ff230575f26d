//! Baum-Welch re-estimation with seeded random restarts.

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::inference::{check_observations, scaled_backward, scaled_forward};
use super::{jitter_factor, HmmError, HmmModel};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub max_iters: u32,
    /// Stop once an iteration improves log-likelihood by less than this.
    pub tol: f64,
    /// Independent EM runs; the best final log-likelihood wins.
    pub restarts: u32,
    /// Keep emission rows fixed at their initial values. The pair pipeline
    /// relies on this: designated emissions are what anchor state identity.
    pub freeze_emissions: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_iters: 100,
            tol: 1e-4,
            restarts: 3,
            freeze_emissions: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub model: HmmModel,
    /// Log-likelihood of the returned model on the training sequence.
    pub log_likelihood: f64,
    /// Re-estimation steps applied in the winning restart.
    pub iterations: u32,
    /// Expected slot counts per state under the returned model.
    pub occupancy: Vec<f64>,
    /// Log-likelihood of each successive parameter iterate in the winning
    /// restart, starting with the initial model. Non-decreasing.
    pub ll_trace: Vec<f64>,
    /// Which restart produced the returned model.
    pub restart_index: u32,
}

/// E-step sufficient statistics for one parameter iterate.
struct EStats {
    ll: f64,
    /// gamma_0: re-estimated initial distribution.
    pi_new: Vec<f64>,
    /// Expected transition counts, n x n row-major. Row sums equal the
    /// expected visits over t < T-1, so rows normalize in place.
    a_num: Vec<f64>,
    /// Expected emission counts, n x m row-major.
    b_num: Vec<f64>,
    /// Expected visits per state over all t.
    b_den: Vec<f64>,
}

fn estep(model: &HmmModel, obs: &[usize]) -> Result<EStats, usize> {
    let n = model.n_states();
    let m = model.n_symbols();
    let a = model.a().as_slice().expect("a is standard layout");
    let b = model.b().as_slice().expect("b is standard layout");
    let tlen = obs.len();

    let fwd = scaled_forward(model, obs)?;
    let beta = scaled_backward(model, obs, &fwd.c);
    let alpha = &fwd.alpha;

    let mut pi_new = vec![0.0; n];
    let mut a_num = vec![0.0; n * n];
    let mut b_num = vec![0.0; n * m];
    let mut b_den = vec![0.0; n];

    for i in 0..n {
        pi_new[i] = alpha[i] * beta[i];
    }
    for t in 0..tlen {
        let row = t * n;
        let ot = obs[t];
        for i in 0..n {
            let g = alpha[row + i] * beta[row + i];
            b_den[i] += g;
            b_num[i * m + ot] += g;
        }
        if t + 1 < tlen {
            let ot1 = obs[t + 1];
            let inv_c = 1.0 / fwd.c[t + 1];
            for i in 0..n {
                let af = alpha[row + i] * inv_c;
                for j in 0..n {
                    a_num[i * n + j] += af * a[i * n + j] * b[j * m + ot1] * beta[row + n + j];
                }
            }
        }
    }

    Ok(EStats {
        ll: fwd.log_likelihood,
        pi_new,
        a_num,
        b_num,
        b_den,
    })
}

/// Occupancy is the b-side denominator: expected visits per state.
fn occupancy_of(stats: &EStats) -> Vec<f64> {
    stats.b_den.clone()
}

fn mstep(model: &HmmModel, stats: &EStats, freeze_emissions: bool) -> HmmModel {
    let n = model.n_states();
    let m = model.n_symbols();

    let pi_sum: f64 = stats.pi_new.iter().sum();
    let pi = Array1::from_vec(stats.pi_new.iter().map(|v| v / pi_sum).collect());

    let mut a = Array2::zeros((n, n));
    for i in 0..n {
        let sum: f64 = stats.a_num[i * n..(i + 1) * n].iter().sum();
        if sum > 1e-300 {
            for j in 0..n {
                a[[i, j]] = stats.a_num[i * n + j] / sum;
            }
        } else {
            // A state EM never expects to visit contributes nothing to the
            // likelihood; keep its old row rather than dividing by zero.
            for j in 0..n {
                a[[i, j]] = model.a()[[i, j]];
            }
        }
    }

    let b = if freeze_emissions {
        model.b().clone()
    } else {
        let mut b = Array2::zeros((n, m));
        for i in 0..n {
            let sum: f64 = stats.b_num[i * m..(i + 1) * m].iter().sum();
            if sum > 1e-300 {
                for k in 0..m {
                    b[[i, k]] = stats.b_num[i * m + k] / sum;
                }
            } else {
                for k in 0..m {
                    b[[i, k]] = model.b()[[i, k]];
                }
            }
        }
        b
    };

    HmmModel::new(pi, a, b, model.state_labels().to_vec()).expect("re-estimated model is stochastic")
}

/// Re-jitter a model's transition rows for a restart: multiply every entry
/// by a fresh factor in [0.85, 1.15) and renormalize. Initial distribution
/// and emissions are untouched, so the restart stays in the same family.
fn rejitter(model: &HmmModel, seed: u64) -> HmmModel {
    let n = model.n_states();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = Array2::zeros((n, n));
    for i in 0..n {
        let mut sum = 0.0;
        for j in 0..n {
            let v = model.a()[[i, j]] * jitter_factor(&mut rng);
            a[[i, j]] = v;
            sum += v;
        }
        for j in 0..n {
            a[[i, j]] /= sum;
        }
    }
    HmmModel::new(
        model.pi().clone(),
        a,
        model.b().clone(),
        model.state_labels().to_vec(),
    )
    .expect("jittered model is stochastic")
}

/// Fit the model to one sequence by expectation-maximization.
///
/// Each restart runs EM from a re-jittered copy of `init` (restart 0 uses
/// `init` as-is) until the log-likelihood gain drops below `tol` or
/// `max_iters` re-estimations have been applied. The restart with the best
/// final log-likelihood wins. Fails only when every restart finds the
/// sequence impossible, reporting the first zero-probability slot.
pub fn baum_welch(
    init: &HmmModel,
    obs: &[usize],
    cfg: &TrainConfig,
) -> Result<TrainResult, HmmError> {
    check_observations(init, obs)?;
    if obs.len() < 2 {
        return Err(HmmError::ObservationTooShort(obs.len()));
    }
    if cfg.max_iters == 0 {
        return Err(HmmError::InvalidTrainConfig("max_iters must be at least 1"));
    }
    if cfg.restarts == 0 {
        return Err(HmmError::InvalidTrainConfig("restarts must be at least 1"));
    }
    if !(cfg.tol >= 0.0) {
        return Err(HmmError::InvalidTrainConfig("tol must be >= 0"));
    }

    let mut best: Option<TrainResult> = None;
    let mut first_failure: Option<usize> = None;

    for r in 0..cfg.restarts {
        let mut model = if r == 0 {
            init.clone()
        } else {
            rejitter(init, cfg.seed.wrapping_add(r as u64))
        };
        let run = (|| -> Result<TrainResult, usize> {
            let mut stats = estep(&model, obs)?;
            let mut ll_trace = vec![stats.ll];
            let mut iterations = 0;
            while iterations < cfg.max_iters {
                let prev_ll = stats.ll;
                model = mstep(&model, &stats, cfg.freeze_emissions);
                iterations += 1;
                stats = estep(&model, obs)?;
                ll_trace.push(stats.ll);
                if stats.ll - prev_ll < cfg.tol {
                    break;
                }
            }
            Ok(TrainResult {
                log_likelihood: stats.ll,
                occupancy: occupancy_of(&stats),
                model,
                iterations,
                ll_trace,
                restart_index: r,
            })
        })();
        match run {
            Ok(result) => {
                let better = match &best {
                    None => true,
                    Some(b) => result.log_likelihood > b.log_likelihood,
                };
                if better {
                    best = Some(result);
                }
            }
            Err(slot) => {
                first_failure.get_or_insert(slot);
            }
        }
    }

    best.ok_or_else(|| HmmError::ImpossibleObservation {
        slot: first_failure.unwrap_or(0),
    })
}

#[cfg(test)]
mod tests {
    use super::super::pair_template_model;
    use super::*;
    use ndarray::{arr1, arr2};

    fn pattern_obs(len: usize) -> Vec<usize> {
        (0..len).map(|t| [0, 1, 1, 0, 2, 3][t % 6]).collect()
    }

    #[test]
    fn one_iteration_means_one_re_estimation() {
        let init = pair_template_model(0.05, 3).unwrap();
        let cfg = TrainConfig {
            max_iters: 1,
            restarts: 1,
            ..TrainConfig::default()
        };
        let r = baum_welch(&init, &pattern_obs(120), &cfg).unwrap();
        assert_eq!(r.iterations, 1);
        assert_eq!(r.ll_trace.len(), 2);
        assert!(r.ll_trace[1] >= r.ll_trace[0] - 1e-9);
        assert_eq!(r.restart_index, 0);
        assert_eq!(r.log_likelihood, *r.ll_trace.last().unwrap());
    }

    #[test]
    fn frozen_emissions_never_move() {
        let init = pair_template_model(0.05, 3).unwrap();
        let cfg = TrainConfig {
            max_iters: 20,
            restarts: 2,
            freeze_emissions: true,
            ..TrainConfig::default()
        };
        let r = baum_welch(&init, &pattern_obs(120), &cfg).unwrap();
        assert_eq!(r.model.b(), init.b());
        assert_eq!(r.model.pi().len(), 6);
    }

    #[test]
    fn likelihood_trace_is_non_decreasing_without_freezing() {
        let init = pair_template_model(0.1, 9).unwrap();
        let cfg = TrainConfig {
            max_iters: 40,
            tol: 0.0,
            restarts: 1,
            freeze_emissions: false,
            ..TrainConfig::default()
        };
        let r = baum_welch(&init, &pattern_obs(300), &cfg).unwrap();
        for w in r.ll_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-8, "dip in trace: {} -> {}", w[0], w[1]);
        }
        assert!(r.log_likelihood > r.ll_trace[0]);
        let total: f64 = r.occupancy.iter().sum();
        assert!((total - 300.0).abs() < 1e-9);
    }

    #[test]
    fn training_is_deterministic_in_the_seed() {
        let init = pair_template_model(0.05, 3).unwrap();
        let cfg = TrainConfig {
            max_iters: 15,
            restarts: 3,
            seed: 77,
            ..TrainConfig::default()
        };
        let a = baum_welch(&init, &pattern_obs(200), &cfg).unwrap();
        let b = baum_welch(&init, &pattern_obs(200), &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.log_likelihood, b.log_likelihood);
        assert_eq!(a.ll_trace, b.ll_trace);
        assert_eq!(a.restart_index, b.restart_index);
    }

    #[test]
    fn impossible_sequence_reports_first_bad_slot() {
        let init = HmmModel::new(
            arr1(&[0.6, 0.4]),
            arr2(&[[0.7, 0.3], [0.4, 0.6]]),
            arr2(&[[1.0, 0.0], [1.0, 0.0]]),
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        let cfg = TrainConfig {
            restarts: 3,
            ..TrainConfig::default()
        };
        assert_eq!(
            baum_welch(&init, &[0, 0, 1, 0], &cfg).unwrap_err(),
            HmmError::ImpossibleObservation { slot: 2 }
        );
    }

    #[test]
    fn config_and_observation_validation() {
        let init = pair_template_model(0.05, 3).unwrap();
        let obs = pattern_obs(10);
        let bad = |cfg: TrainConfig| baum_welch(&init, &obs, &cfg).unwrap_err();
        assert!(matches!(
            bad(TrainConfig { max_iters: 0, ..TrainConfig::default() }),
            HmmError::InvalidTrainConfig(_)
        ));
        assert!(matches!(
            bad(TrainConfig { restarts: 0, ..TrainConfig::default() }),
            HmmError::InvalidTrainConfig(_)
        ));
        assert!(matches!(
            bad(TrainConfig { tol: f64::NAN, ..TrainConfig::default() }),
            HmmError::InvalidTrainConfig(_)
        ));
        assert_eq!(
            baum_welch(&init, &[1], &TrainConfig::default()).unwrap_err(),
            HmmError::ObservationTooShort(1)
        );
        assert_eq!(
            baum_welch(&init, &[], &TrainConfig::default()).unwrap_err(),
            HmmError::EmptyObservation
        );
    }
}
