//! Discrete hidden Markov models over the pair observation alphabet, plus
//! the six-state pair-interaction template the inference pipeline trains.

mod inference;
mod train;

pub use inference::{forward_log_likelihood, forward_backward, posterior_occupancy, ForwardBackward};
pub use train::{baum_welch, TrainConfig, TrainResult};

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Row-stochastic HMM with initial distribution `pi`, transitions `a`
/// (`n_states x n_states`), and emissions `b` (`n_states x n_symbols`).
#[derive(Debug, Clone, PartialEq)]
pub struct HmmModel {
    pi: Array1<f64>,
    a: Array2<f64>,
    b: Array2<f64>,
    state_labels: Vec<String>,
}

#[derive(Debug, Error, PartialEq)]
pub enum HmmError {
    #[error("model shape mismatch: {0}")]
    Shape(String),
    #[error("{what} row {index} has entry {value}, all probabilities must be finite and >= 0")]
    NegativeEntry {
        what: &'static str,
        index: usize,
        value: f64,
    },
    #[error("{what} row {index} sums to {sum}, expected 1 within 1e-9")]
    NotStochastic {
        what: &'static str,
        index: usize,
        sum: f64,
    },
    #[error("template epsilon {0} outside [0, 0.5)")]
    InvalidEpsilon(f64),
    #[error("observation sequence is empty")]
    EmptyObservation,
    #[error("observation sequence of length {0} is too short to train on (need at least 2)")]
    ObservationTooShort(usize),
    #[error("symbol {symbol} at position {position} outside alphabet of {n_symbols}")]
    SymbolOutOfRange {
        position: usize,
        symbol: usize,
        n_symbols: usize,
    },
    #[error("observation impossible under the model, first zero-probability slot at index {slot}")]
    ImpossibleObservation { slot: usize },
    #[error("invalid training config: {0}")]
    InvalidTrainConfig(&'static str),
    #[error("model JSON: {0}")]
    Json(String),
}

fn check_rows(
    what: &'static str,
    rows: impl Iterator<Item = Vec<f64>>,
) -> Result<(), HmmError> {
    for (index, row) in rows.enumerate() {
        let mut sum = 0.0;
        for &v in &row {
            if !v.is_finite() || v < 0.0 {
                return Err(HmmError::NegativeEntry {
                    what,
                    index,
                    value: v,
                });
            }
            sum += v;
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(HmmError::NotStochastic { what, index, sum });
        }
    }
    Ok(())
}

impl HmmModel {
    pub fn new(
        pi: Array1<f64>,
        a: Array2<f64>,
        b: Array2<f64>,
        state_labels: Vec<String>,
    ) -> Result<Self, HmmError> {
        let n = pi.len();
        if n == 0 {
            return Err(HmmError::Shape("model needs at least one state".into()));
        }
        if a.nrows() != n || a.ncols() != n {
            return Err(HmmError::Shape(format!(
                "transition matrix is {}x{}, expected {n}x{n}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != n || b.ncols() == 0 {
            return Err(HmmError::Shape(format!(
                "emission matrix is {}x{}, expected {n} rows and at least one symbol",
                b.nrows(),
                b.ncols()
            )));
        }
        if state_labels.len() != n {
            return Err(HmmError::Shape(format!(
                "{} state labels for {n} states",
                state_labels.len()
            )));
        }
        check_rows("pi", std::iter::once(pi.to_vec()))?;
        check_rows("transition", a.rows().into_iter().map(|r| r.to_vec()))?;
        check_rows("emission", b.rows().into_iter().map(|r| r.to_vec()))?;
        Ok(HmmModel {
            pi,
            a,
            b,
            state_labels,
        })
    }

    pub fn n_states(&self) -> usize {
        self.pi.len()
    }

    pub fn n_symbols(&self) -> usize {
        self.b.ncols()
    }

    pub fn pi(&self) -> &Array1<f64> {
        &self.pi
    }

    pub fn a(&self) -> &Array2<f64> {
        &self.a
    }

    pub fn b(&self) -> &Array2<f64> {
        &self.b
    }

    pub fn state_labels(&self) -> &[String] {
        &self.state_labels
    }

    /// Index of the state with this label, if present.
    pub fn state_index(&self, label: &str) -> Option<usize> {
        self.state_labels.iter().position(|l| l == label)
    }

    pub fn to_json(&self) -> String {
        let shadow = HmmModelJson {
            n_states: self.n_states(),
            n_symbols: self.n_symbols(),
            pi: self.pi.to_vec(),
            a: self.a.iter().copied().collect(),
            b: self.b.iter().copied().collect(),
            state_labels: self.state_labels.clone(),
        };
        let mut s = serde_json::to_string_pretty(&shadow).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, HmmError> {
        let shadow: HmmModelJson =
            serde_json::from_str(text).map_err(|e| HmmError::Json(e.to_string()))?;
        let n = shadow.n_states;
        let m = shadow.n_symbols;
        if shadow.pi.len() != n {
            return Err(HmmError::Json(format!(
                "pi has {} entries for n_states {n}",
                shadow.pi.len()
            )));
        }
        let a = Array2::from_shape_vec((n, n), shadow.a)
            .map_err(|_| HmmError::Json(format!("a is not a flat {n}x{n} row-major array")))?;
        let b = Array2::from_shape_vec((n, m), shadow.b)
            .map_err(|_| HmmError::Json(format!("b is not a flat {n}x{m} row-major array")))?;
        HmmModel::new(Array1::from_vec(shadow.pi), a, b, shadow.state_labels)
    }
}

/// On-disk model layout: probability matrices flattened row-major.
#[derive(Serialize, Deserialize)]
struct HmmModelJson {
    n_states: usize,
    n_symbols: usize,
    pi: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    state_labels: Vec<String>,
}

pub const PAIR_STATE_LABELS: [&str; 6] = ["s_II", "s_XT", "s_YT", "s_XY", "s_Xd", "s_Yd"];

/// Designated emission symbol per pair state: what the air looks like when
/// the pair is in that state. Deferral states emit the other side's symbol.
const PAIR_STATE_SYMBOL: [usize; 6] = [0, 1, 2, 3, 2, 1];

/// Initial transition weights for the pair template, row-major in
/// [`PAIR_STATE_LABELS`] order.
///
/// The two y-emitting states (s_YT, s_Xd) and the two x-emitting states
/// (s_XT, s_Yd) are identical in emission, so everything that separates them
/// is transition structure. The base encodes two qualitative contrasts and
/// lets training reshape the magnitudes:
///
/// * Persistence. A deferral holds from the moment the neighbor's burst is
///   sensed until it ends, so deferral self-loops start high (0.85). A solo
///   burst that is about to be barged into, or the tail left after an
///   overlap, is much shorter, so transmission self-loops start lower (0.68).
///   On a long run the likelihood ratio compounds per slot, which is what
///   pulls full-length runs into the deferral states and clipped runs into
///   the transmission states.
/// * Endings. An overlap grows out of a solo burst (s_YT -> s_XY = 0.15)
///   and almost never out of a deferral (s_Xd -> s_XY = 0.005), while a
///   deferral releases into the waiter's own transmission (s_Xd -> s_XT
///   above s_YT -> s_XT).
///
/// Idle exits and entries are kept equal across the twins so neither state
/// is presumed; the matrix is symmetric under swapping the roles of x and y,
/// and every entry is positive.
#[rustfmt::skip]
const PAIR_BASE_TRANSITIONS: [f64; 36] = [
    // to:  s_II   s_XT   s_YT   s_XY   s_Xd   s_Yd
    0.60, 0.09, 0.09, 0.04, 0.09, 0.09,     // from s_II
    0.10, 0.68, 0.02, 0.15, 0.01, 0.04,     // from s_XT
    0.10, 0.02, 0.68, 0.15, 0.04, 0.01,     // from s_YT
    0.10, 0.12, 0.12, 0.60, 0.03, 0.03,     // from s_XY
    0.06, 0.06, 0.02, 0.005, 0.85, 0.005,   // from s_Xd
    0.06, 0.02, 0.06, 0.005, 0.005, 0.85,   // from s_Yd
];

/// Build the untrained six-state pair model.
///
/// Emission rows put `1 - epsilon` on the state's designated symbol and
/// `epsilon / 3` on the rest. Transition rows are the positive-everywhere
/// base above with seeded multiplicative jitter, renormalized; pi is
/// uniform. Same seed, same model.
pub fn pair_template_model(epsilon: f64, seed: u64) -> Result<HmmModel, HmmError> {
    if !(0.0..0.5).contains(&epsilon) {
        return Err(HmmError::InvalidEpsilon(epsilon));
    }
    let n = 6;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = Array2::zeros((n, n));
    for i in 0..n {
        let mut sum = 0.0;
        for j in 0..n {
            let v = PAIR_BASE_TRANSITIONS[i * n + j] * jitter_factor(&mut rng);
            a[[i, j]] = v;
            sum += v;
        }
        for j in 0..n {
            a[[i, j]] /= sum;
        }
    }
    let mut b = Array2::zeros((n, 4));
    for i in 0..n {
        for k in 0..4 {
            b[[i, k]] = if k == PAIR_STATE_SYMBOL[i] {
                1.0 - epsilon
            } else {
                epsilon / 3.0
            };
        }
    }
    let pi = Array1::from_elem(n, 1.0 / n as f64);
    HmmModel::new(
        pi,
        a,
        b,
        PAIR_STATE_LABELS.iter().map(|s| s.to_string()).collect(),
    )
}

/// Multiplicative jitter in [0.85, 1.15).
pub(crate) fn jitter_factor(rng: &mut ChaCha8Rng) -> f64 {
    0.85 + 0.3 * rng.random::<f64>()
}
