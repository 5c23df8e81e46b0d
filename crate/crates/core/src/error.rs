use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("atom count {n} outside the supported range 1..={max}")]
    InvalidAtomCount { n: usize, max: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("state is not normalized (norm {norm})")]
    NotNormalized { norm: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("time {t} outside the protocol window [0, {total}]")]
    TimeOutOfRange { t: f64, total: f64 },

    #[error("tridiagonal eigensolver did not converge for eigenvalue {index} of a {dim}x{dim} block after {iterations} sweeps")]
    EigenNoConvergence { dim: usize, index: usize, iterations: usize },

    #[error("ground state is nearly degenerate: gap {gap:e} against spectral scale {scale:e}")]
    NearDegenerate { gap: f64, scale: f64 },

    #[error("no interaction strength in [0, {chi_max}] brings <Jz> down to {target} (reached {signal_at_max})")]
    BracketFailure { target: f64, chi_max: f64, signal_at_max: f64 },

    #[error("norm drift {drift:e} after step {step} (dt = {step_size:e}); reduce the step size")]
    NormDrift { drift: f64, step: usize, step_size: f64 },

    #[error("no total time up to {cap} reaches infidelity {target} (best {best_infidelity:e})")]
    CapReached { cap: f64, target: f64, best_infidelity: f64 },

    #[error("optimizer fails to reach infidelity {target} even at the upper bracket T = {upper} (best {best_infidelity:e})")]
    NoSuccess { upper: f64, target: f64, best_infidelity: f64 },

    #[error("density matrix is not Hermitian (max deviation {deviation:e})")]
    NonHermitian { deviation: f64 },

    #[error("density matrix has trace {trace}")]
    BadTrace { trace: f64 },

    #[error("positivity violated: eigenvalue {eigenvalue:e} at step {step} (t = {time}, dt = {step_size:e})")]
    PositivityViolation { eigenvalue: f64, step: usize, time: f64, step_size: f64 },

    #[error("{} of {total} realizations failed; first: {}", failures.len(), failures.first().map(|f| f.1.as_str()).unwrap_or(""))]
    EnsembleFailure { total: usize, failures: Vec<(usize, String)> },
}
