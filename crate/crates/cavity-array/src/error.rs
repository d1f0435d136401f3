//! Error type shared across the simulation library.

use thiserror::Error;

/// Errors produced by space construction, propagation and analysis.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("photon cutoff n_max must be at least 1 (a cutoff of 0 cannot hold one photon)")]
    CutoffTooSmall,

    #[error("cavity index {0} out of range 1..=3")]
    CavityOutOfRange(usize),

    #[error("occupation {occupation} exceeds photon cutoff n_max = {n_max}")]
    OccupationExceedsCutoff { occupation: usize, n_max: usize },

    #[error(
        "coherent state truncation: weight {tail:.3e} above the cutoff exceeds {threshold:.1e} \
         (raise n_max or force)"
    )]
    CoherentTruncation { tail: f64, threshold: f64 },

    #[error("superposition weight p = {0} outside [0, 1]")]
    InvalidSuperposition(f64),

    #[error("invalid system parameters: {0}")]
    InvalidParams(String),

    #[error("operator dimension {got} does not match space dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("operator violates hermitian hint: max |O - O^dag| = {0:.3e}")]
    NotHermitian(f64),

    #[error("dimension {dim} exceeds the exact-propagator guard {guard}")]
    DimensionGuard { dim: usize, guard: usize },

    #[error("split terms do not sum to the Hamiltonian: max |sum - H| = {0:.3e}")]
    TermSumMismatch(f64),

    #[error("split term '{label}' disagrees with its matrix: max deviation {deviation:.3e}")]
    TermInconsistent { label: String, deviation: f64 },

    #[error("cached propagator factor is not unitary: max |U^dag U - I| = {0:.3e}")]
    FactorNotUnitary(f64),

    #[error("dt_sample = {dt_sample} is not an integer multiple of dt = {dt}")]
    NonCommensurateSampling { dt_sample: f64, dt: f64 },

    #[error("state norm drifted to {norm} during propagation (propagator defect)")]
    NormDrift { norm: f64 },

    #[error("cutoff convergence failed: {0}")]
    ConvergenceFailure(String),

    #[error("all couplings are zero; the oscillation amplitude is undefined")]
    AllCouplingsZero,

    #[error("series is degenerate (constant or empty); box-count fit rejected")]
    DegenerateSeries,

    #[error("tau = {tau} outside admissible range [{min}, {max}]")]
    TauOutOfRange { tau: f64, min: f64, max: f64 },

    #[error("series too short: need at least {need} segments at the smallest tau, have {have}")]
    SeriesTooShort { need: usize, have: usize },

    #[error("degenerate fit window: {0}")]
    DegenerateWindow(String),

    #[error("trajectory does not record the required columns: {0}")]
    MissingColumn(String),

    #[error("scan grid has {0} points; need at least 2 to locate a spike")]
    GridTooSmall(usize),

    #[error("T_inv spike sits at the grid boundary (g = {0}); widen the scan grid")]
    SpikeAtBoundary(f64),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl SimError {
    /// Process exit code for the CLI: 2 config, 3 convergence, 4 i/o.
    pub fn exit_code(&self) -> i32 {
        match self {
            SimError::Config(_) | SimError::InvalidParams(_) => 2,
            SimError::ConvergenceFailure(_) => 3,
            SimError::Io(_) | SimError::Json(_) => 4,
            _ => 1,
        }
    }
}
