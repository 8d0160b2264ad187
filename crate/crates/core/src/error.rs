use thiserror::Error;

pub type Result<T> = std::result::Result<T, LsfError>;

#[derive(Debug, Error)]
pub enum LsfError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unstable crystal: transverse Hessian has eigenvalue {min_eigenvalue:.3e} <= 0 (trap too weak for the Coulomb coupling)")]
    UnstableCrystal { min_eigenvalue: f64 },

    #[error("at least two modes are required to define a mode gap (got {0})")]
    TooFewModes(usize),

    #[error("no harmonic tone falls in the band for gate time {gate_time:.3e} s; the shortest gate time admitting a tone is {min_gate_time:.3e} s")]
    EmptyToneGrid { gate_time: f64, min_gate_time: f64 },

    #[error("tone restriction with window {window:.3e} rad/s left no tones")]
    EmptyRestriction { window: f64 },

    #[error("trivial kernel: {tones} tones with constraint rank {rank}; add tones or lengthen the gate")]
    TrivialKernel { tones: usize, rank: usize },

    #[error("invalid target: {0}")]
    InvalidTarget(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("unusable pool entry: {0}")]
    UnusablePoolEntry(String),

    #[error("no zero-phase solution admitted after {attempts} searches; try a longer gate time")]
    EmptyPool { attempts: usize },

    #[error("every pool entry was unusable for this target")]
    NoUsableEntries,

    #[error("gate too short for the adiabatic construction: T/T_min = {ratio:.2}, need >= {required:.2}")]
    NotAdiabatic { ratio: f64, required: f64 },

    #[error("simulation limited to {max} ions (requested {requested})")]
    SimulationTooLarge { requested: usize, max: usize },

    #[error("trace drift {drift:.3e} exceeds tolerance during mode stage {stage}")]
    TraceDrift { drift: f64, stage: usize },

    #[error("provenance mismatch: {0}")]
    Provenance(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
