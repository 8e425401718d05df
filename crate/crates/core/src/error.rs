use thiserror::Error;

/// Errors surfaced by the simulation and inversion layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("point-dipole model invalid at |r| = {r_angstrom:.3} A (floor {floor_angstrom:.1} A); provide an explicit tensor")]
    ModelValidity { r_angstrom: f64, floor_angstrom: f64 },

    #[error("Hilbert space too large: {nuclei} nuclei (max {max})")]
    DimensionOverflow { nuclei: usize, max: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("non-uniform sampling: max relative deviation {0:.3e}")]
    NonUniformSampling(f64),

    #[error("ambiguous manifold assignment for peak at {freq_hz} Hz")]
    AmbiguousAssignment { freq_hz: f64 },

    #[error("fit did not converge; best residual {best_residual}")]
    NoFit { best_residual: f64 },

    #[error("no lattice site within tolerance; best residual {best_residual}")]
    EmptyLatticeResult { best_residual: f64 },

    #[error("distance geometry ordering infeasible at vertex {vertex}")]
    InfeasibleOrdering { vertex: usize },

    #[error("no conformation satisfies the constraints within tolerance")]
    NoSolution,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("format: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
