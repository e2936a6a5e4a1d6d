use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("operator is not Hermitian (‖H − H†‖_F = {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("operator is not unitary (‖U†U − I‖_F = {deviation:.3e})")]
    NotUnitary { deviation: f64 },

    #[error("invalid density matrix: {0}")]
    InvalidDensityMatrix(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("cannot resolve flip-flop pair: eigenvectors {indices:?} have overlaps {overlaps:?} (< {threshold})")]
    DegeneracyResolution {
        indices: Vec<usize>,
        overlaps: Vec<f64>,
        threshold: f64,
    },

    #[error("accidental degeneracy between unperturbed levels {levels:?} (mixing ratio {ratio:.3})")]
    AccidentalDegeneracy { levels: (usize, usize), ratio: f64 },

    #[error("sublevel block leaks out of its subspace: leakage {leakage:.3e} ≥ tolerance {tolerance:.1e}")]
    Leakage { leakage: f64, tolerance: f64 },

    #[error("cannot label triplet eigenstates: eigenvalues {0:?} are degenerate")]
    Labeling(Vec<f64>),

    #[error("invalid pulse sequence: {0}")]
    InvalidSequence(String),

    #[error("fit did not converge after {iterations} iterations (cost {cost:.3e})")]
    NonConvergence {
        iterations: usize,
        cost: f64,
        best: Box<crate::kinetics::FitReport>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures that originate in the numerics rather than the input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DegeneracyResolution { .. }
                | Error::AccidentalDegeneracy { .. }
                | Error::Leakage { .. }
                | Error::Labeling(_)
                | Error::NonConvergence { .. }
                | Error::NotUnitary { .. }
                | Error::NotHermitian { .. }
        )
    }
}
