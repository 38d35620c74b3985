use thiserror::Error;

/// Errors raised by mesh construction, basis setup, assembly and solves.
#[derive(Debug, Error)]
pub enum Error {
    #[error("refinement level {0} outside supported range 1..=8")]
    LevelOutOfRange(u32),

    #[error("quadrature degree {degree} outside supported range 1..={max}")]
    QuadratureDegree { degree: usize, max: usize },

    #[error("degenerate geometry: Jacobian determinant {0:e} is not positive")]
    DegenerateGeometry(f64),

    #[error("invalid space configuration: {0}")]
    InvalidConfig(String),

    #[error("basis is linearly dependent (Gram eigenvalue ratio {0:e})")]
    DependentBasis(f64),

    #[error("singular {0} block")]
    SingularBlock(&'static str),

    #[error("permeability is not symmetric positive definite at ({x}, {y})")]
    PermeabilityNotSpd { x: f64, y: f64 },

    #[error("sparse factorization failed: {0}")]
    Factorization(String),

    #[error("solve residual {0:e} exceeds tolerance")]
    SolveResidual(f64),

    #[error("study configuration: {0}")]
    Study(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
