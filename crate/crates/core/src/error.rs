use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter out of range: {0}")]
    ParamOutOfRange(String),

    #[error("evaluation failure: {0}")]
    EvaluationFailure(String),

    #[error("kernel has no Sonine conjugate on this grid: {0}")]
    NoConjugate(String),

    #[error("ill-conditioned Sonine solve: max residual {residual:.3e} exceeds {tol:.3e}")]
    IllConditioned { residual: f64, tol: f64 },

    #[error("symbol evaluation failed at lambda = {re:.6e}{im:+.6e}i")]
    SymbolEvaluationFailure { re: f64, im: f64 },

    #[error("aliasing in convolution-quadrature weights: relative change {change:.3e}")]
    AliasingError { change: f64 },

    #[error("kernel primitive unavailable for product integration")]
    PrimitiveUnavailable,

    #[error("history of length {len} exceeds scheme horizon {max}")]
    HistoryTooLong { len: usize, max: usize },

    #[error("bad exponent r = {0}: porous medium requires r >= 1, use the fast-diffusion operator")]
    BadExponent(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("Newton diverged at step {step}: residual {residual:.3e} after {iterations} iterations")]
    NewtonDiverged {
        step: usize,
        residual: f64,
        iterations: usize,
    },

    #[error("singular Jacobian at step {step}; consider raising eps_reg")]
    SingularJacobian { step: usize },

    #[error("psi^k is bounded: sup estimate {sup:.6e} < 2*C1 = {needed:.6e}")]
    NotAttainable { sup: f64, needed: f64 },

    #[error("contraction violated: measured {measured:.4} > bound {bound:.4}")]
    ContractionViolated { measured: f64, bound: f64 },

    #[error("effective noise kernel not square integrable: {0}")]
    NotSquareIntegrable(String),

    #[error("truncation tail {tail:.3e} is not negligible against {reference:.3e}")]
    TailNotNegligible { tail: f64, reference: f64 },

    #[error("unsupported kernel for this check: {0}")]
    UnsupportedKernel(String),

    #[error("resolution insufficient: {0}")]
    ResolutionInsufficient(String),

    #[error("path {path}: {source}")]
    Path {
        path: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
