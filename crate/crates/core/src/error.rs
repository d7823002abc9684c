use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter out of range: {0}")]
    Domain(String),
    #[error("discriminant (gamma*eps - a)^2 - 4 eps = {0} is negative")]
    NegativeDiscriminant(f64),
    #[error("lambda = {0} requires eps > 0")]
    SingularLambda(f64),
    #[error("rest state is not hyperbolic: {0}")]
    NotHyperbolic(String),
    #[error("normal hyperbolicity fails at u = {u}: f'(u) = {df}")]
    NotNormallyHyperbolic { u: f64, df: f64 },
    #[error("v = {0} is outside the image of the branch")]
    OutsideBranch(f64),
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
    #[error("integration failed at z = {z}: {reason}")]
    Integration { z: f64, reason: String },
    #[error("newton iteration diverged after {iters} steps, residual {residual:e}")]
    NewtonDiverged { iters: usize, residual: f64 },
    #[error("pulse branch turns back near eps = {eps_fold:e} (requested {requested:e})")]
    Fold { eps_fold: f64, requested: f64 },
    #[error("domain too short: boundary defect {0:e}")]
    DomainTooShort(f64),
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error("rank-deficient frame")]
    RankDeficient,
    #[error("basis tags differ")]
    BasisMismatch,
    #[error("no admissible reference point: {0}")]
    NoReferencePoint(String),
    #[error("degenerate crossing at z = {z}: |Gamma| = {value:e}")]
    DegenerateCrossing { z: f64, value: f64 },
    #[error("unresolved sign changes near z = {0}")]
    Unresolved(f64),
    #[error("corner check failed: {0}")]
    Corner(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("solution blew up at t = {0}")]
    BlowUp(f64),
}

pub type Result<T> = std::result::Result<T, Error>;
