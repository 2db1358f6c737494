use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not Hermitian (max deviation {0:.3e})")]
    NotHermitian(f64),
    #[error("matrix is not skew-symmetric (max deviation {0:.3e})")]
    NotSkewSymmetric(f64),
    #[error("odd dimension {0}")]
    OddDimension(usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("iteration did not converge: {0}")]
    ConvergenceFailure(String),
    #[error("non-finite entry in input")]
    NonFinite,
    #[error("spectral gap closes (min |E| = {0:.3e})")]
    GapClosure(f64),
    #[error("resolvent singular on contour (norm {0:.3e})")]
    ContourSingular(f64),
    #[error("continuation strip exceeded: {0}")]
    StripExceeded(String),
    #[error("k-grid too coarse: {nk} points for l = {l}")]
    GridTooCoarse { nk: usize, l: usize },
    #[error("empty spectrum")]
    EmptySpectrum,
    #[error("too many modes kept: 2^{0} exceeds budget")]
    CapTooLarge(usize),
    #[error("not particle-hole symmetric (residual {0:.3e})")]
    NotParticleHole(f64),
    #[error("bipartition is not symmetric: {0}")]
    NotSymmetricBipartition(String),
    #[error("no valid continuation strip")]
    NoValidStrip,
    #[error("defective point at k = {k:.6}, kappa = {kappa:.6}")]
    DefectivePoint { k: f64, kappa: f64 },
    #[error("band tracking failed near k = {0:.6}")]
    BandTrackingFailure(f64),
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("relaxation did not converge (residual {0:.3e})")]
    NoConvergence(f64),
    #[error("MPS is not injective: {0}")]
    NonInjective(String),
    #[error("too few values: need {need}, have {have}")]
    TooFewValues { need: usize, have: usize },
    #[error("state is not symmetric under the given representation (leading |eig| {0:.6})")]
    NotSymmetric(f64),
    #[error("virtual representation not unitary (residual {0:.3e})")]
    NonUnitaryV(f64),
    #[error("not unitary: {0}")]
    NotUnitary(String),
    #[error("size overflow: {0}")]
    SizeOverflow(String),
    #[error("not simple within k_max = {0}")]
    NotSimpleWithin(usize),
    #[error("minimal polynomial verification failed (residual {0:.3e})")]
    VerificationFailure(f64),
    #[error("Blaschke pole hit")]
    PoleHit,
    #[error("validity condition violated: {0}")]
    ValidityViolated(String),
    #[error("invalid cocycle: {0}")]
    InvalidCocycle(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
