//! Crate-wide error type.

use std::fmt;

/// Errors produced by mesh construction, assembly, and the linear algebra
/// backends. Variants are grouped by the subsystem that raises them.
#[derive(Debug)]
pub enum Error {
    // mesh
    InvalidSigma(f64),
    InvalidBox { lo: [f64; 3], hi: [f64; 3] },
    UnknownPatch(String),
    /// Facet coverage mismatch detected during face extraction; signals a
    /// mesh construction bug (overlapping or partially matched facets).
    FacetCoverage { axis: usize, coord: f64, covered: f64, area: f64 },
    FaceNotOnElement,
    // fem
    QuadPointCount(usize),
    DegenerateElement,
    // spaces
    DegreeTooSmall(usize),
    // assembly
    ZeroPerpDiameter,
    NuOutOfRange(f64),
    // solver
    NotSpd,
    DimensionCap { dim: usize, cap: usize },
    LapackFailure { routine: &'static str, info: i32 },
    NoConvergence { iterations: usize, residual: f64, best: Vec<f64> },
    ZeroPivot(usize),
    VerifyFailed(usize),
    // infsup
    KernelDimension { kernel_ratio: f64, separation_ratio: f64 },
    DegenerateSpace { n: usize },
    // problems / cli
    MissingExact(String),
    NuUnsupported { case: String, nu: f64 },
    PointOutsideDomain([f64; 3]),
    EmptyRange(String),
    Config(String),
    Io(std::io::Error),
    Json(serde_json::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidSigma(s) => write!(f, "refinement ratio must lie in (0,1), got {s}"),
            Error::InvalidBox { lo, hi } => {
                write!(f, "box must satisfy lo < hi componentwise, got lo={lo:?} hi={hi:?}")
            }
            Error::UnknownPatch(s) => write!(f, "unknown patch kind '{s}'"),
            Error::FacetCoverage { axis, coord, covered, area } => write!(
                f,
                "facet on plane x{axis}={coord} covered {covered} of area {area}; \
                 mesh construction bug"
            ),
            Error::FaceNotOnElement => write!(f, "face does not lie on a facet of the element"),
            Error::QuadPointCount(n) => {
                write!(f, "Gauss rule supports 1..=64 points, requested {n}")
            }
            Error::DegenerateElement => write!(f, "element has a non-positive extent"),
            Error::DegreeTooSmall(k) => write!(f, "polynomial degree must be >= 1, got {k}"),
            Error::ZeroPerpDiameter => write!(f, "face with zero perpendicular diameter"),
            Error::NuOutOfRange(nu) => write!(f, "Poisson ratio must lie in (0, 1/2], got {nu}"),
            Error::NotSpd => write!(f, "matrix is not symmetric positive definite"),
            Error::DimensionCap { dim, cap } => write!(
                f,
                "dense dimension {dim} exceeds cap {cap}; use a smaller refinement level or degree"
            ),
            Error::LapackFailure { routine, info } => {
                write!(f, "LAPACK {routine} failed with info={info}")
            }
            Error::NoConvergence { iterations, residual, .. } => write!(
                f,
                "GMRES did not reach the residual tolerance after {iterations} iterations \
                 (residual {residual:.3e})"
            ),
            Error::ZeroPivot(i) => write!(f, "ILU(0) hit a zero pivot at row {i}"),
            Error::VerifyFailed(n) => write!(f, "{n} verification check(s) failed"),
            Error::KernelDimension { kernel_ratio, separation_ratio } => write!(
                f,
                "kernel dimension is not 1: sigma_kernel/sigma_1 = {kernel_ratio:.3e}, \
                 sigma_value/sigma_1 = {separation_ratio:.3e}"
            ),
            Error::DegenerateSpace { n } => write!(
                f,
                "pressure space has dimension {n}; the inf-sup constant needs N >= 2 \
                 (single-element k=1 has only the constant mode)"
            ),
            Error::MissingExact(c) => {
                write!(f, "case '{c}' has no exact solution and no reference was supplied")
            }
            Error::NuUnsupported { case, nu } => write!(
                f,
                "case '{case}' defines its pressure via p = -div(u)/(1-2nu) and is \
                 undefined at nu={nu}; choose nu < 1/2"
            ),
            Error::PointOutsideDomain(x) => write!(f, "point {x:?} lies outside the mesh domain"),
            Error::EmptyRange(what) => write!(f, "empty range: {what}"),
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
            Error::Io(e) => write!(f, "io error: {e}"),
            Error::Json(e) => write!(f, "json error: {e}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
