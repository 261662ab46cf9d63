//! Monte Carlo solver and verification laboratory for the linear transport
//! equation with an additive Brownian perturbation of the drift,
//!
//! ```text
//! du + b(t,x)·∇u dt + ∇u ∘ dB_t = 0   in (0,T) × U,
//! u(0,·) = u0   in U,
//! u = ub        on the influx part of (0,T) × ∂U,
//! ```
//!
//! posed on a bounded domain `U ⊂ R^d` (d = 1, 2, 3). Solutions are built
//! pathwise by stopped backward characteristics: integrate the time-reversed
//! flow from the query point, stop at the last exit from `U`, and dispatch to
//! the initial or boundary datum. On top of the solver sits a battery of
//! numerical checks: weak formulations (Stratonovich and Itô, interior and
//! boundary-inclusive), boundary traces by deformation, commutator decay,
//! renormalized expectations against a finite-difference parabolic oracle,
//! and hypothesis/uniqueness surrogates.
//!
//! Positions are `[f64; 3]` padded with zeros beyond the active dimension of
//! the domain; the active dimension travels with [`geometry::Domain`].

pub mod analysis;
pub mod config;
pub mod drift;
pub mod experiment;
pub mod flow;
pub mod geometry;
pub mod numeric;
pub mod report;
pub mod solver;
pub mod stochastic;
pub mod testfn;
pub mod trace;
pub mod weakform;

/// A spatial point; entries beyond the domain dimension are zero.
pub type Point = [f64; 3];

/// Componentwise helpers on padded points. Padding entries are zero, so
/// full-width operations are dimension-agnostic.
pub mod pt {
    use crate::Point;

    #[inline]
    pub fn dot(a: Point, b: Point) -> f64 {
        a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
    }

    #[inline]
    pub fn norm(a: Point) -> f64 {
        dot(a, a).sqrt()
    }

    #[inline]
    pub fn sub(a: Point, b: Point) -> Point {
        [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
    }

    #[inline]
    pub fn add(a: Point, b: Point) -> Point {
        [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
    }

    #[inline]
    pub fn scale(a: Point, s: f64) -> Point {
        [a[0] * s, a[1] * s, a[2] * s]
    }

    #[inline]
    pub fn axpy(y: Point, s: f64, x: Point) -> Point {
        [y[0] + s * x[0], y[1] + s * x[1], y[2] + s * x[2]]
    }

    #[inline]
    pub fn dist(a: Point, b: Point) -> f64 {
        norm(sub(a, b))
    }

    /// Linear interpolation a + t (b - a).
    #[inline]
    pub fn lerp(a: Point, b: Point, t: f64) -> Point {
        [
            a[0] + t * (b[0] - a[0]),
            a[1] + t * (b[1] - a[1]),
            a[2] + t * (b[2] - a[2]),
        ]
    }

    /// Pad a slice (length <= 3) into a point.
    pub fn from_slice(xs: &[f64]) -> Point {
        let mut p = [0.0; 3];
        for (i, &x) in xs.iter().take(3).enumerate() {
            p[i] = x;
        }
        p
    }
}

/// Errors raised across the laboratory.
#[derive(Debug, thiserror::Error)]
pub enum LabError {
    /// Bad argument supplied by the caller (out-of-range parameter, misaligned grids).
    #[error("argument: {0}")]
    Argument(String),
    /// A point was outside the domain where an interior point was required.
    #[error("domain: {0}")]
    Domain(String),
    /// An iterative scheme failed to converge.
    #[error("numeric: {0}")]
    Numeric(String),
    /// Geometric precondition violated (stencil escape, collar overflow).
    #[error("geometry: {0}")]
    Geometry(String),
    /// Requested combination not supported.
    #[error("unsupported: {0}")]
    Unsupported(String),
    /// A required input produced by another module is missing or inconsistent.
    #[error("dependency: {0}")]
    Dependency(String),
    /// Operation called in a mode it does not support.
    #[error("usage: {0}")]
    Usage(String),
    /// Finite-difference scheme instability or CFL violation.
    #[error("scheme: {0}")]
    Scheme(String),
    /// Configuration could not be parsed or failed validation.
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;
