//! Test-function registry for the weak formulations: polynomials, smooth
//! bumps, and polynomial-times-bump products, each with analytic gradient
//! and Laplacian. Functions tagged compact-in-U must vanish on Γ; the
//! weak-form operations verify the tag against boundary quadrature nodes.

use crate::pt;
use crate::Point;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Support {
    CompactInU,
    Global,
}

#[derive(Debug, Clone)]
enum Kind {
    One,
    Coordinate { axis: usize },
    /// |x|² with the dimension fixed for the Laplacian
    Quadratic { dim: usize },
    Bump { center: Point, radius: f64 },
    /// (x[axis] − shift) · bump
    PolyBump { axis: usize, shift: f64, center: Point, radius: f64 },
}

/// A C² test function with analytic derivatives.
#[derive(Debug, Clone)]
pub struct TestFunction {
    name: String,
    support: Support,
    kind: Kind,
}

fn bump_value(q: f64) -> f64 {
    if q >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - q)).exp()
    }
}

/// (value, gradient, laplacian) of the bump exp(1 − 1/(1−q)), q = |x−c|²/R²
fn bump_all(x: Point, center: Point, radius: f64, dim: usize) -> (f64, Point, f64) {
    let d = pt::sub(x, center);
    let r2 = radius * radius;
    let q = pt::dot(d, d) / r2;
    if q >= 1.0 {
        return (0.0, [0.0; 3], 0.0);
    }
    let v = bump_value(q);
    let one_m = 1.0 - q;
    // dv/dq = -v/(1-q)^2, d2v/dq2 = v/(1-q)^4 - 2v/(1-q)^3
    let dv = -v / (one_m * one_m);
    let d2v = v / one_m.powi(4) + 2.0 * dv / one_m;
    let grad = pt::scale(d, 2.0 * dv / r2);
    let lap = d2v * 4.0 * pt::dot(d, d) / (r2 * r2) + dv * 2.0 * dim as f64 / r2;
    (v, grad, lap)
}

impl TestFunction {
    /// φ ≡ 1 (global; stands in for a cutoff that is 1 near the closure).
    pub fn one() -> Self {
        Self { name: "one".into(), support: Support::Global, kind: Kind::One }
    }

    /// φ(x) = `x[axis]` (global).
    pub fn coordinate(axis: usize) -> Self {
        Self {
            name: format!("x{}", axis + 1),
            support: Support::Global,
            kind: Kind::Coordinate { axis },
        }
    }

    /// φ(x) = |x|² (global).
    pub fn quadratic(dim: usize) -> Self {
        Self {
            name: "norm_sq".into(),
            support: Support::Global,
            kind: Kind::Quadratic { dim },
        }
    }

    /// Smooth bump supported on the ball B(center, radius); tag it compact
    /// when that ball lies inside the domain.
    pub fn bump(center: &[f64], radius: f64, support: Support) -> Self {
        Self {
            name: "bump".into(),
            support,
            kind: Kind::Bump { center: pt::from_slice(center), radius },
        }
    }

    /// `(x[axis] − shift)` times a bump, same support rule as the bump.
    pub fn poly_bump(axis: usize, shift: f64, center: &[f64], radius: f64, support: Support) -> Self {
        Self {
            name: format!("x{}_bump", axis + 1),
            support,
            kind: Kind::PolyBump { axis, shift, center: pt::from_slice(center), radius },
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn support(&self) -> Support {
        self.support
    }

    pub fn eval(&self, x: Point) -> f64 {
        match &self.kind {
            Kind::One => 1.0,
            Kind::Coordinate { axis } => x[*axis],
            Kind::Quadratic { dim } => x[..*dim].iter().map(|v| v * v).sum(),
            Kind::Bump { center, radius } => bump_all(x, *center, *radius, 3).0,
            Kind::PolyBump { axis, shift, center, radius } => {
                (x[*axis] - shift) * bump_all(x, *center, *radius, 3).0
            }
        }
    }

    pub fn grad(&self, x: Point) -> Point {
        match &self.kind {
            Kind::One => [0.0; 3],
            Kind::Coordinate { axis } => {
                let mut g = [0.0; 3];
                g[*axis] = 1.0;
                g
            }
            Kind::Quadratic { dim } => {
                let mut g = [0.0; 3];
                for i in 0..*dim {
                    g[i] = 2.0 * x[i];
                }
                g
            }
            Kind::Bump { center, radius } => bump_all(x, *center, *radius, 3).1,
            Kind::PolyBump { axis, shift, center, radius } => {
                let (v, g, _) = bump_all(x, *center, *radius, 3);
                let mut out = pt::scale(g, x[*axis] - shift);
                out[*axis] += v;
                out
            }
        }
    }

    /// Laplacian; bump variants need the active dimension of the domain.
    pub fn laplacian(&self, x: Point, dim: usize) -> f64 {
        match &self.kind {
            Kind::One | Kind::Coordinate { .. } => 0.0,
            Kind::Quadratic { dim } => 2.0 * *dim as f64,
            Kind::Bump { center, radius } => bump_all(x, *center, *radius, dim).2,
            Kind::PolyBump { axis, shift, center, radius } => {
                let (_, g, lap) = bump_all(x, *center, *radius, dim);
                (x[*axis] - shift) * lap + 2.0 * g[*axis]
            }
        }
    }
}
