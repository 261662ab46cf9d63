//! Bounded domains described by a level function φ (negative inside, zero on
//! the boundary Γ, positive outside), together with the boundary machinery
//! the weak formulations need: outward normals, surface quadrature, mean
//! curvature, the inward deformation Ψ_τ(r) = r − τ n(r) with its surface
//! Jacobian, and the collar level function h used by boundary-limit checks.
//!
//! Built-in shapes: interval (d=1), disk / annulus / axis box (d=2),
//! ball / axis box (d=3), and generic polynomial level sets in d=2 with
//! marching-squares boundary quadrature.

use crate::pt;
use crate::{LabError, Point, Result};

/// Classification of a point against the domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    Interior,
    Boundary,
    Exterior,
}

/// A point on Γ with its outward unit normal, quadrature weight (zero for
/// points not produced by a quadrature rule) and mean curvature.
#[derive(Debug, Clone)]
pub struct BoundaryPoint {
    pub position: Point,
    pub normal: Point,
    pub weight: f64,
    pub curvature: f64,
}

/// Mean curvature sample; `one_dimensional` flags the d = 1 case where the
/// (d−1) prefactor kills every curvature term and 0 is returned.
#[derive(Debug, Clone, Copy)]
pub struct CurvatureSample {
    pub value: f64,
    pub one_dimensional: bool,
}

/// Bivariate polynomial Σ c x^i y^j used by generic level-set domains.
#[derive(Debug, Clone)]
pub struct Poly2 {
    terms: Vec<(u32, u32, f64)>,
}

impl Poly2 {
    pub fn new(terms: Vec<(u32, u32, f64)>) -> Self {
        Self { terms }
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.terms
            .iter()
            .map(|&(i, j, c)| c * x.powi(i as i32) * y.powi(j as i32))
            .sum()
    }

    pub fn grad(&self, x: f64, y: f64) -> (f64, f64) {
        let mut gx = 0.0;
        let mut gy = 0.0;
        for &(i, j, c) in &self.terms {
            if i > 0 {
                gx += c * i as f64 * x.powi(i as i32 - 1) * y.powi(j as i32);
            }
            if j > 0 {
                gy += c * j as f64 * x.powi(i as i32) * y.powi(j as i32 - 1);
            }
        }
        (gx, gy)
    }

    /// (φ_xx, φ_xy, φ_yy)
    pub fn hess(&self, x: f64, y: f64) -> (f64, f64, f64) {
        let mut xx = 0.0;
        let mut xy = 0.0;
        let mut yy = 0.0;
        for &(i, j, c) in &self.terms {
            let (fi, fj) = (i as f64, j as f64);
            if i >= 2 {
                xx += c * fi * (fi - 1.0) * x.powi(i as i32 - 2) * y.powi(j as i32);
            }
            if i >= 1 && j >= 1 {
                xy += c * fi * fj * x.powi(i as i32 - 1) * y.powi(j as i32 - 1);
            }
            if j >= 2 {
                yy += c * fj * (fj - 1.0) * x.powi(i as i32) * y.powi(j as i32 - 2);
            }
        }
        (xx, xy, yy)
    }
}

#[derive(Debug, Clone)]
enum Shape {
    Interval { a: f64, b: f64 },
    Disk { center: Point, radius: f64 },
    Annulus { center: Point, inner: f64, outer: f64 },
    Rect { lo: Point, hi: Point },
    Ball { center: Point, radius: f64 },
    LevelSet2d { poly: Poly2 },
}

/// Bounded open domain with level-function access.
#[derive(Debug, Clone)]
pub struct Domain {
    shape: Shape,
    dim: usize,
    center: Point,
    inradius: f64,
    bbox_lo: Point,
    bbox_hi: Point,
    collar: f64,
    boundary_tol: f64,
}

const PROJECT_MAX_ITERS: usize = 100;

impl Domain {
    pub fn interval(a: f64, b: f64) -> Self {
        assert!(b > a, "empty interval");
        Self::finish(
            Shape::Interval { a, b },
            1,
            [0.5 * (a + b), 0.0, 0.0],
            0.5 * (b - a),
            [a, 0.0, 0.0],
            [b, 0.0, 0.0],
        )
    }

    pub fn disk(center: [f64; 2], radius: f64) -> Self {
        assert!(radius > 0.0);
        let c = [center[0], center[1], 0.0];
        Self::finish(
            Shape::Disk { center: c, radius },
            2,
            c,
            radius,
            [c[0] - radius, c[1] - radius, 0.0],
            [c[0] + radius, c[1] + radius, 0.0],
        )
    }

    pub fn annulus(center: [f64; 2], inner: f64, outer: f64) -> Self {
        assert!(0.0 < inner && inner < outer);
        let c = [center[0], center[1], 0.0];
        let mid = 0.5 * (inner + outer);
        Self::finish(
            Shape::Annulus { center: c, inner, outer },
            2,
            [c[0] + mid, c[1], 0.0],
            0.5 * (outer - inner),
            [c[0] - outer, c[1] - outer, 0.0],
            [c[0] + outer, c[1] + outer, 0.0],
        )
    }

    pub fn box2d(lo: [f64; 2], hi: [f64; 2]) -> Self {
        assert!(hi[0] > lo[0] && hi[1] > lo[1]);
        let l = [lo[0], lo[1], 0.0];
        let h = [hi[0], hi[1], 0.0];
        let c = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1]), 0.0];
        let inr = 0.5 * (hi[0] - lo[0]).min(hi[1] - lo[1]);
        Self::finish(Shape::Rect { lo: l, hi: h }, 2, c, inr, l, h)
    }

    pub fn box3d(lo: [f64; 3], hi: [f64; 3]) -> Self {
        assert!((0..3).all(|i| hi[i] > lo[i]));
        let c = [
            0.5 * (lo[0] + hi[0]),
            0.5 * (lo[1] + hi[1]),
            0.5 * (lo[2] + hi[2]),
        ];
        let inr = (0..3).map(|i| 0.5 * (hi[i] - lo[i])).fold(f64::MAX, f64::min);
        Self::finish(Shape::Rect { lo, hi }, 3, c, inr, lo, hi)
    }

    pub fn ball(center: [f64; 3], radius: f64) -> Self {
        assert!(radius > 0.0);
        Self::finish(
            Shape::Ball { center, radius },
            3,
            center,
            radius,
            [center[0] - radius, center[1] - radius, center[2] - radius],
            [center[0] + radius, center[1] + radius, center[2] + radius],
        )
    }

    /// Generic 2-d domain {φ < 0} for a polynomial φ. The caller supplies a
    /// bounding box and an interior point; the inradius is estimated by a
    /// sampled projection from that point.
    pub fn level_set_2d(
        poly: Poly2,
        bbox_lo: [f64; 2],
        bbox_hi: [f64; 2],
        interior: [f64; 2],
    ) -> Result<Self> {
        let lo = [bbox_lo[0], bbox_lo[1], 0.0];
        let hi = [bbox_hi[0], bbox_hi[1], 0.0];
        let c = [interior[0], interior[1], 0.0];
        let mut dom = Self::finish(Shape::LevelSet2d { poly }, 2, c, 0.0, lo, hi);
        if dom.phi(c) >= 0.0 {
            return Err(LabError::Argument(
                "level-set interior point is not inside {phi < 0}".into(),
            ));
        }
        // inradius estimate: shortest ray-marched boundary distance from the
        // declared center over a fan of directions, shrunk for safety
        let mut best = f64::MAX;
        for k in 0..32 {
            let th = 2.0 * std::f64::consts::PI * k as f64 / 32.0;
            if let Some(d) = dom.ray_to_boundary(c, [th.cos(), th.sin(), 0.0]) {
                best = best.min(d);
            }
        }
        if !best.is_finite() {
            return Err(LabError::Argument(
                "level-set domain appears unbounded inside the bounding box".into(),
            ));
        }
        dom.inradius = 0.999 * best;
        dom.collar = (dom.inradius / 2.0).min(0.5);
        Ok(dom)
    }

    fn finish(shape: Shape, dim: usize, center: Point, inradius: f64, lo: Point, hi: Point) -> Self {
        let diam = pt::dist(hi, lo);
        Self {
            shape,
            dim,
            center,
            inradius,
            bbox_lo: lo,
            bbox_hi: hi,
            collar: (inradius / 2.0).min(0.5),
            boundary_tol: 1e-9 * (1.0 + diam),
        }
    }

    /// Distance along `dir` from `x` to the first sign change of φ, by
    /// marching then bisection. `None` if no crossing before the box edge.
    fn ray_to_boundary(&self, x: Point, dir: Point) -> Option<f64> {
        let step = 1e-3 * self.diameter();
        let mut s = 0.0;
        let max_s = 1.5 * self.diameter();
        while s < max_s {
            let p = pt::axpy(x, s + step, dir);
            if self.phi(p) >= 0.0 {
                let f = |t: f64| self.phi(pt::axpy(x, t, dir));
                return Some(crate::numeric::bisect(f, s, s + step, 60));
            }
            s += step;
        }
        None
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn center(&self) -> Point {
        self.center
    }

    pub fn inradius(&self) -> f64 {
        self.inradius
    }

    pub fn bounding_box(&self) -> (Point, Point) {
        (self.bbox_lo, self.bbox_hi)
    }

    pub fn diameter(&self) -> f64 {
        pt::dist(self.bbox_hi, self.bbox_lo)
    }

    /// Collar width δ* of the level function h.
    pub fn collar_width(&self) -> f64 {
        self.collar
    }

    pub fn boundary_tol(&self) -> f64 {
        self.boundary_tol
    }

    /// Level function: negative inside, zero on Γ, positive outside. Signed
    /// distance for every built-in shape; the raw polynomial for level sets.
    pub fn phi(&self, x: Point) -> f64 {
        match &self.shape {
            Shape::Interval { a, b } => (a - x[0]).max(x[0] - b),
            Shape::Disk { center, radius } | Shape::Ball { center, radius } => {
                pt::dist(x, *center) - radius
            }
            Shape::Annulus { center, inner, outer } => {
                let r = pt::dist(x, *center);
                (inner - r).max(r - outer)
            }
            Shape::Rect { lo, hi } => {
                let mut inside = f64::MIN;
                let mut out_sq = 0.0;
                for i in 0..self.dim {
                    let q = (lo[i] - x[i]).max(x[i] - hi[i]);
                    if q > 0.0 {
                        out_sq += q * q;
                    }
                    inside = inside.max(q);
                }
                if out_sq > 0.0 {
                    out_sq.sqrt()
                } else {
                    inside
                }
            }
            Shape::LevelSet2d { poly } => poly.eval(x[0], x[1]),
        }
    }

    /// Gradient of φ. Undefined (tie-broken) on measure-zero ridge sets.
    pub fn grad_phi(&self, x: Point) -> Point {
        match &self.shape {
            Shape::Interval { a, b } => {
                let da = x[0] - a;
                let db = b - x[0];
                if da <= db {
                    [-1.0, 0.0, 0.0]
                } else {
                    [1.0, 0.0, 0.0]
                }
            }
            Shape::Disk { center, radius: _ } | Shape::Ball { center, radius: _ } => {
                let d = pt::sub(x, *center);
                let n = pt::norm(d);
                if n == 0.0 {
                    [1.0, 0.0, 0.0]
                } else {
                    pt::scale(d, 1.0 / n)
                }
            }
            Shape::Annulus { center, inner, outer } => {
                let d = pt::sub(x, *center);
                let r = pt::norm(d);
                let rhat = if r == 0.0 { [1.0, 0.0, 0.0] } else { pt::scale(d, 1.0 / r) };
                if r - inner <= outer - r {
                    pt::scale(rhat, -1.0)
                } else {
                    rhat
                }
            }
            Shape::Rect { lo, hi } => {
                // nearest face, ties to the smallest axis index
                let mut best_axis = 0;
                let mut best_sign = -1.0;
                let mut best = f64::MAX;
                for i in 0..self.dim {
                    let da = x[i] - lo[i];
                    let db = hi[i] - x[i];
                    if da < best {
                        best = da;
                        best_axis = i;
                        best_sign = -1.0;
                    }
                    if db < best {
                        best = db;
                        best_axis = i;
                        best_sign = 1.0;
                    }
                }
                let mut g = [0.0; 3];
                g[best_axis] = best_sign;
                g
            }
            Shape::LevelSet2d { poly } => {
                let (gx, gy) = poly.grad(x[0], x[1]);
                [gx, gy, 0.0]
            }
        }
    }

    /// Classify a point by the sign of φ against the boundary tolerance.
    pub fn contains(&self, x: Point) -> Classification {
        let v = self.phi(x);
        if v < -self.boundary_tol {
            Classification::Interior
        } else if v > self.boundary_tol {
            Classification::Exterior
        } else {
            Classification::Boundary
        }
    }

    /// Distance to Γ from an interior (or boundary) point; exact for the
    /// built-ins, via projection for generic level sets.
    pub fn distance_to_boundary(&self, x: Point) -> Result<f64> {
        if self.contains(x) == Classification::Exterior {
            return Err(LabError::Domain(format!(
                "distance_to_boundary: point {:?} is exterior",
                &x[..self.dim]
            )));
        }
        match &self.shape {
            Shape::LevelSet2d { .. } => {
                let bp = self.boundary_project(x)?;
                Ok(pt::dist(bp.position, x))
            }
            _ => Ok((-self.phi(x)).max(0.0)),
        }
    }

    /// Nearest boundary point with unit outward normal.
    pub fn boundary_project(&self, x: Point) -> Result<BoundaryPoint> {
        let pos = match &self.shape {
            Shape::Interval { a, b } => {
                let p = if x[0] - a <= b - x[0] { *a } else { *b };
                [p, 0.0, 0.0]
            }
            Shape::Disk { center, radius } | Shape::Ball { center, radius } => {
                let d = pt::sub(x, *center);
                let n = pt::norm(d);
                if n == 0.0 {
                    // center: any direction; pick the first axis
                    pt::axpy(*center, *radius, [1.0, 0.0, 0.0])
                } else {
                    pt::axpy(*center, radius / n, d)
                }
            }
            Shape::Annulus { center, inner, outer } => {
                let d = pt::sub(x, *center);
                let r = pt::norm(d);
                let rad = if r - inner <= outer - r { *inner } else { *outer };
                if r == 0.0 {
                    pt::axpy(*center, rad, [1.0, 0.0, 0.0])
                } else {
                    pt::axpy(*center, rad / r, d)
                }
            }
            Shape::Rect { lo, hi } => {
                let mut best_axis = 0;
                let mut best_val = lo[0];
                let mut best = f64::MAX;
                for i in 0..self.dim {
                    let da = x[i] - lo[i];
                    let db = hi[i] - x[i];
                    if da < best {
                        best = da;
                        best_axis = i;
                        best_val = lo[i];
                    }
                    if db < best {
                        best = db;
                        best_axis = i;
                        best_val = hi[i];
                    }
                }
                let mut p = x;
                p[best_axis] = best_val;
                for i in self.dim..3 {
                    p[i] = 0.0;
                }
                p
            }
            Shape::LevelSet2d { poly } => {
                let mut p = x;
                let mut iters = 0;
                loop {
                    let v = poly.eval(p[0], p[1]);
                    if v.abs() <= 0.1 * self.boundary_tol {
                        break;
                    }
                    let (gx, gy) = poly.grad(p[0], p[1]);
                    let g2 = gx * gx + gy * gy;
                    if g2 < 1e-30 {
                        return Err(LabError::Numeric(format!(
                            "boundary_project: vanishing gradient after {iters} iterations"
                        )));
                    }
                    p[0] -= v * gx / g2;
                    p[1] -= v * gy / g2;
                    iters += 1;
                    if iters > PROJECT_MAX_ITERS {
                        return Err(LabError::Numeric(format!(
                            "boundary_project: no convergence after {iters} iterations"
                        )));
                    }
                }
                p
            }
        };
        let g = self.grad_phi(pos);
        let gn = pt::norm(g);
        if gn == 0.0 {
            return Err(LabError::Numeric("boundary_project: zero normal".into()));
        }
        let normal = pt::scale(g, 1.0 / gn);
        let curvature = self.mean_curvature_at(pos).value;
        Ok(BoundaryPoint {
            position: pos,
            normal,
            weight: 0.0,
            curvature,
        })
    }

    /// Mean curvature of Γ at a boundary position, positive on convex
    /// boundaries (circle of radius R: 1/R). For d = 1 the value is 0 and the
    /// one-dimensional flag is set.
    pub fn mean_curvature_at(&self, r: Point) -> CurvatureSample {
        let value = match &self.shape {
            Shape::Interval { .. } => {
                return CurvatureSample {
                    value: 0.0,
                    one_dimensional: true,
                }
            }
            Shape::Disk { radius, .. } | Shape::Ball { radius, .. } => 1.0 / radius,
            Shape::Annulus { center, inner, outer } => {
                let rr = pt::dist(r, *center);
                if rr - inner <= outer - rr {
                    -1.0 / inner
                } else {
                    1.0 / outer
                }
            }
            Shape::Rect { .. } => 0.0,
            Shape::LevelSet2d { poly } => {
                let (gx, gy) = poly.grad(r[0], r[1]);
                let (xx, xy, yy) = poly.hess(r[0], r[1]);
                let g2 = gx * gx + gy * gy;
                (xx * gy * gy - 2.0 * xy * gx * gy + yy * gx * gx) / g2.powf(1.5)
            }
        };
        CurvatureSample {
            value,
            one_dimensional: false,
        }
    }

    /// Collar level function h ∈ [0, 1] and its gradient.
    ///
    /// h is the boundary distance scaled by the collar width δ*, clipped at 1
    /// with a C1 transition band of total width δ*/10 around the clip, and 0
    /// outside the closure of U. In the collar ∇h = −n/δ*.
    pub fn level_h(&self, x: Point) -> (f64, Point) {
        match self.contains(x) {
            Classification::Exterior => return (0.0, [0.0; 3]),
            Classification::Boundary => {
                // one-sided value on Γ itself
                let n = self
                    .boundary_project(x)
                    .expect("projection defined on the boundary")
                    .normal;
                return (0.0, pt::scale(n, -1.0 / self.collar));
            }
            Classification::Interior => {}
        }
        let dist = self
            .distance_to_boundary(x)
            .expect("interior point has a boundary distance");
        let s = dist / self.collar;
        let w = 0.05; // half-band in s units; full band = delta*/10
        let (h, dh_ds) = if s <= 1.0 - w {
            (s, 1.0)
        } else if s >= 1.0 + w {
            (1.0, 0.0)
        } else {
            let e = s - (1.0 - w);
            (s - e * e / (4.0 * w), 1.0 - e / (2.0 * w))
        };
        if dh_ds == 0.0 {
            return (h, [0.0; 3]);
        }
        let n = self
            .boundary_project(x)
            .expect("projection defined in the collar")
            .normal;
        (h, pt::scale(n, -dh_ds / self.collar))
    }

    /// Inward deformation Ψ_τ(r) = r − τ n(r), for 0 ≤ τ ≤ δ*.
    pub fn deformation_psi(&self, r: &BoundaryPoint, tau: f64) -> Result<Point> {
        if !(0.0..=self.collar).contains(&tau) {
            return Err(LabError::Argument(format!(
                "deformation_psi: tau = {tau} outside [0, {}]",
                self.collar
            )));
        }
        Ok(pt::axpy(r.position, -tau, r.normal))
    }

    /// Surface Jacobian of Ψ_τ: the product of (1 − τ κ_i) over the principal
    /// curvatures at r. Equals 1 at τ = 0 and on flat faces.
    pub fn jacobian_psi(&self, r: &BoundaryPoint, tau: f64) -> f64 {
        match &self.shape {
            Shape::Interval { .. } | Shape::Rect { .. } => 1.0,
            Shape::Disk { radius, .. } => 1.0 - tau / radius,
            Shape::Ball { radius, .. } => {
                let f = 1.0 - tau / radius;
                f * f
            }
            Shape::Annulus { .. } | Shape::LevelSet2d { .. } => {
                1.0 - tau * self.mean_curvature_at(r.position).value
            }
        }
    }

    /// Boundary quadrature nodes with weights summing to |Γ|.
    ///
    /// Exact total measure for the built-ins; first-order for marching-square
    /// level sets. Nodes on box faces are strictly inside the faces.
    pub fn boundary_quadrature(&self, resolution: usize) -> Result<Vec<BoundaryPoint>> {
        if resolution < 2 {
            return Err(LabError::Argument(
                "boundary_quadrature: resolution must be >= 2".into(),
            ));
        }
        let mut nodes = Vec::new();
        match &self.shape {
            Shape::Interval { a, b } => {
                for (p, n) in [(*a, -1.0), (*b, 1.0)] {
                    nodes.push(BoundaryPoint {
                        position: [p, 0.0, 0.0],
                        normal: [n, 0.0, 0.0],
                        weight: 1.0,
                        curvature: 0.0,
                    });
                }
            }
            Shape::Disk { center, radius } => {
                self.circle_nodes(*center, *radius, resolution, 1.0, &mut nodes);
            }
            Shape::Annulus { center, inner, outer } => {
                let total = inner + outer;
                let n_out = ((resolution as f64 * outer / total).round() as usize).max(2);
                let n_in = (resolution.saturating_sub(n_out)).max(2);
                self.circle_nodes(*center, *outer, n_out, 1.0, &mut nodes);
                self.circle_nodes(*center, *inner, n_in, -1.0, &mut nodes);
            }
            Shape::Rect { lo, hi } => {
                if self.dim == 2 {
                    self.rect2_nodes(*lo, *hi, resolution, &mut nodes);
                } else {
                    self.rect3_nodes(*lo, *hi, resolution, &mut nodes);
                }
            }
            Shape::Ball { center, radius } => {
                // Fibonacci sphere lattice: equal weights, exact total area
                let n = resolution;
                let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
                let w = 4.0 * std::f64::consts::PI * radius * radius / n as f64;
                for k in 0..n {
                    let z = 1.0 - 2.0 * (k as f64 + 0.5) / n as f64;
                    let rho = (1.0 - z * z).sqrt();
                    let th = golden * k as f64;
                    let dir = [rho * th.cos(), rho * th.sin(), z];
                    nodes.push(BoundaryPoint {
                        position: pt::axpy(*center, *radius, dir),
                        normal: dir,
                        weight: w,
                        curvature: 1.0 / radius,
                    });
                }
            }
            Shape::LevelSet2d { .. } => {
                self.marching_nodes(resolution, &mut nodes)?;
            }
        }
        Ok(nodes)
    }

    fn circle_nodes(&self, center: Point, radius: f64, n: usize, orient: f64, out: &mut Vec<BoundaryPoint>) {
        let w = 2.0 * std::f64::consts::PI * radius / n as f64;
        for k in 0..n {
            let th = 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / n as f64;
            let dir = [th.cos(), th.sin(), 0.0];
            out.push(BoundaryPoint {
                position: pt::axpy(center, radius, dir),
                normal: pt::scale(dir, orient),
                weight: w,
                curvature: orient / radius,
            });
        }
    }

    fn rect2_nodes(&self, lo: Point, hi: Point, resolution: usize, out: &mut Vec<BoundaryPoint>) {
        let lens = [hi[0] - lo[0], hi[1] - lo[1]];
        let perimeter = 2.0 * (lens[0] + lens[1]);
        // faces: (axis held fixed, at lo or hi)
        for axis in 0..2 {
            let t_axis = 1 - axis;
            let len = lens[t_axis];
            let n_f = ((resolution as f64 * len / perimeter).round() as usize).max(1);
            for (val, sign) in [(lo[axis], -1.0), (hi[axis], 1.0)] {
                for k in 0..n_f {
                    let t = lo[t_axis] + len * (k as f64 + 0.5) / n_f as f64;
                    let mut p = [0.0; 3];
                    p[axis] = val;
                    p[t_axis] = t;
                    let mut nrm = [0.0; 3];
                    nrm[axis] = sign;
                    out.push(BoundaryPoint {
                        position: p,
                        normal: nrm,
                        weight: len / n_f as f64,
                        curvature: 0.0,
                    });
                }
            }
        }
    }

    fn rect3_nodes(&self, lo: Point, hi: Point, resolution: usize, out: &mut Vec<BoundaryPoint>) {
        let lens = [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]];
        let total: f64 = 2.0 * (lens[0] * lens[1] + lens[1] * lens[2] + lens[0] * lens[2]);
        for axis in 0..3 {
            let (u, v) = match axis {
                0 => (1, 2),
                1 => (0, 2),
                _ => (0, 1),
            };
            let area = lens[u] * lens[v];
            let n_f = ((resolution as f64 * area / total).round() as usize).max(1);
            let mu = ((n_f as f64 * lens[u] / lens[v]).sqrt().round() as usize).max(1);
            let mv = (n_f as f64 / mu as f64).ceil() as usize;
            for (val, sign) in [(lo[axis], -1.0), (hi[axis], 1.0)] {
                for i in 0..mu {
                    for j in 0..mv {
                        let mut p = [0.0; 3];
                        p[axis] = val;
                        p[u] = lo[u] + lens[u] * (i as f64 + 0.5) / mu as f64;
                        p[v] = lo[v] + lens[v] * (j as f64 + 0.5) / mv as f64;
                        let mut nrm = [0.0; 3];
                        nrm[axis] = sign;
                        out.push(BoundaryPoint {
                            position: p,
                            normal: nrm,
                            weight: area / (mu * mv) as f64,
                            curvature: 0.0,
                        });
                    }
                }
            }
        }
    }

    /// Marching squares over the bounding box; one node per crossed cell edge
    /// segment, projected back onto φ = 0.
    fn marching_nodes(&self, resolution: usize, out: &mut Vec<BoundaryPoint>) -> Result<()> {
        let (lo, hi) = (self.bbox_lo, self.bbox_hi);
        let nx = resolution;
        let hx = (hi[0] - lo[0]) / nx as f64;
        let hy = (hi[1] - lo[1]) / nx as f64;
        let val = |i: usize, j: usize| self.phi([lo[0] + i as f64 * hx, lo[1] + j as f64 * hy, 0.0]);
        let cross = |p: Point, q: Point, vp: f64, vq: f64| -> Point {
            let t = vp / (vp - vq);
            pt::lerp(p, q, t)
        };
        for i in 0..nx {
            for j in 0..nx {
                let p00 = [lo[0] + i as f64 * hx, lo[1] + j as f64 * hy, 0.0];
                let p10 = [p00[0] + hx, p00[1], 0.0];
                let p01 = [p00[0], p00[1] + hy, 0.0];
                let p11 = [p00[0] + hx, p00[1] + hy, 0.0];
                let (v00, v10, v01, v11) = (val(i, j), val(i + 1, j), val(i, j + 1), val(i + 1, j + 1));
                let mut pts: Vec<Point> = Vec::with_capacity(2);
                for (pa, pb, va, vb) in [
                    (p00, p10, v00, v10),
                    (p10, p11, v10, v11),
                    (p11, p01, v11, v01),
                    (p01, p00, v01, v00),
                ] {
                    if (va < 0.0) != (vb < 0.0) {
                        pts.push(cross(pa, pb, va, vb));
                    }
                }
                if pts.len() == 2 {
                    let seg = pt::dist(pts[0], pts[1]);
                    if seg == 0.0 {
                        continue;
                    }
                    let mid = pt::lerp(pts[0], pts[1], 0.5);
                    let bp = self.boundary_project(mid)?;
                    out.push(BoundaryPoint {
                        weight: seg,
                        ..bp
                    });
                }
                // ambiguous saddle cells (4 crossings) are skipped; they
                // vanish under refinement
            }
        }
        if out.is_empty() {
            return Err(LabError::Unsupported(
                "marching quadrature found no boundary in the bounding box".into(),
            ));
        }
        Ok(())
    }

    /// Interior quadrature: cell-centered grid on the bounding box clipped by
    /// φ < 0; weights are cell volumes and sum to |U| + O(1/resolution).
    pub fn interior_quadrature(&self, resolution: usize) -> Vec<(Point, f64)> {
        assert!(resolution >= 2, "interior_quadrature: resolution must be >= 2");
        let (lo, hi) = (self.bbox_lo, self.bbox_hi);
        let mut hs = [0.0; 3];
        let mut counts = [1usize; 3];
        for i in 0..self.dim {
            counts[i] = resolution;
            hs[i] = (hi[i] - lo[i]) / resolution as f64;
        }
        let cell = hs[..self.dim].iter().product::<f64>();
        let mut nodes = Vec::new();
        for ix in 0..counts[0] {
            for iy in 0..counts[1] {
                for iz in 0..counts[2] {
                    let mut p = [0.0; 3];
                    let idx = [ix, iy, iz];
                    for k in 0..self.dim {
                        p[k] = lo[k] + hs[k] * (idx[k] as f64 + 0.5);
                    }
                    if self.contains(p) == Classification::Interior {
                        nodes.push((p, cell));
                    }
                }
            }
        }
        nodes
    }
}
