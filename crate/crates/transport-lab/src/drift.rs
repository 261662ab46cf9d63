//! Time-dependent drift fields b(t, x) with analytic divergence, influx
//! classification on the boundary, mollification by a compactly supported
//! bump kernel, and the shifted mollification that stays defined up to the
//! boundary by pushing the stencil center inward along ∇h.
//!
//! Fields come from a named registry (constant, rotation, shear, radial,
//! piecewise-constant across a hyperplane, radial-unit) rather than an
//! expression language; each entry registers b and div b in closed form and
//! declares its smoothness and any jump set.

use std::sync::Arc;

use crate::geometry::{BoundaryPoint, Classification, Domain};
use crate::pt;
use crate::{LabError, Point, Result};

/// Scalar time modulation applied to a spatial field.
#[derive(Debug, Clone)]
pub enum TimeModulation {
    None,
    /// cos(omega t)
    Cosine { omega: f64 },
    /// 1/(t_star − t); blows up at the horizon, used by hypothesis reports
    InverseTime { t_star: f64 },
    /// 1 + amplitude · cos(omega t), stays positive for |amplitude| < 1
    OffsetCosine { amplitude: f64, omega: f64 },
}

impl TimeModulation {
    pub fn factor(&self, t: f64) -> f64 {
        match self {
            TimeModulation::None => 1.0,
            TimeModulation::Cosine { omega } => (omega * t).cos(),
            TimeModulation::InverseTime { t_star } => 1.0 / (t_star - t),
            TimeModulation::OffsetCosine { amplitude, omega } => {
                1.0 + amplitude * (omega * t).cos()
            }
        }
    }

    /// Antiderivative of the factor from 0 to t (used by flow oracles).
    pub fn integral(&self, t: f64) -> f64 {
        match self {
            TimeModulation::None => t,
            TimeModulation::Cosine { omega } => (omega * t).sin() / omega,
            TimeModulation::InverseTime { t_star } => (t_star / (t_star - t)).ln(),
            TimeModulation::OffsetCosine { amplitude, omega } => {
                t + amplitude * (omega * t).sin() / omega
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Smoothness {
    Smooth,
    PiecewiseSmooth,
}

#[derive(Debug, Clone)]
enum FieldKind {
    Constant { velocity: Point },
    /// omega (−(x2−c2), x1−c1) on the first two coordinates
    Rotation { center: Point, omega: f64 },
    /// (rate · x2, 0, 0)
    Shear { rate: f64 },
    /// rate (x − c); div = rate · d
    Radial { center: Point, rate: f64 },
    /// `left` where x1 < threshold, `right` where x1 ≥ threshold
    PiecewiseX1 { threshold: f64, left: Point, right: Point },
    /// (x − c)/|x − c|; div = (d−1)/|x − c|, unbounded at the center
    RadialUnit { center: Point },
    Mollified { base: Box<FieldKind>, kernel: MollifierKernel },
}

impl FieldKind {
    fn eval_spatial(&self, dim: usize, x: Point) -> Point {
        match self {
            FieldKind::Constant { velocity } => *velocity,
            FieldKind::Rotation { center, omega } => [
                -omega * (x[1] - center[1]),
                omega * (x[0] - center[0]),
                0.0,
            ],
            FieldKind::Shear { rate } => [rate * x[1], 0.0, 0.0],
            FieldKind::Radial { center, rate } => pt::scale(pt::sub(x, *center), *rate),
            FieldKind::PiecewiseX1 { threshold, left, right } => {
                if x[0] < *threshold {
                    *left
                } else {
                    *right
                }
            }
            FieldKind::RadialUnit { center } => {
                let d = pt::sub(x, *center);
                let n = pt::norm(d);
                if n == 0.0 {
                    [0.0; 3]
                } else {
                    pt::scale(d, 1.0 / n)
                }
            }
            FieldKind::Mollified { base, kernel } => {
                let mut v = [0.0; 3];
                for (z, w) in kernel.lattice() {
                    let b = base.eval_spatial(dim, pt::sub(x, *z));
                    v = pt::axpy(v, *w, b);
                }
                v
            }
        }
    }

    fn div_spatial(&self, dim: usize, x: Point) -> f64 {
        match self {
            FieldKind::Constant { .. }
            | FieldKind::Rotation { .. }
            | FieldKind::Shear { .. }
            | FieldKind::PiecewiseX1 { .. } => 0.0,
            FieldKind::Radial { rate, .. } => rate * dim as f64,
            FieldKind::RadialUnit { center } => {
                let n = pt::dist(x, *center);
                if n == 0.0 {
                    f64::INFINITY
                } else {
                    (dim as f64 - 1.0) / n
                }
            }
            FieldKind::Mollified { base, kernel } => {
                let mut v = 0.0;
                for (z, w) in kernel.lattice() {
                    v += w * base.div_spatial(dim, pt::sub(x, *z));
                }
                v
            }
        }
    }
}

/// A registered drift field with analytic divergence.
#[derive(Debug, Clone)]
pub struct DriftField {
    dim: usize,
    kind: FieldKind,
    modulation: TimeModulation,
}

impl DriftField {
    pub fn constant(dim: usize, velocity: &[f64]) -> Self {
        Self::new(dim, FieldKind::Constant { velocity: pt::from_slice(velocity) })
    }

    pub fn rotation(center: [f64; 2], omega: f64) -> Self {
        Self::new(2, FieldKind::Rotation { center: [center[0], center[1], 0.0], omega })
    }

    pub fn shear(dim: usize, rate: f64) -> Self {
        assert!(dim >= 2, "shear needs at least two coordinates");
        Self::new(dim, FieldKind::Shear { rate })
    }

    pub fn radial(dim: usize, center: &[f64], rate: f64) -> Self {
        Self::new(dim, FieldKind::Radial { center: pt::from_slice(center), rate })
    }

    pub fn piecewise_x1(dim: usize, threshold: f64, left: &[f64], right: &[f64]) -> Self {
        Self::new(
            dim,
            FieldKind::PiecewiseX1 {
                threshold,
                left: pt::from_slice(left),
                right: pt::from_slice(right),
            },
        )
    }

    pub fn radial_unit(dim: usize, center: &[f64]) -> Self {
        Self::new(dim, FieldKind::RadialUnit { center: pt::from_slice(center) })
    }

    fn new(dim: usize, kind: FieldKind) -> Self {
        Self { dim, kind, modulation: TimeModulation::None }
    }

    pub fn with_modulation(mut self, modulation: TimeModulation) -> Self {
        self.modulation = modulation;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn modulation(&self) -> &TimeModulation {
        &self.modulation
    }

    pub fn eval(&self, t: f64, x: Point) -> Point {
        pt::scale(self.kind.eval_spatial(self.dim, x), self.modulation.factor(t))
    }

    pub fn divergence(&self, t: f64, x: Point) -> f64 {
        self.kind.div_spatial(self.dim, x) * self.modulation.factor(t)
    }

    pub fn smoothness(&self) -> Smoothness {
        match &self.kind {
            FieldKind::PiecewiseX1 { .. } | FieldKind::RadialUnit { .. } => {
                Smoothness::PiecewiseSmooth
            }
            _ => Smoothness::Smooth,
        }
    }

    /// Human-readable description of the jump set, if any.
    pub fn discontinuity(&self) -> Option<String> {
        match &self.kind {
            FieldKind::PiecewiseX1 { threshold, .. } => {
                Some(format!("hyperplane x1 = {threshold}"))
            }
            FieldKind::RadialUnit { center } => Some(format!("point {:?}", &center[..self.dim])),
            _ => None,
        }
    }

    /// The divergence is unbounded somewhere (radial-unit at its center).
    pub fn unbounded_divergence(&self) -> bool {
        matches!(&self.kind, FieldKind::RadialUnit { .. })
    }

    /// Smooth field b ∗ ρ_ε via the kernel's cached lattice. Constants and
    /// affine fields are reproduced to rounding because the lattice is
    /// symmetric with unit mass.
    pub fn mollify(&self, eps: f64) -> Self {
        Self {
            dim: self.dim,
            kind: FieldKind::Mollified {
                base: Box::new(self.kind.clone()),
                kernel: MollifierKernel::new(eps, self.dim),
            },
            modulation: self.modulation.clone(),
        }
    }

    /// Flux data (b·n) at a boundary point, split into positive and negative
    /// parts; `influx` iff (b·n) < 0.
    pub fn flux_decomposition(&self, t: f64, r: &BoundaryPoint) -> FluxDecomposition {
        let flux = pt::dot(self.eval(t, r.position), r.normal);
        FluxDecomposition {
            flux,
            positive_part: flux.max(0.0),
            negative_part: (-flux).max(0.0),
            influx: flux < 0.0,
        }
    }
}

/// (b·n) and its Jordan parts at one space-time boundary point.
#[derive(Debug, Clone, Copy)]
pub struct FluxDecomposition {
    pub flux: f64,
    pub positive_part: f64,
    pub negative_part: f64,
    pub influx: bool,
}

/// Compactly supported bump kernel exp(−1/(1−|z/ε|²)) normalized to unit
/// mass, with a cached midpoint lattice of spacing ε/8 for convolutions.
///
/// The discrete kernel is the renormalized weight set (Σ w = 1 exactly), so
/// convolution preserves constants to rounding; the gradient lattice shares
/// the same normalization so that function/gradient quadrature pairs are
/// mutually consistent at float level.
#[derive(Debug, Clone)]
pub struct MollifierKernel {
    eps: f64,
    dim: usize,
    /// normalization so that ∫ ρ_ε = 1 analytically
    norm: f64,
    /// lattice cell volume
    cell: f64,
    /// midpoint nodes and weights, renormalized to Σ w = 1
    lattice: Vec<(Point, f64)>,
    /// matching kernel-gradient weights ∇ρ(z_j) / Σ_l ρ(z_l)
    gradient_lattice: Vec<(Point, Point)>,
}

fn bump(s2: f64) -> f64 {
    if s2 >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - s2)).exp()
    }
}

/// ∫_{|u|<1} bump(|u|²) du in dimension d, by radial quadrature.
fn bump_mass(dim: usize) -> f64 {
    let surface = match dim {
        1 => 2.0,
        2 => 2.0 * std::f64::consts::PI,
        _ => 4.0 * std::f64::consts::PI,
    };
    let n = 20_000;
    let h = 1.0 / n as f64;
    let mut acc = 0.0;
    for i in 0..n {
        let r = (i as f64 + 0.5) * h;
        acc += bump(r * r) * r.powi(dim as i32 - 1) * h;
    }
    surface * acc
}

impl MollifierKernel {
    pub fn new(eps: f64, dim: usize) -> Self {
        Self::with_spacing(eps, dim, eps / 8.0)
    }

    /// Custom lattice spacing (tests use a finer one to check that results
    /// are lattice-independent).
    pub fn with_spacing(eps: f64, dim: usize, spacing: f64) -> Self {
        assert!(eps > 0.0, "mollifier radius must be positive");
        let norm = 1.0 / (bump_mass(dim) * eps.powi(dim as i32));
        let per_axis = ((2.0 * eps / spacing).round() as i64).max(2);
        let h = 2.0 * eps / per_axis as f64;
        let coord = |i: i64| -eps + (i as f64 + 0.5) * h;
        let counts: [i64; 3] = match dim {
            1 => [per_axis, 1, 1],
            2 => [per_axis, per_axis, 1],
            _ => [per_axis, per_axis, per_axis],
        };
        let mut lattice = Vec::new();
        let mut raw_total = 0.0;
        for ix in 0..counts[0] {
            for iy in 0..counts[1] {
                for iz in 0..counts[2] {
                    let mut z = [0.0; 3];
                    z[0] = coord(ix);
                    if dim >= 2 {
                        z[1] = coord(iy);
                    }
                    if dim >= 3 {
                        z[2] = coord(iz);
                    }
                    let s2 = pt::dot(z, z) / (eps * eps);
                    let w = bump(s2);
                    if w > 0.0 {
                        lattice.push((z, w));
                        raw_total += w;
                    }
                }
            }
        }
        let mut gradient_lattice = Vec::with_capacity(lattice.len());
        for (z, _) in &lattice {
            let s2 = pt::dot(*z, *z) / (eps * eps);
            let g = 1.0 - s2;
            // d/dz of bump(|z/eps|^2) = bump * (-2 z / eps^2) / (1 - s2)^2
            let factor = (-1.0 / g).exp() * (-2.0 / (eps * eps)) / (g * g) / raw_total;
            gradient_lattice.push((*z, pt::scale(*z, factor)));
        }
        // enforce the exact first moment Σ z ⊗ γ = −I (the axes agree by
        // symmetry), so linear fields differentiate exactly through the
        // discrete kernel pair
        let moment: f64 = -gradient_lattice.iter().map(|(z, g)| z[0] * g[0]).sum::<f64>();
        for (_, g) in &mut gradient_lattice {
            *g = pt::scale(*g, 1.0 / moment);
        }
        for (_, w) in &mut lattice {
            *w /= raw_total;
        }
        Self {
            eps,
            dim,
            norm,
            cell: h.powi(dim as i32),
            lattice,
            gradient_lattice,
        }
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// ρ_ε(z)
    pub fn density(&self, z: Point) -> f64 {
        self.norm * bump(pt::dot(z, z) / (self.eps * self.eps))
    }

    /// ∇ρ_ε(z)
    pub fn density_grad(&self, z: Point) -> Point {
        let s2 = pt::dot(z, z) / (self.eps * self.eps);
        if s2 >= 1.0 {
            return [0.0; 3];
        }
        let g = 1.0 - s2;
        let factor = self.norm * (-1.0 / g).exp() * (-2.0 / (self.eps * self.eps)) / (g * g);
        pt::scale(z, factor)
    }

    /// Offsets and unit-mass weights: Σ w f(x − z) ≈ (f ∗ ρ_ε)(x).
    pub fn lattice(&self) -> &[(Point, f64)] {
        &self.lattice
    }

    /// Offsets and gradient weights γ: Σ f(x − z) γ ≈ (f ∗ ∇ρ_ε)(x), with
    /// the same normalization as [`Self::lattice`].
    pub fn gradient_lattice(&self) -> &[(Point, Point)] {
        &self.gradient_lattice
    }

    /// Cell volume of the lattice (for raw-density quadratures).
    pub fn cell_volume(&self) -> f64 {
        self.cell
    }

    /// Mass of the discrete kernel (Σ w; exactly 1 by normalization).
    pub fn quadrature_mass(&self) -> f64 {
        self.lattice.iter().map(|(_, w)| w).sum()
    }

    /// Raw midpoint-rule mass of the analytic density over the lattice,
    /// before normalization; its gap to 1 is the quadrature defect absorbed
    /// by the weight renormalization (about 2e-4 at spacing ε/8).
    pub fn raw_quadrature_mass(&self) -> f64 {
        self.lattice
            .iter()
            .map(|(z, _)| self.density(*z) * self.cell)
            .sum()
    }
}

/// Scalar field on U mollified with the stencil center shifted inward along
/// ∇h, so values are defined up to and on Γ.
#[derive(Clone)]
pub struct ShiftedMollification {
    sample: Arc<dyn Fn(Point) -> f64 + Send + Sync>,
    domain: Domain,
    kernel: MollifierKernel,
    lambda: f64,
}

impl ShiftedMollification {
    /// Build with an explicit λ, verifying stencil containment on a boundary
    /// and collar sample.
    pub fn new(
        sample: Arc<dyn Fn(Point) -> f64 + Send + Sync>,
        domain: &Domain,
        eps: f64,
        lambda: f64,
    ) -> Result<Self> {
        let m = Self {
            sample,
            domain: domain.clone(),
            kernel: MollifierKernel::new(eps, domain.dim()),
            lambda,
        };
        m.check_containment()?;
        Ok(m)
    }

    /// Build with the smallest λ in {1, 2, 4} passing the containment check.
    pub fn with_default_lambda(
        sample: Arc<dyn Fn(Point) -> f64 + Send + Sync>,
        domain: &Domain,
        eps: f64,
    ) -> Result<Self> {
        let mut last = None;
        for lambda in [1.0, 2.0, 4.0] {
            match Self::new(sample.clone(), domain, eps, lambda) {
                Ok(m) => return Ok(m),
                Err(e) => last = Some(e),
            }
        }
        Err(last.unwrap_or_else(|| LabError::Geometry("no admissible lambda".into())))
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn eps(&self) -> f64 {
        self.kernel.eps()
    }

    pub fn kernel(&self) -> &MollifierKernel {
        &self.kernel
    }

    /// The shifted stencil center y + λ ε ∇h(y).
    pub fn shifted_center(&self, y: Point) -> Point {
        let (_, grad_h) = self.domain.level_h(y);
        pt::axpy(y, self.lambda * self.kernel.eps(), grad_h)
    }

    fn check_containment(&self) -> Result<()> {
        let nodes = self.domain.boundary_quadrature(16)?;
        let eps = self.kernel.eps();
        for bp in &nodes {
            self.containment_at(bp.position)?;
            let tau = (0.5 * eps).min(self.domain.collar_width());
            self.containment_at(self.domain.deformation_psi(bp, tau)?)?;
        }
        Ok(())
    }

    fn containment_at(&self, y: Point) -> Result<()> {
        let c = self.shifted_center(y);
        let eps = self.kernel.eps();
        if self.domain.contains(c) != Classification::Interior {
            return Err(LabError::Geometry(format!(
                "shifted stencil center {:?} escapes the domain (lambda = {} too small)",
                &c[..self.domain.dim()],
                self.lambda
            )));
        }
        let dist = self.domain.distance_to_boundary(c)?;
        if dist + self.domain.boundary_tol() < eps {
            return Err(LabError::Geometry(format!(
                "stencil ball of radius {eps} around the shifted center leaves the domain \
                 (depth {dist}, lambda = {})",
                self.lambda
            )));
        }
        Ok(())
    }

    /// Evaluate the shifted mollification at y in the closure of U.
    pub fn eval(&self, y: Point) -> Result<f64> {
        self.containment_at(y)?;
        let c = self.shifted_center(y);
        let mut acc = 0.0;
        for (z, w) in self.kernel.lattice() {
            acc += w * (self.sample)(pt::sub(c, *z));
        }
        Ok(acc)
    }
}

/// Envelopes α(t) ≥ sup|b| and γ(t) ≥ (div b)⁺ on a midpoint time grid.
#[derive(Debug, Clone)]
pub struct UniquenessBounds {
    pub times: Vec<f64>,
    pub alpha: Vec<f64>,
    pub gamma: Vec<f64>,
    /// both envelopes finite at every sampled time
    pub satisfied: bool,
    /// envelope grows by more than 50x over its median: likely blow-up at
    /// the horizon, integrability is marginal
    pub alpha_marginal: bool,
    pub gamma_marginal: bool,
}

fn marginal(envelope: &[f64]) -> bool {
    let mut sorted = envelope.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let max = *sorted.last().unwrap();
    median > 0.0 && max / median > 50.0
}

/// Sampled sup-envelopes for |b(t,x)| ≤ α(t) and div b(t,x) ≤ γ(t) over
/// interior quadrature nodes and a midpoint time grid.
pub fn uniqueness_bounds(
    field: &DriftField,
    domain: &Domain,
    horizon: f64,
    resolution: usize,
) -> UniquenessBounds {
    let nodes = domain.interior_quadrature(resolution.max(2));
    let n_t = resolution.max(2);
    let mut times = Vec::with_capacity(n_t);
    let mut alpha = Vec::with_capacity(n_t);
    let mut gamma = Vec::with_capacity(n_t);
    for i in 0..n_t {
        let t = (i as f64 + 0.5) * horizon / n_t as f64;
        let mut a: f64 = 0.0;
        let mut g: f64 = 0.0;
        for (x, _) in &nodes {
            a = a.max(pt::norm(field.eval(t, *x)));
            g = g.max(field.divergence(t, *x).max(0.0));
        }
        times.push(t);
        alpha.push(a);
        gamma.push(g);
    }
    let satisfied = alpha.iter().chain(gamma.iter()).all(|v| v.is_finite());
    UniquenessBounds {
        alpha_marginal: marginal(&alpha),
        gamma_marginal: marginal(&gamma),
        times,
        alpha,
        gamma,
        satisfied,
    }
}
