//! Boundary values of the pathwise solution: estimation by the inward
//! deformation limit u(t, Ψ_τ(r)) with first-order Richardson extrapolation
//! in τ, the boundedness check γu ∈ [−M, M], estimator-independence
//! (stability) across deformation schedules, the β-renormalized trace weak
//! identity, and the commutators
//!
//! ```text
//! R_ε(b, u) = (b·∇)(ρ_ε ∗ₙ u) − ρ_ε ∗ₙ ((b·∇) u),
//! P_ε(u)    = ∇(ρ_ε ∗ₙ u)     − ρ_ε ∗ₙ (∇u),
//! ```
//!
//! where ∗ₙ is the shifted mollification. The convolved-gradient terms are
//! discretized with the kernel-gradient lattice and the analytic chain-rule
//! factor of the stencil shift (computed by differencing ∇h); the (b·∇)u
//! factors of rough fields are taken distributionally by moving the
//! derivative onto the kernel, which is valid because the shifted stencil
//! stays interior. With a constant drift and the shift inactive the two
//! discretizations coincide term by term, so R_ε vanishes at rounding level.

use std::sync::Arc;

use rayon::prelude::*;

use crate::drift::{DriftField, ShiftedMollification};
use crate::geometry::{BoundaryPoint, Classification, Domain};
use crate::numeric::{mean_and_se, richardson_first_order};
use crate::pt;
use crate::solver::TransportProblem;
use crate::stochastic::BrownianPath;
use crate::testfn::TestFunction;
use crate::weakform::{trace_renorm_residual, Beta, WeakFormParams, WeakFormReport};
use crate::{LabError, Point, Result};

/// Where boundary values of u come from in boundary-inclusive identities.
#[derive(Clone)]
pub enum TraceSource {
    /// deformation estimate over a decreasing depth schedule, Richardson
    /// extrapolated per path
    Deformation { taus: Vec<f64> },
    /// closed-form boundary values (noise-off oracles, constant data)
    Known(Arc<dyn Fn(f64, Point) -> f64 + Send + Sync>),
}

impl TraceSource {
    pub fn deformation(taus: Vec<f64>) -> Self {
        TraceSource::Deformation { taus }
    }

    pub fn known(f: impl Fn(f64, Point) -> f64 + Send + Sync + 'static) -> Self {
        TraceSource::Known(Arc::new(f))
    }

    fn check_taus(taus: &[f64], domain: &Domain) -> Result<()> {
        if taus.is_empty() {
            return Err(LabError::Argument("empty deformation schedule".into()));
        }
        if taus.windows(2).any(|w| w[1] >= w[0]) {
            return Err(LabError::Argument(
                "deformation schedule must be strictly decreasing".into(),
            ));
        }
        if taus[0] > domain.collar_width() {
            return Err(LabError::Argument(format!(
                "deformation depth {} exceeds the collar width {}",
                taus[0],
                domain.collar_width()
            )));
        }
        Ok(())
    }

    /// γu estimate at (t, r) along one path. At t = 0 this is the boundary
    /// limit of the initial datum.
    pub(crate) fn path_value(
        &self,
        problem: &TransportProblem,
        path: &BrownianPath,
        t: f64,
        node: &BoundaryPoint,
    ) -> Result<f64> {
        if t == 0.0 {
            return Ok(problem.u0.eval(node.position));
        }
        match self {
            TraceSource::Known(f) => Ok(f(t, node.position)),
            TraceSource::Deformation { taus } => {
                Self::check_taus(taus, &problem.domain)?;
                let mut samples = Vec::with_capacity(taus.len());
                for &tau in taus {
                    let x = problem.domain.deformation_psi(node, tau)?;
                    samples.push((tau, problem.evaluate_pathwise(path, t, x)?));
                }
                // the trace is a-priori bounded by the data bound, so the
                // Richardson limit is projected back onto the admissible
                // range (a linear trend through in-range samples can
                // overshoot by O(tau) near the boundary)
                let m = problem.bound();
                Ok(richardson_first_order(&samples).0.clamp(-m, m))
            }
        }
    }
}

/// Per-path deformation values at one (time, node) cell.
#[derive(Debug, Clone)]
pub struct TracePathValue {
    /// raw values u(t, Ψ_τ(r)) per depth, each within [−M, M]
    pub raw: Vec<f64>,
    /// Richardson-extrapolated boundary value
    pub value: f64,
    /// spread between the extrapolations of the last two depth pairs
    pub residual: f64,
}

/// Trace estimate at one boundary node and time across the path ensemble.
#[derive(Debug, Clone)]
pub struct TraceSample {
    pub t: f64,
    pub node: BoundaryPoint,
    pub taus: Vec<f64>,
    pub per_path: Vec<TracePathValue>,
    pub mean: f64,
    pub se: f64,
}

/// Deformation-limit trace estimates on a set of boundary nodes and times.
/// Samples are ordered time-major.
pub fn trace_by_deformation(
    problem: &TransportProblem,
    times: &[f64],
    nodes: &[BoundaryPoint],
    taus: &[f64],
    n_paths: usize,
    dt: f64,
    seed: u64,
) -> Result<Vec<TraceSample>> {
    TraceSource::check_taus(taus, &problem.domain)?;
    if n_paths == 0 {
        return Err(LabError::Argument("n_paths must be positive".into()));
    }
    // per path, per (time, node): the tau profile
    let per_path: Vec<Vec<Vec<f64>>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| -> Result<Vec<Vec<f64>>> {
            let path = problem.driving_path(seed, i, dt)?;
            let mut cells = Vec::with_capacity(times.len() * nodes.len());
            for &t in times {
                for node in nodes {
                    let mut raw = Vec::with_capacity(taus.len());
                    for &tau in taus {
                        let x = problem.domain.deformation_psi(node, tau)?;
                        raw.push(if t == 0.0 {
                            problem.u0.eval(x)
                        } else {
                            problem.evaluate_pathwise(&path, t, x)?
                        });
                    }
                    cells.push(raw);
                }
            }
            Ok(cells)
        })
        .collect::<Result<_>>()?;

    let mut out = Vec::with_capacity(times.len() * nodes.len());
    for (ti, &t) in times.iter().enumerate() {
        for (ni, node) in nodes.iter().enumerate() {
            let cell = ti * nodes.len() + ni;
            let m = problem.bound();
            let per: Vec<TracePathValue> = per_path
                .iter()
                .map(|cells| {
                    let raw = &cells[cell];
                    let samples: Vec<(f64, f64)> =
                        taus.iter().copied().zip(raw.iter().copied()).collect();
                    let (value, residual) = richardson_first_order(&samples);
                    // project onto the a-priori admissible range [-M, M]
                    TracePathValue { raw: raw.clone(), value: value.clamp(-m, m), residual }
                })
                .collect();
            let values: Vec<f64> = per.iter().map(|p| p.value).collect();
            let (mean, se) = mean_and_se(&values);
            out.push(TraceSample {
                t,
                node: node.clone(),
                taus: taus.to_vec(),
                per_path: per,
                mean,
                se,
            });
        }
    }
    Ok(out)
}

/// β-renormalized trace weak identity (delegates to the weak-form engine so
/// all terms share caches with the other boundary identities).
pub fn trace_weakform_check(
    problem: &TransportProblem,
    source: &TraceSource,
    beta: Beta,
    tf: &TestFunction,
    params: &WeakFormParams,
) -> Result<WeakFormReport> {
    trace_renorm_residual(problem, tf, beta, source, params)
}

/// One detected bound violation.
#[derive(Debug, Clone)]
pub struct TraceBoundViolation {
    pub sample_idx: usize,
    pub path_idx: usize,
    pub value: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone)]
pub struct TraceBoundReport {
    pub checked: usize,
    pub violations: Vec<TraceBoundViolation>,
    pub pass: bool,
}

/// Check every per-path extrapolated trace value against [−M−tol, M+tol]
/// with tol = 1e−9 + extrapolation residual. Raw (pre-extrapolation) values
/// are checked against M directly: they are pathwise dispatch values.
pub fn trace_bound_check(samples: &[TraceSample], bound: f64) -> TraceBoundReport {
    let mut violations = Vec::new();
    let mut checked = 0;
    for (si, sample) in samples.iter().enumerate() {
        for (pi, per) in sample.per_path.iter().enumerate() {
            checked += 1;
            for &raw in &per.raw {
                if raw.abs() > bound + 1e-12 {
                    violations.push(TraceBoundViolation {
                        sample_idx: si,
                        path_idx: pi,
                        value: raw,
                        tolerance: 1e-12,
                    });
                }
            }
            let tol = 1e-9 + per.residual;
            if per.value.abs() > bound + tol {
                violations.push(TraceBoundViolation {
                    sample_idx: si,
                    path_idx: pi,
                    value: per.value,
                    tolerance: tol,
                });
            }
        }
    }
    TraceBoundReport { checked, pass: violations.is_empty(), violations }
}

/// One refinement level of the two-schedule stability comparison.
#[derive(Debug, Clone)]
pub struct StabilityRow {
    pub level: usize,
    /// first depths of the two schedules at this level
    pub tau_a: f64,
    pub tau_b: f64,
    /// empirical L2 distance over nodes × times of the mean paired gap
    pub discrepancy: f64,
    /// rms of the standard errors of the paired per-path gaps
    pub pooled_se: f64,
}

/// Estimator independence: trace estimates from two deformation schedules,
/// refined jointly (halving per level), compared on the same paths. The
/// discrepancy must shrink as the schedules refine and end within the paired
/// statistical noise.
pub fn trace_stability(
    problem: &TransportProblem,
    times: &[f64],
    nodes: &[BoundaryPoint],
    taus_a: &[f64],
    taus_b: &[f64],
    levels: usize,
    n_paths: usize,
    dt: f64,
    seed: u64,
) -> Result<Vec<StabilityRow>> {
    let mut rows = Vec::with_capacity(levels);
    for level in 0..levels {
        let scale = 0.5_f64.powi(level as i32);
        let a: Vec<f64> = taus_a.iter().map(|t| t * scale).collect();
        let b: Vec<f64> = taus_b.iter().map(|t| t * scale).collect();
        let sa = trace_by_deformation(problem, times, nodes, &a, n_paths, dt, seed)?;
        let sb = trace_by_deformation(problem, times, nodes, &b, n_paths, dt, seed)?;
        let mut sq_gap = 0.0;
        let mut sq_se = 0.0;
        for (xa, xb) in sa.iter().zip(&sb) {
            let gaps: Vec<f64> = xa
                .per_path
                .iter()
                .zip(&xb.per_path)
                .map(|(p, q)| p.value - q.value)
                .collect();
            let (m, s) = mean_and_se(&gaps);
            sq_gap += m * m;
            sq_se += s * s;
        }
        let cells = sa.len() as f64;
        rows.push(StabilityRow {
            level,
            tau_a: a[0],
            tau_b: b[0],
            discrepancy: (sq_gap / cells).sqrt(),
            pooled_se: (sq_se / cells).sqrt(),
        });
    }
    Ok(rows)
}

/// A quadrature-weighted probe region for commutator norms.
#[derive(Debug, Clone)]
pub struct ProbeRegion {
    pub nodes: Vec<(Point, f64)>,
}

impl ProbeRegion {
    /// Interior quadrature nodes inside a ball.
    pub fn ball(domain: &Domain, center: &[f64], radius: f64, resolution: usize) -> Self {
        let c = pt::from_slice(center);
        let nodes = domain
            .interior_quadrature(resolution)
            .into_iter()
            .filter(|(p, _)| pt::dist(*p, c) < radius)
            .collect();
        Self { nodes }
    }

    /// Interior quadrature nodes within `width` of the boundary, at least
    /// `min_depth` deep (the probes must leave room for FD stencils).
    pub fn collar(domain: &Domain, width: f64, min_depth: f64, resolution: usize) -> Self {
        let nodes = domain
            .interior_quadrature(resolution)
            .into_iter()
            .filter(|(p, _)| {
                let d = domain.distance_to_boundary(*p).unwrap_or(0.0);
                d < width && d > min_depth
            })
            .collect();
        Self { nodes }
    }

    /// Dense anisotropic midpoint grid on a rectangle (all nodes must be
    /// interior to the caller's domain). Commutators of BV samples
    /// concentrate on an O(ε) band around the jump set, so the transverse
    /// spacing must resolve the smallest ε being measured.
    pub fn grid(lo: &[f64], hi: &[f64], counts: &[usize]) -> Self {
        let lo = pt::from_slice(lo);
        let hi = pt::from_slice(hi);
        let mut n = [1usize; 3];
        for (i, &c) in counts.iter().take(3).enumerate() {
            n[i] = c.max(1);
        }
        let cell: f64 = (0..counts.len().min(3))
            .map(|i| (hi[i] - lo[i]) / n[i] as f64)
            .product();
        let mut nodes = Vec::with_capacity(n[0] * n[1] * n[2]);
        for ix in 0..n[0] {
            for iy in 0..n[1] {
                for iz in 0..n[2] {
                    let idx = [ix, iy, iz];
                    let mut p = [0.0; 3];
                    for k in 0..counts.len().min(3) {
                        p[k] = lo[k] + (hi[k] - lo[k]) * (idx[k] as f64 + 0.5) / n[k] as f64;
                    }
                    nodes.push((p, cell));
                }
            }
        }
        Self { nodes }
    }
}

/// Commutator samples over a probe region with their L1 norm.
#[derive(Debug, Clone)]
pub struct CommutatorField {
    pub eps: f64,
    /// R_ε values (scalar) or |P_ε| magnitudes at the probe nodes
    pub values: Vec<f64>,
    pub l1: f64,
}

/// Hessian of the collar level function by central differences of its
/// analytic gradient; the step shrinks near Γ so the stencil stays interior.
fn level_h_hessian(domain: &Domain, y: Point) -> [[f64; 3]; 3] {
    let dist = domain.distance_to_boundary(y).unwrap_or(0.0);
    let step = (1e-4 * (1.0 + domain.diameter())).min(0.45 * dist).max(1e-9);
    let mut hess = [[0.0; 3]; 3];
    for i in 0..domain.dim() {
        let mut yp = y;
        let mut ym = y;
        yp[i] += step;
        ym[i] -= step;
        let (_, gp) = domain.level_h(yp);
        let (_, gm) = domain.level_h(ym);
        for k in 0..domain.dim() {
            hess[k][i] = (gp[k] - gm[k]) / (2.0 * step);
        }
    }
    hess
}

/// Convolved kernel gradient G(c) = Σ u(c − z_j) γ_j and the chain-rule
/// corrected gradient Jᵀ G of the shifted mollification at y.
fn shifted_gradient(
    m: &ShiftedMollification,
    domain: &Domain,
    u: &(dyn Fn(Point) -> f64 + Send + Sync),
    y: Point,
) -> Result<(Point, Point)> {
    let c = m.shifted_center(y);
    if domain.contains(c) != Classification::Interior {
        return Err(LabError::Geometry(
            "shifted stencil center escaped the domain".into(),
        ));
    }
    let mut g = [0.0; 3];
    for (z, gamma) in m.kernel().gradient_lattice() {
        let uv = u(pt::sub(c, *z));
        g = pt::axpy(g, uv, *gamma);
    }
    let hess = level_h_hessian(domain, y);
    let lam_eps = m.lambda() * m.eps();
    let mut jt_g = g;
    for i in 0..domain.dim() {
        let mut acc = 0.0;
        for k in 0..domain.dim() {
            acc += hess[k][i] * g[k];
        }
        jt_g[i] += lam_eps * acc;
    }
    Ok((g, jt_g))
}

/// R_ε(b, u) over the probe region at a frozen time. The second term is
/// computed distributionally: ρ ∗ₙ ((b·∇)u) = Σ u (b·γ − div b · w).
pub fn commutator_r(
    field: &DriftField,
    u: Arc<dyn Fn(Point) -> f64 + Send + Sync>,
    domain: &Domain,
    eps: f64,
    time: f64,
    probe: &ProbeRegion,
) -> Result<CommutatorField> {
    let m = ShiftedMollification::with_default_lambda(u.clone(), domain, eps)?;
    let mut values = Vec::with_capacity(probe.nodes.len());
    let mut l1 = 0.0;
    for (y, w) in &probe.nodes {
        let (_, jt_g) = shifted_gradient(&m, domain, u.as_ref(), *y)?;
        let term1 = pt::dot(field.eval(time, *y), jt_g);
        let c = m.shifted_center(*y);
        let mut term2 = 0.0;
        let grads = m.kernel().gradient_lattice();
        let weights = m.kernel().lattice();
        for ((z, gamma), (_, wj)) in grads.iter().zip(weights) {
            let p = pt::sub(c, *z);
            let uv = u(p);
            term2 += uv * (pt::dot(field.eval(time, p), *gamma) - field.divergence(time, p) * wj);
        }
        let r = term1 - term2;
        values.push(r);
        l1 += w * r.abs();
    }
    Ok(CommutatorField { eps, values, l1 })
}

/// P_ε(u) over the probe region; values are Euclidean magnitudes of the
/// vector commutator (the drift-free gradient analogue of R_ε).
pub fn commutator_p(
    u: Arc<dyn Fn(Point) -> f64 + Send + Sync>,
    domain: &Domain,
    eps: f64,
    probe: &ProbeRegion,
) -> Result<CommutatorField> {
    let m = ShiftedMollification::with_default_lambda(u.clone(), domain, eps)?;
    let mut values = Vec::with_capacity(probe.nodes.len());
    let mut l1 = 0.0;
    for (y, w) in &probe.nodes {
        let (g, jt_g) = shifted_gradient(&m, domain, u.as_ref(), *y)?;
        let p = pt::sub(jt_g, g);
        let mag = pt::norm(p);
        values.push(mag);
        l1 += w * mag;
    }
    Ok(CommutatorField { eps, values, l1 })
}
