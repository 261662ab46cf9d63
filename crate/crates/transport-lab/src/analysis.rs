//! Renormalization diagnostics and independent parabolic oracles.
//!
//! The expectation v(t,x) = E[β(u(t,x))] of the pathwise solution solves
//! ∂_t v + b·∇v = ½Δv in the interior. This module estimates v by Monte
//! Carlo on a regular interior lattice, checks the parabolic operator on it
//! by finite differences (with a declared noise floor for the MC-fed
//! stencils), solves the dual Dirichlet problem with a deterministic
//! finite-difference scheme as an independent oracle, and runs the
//! uniqueness surrogates: mollifier-independence of the constructed
//! solution and the drift hypothesis checks.

use rayon::prelude::*;

use crate::drift::{uniqueness_bounds, DriftField, Smoothness};
use crate::geometry::Domain;
use crate::numeric::mean_and_se;
use crate::pt;
use crate::solver::{mc_field, TransportProblem};
use crate::weakform::Beta;
use crate::{LabError, Point, Result};

/// Regular lattice of interior points with boundary clearance, suitable for
/// finite-difference stencils: the largest centered axis box whose corners
/// keep at least `clearance` from Γ, sampled inclusively with `per_axis`
/// nodes per axis.
#[derive(Debug, Clone)]
pub struct InteriorLattice {
    pub dim: usize,
    pub shape: [usize; 3],
    pub origin: Point,
    pub spacing: [f64; 3],
    pub points: Vec<Point>,
}

impl InteriorLattice {
    pub fn new(domain: &Domain, per_axis: usize, clearance: f64) -> Result<Self> {
        assert!(per_axis >= 3, "lattice needs at least 3 nodes per axis");
        let dim = domain.dim();
        let center = domain.center();
        // largest half-width whose box corners keep the clearance
        let ok = |s: f64| -> bool {
            let mut good = true;
            for corner in 0..(1usize << dim) {
                let mut p = center;
                for i in 0..dim {
                    p[i] += if corner & (1 << i) != 0 { s } else { -s };
                }
                good &= matches!(
                    domain.contains(p),
                    crate::geometry::Classification::Interior
                ) && domain.distance_to_boundary(p).map_or(false, |d| d >= clearance);
            }
            good
        };
        let mut lo = 0.0;
        let mut hi = domain.diameter();
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if ok(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let half = lo * 0.999;
        if half <= 0.0 {
            return Err(LabError::Argument(
                "no interior box satisfies the clearance".into(),
            ));
        }
        let mut shape = [1usize; 3];
        let mut spacing = [0.0; 3];
        let mut origin = center;
        for i in 0..dim {
            shape[i] = per_axis;
            spacing[i] = 2.0 * half / (per_axis - 1) as f64;
            origin[i] = center[i] - half;
        }
        let mut points = Vec::with_capacity(shape.iter().product());
        for iz in 0..shape[2] {
            for iy in 0..shape[1] {
                for ix in 0..shape[0] {
                    let idx = [ix, iy, iz];
                    let mut p = origin;
                    for k in 0..dim {
                        p[k] += spacing[k] * idx[k] as f64;
                    }
                    points.push(p);
                }
            }
        }
        Ok(Self { dim, shape, origin, spacing, points })
    }

    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (iz * self.shape[1] + iy) * self.shape[0] + ix
    }
}

/// Monte Carlo estimate of v = E[β(u)] on a lattice at several times.
#[derive(Debug, Clone)]
pub struct ExpectationField {
    pub beta: Beta,
    pub lattice: InteriorLattice,
    pub times: Vec<f64>,
    /// `values[time][lattice point]`
    pub values: Vec<Vec<f64>>,
    pub ses: Vec<Vec<f64>>,
    pub n_paths: usize,
    pub dt: f64,
    pub seed: u64,
}

/// E[β(u)] over the lattice and times, one path ensemble shared by all
/// space-time nodes (deterministic given the seed).
pub fn renormalized_expectation(
    problem: &TransportProblem,
    beta: Beta,
    lattice: &InteriorLattice,
    times: &[f64],
    n_paths: usize,
    dt: f64,
    seed: u64,
) -> Result<ExpectationField> {
    if times.is_empty() || n_paths == 0 {
        return Err(LabError::Argument("need times and paths".into()));
    }
    let per_path: Vec<Vec<f64>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| -> Result<Vec<f64>> {
            let path = problem.driving_path(seed, i, dt)?;
            let mut vals = Vec::with_capacity(times.len() * lattice.points.len());
            for &t in times {
                for &x in &lattice.points {
                    vals.push(beta.eval(problem.evaluate_pathwise(&path, t, x)?));
                }
            }
            Ok(vals)
        })
        .collect::<Result<_>>()?;
    let np = lattice.points.len();
    let mut values = Vec::with_capacity(times.len());
    let mut ses = Vec::with_capacity(times.len());
    for (ti, _) in times.iter().enumerate() {
        let mut row_v = Vec::with_capacity(np);
        let mut row_s = Vec::with_capacity(np);
        for q in 0..np {
            let samples: Vec<f64> = per_path.iter().map(|r| r[ti * np + q]).collect();
            let (m, s) = mean_and_se(&samples);
            row_v.push(m);
            row_s.push(s);
        }
        values.push(row_v);
        ses.push(row_s);
    }
    Ok(ExpectationField {
        beta,
        lattice: lattice.clone(),
        times: times.to_vec(),
        values,
        ses,
        n_paths,
        dt,
        seed,
    })
}

/// Finite-difference residual of ∂_t v + b·∇v − ½Δv on an expectation field.
#[derive(Debug, Clone)]
pub struct ParabolicResidual {
    /// residual per (time interval, interior stencil node)
    pub residuals: Vec<f64>,
    pub mean_abs: f64,
    pub max_abs: f64,
    /// declared floor: SE_typ (4/h² + 2‖b‖/h + 1/Δt_grid)
    pub noise_floor: f64,
    /// the floor exceeds the truncation signal scale by 10x
    pub coarse_warning: bool,
    pub h: f64,
    pub dt_grid: f64,
}

/// Forward difference in time, central differences in space, on the
/// interior stencil nodes of the field's lattice. The report carries the
/// predicted noise floor so MC-dominated failures are attributable.
pub fn parabolic_residual(field: &ExpectationField, drift: &DriftField) -> Result<ParabolicResidual> {
    let lat = &field.lattice;
    let dim = lat.dim;
    if field.times.len() < 2 {
        return Err(LabError::Argument("need at least two time levels".into()));
    }
    let h = lat.spacing[0];
    for i in 1..dim {
        if (lat.spacing[i] - h).abs() > 1e-12 * h {
            return Err(LabError::Argument("anisotropic lattice spacing".into()));
        }
    }
    let dt_grid = field.times[1] - field.times[0];
    for w in field.times.windows(2) {
        if ((w[1] - w[0]) - dt_grid).abs() > 1e-9 * dt_grid {
            return Err(LabError::Argument("time levels must be uniform".into()));
        }
    }

    let mut residuals = Vec::new();
    let mut se_sum = 0.0;
    let mut se_count = 0usize;
    let mut b_max: f64 = 0.0;
    let ranges = |n: usize| 1..n.saturating_sub(1);
    for k in 0..field.times.len() - 1 {
        let t = field.times[k];
        let v = &field.values[k];
        let v_next = &field.values[k + 1];
        let zr = if dim >= 3 { ranges(lat.shape[2]) } else { 0..1 };
        for iz in zr {
            let yr = if dim >= 2 { ranges(lat.shape[1]) } else { 0..1 };
            for iy in yr {
                for ix in ranges(lat.shape[0]) {
                    let q = lat.index(ix, iy, iz);
                    let x = lat.points[q];
                    let b = drift.eval(t, x);
                    b_max = b_max.max(pt::norm(b));
                    let mut adv = 0.0;
                    let mut lap = 0.0;
                    for axis in 0..dim {
                        let (qp, qm) = match axis {
                            0 => (lat.index(ix + 1, iy, iz), lat.index(ix - 1, iy, iz)),
                            1 => (lat.index(ix, iy + 1, iz), lat.index(ix, iy - 1, iz)),
                            _ => (lat.index(ix, iy, iz + 1), lat.index(ix, iy, iz - 1)),
                        };
                        adv += b[axis] * (v[qp] - v[qm]) / (2.0 * h);
                        lap += (v[qp] - 2.0 * v[q] + v[qm]) / (h * h);
                    }
                    let dtv = (v_next[q] - v[q]) / dt_grid;
                    residuals.push(dtv + adv - 0.5 * lap);
                    se_sum += field.ses[k][q];
                    se_count += 1;
                }
            }
        }
    }
    let se_typ = if se_count > 0 { se_sum / se_count as f64 } else { 0.0 };
    let noise_floor = se_typ * (4.0 / (h * h) + 2.0 * b_max / h + 1.0 / dt_grid);
    let mean_abs = residuals.iter().map(|r| r.abs()).sum::<f64>() / residuals.len().max(1) as f64;
    let max_abs = residuals.iter().fold(0.0_f64, |a, r| a.max(r.abs()));
    let signal = h * h + dt_grid;
    Ok(ParabolicResidual {
        residuals,
        mean_abs,
        max_abs,
        noise_floor,
        coarse_warning: noise_floor > 10.0 * signal,
        h,
        dt_grid,
    })
}

/// Gridded deterministic solution of the dual parabolic Dirichlet problem.
#[derive(Debug, Clone)]
pub struct OracleSolution {
    kind: OracleKind,
    pub times: Vec<f64>,
    /// `snapshots[time][node]` on the variant's grid
    snapshots: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
enum OracleKind {
    Line { a: f64, h: f64, n: usize },
    Radial { center: Point, h: f64, n: usize },
    Box2 { lo: Point, h: [f64; 2], n: [usize; 2] },
}

impl OracleSolution {
    /// Solution value at a stored time index and spatial point (linear /
    /// bilinear interpolation on the oracle grid).
    pub fn value_at(&self, time_idx: usize, x: Point) -> f64 {
        let snap = &self.snapshots[time_idx];
        match &self.kind {
            OracleKind::Line { a, h, n } => {
                let s = ((x[0] - a) / h).clamp(0.0, (*n - 1) as f64);
                let i = (s.floor() as usize).min(n - 2);
                let f = s - i as f64;
                snap[i] * (1.0 - f) + snap[i + 1] * f
            }
            OracleKind::Radial { center, h, n } => {
                let r = pt::dist(x, *center);
                let s = (r / h).clamp(0.0, (*n - 1) as f64);
                let i = (s.floor() as usize).min(n - 2);
                let f = s - i as f64;
                snap[i] * (1.0 - f) + snap[i + 1] * f
            }
            OracleKind::Box2 { lo, h, n } => {
                let sx = ((x[0] - lo[0]) / h[0]).clamp(0.0, (n[0] - 1) as f64);
                let sy = ((x[1] - lo[1]) / h[1]).clamp(0.0, (n[1] - 1) as f64);
                let i = (sx.floor() as usize).min(n[0] - 2);
                let j = (sy.floor() as usize).min(n[1] - 2);
                let (fx, fy) = (sx - i as f64, sy - j as f64);
                let at = |i: usize, j: usize| snap[j * n[0] + i];
                at(i, j) * (1.0 - fx) * (1.0 - fy)
                    + at(i + 1, j) * fx * (1.0 - fy)
                    + at(i, j + 1) * (1.0 - fx) * fy
                    + at(i + 1, j + 1) * fx * fy
            }
        }
    }
}

/// Thomas solve of a tridiagonal system (a: sub, b: diag, c: super).
fn thomas(a: &[f64], b: &[f64], c: &[f64], d: &mut [f64]) {
    let n = b.len();
    let mut cp = vec![0.0; n];
    let mut bp = b[0];
    d[0] /= bp;
    for i in 1..n {
        cp[i - 1] = c[i - 1] / bp;
        bp = b[i] - a[i - 1] * cp[i - 1];
        d[i] = (d[i] - a[i - 1] * d[i - 1]) / bp;
    }
    for i in (0..n - 1).rev() {
        d[i] -= cp[i] * d[i + 1];
    }
}

fn check_stability(dt: f64, h: f64, b_max: f64) -> Result<()> {
    if dt * b_max / h > 1.0 {
        return Err(LabError::Scheme(format!(
            "advection CFL violated: dt |b| / h = {}",
            dt * b_max / h
        )));
    }
    Ok(())
}

/// Deterministic dual solver: ∂_t w + b·∇w = ½Δw forward in time with
/// w(0) = u0 and Dirichlet boundary values u_b on the whole boundary.
/// Supported: intervals (general drift), disks with radially symmetric
/// data and radial drift, 2-d boxes (dimensional splitting). Advection is
/// explicit first-order upwind; diffusion is implicit (backward Euler).
pub fn parabolic_oracle(
    problem: &TransportProblem,
    grid_res: usize,
    dt_grid: f64,
    query_times: &[f64],
) -> Result<OracleSolution> {
    if query_times.is_empty() {
        return Err(LabError::Argument("no query times".into()));
    }
    let t_end = query_times.last().copied().unwrap();
    let n_steps = (t_end / dt_grid).ceil() as usize;
    let dt = t_end / n_steps as f64;
    let dom = &problem.domain;
    let (lo, hi) = dom.bounding_box();

    match dom.dim() {
        1 => {
            let (a, b_end) = (lo[0], hi[0]);
            let n = grid_res + 1;
            let h = (b_end - a) / grid_res as f64;
            let xs: Vec<Point> = (0..n).map(|i| [a + i as f64 * h, 0.0, 0.0]).collect();
            let mut w: Vec<f64> = xs.iter().map(|&x| problem.u0.eval(x)).collect();
            let b_max = (0..n)
                .map(|i| problem.drift.eval(0.0, xs[i])[0].abs())
                .fold(0.0, f64::max);
            check_stability(dt, h, b_max)?;
            let mut snapshots = Vec::new();
            let mut record = RecordState::new(query_times, dt);
            record.maybe(&w, 0, &mut snapshots);
            let bound = problem.bound();
            for step in 1..=n_steps {
                let t_new = step as f64 * dt;
                let t_old = t_new - dt;
                // upwind advection
                let mut star = w.clone();
                for i in 1..n - 1 {
                    let bv = problem.drift.eval(t_old, xs[i])[0];
                    let dw = if bv > 0.0 {
                        (w[i] - w[i - 1]) / h
                    } else {
                        (w[i + 1] - w[i]) / h
                    };
                    star[i] = w[i] - dt * bv * dw;
                }
                // implicit diffusion with Dirichlet ends
                let m = n - 2;
                let r = 0.5 * dt / (h * h);
                let sub = vec![-r; m - 1];
                let sup = vec![-r; m - 1];
                let diag = vec![1.0 + 2.0 * r; m];
                let wl = problem.ub.eval(t_new, xs[0]);
                let wr = problem.ub.eval(t_new, xs[n - 1]);
                let mut rhs: Vec<f64> = (1..n - 1).map(|i| star[i]).collect();
                rhs[0] += r * wl;
                rhs[m - 1] += r * wr;
                thomas(&sub, &diag, &sup, &mut rhs);
                w[0] = wl;
                w[n - 1] = wr;
                w[1..n - 1].copy_from_slice(&rhs);
                detect_blowup(&w, bound)?;
                record.maybe(&w, step, &mut snapshots);
            }
            record.finish(&snapshots)?;
            Ok(OracleSolution {
                kind: OracleKind::Line { a, h, n },
                times: query_times.to_vec(),
                snapshots,
            })
        }
        2 if is_disk(dom) => {
            radial_oracle(problem, grid_res, dt, n_steps, query_times, 2)
        }
        2 => box2_oracle(problem, grid_res, dt, n_steps, query_times),
        3 if is_ball(dom) => radial_oracle(problem, grid_res, dt, n_steps, query_times, 3),
        d => Err(LabError::Unsupported(format!(
            "parabolic oracle not available in dimension {d} for this domain"
        ))),
    }
}

fn is_disk(dom: &Domain) -> bool {
    // a disk has equal inradius and half-diameter-ish bounding box and a
    // curved boundary; cheap structural probe via curvature at a boundary pt
    let (lo, hi) = dom.bounding_box();
    let r = 0.5 * (hi[0] - lo[0]);
    (dom.inradius() - r).abs() < 1e-12
        && dom
            .boundary_project(dom.center())
            .map(|bp| (bp.curvature - 1.0 / r).abs() < 1e-12)
            .unwrap_or(false)
}

fn is_ball(dom: &Domain) -> bool {
    is_disk(dom)
}

struct RecordState {
    targets: Vec<usize>,
    next: usize,
}

impl RecordState {
    fn new(times: &[f64], dt: f64) -> Self {
        Self {
            targets: times.iter().map(|&t| (t / dt).round() as usize).collect(),
            next: 0,
        }
    }

    fn maybe(&mut self, w: &[f64], step: usize, out: &mut Vec<Vec<f64>>) {
        while self.next < self.targets.len() && self.targets[self.next] == step {
            out.push(w.to_vec());
            self.next += 1;
        }
    }

    fn finish(&self, out: &[Vec<f64>]) -> Result<()> {
        if out.len() != self.targets.len() {
            return Err(LabError::Numeric(
                "oracle failed to record every query time (times must be multiples of dt_grid)"
                    .into(),
            ));
        }
        Ok(())
    }
}

fn detect_blowup(w: &[f64], bound: f64) -> Result<()> {
    let limit = 10.0 * bound.max(1.0);
    if w.iter().any(|v| !v.is_finite() || v.abs() > limit) {
        return Err(LabError::Scheme(
            "instability detected: solution left the data range".into(),
        ));
    }
    Ok(())
}

/// Radially symmetric dual problem on a disk/ball: data and drift must be
/// rotation invariant about the domain center.
fn radial_oracle(
    problem: &TransportProblem,
    grid_res: usize,
    dt: f64,
    n_steps: usize,
    query_times: &[f64],
    dim_d: usize,
) -> Result<OracleSolution> {
    let dom = &problem.domain;
    let center = dom.center();
    let radius = dom.inradius();
    // radial-symmetry probes
    let probe_r = 0.7 * radius;
    let dirs: [[f64; 2]; 3] = [[1.0, 0.0], [0.6, 0.8], [-0.28, -0.96]];
    let mut u0_ref = None;
    for d in dirs {
        let x = [center[0] + probe_r * d[0], center[1] + probe_r * d[1], center[2]];
        let u0v = problem.u0.eval(x);
        let reference = *u0_ref.get_or_insert(u0v);
        if (reference - u0v).abs() > 1e-12 * (1.0 + reference.abs()) {
            return Err(LabError::Unsupported(
                "radial oracle needs rotation-invariant initial data".into(),
            ));
        }
        let b = problem.drift.eval(0.3, x);
        let radial_dir = pt::scale(pt::sub(x, center), 1.0 / probe_r);
        let tangential = pt::norm(pt::sub(b, pt::scale(radial_dir, pt::dot(b, radial_dir))));
        if tangential > 1e-12 {
            return Err(LabError::Unsupported(
                "radial oracle needs a radial drift field".into(),
            ));
        }
    }

    let n = grid_res + 1;
    let h = radius / grid_res as f64;
    let rs: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
    let at_r = |r: f64| [center[0] + r, center[1], center[2]];
    let mut w: Vec<f64> = rs.iter().map(|&r| problem.u0.eval(at_r(r))).collect();
    let b_r = |t: f64, r: f64| -> f64 {
        if r == 0.0 {
            0.0
        } else {
            problem.drift.eval(t, at_r(r))[0]
        }
    };
    let b_max = rs.iter().map(|&r| b_r(0.0, r).abs()).fold(0.0, f64::max);
    check_stability(dt, h, b_max)?;
    let bound = problem.bound();
    let mut snapshots = Vec::new();
    let mut record = RecordState::new(query_times, dt);
    record.maybe(&w, 0, &mut snapshots);
    let dd = dim_d as f64;
    for step in 1..=n_steps {
        let t_new = step as f64 * dt;
        let t_old = t_new - dt;
        let mut star = w.clone();
        for i in 1..n - 1 {
            let bv = b_r(t_old, rs[i]);
            let dw = if bv > 0.0 {
                (w[i] - w[i - 1]) / h
            } else {
                (w[i + 1] - w[i]) / h
            };
            star[i] = w[i] - dt * bv * dw;
        }
        // implicit radial diffusion: ½ (w'' + (d−1)/r w'); at r = 0 the
        // symmetric limit is ½ d · w'' with a mirrored ghost node
        let m = n - 1; // unknowns i = 0..n-2 (Dirichlet at r = R)
        let r_coef = 0.5 * dt / (h * h);
        let mut sub = vec![0.0; m - 1];
        let mut diag = vec![0.0; m];
        let mut sup = vec![0.0; m - 1];
        let mut rhs = vec![0.0; m];
        // center node
        diag[0] = 1.0 + 2.0 * dd * r_coef;
        sup[0] = -2.0 * dd * r_coef;
        rhs[0] = star[0];
        for i in 1..m {
            let r = rs[i];
            let lap_m = r_coef * (1.0 - (dd - 1.0) * h / (2.0 * r));
            let lap_p = r_coef * (1.0 + (dd - 1.0) * h / (2.0 * r));
            sub[i - 1] = -lap_m;
            diag[i] = 1.0 + lap_m + lap_p;
            if i < m - 1 {
                sup[i] = -lap_p;
            }
            rhs[i] = star[i];
        }
        let w_bnd = problem.ub.eval(t_new, at_r(radius));
        let r_last = rs[m - 1];
        rhs[m - 1] += r_coef * (1.0 + (dd - 1.0) * h / (2.0 * r_last)) * w_bnd;
        thomas(&sub, &diag, &sup, &mut rhs);
        w[..m].copy_from_slice(&rhs);
        w[n - 1] = w_bnd;
        detect_blowup(&w, bound)?;
        record.maybe(&w, step, &mut snapshots);
    }
    record.finish(&snapshots)?;
    Ok(OracleSolution {
        kind: OracleKind::Radial { center, h, n },
        times: query_times.to_vec(),
        snapshots,
    })
}

/// 2-d box dual problem by dimensional splitting: per-axis explicit upwind
/// advection, then implicit diffusion line solves in x and in y.
fn box2_oracle(
    problem: &TransportProblem,
    grid_res: usize,
    dt: f64,
    n_steps: usize,
    query_times: &[f64],
) -> Result<OracleSolution> {
    let dom = &problem.domain;
    let (lo, hi) = dom.bounding_box();
    if dom.interior_quadrature(8).len() != 64 {
        return Err(LabError::Unsupported(
            "2-d oracle supports axis boxes and disks only".into(),
        ));
    }
    let n = [grid_res + 1, grid_res + 1];
    let h = [
        (hi[0] - lo[0]) / grid_res as f64,
        (hi[1] - lo[1]) / grid_res as f64,
    ];
    let pt_at = |i: usize, j: usize| -> Point { [lo[0] + i as f64 * h[0], lo[1] + j as f64 * h[1], 0.0] };
    let idx = |i: usize, j: usize| j * n[0] + i;
    let mut w: Vec<f64> = (0..n[0] * n[1])
        .map(|q| problem.u0.eval(pt_at(q % n[0], q / n[0])))
        .collect();
    let b_max = (0..n[0] * n[1])
        .map(|q| pt::norm(problem.drift.eval(0.0, pt_at(q % n[0], q / n[0]))))
        .fold(0.0, f64::max);
    check_stability(dt, h[0].min(h[1]), b_max)?;
    let bound = problem.bound();
    let mut snapshots = Vec::new();
    let mut record = RecordState::new(query_times, dt);
    record.maybe(&w, 0, &mut snapshots);
    let is_boundary = |i: usize, j: usize| i == 0 || j == 0 || i == n[0] - 1 || j == n[1] - 1;
    for step in 1..=n_steps {
        let t_new = step as f64 * dt;
        let t_old = t_new - dt;
        // explicit upwind advection in both axes
        let mut star = w.clone();
        for j in 1..n[1] - 1 {
            for i in 1..n[0] - 1 {
                let x = pt_at(i, j);
                let b = problem.drift.eval(t_old, x);
                let dwx = if b[0] > 0.0 {
                    (w[idx(i, j)] - w[idx(i - 1, j)]) / h[0]
                } else {
                    (w[idx(i + 1, j)] - w[idx(i, j)]) / h[0]
                };
                let dwy = if b[1] > 0.0 {
                    (w[idx(i, j)] - w[idx(i, j - 1)]) / h[1]
                } else {
                    (w[idx(i, j + 1)] - w[idx(i, j)]) / h[1]
                };
                star[idx(i, j)] = w[idx(i, j)] - dt * (b[0] * dwx + b[1] * dwy);
            }
        }
        // boundary values at the new time
        for j in 0..n[1] {
            for i in 0..n[0] {
                if is_boundary(i, j) {
                    star[idx(i, j)] = problem.ub.eval(t_new, pt_at(i, j));
                }
            }
        }
        // implicit diffusion, x lines then y lines
        let rx = 0.5 * dt / (h[0] * h[0]);
        for j in 1..n[1] - 1 {
            let m = n[0] - 2;
            let sub = vec![-rx; m - 1];
            let sup = vec![-rx; m - 1];
            let diag = vec![1.0 + 2.0 * rx; m];
            let mut rhs: Vec<f64> = (1..n[0] - 1).map(|i| star[idx(i, j)]).collect();
            rhs[0] += rx * star[idx(0, j)];
            rhs[m - 1] += rx * star[idx(n[0] - 1, j)];
            thomas(&sub, &diag, &sup, &mut rhs);
            for (i, v) in rhs.into_iter().enumerate() {
                star[idx(i + 1, j)] = v;
            }
        }
        let ry = 0.5 * dt / (h[1] * h[1]);
        for i in 1..n[0] - 1 {
            let m = n[1] - 2;
            let sub = vec![-ry; m - 1];
            let sup = vec![-ry; m - 1];
            let diag = vec![1.0 + 2.0 * ry; m];
            let mut rhs: Vec<f64> = (1..n[1] - 1).map(|j| star[idx(i, j)]).collect();
            rhs[0] += ry * star[idx(i, 0)];
            rhs[m - 1] += ry * star[idx(i, n[1] - 1)];
            thomas(&sub, &diag, &sup, &mut rhs);
            for (j, v) in rhs.into_iter().enumerate() {
                star[idx(i, j + 1)] = v;
            }
        }
        w = star;
        detect_blowup(&w, bound)?;
        record.maybe(&w, step, &mut snapshots);
    }
    record.finish(&snapshots)?;
    Ok(OracleSolution {
        kind: OracleKind::Box2 { lo, h, n },
        times: query_times.to_vec(),
        snapshots,
    })
}

/// One level of the mollifier-independence comparison.
#[derive(Debug, Clone)]
pub struct IndependenceRow {
    pub level: usize,
    pub eps_a: f64,
    pub eps_b: f64,
    /// sup over lattice nodes of |mean_A − mean_B|
    pub sup: f64,
    /// quadrature-weighted L1 distance
    pub l1: f64,
    pub pooled_se: f64,
}

/// Uniqueness surrogate: solve with the drift mollified along two ε
/// schedules at matched seeds and measure the distance between the two
/// Monte Carlo fields level by level. Registry data (constants, linear,
/// bounded closures) are invariant under mollification, so only the drift
/// is regularized.
pub fn mollifier_independence(
    problem: &TransportProblem,
    eps_a: &[f64],
    eps_b: &[f64],
    t: f64,
    grid_resolution: usize,
    n_paths: usize,
    dt: f64,
    seed: u64,
) -> Result<Vec<IndependenceRow>> {
    if eps_a.len() != eps_b.len() || eps_a.is_empty() {
        return Err(LabError::Argument(
            "schedules must be nonempty and equally long".into(),
        ));
    }
    for s in [eps_a, eps_b] {
        if s.windows(2).any(|w| w[1] >= w[0]) {
            return Err(LabError::Argument("schedules must decrease".into()));
        }
    }
    let mut rows = Vec::with_capacity(eps_a.len());
    for (level, (&ea, &eb)) in eps_a.iter().zip(eps_b).enumerate() {
        let mut pa = problem.clone();
        pa.drift = problem.drift.mollify(ea);
        let mut pb = problem.clone();
        pb.drift = problem.drift.mollify(eb);
        let fa = mc_field(&pa, t, grid_resolution, n_paths, dt, seed)?;
        let fb = mc_field(&pb, t, grid_resolution, n_paths, dt, seed)?;
        let mut sup: f64 = 0.0;
        let mut l1 = 0.0;
        let mut se2 = 0.0;
        for ((ea_est, eb_est), w) in fa
            .estimates
            .iter()
            .zip(&fb.estimates)
            .zip(&fa.weights)
        {
            let gap = (ea_est.mean - eb_est.mean).abs();
            sup = sup.max(gap);
            l1 += w * gap;
            se2 += ea_est.se * ea_est.se + eb_est.se * eb_est.se;
        }
        rows.push(IndependenceRow {
            level,
            eps_a: ea,
            eps_b: eb,
            sup,
            l1,
            pooled_se: (se2 / fa.estimates.len().max(1) as f64).sqrt(),
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HypothesisStatus {
    Pass,
    Warn,
}

#[derive(Debug, Clone)]
pub struct HypothesisEntry {
    pub name: String,
    pub value: f64,
    pub status: HypothesisStatus,
    pub note: String,
}

#[derive(Debug, Clone)]
pub struct HypothesisReport {
    pub entries: Vec<HypothesisEntry>,
    pub all_pass: bool,
}

/// Check the standing drift hypotheses on a problem: finiteness of the
/// sup-envelopes α and γ, BV-registry flags, the influx-measure mass, and
/// the t = 0 compatibility defect of the data (reported, not enforced).
pub fn hypothesis_report(problem: &TransportProblem, resolution: usize) -> Result<HypothesisReport> {
    let mut entries = Vec::new();
    let ub = uniqueness_bounds(&problem.drift, &problem.domain, problem.horizon, resolution);
    let alpha_max = ub.alpha.iter().cloned().fold(0.0, f64::max);
    let gamma_max = ub.gamma.iter().cloned().fold(0.0, f64::max);
    entries.push(HypothesisEntry {
        name: "drift_bound_alpha".into(),
        value: alpha_max,
        status: if ub.satisfied && !ub.alpha_marginal {
            HypothesisStatus::Pass
        } else {
            HypothesisStatus::Warn
        },
        note: if ub.alpha_marginal {
            "envelope grows sharply toward the horizon; integrability is marginal".into()
        } else {
            "sampled sup-envelope finite".into()
        },
    });
    entries.push(HypothesisEntry {
        name: "divergence_bound_gamma".into(),
        value: gamma_max,
        status: if ub.satisfied && !ub.gamma_marginal {
            HypothesisStatus::Pass
        } else {
            HypothesisStatus::Warn
        },
        note: "positive part of div b; vacuum (negative divergence) is allowed".into(),
    });
    entries.push(HypothesisEntry {
        name: "bv_regularity".into(),
        value: if problem.drift.unbounded_divergence() { 1.0 } else { 0.0 },
        status: if problem.drift.unbounded_divergence() {
            HypothesisStatus::Warn
        } else {
            HypothesisStatus::Pass
        },
        note: match (problem.drift.smoothness(), problem.drift.discontinuity()) {
            (Smoothness::Smooth, _) => "smooth registry field".into(),
            (Smoothness::PiecewiseSmooth, Some(d)) => {
                format!("piecewise-smooth representative with jump set: {d}")
            }
            (Smoothness::PiecewiseSmooth, None) => "piecewise-smooth representative".into(),
        },
    });

    // influx-measure mass over [0, T] x Γ
    let nodes = problem.domain.boundary_quadrature(resolution.max(16))?;
    let n_t = resolution.max(8);
    let mut mass = 0.0;
    for i in 0..n_t {
        let t = (i as f64 + 0.5) * problem.horizon / n_t as f64;
        for bp in &nodes {
            mass += bp.weight
                * problem.drift.flux_decomposition(t, bp).negative_part
                * (problem.horizon / n_t as f64);
        }
    }
    entries.push(HypothesisEntry {
        name: "influx_measure_mass".into(),
        value: mass,
        status: HypothesisStatus::Pass,
        note: "mass of the negative-part flux measure on the lateral boundary".into(),
    });

    let defect = problem.compatibility_defect(resolution.max(16))?;
    entries.push(HypothesisEntry {
        name: "compatibility_defect".into(),
        value: defect,
        status: if defect <= 1e-9 {
            HypothesisStatus::Pass
        } else {
            HypothesisStatus::Warn
        },
        note: "sup over influx nodes of |u0 - ub(0, .)| at t = 0; reported only".into(),
    });

    let all_pass = entries.iter().all(|e| e.status == HypothesisStatus::Pass);
    Ok(HypothesisReport { entries, all_pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::loglog_slope;
    use crate::solver::{BoundaryDatum, InitialDatum};

    #[test]
    fn oracle_preserves_constants() {
        let problems = [
            TransportProblem::new(
                Domain::interval(0.0, 1.0),
                DriftField::constant(1, &[0.7]),
                0.5,
                InitialDatum::Constant { value: 3.0 },
                BoundaryDatum::Constant { value: 3.0 },
                true,
            )
            .unwrap(),
            TransportProblem::new(
                Domain::disk([0.0, 0.0], 1.0),
                DriftField::constant(2, &[0.0, 0.0]),
                0.5,
                InitialDatum::Constant { value: 3.0 },
                BoundaryDatum::Constant { value: 3.0 },
                true,
            )
            .unwrap(),
            TransportProblem::new(
                Domain::box2d([0.0, 0.0], [1.0, 1.0]),
                DriftField::shear(2, 0.5),
                0.5,
                InitialDatum::Constant { value: 3.0 },
                BoundaryDatum::Constant { value: 3.0 },
                true,
            )
            .unwrap(),
        ];
        for p in &problems {
            let sol = parabolic_oracle(p, 40, 0.01, &[0.25, 0.5]).unwrap();
            for ti in 0..2 {
                let v = sol.value_at(ti, pt::axpy(p.domain.center(), 0.3, [1.0, 0.0, 0.0]));
                assert!((v - 3.0).abs() < 1e-12, "{v}");
            }
        }
    }

    #[test]
    fn heat_equation_separation_of_variables() {
        // b = 0 on (0,1), u0 = sin(pi x), ub = 0: w = exp(-pi^2 t / 2) sin(pi x)
        let problem = TransportProblem::new(
            Domain::interval(0.0, 1.0),
            DriftField::constant(1, &[0.0]),
            0.5,
            InitialDatum::Bump { center: [0.5, 0.0, 0.0], radius: 0.5, height: 1.0 },
            BoundaryDatum::Constant { value: 0.0 },
            false,
        )
        .unwrap();
        // the sinusoidal datum is not in the registry; drive the grid values
        // directly through a problem whose u0 the oracle never sees is not
        // possible, so check against a fine-grid self-solution instead for
        // the bump, and the closed form via a custom run below
        let _ = problem;

        let run = |res: usize, dtg: f64| -> f64 {
            // custom scalar march replicating the oracle's scheme on sin data
            let n = res + 1;
            let h = 1.0 / res as f64;
            let mut w: Vec<f64> = (0..n).map(|i| (std::f64::consts::PI * i as f64 * h).sin()).collect();
            let steps = (0.25 / dtg).round() as usize;
            for _ in 0..steps {
                let m = n - 2;
                let r = 0.5 * dtg / (h * h);
                let sub = vec![-r; m - 1];
                let sup = vec![-r; m - 1];
                let diag = vec![1.0 + 2.0 * r; m];
                let mut rhs: Vec<f64> = (1..n - 1).map(|i| w[i]).collect();
                thomas(&sub, &diag, &sup, &mut rhs);
                w[1..n - 1].copy_from_slice(&rhs);
                w[0] = 0.0;
                w[n - 1] = 0.0;
            }
            let exact = |x: f64| (-std::f64::consts::PI.powi(2) * 0.25 / 2.0).exp()
                * (std::f64::consts::PI * x).sin();
            (0..n)
                .map(|i| (w[i] - exact(i as f64 * h)).abs())
                .fold(0.0, f64::max)
        };
        // halving h at fixed tiny dt reduces the error about 4x
        let e1 = run(32, 1e-5);
        let e2 = run(64, 1e-5);
        assert!(e1 / e2 > 3.0, "ratio {}", e1 / e2);
        assert!(e1 < 2e-3);
    }

    #[test]
    fn oracle_residual_is_internally_consistent() {
        // feed the oracle's own output through the FD residual: it must sit at
        // the scheme truncation level, far below O(1)
        let problem = TransportProblem::new(
            Domain::interval(0.0, 1.0),
            DriftField::constant(1, &[0.0]),
            0.5,
            InitialDatum::Bump { center: [0.5, 0.0, 0.0], radius: 0.4, height: 1.0 },
            BoundaryDatum::Constant { value: 0.0 },
            false,
        )
        .unwrap();
        let times = [0.2, 0.21, 0.22];
        let sol = parabolic_oracle(&problem, 512, 1e-4, &times).unwrap();
        let lattice = InteriorLattice::new(&problem.domain, 33, 0.05).unwrap();
        let values: Vec<Vec<f64>> = (0..times.len())
            .map(|ti| lattice.points.iter().map(|&x| sol.value_at(ti, x)).collect())
            .collect();
        let field = ExpectationField {
            beta: Beta::Identity,
            lattice: lattice.clone(),
            times: times.to_vec(),
            ses: vec![vec![0.0; lattice.points.len()]; times.len()],
            values,
            n_paths: 1,
            dt: 1e-4,
            seed: 0,
        };
        let res = parabolic_residual(&field, &problem.drift).unwrap();
        assert!(res.noise_floor == 0.0);
        assert!(res.mean_abs < 0.05, "mean residual {}", res.mean_abs);
    }

    #[test]
    fn analytic_heat_kernel_residual_slope_two() {
        // v(t,x) = exp(-pi^2 t/2) sin(pi x) sampled exactly on lattices of
        // halving h: the FD residual decays at second order
        let domain = Domain::interval(0.0, 1.0);
        let drift = DriftField::constant(1, &[0.0]);
        let mut pts = Vec::new();
        for per_axis in [9, 17, 33] {
            let lattice = InteriorLattice::new(&domain, per_axis, 0.02).unwrap();
            let times = [0.1, 0.100001];
            let exact = |t: f64, x: f64| {
                (-std::f64::consts::PI.powi(2) * t / 2.0).exp() * (std::f64::consts::PI * x).sin()
            };
            let values: Vec<Vec<f64>> = times
                .iter()
                .map(|&t| lattice.points.iter().map(|p| exact(t, p[0])).collect())
                .collect();
            let field = ExpectationField {
                beta: Beta::Identity,
                lattice: lattice.clone(),
                times: times.to_vec(),
                ses: vec![vec![0.0; lattice.points.len()]; 2],
                values,
                n_paths: 1,
                dt: 1e-6,
                seed: 0,
            };
            let res = parabolic_residual(&field, &drift).unwrap();
            pts.push((res.h, res.mean_abs));
        }
        let slope = loglog_slope(&pts);
        assert!((slope - 2.0).abs() < 0.2, "slope {slope}");
    }

    #[test]
    fn constant_expectation_field_has_zero_residual() {
        let problem = TransportProblem::new(
            Domain::disk([0.0, 0.0], 1.0),
            DriftField::constant(2, &[0.3, -0.2]),
            0.5,
            InitialDatum::Constant { value: 2.0 },
            BoundaryDatum::Constant { value: 2.0 },
            true,
        )
        .unwrap();
        let lattice = InteriorLattice::new(&problem.domain, 9, 0.1).unwrap();
        let field =
            renormalized_expectation(&problem, Beta::Identity, &lattice, &[0.2, 0.3], 50, 0.01, 3)
                .unwrap();
        assert!(field.values.iter().flatten().all(|v| *v == 2.0));
        let res = parabolic_residual(&field, &problem.drift).unwrap();
        assert_eq!(res.max_abs, 0.0);
        assert_eq!(res.noise_floor, 0.0);

        // beta = square turns constant c into c^2
        let sq = renormalized_expectation(&problem, Beta::Square, &lattice, &[0.2], 10, 0.01, 3)
            .unwrap();
        assert!(sq.values[0].iter().all(|v| *v == 4.0));
    }

    #[test]
    fn duality_between_monte_carlo_and_oracle() {
        // b = 0 on the disk, u0 radial bump, ub = 0: E u from paths agrees
        // with the radial dual solution within 3 SE plus an exit-bias band
        let problem = TransportProblem::new(
            Domain::disk([0.0, 0.0], 1.0),
            DriftField::constant(2, &[0.0, 0.0]),
            0.25,
            InitialDatum::Bump { center: [0.0, 0.0, 0.0], radius: 0.8, height: 1.0 },
            BoundaryDatum::Constant { value: 0.0 },
            true,
        )
        .unwrap();
        let dt = 2e-3;
        let sol = parabolic_oracle(&problem, 800, 5e-5, &[0.25]).unwrap();
        let points = [[0.0, 0.0, 0.0], [0.3, 0.2, 0.0], [-0.5, 0.1, 0.0]];
        let ests = crate::solver::mc_expectation(&problem, 0.25, &points, 4000, dt, 99).unwrap();
        for est in &ests {
            let exact = sol.value_at(0, est.point);
            let band = 3.0 * est.se + 0.5 * problem.bound() * dt.sqrt();
            assert!(
                (est.mean - exact).abs() <= band,
                "at {:?}: mc {} vs oracle {} (band {band})",
                est.point,
                est.mean,
                exact
            );
        }
    }

    #[test]
    fn mc_fed_residual_stays_below_noise_floor() {
        let problem = TransportProblem::new(
            Domain::disk([0.0, 0.0], 1.0),
            DriftField::constant(2, &[0.0, 0.0]),
            0.25,
            InitialDatum::Bump { center: [0.0, 0.0, 0.0], radius: 0.8, height: 1.0 },
            BoundaryDatum::Constant { value: 0.0 },
            true,
        )
        .unwrap();
        let lattice = InteriorLattice::new(&problem.domain, 9, 0.15).unwrap();
        let field = renormalized_expectation(
            &problem,
            Beta::Square,
            &lattice,
            &[0.2, 0.25],
            2000,
            5e-3,
            21,
        )
        .unwrap();
        let res = parabolic_residual(&field, &problem.drift).unwrap();
        assert!(res.noise_floor > 0.0);
        assert!(
            res.mean_abs <= 3.0 * res.noise_floor,
            "residual {} floor {}",
            res.mean_abs,
            res.noise_floor
        );
    }

    #[test]
    fn mollifier_independence_examples() {
        // constant data: identically zero discrepancy at every level
        let constant = TransportProblem::new(
            Domain::interval(0.0, 1.0),
            DriftField::piecewise_x1(1, 0.5, &[0.8], &[1.2]),
            0.5,
            InitialDatum::Constant { value: 1.0 },
            BoundaryDatum::Constant { value: 1.0 },
            true,
        )
        .unwrap();
        let rows = mollifier_independence(
            &constant,
            &[0.1, 0.05],
            &[0.05, 0.025],
            0.5,
            16,
            50,
            0.01,
            3,
        )
        .unwrap();
        assert!(rows.iter().all(|r| r.sup == 0.0));

        // smooth drift: mollification is near the identity at any eps
        let smooth = TransportProblem::new(
            Domain::interval(0.0, 1.0),
            DriftField::radial(1, &[0.5], 1.0),
            0.25,
            InitialDatum::Linear { coeffs: [1.0, 0.0, 0.0], offset: 0.0 },
            BoundaryDatum::Constant { value: 0.0 },
            true,
        )
        .unwrap();
        let rows =
            mollifier_independence(&smooth, &[0.08, 0.04], &[0.04, 0.02], 0.25, 16, 200, 0.005, 5)
                .unwrap();
        for r in &rows {
            assert!(r.sup <= 3.0 * r.pooled_se + 0.05, "sup {} se {}", r.sup, r.pooled_se);
        }

        // piecewise-constant drift: paired discrepancy decreases over levels
        let piecewise = TransportProblem::new(
            Domain::interval(0.0, 1.0),
            DriftField::piecewise_x1(1, 0.5, &[0.8], &[1.6]),
            0.25,
            InitialDatum::Linear { coeffs: [1.0, 0.0, 0.0], offset: 0.0 },
            BoundaryDatum::Constant { value: 0.0 },
            true,
        )
        .unwrap();
        let rows = mollifier_independence(
            &piecewise,
            &[0.16, 0.08, 0.04],
            &[0.08, 0.04, 0.02],
            0.25,
            24,
            400,
            0.005,
            7,
        )
        .unwrap();
        assert!(rows[1].l1 <= rows[0].l1 + 1e-12, "{} {}", rows[0].l1, rows[1].l1);
        assert!(rows[2].l1 <= rows[1].l1 + 1e-12, "{} {}", rows[1].l1, rows[2].l1);
    }

    #[test]
    fn convex_renormalization_mass_decays_with_absorbing_boundary() {
        // b = 0 on the disk with ub = 0: the spatial integral of E[u²] is
        // non-increasing in t (diffusion plus boundary absorption)
        let problem = TransportProblem::new(
            Domain::disk([0.0, 0.0], 1.0),
            DriftField::constant(2, &[0.0, 0.0]),
            0.25,
            InitialDatum::Bump { center: [0.0, 0.0, 0.0], radius: 0.8, height: 1.0 },
            BoundaryDatum::Constant { value: 0.0 },
            true,
        )
        .unwrap();
        let lattice = InteriorLattice::new(&problem.domain, 9, 0.15).unwrap();
        let field = renormalized_expectation(
            &problem,
            Beta::Square,
            &lattice,
            &[0.15, 0.25],
            2000,
            5e-3,
            33,
        )
        .unwrap();
        let mass = |ti: usize| -> (f64, f64) {
            let m: f64 = field.values[ti].iter().sum();
            let se2: f64 = field.ses[ti].iter().map(|s| s * s).sum();
            (m, se2.sqrt())
        };
        let (m1, s1) = mass(0);
        let (m2, s2) = mass(1);
        assert!(
            m2 <= m1 + 3.0 * (s1 * s1 + s2 * s2).sqrt(),
            "mass grew: {m1} -> {m2}"
        );
    }

    #[test]
    fn hypothesis_report_examples() {
        let good = TransportProblem::new(
            Domain::box2d([0.0, 0.0], [1.0, 1.0]),
            DriftField::constant(2, &[1.0, 0.0]),
            0.5,
            InitialDatum::Linear { coeffs: [1.0, 0.0, 0.0], offset: 0.0 },
            BoundaryDatum::Linear { coeffs: [1.0, 0.0, 0.0], offset: 0.0 },
            true,
        )
        .unwrap();
        let rep = hypothesis_report(&good, 24).unwrap();
        assert!(rep.all_pass, "{:?}", rep.entries);
        let mass = rep
            .entries
            .iter()
            .find(|e| e.name == "influx_measure_mass")
            .unwrap();
        // influx face x1 = 0 of the unit box over T = 0.5
        assert!((mass.value - 0.5).abs() < 1e-6);

        // compressive field: div b = -d <= 0, gamma envelope zero, passes
        let compressive = TransportProblem::new(
            Domain::disk([0.0, 0.0], 1.0),
            DriftField::radial(2, &[0.0, 0.0], -1.0),
            0.5,
            InitialDatum::Constant { value: 0.5 },
            BoundaryDatum::Constant { value: 0.5 },
            true,
        )
        .unwrap();
        let rep = hypothesis_report(&compressive, 16).unwrap();
        assert!(rep.all_pass);

        // radial-unit field carries an unbounded-divergence warning
        let singular = TransportProblem::new(
            Domain::disk([0.0, 0.0], 1.0),
            DriftField::radial_unit(2, &[0.0, 0.0]),
            0.5,
            InitialDatum::Constant { value: 0.0 },
            BoundaryDatum::Constant { value: 0.0 },
            true,
        )
        .unwrap();
        let rep = hypothesis_report(&singular, 16).unwrap();
        assert!(!rep.all_pass);
        let bv = rep.entries.iter().find(|e| e.name == "bv_regularity").unwrap();
        assert_eq!(bv.status, HypothesisStatus::Warn);
    }
}
