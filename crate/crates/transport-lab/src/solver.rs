//! The initial-boundary value problem object and its pathwise solution by
//! the stopped backward characteristic: the value at (t, x) is the initial
//! datum at the backward foot point when no exit occurs, and the boundary
//! datum at the (refined) exit otherwise. Monte Carlo expectation estimators
//! fan out over path indices and reduce in index order with pairwise sums,
//! so results are bit-identical across thread counts.
//!
//! The boundary datum is defined on all of `[0,T] × Γ`, not only the influx
//! zone: with noise the stopped process can exit anywhere on Γ and the
//! dispatch must have a value there. Influx-only restrictions live in the
//! weak-form boundary integrals, which weight by (b·n)−.
//!
//! No-exit is encoded by a separate flag plus τ = 0, keeping the
//! probability-zero collision between "no exit" and "exit at time 0" out of
//! the data model.

use rayon::prelude::*;

use crate::drift::DriftField;
use crate::flow::{stopped_backward, StoppedCharacteristic};
use crate::geometry::Domain;
use crate::numeric::mean_and_se;
use crate::pt;
use crate::stochastic::BrownianPath;
use crate::{LabError, Point, Result};

/// Initial datum registry: bounded closures with an exact sup bound.
#[derive(Debug, Clone)]
pub enum InitialDatum {
    Constant { value: f64 },
    /// a·x + c
    Linear { coeffs: Point, offset: f64 },
    /// `below` where `x[axis] < threshold`, `above` otherwise
    Indicator { axis: usize, threshold: f64, below: f64, above: f64 },
    /// height · exp(1 − 1/(1 − |x−c|²/R²)) inside the ball, 0 outside
    Bump { center: Point, radius: f64, height: f64 },
}

fn bump_profile(s2: f64) -> f64 {
    if s2 >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - s2)).exp()
    }
}

impl InitialDatum {
    pub fn eval(&self, x: Point) -> f64 {
        match self {
            InitialDatum::Constant { value } => *value,
            InitialDatum::Linear { coeffs, offset } => pt::dot(*coeffs, x) + offset,
            InitialDatum::Indicator { axis, threshold, below, above } => {
                if x[*axis] < *threshold {
                    *below
                } else {
                    *above
                }
            }
            InitialDatum::Bump { center, radius, height } => {
                let d2 = {
                    let d = pt::sub(x, *center);
                    pt::dot(d, d)
                };
                height * bump_profile(d2 / (radius * radius))
            }
        }
    }

    /// Exact sup of |u0| over the bounding box.
    fn sup_abs(&self, lo: Point, hi: Point, dim: usize) -> f64 {
        match self {
            InitialDatum::Constant { value } => value.abs(),
            InitialDatum::Linear { coeffs, offset } => {
                let mut best: f64 = 0.0;
                for corner in 0..(1usize << dim) {
                    let mut v = *offset;
                    for i in 0..dim {
                        let xi = if corner & (1 << i) != 0 { hi[i] } else { lo[i] };
                        v += coeffs[i] * xi;
                    }
                    best = best.max(v.abs());
                }
                best
            }
            InitialDatum::Indicator { below, above, .. } => below.abs().max(above.abs()),
            InitialDatum::Bump { height, .. } => height.abs(),
        }
    }
}

/// Boundary datum on all of `[0,T] × Γ`.
#[derive(Debug, Clone)]
pub enum BoundaryDatum {
    Constant { value: f64 },
    /// a·r + c, frozen in time
    Linear { coeffs: Point, offset: f64 },
    /// base + amplitude · cos(omega t), uniform over Γ
    TimeCosine { base: f64, amplitude: f64, omega: f64 },
}

impl BoundaryDatum {
    pub fn eval(&self, t: f64, r: Point) -> f64 {
        match self {
            BoundaryDatum::Constant { value } => *value,
            BoundaryDatum::Linear { coeffs, offset } => pt::dot(*coeffs, r) + offset,
            BoundaryDatum::TimeCosine { base, amplitude, omega } => {
                base + amplitude * (omega * t).cos()
            }
        }
    }

    fn sup_abs(&self, lo: Point, hi: Point, dim: usize) -> f64 {
        match self {
            BoundaryDatum::Constant { value } => value.abs(),
            BoundaryDatum::Linear { coeffs, offset } => {
                InitialDatum::Linear { coeffs: *coeffs, offset: *offset }.sup_abs(lo, hi, dim)
            }
            BoundaryDatum::TimeCosine { base, amplitude, .. } => base.abs() + amplitude.abs(),
        }
    }
}

/// The transport problem: domain, drift, horizon, data, noise switch, and
/// the data bound M = max(sup|u0|, sup|ub|).
#[derive(Debug, Clone)]
pub struct TransportProblem {
    pub domain: Domain,
    pub drift: DriftField,
    pub horizon: f64,
    pub u0: InitialDatum,
    pub ub: BoundaryDatum,
    pub noise: bool,
    bound: f64,
}

impl TransportProblem {
    pub fn new(
        domain: Domain,
        drift: DriftField,
        horizon: f64,
        u0: InitialDatum,
        ub: BoundaryDatum,
        noise: bool,
    ) -> Result<Self> {
        if drift.dim() != domain.dim() {
            return Err(LabError::Argument(format!(
                "drift dimension {} does not match domain dimension {}",
                drift.dim(),
                domain.dim()
            )));
        }
        if horizon <= 0.0 {
            return Err(LabError::Argument("horizon must be positive".into()));
        }
        let (lo, hi) = domain.bounding_box();
        let bound = u0
            .sup_abs(lo, hi, domain.dim())
            .max(ub.sup_abs(lo, hi, domain.dim()));
        Ok(Self { domain, drift, horizon, u0, ub, noise, bound })
    }

    /// Raise the data bound M (an override may only widen it; the pathwise
    /// maximum principle is stated against the analytic sup).
    pub fn with_bound_override(mut self, m: f64) -> Self {
        self.bound = self.bound.max(m);
        self
    }

    /// Data bound M.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// Driving path for a path index: sampled when noise is on, zero otherwise.
    pub fn driving_path(&self, seed: u64, index: u64, dt: f64) -> Result<BrownianPath> {
        if self.noise {
            BrownianPath::sample(seed, index, self.horizon, dt, self.dim())
        } else {
            BrownianPath::zero(self.horizon, dt, self.dim())
        }
    }

    /// One backward characteristic for this problem.
    pub fn characteristic(
        &self,
        path: &BrownianPath,
        t: f64,
        x: Point,
    ) -> Result<StoppedCharacteristic> {
        stopped_backward(&self.drift, &self.domain, path, t, x)
    }

    /// Pathwise solution value at (t, x) along one driving path.
    pub fn evaluate_pathwise(&self, path: &BrownianPath, t: f64, x: Point) -> Result<f64> {
        if t > self.horizon + 1e-12 {
            return Err(LabError::Argument(format!(
                "query time {t} beyond horizon {}",
                self.horizon
            )));
        }
        let v = if t == 0.0 {
            self.u0.eval(x)
        } else {
            let sc = self.characteristic(path, t, x)?;
            if sc.exited {
                self.ub.eval(sc.tau, sc.terminal)
            } else {
                self.u0.eval(sc.terminal)
            }
        };
        assert!(
            v.abs() <= self.bound + 1e-12,
            "pathwise value {v} exceeds the data bound {}",
            self.bound
        );
        Ok(v)
    }

    /// sup over influx boundary nodes of |u0(r) − ub(0, r)|: how far the data
    /// are from being compatible at t = 0. Reported, never enforced.
    pub fn compatibility_defect(&self, boundary_resolution: usize) -> Result<f64> {
        let mut defect: f64 = 0.0;
        for bp in self.domain.boundary_quadrature(boundary_resolution)? {
            let f = self.drift.flux_decomposition(0.0, &bp);
            if f.influx {
                defect = defect.max((self.u0.eval(bp.position) - self.ub.eval(0.0, bp.position)).abs());
            }
        }
        Ok(defect)
    }
}

/// Monte Carlo estimate of E[u(t, x)] at one point.
#[derive(Debug, Clone)]
pub struct McEstimate {
    pub t: f64,
    pub point: Point,
    pub mean: f64,
    pub se: f64,
    pub n_paths: usize,
    pub seed: u64,
}

/// E[u(t, ·)] at several points sharing one path ensemble. Paths fan out in
/// parallel; per-point reductions run in path-index order.
pub fn mc_expectation(
    problem: &TransportProblem,
    t: f64,
    points: &[Point],
    n_paths: usize,
    dt: f64,
    seed: u64,
) -> Result<Vec<McEstimate>> {
    if n_paths == 0 {
        return Err(LabError::Argument("n_paths must be positive".into()));
    }
    let per_path: Vec<Vec<f64>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| -> Result<Vec<f64>> {
            let path = problem.driving_path(seed, i, dt)?;
            points
                .iter()
                .map(|&x| problem.evaluate_pathwise(&path, t, x))
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(points
        .iter()
        .enumerate()
        .map(|(q, &point)| {
            let values: Vec<f64> = per_path.iter().map(|row| row[q]).collect();
            let (mean, se) = mean_and_se(&values);
            McEstimate { t, point, mean, se, n_paths, seed }
        })
        .collect())
}

/// A field snapshot on interior quadrature nodes.
#[derive(Debug, Clone)]
pub struct FieldSnapshot {
    pub t: f64,
    pub weights: Vec<f64>,
    pub estimates: Vec<McEstimate>,
}

/// E[u(t, ·)] over the interior quadrature grid.
pub fn mc_field(
    problem: &TransportProblem,
    t: f64,
    grid_resolution: usize,
    n_paths: usize,
    dt: f64,
    seed: u64,
) -> Result<FieldSnapshot> {
    let nodes = problem.domain.interior_quadrature(grid_resolution);
    let points: Vec<Point> = nodes.iter().map(|(p, _)| *p).collect();
    let weights = nodes.iter().map(|(_, w)| *w).collect();
    let estimates = mc_expectation(problem, t, &points, n_paths, dt, seed)?;
    Ok(FieldSnapshot { t, weights, estimates })
}

/// Deterministic characteristic solution for noise-off problems, integrated
/// at the refined step dt/16 with the same bisection exit refinement.
pub fn deterministic_solution(
    problem: &TransportProblem,
    t: f64,
    x: Point,
    dt: f64,
) -> Result<f64> {
    if problem.noise {
        return Err(LabError::Usage(
            "deterministic_solution requires a noise-off problem".into(),
        ));
    }
    if t == 0.0 {
        return Ok(problem.u0.eval(x));
    }
    let fine = BrownianPath::zero(problem.horizon, dt / 16.0, problem.dim())?;
    problem.evaluate_pathwise(&fine, t, x)
}
