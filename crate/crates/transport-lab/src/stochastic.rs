//! Seeded Brownian paths and partition-sum estimators for stochastic
//! integrals on a fixed uniform grid:
//!
//! ```text
//! Itô:          Σ X_{t_k} (B_{t_{k+1} ∧ t} − B_{t_k})
//! Stratonovich: Σ ½ (X_{t_k} + X_{t_{k+1} ∧ t}) (B_{t_{k+1} ∧ t} − B_{t_k})
//! Covariation:  Σ (X_{t_{k+1} ∧ t} − X_{t_k}) (Y_{t_{k+1} ∧ t} − Y_{t_k})
//! ```
//!
//! The three sums satisfy `strat = ito + ½ cov(X, B)` exactly, term by term,
//! which downstream modules exploit as a bit-level bookkeeping check.
//!
//! Path generation derives one independent ChaCha stream per (master seed,
//! path index), so ensembles are reproducible independently of evaluation
//! order and thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{LabError, Point, Result};

/// Discrete d-dimensional Brownian trajectory on a uniform grid.
#[derive(Debug, Clone)]
pub struct BrownianPath {
    dim: usize,
    dt: f64,
    /// `values[k * dim + j]` = B^j at grid time k·dt, k = 0..=n_steps
    values: Vec<f64>,
    seed: u64,
    index: u64,
}

/// Round T/dt to the nearest integer step count, validating divisibility.
pub fn step_count(t_end: f64, dt: f64) -> Result<usize> {
    if dt <= 0.0 || t_end < dt {
        return Err(LabError::Argument(format!(
            "grid: need 0 < dt <= T, got dt = {dt}, T = {t_end}"
        )));
    }
    let n = (t_end / dt).round();
    if (n * dt - t_end).abs() > 1e-9 * t_end.max(1.0) {
        return Err(LabError::Argument(format!(
            "grid: dt = {dt} does not divide T = {t_end}"
        )));
    }
    Ok(n as usize)
}

impl BrownianPath {
    /// Sample a path from the (master seed, path index) stream. Increments
    /// are N(0, dt I_d), drawn step-major.
    pub fn sample(master_seed: u64, path_index: u64, t_end: f64, dt: f64, dim: usize) -> Result<Self> {
        let n = step_count(t_end, dt)?;
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(path_index);
        let sqrt_dt = dt.sqrt();
        let mut values = vec![0.0; (n + 1) * dim];
        for k in 0..n {
            for j in 0..dim {
                let z: f64 = StandardNormal.sample(&mut rng);
                values[(k + 1) * dim + j] = values[k * dim + j] + sqrt_dt * z;
            }
        }
        Ok(Self {
            dim,
            dt,
            values,
            seed: master_seed,
            index: path_index,
        })
    }

    /// The identically-zero path on the same grid (noise-off driving).
    pub fn zero(t_end: f64, dt: f64, dim: usize) -> Result<Self> {
        let n = step_count(t_end, dt)?;
        Ok(Self {
            dim,
            dt,
            values: vec![0.0; (n + 1) * dim],
            seed: 0,
            index: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.values.len() / self.dim - 1
    }

    pub fn t_end(&self) -> f64 {
        self.n_steps() as f64 * self.dt
    }

    pub fn seed(&self) -> (u64, u64) {
        (self.seed, self.index)
    }

    /// B at grid node k, padded to a point.
    pub fn node(&self, k: usize) -> Point {
        let mut p = [0.0; 3];
        for j in 0..self.dim {
            p[j] = self.values[k * self.dim + j];
        }
        p
    }

    /// Increment B_{k+1} − B_k.
    pub fn increment(&self, k: usize) -> Point {
        let mut p = [0.0; 3];
        for j in 0..self.dim {
            p[j] = self.values[(k + 1) * self.dim + j] - self.values[k * self.dim + j];
        }
        p
    }

    /// Component j at an arbitrary time by linear interpolation.
    pub fn component_at(&self, j: usize, t: f64) -> f64 {
        let n = self.n_steps();
        let s = (t / self.dt).clamp(0.0, n as f64);
        let k = (s.floor() as usize).min(n - 1);
        let frac = s - k as f64;
        let a = self.values[k * self.dim + j];
        let b = self.values[(k + 1) * self.dim + j];
        a + frac * (b - a)
    }

    /// Scalar sample path of component j on the same grid.
    pub fn component_sample(&self, j: usize) -> AdaptedSamplePath {
        let n = self.n_steps();
        let values = (0..=n).map(|k| self.values[k * self.dim + j]).collect();
        AdaptedSamplePath::new(self.dt, values)
    }

    /// Keep every `factor`-th node (grid coarsening of the same trajectory).
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        let n = self.n_steps();
        if factor == 0 || n % factor != 0 {
            return Err(LabError::Argument(format!(
                "coarsen: factor {factor} does not divide {n} steps"
            )));
        }
        let mut values = Vec::with_capacity((n / factor + 1) * self.dim);
        for k in (0..=n).step_by(factor) {
            values.extend_from_slice(&self.values[k * self.dim..(k + 1) * self.dim]);
        }
        Ok(Self {
            dim: self.dim,
            dt: self.dt * factor as f64,
            values,
            seed: self.seed,
            index: self.index,
        })
    }
}

/// Scalar samples aligned to a driving path's grid.
#[derive(Debug, Clone)]
pub struct AdaptedSamplePath {
    dt: f64,
    values: Vec<f64>,
}

impl AdaptedSamplePath {
    pub fn new(dt: f64, values: Vec<f64>) -> Self {
        assert!(values.len() >= 2, "sample path needs at least two nodes");
        Self { dt, values }
    }

    /// Sample a function of grid time.
    pub fn from_fn(dt: f64, n_steps: usize, f: impl Fn(f64) -> f64) -> Self {
        Self::new(dt, (0..=n_steps).map(|k| f(k as f64 * dt)).collect())
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.values.len() - 1
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn at(&self, k: usize) -> f64 {
        self.values[k]
    }

    fn interp(&self, s: f64) -> f64 {
        let n = self.n_steps();
        let u = s.clamp(0.0, n as f64);
        let k = (u.floor() as usize).min(n - 1);
        let frac = u - k as f64;
        self.values[k] + frac * (self.values[k + 1] - self.values[k])
    }
}

fn check_aligned(x: &AdaptedSamplePath, dt: f64, n_steps: usize, t: f64) -> Result<()> {
    if x.n_steps() > n_steps || (x.dt() - dt).abs() > 1e-12 * dt.max(1.0) {
        return Err(LabError::Argument(format!(
            "misaligned grids: sample has {} steps of {}, path has {} steps of {}",
            x.n_steps(),
            x.dt(),
            n_steps,
            dt
        )));
    }
    if t > x.n_steps() as f64 * x.dt() + 1e-9 * t.max(1.0) {
        return Err(LabError::Argument(format!(
            "integration time {t} beyond the sampled span {}",
            x.n_steps() as f64 * x.dt()
        )));
    }
    Ok(())
}

/// Iterate (X_k, X_end, ΔY) over intervals [t_k, t_{k+1} ∧ t]; the same
/// truncation is shared by all three estimators so their algebraic relation
/// is exact.
fn partition_terms(
    x: &AdaptedSamplePath,
    y_at: impl Fn(f64) -> f64,
    y_node: impl Fn(usize) -> f64,
    dt: f64,
    t: f64,
) -> Vec<(f64, f64, f64)> {
    let n = x.n_steps();
    let mut terms = Vec::new();
    for k in 0..n {
        let tk = k as f64 * dt;
        if tk >= t {
            break;
        }
        let t_next = ((k + 1) as f64 * dt).min(t);
        let on_grid = t_next == (k + 1) as f64 * dt;
        let x_k = x.at(k);
        let x_end = if on_grid { x.at(k + 1) } else { x.interp(t_next / dt) };
        let dy = if on_grid {
            y_node(k + 1) - y_node(k)
        } else {
            y_at(t_next) - y_node(k)
        };
        terms.push((x_k, x_end, dy));
    }
    terms
}

/// Left-point (Itô) partition sum of ∫ X dB^j up to time t.
pub fn ito_integral(x: &AdaptedSamplePath, b: &BrownianPath, j: usize, t: f64) -> Result<f64> {
    check_aligned(x, b.dt(), b.n_steps(), t)?;
    let terms = partition_terms(x, |s| b.component_at(j, s), |k| b.node(k)[j], b.dt(), t);
    Ok(terms.iter().map(|(xk, _, dy)| xk * dy).sum())
}

/// Midpoint (Stratonovich) partition sum of ∫ X ∘dB^j up to time t.
pub fn stratonovich_integral(
    x: &AdaptedSamplePath,
    b: &BrownianPath,
    j: usize,
    t: f64,
) -> Result<f64> {
    check_aligned(x, b.dt(), b.n_steps(), t)?;
    let terms = partition_terms(x, |s| b.component_at(j, s), |k| b.node(k)[j], b.dt(), t);
    Ok(terms.iter().map(|(xk, xe, dy)| 0.5 * (xk + xe) * dy).sum())
}

/// Discrete covariation [X, Y]_t of two aligned sample paths.
pub fn covariation(x: &AdaptedSamplePath, y: &AdaptedSamplePath, t: f64) -> Result<f64> {
    if x.n_steps() != y.n_steps() || (x.dt() - y.dt()).abs() > 1e-12 * x.dt().max(1.0) {
        return Err(LabError::Argument(
            "misaligned grids: covariation needs matching sample grids".into(),
        ));
    }
    if t > x.n_steps() as f64 * x.dt() + 1e-9 * t.max(1.0) {
        return Err(LabError::Argument(format!(
            "integration time {t} beyond the sampled span"
        )));
    }
    let dt = x.dt();
    let terms = partition_terms(x, |s| y.interp(s / dt), |k| y.at(k), dt, t);
    Ok(terms.iter().map(|(xk, xe, dy)| (xe - xk) * dy).sum())
}

/// Covariation of a sample path against component j of a Brownian path.
pub fn covariation_with_brownian(
    x: &AdaptedSamplePath,
    b: &BrownianPath,
    j: usize,
    t: f64,
) -> Result<f64> {
    check_aligned(x, b.dt(), b.n_steps(), t)?;
    let values = (0..=x.n_steps()).map(|k| b.node(k)[j]).collect();
    covariation(x, &AdaptedSamplePath::new(b.dt(), values), t)
}
