//! JSON experiment configuration: a versioned document describing the
//! problem (domain, drift, data, horizon, noise), the numerics (step sizes,
//! path counts, seeds, schedules) and the experiment kind. Validation is
//! structural and never runs numerics.

use serde::{Deserialize, Serialize};

use crate::drift::{DriftField, TimeModulation};
use crate::geometry::{Domain, Poly2};
use crate::solver::{BoundaryDatum, InitialDatum, TransportProblem};
use crate::{pt, LabError, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Solve,
    Weakform,
    Trace,
    Renorm,
    Convergence,
    Hypothesis,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Solve => "solve",
            ExperimentKind::Weakform => "weakform",
            ExperimentKind::Trace => "trace",
            ExperimentKind::Renorm => "renorm",
            ExperimentKind::Convergence => "convergence",
            ExperimentKind::Hypothesis => "hypothesis",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainConfig {
    Interval { a: f64, b: f64 },
    Disk { center: [f64; 2], radius: f64 },
    Annulus { center: [f64; 2], inner: f64, outer: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: [f64; 3], radius: f64 },
    /// polynomial level set Σ c x^i y^j < 0 with an interior seed point
    Levelset {
        coeffs: Vec<(u32, u32, f64)>,
        bbox_lo: [f64; 2],
        bbox_hi: [f64; 2],
        interior: [f64; 2],
    },
}

impl DomainConfig {
    pub fn dim(&self) -> usize {
        match self {
            DomainConfig::Interval { .. } => 1,
            DomainConfig::Disk { .. } | DomainConfig::Annulus { .. } | DomainConfig::Levelset { .. } => 2,
            DomainConfig::Ball { .. } => 3,
            DomainConfig::Box { lo, .. } => lo.len(),
        }
    }

    pub fn build(&self) -> Result<Domain> {
        Ok(match self {
            DomainConfig::Interval { a, b } => Domain::interval(*a, *b),
            DomainConfig::Disk { center, radius } => Domain::disk(*center, *radius),
            DomainConfig::Annulus { center, inner, outer } => {
                Domain::annulus(*center, *inner, *outer)
            }
            DomainConfig::Box { lo, hi } => match lo.len() {
                2 => Domain::box2d([lo[0], lo[1]], [hi[0], hi[1]]),
                3 => Domain::box3d([lo[0], lo[1], lo[2]], [hi[0], hi[1], hi[2]]),
                d => {
                    return Err(LabError::Config(format!(
                        "box domain needs 2 or 3 coordinates, got {d}"
                    )))
                }
            },
            DomainConfig::Ball { center, radius } => Domain::ball(*center, *radius),
            DomainConfig::Levelset { coeffs, bbox_lo, bbox_hi, interior } => {
                Domain::level_set_2d(Poly2::new(coeffs.clone()), *bbox_lo, *bbox_hi, *interior)?
            }
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModulationConfig {
    Cosine { omega: f64 },
    InverseTime { t_star: f64 },
    OffsetCosine { amplitude: f64, omega: f64 },
}

impl ModulationConfig {
    fn build(&self) -> TimeModulation {
        match self {
            ModulationConfig::Cosine { omega } => TimeModulation::Cosine { omega: *omega },
            ModulationConfig::InverseTime { t_star } => {
                TimeModulation::InverseTime { t_star: *t_star }
            }
            ModulationConfig::OffsetCosine { amplitude, omega } => TimeModulation::OffsetCosine {
                amplitude: *amplitude,
                omega: *omega,
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum FieldKindConfig {
    Constant { velocity: Vec<f64> },
    Rotation { center: [f64; 2], omega: f64 },
    Shear { rate: f64 },
    Radial { center: Vec<f64>, rate: f64 },
    PiecewiseX1 { threshold: f64, left: Vec<f64>, right: Vec<f64> },
    RadialUnit { center: Vec<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldConfig {
    #[serde(flatten)]
    pub kind: FieldKindConfig,
    #[serde(default)]
    pub time_modulation: Option<ModulationConfig>,
    /// pre-mollify the drift at this radius
    #[serde(default)]
    pub mollify_eps: Option<f64>,
}

impl FieldConfig {
    pub fn build(&self, dim: usize) -> DriftField {
        let base = match &self.kind {
            FieldKindConfig::Constant { velocity } => DriftField::constant(dim, velocity),
            FieldKindConfig::Rotation { center, omega } => DriftField::rotation(*center, *omega),
            FieldKindConfig::Shear { rate } => DriftField::shear(dim, *rate),
            FieldKindConfig::Radial { center, rate } => DriftField::radial(dim, center, *rate),
            FieldKindConfig::PiecewiseX1 { threshold, left, right } => {
                DriftField::piecewise_x1(dim, *threshold, left, right)
            }
            FieldKindConfig::RadialUnit { center } => DriftField::radial_unit(dim, center),
        };
        let base = match &self.time_modulation {
            Some(m) => base.with_modulation(m.build()),
            None => base,
        };
        match self.mollify_eps {
            Some(eps) => base.mollify(eps),
            None => base,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatumConfig {
    Constant { value: f64 },
    Linear { coeffs: Vec<f64>, offset: f64 },
    Indicator { axis: usize, threshold: f64, below: f64, above: f64 },
    Bump { center: Vec<f64>, radius: f64, height: f64 },
}

impl DatumConfig {
    fn build(&self) -> InitialDatum {
        match self {
            DatumConfig::Constant { value } => InitialDatum::Constant { value: *value },
            DatumConfig::Linear { coeffs, offset } => InitialDatum::Linear {
                coeffs: pt::from_slice(coeffs),
                offset: *offset,
            },
            DatumConfig::Indicator { axis, threshold, below, above } => InitialDatum::Indicator {
                axis: *axis,
                threshold: *threshold,
                below: *below,
                above: *above,
            },
            DatumConfig::Bump { center, radius, height } => InitialDatum::Bump {
                center: pt::from_slice(center),
                radius: *radius,
                height: *height,
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundaryDatumConfig {
    Constant { value: f64 },
    Linear { coeffs: Vec<f64>, offset: f64 },
    TimeCosine { base: f64, amplitude: f64, omega: f64 },
}

impl BoundaryDatumConfig {
    fn build(&self) -> BoundaryDatum {
        match self {
            BoundaryDatumConfig::Constant { value } => BoundaryDatum::Constant { value: *value },
            BoundaryDatumConfig::Linear { coeffs, offset } => BoundaryDatum::Linear {
                coeffs: pt::from_slice(coeffs),
                offset: *offset,
            },
            BoundaryDatumConfig::TimeCosine { base, amplitude, omega } => {
                BoundaryDatum::TimeCosine {
                    base: *base,
                    amplitude: *amplitude,
                    omega: *omega,
                }
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DataConfig {
    pub u0: DatumConfig,
    pub ub: BoundaryDatumConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemConfig {
    pub domain: DomainConfig,
    pub field: FieldConfig,
    pub data: DataConfig,
    pub horizon: f64,
    pub noise: bool,
    #[serde(default)]
    pub bound_override: Option<f64>,
}

impl ProblemConfig {
    pub fn build(&self) -> Result<TransportProblem> {
        let domain = self.domain.build()?;
        let drift = self.field.build(domain.dim());
        let problem = TransportProblem::new(
            domain,
            drift,
            self.horizon,
            self.data.u0.build(),
            self.data.ub.build(),
            self.noise,
        )?;
        Ok(match self.bound_override {
            Some(m) => problem.with_bound_override(m),
            None => problem,
        })
    }
}

fn default_interior_resolution() -> usize {
    16
}

fn default_boundary_resolution() -> usize {
    64
}

fn default_grid_per_axis() -> usize {
    17
}

fn default_levels() -> usize {
    3
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NumericsConfig {
    pub dt: f64,
    pub n_paths: usize,
    pub master_seed: u64,
    #[serde(default = "default_interior_resolution")]
    pub interior_resolution: usize,
    #[serde(default = "default_boundary_resolution")]
    pub boundary_resolution: usize,
    /// evaluation / checked times; defaults to the horizon
    #[serde(default)]
    pub times: Vec<f64>,
    /// decreasing deformation depths; defaults to collar·(1/2, 1/4, 1/8)
    #[serde(default)]
    pub tau_schedule: Vec<f64>,
    /// decreasing mollification radii (renorm experiments)
    #[serde(default)]
    pub eps_schedule: Vec<f64>,
    /// decreasing collar thresholds (coarea checks)
    #[serde(default)]
    pub mu_schedule: Vec<f64>,
    #[serde(default = "default_grid_per_axis")]
    pub grid_per_axis: usize,
    #[serde(default)]
    pub dt_grid: Option<f64>,
    #[serde(default = "default_levels")]
    pub convergence_levels: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub kind: Option<ExperimentKind>,
    pub problem: ProblemConfig,
    pub numerics: NumericsConfig,
    #[serde(default)]
    pub output_dir: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationIssue {
    pub path: String,
    pub message: String,
}

fn check_decreasing(issues: &mut Vec<ValidationIssue>, path: &str, xs: &[f64]) {
    if xs.iter().any(|x| *x <= 0.0) {
        issues.push(ValidationIssue {
            path: path.into(),
            message: "entries must be positive".into(),
        });
    }
    if xs.windows(2).any(|w| w[1] >= w[0]) {
        issues.push(ValidationIssue {
            path: path.into(),
            message: "schedule must be strictly decreasing".into(),
        });
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| LabError::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Structural and invariant checks; returns the itemized failures and
    /// never runs numerics.
    pub fn validate(&self) -> Vec<ValidationIssue> {
        let mut issues = Vec::new();
        let push = |issues: &mut Vec<ValidationIssue>, path: &str, message: &str| {
            issues.push(ValidationIssue { path: path.into(), message: message.into() })
        };
        if self.schema_version != SCHEMA_VERSION {
            push(
                &mut issues,
                "schema_version",
                &format!("expected {SCHEMA_VERSION}"),
            );
        }
        let horizon = self.problem.horizon;
        if !(horizon > 0.0) {
            push(&mut issues, "problem.horizon", "must be positive");
        }
        let dt = self.numerics.dt;
        if !(dt > 0.0) {
            push(&mut issues, "numerics.dt", "must be positive");
        } else if horizon > 0.0 {
            let steps = (horizon / dt).round();
            if steps < 1.0 || (steps * dt - horizon).abs() > 1e-12 * horizon.max(1.0) {
                push(&mut issues, "numerics.dt", "must divide the horizon");
            }
        }
        if self.numerics.n_paths == 0 {
            push(&mut issues, "numerics.n_paths", "must be positive");
        }
        if self.numerics.times.windows(2).any(|w| w[1] <= w[0]) {
            push(&mut issues, "numerics.times", "must be strictly increasing");
        }
        for t in &self.numerics.times {
            if *t <= 0.0 || *t > horizon + 1e-12 {
                push(&mut issues, "numerics.times", "must lie in (0, horizon]");
            } else if dt > 0.0 {
                let k = (t / dt).round();
                if (k * dt - t).abs() > 1e-9 * t.max(1.0) {
                    push(&mut issues, "numerics.times", "must lie on the dt grid");
                }
            }
        }
        check_decreasing(&mut issues, "numerics.tau_schedule", &self.numerics.tau_schedule);
        check_decreasing(&mut issues, "numerics.eps_schedule", &self.numerics.eps_schedule);
        check_decreasing(&mut issues, "numerics.mu_schedule", &self.numerics.mu_schedule);
        if self.numerics.grid_per_axis < 3 {
            push(&mut issues, "numerics.grid_per_axis", "needs at least 3 nodes");
        }
        if self.numerics.convergence_levels == 0 {
            push(&mut issues, "numerics.convergence_levels", "must be positive");
        }

        let dim = self.problem.domain.dim();
        match &self.problem.domain {
            DomainConfig::Interval { a, b } if b <= a => {
                push(&mut issues, "problem.domain", "empty interval")
            }
            DomainConfig::Disk { radius, .. } | DomainConfig::Ball { radius, .. }
                if *radius <= 0.0 =>
            {
                push(&mut issues, "problem.domain.radius", "must be positive")
            }
            DomainConfig::Annulus { inner, outer, .. } if !(0.0 < *inner && inner < outer) => {
                push(&mut issues, "problem.domain", "need 0 < inner < outer")
            }
            DomainConfig::Box { lo, hi } => {
                if lo.len() != hi.len() || !(2..=3).contains(&lo.len()) {
                    push(&mut issues, "problem.domain", "box needs matching 2- or 3-d corners");
                } else if lo.iter().zip(hi).any(|(a, b)| b <= a) {
                    push(&mut issues, "problem.domain", "box corners must be ordered");
                }
            }
            _ => {}
        }
        let field_dim_ok = match &self.problem.field.kind {
            FieldKindConfig::Constant { velocity } => velocity.len() == dim,
            FieldKindConfig::Rotation { .. } | FieldKindConfig::Shear { .. } => dim == 2,
            FieldKindConfig::Radial { center, .. } | FieldKindConfig::RadialUnit { center } => {
                center.len() == dim
            }
            FieldKindConfig::PiecewiseX1 { left, right, .. } => {
                left.len() == dim && right.len() == dim
            }
        };
        if !field_dim_ok {
            push(&mut issues, "problem.field", "dimension does not match the domain");
        }
        if let Some(eps) = self.problem.field.mollify_eps {
            if eps <= 0.0 {
                push(&mut issues, "problem.field.mollify_eps", "must be positive");
            }
        }
        if let DatumConfig::Bump { radius, .. } = &self.problem.data.u0 {
            if *radius <= 0.0 {
                push(&mut issues, "problem.data.u0.radius", "must be positive");
            }
        }
        if let DatumConfig::Indicator { axis, .. } = &self.problem.data.u0 {
            if *axis >= dim {
                push(&mut issues, "problem.data.u0.axis", "outside the domain dimension");
            }
        }
        issues
    }

    /// Checked times, defaulting to the horizon.
    pub fn times(&self) -> Vec<f64> {
        if self.numerics.times.is_empty() {
            vec![self.problem.horizon]
        } else {
            self.numerics.times.clone()
        }
    }
}
