//! Experiment orchestration: dispatch a validated configuration to the
//! named experiment, write CSV/JSON reports with provenance columns
//! (n_paths, dt, seed on every row), and emit a manifest with a checksum
//! over the numeric outputs. Identical configurations reproduce the
//! checksum whatever the thread count, because every reduction in the
//! library is ordered by path index.

use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use crate::analysis::{
    hypothesis_report, mollifier_independence, parabolic_residual, renormalized_expectation,
    HypothesisStatus, InteriorLattice,
};
use crate::config::{ExperimentConfig, ExperimentKind};
use crate::numeric::loglog_slope;
use crate::report::{csv_cell, ReportSink};
use crate::solver::{deterministic_solution, mc_field, TransportProblem};
use crate::stochastic::BrownianPath;
use crate::testfn::{Support, TestFunction};
use crate::trace::{trace_bound_check, trace_by_deformation, trace_stability, TraceSource};
use crate::weakform::{
    boundary_weakform_residual, coarea_boundary_limit, conversion_corrections, ito_boundary_residual,
    ito_residual, stratonovich_residual, trace_renorm_residual, Beta, WeakFormParams,
    WeakFormReport,
};
use crate::{LabError, Result};

/// Echo of one finished run.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub kind: String,
    pub artifact_version: String,
    pub wall_ms: u128,
    pub outputs: Vec<String>,
    pub checksum_sha256: String,
    /// failed acceptance-style thresholds (CI exit code 4)
    pub threshold_failures: Vec<String>,
    pub config_echo: ExperimentConfig,
}

fn default_taus(problem: &TransportProblem, configured: &[f64]) -> Vec<f64> {
    if configured.is_empty() {
        let c = problem.domain.collar_width();
        vec![c / 2.0, c / 4.0, c / 8.0]
    } else {
        configured.to_vec()
    }
}

fn provenance(n_paths: usize, dt: f64, seed: u64) -> String {
    format!("{n_paths},{dt},{seed}")
}

/// Run one experiment; reports land in `out_dir`, the manifest is
/// `manifest.json` there.
pub fn run(config: &ExperimentConfig, kind: ExperimentKind, out_dir: &Path) -> Result<RunManifest> {
    let issues = config.validate();
    if !issues.is_empty() {
        return Err(LabError::Config(format!(
            "{} validation issue(s); run `validate` for the itemized report",
            issues.len()
        )));
    }
    if let Some(k) = config.kind {
        if k != kind {
            return Err(LabError::Config(format!(
                "config declares kind {} but {} was requested",
                k.name(),
                kind.name()
            )));
        }
    }
    let start = Instant::now();
    let problem = config.problem.build()?;
    let mut sink = ReportSink::new(out_dir)?;
    let mut failures = Vec::new();
    match kind {
        ExperimentKind::Solve => run_solve(config, &problem, &mut sink)?,
        ExperimentKind::Weakform => run_weakform(config, &problem, &mut sink)?,
        ExperimentKind::Trace => run_trace(config, &problem, &mut sink, &mut failures)?,
        ExperimentKind::Renorm => run_renorm(config, &problem, &mut sink, &mut failures)?,
        ExperimentKind::Convergence => run_convergence(config, &problem, &mut sink, &mut failures)?,
        ExperimentKind::Hypothesis => run_hypothesis(config, &problem, &mut sink, &mut failures)?,
    }
    let manifest = RunManifest {
        kind: kind.name().into(),
        artifact_version: env!("CARGO_PKG_VERSION").into(),
        wall_ms: start.elapsed().as_millis(),
        outputs: sink.file_names(),
        checksum_sha256: sink.checksum(),
        threshold_failures: failures,
        config_echo: config.clone(),
    };
    std::fs::write(
        out_dir.join("manifest.json"),
        serde_json::to_vec_pretty(&manifest).map_err(|e| LabError::Config(e.to_string()))?,
    )?;
    Ok(manifest)
}

fn run_solve(config: &ExperimentConfig, problem: &TransportProblem, sink: &mut ReportSink) -> Result<()> {
    let n = &config.numerics;
    let mut rows = Vec::new();
    for &t in &config.times() {
        let snap = mc_field(problem, t, n.interior_resolution, n.n_paths, n.dt, n.master_seed)?;
        for est in &snap.estimates {
            rows.push(format!(
                "{},{},{},{},{},{},{}",
                t,
                est.point[0],
                est.point[1],
                est.point[2],
                est.mean,
                est.se,
                provenance(n.n_paths, n.dt, n.master_seed)
            ));
        }
    }
    sink.write_csv(
        "field.csv",
        "t,x1,x2,x3,estimate,se,n_paths,dt,seed",
        &rows,
    )
}

fn weakform_rows(report: &WeakFormReport, quad_res: usize, seed: u64) -> Vec<String> {
    let mut rows = Vec::new();
    for (ti, &t) in report.times.iter().enumerate() {
        for (name, (means, ses)) in report
            .term_names
            .iter()
            .zip(report.term_mean.iter().zip(&report.term_se))
        {
            rows.push(format!(
                "{},{},{},{},{},{},{},{}",
                t,
                csv_cell(name),
                means[ti],
                ses[ti],
                report.params.n_paths,
                report.params.dt,
                quad_res,
                seed
            ));
        }
    }
    rows
}

#[derive(Serialize)]
struct WeakFormSummary {
    identity: String,
    times: Vec<f64>,
    residual_mean: Vec<f64>,
    residual_se: Vec<f64>,
}

fn run_weakform(
    config: &ExperimentConfig,
    problem: &TransportProblem,
    sink: &mut ReportSink,
) -> Result<()> {
    let n = &config.numerics;
    let params = WeakFormParams {
        times: config.times(),
        n_paths: n.n_paths,
        dt: n.dt,
        interior_resolution: n.interior_resolution,
        boundary_resolution: n.boundary_resolution,
        seed: n.master_seed,
    };
    let center = problem.domain.center();
    let phi_interior = TestFunction::bump(
        &center[..problem.dim()],
        0.9 * problem.domain.inradius(),
        Support::CompactInU,
    );
    let phi_global = TestFunction::one();
    let source = TraceSource::deformation(default_taus(problem, &n.tau_schedule));

    let header = "time,term,mean,se,n_paths,dt,quad_res,seed";
    let mut summaries = Vec::new();
    let mut emit = |sink: &mut ReportSink, name: &str, report: &WeakFormReport| -> Result<()> {
        sink.write_csv(
            &format!("{name}.csv"),
            header,
            &weakform_rows(report, n.interior_resolution, n.master_seed),
        )?;
        summaries.push(WeakFormSummary {
            identity: report.identity.clone(),
            times: report.times.clone(),
            residual_mean: report.residual_mean.clone(),
            residual_se: report.residual_se.clone(),
        });
        Ok(())
    };

    let strat = stratonovich_residual(problem, &phi_interior, &params)?;
    emit(sink, "stratonovich_interior", &strat)?;
    let ito = ito_residual(problem, &phi_interior, &params)?;
    emit(sink, "ito_interior", &ito)?;
    let strat_b = boundary_weakform_residual(problem, &phi_global, &source, &params)?;
    emit(sink, "stratonovich_boundary", &strat_b)?;
    let ito_b = ito_boundary_residual(problem, &phi_global, &source, &params)?;
    emit(sink, "ito_boundary", &ito_b)?;
    let renorm = trace_renorm_residual(problem, &phi_global, Beta::Square, &source, &params)?;
    emit(sink, "trace_renorm_square", &renorm)?;

    let conv = conversion_corrections(problem, &phi_global, &source, &params)?;
    let mut rows = Vec::new();
    for (i, &t) in conv.times.iter().enumerate() {
        for (name, series) in [
            ("i1_measured", &conv.i1_measured),
            ("i1_closed_form", &conv.i1_closed_form),
            ("i2_measured", &conv.i2_measured),
            ("i2_closed_form", &conv.i2_closed_form),
        ] {
            let (m, s) = series[i];
            rows.push(format!(
                "{t},{name},{m},{s},{}",
                provenance(n.n_paths, n.dt, n.master_seed)
            ));
        }
    }
    sink.write_csv(
        "conversion_corrections.csv",
        "time,term,mean,se,n_paths,dt,seed",
        &rows,
    )?;

    // collar boundary-limit table when a mu schedule is configured
    if !n.mu_schedule.is_empty() && problem.dim() >= 2 {
        let tf = TestFunction::coordinate(0);
        let table =
            coarea_boundary_limit(&|_| 1.0, &tf, &problem.domain, 0, &n.mu_schedule)?;
        let rows: Vec<String> = table
            .rows
            .iter()
            .map(|r| {
                format!(
                    "{},{},{},{},{}",
                    r.mu,
                    r.volume_integral,
                    r.error,
                    table.direct_boundary,
                    provenance(n.n_paths, n.dt, n.master_seed)
                )
            })
            .collect();
        sink.write_csv(
            "coarea_limit.csv",
            "mu,volume_integral,error,direct_boundary,n_paths,dt,seed",
            &rows,
        )?;
    }

    sink.write_json("summary.json", &summaries)
}

fn run_trace(
    config: &ExperimentConfig,
    problem: &TransportProblem,
    sink: &mut ReportSink,
    failures: &mut Vec<String>,
) -> Result<()> {
    let n = &config.numerics;
    let taus = default_taus(problem, &n.tau_schedule);
    let all_nodes = problem.domain.boundary_quadrature(n.boundary_resolution)?;
    let stride = (all_nodes.len() / 12).max(1);
    let nodes: Vec<_> = all_nodes.iter().step_by(stride).cloned().collect();
    let times = config.times();
    let samples = trace_by_deformation(
        problem,
        &times,
        &nodes,
        &taus,
        n.n_paths,
        n.dt,
        n.master_seed,
    )?;
    let mut rows = Vec::new();
    for (i, s) in samples.iter().enumerate() {
        let node_id = i % nodes.len();
        rows.push(format!(
            "{},{},{},{},{},{},{},{},{}",
            s.t,
            node_id,
            s.node.position[0],
            s.node.position[1],
            s.node.position[2],
            s.mean,
            s.se,
            problem.bound() - s.mean.abs(),
            provenance(n.n_paths, n.dt, n.master_seed)
        ));
    }
    sink.write_csv(
        "trace.csv",
        "t,node_id,r1,r2,r3,mean_trace,se,m_margin,n_paths,dt,seed",
        &rows,
    )?;

    let bound_report = trace_bound_check(&samples, problem.bound());
    if !bound_report.pass {
        failures.push(format!(
            "trace bound violated {} time(s)",
            bound_report.violations.len()
        ));
    }

    let taus_b: Vec<f64> = taus.iter().map(|t| t * 0.8).collect();
    let stability = trace_stability(
        problem,
        &times,
        &nodes,
        &taus,
        &taus_b,
        3,
        n.n_paths,
        n.dt,
        n.master_seed,
    )?;
    let rows: Vec<String> = stability
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{},{}",
                r.level,
                r.tau_a,
                r.tau_b,
                r.discrepancy,
                r.pooled_se,
                provenance(n.n_paths, n.dt, n.master_seed)
            )
        })
        .collect();
    sink.write_csv(
        "stability.csv",
        "level,tau_a,tau_b,discrepancy,pooled_se,n_paths,dt,seed",
        &rows,
    )?;

    #[derive(Serialize)]
    struct TraceSummary {
        samples: usize,
        bound: f64,
        bound_checked: usize,
        bound_violations: usize,
        pass: bool,
    }
    sink.write_json(
        "summary.json",
        &TraceSummary {
            samples: samples.len(),
            bound: problem.bound(),
            bound_checked: bound_report.checked,
            bound_violations: bound_report.violations.len(),
            pass: bound_report.pass,
        },
    )
}

fn run_renorm(
    config: &ExperimentConfig,
    problem: &TransportProblem,
    sink: &mut ReportSink,
    failures: &mut Vec<String>,
) -> Result<()> {
    let n = &config.numerics;
    // clearance >= 2 stencil spacings: for a box of half-width (inradius - c)
    // the spacing is 2(inradius - c)/(per_axis - 1), so c >= 4in/(per_axis+3)
    let factor = (4.2 / (n.grid_per_axis as f64 + 3.0)).max(0.25);
    let clearance = factor * problem.domain.inradius();
    let lattice = InteriorLattice::new(&problem.domain, n.grid_per_axis, clearance)?;
    let spacing = lattice.spacing[0];
    if clearance < 2.0 * spacing {
        return Err(LabError::Argument(format!(
            "lattice clearance {clearance} below two spacings ({spacing} each); \
             reduce grid_per_axis"
        )));
    }
    let times = if n.times.is_empty() {
        let dtg = n.dt_grid.unwrap_or(10.0 * n.dt);
        let k = (dtg / n.dt).round().max(1.0);
        let dtg = k * n.dt;
        vec![problem.horizon - dtg, problem.horizon]
    } else {
        n.times.clone()
    };
    let field = renormalized_expectation(
        problem,
        Beta::Square,
        &lattice,
        &times,
        n.n_paths,
        n.dt,
        n.master_seed,
    )?;
    let mut rows = Vec::new();
    for (ti, &t) in field.times.iter().enumerate() {
        for (q, &x) in lattice.points.iter().enumerate() {
            rows.push(format!(
                "{},{},{},{},{},{},{}",
                t,
                x[0],
                x[1],
                x[2],
                field.values[ti][q],
                field.ses[ti][q],
                provenance(n.n_paths, n.dt, n.master_seed)
            ));
        }
    }
    sink.write_csv("field.csv", "t,x1,x2,x3,value,se,n_paths,dt,seed", &rows)?;

    let res = parabolic_residual(&field, &problem.drift)?;
    let pass = res.noise_floor == 0.0 || res.mean_abs <= 3.0 * res.noise_floor;
    if !pass {
        failures.push(format!(
            "parabolic residual {} above 3x noise floor {}",
            res.mean_abs, res.noise_floor
        ));
    }
    #[derive(Serialize)]
    struct ResidualSummary {
        mean_abs: f64,
        max_abs: f64,
        noise_floor: f64,
        coarse_warning: bool,
        h: f64,
        dt_grid: f64,
        pass: bool,
    }
    sink.write_json(
        "residual.json",
        &ResidualSummary {
            mean_abs: res.mean_abs,
            max_abs: res.max_abs,
            noise_floor: res.noise_floor,
            coarse_warning: res.coarse_warning,
            h: res.h,
            dt_grid: res.dt_grid,
            pass,
        },
    )?;

    // mollifier-independence table when an eps schedule is configured
    if !n.eps_schedule.is_empty() {
        let eps_b: Vec<f64> = n.eps_schedule.iter().map(|e| e / 2.0).collect();
        let rows_mi = mollifier_independence(
            problem,
            &n.eps_schedule,
            &eps_b,
            *times.last().unwrap(),
            n.interior_resolution,
            n.n_paths,
            n.dt,
            n.master_seed,
        )?;
        let rows: Vec<String> = rows_mi
            .iter()
            .map(|r| {
                format!(
                    "{},{},{},{},{},{},{}",
                    r.level,
                    r.eps_a,
                    r.eps_b,
                    r.sup,
                    r.l1,
                    r.pooled_se,
                    provenance(n.n_paths, n.dt, n.master_seed)
                )
            })
            .collect();
        sink.write_csv(
            "mollifier_independence.csv",
            "level,eps_a,eps_b,sup,l1,pooled_se,n_paths,dt,seed",
            &rows,
        )?;
    }
    Ok(())
}

fn run_convergence(
    config: &ExperimentConfig,
    problem: &TransportProblem,
    sink: &mut ReportSink,
    failures: &mut Vec<String>,
) -> Result<()> {
    if problem.noise {
        return Err(LabError::Usage(
            "convergence experiments compare against the deterministic oracle; set noise = false"
                .into(),
        ));
    }
    let n = &config.numerics;
    let t = *config.times().last().unwrap();
    let points: Vec<crate::Point> = problem
        .domain
        .interior_quadrature(n.interior_resolution.min(8))
        .into_iter()
        .map(|(p, _)| p)
        .collect();
    let levels = n.convergence_levels;
    let dt_finest = n.dt / (1 << (levels - 1)) as f64;
    let reference: Vec<f64> = points
        .iter()
        .map(|&x| deterministic_solution(problem, t, x, dt_finest))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    let mut errs = Vec::new();
    for lvl in 0..levels {
        let dt = n.dt / (1 << lvl) as f64;
        let path = BrownianPath::zero(problem.horizon, dt, problem.dim())?;
        let mut max_err: f64 = 0.0;
        for (&x, &r) in points.iter().zip(&reference) {
            let v = problem.evaluate_pathwise(&path, t, x)?;
            max_err = max_err.max((v - r).abs());
        }
        errs.push((dt, max_err));
        rows.push(format!(
            "{lvl},{dt},{max_err},{}",
            provenance(n.n_paths, dt, n.master_seed)
        ));
    }
    sink.write_csv("convergence.csv", "level,dt,max_error,n_paths,dt_ref,seed", &rows)?;
    let exact_regime = errs.iter().all(|(_, e)| *e <= 1e-10);
    let slope = loglog_slope(&errs);
    if !exact_regime && !(0.8..=1.2).contains(&slope) {
        failures.push(format!("convergence slope {slope} outside [0.8, 1.2]"));
    }
    #[derive(Serialize)]
    struct ConvergenceSummary {
        time: f64,
        slope: f64,
        exact_regime: bool,
        errors: Vec<(f64, f64)>,
    }
    sink.write_json(
        "summary.json",
        &ConvergenceSummary { time: t, slope, exact_regime, errors: errs },
    )
}

fn run_hypothesis(
    config: &ExperimentConfig,
    problem: &TransportProblem,
    sink: &mut ReportSink,
    failures: &mut Vec<String>,
) -> Result<()> {
    let n = &config.numerics;
    let report = hypothesis_report(problem, n.interior_resolution.max(16))?;
    let rows: Vec<String> = report
        .entries
        .iter()
        .map(|e| {
            format!(
                "{},{},{},{},{}",
                csv_cell(&e.name),
                e.value,
                match e.status {
                    HypothesisStatus::Pass => "pass",
                    HypothesisStatus::Warn => "warn",
                },
                csv_cell(&e.note),
                provenance(n.n_paths, n.dt, n.master_seed)
            )
        })
        .collect();
    sink.write_csv(
        "hypothesis.csv",
        "name,value,status,note,n_paths,dt,seed",
        &rows,
    )?;
    for e in &report.entries {
        if !e.value.is_finite() {
            failures.push(format!("hypothesis {} is non-finite", e.name));
        }
    }
    #[derive(Serialize)]
    struct HypSummary {
        all_pass: bool,
        warns: usize,
    }
    sink.write_json(
        "summary.json",
        &HypSummary {
            all_pass: report.all_pass,
            warns: report
                .entries
                .iter()
                .filter(|e| e.status == HypothesisStatus::Warn)
                .count(),
        },
    )
}
