//! Experiment configurations, the built-in benchmark cases, and the file
//! outputs of a run.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::discretization::{build_problem, DiscreteProblem, DiscretizationError};
use crate::metrics::{ControlMetrics, MetricsError, DEFAULT_THRESHOLD};
use crate::plant::{realize_with, InitialValueProblem, PlantError, PlantSpec, Realization};
use crate::solver::{solve, Method, Regularizer, ResidualSample, Solution, SolveError, SolverOptions};
use crate::trajectory::{simulate, Trajectory, TrajectoryError};

pub const SUMMARY_FILE: &str = "summary.csv";
pub const SUMMARY_HEADER: &str =
    "case_no,method,N,lambda,density,l1,l2,linf,max_step,terminal_residual,iterations,wall_ms";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

impl From<PlantError> for ConfigError {
    fn from(e: PlantError) -> Self {
        ConfigError::Invalid(e.to_string())
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("case {case_no}, {method}: {source}")]
    Solve { case_no: usize, method: Method, source: SolveError },
    #[error(transparent)]
    Discretization(#[from] DiscretizationError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl RunError {
    /// Residual history of an infeasible solve, if that is what failed.
    pub fn infeasibility(&self) -> Option<(f64, &[ResidualSample])> {
        match self {
            RunError::Solve { source: SolveError::Infeasible { gap, history, .. }, .. } => {
                Some((*gap, history))
            }
            _ => None,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io { path: path.to_path_buf(), source }
}

/// Optional solver settings; unset fields keep the defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_abs: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_feas: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub over_relaxation: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adaptive_rho: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polish: Option<bool>,
}

impl SolverOverrides {
    pub fn is_empty(&self) -> bool {
        *self == SolverOverrides::default()
    }

    pub fn apply(&self, opts: &mut SolverOptions) {
        if let Some(v) = self.rho {
            opts.rho = v;
        }
        if let Some(v) = self.max_iter {
            opts.max_iter = v;
        }
        if let Some(v) = self.eps_abs {
            opts.eps_abs = v;
        }
        if let Some(v) = self.eps_feas {
            opts.eps_feas = v;
        }
        if let Some(v) = self.over_relaxation {
            opts.over_relaxation = v;
        }
        if let Some(v) = self.adaptive_rho {
            opts.adaptive_rho = v;
        }
        if let Some(v) = self.polish {
            opts.polish = v;
        }
    }

    pub fn options(&self) -> SolverOptions {
        let mut opts = SolverOptions::default();
        self.apply(&mut opts);
        opts
    }
}

fn one() -> f64 {
    1.0
}

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}

fn all_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

fn is_false(b: &bool) -> bool {
    !*b
}

/// One experiment: a plant, an initial state, a horizon and the methods to
/// compare. Complex roots are `[re, im]` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Label used in summaries; 0 for ad-hoc configurations.
    #[serde(default)]
    pub case_no: usize,
    pub poles: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub zeros: Vec<[f64; 2]>,
    #[serde(default = "one")]
    pub gain: f64,
    /// Complex roots are listed once and their conjugates added.
    #[serde(default, skip_serializing_if = "is_false")]
    pub auto_conjugate: bool,
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(rename = "N")]
    pub steps: usize,
    pub xi: Vec<f64>,
    /// Weight of the quadratic term; unused by LASSO.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default = "all_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "one")]
    pub u_max: f64,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default)]
    pub realization: Realization,
    #[serde(default, skip_serializing_if = "SolverOverrides::is_empty")]
    pub solver: SolverOverrides,
}

fn to_roots(pairs: &[[f64; 2]], auto_conjugate: bool) -> Vec<Complex64> {
    let mut roots = Vec::with_capacity(pairs.len() * 2);
    for &[re, im] in pairs {
        roots.push(Complex64::new(re, im));
        if auto_conjugate && im != 0.0 {
            roots.push(Complex64::new(re, -im));
        }
    }
    roots
}

impl ExperimentConfig {
    pub fn plant(&self) -> PlantSpec {
        PlantSpec {
            poles: to_roots(&self.poles, self.auto_conjugate),
            zeros: to_roots(&self.zeros, self.auto_conjugate),
            gain: self.gain,
        }
    }

    pub fn lambda_or_zero(&self) -> f64 {
        self.lambda.unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        let plant = self.plant();
        plant.validate()?;
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return invalid(format!("horizon T must be positive, got {}", self.horizon));
        }
        if self.steps == 0 {
            return invalid("number of samples N must be positive".into());
        }
        if self.xi.len() != plant.order() {
            return invalid(format!(
                "initial state has {} entries but the plant has order {}",
                self.xi.len(),
                plant.order()
            ));
        }
        if self.xi.iter().any(|v| !v.is_finite()) {
            return invalid("initial state must be finite".into());
        }
        if self.methods.is_empty() {
            return invalid("at least one method is required".into());
        }
        match self.lambda {
            Some(l) if !(l >= 0.0 && l.is_finite()) => {
                return invalid(format!("lambda must be nonnegative, got {l}"))
            }
            None if self.methods.iter().any(|m| *m != Method::Lasso) => {
                return invalid("lambda is required for en and clot".into())
            }
            _ => {}
        }
        if !(self.u_max > 0.0 && self.u_max.is_finite()) {
            return invalid(format!("u_max must be positive, got {}", self.u_max));
        }
        if !(self.threshold >= 0.0 && self.threshold.is_finite()) {
            return invalid(format!("threshold must be nonnegative, got {}", self.threshold));
        }
        self.solver.options().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }

    pub fn initial_value_problem(&self) -> Result<InitialValueProblem, ConfigError> {
        let ss = realize_with(&self.plant(), self.realization)?;
        Ok(InitialValueProblem::new(
            ss,
            DVector::from_column_slice(&self.xi),
            self.horizon,
            self.u_max,
        )?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Parse and validate a configuration document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let config: ExperimentConfig = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    parse_config(&text)
}

/// Poles, zeros, horizon, initial state and lambda of one case.
type CaseData = (Vec<[f64; 2]>, Vec<[f64; 2]>, f64, Vec<f64>, f64);

/// The nine benchmark cases.
pub struct CaseRegistry;

impl CaseRegistry {
    pub const COUNT: usize = 9;

    pub fn get(case_no: usize) -> Option<ExperimentConfig> {
        let origin4 = vec![[0.0, 0.0]; 4];
        let lightly_damped = vec![[-0.025, 1.0], [-0.025, -1.0]];
        let six_integrator = vec![
            [0.0, 0.0],
            [0.0, 0.0],
            [0.0, 0.0],
            [0.0, 0.0],
            [0.0, 1.0],
            [0.0, -1.0],
        ];
        let (poles, zeros, horizon, xi, lambda): CaseData =
            match case_no {
                1 => (origin4, vec![], 20.0, vec![1.0; 4], 1.0),
                2 => (origin4, vec![], 20.0, vec![1.0; 4], 0.1),
                3 => (lightly_damped, vec![], 20.0, vec![1.0; 2], 0.1),
                4 => (lightly_damped, vec![], 20.0, vec![10.0, 1.0], 0.1),
                5 => (
                    vec![[-1.0, 0.2], [-1.0, -0.2], [0.0, 1.0], [0.0, -1.0]],
                    vec![[-2.0, 0.0]],
                    20.0,
                    vec![1.0; 4],
                    0.1,
                ),
                6 => (
                    vec![[-1.0, 0.2], [-1.0, -0.2], [-0.3, 1.0], [-0.3, -1.0]],
                    vec![],
                    20.0,
                    vec![1.0; 4],
                    0.1,
                ),
                7 => (
                    vec![
                        [-5.0, 1.0],
                        [-5.0, -1.0],
                        [-0.3, 2.0],
                        [-0.3, -2.0],
                        [-1.0, 8f64.sqrt()],
                        [-1.0, -(8f64.sqrt())],
                    ],
                    vec![],
                    20.0,
                    vec![1.0; 6],
                    0.1,
                ),
                8 => (six_integrator, vec![[2.0, 0.0]], 40.0, vec![1.0; 6], 0.1),
                9 => (six_integrator, vec![[1.0, 0.0], [2.0, 0.0]], 40.0, vec![1.0; 6], 0.1),
                _ => return None,
            };
        Some(ExperimentConfig {
            case_no,
            poles,
            zeros,
            gain: 1.0,
            auto_conjugate: false,
            horizon,
            steps: 2000,
            xi,
            lambda: Some(lambda),
            methods: all_methods(),
            u_max: 1.0,
            threshold: DEFAULT_THRESHOLD,
            realization: Realization::Companion,
            solver: SolverOverrides::default(),
        })
    }

    pub fn all() -> Vec<ExperimentConfig> {
        (1..=Self::COUNT).map(|c| Self::get(c).unwrap()).collect()
    }
}

/// Result of one method on one configuration.
#[derive(Debug, Clone)]
pub struct MethodRun {
    pub case_no: usize,
    pub method: Method,
    pub steps: usize,
    pub h: f64,
    pub lambda: f64,
    pub solution: Solution,
    pub trajectory: Trajectory,
    pub metrics: ControlMetrics,
    pub wall_ms: f64,
}

#[derive(Serialize)]
struct MetricsRecord<'a> {
    case_no: usize,
    method: Method,
    #[serde(rename = "N")]
    steps: usize,
    h: f64,
    lambda: f64,
    metrics: &'a ControlMetrics,
    objective: f64,
    iterations: usize,
    converged: bool,
    primal_residual: f64,
    dual_residual: f64,
    terminal_residual: f64,
    duality_gap: Option<f64>,
    simulated_terminal_norm: f64,
    wall_ms: f64,
}

impl MethodRun {
    pub fn summary_row(&self) -> String {
        let m = &self.metrics;
        format!(
            "{},{},{},{},{},{},{},{},{},{:e},{},{:.3}",
            self.case_no,
            self.method,
            self.steps,
            self.lambda,
            m.sparsity_density,
            m.l1,
            m.l2,
            m.linf,
            m.max_step,
            self.solution.terminal_residual,
            self.solution.iterations,
            self.wall_ms
        )
    }

    pub fn metrics_json(&self) -> String {
        let record = MetricsRecord {
            case_no: self.case_no,
            method: self.method,
            steps: self.steps,
            h: self.h,
            lambda: self.lambda,
            metrics: &self.metrics,
            objective: self.solution.objective,
            iterations: self.solution.iterations,
            converged: self.solution.converged,
            primal_residual: self.solution.primal_residual,
            dual_residual: self.solution.dual_residual,
            terminal_residual: self.solution.terminal_residual,
            duality_gap: self.solution.duality_gap,
            simulated_terminal_norm: self.trajectory.terminal_residual,
            wall_ms: self.wall_ms,
        };
        serde_json::to_string_pretty(&record).expect("metrics serialize")
    }

    /// `t,u,x1..xn,norm_x`; the last row repeats the final input sample.
    pub fn trajectory_csv(&self) -> String {
        let tr = &self.trajectory;
        let n = tr.states.ncols();
        let mut out = String::from("t,u");
        for i in 1..=n {
            write!(out, ",x{i}").unwrap();
        }
        out.push_str(",norm_x\n");
        let norms = tr.state_norms();
        let last = tr.control.len() - 1;
        for (m, t) in tr.times.iter().enumerate() {
            write!(out, "{}", sig12(*t)).unwrap();
            write!(out, ",{}", sig12(tr.control[m.min(last)])).unwrap();
            for v in tr.states.row(m).iter() {
                write!(out, ",{}", sig12(*v)).unwrap();
            }
            writeln!(out, ",{}", sig12(norms[m])).unwrap();
        }
        out
    }
}

/// Twelve significant digits in scientific notation.
fn sig12(v: f64) -> String {
    format!("{v:.11e}")
}

/// Discretize once and solve every requested method. Methods run in
/// parallel; the returned order follows `config.methods`.
pub fn solve_config(config: &ExperimentConfig) -> Result<Vec<MethodRun>, RunError> {
    config.validate()?;
    let ivp = config.initial_value_problem()?;
    let problem = build_problem(&ivp, config.steps)?;
    config
        .methods
        .par_iter()
        .map(|&method| solve_method(config, &problem, method))
        .collect()
}

fn solve_method(
    config: &ExperimentConfig,
    problem: &DiscreteProblem,
    method: Method,
) -> Result<MethodRun, RunError> {
    let lambda = config.lambda_or_zero();
    let reg = Regularizer::new(method, lambda, problem.h())
        .map_err(|source| RunError::Solve { case_no: config.case_no, method, source })?;
    let start = Instant::now();
    let solution = solve(problem, &reg, &config.solver.options())
        .map_err(|source| RunError::Solve { case_no: config.case_no, method, source })?;
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    let trajectory = simulate(&problem.system, &problem.xi, &solution.u)?;
    let metrics = ControlMetrics::compute(solution.u.as_slice(), problem.h(), config.threshold)?;
    Ok(MethodRun {
        case_no: config.case_no,
        method,
        steps: config.steps,
        h: problem.h(),
        lambda,
        solution,
        trajectory,
        metrics,
        wall_ms,
    })
}

/// Output directory name of a configuration inside a run root.
pub fn run_dir_name(config: &ExperimentConfig) -> String {
    if config.case_no > 0 {
        format!("case{}_N{}", config.case_no, config.steps)
    } else {
        format!("custom_N{}", config.steps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WriteOptions {
    /// Record solve times; off gives byte-identical output across runs.
    pub timing: bool,
}

impl Default for WriteOptions {
    fn default() -> Self {
        WriteOptions { timing: true }
    }
}

/// Solve `config` and write `<method>_trajectory.csv`,
/// `<method>_metrics.json` and `summary.csv` into `dir`.
pub fn run_case(
    config: &ExperimentConfig,
    dir: &Path,
    write: WriteOptions,
) -> Result<Vec<MethodRun>, RunError> {
    let mut runs = solve_config(config)?;
    if !write.timing {
        runs.iter_mut().for_each(|r| r.wall_ms = 0.0);
    }
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let config_path = dir.join("config.json");
    fs::write(&config_path, config.to_json() + "\n").map_err(io_err(&config_path))?;
    let mut summary = String::from(SUMMARY_HEADER);
    summary.push('\n');
    for run in &runs {
        let traj = dir.join(format!("{}_trajectory.csv", run.method));
        fs::write(&traj, run.trajectory_csv()).map_err(io_err(&traj))?;
        let metrics = dir.join(format!("{}_metrics.json", run.method));
        fs::write(&metrics, run.metrics_json() + "\n").map_err(io_err(&metrics))?;
        summary.push_str(&run.summary_row());
        summary.push('\n');
    }
    let summary_path = dir.join(SUMMARY_FILE);
    fs::write(&summary_path, summary).map_err(io_err(&summary_path))?;
    Ok(runs)
}

/// Write the residual history of an infeasible solve next to the other
/// outputs of its case.
pub fn write_infeasibility_report(dir: &Path, err: &RunError) -> Result<Option<PathBuf>, RunError> {
    let RunError::Solve { method, source: SolveError::Infeasible { iterations, gap, history }, .. } = err
    else {
        return Ok(None);
    };
    #[derive(Serialize)]
    struct Report<'a> {
        method: Method,
        iterations: usize,
        gap_lower_bound: f64,
        history: &'a [ResidualSample],
    }
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join(format!("{method}_infeasible.json"));
    let body = serde_json::to_string_pretty(&Report {
        method: *method,
        iterations: *iterations,
        gap_lower_bound: *gap,
        history,
    })
    .expect("report serializes");
    fs::write(&path, body + "\n").map_err(io_err(&path))?;
    Ok(Some(path))
}

/// One parsed summary row.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub case_no: usize,
    pub method: Method,
    pub steps: usize,
    pub fields: Vec<String>,
}

impl SummaryRow {
    pub fn density(&self) -> f64 {
        self.fields[4].parse().unwrap_or(f64::NAN)
    }
}

fn summary_files(dir: &Path) -> Result<Vec<PathBuf>, RunError> {
    let direct = dir.join(SUMMARY_FILE);
    if direct.is_file() {
        return Ok(vec![direct]);
    }
    let mut found = Vec::new();
    let entries = fs::read_dir(dir).map_err(io_err(dir))?;
    let mut subdirs: Vec<PathBuf> =
        entries.filter_map(|e| e.ok()).map(|e| e.path()).filter(|p| p.is_dir()).collect();
    subdirs.sort();
    for sub in subdirs {
        found.extend(summary_files(&sub)?);
    }
    Ok(found)
}

/// Collect the summaries under each directory (a run directory or a root
/// holding several), sorted by case, grid and method.
pub fn collect_summaries(dirs: &[PathBuf]) -> Result<Vec<SummaryRow>, RunError> {
    let mut rows = Vec::new();
    for dir in dirs {
        for file in summary_files(dir)? {
            let text = fs::read_to_string(&file).map_err(io_err(&file))?;
            for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
                let fields: Vec<String> = line.split(',').map(str::to_owned).collect();
                let bad = || RunError::Config(ConfigError::Invalid(format!("malformed row in {}: {line}", file.display())));
                if fields.len() != SUMMARY_HEADER.split(',').count() {
                    return Err(bad());
                }
                rows.push(SummaryRow {
                    case_no: fields[0].parse().map_err(|_| bad())?,
                    method: fields[1].parse().map_err(|_| bad())?,
                    steps: fields[2].parse().map_err(|_| bad())?,
                    fields,
                });
            }
        }
    }
    let rank = |m: Method| Method::ALL.iter().position(|x| *x == m).unwrap();
    rows.sort_by_key(|r| (r.case_no, r.steps, rank(r.method)));
    Ok(rows)
}

/// Combined summary CSV and a text table of densities (one column per
/// method, one row per case and grid).
pub fn emit_table(dirs: &[PathBuf]) -> Result<(String, String), RunError> {
    let rows = collect_summaries(dirs)?;
    let mut csv = String::from(SUMMARY_HEADER);
    csv.push('\n');
    for r in &rows {
        csv.push_str(&r.fields.join(","));
        csv.push('\n');
    }

    let mut text = format!("{:>4}  {:>5}  {:>8}  {:>8}  {:>8}\n", "case", "N", "LASSO", "EN", "CLOT");
    let mut i = 0;
    while i < rows.len() {
        let key = (rows[i].case_no, rows[i].steps);
        let mut cells = [None; 3];
        while i < rows.len() && (rows[i].case_no, rows[i].steps) == key {
            let col = Method::ALL.iter().position(|m| *m == rows[i].method).unwrap();
            cells[col] = Some(rows[i].density());
            i += 1;
        }
        write!(text, "{:>4}  {:>5}", key.0, key.1).unwrap();
        for c in cells {
            match c {
                Some(d) => write!(text, "  {d:>8.4}").unwrap(),
                None => write!(text, "  {:>8}", "-").unwrap(),
            }
        }
        text.push('\n');
    }
    Ok((csv, text))
}
