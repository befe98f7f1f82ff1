//! Command-line front end: `mcurv <mode> --config <file> [overrides]`.
//!
//! Exit codes: 0 success, 2 inadmissible data, 3 non-convergence or I/O
//! failure, 4 invalid configuration or arguments. A JSON report is written
//! whenever the configuration could be read.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::{parse_config, Mode, RunConfig};
use crate::continuation::{
    fold_curvature_check, refine_fold, second_solution, trace_branch, weighted_residual_norm,
    residual, BranchPoint, BranchTrace, CurvatureCheck, FoldInfo, StopReason,
};
use crate::diagnostics::{analyze_profile, bv_norm, gradient_blowup_monitor, sup_slope, BlowupRow, DiagnosticsReport};
use crate::error::{Error, Result};
use crate::export::{emit_bifurcation_svg, emit_branch_csv, write_json};
use crate::linearized::{assemble_l, smallest_eigenpair};
use crate::minimal::{bisect_lambda_star, picard_minimal, sweep_branch, LambdaStarEstimate, DEFAULT_MAX_ITER};
use crate::problem::{check_admissibility, ConditionReport, ProblemSpec};
use crate::radial::{build_grid, RadialGrid, MIN_CELLS};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INADMISSIBLE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_CONFIG: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "mcurv", version, about = "Radial prescribed mean curvature solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Minimal solutions at the configured lambda values.
    MinimalBranch(Common),
    /// Extremal parameter by bisection and by continuation.
    LambdaStar(Common),
    /// Continuation through the fold.
    Continue(Common),
    /// Upper-branch solution at a given lambda.
    Second(Common),
    /// A-priori estimates on minimal solutions.
    Diagnose(Common),
    /// Bifurcation diagram.
    Plot(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Replace the configured lambda values.
    #[arg(long, allow_negative_numbers = true)]
    lambda: Option<f64>,
    /// Replace the configured number of cells.
    #[arg(long = "grid-m")]
    grid_m: Option<usize>,
    /// Directory for relative output paths.
    #[arg(long = "out-dir")]
    out_dir: Option<PathBuf>,
}

impl Command {
    fn split(self) -> (Mode, Common) {
        match self {
            Command::MinimalBranch(c) => (Mode::MinimalBranch, c),
            Command::LambdaStar(c) => (Mode::LambdaStar, c),
            Command::Continue(c) => (Mode::Continue, c),
            Command::Second(c) => (Mode::Second, c),
            Command::Diagnose(c) => (Mode::Diagnose, c),
            Command::Plot(c) => (Mode::Plot, c),
        }
    }
}

#[derive(Debug, Default, Serialize)]
pub struct LambdaStarReport {
    pub bisection: Option<LambdaStarEstimate>,
    pub fold: Option<f64>,
    /// `|fold - bisection| / bisection`.
    pub relative_gap: Option<f64>,
    pub apriori_bound: Option<f64>,
    pub within_bound: Option<bool>,
}

#[derive(Debug, Serialize)]
pub struct TraceSummary {
    pub points: usize,
    pub fold_index: Option<usize>,
    pub stop: StopReason,
    pub jacobian_fd_error: f64,
}

#[derive(Debug, Serialize)]
pub struct RefinedFoldSummary {
    pub lambda: f64,
    pub mu1: f64,
    pub arclength: f64,
}

#[derive(Debug, Serialize)]
pub struct SecondReport {
    pub lambda: f64,
    pub u0_second: f64,
    pub u0_minimal: f64,
    /// Max-norm distance between the two profiles.
    pub distance: f64,
}

#[derive(Debug, Serialize)]
pub struct SweepSummary {
    pub lambda: f64,
    pub iterations: usize,
    pub u0: f64,
    pub last_change: f64,
}

#[derive(Debug, Serialize)]
pub struct Timing {
    pub total_seconds: f64,
    pub stages: Vec<(String, f64)>,
}

#[derive(Debug, Serialize)]
pub struct RunReport {
    pub tool: &'static str,
    pub version: &'static str,
    pub mode: Mode,
    pub exit_status: i32,
    pub error: Option<String>,
    pub config: toml::Table,
    pub admissibility: ConditionReport,
    pub lambda_star: LambdaStarReport,
    pub trace: Option<TraceSummary>,
    pub fold: Option<FoldInfo>,
    pub fold_refined: Option<RefinedFoldSummary>,
    pub curvature_check: Option<CurvatureCheck>,
    pub minimal_branch: Vec<SweepSummary>,
    pub anomalies: Vec<String>,
    pub second: Option<SecondReport>,
    pub diagnostics: Vec<DiagnosticsReport>,
    pub blowup: Vec<BlowupRow>,
    pub outputs: Vec<PathBuf>,
    pub timing: Timing,
}

struct Session {
    config: RunConfig,
    spec: ProblemSpec,
    grid: RadialGrid,
    report: RunReport,
    clock: Instant,
    stage: Instant,
}

impl Session {
    fn lap(&mut self, name: &str) {
        let now = Instant::now();
        self.report
            .timing
            .stages
            .push((name.to_string(), (now - self.stage).as_secs_f64()));
        self.stage = now;
    }

    fn say(&self, msg: impl AsRef<str>) {
        if self.config.output.verbosity > 0 {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn trace(&mut self) -> Result<BranchTrace> {
        let opts = self.config.run.continuation.options();
        let trace = trace_branch(&self.spec, &self.grid, &opts)?;
        self.lap("continuation");
        self.report.trace = Some(TraceSummary {
            points: trace.points.len(),
            fold_index: trace.fold_index,
            stop: trace.stop,
            jacobian_fd_error: trace.jacobian_fd_error,
        });
        if let Some(fold) = &trace.fold {
            let mut fold = fold.clone();
            let refined = refine_fold(&self.spec, &self.grid, &trace)?;
            let check = fold_curvature_check(
                &self.spec,
                &self.grid,
                &refined.u,
                refined.lambda,
                &refined.w,
                fold.lambda_second_deriv,
            )?;
            fold.curvature_identity_gap = check.gap;
            self.report.lambda_star.fold = Some(fold.lambda_fold);
            self.report.fold_refined = Some(RefinedFoldSummary {
                lambda: refined.lambda,
                mu1: refined.mu1,
                arclength: refined.arclength,
            });
            self.report.curvature_check = Some(check);
            self.report.fold = Some(fold);
            self.lap("fold");
            self.say(format!(
                "fold at lambda = {} after {} points",
                self.report.lambda_star.fold.unwrap_or(f64::NAN),
                trace.points.len()
            ));
        } else {
            self.say(format!("no fold in {} points ({:?})", trace.points.len(), trace.stop));
        }
        Ok(trace)
    }

    fn emit_branch(&mut self, points: &[BranchPoint], fold: Option<&FoldInfo>, csv: bool) -> Result<()> {
        if csv {
            let path = self.config.output.branch_csv.clone();
            emit_branch_csv(points, self.spec.tol.eig_tol, &path)?;
            self.report.outputs.push(path);
        }
        if points.len() >= 2 {
            let path = self.config.output.svg.clone();
            emit_bifurcation_svg(points, fold, &path)?;
            self.report.outputs.push(path);
        }
        Ok(())
    }

    fn bisection(&mut self) -> Result<LambdaStarEstimate> {
        let estimate = bisect_lambda_star(&self.spec, &self.grid)?;
        self.lap("bisection");
        let ls = &mut self.report.lambda_star;
        ls.bisection = Some(estimate);
        ls.apriori_bound = Some(estimate.upper_bound);
        ls.within_bound = Some(estimate.lambda_star <= estimate.upper_bound);
        self.say(format!(
            "lambda* = {} (bound {})",
            estimate.lambda_star, estimate.upper_bound
        ));
        Ok(estimate)
    }

    fn run(&mut self, mode: Mode) -> Result<()> {
        match mode {
            Mode::MinimalBranch => self.minimal_branch(),
            Mode::LambdaStar => {
                let estimate = self.bisection()?;
                let trace = self.trace()?;
                if let Some(fold) = self.report.lambda_star.fold {
                    self.report.lambda_star.relative_gap =
                        Some((fold - estimate.lambda_star).abs() / estimate.lambda_star);
                }
                self.emit_branch(&trace.points, trace.fold.as_ref(), true)?;
                if trace.fold.is_none() {
                    return Err(Error::NoFold);
                }
                Ok(())
            }
            Mode::Continue | Mode::Plot => {
                let trace = self.trace()?;
                self.emit_branch(&trace.points, trace.fold.as_ref(), mode == Mode::Continue)
            }
            Mode::Second => self.second(),
            Mode::Diagnose => self.diagnose(),
        }
    }

    fn minimal_branch(&mut self) -> Result<()> {
        let mut lambdas = self.config.run.lambdas.clone();
        if lambdas.is_empty() {
            return Err(Error::Config("run.lambdas: required for minimal-branch".into()));
        }
        lambdas.sort_by(f64::total_cmp);
        lambdas.dedup();
        let sweep = sweep_branch(&self.spec, &self.grid, &lambdas, None)?;
        self.lap("sweep");

        let mut points = Vec::with_capacity(sweep.points.len());
        let mut arclength = 0.0;
        let mut previous: Option<(&[f64], f64)> = None;
        for (index, sp) in sweep.points.iter().enumerate() {
            let u = sp.profile.values();
            if let Some((pu, pl)) = previous {
                let du: Vec<f64> = u.iter().zip(pu).map(|(a, b)| a - b).collect();
                arclength += (self.grid.weighted_dot(&du, &du) + (sp.lambda - pl).powi(2)).sqrt();
            }
            previous = Some((u, sp.lambda));
            let op = assemble_l(&self.grid, &sp.profile, sp.lambda, &self.spec)?;
            let mu1 = smallest_eigenpair(&op, self.spec.tol.eig_tol)?.mu1;
            let res = residual(&self.spec, &self.grid, u, sp.lambda);
            points.push(BranchPoint {
                index,
                lambda: sp.lambda,
                u0: sp.profile.center_value(),
                sup_ur: sup_slope(&self.spec, &self.grid, &sp.profile, sp.lambda),
                mu1,
                bv_norm: bv_norm(&sp.profile),
                residual: weighted_residual_norm(&self.grid, &res),
                arclength,
                tangent_lambda: 1.0,
                u: Vec::new(),
                tangent_u: Vec::new(),
            });
            self.report.minimal_branch.push(SweepSummary {
                lambda: sp.lambda,
                iterations: sp.iterations,
                u0: sp.profile.center_value(),
                last_change: sp.last_change,
            });
        }
        self.lap("eigenvalues");
        self.report.anomalies = sweep.anomalies;
        if !points.is_empty() {
            self.emit_branch(&points, None, true)?;
        }
        let missing = lambdas.len() - sweep.points.len();
        if missing > 0 {
            return Err(Error::Numerical(format!(
                "Picard iteration failed at {missing} lambda value(s)"
            )));
        }
        Ok(())
    }

    fn second(&mut self) -> Result<()> {
        let trace = self.trace()?;
        let fold = trace.fold.as_ref().ok_or(Error::NoFold)?;
        let lambda = match self.config.run.lambdas.first() {
            Some(&l) => l,
            None => 0.95 * fold.lambda_fold,
        };
        let upper = second_solution(&self.spec, &self.grid, lambda, &trace)?;
        let minimal = picard_minimal(&self.spec, &self.grid, lambda, DEFAULT_MAX_ITER)?;
        self.lap("second solution");
        let distance = upper
            .values()
            .iter()
            .zip(minimal.profile.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        self.report.second = Some(SecondReport {
            lambda,
            u0_second: upper.center_value(),
            u0_minimal: minimal.profile.center_value(),
            distance,
        });
        self.say(format!(
            "lambda = {lambda}: u(0) = {} (minimal {})",
            upper.center_value(),
            minimal.profile.center_value()
        ));
        self.emit_branch(&trace.points, trace.fold.as_ref(), true)
    }

    fn diagnose(&mut self) -> Result<()> {
        let mut lambdas = self.config.run.lambdas.clone();
        if lambdas.is_empty() {
            lambdas.push(0.0);
        }
        let estimate = self.bisection()?;
        let mut profiles = Vec::with_capacity(lambdas.len());
        for &lambda in &lambdas {
            let run = picard_minimal(&self.spec, &self.grid, lambda, DEFAULT_MAX_ITER)?;
            if !run.converged {
                return Err(Error::NoConvergence {
                    iterations: run.iterations,
                    residual: run.last_change,
                });
            }
            let report = analyze_profile(&self.spec, &self.grid, &run.profile, lambda)?;
            self.report.diagnostics.push(report);
            profiles.push((lambda, run.profile));
        }
        let refs: Vec<_> = profiles.iter().map(|(l, p)| (*l, p)).collect();
        self.report.blowup = gradient_blowup_monitor(&self.spec, &refs, estimate.lambda_star);
        self.lap("diagnostics");
        Ok(())
    }
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => EXIT_CONFIG,
        _ => EXIT_NUMERICAL,
    }
}

fn resolve(out_dir: Option<&Path>, path: &Path) -> PathBuf {
    match out_dir {
        Some(dir) => dir.join(path),
        None => path.to_path_buf(),
    }
}

fn load(common: &Common, mode: Mode) -> Result<RunConfig> {
    let text = fs::read_to_string(&common.config).map_err(|e| {
        Error::Config(format!("cannot read {}: {e}", common.config.display()))
    })?;
    let mut config = parse_config(&text)?;
    config.run.mode = mode;
    if let Some(lambda) = common.lambda {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::Config("--lambda: lambda must be >= 0".into()));
        }
        config.run.lambdas = vec![lambda];
    }
    if let Some(m) = common.grid_m {
        if m < MIN_CELLS {
            return Err(Error::Config(format!("--grid-m: M must be >= {MIN_CELLS}")));
        }
        config.cells = m;
    }
    let out_dir = common.out_dir.as_deref();
    let output = &mut config.output;
    output.branch_csv = resolve(out_dir, &output.branch_csv);
    output.report_json = resolve(out_dir, &output.report_json);
    output.svg = resolve(out_dir, &output.svg);
    Ok(config)
}

/// Entry point; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let (mode, common) = cli.command.split();
    let config = match load(&common, mode) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("mcurv: {e}");
            return EXIT_CONFIG;
        }
    };
    if let Some(dir) = &common.out_dir {
        if let Err(e) = fs::create_dir_all(dir) {
            eprintln!("mcurv: cannot create {}: {e}", dir.display());
            return EXIT_NUMERICAL;
        }
    }

    let spec = config.problem.clone();
    let grid = match build_grid(&spec, config.cells) {
        Ok(g) => g,
        Err(e) => {
            eprintln!("mcurv: {e}");
            return EXIT_CONFIG;
        }
    };
    let now = Instant::now();
    let report = RunReport {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        mode,
        exit_status: EXIT_OK,
        error: None,
        config: config.to_table(),
        admissibility: check_admissibility(&spec),
        lambda_star: LambdaStarReport::default(),
        trace: None,
        fold: None,
        fold_refined: None,
        curvature_check: None,
        minimal_branch: Vec::new(),
        anomalies: Vec::new(),
        second: None,
        diagnostics: Vec::new(),
        blowup: Vec::new(),
        outputs: Vec::new(),
        timing: Timing {
            total_seconds: 0.0,
            stages: Vec::new(),
        },
    };
    let mut session = Session {
        config,
        spec,
        grid,
        report,
        clock: now,
        stage: now,
    };

    let status = if !session.report.admissibility.admissible {
        session.report.error = Some("the data violate the admissibility conditions".into());
        eprintln!("mcurv: inadmissible data: {:?}", session.report.admissibility);
        EXIT_INADMISSIBLE
    } else {
        match session.run(mode) {
            Ok(()) => EXIT_OK,
            Err(e) => {
                eprintln!("mcurv: {e}");
                session.report.error = Some(e.to_string());
                exit_code(&e)
            }
        }
    };

    session.report.exit_status = status;
    session.report.timing.total_seconds = session.clock.elapsed().as_secs_f64();
    let path = session.config.output.report_json.clone();
    session.report.outputs.push(path.clone());
    if let Err(e) = write_json(&session.report, &path) {
        eprintln!("mcurv: cannot write report: {e}");
        return EXIT_NUMERICAL;
    }
    status
}
