//! Run configuration: a TOML document with sections `[problem]`, `[grid]`,
//! `[run]` and `[output]`.
//!
//! ```toml
//! [problem]
//! n = 2
//! R = 1.0
//! p = 2.0
//! H = { kind = "constant", value = 0.5 }
//!
//! [grid]
//! M = 2048
//!
//! [run]
//! mode = "lambda-star"
//! ```
//!
//! Every error names the offending key path.

use std::path::PathBuf;

use serde::Serialize;
use toml::{Table, Value};

use crate::continuation::ContinuationOptions;
use crate::error::{Error, Result};
use crate::problem::{CurvatureField, CurvatureKind, ProblemSpec, Tolerances};

pub const DEFAULT_CELLS: usize = 2048;
pub const DEFAULT_EPS0: f64 = 0.1;
pub const DEFAULT_DS0: f64 = 0.01;
pub const DEFAULT_MAX_STEPS: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    MinimalBranch,
    LambdaStar,
    Continue,
    Second,
    Diagnose,
    Plot,
}

impl Mode {
    pub const ALL: [Mode; 6] = [
        Mode::MinimalBranch,
        Mode::LambdaStar,
        Mode::Continue,
        Mode::Second,
        Mode::Diagnose,
        Mode::Plot,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mode::MinimalBranch => "minimal-branch",
            Mode::LambdaStar => "lambda-star",
            Mode::Continue => "continue",
            Mode::Second => "second",
            Mode::Diagnose => "diagnose",
            Mode::Plot => "plot",
        }
    }

    pub fn from_name(name: &str) -> Option<Mode> {
        Mode::ALL.into_iter().find(|m| m.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContinuationSettings {
    pub ds0: f64,
    pub max_steps: usize,
    /// Stop the upper branch at this `lambda`.
    pub lambda_stop: f64,
}

impl ContinuationSettings {
    /// Step bounds scale with `ds0`.
    pub fn options(&self) -> ContinuationOptions {
        ContinuationOptions {
            ds0: self.ds0,
            ds_min: self.ds0 * 1e-6,
            ds_max: self.ds0 * 50.0,
            max_steps: self.max_steps,
            lambda_stop: self.lambda_stop,
            ..ContinuationOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSettings {
    pub mode: Mode,
    pub lambdas: Vec<f64>,
    pub continuation: ContinuationSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputSettings {
    pub branch_csv: PathBuf,
    pub report_json: PathBuf,
    pub svg: PathBuf,
    pub verbosity: u8,
}

impl Default for OutputSettings {
    fn default() -> Self {
        Self {
            branch_csv: "branch.csv".into(),
            report_json: "report.json".into(),
            svg: "branch.svg".into(),
            verbosity: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    pub cells: usize,
    pub run: RunSettings,
    pub output: OutputSettings,
}

fn config_err(path: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{path}: {msg}"))
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn section<'a>(root: &'a Table, name: &str) -> Result<&'a Table> {
    match root.get(name) {
        Some(Value::Table(t)) => Ok(t),
        Some(_) => Err(config_err(name, "expected a table")),
        None => Err(config_err(name, "missing section")),
    }
}

fn optional_section<'a>(root: &'a Table, path: &str, name: &str) -> Result<Option<&'a Table>> {
    match root.get(name) {
        Some(Value::Table(t)) => Ok(Some(t)),
        Some(_) => Err(config_err(&join(path, name), "expected a table")),
        None => Ok(None),
    }
}

fn reject_unknown(table: &Table, path: &str, known: &[&str]) -> Result<()> {
    match table.keys().find(|k| !known.contains(&k.as_str())) {
        Some(k) => Err(config_err(&join(path, k), "unknown key")),
        None => Ok(()),
    }
}

fn as_f64(value: &Value, path: &str) -> Result<f64> {
    let v = match value {
        Value::Float(f) => *f,
        Value::Integer(i) => *i as f64,
        _ => return Err(config_err(path, "expected a number")),
    };
    if !v.is_finite() {
        return Err(config_err(path, "must be finite"));
    }
    Ok(v)
}

fn get_f64(table: &Table, path: &str, key: &str) -> Result<Option<f64>> {
    table
        .get(key)
        .map(|v| as_f64(v, &format!("{path}.{key}")))
        .transpose()
}

fn require_f64(table: &Table, path: &str, key: &str) -> Result<f64> {
    get_f64(table, path, key)?.ok_or_else(|| config_err(&format!("{path}.{key}"), "missing key"))
}

fn get_uint(table: &Table, path: &str, key: &str) -> Result<Option<u64>> {
    match table.get(key) {
        None => Ok(None),
        Some(Value::Integer(i)) if *i >= 0 => Ok(Some(*i as u64)),
        Some(_) => Err(config_err(
            &format!("{path}.{key}"),
            "expected a non-negative integer",
        )),
    }
}

fn get_f64_list(table: &Table, path: &str, key: &str) -> Result<Option<Vec<f64>>> {
    let full = format!("{path}.{key}");
    match table.get(key) {
        None => Ok(None),
        Some(Value::Array(items)) => items
            .iter()
            .enumerate()
            .map(|(i, v)| as_f64(v, &format!("{full}[{i}]")))
            .collect::<Result<Vec<_>>>()
            .map(Some),
        Some(_) => Err(config_err(&full, "expected an array of numbers")),
    }
}

fn get_path(table: &Table, path: &str, key: &str) -> Result<Option<PathBuf>> {
    match table.get(key) {
        None => Ok(None),
        Some(Value::String(s)) if !s.is_empty() => Ok(Some(PathBuf::from(s))),
        Some(_) => Err(config_err(&format!("{path}.{key}"), "expected a non-empty path")),
    }
}

fn parse_curvature(problem: &Table) -> Result<CurvatureField> {
    let path = "problem.H";
    let table = match problem.get("H") {
        Some(Value::Table(t)) => t,
        Some(Value::Float(_)) | Some(Value::Integer(_)) => {
            let v = as_f64(&problem["H"], path)?;
            return CurvatureField::constant(v).map_err(|e| config_err(path, e));
        }
        Some(_) => return Err(config_err(path, "expected a table or a number")),
        None => return Err(config_err(path, "missing key")),
    };
    reject_unknown(table, path, &["kind", "value", "coefficients"])?;
    let kind = match table.get("kind") {
        Some(Value::String(s)) if s == "constant" => CurvatureKind::Constant,
        Some(Value::String(s)) if s == "polynomial" => CurvatureKind::Polynomial,
        Some(_) => {
            return Err(config_err(
                &format!("{path}.kind"),
                "expected \"constant\" or \"polynomial\"",
            ))
        }
        None => return Err(config_err(&format!("{path}.kind"), "missing key")),
    };
    let value = get_f64(table, path, "value")?;
    let coefficients = get_f64_list(table, path, "coefficients")?;
    let field = match (kind, value, coefficients) {
        (CurvatureKind::Constant, Some(v), None) => CurvatureField::constant(v),
        (CurvatureKind::Constant, None, Some(c)) if c.len() == 1 => CurvatureField::constant(c[0]),
        (CurvatureKind::Constant, _, _) => {
            return Err(config_err(
                &format!("{path}.value"),
                "constant H needs exactly one value",
            ))
        }
        (CurvatureKind::Polynomial, None, Some(c)) => CurvatureField::polynomial(c),
        (CurvatureKind::Polynomial, _, _) => {
            return Err(config_err(
                &format!("{path}.coefficients"),
                "polynomial H needs a coefficient list and no value",
            ))
        }
    };
    field.map_err(|e| config_err(path, e))
}

fn parse_problem(root: &Table) -> Result<ProblemSpec> {
    let path = "problem";
    let table = section(root, path)?;
    reject_unknown(table, path, &["n", "R", "p", "H", "eps0", "tol"])?;
    let n = get_uint(table, path, "n")?.ok_or_else(|| config_err("problem.n", "missing key"))?;
    if n < 1 || n > u64::from(u32::MAX) {
        return Err(config_err("problem.n", "n must be >= 1"));
    }
    let radius = require_f64(table, path, "R")?;
    if radius <= 0.0 {
        return Err(config_err("problem.R", "R must be > 0"));
    }
    let p = require_f64(table, path, "p")?;
    if p < 1.0 {
        return Err(config_err("problem.p", "p must be >= 1"));
    }
    let eps0 = get_f64(table, path, "eps0")?.unwrap_or(DEFAULT_EPS0);
    if !(eps0 > 0.0 && eps0 < 1.0) {
        return Err(config_err("problem.eps0", "eps0 must lie in (0, 1)"));
    }
    let h = parse_curvature(table)?;

    let mut tol = Tolerances::default();
    if let Some(t) = optional_section(table, path, "tol")? {
        let tpath = "problem.tol";
        reject_unknown(t, tpath, &["picard_tol", "newton_tol", "eig_tol", "bisect_tol"])?;
        let slots = [
            ("picard_tol", &mut tol.picard_tol),
            ("newton_tol", &mut tol.newton_tol),
            ("eig_tol", &mut tol.eig_tol),
            ("bisect_tol", &mut tol.bisect_tol),
        ];
        for (key, slot) in slots {
            if let Some(v) = get_f64(t, tpath, key)? {
                if v <= 0.0 {
                    return Err(config_err(&format!("{tpath}.{key}"), "must be positive"));
                }
                *slot = v;
            }
        }
    }
    ProblemSpec::with_options(n as u32, radius, p, h, eps0, tol).map_err(|e| config_err(path, e))
}

fn parse_run(root: &Table) -> Result<RunSettings> {
    let path = "run";
    let table = section(root, path)?;
    reject_unknown(
        table,
        path,
        &["mode", "lambdas", "lambda_range", "ds0", "max_steps", "lambda_stop"],
    )?;
    let mode = match table.get("mode") {
        Some(Value::String(s)) => Mode::from_name(s).ok_or_else(|| {
            config_err("run.mode", format!("unknown mode \"{s}\""))
        })?,
        Some(_) => return Err(config_err("run.mode", "expected a string")),
        None => return Err(config_err("run.mode", "missing key")),
    };

    let list = get_f64_list(table, path, "lambdas")?;
    let range = get_f64_list(table, path, "lambda_range")?;
    let lambdas = match (list, range) {
        (Some(_), Some(_)) => {
            return Err(config_err(
                "run.lambda_range",
                "give either lambdas or lambda_range, not both",
            ))
        }
        (Some(l), None) => l,
        (None, Some(r)) => expand_range(&r)?,
        (None, None) => Vec::new(),
    };
    if let Some(i) = lambdas.iter().position(|l| *l < 0.0) {
        return Err(config_err(&format!("run.lambdas[{i}]"), "lambda must be >= 0"));
    }

    let ds0 = get_f64(table, path, "ds0")?.unwrap_or(DEFAULT_DS0);
    if ds0 <= 0.0 {
        return Err(config_err("run.ds0", "must be positive"));
    }
    let max_steps = get_uint(table, path, "max_steps")?.unwrap_or(DEFAULT_MAX_STEPS as u64);
    if max_steps == 0 {
        return Err(config_err("run.max_steps", "must be positive"));
    }
    let lambda_stop = get_f64(table, path, "lambda_stop")?.unwrap_or(0.0);
    if lambda_stop < 0.0 {
        return Err(config_err("run.lambda_stop", "lambda must be >= 0"));
    }
    Ok(RunSettings {
        mode,
        lambdas,
        continuation: ContinuationSettings {
            ds0,
            max_steps: max_steps as usize,
            lambda_stop,
        },
    })
}

/// `[start, stop, count]` to `count` equally spaced values.
fn expand_range(range: &[f64]) -> Result<Vec<f64>> {
    let path = "run.lambda_range";
    let [start, stop, count] = range else {
        return Err(config_err(path, "expected [start, stop, count]"));
    };
    if count.fract() != 0.0 || *count < 1.0 {
        return Err(config_err(path, "count must be a positive integer"));
    }
    let count = *count as usize;
    if count == 1 {
        return Ok(vec![*start]);
    }
    let step = (stop - start) / (count - 1) as f64;
    Ok((0..count)
        .map(|i| if i + 1 == count { *stop } else { start + step * i as f64 })
        .collect())
}

fn parse_output(root: &Table) -> Result<OutputSettings> {
    let mut out = OutputSettings::default();
    let Some(table) = optional_section(root, "", "output")? else {
        return Ok(out);
    };
    let path = "output";
    reject_unknown(table, path, &["branch_csv", "report_json", "svg", "verbosity"])?;
    if let Some(p) = get_path(table, path, "branch_csv")? {
        out.branch_csv = p;
    }
    if let Some(p) = get_path(table, path, "report_json")? {
        out.report_json = p;
    }
    if let Some(p) = get_path(table, path, "svg")? {
        out.svg = p;
    }
    if let Some(v) = get_uint(table, path, "verbosity")? {
        out.verbosity = u8::try_from(v).map_err(|_| config_err("output.verbosity", "too large"))?;
    }
    Ok(out)
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let root: Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::Config(format!("malformed document: {}", e.message())))?;
    reject_unknown(&root, "", &["problem", "grid", "run", "output"])?;

    let problem = parse_problem(&root)?;
    let cells = match optional_section(&root, "", "grid")? {
        Some(grid) => {
            reject_unknown(grid, "grid", &["M"])?;
            get_uint(grid, "grid", "M")?.map_or(DEFAULT_CELLS, |m| m as usize)
        }
        None => DEFAULT_CELLS,
    };
    if cells < crate::radial::MIN_CELLS {
        return Err(config_err(
            "grid.M",
            format!("M must be >= {}", crate::radial::MIN_CELLS),
        ));
    }
    let run = parse_run(&root)?;
    let output = parse_output(&root)?;
    Ok(RunConfig {
        problem,
        cells,
        run,
        output,
    })
}

impl RunConfig {
    /// The configuration as a TOML table; [`parse_config`] inverts it.
    pub fn to_table(&self) -> Table {
        let spec = &self.problem;
        let mut h = Table::new();
        match spec.h.kind() {
            CurvatureKind::Constant => {
                h.insert("kind".into(), "constant".into());
                h.insert("value".into(), spec.h.coefficients()[0].into());
            }
            CurvatureKind::Polynomial => {
                h.insert("kind".into(), "polynomial".into());
                h.insert("coefficients".into(), spec.h.coefficients().to_vec().into());
            }
        }
        let mut tol = Table::new();
        tol.insert("picard_tol".into(), spec.tol.picard_tol.into());
        tol.insert("newton_tol".into(), spec.tol.newton_tol.into());
        tol.insert("eig_tol".into(), spec.tol.eig_tol.into());
        tol.insert("bisect_tol".into(), spec.tol.bisect_tol.into());

        let mut problem = Table::new();
        problem.insert("n".into(), i64::from(spec.n).into());
        problem.insert("R".into(), spec.radius.into());
        problem.insert("p".into(), spec.p.into());
        problem.insert("eps0".into(), spec.eps0.into());
        problem.insert("H".into(), h.into());
        problem.insert("tol".into(), tol.into());

        let mut grid = Table::new();
        grid.insert("M".into(), (self.cells as i64).into());

        let mut run = Table::new();
        run.insert("mode".into(), self.run.mode.name().into());
        run.insert("lambdas".into(), self.run.lambdas.clone().into());
        run.insert("ds0".into(), self.run.continuation.ds0.into());
        run.insert(
            "max_steps".into(),
            (self.run.continuation.max_steps as i64).into(),
        );
        run.insert("lambda_stop".into(), self.run.continuation.lambda_stop.into());

        let path = |p: &PathBuf| Value::from(p.to_string_lossy().into_owned());
        let mut output = Table::new();
        output.insert("branch_csv".into(), path(&self.output.branch_csv));
        output.insert("report_json".into(), path(&self.output.report_json));
        output.insert("svg".into(), path(&self.output.svg));
        output.insert("verbosity".into(), i64::from(self.output.verbosity).into());

        let mut root = Table::new();
        root.insert("problem".into(), problem.into());
        root.insert("grid".into(), grid.into());
        root.insert("run".into(), run.into());
        root.insert("output".into(), output.into());
        root
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.to_table()).expect("configuration tables always serialize")
    }
}
