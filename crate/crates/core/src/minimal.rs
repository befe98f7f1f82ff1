//! Minimal solution branch: monotone Picard iteration from the `lambda = 0`
//! solution, bisection for the extremal parameter, and parameter sweeps.

use rayon::prelude::*;
use serde::Serialize;

use crate::diagnostics::apriori_lambda_bound;
use crate::error::{Error, Result};
use crate::problem::ProblemSpec;
use crate::radial::{sample_h, solve_prescribed, Profile, RadialGrid};

/// Iteration cap used by [`bisect_lambda_star`] and the sweeps. Close to the
/// fold the contraction factor tends to one, so this is deliberately large.
pub const DEFAULT_MAX_ITER: usize = 2_000_000;

/// Slack allowed when certifying `u_k >= u_{k-1}`.
pub const MONOTONE_SLACK: f64 = 1e-12;

/// How a Picard run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PicardExit {
    Converged,
    /// The frozen right-hand side had flux ratio >= 1 inside the ball.
    Supercritical,
    /// `sup u` exceeded the safeguard cap.
    SafeguardCap,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct PicardResult {
    pub profile: Profile,
    pub iterations: usize,
    pub converged: bool,
    pub monotone_certified: bool,
    pub sup_norm_history: Vec<f64>,
    /// Max-node change of the final step.
    pub last_change: f64,
    pub exit: PicardExit,
}

/// `H_i + lambda u_i^p` on the nodes.
pub fn source_rhs(spec: &ProblemSpec, h_nodes: &[f64], u: &[f64], lambda: f64) -> Vec<f64> {
    h_nodes
        .iter()
        .zip(u)
        .map(|(h, &v)| h + lambda * spec.source(v))
        .collect()
}

/// Solution of the `lambda = 0` problem (the lower barrier of every branch).
pub fn underline_u(spec: &ProblemSpec, grid: &RadialGrid) -> Result<Profile> {
    solve_prescribed(grid, &sample_h(spec, grid))
}

/// `100 sup(u0) (1 + R sup H)`: iterates above this are declared divergent.
pub fn safeguard_cap(spec: &ProblemSpec, base: &Profile) -> f64 {
    100.0 * base.sup_norm() * (1.0 + spec.radius * spec.h.sup_on(spec.radius))
}

/// Monotone iteration `u_k = S(H + lambda u_{k-1}^p)` from `u_0 = S(H)`,
/// where `S` is [`solve_prescribed`].
///
/// Stops once the last max-node change is below `picard_tol` and the
/// geometric tail estimated from the observed contraction is below it too.
/// Failure to converge is reported in the result, not as an error.
pub fn picard_minimal(
    spec: &ProblemSpec,
    grid: &RadialGrid,
    lambda: f64,
    max_iter: usize,
) -> Result<PicardResult> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::Domain(format!("lambda = {lambda} must be >= 0")));
    }
    let tol = spec.tol.picard_tol;
    let h_nodes = sample_h(spec, grid);
    let base = solve_prescribed(grid, &h_nodes)?;
    let cap = safeguard_cap(spec, &base);

    let mut current = base;
    let mut history = vec![current.sup_norm()];
    let mut monotone = true;
    let mut previous_change = f64::INFINITY;
    let mut last_change = f64::INFINITY;

    for k in 1..=max_iter.max(1) {
        let rhs = source_rhs(spec, &h_nodes, current.values(), lambda);
        let next = match solve_prescribed(grid, &rhs) {
            Ok(p) => p,
            Err(Error::SupercriticalFlux { .. }) => {
                return Ok(PicardResult {
                    profile: current,
                    iterations: k,
                    converged: false,
                    monotone_certified: monotone,
                    sup_norm_history: history,
                    last_change,
                    exit: PicardExit::Supercritical,
                })
            }
            Err(e) => return Err(e),
        };

        let mut change: f64 = 0.0;
        for (new, old) in next.values().iter().zip(current.values()) {
            change = change.max((new - old).abs());
            if *new < old - MONOTONE_SLACK {
                monotone = false;
            }
        }
        last_change = change;
        current = next;
        let sup = current.sup_norm();
        history.push(sup);

        if sup > cap {
            return Ok(PicardResult {
                profile: current,
                iterations: k,
                converged: false,
                monotone_certified: monotone,
                sup_norm_history: history,
                last_change,
                exit: PicardExit::SafeguardCap,
            });
        }

        if change <= tol {
            let ratio = change / previous_change;
            let tail_ok = ratio < 1.0 && change * ratio / (1.0 - ratio) <= tol;
            if change <= 1e-2 * tol || tail_ok {
                return Ok(PicardResult {
                    profile: current,
                    iterations: k,
                    converged: true,
                    monotone_certified: monotone,
                    sup_norm_history: history,
                    last_change,
                    exit: PicardExit::Converged,
                });
            }
        }
        previous_change = change;
    }

    Ok(PicardResult {
        profile: current,
        iterations: max_iter.max(1),
        converged: false,
        monotone_certified: monotone,
        sup_norm_history: history,
        last_change,
        exit: PicardExit::MaxIterations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LambdaStarEstimate {
    /// Bracket midpoint.
    pub lambda_star: f64,
    /// `(largest lambda that converged, smallest lambda that failed)`.
    pub bracket: (f64, f64),
    pub bisection_steps: usize,
    /// The a-priori upper bound used as the initial right end.
    pub upper_bound: f64,
}

/// Bisection on "the Picard iteration converges" over `[0, bound]`, with
/// `bound` the a-priori limit from the flux condition.
pub fn bisect_lambda_star(spec: &ProblemSpec, grid: &RadialGrid) -> Result<LambdaStarEstimate> {
    let converges = |lambda: f64| -> Result<bool> {
        Ok(picard_minimal(spec, grid, lambda, DEFAULT_MAX_ITER)?.converged)
    };

    if !matches!(converges(0.0), Ok(true)) {
        return Err(Error::Inconsistency(
            "Picard iteration fails at lambda = 0".into(),
        ));
    }
    let bound = apriori_lambda_bound(spec, grid)?;
    if converges(bound)? {
        return Err(Error::Inconsistency(format!(
            "Picard iteration converges at the a-priori bound {bound}"
        )));
    }

    let (mut lo, mut hi) = (0.0, bound);
    let mut steps = 0;
    while hi - lo > spec.tol.bisect_tol {
        let mid = 0.5 * (lo + hi);
        if converges(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
        steps += 1;
    }

    Ok(LambdaStarEstimate {
        lambda_star: 0.5 * (lo + hi),
        bracket: (lo, hi),
        bisection_steps: steps,
        upper_bound: bound,
    })
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub lambda: f64,
    pub profile: Profile,
    pub iterations: usize,
    pub last_change: f64,
}

#[derive(Debug, Clone, Default)]
pub struct SweepResult {
    /// Converged points in increasing `lambda`.
    pub points: Vec<SweepPoint>,
    /// Non-convergence below `lambda* - bisect_tol` and ordering violations.
    pub anomalies: Vec<String>,
}

/// Minimal solutions at each `lambda` (run in parallel, merged in order).
pub fn sweep_branch(
    spec: &ProblemSpec,
    grid: &RadialGrid,
    lambdas: &[f64],
    lambda_star: Option<f64>,
) -> Result<SweepResult> {
    if lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
        return Err(Error::Domain("lambda samples must be >= 0".into()));
    }
    if lambdas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput(
            "lambda samples must be strictly increasing".into(),
        ));
    }

    let runs: Vec<Result<PicardResult>> = lambdas
        .par_iter()
        .map(|&lambda| picard_minimal(spec, grid, lambda, DEFAULT_MAX_ITER))
        .collect();

    let mut out = SweepResult::default();
    for (&lambda, run) in lambdas.iter().zip(runs) {
        let run = run?;
        if !run.converged {
            let below = lambda_star.is_none_or(|ls| lambda < ls - spec.tol.bisect_tol);
            if below {
                out.anomalies.push(format!(
                    "no convergence at lambda = {lambda} ({:?})",
                    run.exit
                ));
            }
            continue;
        }
        if let Some(prev) = out.points.last() {
            let violation = prev
                .profile
                .values()
                .iter()
                .zip(run.profile.values())
                .map(|(a, b)| a - b)
                .fold(f64::MIN, f64::max);
            if violation > 1e-10 {
                out.anomalies.push(format!(
                    "u(lambda={}) exceeds u(lambda={lambda}) by {violation:e}",
                    prev.lambda
                ));
            }
        }
        out.points.push(SweepPoint {
            lambda,
            profile: run.profile,
            iterations: run.iterations,
            last_change: run.last_change,
        });
    }
    Ok(out)
}

/// Minimal solution just below the bisection estimate, approximating the
/// increasing limit `u_lambda -> u*`.
pub fn extremal_solution(
    spec: &ProblemSpec,
    grid: &RadialGrid,
    estimate: &LambdaStarEstimate,
) -> Result<Profile> {
    let lambda = (estimate.lambda_star - spec.tol.bisect_tol).max(0.0);
    let run = picard_minimal(spec, grid, lambda, DEFAULT_MAX_ITER)?;
    if !run.converged {
        return Err(Error::Inconsistency(format!(
            "no convergence at lambda* - tol = {lambda}"
        )));
    }
    if !run.profile.sup_slope().is_finite() {
        return Err(Error::Numerical("extremal profile has infinite slope".into()));
    }
    Ok(run.profile)
}
