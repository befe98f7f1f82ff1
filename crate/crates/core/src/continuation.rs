//! Pseudo-arclength continuation of the discrete solution curve
//! `s -> (lambda(s), u(s))` from `(underline-u, 0)` through the fold onto the
//! upper branch.
//!
//! The discrete equation is the finite-volume balance
//!
//! ```text
//! res_i = -(A_{i+1/2} h(s_{i+1/2}) - A_{i-1/2} h(s_{i-1/2})) - V_i (H_i + lambda f(u_i)),
//! ```
//!
//! for `i = 0..M-1`, `h(s) = s / sqrt(1 + s^2)`, zero flux at the origin and
//! `u_M = 0`. Its Jacobian in `u` is the matrix of
//! [`SturmLiouvilleOperator`], so a turning point of the curve is exactly a
//! zero of the first eigenvalue.

use serde::Serialize;

use crate::diagnostics::{bv_norm, sup_slope};
use crate::error::{Error, Result};
use crate::linalg::Tridiagonal;
use crate::linearized::{flux_second_derivative, smallest_eigenpair, SturmLiouvilleOperator};
use crate::minimal::{picard_minimal, underline_u, DEFAULT_MAX_ITER};
use crate::problem::ProblemSpec;
use crate::radial::{sample_h, Profile, RadialGrid};

/// Newton iterations allowed per corrector call.
pub const MAX_NEWTON_ITER: usize = 25;

/// Steps converging in at most this many Newton iterations enlarge `ds`.
pub const FAST_NEWTON_ITER: usize = 3;

/// Step growth factor after fast convergence.
pub const DS_GROWTH: f64 = 1.3;

/// Points used by the local quadratic fit of `lambda(s)`.
pub const FOLD_FIT_POINTS: usize = 5;

#[inline]
fn flux(s: f64) -> f64 {
    s / (1.0 + s * s).sqrt()
}

/// Discrete residual on nodes `0..M-1`.
pub fn residual(spec: &ProblemSpec, grid: &RadialGrid, u: &[f64], lambda: f64) -> Vec<f64> {
    residual_with(spec, grid, &sample_h(spec, grid), u, lambda)
}

fn residual_with(
    spec: &ProblemSpec,
    grid: &RadialGrid,
    h_nodes: &[f64],
    u: &[f64],
    lambda: f64,
) -> Vec<f64> {
    let m = grid.cells();
    debug_assert_eq!(u.len(), m + 1);
    let dr = grid.dr();
    let areas = grid.half_areas();
    let volumes = grid.volumes();
    let mut out = Vec::with_capacity(m);
    let mut inner = 0.0;
    for i in 0..m {
        let outer = areas[i] * flux((u[i + 1] - u[i]) / dr);
        out.push(-(outer - inner) - volumes[i] * (h_nodes[i] + lambda * spec.source(u[i])));
        inner = outer;
    }
    out
}

/// Largest flux defect `max_i |sum_{j<=i} res_j| / A_{i+1/2}`: the mismatch
/// of `h(u_r)` at each half node. Unlike volume-weighted norms of `res` its
/// rounding floor does not grow with `M`, and it bounds the slope error
/// directly.
pub fn weighted_residual_norm(grid: &RadialGrid, res: &[f64]) -> f64 {
    let mut acc = 0.0;
    let mut worst: f64 = 0.0;
    for (r, a) in res.iter().zip(grid.half_areas()) {
        acc += r;
        worst = worst.max((acc / a).abs());
    }
    worst
}

#[derive(Debug, Clone)]
pub struct Jacobian {
    /// Derivative in `u_0..u_{M-1}`.
    pub matrix: Tridiagonal,
    /// Derivative in `lambda`: `-V_i f(u_i)`.
    pub lambda_column: Vec<f64>,
}

pub fn jacobian(spec: &ProblemSpec, grid: &RadialGrid, u: &[f64], lambda: f64) -> Result<Jacobian> {
    let matrix = SturmLiouvilleOperator::from_nodes(grid, u, lambda, spec)?.matrix();
    let lambda_column = grid
        .volumes()
        .iter()
        .zip(u)
        .take(grid.cells())
        .map(|(v, &x)| -v * spec.source(x))
        .collect();
    Ok(Jacobian {
        matrix,
        lambda_column,
    })
}

/// Largest relative column mismatch between [`jacobian`] and centred
/// differences of [`residual`] with step `step`. Columns are probed three at
/// a time, which is exact for a tridiagonal pattern.
pub fn jacobian_fd_error(
    spec: &ProblemSpec,
    grid: &RadialGrid,
    u: &[f64],
    lambda: f64,
    step: f64,
) -> Result<f64> {
    let m = grid.cells();
    let h_nodes = sample_h(spec, grid);
    let jac = jacobian(spec, grid, u, lambda)?;
    let a = &jac.matrix;
    let rel = |exact: &[f64], approx: &[f64]| {
        let num = exact
            .iter()
            .zip(approx)
            .map(|(e, f)| (e - f).powi(2))
            .sum::<f64>()
            .sqrt();
        let den = exact.iter().map(|e| e * e).sum::<f64>().sqrt();
        if den > 0.0 {
            num / den
        } else {
            num
        }
    };

    let mut worst: f64 = 0.0;
    for colour in 0..3 {
        let mut plus = u.to_vec();
        let mut minus = u.to_vec();
        for j in (colour..m).step_by(3) {
            plus[j] += step;
            minus[j] -= step;
        }
        let rp = residual_with(spec, grid, &h_nodes, &plus, lambda);
        let rm = residual_with(spec, grid, &h_nodes, &minus, lambda);
        let fd: Vec<f64> = rp.iter().zip(&rm).map(|(p, q)| (p - q) / (2.0 * step)).collect();
        for j in (colour..m).step_by(3) {
            let lo = j.saturating_sub(1);
            let hi = (j + 1).min(m - 1);
            let mut exact = Vec::with_capacity(3);
            if j > 0 {
                exact.push(a.sup[j - 1]);
            }
            exact.push(a.diag[j]);
            if j + 1 < m {
                exact.push(a.sub[j]);
            }
            worst = worst.max(rel(&exact, &fd[lo..=hi]));
        }
    }

    let rp = residual_with(spec, grid, &h_nodes, u, lambda + step);
    let rm = residual_with(spec, grid, &h_nodes, u, lambda - step);
    let fd: Vec<f64> = rp.iter().zip(&rm).map(|(p, q)| (p - q) / (2.0 * step)).collect();
    Ok(worst.max(rel(&jac.lambda_column, &fd)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuationState {
    /// Node values, `u_M = 0`.
    pub u: Vec<f64>,
    pub lambda: f64,
    /// `(du, dlambda)` with `sum V du^2 + dlambda^2 = 1`.
    pub tangent_u: Vec<f64>,
    pub tangent_lambda: f64,
    pub ds: f64,
    pub step_index: usize,
}

/// `sum V t_u (u - u_a) + t_lambda (lambda - lambda_a) = ds`.
#[derive(Debug, Clone, Copy)]
pub struct ArclengthConstraint<'a> {
    pub anchor_u: &'a [f64],
    pub anchor_lambda: f64,
    pub tangent_u: &'a [f64],
    pub tangent_lambda: f64,
    pub ds: f64,
}

impl ArclengthConstraint<'_> {
    fn value(&self, grid: &RadialGrid, u: &[f64], lambda: f64) -> f64 {
        let mut acc = self.tangent_lambda * (lambda - self.anchor_lambda);
        for ((v, t), (x, a)) in grid
            .volumes()
            .iter()
            .zip(self.tangent_u)
            .zip(u.iter().zip(self.anchor_u))
        {
            acc += v * t * (x - a);
        }
        acc - self.ds
    }
}

/// Solves `[J b; c^T d] [x; y] = [f; g]` by block elimination.
fn bordered_solve(
    matrix: &Tridiagonal,
    b: &[f64],
    c: &[f64],
    d: f64,
    f: &[f64],
    g: f64,
) -> Result<(Vec<f64>, f64)> {
    let y = matrix.solve(f)?;
    let z = matrix.solve(b)?;
    let dot = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(a, b)| a * b).sum::<f64>();
    let denom = d - dot(c, &z);
    let dl = (g - dot(c, &y)) / denom;
    if !dl.is_finite() {
        return Err(Error::Numerical("singular bordered system".into()));
    }
    let x = y.iter().zip(&z).map(|(y, z)| y - z * dl).collect();
    Ok((x, dl))
}

/// Outcome of a corrector call.
#[derive(Debug, Clone)]
pub struct Corrected {
    pub u: Vec<f64>,
    pub lambda: f64,
    pub iterations: usize,
    /// Weighted residual norm at the returned point.
    pub residual: f64,
}

/// Newton on `[residual = 0; constraint = 0]` from the predictor `state`.
/// After the residual drops below `newton_tol` one more correction is
/// applied, which costs one linear solve and removes the last defect.
pub fn newton_correct(
    grid: &RadialGrid,
    spec: &ProblemSpec,
    state: &ContinuationState,
    constraint: &ArclengthConstraint<'_>,
) -> Result<Corrected> {
    let m = grid.cells();
    let h_nodes = sample_h(spec, grid);
    let weights: Vec<f64> = grid
        .volumes()
        .iter()
        .zip(constraint.tangent_u)
        .take(m)
        .map(|(v, t)| v * t)
        .collect();
    let mut u = state.u.clone();
    u[m] = 0.0;
    let mut lambda = state.lambda;
    let mut norm = f64::INFINITY;
    let mut polished = false;

    for iteration in 0..=MAX_NEWTON_ITER {
        let res = residual_with(spec, grid, &h_nodes, &u, lambda);
        norm = weighted_residual_norm(grid, &res);
        let g = constraint.value(grid, &u, lambda);
        if !norm.is_finite() {
            break;
        }
        if norm <= spec.tol.newton_tol && g.abs() <= spec.tol.newton_tol {
            if polished || iteration == MAX_NEWTON_ITER {
                return Ok(Corrected {
                    u,
                    lambda,
                    iterations: iteration,
                    residual: norm,
                });
            }
            polished = true;
        } else if iteration == MAX_NEWTON_ITER {
            break;
        }
        let jac = jacobian(spec, grid, &u, lambda)?;
        let rhs: Vec<f64> = res.iter().map(|r| -r).collect();
        let (du, dl) = match bordered_solve(
            &jac.matrix,
            &jac.lambda_column,
            &weights,
            constraint.tangent_lambda,
            &rhs,
            -g,
        ) {
            Ok(step) => step,
            Err(_) => break,
        };
        for (x, d) in u.iter_mut().zip(&du) {
            *x += d;
        }
        lambda += dl;
        if polished && norm == 0.0 {
            // already exact; the extra step was a no-op
            return Ok(Corrected {
                u,
                lambda,
                iterations: iteration + 1,
                residual: norm,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: MAX_NEWTON_ITER,
        residual: norm,
    })
}

/// Newton at fixed `lambda` from `seed`.
pub fn newton_fixed_lambda(
    spec: &ProblemSpec,
    grid: &RadialGrid,
    seed: &[f64],
    lambda: f64,
) -> Result<Corrected> {
    let m = grid.cells();
    let h_nodes = sample_h(spec, grid);
    let mut u = seed.to_vec();
    u[m] = 0.0;
    let mut norm = f64::INFINITY;
    let mut polished = false;
    for iteration in 0..=MAX_NEWTON_ITER {
        let res = residual_with(spec, grid, &h_nodes, &u, lambda);
        norm = weighted_residual_norm(grid, &res);
        if !norm.is_finite() {
            break;
        }
        if norm <= spec.tol.newton_tol {
            if polished || iteration == MAX_NEWTON_ITER {
                return Ok(Corrected {
                    u,
                    lambda,
                    iterations: iteration,
                    residual: norm,
                });
            }
            polished = true;
        } else if iteration == MAX_NEWTON_ITER {
            break;
        }
        let jac = jacobian(spec, grid, &u, lambda)?;
        let rhs: Vec<f64> = res.iter().map(|r| -r).collect();
        let Ok(du) = jac.matrix.solve(&rhs) else { break };
        for (x, d) in u.iter_mut().zip(&du) {
            *x += d;
        }
    }
    Err(Error::NoConvergence {
        iterations: MAX_NEWTON_ITER,
        residual: norm,
    })
}

/// Unit tangent at a solution: `J t_u + R_lambda t_lambda = 0`, oriented so
/// that its weighted product with `previous` is positive. Without a previous
/// tangent the orientation is `t_lambda > 0`.
pub fn tangent(
    spec: &ProblemSpec,
    grid: &RadialGrid,
    u: &[f64],
    lambda: f64,
    previous: Option<(&[f64], f64)>,
) -> Result<(Vec<f64>, f64)> {
    let m = grid.cells();
    let jac = jacobian(spec, grid, u, lambda)?;
    let (mut tu, mut tl) = match previous {
        None => {
            let z = jac.matrix.solve(&jac.lambda_column)?;
            (z.iter().map(|z| -z).collect::<Vec<_>>(), 1.0)
        }
        Some((pu, pl)) => {
            let c: Vec<f64> = grid.volumes().iter().zip(pu).take(m).map(|(v, t)| v * t).collect();
            bordered_solve(&jac.matrix, &jac.lambda_column, &c, pl, &vec![0.0; m], 1.0)?
        }
    };
    tu.push(0.0);
    let len = (grid.weighted_dot(&tu, &tu) + tl * tl).sqrt();
    if !(len.is_finite() && len > 0.0) {
        return Err(Error::Numerical("degenerate tangent".into()));
    }
    tu.iter_mut().for_each(|t| *t /= len);
    tl /= len;
    Ok((tu, tl))
}

/// One record per accepted continuation step.
#[derive(Debug, Clone, Serialize)]
pub struct BranchPoint {
    pub index: usize,
    pub lambda: f64,
    pub u0: f64,
    pub sup_ur: f64,
    pub mu1: f64,
    pub bv_norm: f64,
    pub residual: f64,
    pub arclength: f64,
    pub tangent_lambda: f64,
    #[serde(skip)]
    pub u: Vec<f64>,
    #[serde(skip)]
    pub tangent_u: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FoldInfo {
    /// Vertex of the fitted parabola.
    pub lambda_fold: f64,
    #[serde(skip)]
    pub u_fold: Vec<f64>,
    /// Fitted `lambda''` with respect to weighted arclength.
    pub lambda_second_deriv: f64,
    /// Relative gap of the fold curvature identity; NaN until checked.
    pub curvature_identity_gap: f64,
    /// Arclength of the vertex.
    pub arclength: f64,
    /// Fitted `lambda'` at the vertex.
    pub vertex_slope: f64,
    /// Mean spacing of the fitted points.
    pub spacing: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContinuationOptions {
    pub ds0: f64,
    pub ds_min: f64,
    pub ds_max: f64,
    pub max_steps: usize,
    /// Stop once past the fold and `lambda <= lambda_stop`.
    pub lambda_stop: f64,
    /// Finite-difference Jacobian check every this many steps (0 disables).
    pub jacobian_check_every: usize,
    /// Minimal weighted cosine between consecutive tangents; sharper turns
    /// are retried with half the step. This is what resolves the fold.
    pub min_tangent_cosine: f64,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        Self {
            ds0: 0.01,
            ds_min: 1e-7,
            ds_max: 0.5,
            max_steps: 400,
            lambda_stop: 0.0,
            jacobian_check_every: 10,
            min_tangent_cosine: 0.999,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    LambdaStop,
    MaxSteps,
    /// `ds` fell below `ds_min`.
    StepCollapse,
}

#[derive(Debug, Clone, Serialize)]
pub struct BranchTrace {
    pub points: Vec<BranchPoint>,
    pub fold: Option<FoldInfo>,
    /// Index of the first point past the fold.
    pub fold_index: Option<usize>,
    pub stop: StopReason,
    /// Largest finite-difference mismatch over the spot checks.
    pub jacobian_fd_error: f64,
}

impl BranchTrace {
    /// True when the trace passed a fold.
    pub fn complete(&self) -> bool {
        self.fold_index.is_some()
    }
}

fn branch_point(
    spec: &ProblemSpec,
    grid: &RadialGrid,
    index: usize,
    u: Vec<f64>,
    lambda: f64,
    residual: f64,
    arclength: f64,
    (tangent_u, tangent_lambda): (Vec<f64>, f64),
) -> Result<BranchPoint> {
    let op = SturmLiouvilleOperator::from_nodes(grid, &u, lambda, spec)?;
    let mu1 = smallest_eigenpair(&op, spec.tol.eig_tol)?.mu1;
    let profile = Profile::from_nodes(grid, u)?;
    Ok(BranchPoint {
        index,
        lambda,
        u0: profile.center_value(),
        sup_ur: sup_slope(spec, grid, &profile, lambda),
        mu1,
        bv_norm: bv_norm(&profile),
        residual,
        arclength,
        tangent_lambda,
        u: profile.into_values(),
        tangent_u,
    })
}

/// Continuation from `(underline-u, 0)` toward increasing `lambda`.
pub fn trace_branch(
    spec: &ProblemSpec,
    grid: &RadialGrid,
    opts: &ContinuationOptions,
) -> Result<BranchTrace> {
    if !(opts.ds0 > 0.0 && opts.ds_min > 0.0 && opts.ds_min <= opts.ds0 && opts.ds0 <= opts.ds_max) {
        return Err(Error::Domain(
            "step controls must satisfy 0 < ds_min <= ds0 <= ds_max".into(),
        ));
    }
    let base = underline_u(spec, grid)?;
    let h_nodes = sample_h(spec, grid);
    let start_residual = weighted_residual_norm(grid, &residual_with(spec, grid, &h_nodes, base.values(), 0.0));
    let start_tangent = tangent(spec, grid, base.values(), 0.0, None)?;
    let mut points = vec![branch_point(
        spec,
        grid,
        0,
        base.into_values(),
        0.0,
        start_residual,
        0.0,
        start_tangent,
    )?];

    let mut ds = opts.ds0;
    let mut fold_index = None;
    let mut fd_error: f64 = 0.0;
    let stop;
    loop {
        if points.len() > opts.max_steps {
            stop = StopReason::MaxSteps;
            break;
        }
        if ds < opts.ds_min {
            stop = StopReason::StepCollapse;
            break;
        }
        let last = points.last().unwrap();
        let predictor = ContinuationState {
            u: last
                .u
                .iter()
                .zip(&last.tangent_u)
                .map(|(u, t)| u + ds * t)
                .collect(),
            lambda: last.lambda + ds * last.tangent_lambda,
            tangent_u: last.tangent_u.clone(),
            tangent_lambda: last.tangent_lambda,
            ds,
            step_index: points.len(),
        };
        let constraint = ArclengthConstraint {
            anchor_u: &last.u,
            anchor_lambda: last.lambda,
            tangent_u: &last.tangent_u,
            tangent_lambda: last.tangent_lambda,
            ds,
        };
        let corrected = match newton_correct(grid, spec, &predictor, &constraint) {
            Ok(c) => c,
            Err(Error::NoConvergence { .. }) | Err(Error::Numerical(_)) | Err(Error::Assembly(_)) => {
                ds *= 0.5;
                continue;
            }
            Err(e) => return Err(e),
        };
        let next_tangent = match tangent(
            spec,
            grid,
            &corrected.u,
            corrected.lambda,
            Some((&last.tangent_u, last.tangent_lambda)),
        ) {
            Ok(t) => t,
            Err(_) => {
                ds *= 0.5;
                continue;
            }
        };
        let cosine = grid.weighted_dot(&next_tangent.0, &last.tangent_u)
            + next_tangent.1 * last.tangent_lambda;
        if cosine < opts.min_tangent_cosine {
            ds *= 0.5;
            continue;
        }

        let index = points.len();
        let arclength = last.arclength + ds;
        let flipped = fold_index.is_none() && last.tangent_lambda > 0.0 && next_tangent.1 <= 0.0;
        let point = match branch_point(
            spec,
            grid,
            index,
            corrected.u,
            corrected.lambda,
            corrected.residual,
            arclength,
            next_tangent,
        ) {
            Ok(p) => p,
            Err(_) => {
                ds *= 0.5;
                continue;
            }
        };
        if opts.jacobian_check_every > 0 && index % opts.jacobian_check_every == 0 {
            fd_error = fd_error.max(jacobian_fd_error(spec, grid, &point.u, point.lambda, 1e-6)?);
        }
        let lambda = point.lambda;
        points.push(point);
        if flipped {
            fold_index = Some(index);
        }
        if fold_index.is_some() && lambda <= opts.lambda_stop {
            stop = StopReason::LambdaStop;
            break;
        }
        if corrected.iterations <= FAST_NEWTON_ITER {
            ds = (ds * DS_GROWTH).min(opts.ds_max);
        }
    }

    let fold = match fold_index {
        Some(_) => Some(locate_fold(&points)?),
        None => None,
    };
    Ok(BranchTrace {
        points,
        fold,
        fold_index,
        stop,
        jacobian_fd_error: fd_error,
    })
}

fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(a);
    if d == 0.0 || !d.is_finite() {
        return None;
    }
    let mut x = [0.0; 3];
    for (k, xk) in x.iter_mut().enumerate() {
        let mut m = a;
        for row in 0..3 {
            m[row][k] = b[row];
        }
        *xk = det(m) / d;
    }
    Some(x)
}

/// Least-squares parabola through the [`FOLD_FIT_POINTS`] points nearest (in
/// arclength) to the tangent sign change.
pub fn locate_fold(branch: &[BranchPoint]) -> Result<FoldInfo> {
    let flip = branch
        .windows(2)
        .position(|w| w[0].tangent_lambda > 0.0 && w[1].tangent_lambda <= 0.0)
        .ok_or(Error::NoFold)?;
    if branch.len() < FOLD_FIT_POINTS {
        return Err(Error::InvalidInput(format!(
            "fold fit needs {FOLD_FIT_POINTS} points, branch has {}",
            branch.len()
        )));
    }
    let (a, b) = (&branch[flip], &branch[flip + 1]);
    let t = a.tangent_lambda / (a.tangent_lambda - b.tangent_lambda);
    let centre = a.arclength + t * (b.arclength - a.arclength);

    let mut order: Vec<usize> = (0..branch.len()).collect();
    order.sort_by(|&i, &j| {
        let di = (branch[i].arclength - centre).abs();
        let dj = (branch[j].arclength - centre).abs();
        di.total_cmp(&dj).then(i.cmp(&j))
    });
    let mut chosen: Vec<usize> = order[..FOLD_FIT_POINTS].to_vec();
    chosen.sort_unstable();

    let xs: Vec<f64> = chosen.iter().map(|&i| branch[i].arclength - centre).collect();
    let mut normal = [[0.0; 3]; 3];
    let mut rhs = [0.0; 3];
    for (&x, &i) in xs.iter().zip(&chosen) {
        let basis = [1.0, x, x * x];
        for r in 0..3 {
            for c in 0..3 {
                normal[r][c] += basis[r] * basis[c];
            }
            rhs[r] += basis[r] * branch[i].lambda;
        }
    }
    let [c0, c1, c2] =
        solve3(normal, rhs).ok_or_else(|| Error::Numerical("degenerate fold fit".into()))?;
    if !(c2 < 0.0) {
        return Err(Error::Numerical(format!(
            "fitted lambda'' = {} is not negative",
            2.0 * c2
        )));
    }
    let xv = -c1 / (2.0 * c2);
    let lambda_fold = c0 + c1 * xv + c2 * xv * xv;
    let vertex_slope = c1 + 2.0 * c2 * xv;
    let spacing = (xs[xs.len() - 1] - xs[0]) / (xs.len() - 1) as f64;
    if vertex_slope.abs() > 1e-6 * (2.0 * c2).abs() * spacing {
        return Err(Error::Numerical(format!(
            "fitted lambda' = {vertex_slope} at the vertex"
        )));
    }

    // Fitted value at the vertex is linear in the data: reuse its weights on u.
    let mut weights = Vec::with_capacity(xs.len());
    for &x in &xs {
        let basis = [1.0, x, x * x];
        let mut e = [0.0; 3];
        for (r, er) in e.iter_mut().enumerate() {
            *er = basis[r];
        }
        // weight_j = [1, xv, xv^2] N^{-1} basis_j
        let g = solve3(normal, e).unwrap();
        weights.push(g[0] + g[1] * xv + g[2] * xv * xv);
    }
    let nodes = branch[chosen[0]].u.len();
    let mut u_fold = vec![0.0; nodes];
    for (w, &i) in weights.iter().zip(&chosen) {
        for (acc, v) in u_fold.iter_mut().zip(&branch[i].u) {
            *acc += w * v;
        }
    }

    Ok(FoldInfo {
        lambda_fold,
        u_fold,
        lambda_second_deriv: 2.0 * c2,
        curvature_identity_gap: f64::NAN,
        arclength: centre + xv,
        vertex_slope,
        spacing,
    })
}

/// Discrete fold: the point between the last two branch points around the
/// tangent sign change where the first eigenvalue vanishes.
#[derive(Debug, Clone)]
pub struct RefinedFold {
    pub u: Vec<f64>,
    pub lambda: f64,
    pub mu1: f64,
    /// Eigenvector, positive inside, `sum V w^2 = 1`.
    pub w: Vec<f64>,
    pub arclength: f64,
}

/// Root of `mu1` along the arc from the last point before the fold, by the
/// Illinois variant of regula falsi in the arclength offset.
pub fn refine_fold(spec: &ProblemSpec, grid: &RadialGrid, trace: &BranchTrace) -> Result<RefinedFold> {
    let k = trace.fold_index.ok_or(Error::NoFold)?;
    let anchor = &trace.points[k - 1];
    let eval = |sigma: f64| -> Result<(Vec<f64>, f64, f64, Vec<f64>)> {
        let predictor = ContinuationState {
            u: anchor
                .u
                .iter()
                .zip(&anchor.tangent_u)
                .map(|(u, t)| u + sigma * t)
                .collect(),
            lambda: anchor.lambda + sigma * anchor.tangent_lambda,
            tangent_u: anchor.tangent_u.clone(),
            tangent_lambda: anchor.tangent_lambda,
            ds: sigma,
            step_index: k,
        };
        let constraint = ArclengthConstraint {
            anchor_u: &anchor.u,
            anchor_lambda: anchor.lambda,
            tangent_u: &anchor.tangent_u,
            tangent_lambda: anchor.tangent_lambda,
            ds: sigma,
        };
        let c = newton_correct(grid, spec, &predictor, &constraint)?;
        let op = SturmLiouvilleOperator::from_nodes(grid, &c.u, c.lambda, spec)?;
        let eig = smallest_eigenpair(&op, spec.tol.eig_tol)?;
        Ok((c.u, c.lambda, eig.mu1, eig.w1))
    };

    let (mut lo, mut hi) = (0.0, trace.points[k].arclength - anchor.arclength);
    let (mut f_lo, mut f_hi) = (anchor.mu1, trace.points[k].mu1);
    if !(f_lo > 0.0 && f_hi < 0.0) {
        return Err(Error::Numerical(format!(
            "first eigenvalue does not change sign across the fold ({f_lo}, {f_hi})"
        )));
    }
    let mut side = 0i8;
    for _ in 0..100 {
        let sigma = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
        let (u, lambda, mu1, w) = eval(sigma)?;
        if mu1.abs() <= spec.tol.eig_tol || hi - lo <= 1e-15 * hi.abs().max(1.0) {
            return Ok(RefinedFold {
                u,
                lambda,
                mu1,
                w,
                arclength: anchor.arclength + sigma,
            });
        }
        if mu1 > 0.0 {
            lo = sigma;
            f_lo = mu1;
            if side == 1 {
                f_hi *= 0.5;
            }
            side = 1;
        } else {
            hi = sigma;
            f_hi = mu1;
            if side == -1 {
                f_lo *= 0.5;
            }
            side = -1;
        }
    }
    Err(Error::NoConvergence {
        iterations: 100,
        residual: f_lo.abs().min(f_hi.abs()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvatureCheck {
    /// `sum_cells h''(s) w_r^3 A dr`.
    pub lhs: f64,
    /// `lambda'' sum V f(u) w + lambda sum V f''(u) w^3`.
    pub rhs: f64,
    /// `|lhs - rhs| / |rhs|`.
    pub gap: f64,
    /// `lambda''` solved from the identity.
    pub implied_second_deriv: f64,
}

/// Twice differentiating the discrete equation along the curve at a fold and
/// pairing with the null vector gives
///
/// ```text
/// sum_cells h''(s) w_r^3 A dr = lambda'' sum V f(u) w + lambda sum V f''(u) w^3.
/// ```
///
/// The vector is rescaled to `sum V w^2 = 1` first, which is the
/// normalization under which `lambda''` is measured in weighted arclength.
pub fn fold_curvature_check(
    spec: &ProblemSpec,
    grid: &RadialGrid,
    u_fold: &[f64],
    lambda_fold: f64,
    w_star: &[f64],
    lambda_second_deriv: f64,
) -> Result<CurvatureCheck> {
    let m = grid.cells();
    if u_fold.len() != m + 1 || w_star.len() != m + 1 {
        return Err(Error::InvalidInput("vector length does not match grid".into()));
    }
    let sign = if w_star[0] < 0.0 { -1.0 } else { 1.0 };
    if w_star[..m].iter().any(|w| !(sign * w > 0.0)) {
        return Err(Error::InvalidInput("fold eigenvector is not positive".into()));
    }
    if spec.p < 2.0 && u_fold[..m].iter().any(|u| !(*u > 0.0)) {
        return Err(Error::InvalidInput(
            "f'' is singular: the fold profile must be positive inside".into(),
        ));
    }
    let scale = sign / grid.weighted_dot(w_star, w_star).sqrt();
    let w: Vec<f64> = w_star.iter().map(|x| x * scale).collect();
    let dr = grid.dr();

    let lhs: f64 = (0..m)
        .map(|i| {
            let s = (u_fold[i + 1] - u_fold[i]) / dr;
            let wr = (w[i + 1] - w[i]) / dr;
            flux_second_derivative(s) * wr * wr * wr * grid.half_areas()[i] * dr
        })
        .sum();
    let volumes = grid.volumes();
    let linear: f64 = (0..=m).map(|i| volumes[i] * spec.source(u_fold[i]) * w[i]).sum();
    let cubic_end = if spec.p < 2.0 { m - 1 } else { m + 1 };
    let cubic: f64 = (0..cubic_end)
        .map(|i| volumes[i] * spec.source_second_derivative(u_fold[i]) * w[i].powi(3))
        .sum();
    let rhs = lambda_second_deriv * linear + lambda_fold * cubic;
    Ok(CurvatureCheck {
        lhs,
        rhs,
        gap: (lhs - rhs).abs() / rhs.abs(),
        implied_second_deriv: (lhs - lambda_fold * cubic) / linear,
    })
}

/// Solution on the upper branch at `lambda`, seeded by interpolating the
/// traced upper segment.
pub fn second_solution(
    spec: &ProblemSpec,
    grid: &RadialGrid,
    lambda: f64,
    trace: &BranchTrace,
) -> Result<Profile> {
    let (Some(k), Some(fold)) = (trace.fold_index, trace.fold.as_ref()) else {
        return Err(Error::NoFold);
    };
    if !(lambda.is_finite() && lambda >= 0.0) || lambda > fold.lambda_fold {
        return Err(Error::Domain(format!(
            "lambda = {lambda} is outside [0, {}]",
            fold.lambda_fold
        )));
    }
    let upper = &trace.points[k..];
    let seed: Vec<f64> = match upper
        .windows(2)
        .find(|w| w[0].lambda >= lambda && w[1].lambda <= lambda)
    {
        Some(w) => {
            let span = w[0].lambda - w[1].lambda;
            let t = if span > 0.0 { (w[0].lambda - lambda) / span } else { 0.0 };
            w[0].u.iter().zip(&w[1].u).map(|(a, b)| a + t * (b - a)).collect()
        }
        None => upper.last().unwrap().u.clone(),
    };
    let corrected = newton_fixed_lambda(spec, grid, &seed, lambda)?;
    let minimal = picard_minimal(spec, grid, lambda, DEFAULT_MAX_ITER)?;
    if !minimal.converged {
        return Err(Error::NoConvergence {
            iterations: minimal.iterations,
            residual: minimal.last_change,
        });
    }
    let distance = corrected
        .u
        .iter()
        .zip(minimal.profile.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if distance < 1e3 * spec.tol.newton_tol {
        return Err(Error::DistanceTooSmall { distance });
    }
    Profile::from_nodes(grid, corrected.u)
}
