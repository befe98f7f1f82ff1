//! A-priori estimates evaluated on computed profiles: the flux condition on
//! balls, the bound on `lambda`, gradient bounds near the origin and at the
//! boundary, and the equation satisfied by `v = sqrt(1 + u_r^2)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::minimal::{source_rhs, underline_u};
use crate::problem::{check_admissibility, ProblemSpec};
use crate::radial::{flux_ratio, half_flux_ratio, sample_h, Profile, RadialGrid};
use crate::unit_sphere_area;

/// Slope bound near the origin: `|u_r|` where the flux ratio equals 1/2.
pub const ORIGIN_SLOPE_BOUND: f64 = 0.577_350_269_189_625_8;

/// Cells skipped at each end by [`v_equation_residual`].
pub const V_EQUATION_SKIP: usize = 3;

/// Barrier lattice exponents `k, j = 0..=BARRIER_LATTICE`.
pub const BARRIER_LATTICE: i32 = 12;

/// `min_{r_i > 0} (1 - q_i)` for `q = flux_ratio(H + lambda u^p)`.
pub fn ball_necessary_condition(
    grid: &RadialGrid,
    profile: &Profile,
    lambda: f64,
    spec: &ProblemSpec,
) -> f64 {
    let rhs = source_rhs(spec, &sample_h(spec, grid), profile.values(), lambda);
    flux_ratio(grid, &rhs)
        .iter()
        .skip(1)
        .map(|q| 1.0 - q)
        .fold(f64::INFINITY, f64::min)
}

/// `lambda <= (P(B_R) - int H) / int u0`, `u0` the `lambda = 0` solution.
pub fn apriori_lambda_bound(spec: &ProblemSpec, grid: &RadialGrid) -> Result<f64> {
    let sphere = unit_sphere_area(spec.n);
    let base = underline_u(spec, grid)?;
    let perimeter = sphere * grid.boundary_area();
    let h = sample_h(spec, grid);
    let ones = vec![1.0; h.len()];
    let int_h = sphere * grid.weighted_dot(&h, &ones);
    let int_u = sphere * grid.weighted_dot(base.values(), &ones);
    if int_u <= 0.0 {
        return Err(Error::Numerical("lambda = 0 solution has zero mass".into()));
    }
    Ok((perimeter - int_h) / int_u)
}

/// Signed slope `u_r(R)` from the flux through the boundary sphere.
pub fn boundary_slope(spec: &ProblemSpec, grid: &RadialGrid, profile: &Profile, lambda: f64) -> f64 {
    let rhs = source_rhs(spec, &sample_h(spec, grid), profile.values(), lambda);
    let (_, q) = half_flux_ratio(grid, &rhs);
    if q >= 1.0 {
        f64::NEG_INFINITY
    } else {
        -q / (1.0 - q * q).sqrt()
    }
}

/// `sup |u_r|` over half nodes and the boundary.
pub fn sup_slope(spec: &ProblemSpec, grid: &RadialGrid, profile: &Profile, lambda: f64) -> f64 {
    profile
        .sup_slope()
        .max(boundary_slope(spec, grid, profile, lambda).abs())
}

/// Discrete total variation `|S^{n-1}| sum |s| A dr`.
pub fn bv_norm(profile: &Profile) -> f64 {
    let grid = profile.grid();
    let dr = grid.dr();
    unit_sphere_area(grid.n())
        * profile
            .slopes()
            .iter()
            .zip(grid.half_areas())
            .map(|(s, a)| s.abs() * a * dr)
            .sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OriginGradient {
    pub r1: f64,
    pub c1: f64,
    pub ok: bool,
}

/// Slope bound inside the radius where `(sup H + lambda S^p) r / n <= 1/2`.
pub fn origin_gradient_check(
    grid: &RadialGrid,
    profile: &Profile,
    lambda: f64,
    spec: &ProblemSpec,
) -> OriginGradient {
    let sup_u = profile.sup_norm();
    let sup_rhs = spec.h.sup_on(spec.radius) + lambda * spec.source(sup_u);
    let r1 = if sup_rhs > 0.0 {
        (0.5 * f64::from(spec.n) / sup_rhs).min(spec.radius)
    } else {
        spec.radius
    };
    let ok = profile
        .slopes()
        .iter()
        .enumerate()
        .take_while(|(i, _)| grid.half_node(*i) <= r1)
        .all(|(_, s)| s.abs() <= ORIGIN_SLOPE_BOUND + 1e-9);
    OriginGradient {
        r1,
        c1: ORIGIN_SLOPE_BOUND,
        ok,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BarrierReport {
    pub ok: bool,
    pub eps: f64,
    pub delta: f64,
    /// `|h'(R)|` of the circular barrier.
    pub slope_cap: f64,
    /// Horizontal extent of the barrier arc below `r = R`.
    pub extent: f64,
}

/// Circular barrier of radius `1/eps` through `(R, 0)` with centre height
/// `delta`, valid when `eps + lambda delta^p + (n-1)/R (eps delta)^2 <
/// (n-1)/R eps0`. Among the lattice pairs satisfying the inequality the one
/// with the smallest boundary slope is used.
pub fn boundary_barrier_check(
    spec: &ProblemSpec,
    grid: &RadialGrid,
    profile: &Profile,
    lambda: f64,
) -> Result<BarrierReport> {
    if !check_admissibility(spec).boundary_strict_ok {
        return Err(Error::Precondition(
            "boundary barrier needs H(R) <= (1 - eps0)(n - 1)/R".into(),
        ));
    }
    let radius = spec.radius;
    let curv = f64::from(spec.n - 1) / radius;
    let eps_top = spec.eps0 * curv / 4.0;

    let mut best: Option<(f64, f64, f64)> = None;
    for k in 0..=BARRIER_LATTICE {
        let eps = eps_top * 2f64.powi(-k);
        for j in 0..=BARRIER_LATTICE {
            let delta = 2f64.powi(-j);
            let ed = eps * delta;
            if ed > 1.0 {
                continue;
            }
            let lhs = eps + lambda * delta.powf(spec.p) + curv * ed * ed;
            if lhs >= curv * spec.eps0 {
                continue;
            }
            let cap = (1.0 / (eps * eps) - delta * delta).sqrt() / delta;
            if best.is_none_or(|(_, _, c)| cap < c) {
                best = Some((eps, delta, cap));
            }
        }
    }
    let (eps, delta, slope_cap) = best.ok_or(Error::BarrierUnavailable)?;

    let inv = 1.0 / eps;
    let centre = radius + (inv * inv - delta * delta).sqrt();
    let extent = radius - (centre - inv);
    let barrier = |r: f64| delta - (inv * inv - (r - centre).powi(2)).max(0.0).sqrt();
    let ok = grid
        .nodes()
        .iter()
        .zip(profile.values())
        .filter(|(r, _)| **r >= radius - extent)
        .all(|(&r, &u)| u <= barrier(r) + 1e-9);

    Ok(BarrierReport {
        ok,
        eps,
        delta,
        slope_cap,
        extent,
    })
}

/// Max-norm residual of
///
/// ```text
/// -(1/r^{n-1}) (r^{n-1} v_r / v^3)_r + c^2 - H_r u_r / v - lambda f'(u) u_r^2 / v = 0,
/// c^2 = (n-1)/r^2 u_r^2/v^2 + u_rr^2/v^6,
/// ```
///
/// on interior nodes. Slopes are central differences of the profile; `u_rr`
/// is taken from the equation and `v_r = u_r u_rr / v`, so only the outer
/// divergence is differenced. Rounding in `u` still enters as roughly
/// `eps |u| / dr^2`.
pub fn v_equation_residual(
    grid: &RadialGrid,
    profile: &Profile,
    lambda: f64,
    spec: &ProblemSpec,
) -> f64 {
    let m = grid.cells();
    let dr = grid.dr();
    let r = grid.nodes();
    let u = profile.values();
    let dim = spec.n as i32;
    let nm1 = f64::from(spec.n - 1);

    // (u_r, v, u_rr) at interior node i
    let local = |i: usize| {
        let s = (u[i + 1] - u[i - 1]) / (2.0 * dr);
        let v = (1.0 + s * s).sqrt();
        let rhs = spec.h.value(r[i]) + lambda * spec.source(u[i]);
        let urr = -v.powi(3) * (rhs + nm1 * s / (r[i] * v));
        (s, v, urr)
    };
    let flux = |i: usize| {
        let (s, v, urr) = local(i);
        r[i].powi(dim - 1) * (s * urr / v) / v.powi(3)
    };

    let first = V_EQUATION_SKIP + 1;
    let last = m.saturating_sub(V_EQUATION_SKIP + 1);
    (first..=last)
        .map(|i| {
            let divergence = (flux(i + 1) - flux(i - 1)) / (2.0 * dr * r[i].powi(dim - 1));
            let (s, v, urr) = local(i);
            let c2 = nm1 / (r[i] * r[i]) * s * s / (v * v) + urr * urr / v.powi(6);
            let residual = -divergence + c2
                - spec.h.derivative(r[i]) * s / v
                - lambda * spec.source_derivative(u[i]) * s * s / v;
            residual.abs()
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlowupRow {
    pub lambda: f64,
    pub sup_slope: f64,
    /// `(lambda* - lambda) sup |u_r|`.
    pub scaled: f64,
}

pub fn gradient_blowup_monitor(
    spec: &ProblemSpec,
    branch: &[(f64, &Profile)],
    lambda_star: f64,
) -> Vec<BlowupRow> {
    branch
        .iter()
        .map(|&(lambda, profile)| {
            let s = sup_slope(spec, profile.grid(), profile, lambda);
            BlowupRow {
                lambda,
                sup_slope: s,
                scaled: (lambda_star - lambda) * s,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsReport {
    pub lambda: f64,
    pub ball_condition_margin: f64,
    pub apriori_lambda_bound: f64,
    pub lower_bound_ok: bool,
    pub origin_gradient_bound: OriginGradient,
    pub boundary_slope: f64,
    pub barrier_ok: bool,
    /// Barrier parameters, or why the barrier is not applicable.
    pub barrier: std::result::Result<BarrierReport, String>,
    pub v_equation_residual: f64,
    pub bv_norm: f64,
    pub sup_norm: f64,
}

/// Every check on one profile.
pub fn analyze_profile(
    spec: &ProblemSpec,
    grid: &RadialGrid,
    profile: &Profile,
    lambda: f64,
) -> Result<DiagnosticsReport> {
    let base = underline_u(spec, grid)?;
    let lower_bound_ok = profile
        .values()
        .iter()
        .zip(base.values())
        .all(|(u, b)| *u >= b - 1e-12);
    let barrier = boundary_barrier_check(spec, grid, profile, lambda).map_err(|e| e.to_string());
    Ok(DiagnosticsReport {
        lambda,
        ball_condition_margin: ball_necessary_condition(grid, profile, lambda, spec),
        apriori_lambda_bound: apriori_lambda_bound(spec, grid)?,
        lower_bound_ok,
        origin_gradient_bound: origin_gradient_check(grid, profile, lambda, spec),
        boundary_slope: boundary_slope(spec, grid, profile, lambda),
        barrier_ok: barrier.as_ref().is_ok_and(|b| b.ok),
        barrier,
        v_equation_residual: v_equation_residual(grid, profile, lambda, spec),
        bv_norm: bv_norm(profile),
        sup_norm: profile.sup_norm(),
    })
}
