//! Radial grid, flux quadrature, and the closed-form solve of the prescribed
//! curvature problem with a frozen right-hand side.
//!
//! Unknowns live on nodes `r_i = i R / M`. Node `i` owns the dual cell
//! `[r_{i-1/2}, r_{i+1/2}] ∩ [0, R]` with volume `V_i = int s^{n-1} ds`
//! (angular factor dropped). Slopes live on half nodes, where the flux
//! `A_{i+1/2} u_r / sqrt(1 + u_r^2)` with `A = r^{n-1}` is evaluated.
//! Integrating the equation over the cells inside `r_{i+1/2}` gives
//!
//! ```text
//! -A_{i+1/2} h(s_{i+1/2}) = sum_{j <= i} V_j g_j,     h(s) = s / sqrt(1 + s^2),
//! ```
//!
//! so no formula ever divides by `r` at the origin.

use std::fmt::Write as _;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::problem::ProblemSpec;

/// Smallest admissible number of cells.
pub const MIN_CELLS: usize = 16;

/// Tolerance for accepting a flux ratio of exactly one at `r = R`.
pub const MARGINAL_TOL: f64 = 1e-9;

#[derive(Debug)]
struct GridData {
    n: u32,
    radius: f64,
    dr: f64,
    nodes: Vec<f64>,
    half_areas: Vec<f64>,
    volumes: Vec<f64>,
}

/// Uniform radial grid. Cloning is cheap (shared storage).
#[derive(Debug, Clone)]
pub struct RadialGrid {
    data: Arc<GridData>,
}

impl PartialEq for RadialGrid {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.data, &other.data)
            || (self.data.n == other.data.n
                && self.data.radius == other.data.radius
                && self.cells() == other.cells())
    }
}

impl RadialGrid {
    pub fn new(n: u32, radius: f64, cells: usize) -> Result<Self> {
        if cells < MIN_CELLS {
            return Err(Error::Config(format!(
                "grid needs at least {MIN_CELLS} cells, got {cells}"
            )));
        }
        if n < 1 || !(radius.is_finite() && radius > 0.0) {
            return Err(Error::InvalidInput("grid needs n >= 1 and R > 0".into()));
        }
        let dr = radius / cells as f64;
        let nodes: Vec<f64> = (0..=cells).map(|i| i as f64 * dr).collect();
        // r_M is set exactly to avoid i * dr rounding at the boundary
        let mut nodes = nodes;
        nodes[cells] = radius;

        let dim = n as i32;
        let half = |i: usize| (i as f64 + 0.5) * dr;
        let half_areas = (0..cells).map(|i| half(i).powi(dim - 1)).collect();

        // exact monomial integrals over each dual cell
        let moment = |r: f64| r.powi(dim) / f64::from(n);
        let mut volumes = Vec::with_capacity(cells + 1);
        volumes.push(moment(half(0)));
        for i in 1..cells {
            volumes.push(moment(half(i)) - moment(half(i - 1)));
        }
        volumes.push(moment(radius) - moment(half(cells - 1)));

        Ok(Self {
            data: Arc::new(GridData {
                n,
                radius,
                dr,
                nodes,
                half_areas,
                volumes,
            }),
        })
    }

    pub fn n(&self) -> u32 {
        self.data.n
    }

    pub fn radius(&self) -> f64 {
        self.data.radius
    }

    /// Number of cells `M`; there are `M + 1` nodes.
    pub fn cells(&self) -> usize {
        self.data.half_areas.len()
    }

    pub fn dr(&self) -> f64 {
        self.data.dr
    }

    pub fn nodes(&self) -> &[f64] {
        &self.data.nodes
    }

    pub fn half_node(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.data.dr
    }

    /// `A_{i+1/2} = r_{i+1/2}^{n-1}`, one per cell.
    pub fn half_areas(&self) -> &[f64] {
        &self.data.half_areas
    }

    /// Dual-cell volumes `V_0..V_M`.
    pub fn volumes(&self) -> &[f64] {
        &self.data.volumes
    }

    pub fn total_volume(&self) -> f64 {
        self.data.volumes.iter().sum()
    }

    /// `R^{n-1}`.
    pub fn boundary_area(&self) -> f64 {
        self.data.radius.powi(self.data.n as i32 - 1)
    }

    /// Weighted inner product `sum V_i a_i b_i`.
    pub fn weighted_dot(&self, a: &[f64], b: &[f64]) -> f64 {
        self.volumes()
            .iter()
            .zip(a.iter().zip(b))
            .map(|(v, (x, y))| v * x * y)
            .sum()
    }
}

pub fn build_grid(spec: &ProblemSpec, cells: usize) -> Result<RadialGrid> {
    RadialGrid::new(spec.n, spec.radius, cells)
}

/// Discrete radial solution: node values and half-node slopes.
#[derive(Debug, Clone)]
pub struct Profile {
    grid: RadialGrid,
    u: Vec<f64>,
    slope: Vec<f64>,
    marginal: bool,
}

impl Profile {
    /// Profile from node values; slopes are the half-node differences.
    pub fn from_nodes(grid: &RadialGrid, u: Vec<f64>) -> Result<Self> {
        if u.len() != grid.cells() + 1 {
            return Err(Error::InvalidInput(format!(
                "expected {} node values, got {}",
                grid.cells() + 1,
                u.len()
            )));
        }
        let dr = grid.dr();
        let slope = u.windows(2).map(|w| (w[1] - w[0]) / dr).collect();
        Ok(Self {
            grid: grid.clone(),
            u,
            slope,
            marginal: false,
        })
    }

    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.u
    }

    pub fn into_values(self) -> Vec<f64> {
        self.u
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slope
    }

    /// True when the flux ratio reaches one at `r = R` (vertical contact).
    pub fn is_marginal(&self) -> bool {
        self.marginal
    }

    pub fn center_value(&self) -> f64 {
        self.u[0]
    }

    pub fn sup_norm(&self) -> f64 {
        self.u.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sup_slope(&self) -> f64 {
        self.slope.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    /// Two whitespace-separated columns `r u`, one node per line.
    pub fn to_two_column(&self) -> String {
        let mut out = String::with_capacity(self.u.len() * 40);
        let mut buf_r = ryu::Buffer::new();
        let mut buf_u = ryu::Buffer::new();
        for (r, u) in self.grid.nodes().iter().zip(&self.u) {
            let _ = writeln!(out, "{} {}", buf_r.format(*r), buf_u.format(*u));
        }
        out
    }
}

/// Node-wise flux ratio `q_i = r_i^{1-n} int_0^{r_i} g s^{n-1} ds` by the
/// composite trapezoid rule on the weighted integrand; `q_0 = 0`.
pub fn flux_ratio(grid: &RadialGrid, g: &[f64]) -> Vec<f64> {
    let dim = grid.n() as i32;
    let nodes = grid.nodes();
    let half_dr = 0.5 * grid.dr();
    let weighted = |i: usize| g[i] * nodes[i].powi(dim - 1);

    let mut q = Vec::with_capacity(nodes.len());
    q.push(0.0);
    let mut integral = 0.0;
    for i in 1..nodes.len() {
        integral += half_dr * (weighted(i - 1) + weighted(i));
        q.push(integral / nodes[i].powi(dim - 1));
    }
    q
}

/// Flux ratios on the half nodes from the finite-volume balance, plus the
/// ratio at `r = R` from the full ball.
pub fn half_flux_ratio(grid: &RadialGrid, g: &[f64]) -> (Vec<f64>, f64) {
    let volumes = grid.volumes();
    let mut cumulative = 0.0;
    let half = grid
        .half_areas()
        .iter()
        .enumerate()
        .map(|(i, area)| {
            cumulative += volumes[i] * g[i];
            cumulative / area
        })
        .collect();
    let cells = grid.cells();
    cumulative += volumes[cells] * g[cells];
    (half, cumulative / grid.boundary_area())
}

/// Solve `-div(Tu) = g` with `u(R) = 0` for a frozen node-sampled `g >= 0`.
///
/// Fails with [`Error::SupercriticalFlux`] when the flux ratio reaches one
/// inside the ball. A ratio of one at `r = R` (within [`MARGINAL_TOL`]) is
/// accepted and the profile is flagged marginal.
pub fn solve_prescribed(grid: &RadialGrid, g: &[f64]) -> Result<Profile> {
    let cells = grid.cells();
    if g.len() != cells + 1 {
        return Err(Error::InvalidInput(format!(
            "right-hand side has {} values, grid has {} nodes",
            g.len(),
            cells + 1
        )));
    }
    if let Some(bad) = g.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidInput(format!(
            "right-hand side must be finite and non-negative (node {bad})"
        )));
    }

    let (q, q_boundary) = half_flux_ratio(grid, g);
    if let Some(i) = q.iter().position(|&v| v >= 1.0) {
        return Err(Error::SupercriticalFlux {
            radius: grid.half_node(i),
            ratio: q[i],
        });
    }
    if q_boundary > 1.0 + MARGINAL_TOL {
        return Err(Error::SupercriticalFlux {
            radius: grid.radius(),
            ratio: q_boundary,
        });
    }
    let marginal = q_boundary >= 1.0 - MARGINAL_TOL;

    let dr = grid.dr();
    let mut u = vec![0.0; cells + 1];
    let mut slope = vec![0.0; cells];
    if marginal {
        // q is taken linear on each cell and |u_r| = q / sqrt(1 - q^2)
        // integrated exactly, which resolves the square-root singularity of
        // the slope at r = R.
        for i in (0..cells).rev() {
            let (qa, qb) = if i + 1 == cells {
                let beta = (q_boundary.min(1.0) - q[i]) / (0.5 * dr);
                (q[i] - 0.5 * dr * beta, q_boundary.min(1.0))
            } else {
                let below = if i == 0 { -q[0] } else { q[i - 1] };
                let beta = (q[i + 1] - below) / (2.0 * dr);
                (q[i] - 0.5 * dr * beta, q[i] + 0.5 * dr * beta)
            };
            let qa = qa.max(0.0);
            let qb = qb.clamp(qa, 1.0);
            let rise = dr * (qa + qb) / ((1.0 - qa * qa).sqrt() + (1.0 - qb * qb).sqrt());
            u[i] = u[i + 1] + rise;
            slope[i] = -rise / dr;
        }
    } else {
        for i in (0..cells).rev() {
            let s = -q[i] / (1.0 - q[i] * q[i]).sqrt();
            slope[i] = s;
            u[i] = u[i + 1] - s * dr;
        }
    }

    Ok(Profile {
        grid: grid.clone(),
        u,
        slope,
        marginal,
    })
}

/// Right-hand side `H(r_i)` sampled on the grid nodes.
pub fn sample_h(spec: &ProblemSpec, grid: &RadialGrid) -> Vec<f64> {
    grid.nodes().iter().map(|&r| spec.h.value(r)).collect()
}

/// Exact spherical cap: the solution for a constant right-hand side `H0`.
#[derive(Debug, Clone, Copy)]
pub struct CapOracle {
    n: u32,
    radius: f64,
    h0: f64,
}

pub fn cap_oracle(n: u32, radius: f64, h0: f64) -> Result<CapOracle> {
    let a = h0 * radius / f64::from(n);
    if a > 1.0 {
        return Err(Error::NoCap(a));
    }
    if !(h0 > 0.0 && radius > 0.0 && n >= 1) {
        return Err(Error::InvalidInput("cap needs n >= 1, R > 0, H0 > 0".into()));
    }
    Ok(CapOracle { n, radius, h0 })
}

impl CapOracle {
    fn curvature(&self) -> f64 {
        self.h0 / f64::from(self.n)
    }

    pub fn value(&self, r: f64) -> f64 {
        let a = self.curvature();
        let inner = (1.0 - (a * r).powi(2)).max(0.0).sqrt();
        let edge = (1.0 - (a * self.radius).powi(2)).max(0.0).sqrt();
        (inner - edge) / a
    }

    pub fn slope(&self, r: f64) -> f64 {
        let a = self.curvature();
        -(a * r) / (1.0 - (a * r).powi(2)).sqrt()
    }

    pub fn sample(&self, grid: &RadialGrid) -> Vec<f64> {
        grid.nodes().iter().map(|&r| self.value(r)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_error(profile: &Profile, exact: &CapOracle) -> f64 {
        profile
            .grid()
            .nodes()
            .iter()
            .zip(profile.values())
            .map(|(&r, &u)| (u - exact.value(r)).abs())
            .fold(0.0, f64::max)
    }

    fn assert_shape(profile: &Profile) {
        let u = profile.values();
        assert_eq!(*u.last().unwrap(), 0.0);
        assert!(u.iter().all(|&v| v >= 0.0));
        assert!(u.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn grid_volumes() {
        let g = RadialGrid::new(2, 1.0, 16).unwrap();
        assert!((g.total_volume() - 0.5).abs() < 1e-14);
        let g = RadialGrid::new(3, 2.0, 16).unwrap();
        assert!((g.total_volume() - 8.0 / 3.0).abs() < 1e-14 * 8.0 / 3.0);
        let g = RadialGrid::new(1, 1.0, 16).unwrap();
        assert!(g.half_areas().iter().all(|&a| a == 1.0));
        assert_eq!(g.nodes()[0], 0.0);
        assert_eq!(*g.nodes().last().unwrap(), 1.0);
        assert!(g.nodes().windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn grid_too_coarse() {
        assert!(matches!(RadialGrid::new(2, 1.0, 4), Err(Error::Config(_))));
    }

    #[test]
    fn flux_ratio_exact_cases() {
        let g = RadialGrid::new(2, 1.0, 64).unwrap();
        let ones = vec![1.0; 65];
        for (r, q) in g.nodes().iter().zip(flux_ratio(&g, &ones)) {
            assert!((q - r / 2.0).abs() < 1e-15);
        }
        let g = RadialGrid::new(1, 1.0, 64).unwrap();
        for (r, q) in g.nodes().iter().zip(flux_ratio(&g, &ones)) {
            assert!((q - r).abs() < 1e-15);
        }
    }

    #[test]
    fn flux_ratio_cubic_weight() {
        let g = RadialGrid::new(3, 1.0, 1024).unwrap();
        let rhs: Vec<f64> = g.nodes().to_vec();
        let q = flux_ratio(&g, &rhs);
        let err = g
            .nodes()
            .iter()
            .zip(&q)
            .map(|(r, q)| (q - r * r / 4.0).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1e-6 * 0.25, "err {err}");
    }

    #[test]
    fn cap_closed_forms() {
        let cap = cap_oracle(2, 1.0, 1.0).unwrap();
        assert!((cap.value(0.0) - (2.0 - 3f64.sqrt())).abs() < 1e-15);
        let half = cap_oracle(2, 1.0, 2.0).unwrap();
        for r in [0.0, 0.3, 0.9, 1.0] {
            assert!((half.value(r) - (1.0 - r * r).sqrt()).abs() < 1e-15);
        }
        let line = cap_oracle(1, 0.5, 1.0).unwrap();
        assert!((line.value(0.0) - (1.0 - 0.75f64.sqrt())).abs() < 1e-15);
        assert!(matches!(cap_oracle(2, 1.0, 2.5), Err(Error::NoCap(_))));
    }

    #[test]
    fn cap_oracle_matches_simpson_quadrature() {
        // u(0) = int_0^R q / sqrt(1 - q^2) dr with q = H0 r / n
        let (n, radius, h0) = (2u32, 1.0, 1.0);
        let m = 20_000;
        let f = |r: f64| {
            let q = h0 * r / f64::from(n);
            q / (1.0 - q * q).sqrt()
        };
        let h = radius / m as f64;
        let mut sum = f(0.0) + f(radius);
        for j in 1..m {
            sum += if j % 2 == 1 { 4.0 } else { 2.0 } * f(j as f64 * h);
        }
        let simpson = sum * h / 3.0;
        let cap = cap_oracle(n, radius, h0).unwrap();
        assert!((simpson - cap.value(0.0)).abs() < 1e-13);
    }

    #[test]
    fn solve_cap() {
        let g = RadialGrid::new(2, 1.0, 4096).unwrap();
        let p = solve_prescribed(&g, &vec![1.0; 4097]).unwrap();
        let cap = cap_oracle(2, 1.0, 1.0).unwrap();
        assert!(!p.is_marginal());
        assert!((p.center_value() - 0.267_949_192_4).abs() < 1e-6);
        assert!(max_error(&p, &cap) < 1e-6);
        assert_shape(&p);
    }

    #[test]
    fn solve_half_sphere_is_marginal() {
        let g = RadialGrid::new(2, 1.0, 4096).unwrap();
        let p = solve_prescribed(&g, &vec![2.0; 4097]).unwrap();
        assert!(p.is_marginal());
        let half = cap_oracle(2, 1.0, 2.0).unwrap();
        assert!(max_error(&p, &half) < 1e-4);
        assert_shape(&p);
    }

    #[test]
    fn solve_supercritical() {
        let g = RadialGrid::new(2, 1.0, 256).unwrap();
        let err = solve_prescribed(&g, &vec![3.0; 257]).unwrap_err();
        match err {
            Error::SupercriticalFlux { radius, .. } => assert!(radius < 1.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn solve_rejects_negative_rhs() {
        let g = RadialGrid::new(2, 1.0, 16).unwrap();
        let mut rhs = vec![1.0; 17];
        rhs[3] = -1.0;
        assert!(solve_prescribed(&g, &rhs).is_err());
    }

    #[test]
    fn second_order_convergence() {
        let cap = cap_oracle(2, 1.0, 1.0).unwrap();
        let errors: Vec<f64> = [256, 512, 1024, 2048, 4096]
            .iter()
            .map(|&m| {
                let g = RadialGrid::new(2, 1.0, m).unwrap();
                max_error(&solve_prescribed(&g, &vec![1.0; m + 1]).unwrap(), &cap)
            })
            .collect();
        for w in errors.windows(2) {
            assert!(w[0] / w[1] >= 3.5, "{errors:?}");
        }
    }

    #[test]
    fn two_column_output() {
        let g = RadialGrid::new(1, 1.0, 16).unwrap();
        let p = solve_prescribed(&g, &[0.5; 17]).unwrap();
        let text = p.to_two_column();
        assert_eq!(text.lines().count(), 17);
        assert!(text.lines().last().unwrap().starts_with("1.0 0.0"));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn solve_is_monotone_in_rhs(
                base in proptest::collection::vec(0.0f64..0.8, 17),
                bump in proptest::collection::vec(0.0f64..0.4, 17),
            ) {
                let grid = RadialGrid::new(2, 1.0, 16).unwrap();
                let upper: Vec<f64> = base.iter().zip(&bump).map(|(a, b)| a + b).collect();
                let lo = solve_prescribed(&grid, &base).unwrap();
                let hi = solve_prescribed(&grid, &upper).unwrap();
                assert_shape(&lo);
                assert_shape(&hi);
                for (a, b) in lo.values().iter().zip(hi.values()) {
                    prop_assert!(a <= b);
                }
            }
        }
    }
}
