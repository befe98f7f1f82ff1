//! Linearized operator at a radial profile, its first eigenpair, and the
//! second-variation quadratic form.
//!
//! In radial form the linearization of `-div(Tu) - lambda u^p` reads
//!
//! ```text
//! L w = -(1/r^{n-1}) ( r^{n-1} w_r / (1 + u_r^2)^{3/2} )_r - lambda p u^{p-1} w,
//! ```
//!
//! because `|grad w|^2 / v - (grad w . grad u)^2 / v^3 = w_r^2 / v^3` for
//! radial functions, `v = sqrt(1 + u_r^2)`. The discrete operator is the
//! finite-volume stiffness with conductivities `k_{i+1/2} = A_{i+1/2} h'(s)`
//! minus the potential `c_i = lambda p u_i^{p-1}` weighted by `V_i`. It is
//! exactly the Jacobian of the discrete residual used by continuation.

use crate::error::{Error, Result};
use crate::linalg::{smallest_eigenvalue, Tridiagonal};
use crate::problem::ProblemSpec;
use crate::radial::{Profile, RadialGrid};

/// Inverse-iteration sweeps allowed before the eigenvector is declared
/// unconverged.
pub const MAX_INVERSE_ITERATIONS: usize = 12;

/// `h'(s) = (1 + s^2)^{-3/2}` for `h(s) = s / sqrt(1 + s^2)`.
#[inline]
pub fn flux_derivative(s: f64) -> f64 {
    let w = 1.0 + s * s;
    1.0 / (w * w.sqrt())
}

/// `h''(s) = -3 s (1 + s^2)^{-5/2}`.
#[inline]
pub fn flux_second_derivative(s: f64) -> f64 {
    let w = 1.0 + s * s;
    -3.0 * s / (w * w * w.sqrt())
}

/// Radial reduction of the second-variation integrand:
/// `|q|^2 / v - (q . p)^2 / v^3` with `p = s e_r`, `q = t e_r`.
pub fn radial_gradient_form(s: f64, t: f64) -> f64 {
    let v = (1.0 + s * s).sqrt();
    t * t / v - (t * s).powi(2) / (v * v * v)
}

/// Symmetric tridiagonal pencil `(K - diag(V c), diag(V))` on nodes
/// `0..M-1`; the Dirichlet node `M` is eliminated.
#[derive(Debug, Clone)]
pub struct SturmLiouvilleOperator {
    grid: RadialGrid,
    conductivity: Vec<f64>,
    potential: Vec<f64>,
}

impl SturmLiouvilleOperator {
    /// Assembly from raw node values; shared with the continuation Jacobian.
    pub fn from_nodes(grid: &RadialGrid, u: &[f64], lambda: f64, spec: &ProblemSpec) -> Result<Self> {
        let cells = grid.cells();
        if u.len() != cells + 1 {
            return Err(Error::Assembly(format!(
                "profile has {} nodes, grid has {}",
                u.len(),
                cells + 1
            )));
        }
        let dr = grid.dr();
        let mut conductivity = Vec::with_capacity(cells);
        for (i, area) in grid.half_areas().iter().enumerate() {
            let s = (u[i + 1] - u[i]) / dr;
            if !s.is_finite() {
                return Err(Error::Assembly(format!("non-finite slope at cell {i}")));
            }
            conductivity.push(area * flux_derivative(s));
        }
        let potential = u.iter().map(|&v| lambda * spec.source_derivative(v)).collect();
        Ok(Self {
            grid: grid.clone(),
            conductivity,
            potential,
        })
    }

    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }

    /// `k_{i+1/2}`, one per cell.
    pub fn conductivities(&self) -> &[f64] {
        &self.conductivity
    }

    /// `c_i = lambda f'(u_i)` on all nodes.
    pub fn potentials(&self) -> &[f64] {
        &self.potential
    }

    pub fn weights(&self) -> &[f64] {
        self.grid.volumes()
    }

    /// Stiffness minus weighted potential, restricted to nodes `0..M-1`.
    pub fn matrix(&self) -> Tridiagonal {
        let m = self.grid.cells();
        let inv_dr = 1.0 / self.grid.dr();
        let volumes = self.grid.volumes();
        let k = &self.conductivity;
        let diag = (0..m)
            .map(|i| {
                let left = if i > 0 { k[i - 1] } else { 0.0 };
                (left + k[i]) * inv_dr - volumes[i] * self.potential[i]
            })
            .collect();
        let off: Vec<f64> = (0..m - 1).map(|i| -k[i] * inv_dr).collect();
        Tridiagonal::new(off.clone(), diag, off)
    }

    /// `sum_cells k (dphi/dr)^2 dr - sum_nodes V c phi^2` with `phi_M = 0`.
    pub fn rayleigh_numerator(&self, phi: &[f64]) -> f64 {
        let dr = self.grid.dr();
        let gradient: f64 = self
            .conductivity
            .iter()
            .zip(phi.windows(2))
            .map(|(k, w)| {
                let d = (w[1] - w[0]) / dr;
                k * d * d * dr
            })
            .sum();
        let potential: f64 = self
            .grid
            .volumes()
            .iter()
            .zip(&self.potential)
            .zip(phi)
            .map(|((v, c), f)| v * c * f * f)
            .sum();
        gradient - potential
    }
}

pub fn assemble_l(
    grid: &RadialGrid,
    profile: &Profile,
    lambda: f64,
    spec: &ProblemSpec,
) -> Result<SturmLiouvilleOperator> {
    SturmLiouvilleOperator::from_nodes(grid, profile.values(), lambda, spec)
}

#[derive(Debug, Clone)]
pub struct EigenResult {
    pub mu1: f64,
    /// Positive on interior nodes, zero at `r = R`, `sum V w^2 = 1`.
    pub w1: Vec<f64>,
}

/// Smallest eigenpair of `(K - V c) w = mu V w`.
///
/// The eigenvalue is located by Sturm bisection on the symmetrically scaled
/// matrix `V^{-1/2} (K - V c) V^{-1/2}`, the vector by shifted inverse
/// iteration, and the returned `mu1` is the Rayleigh quotient of that vector.
pub fn smallest_eigenpair(op: &SturmLiouvilleOperator, eig_tol: f64) -> Result<EigenResult> {
    let a = op.matrix();
    let m = a.dim();
    let volumes = &op.weights()[..m];
    let scale: Vec<f64> = volumes.iter().map(|v| v.sqrt()).collect();

    let diag: Vec<f64> = (0..m).map(|i| a.diag[i] / volumes[i]).collect();
    let off: Vec<f64> = (0..m - 1).map(|i| a.sup[i] / (scale[i] * scale[i + 1])).collect();
    let norm = diag.iter().map(|d| d.abs()).fold(0.0, f64::max)
        + 2.0 * off.iter().map(|e| e.abs()).fold(0.0, f64::max);
    let estimate = smallest_eigenvalue(&diag, &off, 4.0 * f64::EPSILON * norm);

    let mut shifted_diag = diag.clone();
    let mut shift = estimate;
    let mut x = vec![1.0; m];
    let mut converged = false;
    for attempt in 0..MAX_INVERSE_ITERATIONS {
        for (s, d) in shifted_diag.iter_mut().zip(&diag) {
            *s = d - shift;
        }
        let shifted = Tridiagonal::new(off.clone(), shifted_diag.clone(), off.clone());
        let mut y = match shifted.solve(&x) {
            Ok(y) => y,
            Err(_) => {
                // landed exactly on the eigenvalue; nudge the shift
                shift -= 8.0 * f64::EPSILON * norm.max(1.0) * (attempt + 1) as f64;
                continue;
            }
        };
        let len = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        let sign = if y.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
        y.iter_mut().for_each(|v| *v *= sign / len);
        let delta = y
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        x = y;
        if attempt > 0 && delta < 1e-12 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numerical(format!(
            "inverse iteration did not converge in {MAX_INVERSE_ITERATIONS} sweeps"
        )));
    }

    let mut w1: Vec<f64> = x.iter().zip(&scale).map(|(x, s)| x / s).collect();
    w1.push(0.0);
    let norm2 = op.grid().weighted_dot(&w1, &w1);
    let inv = 1.0 / norm2.sqrt();
    w1.iter_mut().for_each(|v| *v *= inv);

    let mu1 = op.rayleigh_numerator(&w1);
    let tol = (eig_tol * mu1.abs().max(estimate.abs())).max(1e3 * f64::EPSILON * norm);
    if (mu1 - estimate).abs() > tol {
        return Err(Error::Numerical(format!(
            "Rayleigh quotient {mu1} disagrees with Sturm estimate {estimate}"
        )));
    }
    Ok(EigenResult { mu1, w1 })
}

/// Second variation `Q(phi) = int phi_r^2 / (1 + u_r^2)^{3/2} - lambda f'(u) phi^2`
/// (angular factor dropped), evaluated with the operator's coefficients.
pub fn stability_form_q(
    grid: &RadialGrid,
    profile: &Profile,
    lambda: f64,
    spec: &ProblemSpec,
    phi: &[f64],
) -> Result<f64> {
    if phi.len() != grid.cells() + 1 {
        return Err(Error::Domain("test vector length does not match grid".into()));
    }
    if *phi.last().unwrap() != 0.0 {
        return Err(Error::Domain("test vector must vanish at r = R".into()));
    }
    if phi.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("test vector must be finite".into()));
    }
    Ok(assemble_l(grid, profile, lambda, spec)?.rayleigh_numerator(phi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::CurvatureField;
    use crate::radial::solve_prescribed;

    fn spec(n: u32) -> ProblemSpec {
        ProblemSpec::new(n, 1.0, 2.0, CurvatureField::constant(0.5).unwrap()).unwrap()
    }

    #[test]
    fn zero_profile_1d_is_second_difference() {
        let grid = RadialGrid::new(1, 1.0, 16).unwrap();
        let op = SturmLiouvilleOperator::from_nodes(&grid, &[0.0; 17], 0.0, &spec(1)).unwrap();
        assert!(op.conductivities().iter().all(|&k| k == 1.0));
        let a = op.matrix();
        let inv_dr = 16.0;
        assert_eq!(a.diag[0], inv_dr);
        assert!(a.diag[1..].iter().all(|&d| d == 2.0 * inv_dr));
        assert!(a.sup.iter().all(|&e| e == -inv_dr));
    }

    #[test]
    fn zero_profile_2d_conductivity_is_area() {
        let grid = RadialGrid::new(2, 1.0, 16).unwrap();
        let op = SturmLiouvilleOperator::from_nodes(&grid, &[0.0; 17], 0.0, &spec(2)).unwrap();
        assert_eq!(op.conductivities(), grid.half_areas());
    }

    #[test]
    fn cap_profile_reduces_conductivity() {
        let grid = RadialGrid::new(2, 1.0, 64).unwrap();
        let cap = solve_prescribed(&grid, &[1.0; 65]).unwrap();
        let op = assemble_l(&grid, &cap, 0.0, &spec(2)).unwrap();
        for ((k, a), s) in op.conductivities().iter().zip(grid.half_areas()).zip(cap.slopes()) {
            if *s != 0.0 {
                assert!(k < a);
            }
        }
    }

    #[test]
    fn non_finite_slope_rejected() {
        let grid = RadialGrid::new(1, 1.0, 16).unwrap();
        let mut u = vec![0.0; 17];
        u[3] = f64::INFINITY;
        assert!(matches!(
            SturmLiouvilleOperator::from_nodes(&grid, &u, 0.0, &spec(1)),
            Err(Error::Assembly(_))
        ));
    }

    #[test]
    fn radial_gradient_form_identity() {
        // |q|^2/v - (q.p)^2/v^3 == t^2 / v^3
        let mut state = 0x2545_f491_4f6c_dd1du64;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 * 20.0 - 10.0
        };
        for _ in 0..1000 {
            let (s, t) = (next(), next());
            let expected = t * t / (1.0 + s * s).powf(1.5);
            let got = radial_gradient_form(s, t);
            assert!((got - expected).abs() <= 1e-12 * expected.abs().max(1e-300) + 1e-15);
            assert!((t * t * flux_derivative(s) - expected).abs() <= 1e-12 * expected.max(1e-300));
        }
    }

    #[test]
    fn flux_derivatives_match_differences() {
        let h = |s: f64| s / (1.0 + s * s).sqrt();
        for s in [-3.0, -0.7, 0.0, 0.4, 2.0] {
            let eps = 1e-5;
            let fd1 = (h(s + eps) - h(s - eps)) / (2.0 * eps);
            let fd2 = (flux_derivative(s + eps) - flux_derivative(s - eps)) / (2.0 * eps);
            assert!((fd1 - flux_derivative(s)).abs() < 1e-9);
            assert!((fd2 - flux_second_derivative(s)).abs() < 1e-8);
        }
    }

    #[test]
    fn laplacian_eigenvalue_1d() {
        let grid = RadialGrid::new(1, 1.0, 512).unwrap();
        let op = SturmLiouvilleOperator::from_nodes(&grid, &vec![0.0; 513], 0.0, &spec(1)).unwrap();
        let eig = smallest_eigenpair(&op, 1e-8).unwrap();
        let exact = (std::f64::consts::PI / 2.0).powi(2);
        assert!((eig.mu1 - exact).abs() / exact < 1e-5);
        assert!(eig.w1[..512].iter().all(|&w| w > 0.0));
        assert_eq!(*eig.w1.last().unwrap(), 0.0);
        assert!(eig.w1.windows(2).all(|w| w[0] >= w[1]));
        assert!((grid.weighted_dot(&eig.w1, &eig.w1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn q_rejects_nonzero_boundary_value() {
        let grid = RadialGrid::new(2, 1.0, 16).unwrap();
        let p = solve_prescribed(&grid, &[0.5; 17]).unwrap();
        let mut phi = vec![1.0; 17];
        assert!(matches!(
            stability_form_q(&grid, &p, 0.0, &spec(2), &phi),
            Err(Error::Domain(_))
        ));
        phi[16] = 0.0;
        assert!(stability_form_q(&grid, &p, 0.0, &spec(2), &phi).unwrap() >= 0.0);
        assert_eq!(stability_form_q(&grid, &p, 0.3, &spec(2), &[0.0; 17]).unwrap(), 0.0);
    }
}
