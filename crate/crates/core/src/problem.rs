//! Problem instance and the admissibility conditions on `H` for a ball.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest polynomial degree accepted for `H(r)`.
pub const MAX_DEGREE: usize = 8;

/// Number of radii sampled when evaluating ball conditions.
const CONDITION_SAMPLES: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurvatureKind {
    Constant,
    Polynomial,
}

/// Prescribed curvature `H(r) = sum_k c_k r^k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureField {
    kind: CurvatureKind,
    coefficients: Vec<f64>,
}

impl CurvatureField {
    pub fn constant(value: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::InvalidInput("H must be finite".into()));
        }
        Ok(Self {
            kind: CurvatureKind::Constant,
            coefficients: vec![value],
        })
    }

    pub fn polynomial(coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.is_empty() {
            return Err(Error::InvalidInput("H needs at least one coefficient".into()));
        }
        if coefficients.len() > MAX_DEGREE + 1 {
            return Err(Error::InvalidInput(format!(
                "H has degree {}, at most {MAX_DEGREE} supported",
                coefficients.len() - 1
            )));
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("H coefficients must be finite".into()));
        }
        Ok(Self {
            kind: CurvatureKind::Polynomial,
            coefficients,
        })
    }

    pub fn kind(&self) -> CurvatureKind {
        self.kind
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// Horner evaluation; no range check.
    pub fn value(&self, r: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, &c| acc * r + c)
    }

    pub fn derivative(&self, r: f64) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (k, &c)| acc * r + k as f64 * c)
    }

    /// Upper bound for `|H'|` on `[0, radius]`.
    pub fn lipschitz_bound(&self, radius: f64) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, c)| k as f64 * c.abs() * radius.powi(k as i32 - 1))
            .sum()
    }

    /// `(1 / r^{n-1}) * int_0^r H(s) s^{n-1} ds`, exact for the polynomial.
    pub fn ball_flux_ratio(&self, n: u32, r: f64) -> f64 {
        let n = f64::from(n);
        self.coefficients
            .iter()
            .enumerate()
            .rev()
            .fold(0.0, |acc, (k, &c)| acc * r + c / (k as f64 + n))
            * r
    }

    fn samples(radius: f64) -> impl Iterator<Item = f64> {
        (0..=CONDITION_SAMPLES).map(move |j| radius * j as f64 / CONDITION_SAMPLES as f64)
    }

    /// Sampled maximum of `H` on `[0, radius]`.
    pub fn sup_on(&self, radius: f64) -> f64 {
        Self::samples(radius).map(|r| self.value(r)).fold(f64::MIN, f64::max)
    }

    /// Sampled minimum of `H` on `[0, radius]`.
    pub fn min_on(&self, radius: f64) -> f64 {
        Self::samples(radius).map(|r| self.value(r)).fold(f64::MAX, f64::min)
    }

    /// Guaranteed lower bound for `min H` on `[0, radius]`: the sampled
    /// minimum minus the Lipschitz slack between samples.
    pub fn lower_bound_on(&self, radius: f64) -> f64 {
        let spacing = radius / CONDITION_SAMPLES as f64;
        self.min_on(radius) - 0.5 * spacing * self.lipschitz_bound(radius)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub picard_tol: f64,
    pub newton_tol: f64,
    pub eig_tol: f64,
    pub bisect_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            picard_tol: 1e-10,
            newton_tol: 1e-10,
            eig_tol: 1e-8,
            bisect_tol: 1e-5,
        }
    }
}

impl Tolerances {
    fn validate(&self) -> Result<()> {
        let all = [
            ("picard_tol", self.picard_tol),
            ("newton_tol", self.newton_tol),
            ("eig_tol", self.eig_tol),
            ("bisect_tol", self.bisect_tol),
        ];
        for (name, v) in all {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidInput(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

/// The problem `-div(Tu) = H + lambda u^p` on the ball of radius `radius`
/// in `R^n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub n: u32,
    pub radius: f64,
    pub p: f64,
    pub h: CurvatureField,
    pub eps0: f64,
    pub tol: Tolerances,
}

impl ProblemSpec {
    pub fn new(n: u32, radius: f64, p: f64, h: CurvatureField) -> Result<Self> {
        Self::with_options(n, radius, p, h, 0.1, Tolerances::default())
    }

    pub fn with_options(
        n: u32,
        radius: f64,
        p: f64,
        h: CurvatureField,
        eps0: f64,
        tol: Tolerances,
    ) -> Result<Self> {
        if n < 1 {
            return Err(Error::InvalidInput("n must be >= 1".into()));
        }
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::InvalidInput("R must be > 0".into()));
        }
        if !(p.is_finite() && p >= 1.0) {
            return Err(Error::InvalidInput("p must be >= 1".into()));
        }
        if !(eps0 > 0.0 && eps0 < 1.0) {
            return Err(Error::InvalidInput("eps0 must lie in (0, 1)".into()));
        }
        tol.validate()?;
        Ok(Self {
            n,
            radius,
            p,
            h,
            eps0,
            tol,
        })
    }

    pub fn with_tolerances(mut self, tol: Tolerances) -> Result<Self> {
        tol.validate()?;
        self.tol = tol;
        Ok(self)
    }

    /// `u^p` for `u >= 0`; negative arguments are clamped to zero.
    #[inline]
    pub fn source(&self, u: f64) -> f64 {
        if u <= 0.0 {
            0.0
        } else {
            u.powf(self.p)
        }
    }

    /// `d/du u^p`.
    #[inline]
    pub fn source_derivative(&self, u: f64) -> f64 {
        if self.p == 1.0 {
            1.0
        } else if u <= 0.0 {
            0.0
        } else {
            self.p * u.powf(self.p - 1.0)
        }
    }

    /// `d^2/du^2 u^p`; infinite at `u = 0` when `p < 2`.
    #[inline]
    pub fn source_second_derivative(&self, u: f64) -> f64 {
        if self.p == 1.0 {
            0.0
        } else if self.p == 2.0 {
            2.0
        } else if u <= 0.0 {
            if self.p > 2.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            self.p * (self.p - 1.0) * u.powf(self.p - 2.0)
        }
    }
}

/// `H(r)` for `0 <= r <= R`.
pub fn eval_h(spec: &ProblemSpec, r: f64) -> Result<f64> {
    if !(0.0..=spec.radius).contains(&r) {
        return Err(Error::Domain(format!(
            "r = {r} outside [0, {}]",
            spec.radius
        )));
    }
    Ok(spec.h.value(r))
}

/// Outcome of the admissibility checks on a ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    /// `1 - max_r q(r)` with `q(r) = r^{1-n} int_0^r H s^{n-1} ds`.
    pub interior_margin: f64,
    /// `H(R) <= (1 - eps0)(n - 1)/R`.
    pub boundary_strict_ok: bool,
    /// `H(R) <= (1 - eps0) n / R`, the relaxation available on balls.
    pub boundary_ball_relaxed_ok: bool,
    pub positivity_ok: bool,
    pub admissible: bool,
    /// The interior condition is only tested on concentric balls.
    pub ball_restricted: bool,
}

pub fn check_admissibility(spec: &ProblemSpec) -> ConditionReport {
    let radius = spec.radius;
    let worst = (1..=CONDITION_SAMPLES)
        .map(|j| radius * j as f64 / CONDITION_SAMPLES as f64)
        .map(|r| spec.h.ball_flux_ratio(spec.n, r))
        .fold(f64::MIN, f64::max);
    let interior_margin = 1.0 - worst;

    let h_boundary = spec.h.value(radius);
    let n = f64::from(spec.n);
    let boundary_strict_ok = h_boundary <= (1.0 - spec.eps0) * (n - 1.0) / radius;
    let boundary_ball_relaxed_ok = h_boundary <= (1.0 - spec.eps0) * n / radius;
    let positivity_ok = spec.h.lower_bound_on(radius) > 0.0;

    let admissible = positivity_ok
        && interior_margin >= spec.eps0
        && (boundary_strict_ok || boundary_ball_relaxed_ok);

    ConditionReport {
        interior_margin,
        boundary_strict_ok,
        boundary_ball_relaxed_ok,
        positivity_ok,
        admissible,
        ball_restricted: true,
    }
}
