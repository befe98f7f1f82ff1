#![allow(dead_code)]

pub mod shooting;

use mcurv::continuation::{trace_branch, BranchTrace, ContinuationOptions};
use mcurv::minimal::{bisect_lambda_star, LambdaStarEstimate};
use mcurv::{CurvatureField, ProblemSpec, RadialGrid};
use rand::rngs::StdRng;
use rand::{RngExt, SeedableRng};

use shooting::Shooter;

/// Reference values from the shooting oracle (RK4, 65536 steps, golden
/// section on `lambda(alpha)` to 1e-9 in `alpha`).
pub mod frozen {
    pub mod plane {
        pub const LAMBDA_STAR: f64 = 12.926047756234;
        pub const U0_FOLD: f64 = 0.253112516680;
        pub const SLOPE_FOLD: f64 = 0.3983966755284966;
        /// `int_0^R |u_r| r dr` at the fold.
        pub const VARIATION_FOLD: f64 = 0.1596106667982484;
        pub const SLOPE_AT_090: f64 = 0.3341599920038797;
        pub const U0_UPPER_095: f64 = 0.318164798931;
        pub const U0_LOWER_095: f64 = 0.208887896490;
    }
    pub mod line {
        pub const LAMBDA_STAR: f64 = 3.182188772363;
        pub const U0_FOLD: f64 = 0.317888713184;
        pub const SLOPE_FOLD: f64 = 1.6368979956519356;
        pub const VARIATION_FOLD: f64 = 0.317888713184;
        pub const SLOPE_AT_090: f64 = 1.0797035516440359;
        pub const U0_UPPER_095: f64 = 0.395391014732;
        pub const U0_LOWER_095: f64 = 0.259214996104;
    }
}

/// `n = 2, R = 1, H = 0.5, p = 2`.
pub fn plane_spec() -> ProblemSpec {
    ProblemSpec::new(2, 1.0, 2.0, CurvatureField::constant(0.5).unwrap()).unwrap()
}

/// `n = 1, R = 0.5, H = 1, p = 1`.
pub fn line_spec() -> ProblemSpec {
    ProblemSpec::new(1, 0.5, 1.0, CurvatureField::constant(1.0).unwrap()).unwrap()
}

pub fn shooter(spec: &ProblemSpec, steps: usize) -> Shooter {
    Shooter {
        n: spec.n,
        radius: spec.radius,
        p: spec.p,
        h: spec.h.value(0.0),
        steps,
    }
}

pub fn grid(spec: &ProblemSpec, cells: usize) -> RadialGrid {
    RadialGrid::new(spec.n, spec.radius, cells).unwrap()
}

pub struct Fixture {
    pub spec: ProblemSpec,
    pub grid: RadialGrid,
    pub estimate: LambdaStarEstimate,
    pub trace: BranchTrace,
}

pub fn trace_options(lambda_stop: f64) -> ContinuationOptions {
    ContinuationOptions {
        lambda_stop,
        ..ContinuationOptions::default()
    }
}

/// Bisection, then a trace down to half the extremal parameter on the
/// upper branch.
pub fn fixture(spec: ProblemSpec, cells: usize) -> Fixture {
    let grid = grid(&spec, cells);
    let estimate = bisect_lambda_star(&spec, &grid).unwrap();
    let trace = trace_branch(&spec, &grid, &trace_options(0.5 * estimate.lambda_star)).unwrap();
    Fixture {
        spec,
        grid,
        estimate,
        trace,
    }
}

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

/// Smooth positive random profile with `u_M = 0`.
pub fn random_profile(rng: &mut StdRng, grid: &RadialGrid, amplitude: f64) -> Vec<f64> {
    let modes: Vec<(f64, f64)> = (0..4)
        .map(|k| (rng.random_range(-1.0..1.0) / (1.0 + k as f64), k as f64 * std::f64::consts::PI))
        .collect();
    let radius = grid.radius();
    let mut u: Vec<f64> = grid
        .nodes()
        .iter()
        .map(|&r| {
            let x = r / radius;
            let wave: f64 = modes.iter().map(|(a, k)| a * (k * x).cos()).sum();
            amplitude * (1.0 - x * x) * (1.0 + 0.3 * wave)
        })
        .collect();
    *u.last_mut().unwrap() = 0.0;
    u
}

/// Random test function vanishing at `r = R`.
pub fn random_test_vector(rng: &mut StdRng, cells: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..=cells).map(|_| rng.random_range(-1.0..1.0)).collect();
    v[cells] = 0.0;
    v
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// `max_i (a_i - b_i)`.
pub fn max_diff_signed(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x - y).fold(f64::MIN, f64::max)
}
