//! Independent reference for radial solutions: RK4 shooting on
//!
//! ```text
//! u' = q / sqrt(1 - q^2),   Phi' = -r^{n-1} (H + lambda u^p),   q = Phi / r^{n-1},
//! ```
//!
//! from `u(r0) = alpha`, started with the series `q ~ -g(0) r / n`.

pub struct Shooter {
    pub n: u32,
    pub radius: f64,
    pub p: f64,
    pub h: f64,
    pub steps: usize,
}

impl Shooter {
    fn source(&self, u: f64) -> f64 {
        if u <= 0.0 {
            0.0
        } else {
            u.powf(self.p)
        }
    }

    fn rhs(&self, r: f64, u: f64, phi: f64, lambda: f64) -> Option<(f64, f64)> {
        let area = r.powi(self.n as i32 - 1);
        let q = phi / area;
        if q.is_nan() || q.abs() >= 1.0 {
            return None;
        }
        let du = q / (1.0 - q * q).sqrt();
        let dphi = -area * (self.h + lambda * self.source(u));
        Some((du, dphi))
    }

    /// `u(R)` for the solution with `u(0) = alpha`, or `None` when the
    /// graph turns vertical first.
    pub fn boundary_value(&self, alpha: f64, lambda: f64) -> Option<f64> {
        let r0 = 1e-7 * self.radius;
        let g0 = self.h + lambda * self.source(alpha);
        let nf = f64::from(self.n);
        let mut u = alpha - g0 * r0 * r0 / (2.0 * nf);
        let mut phi = -g0 * r0.powi(self.n as i32) / nf;
        let dr = (self.radius - r0) / self.steps as f64;
        let mut r = r0;
        for _ in 0..self.steps {
            let (k1u, k1p) = self.rhs(r, u, phi, lambda)?;
            let (k2u, k2p) = self.rhs(r + 0.5 * dr, u + 0.5 * dr * k1u, phi + 0.5 * dr * k1p, lambda)?;
            let (k3u, k3p) = self.rhs(r + 0.5 * dr, u + 0.5 * dr * k2u, phi + 0.5 * dr * k2p, lambda)?;
            let (k4u, k4p) = self.rhs(r + dr, u + dr * k3u, phi + dr * k3p, lambda)?;
            u += dr / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
            phi += dr / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
            r += dr;
        }
        Some(u)
    }

    /// Node values on `r_j = j R / cells` (the value at `j = 0` is `alpha`),
    /// the boundary slope, and `int_0^R |u_r| r^{n-1} dr`.
    pub fn sample(&self, alpha: f64, lambda: f64, cells: usize) -> Option<(Vec<f64>, f64, f64)> {
        let per_cell = (self.steps / cells).max(1);
        let dr = self.radius / (cells * per_cell) as f64;
        let g0 = self.h + lambda * self.source(alpha);
        let nf = f64::from(self.n);
        let r0 = 1e-3 * dr;
        let mut u = alpha - g0 * r0 * r0 / (2.0 * nf);
        let mut phi = -g0 * r0.powi(self.n as i32) / nf;
        let mut r = r0;
        let mut values = vec![alpha];
        let mut variation = 0.0;
        let mut first = true;
        for _ in 0..cells {
            for _ in 0..per_cell {
                let h = if first { dr - r0 } else { dr };
                first = false;
                let (k1u, k1p) = self.rhs(r, u, phi, lambda)?;
                let (k2u, k2p) = self.rhs(r + 0.5 * h, u + 0.5 * h * k1u, phi + 0.5 * h * k1p, lambda)?;
                let (k3u, k3p) = self.rhs(r + 0.5 * h, u + 0.5 * h * k2u, phi + 0.5 * h * k2p, lambda)?;
                let (k4u, k4p) = self.rhs(r + h, u + h * k3u, phi + h * k3p, lambda)?;
                let du = h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
                // |u_r| r^{n-1} dr by the midpoint value of r^{n-1}
                variation += du.abs() * (r + 0.5 * h).powi(self.n as i32 - 1);
                u += du;
                phi += h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
                r += h;
            }
            values.push(u);
        }
        let q = phi / self.radius.powi(self.n as i32 - 1);
        Some((values, q.abs() / (1.0 - q * q).sqrt(), variation))
    }

    /// `lambda` with `u(R) = 0` for the solution through `u(0) = alpha`;
    /// `u(R)` decreases in `lambda`, and a vertical graph counts as below zero.
    pub fn lambda_for(&self, alpha: f64, lambda_max: f64) -> Option<f64> {
        let value = |l: f64| self.boundary_value(alpha, l).unwrap_or(f64::NEG_INFINITY);
        let (mut lo, mut hi) = (0.0, lambda_max);
        if value(lo) < 0.0 || value(hi) > 0.0 {
            return None;
        }
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if value(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(0.5 * (lo + hi))
    }

    /// `(alpha, lambda)` at the maximum of `lambda(alpha)` over
    /// `[alpha_lo, alpha_hi]` by golden-section search.
    pub fn fold(&self, alpha_lo: f64, alpha_hi: f64, lambda_max: f64) -> (f64, f64) {
        let golden = 0.5 * (5f64.sqrt() - 1.0);
        let f = |a: f64| self.lambda_for(a, lambda_max).unwrap_or(f64::NEG_INFINITY);
        let (mut a, mut b) = (alpha_lo, alpha_hi);
        let mut c = b - golden * (b - a);
        let mut d = a + golden * (b - a);
        let (mut fc, mut fd) = (f(c), f(d));
        while b - a > 1e-9 {
            if fc > fd {
                b = d;
                d = c;
                fd = fc;
                c = b - golden * (b - a);
                fc = f(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + golden * (b - a);
                fd = f(d);
            }
        }
        let alpha = 0.5 * (a + b);
        (alpha, f(alpha))
    }

    /// `alpha` in `[lo, hi]` with `lambda(alpha) = target`, `lambda`
    /// monotone on the interval.
    pub fn alpha_for(&self, target: f64, lo: f64, hi: f64, lambda_max: f64) -> f64 {
        let f = |a: f64| self.lambda_for(a, lambda_max).unwrap_or(f64::NEG_INFINITY) - target;
        let (mut lo, mut hi) = (lo, hi);
        let increasing = f(hi) > f(lo);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if (f(mid) < 0.0) == increasing {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}
