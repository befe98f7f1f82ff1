//! Branch CSV, bifurcation diagram SVG and JSON report writers. Output is a
//! pure function of the input, so repeated runs are byte-identical.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::continuation::{BranchPoint, FoldInfo};
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "index,lambda,u0,sup_ur,mu1,bv_norm,residual,arclength,stable";

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 64.0;
const TICKS: usize = 5;

/// Shortest decimal string that parses back to the same `f64`.
pub fn format_real(x: f64) -> String {
    ryu::Buffer::new().format(x).to_string()
}

/// `1` if `mu1 > eig_tol`, `0` if `mu1 < -eig_tol`, `?` otherwise.
pub fn stability_flag(mu1: f64, eig_tol: f64) -> char {
    if mu1 > eig_tol {
        '1'
    } else if mu1 < -eig_tol {
        '0'
    } else {
        '?'
    }
}

pub fn branch_csv(points: &[BranchPoint], eig_tol: f64) -> Result<String> {
    if points.is_empty() {
        return Err(Error::Precondition("branch is empty".into()));
    }
    let mut out = String::with_capacity(64 * (points.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for p in points {
        let reals = [p.lambda, p.u0, p.sup_ur, p.mu1, p.bv_norm, p.residual, p.arclength];
        let _ = write!(out, "{}", p.index);
        for x in reals {
            out.push(',');
            out.push_str(&format_real(x));
        }
        let _ = writeln!(out, ",{}", stability_flag(p.mu1, eig_tol));
    }
    Ok(out)
}

pub fn emit_branch_csv(points: &[BranchPoint], eig_tol: f64, path: &Path) -> Result<()> {
    let text = branch_csv(points, eig_tol)?;
    fs::write(path, text)?;
    Ok(())
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn padded(lo: f64, hi: f64) -> (f64, f64) {
        let span = hi - lo;
        if span > 0.0 {
            (lo - 0.05 * span, hi + 0.05 * span)
        } else {
            let pad = 0.5 * lo.abs().max(1.0);
            (lo - pad, hi + pad)
        }
    }

    fn x(&self, v: f64) -> f64 {
        MARGIN + (v - self.x0) / (self.x1 - self.x0) * (WIDTH - 2.0 * MARGIN)
    }

    fn y(&self, v: f64) -> f64 {
        HEIGHT - MARGIN - (v - self.y0) / (self.y1 - self.y0) * (HEIGHT - 2.0 * MARGIN)
    }
}

fn polyline(out: &mut String, frame: &Frame, pts: &[(f64, f64)], class: &str, dash: bool) {
    if pts.len() < 2 {
        return;
    }
    let coords: Vec<String> = pts
        .iter()
        .map(|&(l, u)| format!("{:.3},{:.3}", frame.x(l), frame.y(u)))
        .collect();
    let dash = if dash { " stroke-dasharray=\"6 4\"" } else { "" };
    let _ = writeln!(
        out,
        "<polyline class=\"{class}\" fill=\"none\" stroke=\"black\" stroke-width=\"1.5\"{dash} points=\"{}\"/>",
        coords.join(" ")
    );
}

/// `u(0)` against `lambda`; the lower segment solid, the upper dashed, the
/// fold marked by a circle.
pub fn bifurcation_svg(points: &[BranchPoint], fold: Option<&FoldInfo>) -> Result<String> {
    if points.len() < 2 {
        return Err(Error::Precondition("a diagram needs at least two points".into()));
    }
    if points.iter().any(|p| !(p.lambda.is_finite() && p.u0.is_finite())) {
        return Err(Error::Numerical("branch contains non-finite values".into()));
    }
    let vertex = match fold {
        Some(f) => {
            let u0 = f.u_fold.first().copied().unwrap_or(f64::NAN);
            if !(f.lambda_fold.is_finite() && u0.is_finite() && f.arclength.is_finite()) {
                return Err(Error::Numerical("fold contains non-finite values".into()));
            }
            Some((f.lambda_fold, u0, f.arclength))
        }
        None => None,
    };

    let mut lower: Vec<(f64, f64)> = Vec::new();
    let mut upper: Vec<(f64, f64)> = Vec::new();
    for p in points {
        match vertex {
            Some((_, _, s)) if p.arclength > s => upper.push((p.lambda, p.u0)),
            _ => lower.push((p.lambda, p.u0)),
        }
    }
    if let Some((l, u, _)) = vertex {
        lower.push((l, u));
        upper.insert(0, (l, u));
    }

    let all = lower.iter().chain(&upper);
    let (lmin, lmax) = all.clone().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| {
        (a.min(p.0), b.max(p.0))
    });
    let (umin, umax) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| {
        (a.min(p.1), b.max(p.1))
    });
    let (x0, x1) = Frame::padded(lmin, lmax);
    let (y0, y1) = Frame::padded(umin, umax);
    let frame = Frame { x0, x1, y0, y1 };

    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">"
    );
    let _ = writeln!(out, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(
        out,
        "<path class=\"axes\" fill=\"none\" stroke=\"black\" d=\"M {left} {top} L {left} {bottom} L {right} {bottom}\"/>"
    );
    for k in 0..TICKS {
        let t = k as f64 / (TICKS - 1) as f64;
        let lx = x0 + t * (x1 - x0);
        let uy = y0 + t * (y1 - y0);
        let (px, py) = (frame.x(lx), frame.y(uy));
        let _ = writeln!(
            out,
            "<line stroke=\"black\" x1=\"{px:.3}\" y1=\"{bottom}\" x2=\"{px:.3}\" y2=\"{:.3}\"/><text x=\"{px:.3}\" y=\"{:.3}\" text-anchor=\"middle\">{}</text>",
            bottom + 5.0,
            bottom + 18.0,
            tick_label(lx)
        );
        let _ = writeln!(
            out,
            "<line stroke=\"black\" x1=\"{:.3}\" y1=\"{py:.3}\" x2=\"{left}\" y2=\"{py:.3}\"/><text x=\"{:.3}\" y=\"{:.3}\" text-anchor=\"end\">{}</text>",
            left - 5.0,
            left - 8.0,
            py + 4.0,
            tick_label(uy)
        );
    }
    let _ = writeln!(
        out,
        "<text class=\"xlabel\" x=\"{:.3}\" y=\"{:.3}\" text-anchor=\"middle\">λ</text>",
        0.5 * (left + right),
        HEIGHT - 16.0
    );
    let _ = writeln!(
        out,
        "<text class=\"ylabel\" x=\"16\" y=\"{:.3}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.3})\">u(0)</text>",
        0.5 * (top + bottom),
        0.5 * (top + bottom)
    );

    polyline(&mut out, &frame, &lower, "lower", false);
    polyline(&mut out, &frame, &upper, "upper", true);
    if let Some((l, u, _)) = vertex {
        let _ = writeln!(
            out,
            "<circle class=\"fold\" cx=\"{:.3}\" cy=\"{:.3}\" r=\"4\" fill=\"none\" stroke=\"red\"/>",
            frame.x(l),
            frame.y(u)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

fn tick_label(v: f64) -> String {
    let s = format!("{v:.4}");
    if s == "-0.0000" {
        "0.0000".into()
    } else {
        s
    }
}

pub fn emit_bifurcation_svg(points: &[BranchPoint], fold: Option<&FoldInfo>, path: &Path) -> Result<()> {
    let text = bifurcation_svg(points, fold)?;
    fs::write(path, text)?;
    Ok(())
}

/// Pretty-printed JSON document.
pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Numerical(format!("report serialization failed: {e}")))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(index: usize, lambda: f64, u0: f64, mu1: f64, s: f64) -> BranchPoint {
        BranchPoint {
            index,
            lambda,
            u0,
            sup_ur: 0.25,
            mu1,
            bv_norm: 1.5,
            residual: 1e-13,
            arclength: s,
            tangent_lambda: 1.0,
            u: vec![u0, 0.0],
            tangent_u: vec![0.0, 0.0],
        }
    }

    #[test]
    fn single_point_csv() {
        let csv = branch_csv(&[point(0, 0.0, 0.127, 5.47, 0.0)], 1e-8).unwrap();
        assert_eq!(
            csv,
            format!("{CSV_HEADER}\n0,0.0,0.127,0.25,5.47,1.5,1e-13,0.0,1\n")
        );
    }

    #[test]
    fn stability_flags() {
        assert_eq!(stability_flag(1e-7, 1e-8), '1');
        assert_eq!(stability_flag(-1e-7, 1e-8), '0');
        assert_eq!(stability_flag(5e-9, 1e-8), '?');
    }

    #[test]
    fn empty_csv_rejected() {
        assert!(matches!(branch_csv(&[], 1e-8), Err(Error::Precondition(_))));
    }

    #[test]
    fn two_point_svg_is_one_solid_line() {
        let pts = [point(0, 0.0, 0.1, 1.0, 0.0), point(1, 1.0, 0.2, 1.0, 1.0)];
        let svg = bifurcation_svg(&pts, None).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert!(!svg.contains("stroke-dasharray"));
        assert!(!svg.contains("class=\"fold\""));
        assert!(svg.contains(">λ<") && svg.contains(">u(0)<"));
    }

    #[test]
    fn nan_rejected() {
        let pts = [point(0, 0.0, 0.1, 1.0, 0.0), point(1, f64::NAN, 0.2, 1.0, 1.0)];
        assert!(matches!(bifurcation_svg(&pts, None), Err(Error::Numerical(_))));
    }

    #[test]
    fn real_formatting_round_trips() {
        for x in [0.1, 1.0 / 3.0, 12.926045791418916, -2.5e-300, 7.0] {
            assert_eq!(format_real(x).parse::<f64>().unwrap(), x);
        }
    }
}
