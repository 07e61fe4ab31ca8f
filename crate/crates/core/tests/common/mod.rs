//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

pub mod bezier;
pub mod grad;
pub mod solver;

use demospec::geometry::{BezierParam, Point2, Trajectory};

/// Central finite differences of `f` at `x`.
pub fn fd_gradient(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            let x0 = xp[i];
            xp[i] = x0 + h;
            let up = f(&xp);
            xp[i] = x0 - h;
            let down = f(&xp);
            xp[i] = x0;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Norm-wise relative error `‖a − b‖∞ / max(‖a‖∞, ‖b‖∞, floor)`.
pub fn rel_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = a.iter().chain(b).map(|v| v.abs()).fold(floor, f64::max);
    diff / scale
}

/// Quadratic Bézier with fixed endpoints evaluated directly from its definition.
pub fn bezier_point(a: Point2, c: Point2, b: Point2, t: f64) -> Point2 {
    let u = 1.0 - t;
    Point2::new(u * u * a.x + 2.0 * u * t * c.x + t * t * b.x, u * u * a.y + 2.0 * u * t * c.y + t * t * b.y)
}

/// Sum of squared distances from each trajectory point to the nearest point
/// of the curve with control `c`, by dense parameter scan plus local refinement.
pub fn projection_sse(tr: &Trajectory, c: Point2) -> f64 {
    let (a, b) = (tr.points[0], *tr.points.last().unwrap());
    tr.points
        .iter()
        .map(|p| {
            let d2 = |t: f64| {
                let q = bezier_point(a, c, b, t);
                (q.x - p.x).powi(2) + (q.y - p.y).powi(2)
            };
            let n = 2000;
            let mut best = (0..=n).map(|i| i as f64 / n as f64).fold((f64::INFINITY, 0.0), |acc, t| {
                let v = d2(t);
                if v < acc.0 { (v, t) } else { acc }
            });
            // golden-section polish around the best grid point
            let (mut lo, mut hi) = ((best.1 - 1.0 / n as f64).max(0.0), (best.1 + 1.0 / n as f64).min(1.0));
            let g = 0.5 * (5f64.sqrt() - 1.0);
            for _ in 0..60 {
                let m1 = hi - g * (hi - lo);
                let m2 = lo + g * (hi - lo);
                if d2(m1) < d2(m2) { hi = m2 } else { lo = m1 }
            }
            let t = 0.5 * (lo + hi);
            best.0 = best.0.min(d2(t));
            best.0
        })
        .sum()
}

pub fn control(z: &BezierParam) -> Point2 {
    z.control
}
