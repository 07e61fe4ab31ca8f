//! Round-trip and least-squares optimality checks for the Bézier code.

use demospec::geometry::{fit_bezier, sample_bezier, BezierParam, Point2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::projection_sse;

pub const START: Point2 = Point2::new(10.0, 10.0);
pub const END: Point2 = Point2::new(90.0, 90.0);

/// Largest control-point error of `fit(sample(z))` over `n` random codes.
pub fn worst_round_trip(n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let z = BezierParam::new(rng.gen_range(-25.0..125.0), rng.gen_range(-25.0..125.0));
        let points = rng.gen_range(5..80);
        let tr = sample_bezier(&z, (START, END), points).unwrap();
        let back = fit_bezier(&tr).unwrap();
        worst = worst.max(back.control.distance(&z.control));
    }
    worst
}

/// Noisy instances where some point of a fine lattice around the fitted
/// control beats the fit under a dense-scan residual. Empty means optimal.
pub fn lattice_violations(instances: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bad = Vec::new();
    for instance in 0..instances {
        let z = BezierParam::new(rng.gen_range(-10.0..110.0), rng.gen_range(-10.0..110.0));
        let mut tr = sample_bezier(&z, (START, END), 30).unwrap();
        let last = tr.points.len() - 1;
        for p in &mut tr.points[1..last] {
            p.x += rng.gen_range(-2.0..2.0);
            p.y += rng.gen_range(-2.0..2.0);
        }
        let fit = fit_bezier(&tr).unwrap().control;
        let at_fit = projection_sse(&tr, fit);
        let mut lattice_best = f64::INFINITY;
        for (span, step) in [(6.0, 0.5), (0.5, 0.05)] {
            let k = (span / step) as i32;
            for i in -k..=k {
                for j in -k..=k {
                    let c = Point2::new(fit.x + i as f64 * step, fit.y + j as f64 * step);
                    lattice_best = lattice_best.min(projection_sse(&tr, c));
                }
            }
        }
        if at_fit > lattice_best * (1.0 + 1e-6) + 1e-9 {
            bad.push(format!("instance {instance}: fit residual {at_fit} exceeds lattice minimum {lattice_best}"));
        }
    }
    bad
}
