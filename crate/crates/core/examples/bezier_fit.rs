//! Encode a demonstration as the control point of a quadratic Bézier curve
//! with fixed endpoints, then decode it back.
//!
//! ```text
//! cargo run --release --example bezier_fit
//! ```

use demospec::geometry::{bezier_residual, fit_bezier, fit_bezier_chord, sample_bezier, BezierParam, Point2, Trajectory};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> anyhow::Result<()> {
    let ends = (Point2::new(10.0, 10.0), Point2::new(90.0, 90.0));
    let truth = BezierParam::new(80.0, 20.0);

    // exact samples: the fit recovers the control point
    let clean = sample_bezier(&truth, ends, 40)?;
    let z = fit_bezier(&clean)?;
    println!("true control ({:.3}, {:.3}), fitted ({:.12}, {:.12})", truth.control.x, truth.control.y, z.control.x, z.control.y);

    // a jittered, unevenly sampled demonstration
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut pts = vec![ends.0];
    let mut ts: Vec<f64> = (0..25).map(|_| rng.gen_range(0.02..0.98)).collect();
    ts.sort_by(f64::total_cmp);
    for t in ts {
        let p = demospec::geometry::bezier_point(t, ends.0, truth.control, ends.1);
        pts.push(Point2::new(p.x + rng.gen_range(-1.5..1.5), p.y + rng.gen_range(-1.5..1.5)));
    }
    pts.push(ends.1);
    let noisy = Trajectory::new(pts);
    let chord = fit_bezier_chord(&noisy)?;
    let full = fit_bezier(&noisy)?;
    println!(
        "noisy demo: chord-length fit ({:.2}, {:.2}) residual {:.3}; refined fit ({:.2}, {:.2}) residual {:.3}",
        chord.control.x,
        chord.control.y,
        bezier_residual(&noisy, chord.control),
        full.control.x,
        full.control.y,
        bezier_residual(&noisy, full.control)
    );

    let decoded = sample_bezier(&full, ends, 5)?;
    let shown: Vec<String> = decoded.points.iter().map(|p| format!("({:.1}, {:.1})", p.x, p.y)).collect();
    println!("decoded 5-point trajectory: {}", shown.join(" "));
    Ok(())
}
