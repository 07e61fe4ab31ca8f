//! Extract minimum and maximum safety-envelope thresholds from labeled
//! demonstrations, then evaluate a cost map with the tighter one.
//!
//! ```text
//! cargo run --release --example fit_envelope -- [demos.jsonl]
//! ```
//!
//! Without a file, demonstrations come from a synthetic clearance oracle
//! with a known 20 px radius around bowls and glasses.

use demospec::geometry::ObjectKind;
use demospec::io::read_demo_file;
use demospec::scenegen::SceneGenConfig;
use demospec::specfit::{boundary_gap, cost_map, fit_both, synthetic_demos, PenaltyConfig, SyntheticSpec};

fn main() -> anyhow::Result<()> {
    let kinds = vec![ObjectKind::Bowl, ObjectKind::Glass];
    let scene_cfg = SceneGenConfig::default();
    let demos = match std::env::args().nth(1) {
        Some(path) => read_demo_file(path.as_ref())?,
        None => {
            let spec = SyntheticSpec { kinds: kinds.clone(), clearance: 20.0, margin: 1.0, n_valid: 10, n_invalid: 10, max_draws: 200_000 };
            synthetic_demos(7, &spec, &scene_cfg)?
        }
    };
    let cfg = PenaltyConfig::default();
    let valid = demos.iter().filter(|d| d.valid).count();
    println!("{} demonstrations ({valid} valid), boundary resolution {:.2} px", demos.len(), boundary_gap(&demos, &cfg)?);
    let env = fit_both(&demos, &kinds, &cfg, Some(60))?;
    let (Some(lo), Some(hi)) = (&env.min_params, &env.max_params) else {
        println!("no threshold vector in [0, 60] explains every demonstration");
        return Ok(());
    };
    for (name, p) in [("min", lo), ("max", hi)] {
        let bands: Vec<String> = kinds.iter().map(|&k| format!("{k} {}", p.band(k))).collect();
        println!("{name} envelope: t_min {}, bands {}", p.t_min, bands.join(", "));
    }

    let scene = &demos[0].scene;
    let map = cost_map(lo, scene, 20, cfg.profile)?;
    println!("cost map of the first scene under the min envelope ('X' = forbidden, digits = penalty / 20):");
    for row in (0..20).rev() {
        let line: String = (0..20)
            .map(|col| {
                let v = map.get(row, col);
                if v.is_infinite() {
                    'X'
                } else {
                    char::from_digit(((v / 20.0) as u32).min(9), 10).unwrap_or('9')
                }
            })
            .collect();
        println!("  {line}");
    }
    Ok(())
}
