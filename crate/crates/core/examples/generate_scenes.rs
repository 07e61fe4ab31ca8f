//! Generate the synthetic tabletop dataset, print label balance per user
//! type and write one rendered scene as a binary PPM.
//!
//! ```text
//! cargo run --release --example generate_scenes -- [out.ppm]
//! ```

use demospec::config::RunConfig;
use demospec::pipeline::{Dataset, Split};
use demospec::scenegen::{render, UserType};

fn main() -> anyhow::Result<()> {
    env_logger::init();
    let out = std::env::args().nth(1).unwrap_or_else(|| "scene.ppm".into());
    let cfg = RunConfig::default();
    let ds = Dataset::generate(&cfg)?;
    println!("{} scenes, {} demonstrations", ds.scenes.len(), ds.demos.len());
    for s in UserType::ALL {
        for split in [Split::Train, Split::Test] {
            let ids: Vec<usize> = ds.scenes_for(split, s).map(|r| r.id).collect();
            let demos: Vec<_> = ds.demos.iter().filter(|d| d.user_type == s && ids.contains(&d.scene_id)).collect();
            let valid = demos.iter().filter(|d| d.valid).count();
            println!("{s:<10} {split:?}: {valid}/{} valid ({:.0}%)", demos.len(), 100.0 * valid as f64 / demos.len() as f64);
        }
    }
    let first = &ds.scenes[0];
    let img = render(&first.scene, &cfg.render);
    let n = img.size;
    let mut ppm = format!("P6\n{n} {n}\n255\n").into_bytes();
    for row in 0..n {
        for col in 0..n {
            let p = img.pixel(row, col);
            ppm.extend([p.0, p.1, p.2].map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
        }
    }
    std::fs::write(&out, ppm)?;
    println!("scene 0 ({} objects) written to {out}", first.scene.objects.len());
    Ok(())
}
