//! Gradient ascent on the trajectory code: start from demonstrations the
//! oracle rejects and push them toward validity under a trained model.
//!
//! ```text
//! cargo run --release --example refine_trajectories -- [careful|normal|aggressive] [config.toml]
//! ```

use demospec::config::RunConfig;
use demospec::pipeline::{run_seed, test_scenes, train_model, Dataset, Split};
use demospec::refine::refine_success_rate;
use demospec::scenegen::UserType;
use demospec::specmodel::Ablation;

fn main() -> anyhow::Result<()> {
    env_logger::init();
    let args: Vec<String> = std::env::args().collect();
    let s: UserType = args.get(1).map_or(Ok(UserType::Careful), |a| a.parse())?;
    let cfg = match args.get(2) {
        Some(p) => RunConfig::load(p.as_ref())?,
        None => {
            let mut c = RunConfig::default().with_image_size(32);
            c.train.max_epochs = 60;
            c
        }
    };
    let ds = Dataset::generate(&cfg)?;
    let k = cfg.dataset.traj_per_scene;
    let model =
        train_model(&ds.examples(Split::Train, s, &cfg)?, s, Ablation::Full, k, run_seed(cfg.seed, s, Ablation::Full, k, 0), &cfg)?
            .model;
    let scenes = test_scenes(&ds, Some(s));
    let (summary, runs) = refine_success_rate(&model, &scenes, &cfg.refine, &cfg.scene, &cfg.render, &cfg.oracle, cfg.seed)?;
    println!(
        "{s}: {}/{} refinements end oracle-valid ({:.0}%), v̂ rose in {:.0}% of runs",
        summary.successes,
        summary.attempts,
        100.0 * summary.success_rate,
        100.0 * summary.ascent_rate
    );
    for r in runs.iter().take(5) {
        let (a, b) = (r.trace.initial(), r.trace.last());
        println!(
            "  scene {:>2}: ({:6.1}, {:6.1}) v̂ {:.3} -> ({:6.1}, {:6.1}) v̂ {:.3}  {}",
            r.scene_index,
            a.control.x,
            a.control.y,
            r.trace.values[0],
            b.control.x,
            b.control.y,
            r.trace.values.last().copied().unwrap_or(f64::NAN),
            if r.final_valid { "valid" } else { "still invalid" }
        );
    }
    Ok(())
}
