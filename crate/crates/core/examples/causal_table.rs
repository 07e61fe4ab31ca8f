//! Interventions on the learned models: swap the user type, or composite an
//! extra object of each kind into held-out scenes, and report which
//! changes move the predicted validity.
//!
//! ```text
//! cargo run --release --example causal_table -- [config.toml]
//! ```

use demospec::causal::build_causal_table;
use demospec::config::RunConfig;
use demospec::geometry::ObjectKind;
use demospec::pipeline::{run_seed, test_scenes, train_model, Dataset, Split};
use demospec::scenegen::UserType;
use demospec::specmodel::Ablation;

fn main() -> anyhow::Result<()> {
    env_logger::init();
    let cfg = match std::env::args().nth(1) {
        Some(p) => RunConfig::load(p.as_ref())?,
        None => {
            let mut c = RunConfig::default().with_image_size(32);
            c.train.max_epochs = 60;
            c.causal.placements_per_scene = 5;
            c
        }
    };
    let ds = Dataset::generate(&cfg)?;
    let k = cfg.dataset.traj_per_scene;
    let models = UserType::ALL
        .iter()
        .map(|&s| {
            let train = ds.examples(Split::Train, s, &cfg)?;
            Ok(train_model(&train, s, Ablation::Full, k, run_seed(cfg.seed, s, Ablation::Full, k, 0), &cfg)?.model)
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let refs: Vec<_> = models.iter().collect();
    let report = build_causal_table(
        &refs,
        &test_scenes(&ds, None),
        true,
        &ObjectKind::ALL,
        &cfg.causal,
        &cfg.scene,
        &cfg.render,
        cfg.seed,
    )?;
    println!("mean predicted validity per intervention (* = significant change):");
    print!("{}", report.to_text());
    for e in report.edges().iter().filter(|e| e.significant) {
        println!("  {} -> {}: Δ {:+.3}", e.symbol, e.user_type, e.delta);
    }
    Ok(())
}
