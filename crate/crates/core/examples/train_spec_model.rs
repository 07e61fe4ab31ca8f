//! Train one user type's specification model, report test accuracy and
//! print its validity map over trajectory codes for a test scene.
//!
//! ```text
//! cargo run --release --example train_spec_model -- [careful|normal|aggressive] [config.toml]
//! ```
//!
//! Without a config the example runs at 32×32 with a short epoch budget.

use demospec::config::RunConfig;
use demospec::pipeline::{evaluate, run_seed, train_model, Dataset, Split};
use demospec::scenegen::UserType;
use demospec::specmodel::Ablation;

fn main() -> anyhow::Result<()> {
    env_logger::init();
    let args: Vec<String> = std::env::args().collect();
    let s: UserType = args.get(1).map_or(Ok(UserType::Normal), |a| a.parse())?;
    let cfg = match args.get(2) {
        Some(p) => RunConfig::load(p.as_ref())?,
        None => {
            let mut c = RunConfig::default().with_image_size(32);
            c.train.max_epochs = 60;
            c
        }
    };
    let ds = Dataset::generate(&cfg)?;
    let train = ds.examples(Split::Train, s, &cfg)?;
    let test = ds.examples(Split::Test, s, &cfg)?;
    let k = cfg.dataset.traj_per_scene;
    let out = train_model(&train, s, Ablation::Full, k, run_seed(cfg.seed, s, Ablation::Full, k, 0), &cfg)?;
    let m = &out.model;
    println!(
        "{s}: {} epochs, best epoch {}, validation BCE {:.3}, test accuracy {:.3}",
        m.meta.epochs_run,
        m.meta.best_epoch,
        m.meta.best_val_bce,
        evaluate(m, &test)?
    );

    let (lo, hi) = cfg.scene.control_box();
    let res = 16;
    let map = m.sample_validity_map(&test[0].image, lo, hi, res)?;
    println!("validity map of the first test scene (rows top to bottom are high to low control y; '#' means v̂ > 0.5):");
    for row in (0..res).rev() {
        let line: String = (0..res).map(|col| if map.values[row * res + col] > 0.5 { '#' } else { '.' }).collect();
        println!("  {line}");
    }
    Ok(())
}
