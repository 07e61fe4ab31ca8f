//! Every CLI stage in order, driven through the library: generate data,
//! train, sweep the learning curve, refine, intervene, fit thresholds and
//! collect the reports under one output root.
//!
//! ```text
//! cargo run --release --example full_pipeline -- [out_dir] [config.toml]
//! ```

use demospec::config::RunConfig;
use demospec::pipeline::{self, Layout};
use demospec::scenegen::UserType;
use demospec::specmodel::Ablation;

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args: Vec<String> = std::env::args().collect();
    let out = Layout::new(args.get(1).map_or("runs/example", String::as_str));
    let cfg = match args.get(2) {
        Some(p) => RunConfig::load(p.as_ref())?,
        None => {
            let mut c = RunConfig::default().with_image_size(32);
            c.train.max_epochs = 40;
            c.eval.seeds = 2;
            c.causal.placements_per_scene = 4;
            c
        }
    };
    let types = UserType::ALL;
    pipeline::cmd_gen_data(&cfg, &out)?;
    pipeline::cmd_train(&cfg, &out, &types, Ablation::Full, cfg.dataset.traj_per_scene)?;
    pipeline::cmd_eval(&cfg, &out, &[UserType::Careful], &Ablation::ALL, &cfg.eval.traj_sweep)?;
    pipeline::cmd_refine(&cfg, &out, &types)?;
    pipeline::cmd_causal(&cfg, &out, &types)?;
    pipeline::cmd_fit_thresholds(&cfg, &out, &types, None)?;
    print!("{}", pipeline::cmd_report(&out)?);
    Ok(())
}
