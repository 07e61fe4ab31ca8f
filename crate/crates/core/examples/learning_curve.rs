//! Test accuracy against demonstrations per scene for each loss ablation.
//!
//! ```text
//! cargo run --release --example learning_curve -- [config.toml|-] [seeds] [user_type] [ablations]
//! ```

use std::time::Instant;

use demospec::config::RunConfig;
use demospec::pipeline::{run_seed, train_model, Dataset, Split};
use demospec::scenegen::UserType;
use demospec::specmodel::{summarize, Ablation};

fn main() -> anyhow::Result<()> {
    env_logger::init();
    let args: Vec<String> = std::env::args().collect();
    let cfg = match args.get(1).map(String::as_str) {
        None | Some("-") => RunConfig::default().with_image_size(64),
        Some(path) => RunConfig::load(path.as_ref())?,
    };
    let seeds = args.get(2).map_or(Ok(3), |s| s.parse())?;
    let s: UserType = args.get(3).map_or(Ok(UserType::Careful), |s| s.parse())?;
    let ablations: Vec<Ablation> = match args.get(4) {
        Some(list) => list.split(',').map(str::parse).collect::<Result<_, _>>()?,
        None => Ablation::ALL.to_vec(),
    };
    let ds = Dataset::generate(&cfg)?;
    let train = ds.examples(Split::Train, s, &cfg)?;
    let test = ds.examples(Split::Test, s, &cfg)?;
    let n_valid = test.iter().flat_map(|x| &x.examples).filter(|e| e.1).count();
    let n_test: usize = test.iter().map(|x| x.examples.len()).sum();
    println!("{s}: {n_valid}/{n_test} valid test demos");
    println!("ablation,traj_per_scene,mean,q1,q3,seconds_per_run");
    for &ablation in &ablations {
        for &k in &cfg.eval.traj_sweep {
            let t0 = Instant::now();
            let mut accs = Vec::new();
            for rep in 0..seeds {
                let out = train_model(&train, s, ablation, k, run_seed(cfg.seed, s, ablation, k, rep), &cfg)?;
                accs.push(demospec::pipeline::evaluate(&out.model, &test)?);
            }
            let st = summarize(&accs)?;
            println!(
                "{},{k},{:.3},{:.3},{:.3},{:.1}",
                ablation.name(),
                st.mean,
                st.q1,
                st.q3,
                t0.elapsed().as_secs_f64() / seeds as f64
            );
        }
    }
    Ok(())
}
