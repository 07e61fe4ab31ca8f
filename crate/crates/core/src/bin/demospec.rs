use std::path::PathBuf;

use anyhow::Context as _;
use clap::{Parser, Subcommand};
use demospec::config::{RunConfig, OUT_ENV};
use demospec::pipeline::{self, Layout};
use demospec::scenegen::UserType;
use demospec::specmodel::Ablation;

#[derive(Parser, Debug)]
#[command(name = "demospec", version, about = "Learn trajectory specifications from tabletop demonstrations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration; defaults apply to anything it omits.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Restrict to one user type (default: all three).
    #[arg(long = "type", global = true)]
    user_type: Option<UserType>,
    /// Loss ablation (train default: full; eval default: all three).
    #[arg(long, global = true)]
    ablation: Option<Ablation>,
    /// Demonstrations per scene (gen-data: generated; train/eval: used).
    #[arg(long, global = true)]
    traj_per_scene: Option<usize>,
    /// Worker threads for independent runs.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output root.
    #[arg(long, global = true, env = OUT_ENV)]
    out: Option<PathBuf>,
    /// Force single-threaded execution.
    #[arg(long, global = true)]
    deterministic: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate scenes and labeled demonstrations.
    GenData,
    /// Train one model per user type.
    Train,
    /// Learning-curve sweep over demonstrations per scene.
    Eval,
    /// Gradient-ascent refinement from invalid initializations.
    Refine,
    /// User-type and symbol intervention table.
    Causal,
    /// Min/max threshold envelopes and cost map.
    FitThresholds {
        /// JSON-lines demonstration file to fit instead of the dataset.
        #[arg(long)]
        demos: Option<PathBuf>,
    },
    /// Collect existing reports into one summary.
    Report,
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(j) = cli.jobs {
        cfg.jobs = j;
    }
    if cli.deterministic {
        cfg.deterministic = true;
        cfg.jobs = 1;
    }
    if let (Command::GenData, Some(k)) = (&cli.command, cli.traj_per_scene) {
        cfg.dataset.traj_per_scene = k;
    }
    cfg.validate()?;
    let root = cli.out.clone().or_else(|| cfg.out_dir.clone()).unwrap_or_else(|| PathBuf::from("runs"));
    let out = Layout::new(root);
    let types: Vec<UserType> = cli.user_type.map_or_else(|| UserType::ALL.to_vec(), |s| vec![s]);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.jobs.max(1)).build()?;
    pool.install(|| run(&cli, &cfg, &out, &types))
}

fn run(cli: &Cli, cfg: &RunConfig, out: &Layout, types: &[UserType]) -> anyhow::Result<()> {
    match &cli.command {
        Command::GenData => {
            let ds = pipeline::cmd_gen_data(cfg, out)?;
            println!("{} scenes, {} demonstrations -> {}", ds.scenes.len(), ds.demos.len(), out.dataset().display());
        }
        Command::Train => {
            let ablation = cli.ablation.unwrap_or(Ablation::Full);
            let k = cli.traj_per_scene.unwrap_or(cfg.dataset.traj_per_scene);
            for m in pipeline::cmd_train(cfg, out, types, ablation, k)? {
                println!("{}: {}", m.user_type, out.model(m.user_type, ablation, k).display());
            }
        }
        Command::Eval => {
            let ablations = cli.ablation.map_or_else(|| Ablation::ALL.to_vec(), |a| vec![a]);
            let ks = cli.traj_per_scene.map_or_else(|| cfg.eval.traj_sweep.clone(), |k| vec![k]);
            for r in pipeline::cmd_eval(cfg, out, types, &ablations, &ks)? {
                println!(
                    "{:<10} {:<10} k={:<2} mean {:.3} [{:.3}, {:.3}]",
                    r.user_type,
                    r.ablation.name(),
                    r.traj_per_scene,
                    r.mean,
                    r.q1,
                    r.q3
                );
            }
        }
        Command::Refine => {
            for s in pipeline::cmd_refine(cfg, out, types)? {
                println!("{:<10} {}/{} succeeded ({:.1}%)", s.user_type, s.successes, s.attempts, 100.0 * s.success_rate);
            }
        }
        Command::Causal => print!("{}", pipeline::cmd_causal(cfg, out, types)?.to_text()),
        Command::FitThresholds { demos } => {
            let fit = pipeline::cmd_fit_thresholds(cfg, out, types, demos.as_deref())?;
            println!("thresholds -> {}", out.report("thresholds.csv").display());
            for c in fit.curve {
                println!("n={:<3} min {:.1} max {:.1}", c.n_pos, c.min_objective, c.max_objective);
            }
        }
        Command::Report => print!("{}", pipeline::cmd_report(out)?),
    }
    Ok(())
}
