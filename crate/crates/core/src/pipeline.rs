//! Experiment drivers shared by the CLI, the examples and the acceptance suite.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::geometry::{ObjectKind, Scene, Trajectory};
use crate::scenegen::{generate_demos, generate_scene_containing, mix_seed, render, rng_for, Demonstration, UserType};
use crate::specmodel::{self, Ablation, SceneExamples, SpecModel, TrainOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRecord {
    pub id: usize,
    pub split: Split,
    /// The demonstrator whose scene set this belongs to.
    pub user_type: UserType,
    pub scene: Scene,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoRecord {
    pub scene_id: usize,
    pub user_type: UserType,
    pub valid: bool,
    pub trajectory: Trajectory,
}

/// Scenes shared by all user types plus per-type labeled demonstrations.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub seed: u64,
    pub scenes: Vec<SceneRecord>,
    pub demos: Vec<DemoRecord>,
}

impl Dataset {
    /// Each user type gets its own train and test scenes; test scenes use the
    /// held-out renderings. A scene always holds at least one object its
    /// type avoids, when the type avoids anything, so every scene can yield
    /// both labels.
    pub fn generate(cfg: &RunConfig) -> Result<Dataset> {
        cfg.validate()?;
        let d = &cfg.dataset;
        let n_total = d.train_scenes_per_type + d.test_scenes_per_type;
        let mut scenes = Vec::new();
        let mut demos = Vec::new();
        for s in UserType::ALL {
            let required = cfg.oracle.avoid_set(s);
            for j in 0..n_total {
                let id = s.index() * n_total + j;
                let split = if j < d.train_scenes_per_type { Split::Train } else { Split::Test };
                let mut rng = rng_for(cfg.seed, &[0x0B1, id as u64]);
                let n_obj = rng.gen_range(d.min_objects..=d.max_objects);
                let scene = generate_scene_containing(
                    mix_seed(cfg.seed, &[0x5CE, id as u64]),
                    n_obj,
                    &ObjectKind::ALL,
                    &required,
                    split == Split::Test,
                    &cfg.scene,
                )?;
                let ds = generate_demos(&scene, id, s, d.traj_per_scene, cfg.seed, &cfg.scene, &cfg.oracle)?;
                demos.extend(ds.into_iter().map(|Demonstration { scene_id, trajectory, user_type, valid }| DemoRecord {
                    scene_id,
                    user_type,
                    valid,
                    trajectory,
                }));
                scenes.push(SceneRecord { id, split, user_type: s, scene });
            }
        }
        Ok(Dataset { seed: cfg.seed, scenes, demos })
    }

    pub fn scene(&self, id: usize) -> Option<&SceneRecord> {
        self.scenes.iter().find(|r| r.id == id)
    }

    pub fn scenes_in(&self, split: Split) -> impl Iterator<Item = &SceneRecord> {
        self.scenes.iter().filter(move |r| r.split == split)
    }

    pub fn scenes_for(&self, split: Split, s: UserType) -> impl Iterator<Item = &SceneRecord> {
        self.scenes.iter().filter(move |r| r.split == split && r.user_type == s)
    }

    pub fn demos_for(&self, scene_id: usize, s: UserType) -> impl Iterator<Item = &DemoRecord> {
        self.demos.iter().filter(move |d| d.scene_id == scene_id && d.user_type == s)
    }

    /// Rendered scenes with Bézier-coded demonstrations for one user type.
    pub fn examples(&self, split: Split, s: UserType, cfg: &RunConfig) -> Result<Vec<SceneExamples>> {
        self.scenes_for(split, s)
            .map(|r| {
                let image = render(&r.scene, &cfg.render);
                let examples = self
                    .demos_for(r.id, s)
                    .map(|d| Ok((crate::geometry::fit_bezier(&d.trajectory)?, d.valid)))
                    .collect::<Result<Vec<_>>>()?;
                Ok(SceneExamples { image, examples })
            })
            .collect()
    }
}

/// Seed for one training run of a sweep.
pub fn run_seed(base: u64, s: UserType, ablation: Ablation, k: usize, rep: usize) -> u64 {
    mix_seed(base, &[0x7EA1, s.index() as u64, ablation as u64, k as u64, rep as u64])
}

/// Train one model on `k` demonstrations per training scene.
pub fn train_model(
    train: &[SceneExamples],
    s: UserType,
    ablation: Ablation,
    k: usize,
    seed: u64,
    cfg: &RunConfig,
) -> Result<TrainOutcome> {
    let subset = specmodel::subsample(train, k, seed);
    let weights = ablation.apply(cfg.loss);
    let mut out = specmodel::train(&subset, s, weights, &cfg.arch, &cfg.train, seed)?;
    out.model.meta.traj_per_scene = k;
    Ok(out)
}

/// Test accuracy of a model.
pub fn evaluate(model: &SpecModel, test: &[SceneExamples]) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::Empty("test scenes"));
    }
    specmodel::evaluate(model, test)
}

// ------------------------------------------------------------ command drivers

/// Artifact layout under one output root.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: std::path::PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<std::path::PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn data_dir(&self) -> std::path::PathBuf {
        self.root.join("data")
    }

    pub fn dataset(&self) -> std::path::PathBuf {
        self.data_dir().join("dataset.jsonl")
    }

    pub fn models_dir(&self) -> std::path::PathBuf {
        self.root.join("models")
    }

    pub fn model(&self, s: UserType, ablation: Ablation, k: usize) -> std::path::PathBuf {
        self.models_dir().join(format!("{s}_{}_k{k}.ckpt", ablation.name()))
    }

    pub fn training_curve(&self, s: UserType, ablation: Ablation, k: usize) -> std::path::PathBuf {
        self.models_dir().join(format!("{s}_{}_k{k}_curve.csv", ablation.name()))
    }

    pub fn reports_dir(&self) -> std::path::PathBuf {
        self.root.join("reports")
    }

    pub fn report(&self, name: &str) -> std::path::PathBuf {
        self.reports_dir().join(name)
    }
}

fn snapshot(dir: &std::path::Path, cfg: &RunConfig) -> Result<()> {
    crate::io::write_config_snapshot(dir, cfg)
}

/// Writes the dataset and returns it.
pub fn cmd_gen_data(cfg: &RunConfig, out: &Layout) -> Result<Dataset> {
    let ds = Dataset::generate(cfg)?;
    crate::io::write_dataset(&out.dataset(), &ds)?;
    snapshot(&out.data_dir(), cfg)?;
    log::info!("{} scenes, {} demonstrations -> {}", ds.scenes.len(), ds.demos.len(), out.dataset().display());
    Ok(ds)
}

/// Loads the dataset, checking it matches the configured seed.
pub fn load_dataset(cfg: &RunConfig, out: &Layout) -> Result<Dataset> {
    let ds = crate::io::read_dataset(&out.dataset())?;
    if ds.seed != cfg.seed {
        log::warn!("dataset seed {} differs from configured seed {}", ds.seed, cfg.seed);
    }
    Ok(ds)
}

#[derive(Debug, Clone, Serialize)]
pub struct CurveRow {
    pub epoch: usize,
    pub train_recon: f64,
    pub train_kl: f64,
    pub train_bce: f64,
    pub train_total: f64,
    pub val_recon: f64,
    pub val_kl: f64,
    pub val_bce: f64,
    pub val_total: f64,
}

/// Trains one model per requested type and writes checkpoints and loss curves.
pub fn cmd_train(cfg: &RunConfig, out: &Layout, types: &[UserType], ablation: Ablation, k: usize) -> Result<Vec<SpecModel>> {
    let ds = load_dataset(cfg, out)?;
    let mut models = Vec::new();
    for &s in types {
        let train = ds.examples(Split::Train, s, cfg)?;
        let outcome = train_model(&train, s, ablation, k, run_seed(cfg.seed, s, ablation, k, 0), cfg)?;
        let rows: Vec<CurveRow> = outcome
            .curve
            .iter()
            .map(|e| CurveRow {
                epoch: e.epoch,
                train_recon: e.train.recon,
                train_kl: e.train.kl,
                train_bce: e.train.bce,
                train_total: e.train.total,
                val_recon: e.val.recon,
                val_kl: e.val.kl,
                val_bce: e.val.bce,
                val_total: e.val.total,
            })
            .collect();
        crate::io::write_checkpoint(&out.model(s, ablation, k), &outcome.model)?;
        crate::io::write_csv(&out.training_curve(s, ablation, k), &rows)?;
        log::info!("{s}/{ablation}/k={k}: best epoch {} of {}", outcome.model.meta.best_epoch, outcome.curve.len());
        models.push(outcome.model);
    }
    snapshot(&out.models_dir(), cfg)?;
    Ok(models)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub user_type: UserType,
    pub ablation: Ablation,
    pub traj_per_scene: usize,
    pub rep: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub user_type: UserType,
    pub ablation: Ablation,
    pub traj_per_scene: usize,
    pub runs: usize,
    pub mean: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

/// Trains and evaluates `seeds` models per (type, ablation, k) cell. Runs are
/// independent and execute on the ambient rayon pool; results keep sweep order.
pub fn learning_curve(
    ds: &Dataset,
    cfg: &RunConfig,
    types: &[UserType],
    ablations: &[Ablation],
    ks: &[usize],
    seeds: usize,
) -> Result<(Vec<SweepRow>, Vec<SweepSummary>)> {
    use rayon::prelude::*;
    let mut jobs = Vec::new();
    let mut data = Vec::new();
    for &s in types {
        data.push((ds.examples(Split::Train, s, cfg)?, ds.examples(Split::Test, s, cfg)?));
        for &a in ablations {
            for &k in ks {
                for rep in 0..seeds {
                    jobs.push((data.len() - 1, s, a, k, rep));
                }
            }
        }
    }
    let rows = jobs
        .par_iter()
        .map(|&(d, s, a, k, rep)| {
            let (train, test) = &data[d];
            let m = train_model(train, s, a, k, run_seed(cfg.seed, s, a, k, rep), cfg)?;
            Ok(SweepRow { user_type: s, ablation: a, traj_per_scene: k, rep, accuracy: evaluate(&m.model, test)? })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut summary = Vec::new();
    for chunk in rows.chunks(seeds.max(1)) {
        let accs: Vec<f64> = chunk.iter().map(|r| r.accuracy).collect();
        let st = specmodel::summarize(&accs)?;
        summary.push(SweepSummary {
            user_type: chunk[0].user_type,
            ablation: chunk[0].ablation,
            traj_per_scene: chunk[0].traj_per_scene,
            runs: st.n,
            mean: st.mean,
            q1: st.q1,
            median: st.median,
            q3: st.q3,
        });
    }
    Ok((rows, summary))
}

pub fn cmd_eval(
    cfg: &RunConfig,
    out: &Layout,
    types: &[UserType],
    ablations: &[Ablation],
    ks: &[usize],
) -> Result<Vec<SweepSummary>> {
    let ds = load_dataset(cfg, out)?;
    let (rows, summary) = learning_curve(&ds, cfg, types, ablations, ks, cfg.eval.seeds)?;
    crate::io::write_csv(&out.report("learning_curve_runs.csv"), &rows)?;
    crate::io::write_csv(&out.report("learning_curve.csv"), &summary)?;
    snapshot(&out.reports_dir(), cfg)?;
    Ok(summary)
}

/// The checkpoint for `s`, trained on the full demonstration budget.
pub fn load_or_train(cfg: &RunConfig, out: &Layout, ds: &Dataset, s: UserType) -> Result<SpecModel> {
    let k = cfg.dataset.traj_per_scene;
    let path = out.model(s, Ablation::Full, k);
    if path.exists() {
        return crate::io::read_checkpoint(&path);
    }
    log::info!("no checkpoint at {}; training {s}", path.display());
    let train = ds.examples(Split::Train, s, cfg)?;
    let m = train_model(&train, s, Ablation::Full, k, run_seed(cfg.seed, s, Ablation::Full, k, 0), cfg)?.model;
    crate::io::write_checkpoint(&path, &m)?;
    Ok(m)
}

/// Test scenes of one type, or of every type pooled.
pub fn test_scenes(ds: &Dataset, s: Option<UserType>) -> Vec<Scene> {
    ds.scenes_in(Split::Test).filter(|r| s.map_or(true, |s| r.user_type == s)).map(|r| r.scene.clone()).collect()
}

pub fn cmd_refine(cfg: &RunConfig, out: &Layout, types: &[UserType]) -> Result<Vec<crate::refine::RefineSummary>> {
    let ds = load_dataset(cfg, out)?;
    let mut summaries = Vec::new();
    let mut traces = Vec::new();
    for &s in types {
        let model = load_or_train(cfg, out, &ds, s)?;
        let (summary, runs) = crate::refine::refine_success_rate(
            &model,
            &test_scenes(&ds, Some(s)),
            &cfg.refine,
            &cfg.scene,
            &cfg.render,
            &cfg.oracle,
            mix_seed(cfg.seed, &[0x2EF1]),
        )?;
        for (i, r) in runs.iter().enumerate() {
            traces.extend(crate::refine::trace_rows(i, &r.trace).into_iter().map(|t| (s, r.scene_index, t)));
        }
        summaries.push(summary);
    }
    #[derive(Serialize)]
    struct Row {
        user_type: UserType,
        scene: usize,
        run: usize,
        step: usize,
        x: f64,
        y: f64,
        v_hat: f64,
    }
    let rows: Vec<Row> = traces
        .into_iter()
        .map(|(user_type, scene, t)| Row { user_type, scene, run: t.run, step: t.step, x: t.x, y: t.y, v_hat: t.v_hat })
        .collect();
    crate::io::write_csv(&out.report("refine.csv"), &summaries)?;
    crate::io::write_csv(&out.report("refine_traces.csv"), &rows)?;
    snapshot(&out.reports_dir(), cfg)?;
    Ok(summaries)
}

pub fn cmd_causal(cfg: &RunConfig, out: &Layout, types: &[UserType]) -> Result<crate::causal::CausalReport> {
    let ds = load_dataset(cfg, out)?;
    let models = types.iter().map(|&s| load_or_train(cfg, out, &ds, s)).collect::<Result<Vec<_>>>()?;
    let refs: Vec<&SpecModel> = models.iter().collect();
    let report = crate::causal::build_causal_table(
        &refs,
        &test_scenes(&ds, None),
        true,
        &ObjectKind::ALL,
        &cfg.causal,
        &cfg.scene,
        &cfg.render,
        mix_seed(cfg.seed, &[0xCA5A]),
    )?;
    crate::io::write_csv(&out.report("causal.csv"), &report.rows)?;
    crate::io::atomic_write(&out.report("causal.txt"), report.to_text().as_bytes())?;
    snapshot(&out.reports_dir(), cfg)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdRow {
    pub source: String,
    pub objective: String,
    pub feasible: bool,
    pub t_min: Option<i64>,
    pub kind: String,
    pub t_kind: Option<i64>,
}

fn threshold_rows(source: &str, kinds: &[ObjectKind], env: &crate::specfit::Envelope) -> Vec<ThresholdRow> {
    let mut rows = Vec::new();
    for (objective, p) in [("min", &env.min_params), ("max", &env.max_params)] {
        for &k in kinds {
            rows.push(ThresholdRow {
                source: source.into(),
                objective: objective.into(),
                feasible: p.is_some(),
                t_min: p.as_ref().map(|p| p.t_min),
                kind: k.name().into(),
                t_kind: p.as_ref().map(|p| p.t_kind(k)),
            });
        }
    }
    rows
}

/// Dataset demonstrations of one type as threshold-fitting input.
pub fn labeled_demos(ds: &Dataset, split: Split, s: UserType) -> Vec<crate::specfit::LabeledDemo> {
    ds.scenes_for(split, s)
        .flat_map(|r| {
            ds.demos_for(r.id, s).map(|d| crate::specfit::LabeledDemo {
                scene: r.scene.clone(),
                trajectory: d.trajectory.clone(),
                valid: d.valid,
            })
        })
        .collect()
}

/// Synthetic demonstration pools for the envelope sweep, one per seed.
pub fn synthetic_pools(cfg: &RunConfig, kinds: &[ObjectKind]) -> Result<Vec<Vec<crate::specfit::LabeledDemo>>> {
    let n = cfg.specfit.sweep.iter().copied().max().unwrap_or(0).max(cfg.specfit.synthetic_demos / 2);
    let spec = crate::specfit::SyntheticSpec {
        kinds: kinds.to_vec(),
        clearance: cfg.specfit.synthetic_clearance,
        margin: 1.0,
        n_valid: n,
        n_invalid: n,
        max_draws: 200_000,
    };
    (0..cfg.specfit.sweep_seeds)
        .map(|i| crate::specfit::synthetic_demos(mix_seed(cfg.seed, &[0x5F, i as u64]), &spec, &cfg.scene))
        .collect()
}

pub struct FitOutput {
    pub thresholds: Vec<ThresholdRow>,
    pub curve: Vec<crate::specfit::CurvePoint>,
}

/// Fits envelopes to imported demonstrations (when `demos` is given) or to
/// the training demonstrations of each type, plus the synthetic sweep.
pub fn cmd_fit_thresholds(
    cfg: &RunConfig,
    out: &Layout,
    types: &[UserType],
    demos: Option<&std::path::Path>,
) -> Result<FitOutput> {
    let kinds = ObjectKind::ALL;
    let mut thresholds = Vec::new();
    let mut first: Option<(crate::specfit::ThresholdParams, Scene)> = None;
    let mut sources: Vec<(String, Vec<crate::specfit::LabeledDemo>)> = Vec::new();
    match demos {
        Some(path) => sources.push((path.display().to_string(), crate::io::read_demo_file(path)?)),
        None => {
            let ds = load_dataset(cfg, out)?;
            for &s in types {
                sources.push((s.to_string(), labeled_demos(&ds, Split::Train, s)));
            }
        }
    }
    for (name, set) in &sources {
        let env = crate::specfit::fit_both(set, &kinds, &cfg.specfit.penalty, cfg.specfit.upper_bound)?;
        if !env.feasible() {
            log::warn!("{name}: no thresholds satisfy every demonstration");
        }
        if first.is_none() {
            if let (Some(p), Some(d)) = (&env.min_params, set.first()) {
                first = Some((p.clone(), d.scene.clone()));
            }
        }
        thresholds.extend(threshold_rows(name, &kinds, &env));
    }
    let synth_kinds = [ObjectKind::Bowl, ObjectKind::Glass];
    let pools = synthetic_pools(cfg, &synth_kinds)?;
    let upper = cfg.specfit.upper_bound.unwrap_or_else(|| crate::specfit::default_upper_bound(&pools[0]));
    let curve = crate::specfit::envelope_curve(&pools, &cfg.specfit.sweep, &synth_kinds, &cfg.specfit.penalty, upper)?;
    #[derive(Serialize)]
    struct CurveCsv {
        n_pos: usize,
        n_neg: usize,
        runs: usize,
        feasible_runs: usize,
        min_objective: f64,
        max_objective: f64,
    }
    let curve_rows: Vec<CurveCsv> = curve
        .iter()
        .map(|c| CurveCsv {
            n_pos: c.n_pos,
            n_neg: c.n_neg,
            runs: c.runs,
            feasible_runs: c.feasible_runs,
            min_objective: c.min_objective,
            max_objective: c.max_objective,
        })
        .collect();
    crate::io::write_csv(&out.report("thresholds.csv"), &thresholds)?;
    crate::io::write_csv(&out.report("envelope_curve.csv"), &curve_rows)?;
    if let Some((p, scene)) = first {
        let map = crate::specfit::cost_map(&p, &scene, cfg.specfit.cost_map_resolution, cfg.specfit.penalty.profile)?;
        crate::io::atomic_write(&out.report("cost_map.csv"), crate::io::grid_to_csv(&map.values, map.resolution).as_bytes())?;
    }
    snapshot(&out.reports_dir(), cfg)?;
    Ok(FitOutput { thresholds, curve })
}

/// Concatenates the CSV reports present under the output root into one
/// plain-text summary.
pub fn cmd_report(out: &Layout) -> Result<String> {
    let names = [
        "learning_curve.csv",
        "refine.csv",
        "causal.txt",
        "thresholds.csv",
        "envelope_curve.csv",
    ];
    let mut text = String::new();
    for name in names {
        let path = out.report(name);
        if path.exists() {
            text.push_str(&format!("== {name}\n{}\n", std::fs::read_to_string(&path)?.trim_end()));
        }
    }
    if text.is_empty() {
        return Err(Error::MissingArtifact(out.reports_dir()));
    }
    crate::io::atomic_write(&out.report("report.txt"), text.as_bytes())?;
    Ok(text)
}
