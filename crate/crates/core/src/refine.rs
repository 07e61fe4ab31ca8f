//! Gradient-ascent refinement of a trajectory code against a learned validity model.

use serde::Serialize;

use crate::config::RefineConfig;
use crate::error::{Error, Result};
use crate::geometry::{sample_bezier, BezierParam, Point2, Scene};
use crate::scenegen::{oracle_validity, render, rng_for, OracleConfig, RenderConfig, SceneGenConfig, UserType};
use crate::specmodel::{SpecModel, SCENE_DIM};

/// Something that scores a trajectory code and returns its gradient.
pub trait ValiditySurface {
    /// `(v̂, ∂objective/∂z)`; the objective is `v̂` or `ln v̂`.
    fn value_and_grad(&self, z: &BezierParam) -> Result<(f64, [f64; 2])>;
}

/// A trained model with the scene code frozen at the posterior mean.
pub struct ModelSurface<'a> {
    pub model: &'a SpecModel,
    pub z_scene: [f64; SCENE_DIM],
    pub log_objective: bool,
}

impl<'a> ModelSurface<'a> {
    pub fn new(model: &'a SpecModel, image: &crate::scenegen::SceneImage, log_objective: bool) -> Result<Self> {
        Ok(Self { model, z_scene: model.encode(image)?.mu, log_objective })
    }
}

impl ValiditySurface for ModelSurface<'_> {
    fn value_and_grad(&self, z: &BezierParam) -> Result<(f64, [f64; 2])> {
        self.model.classify_with_grad(&self.z_scene, z, self.log_objective)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineTrace {
    /// `z_0 .. z_T`; `T` equals the requested step count unless truncated.
    pub points: Vec<BezierParam>,
    /// `v̂` at every entry of `points`.
    pub values: Vec<f64>,
    /// Set when a non-finite value or gradient stopped the ascent early.
    pub truncated: bool,
}

impl RefineTrace {
    pub fn initial(&self) -> BezierParam {
        self.points[0]
    }

    pub fn last(&self) -> BezierParam {
        *self.points.last().expect("trace holds z0")
    }
}

fn clamp(z: BezierParam, (lo, hi): (Point2, Point2)) -> BezierParam {
    BezierParam::new(z.control.x.clamp(lo.x, hi.x), z.control.y.clamp(lo.y, hi.y))
}

/// Plain gradient ascent `z ← clamp(z + lr ∇)` for `steps` steps.
pub fn refine_trajectory(
    surface: &impl ValiditySurface,
    z0: BezierParam,
    steps: usize,
    lr: f64,
    bounds: (Point2, Point2),
) -> Result<RefineTrace> {
    if steps == 0 {
        return Err(Error::InvalidInput("refinement needs at least one step".into()));
    }
    if !(lr.is_finite() && lr > 0.0) {
        return Err(Error::InvalidInput(format!("learning rate {lr} must be finite and positive")));
    }
    let mut z = clamp(z0, bounds);
    let mut trace = RefineTrace { points: vec![z], values: Vec::with_capacity(steps + 1), truncated: false };
    for step in 0..=steps {
        let (v, g) = surface.value_and_grad(&z)?;
        if !v.is_finite() || !g.iter().all(|x| x.is_finite()) {
            log::warn!("refinement stopped at step {step}: non-finite value or gradient");
            trace.points.pop();
            trace.truncated = true;
            break;
        }
        trace.values.push(v);
        if step == steps {
            break;
        }
        z = clamp(BezierParam::new(z.control.x + lr * g[0], z.control.y + lr * g[1]), bounds);
        trace.points.push(z);
    }
    if trace.points.is_empty() {
        return Err(Error::NonFinite("refinement produced no finite step".into()));
    }
    Ok(trace)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineRun {
    pub scene_index: usize,
    pub trace: RefineTrace,
    pub initial_valid: bool,
    pub final_valid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefineSummary {
    pub user_type: UserType,
    pub attempts: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub skipped_scenes: usize,
    /// Fraction of runs whose final `v̂` is at least the initial one.
    pub ascent_rate: f64,
}

/// Starting codes for one scene. For a type with something to avoid they are
/// oracle-invalid random draws; for a type that avoids nothing every code is
/// valid and random draws are used as they are.
pub fn initial_codes(
    scene: &Scene,
    s: UserType,
    n: usize,
    max_draws: usize,
    seed: u64,
    scene_cfg: &SceneGenConfig,
    oracle: &OracleConfig,
) -> Result<Vec<BezierParam>> {
    let mut rng = rng_for(seed, &[0x12EF]);
    let want_invalid = !oracle.avoid_set(s).is_empty();
    let mut out = Vec::new();
    for _ in 0..max_draws {
        if out.len() == n {
            break;
        }
        let z = scene_cfg.sample_control(&mut rng);
        let tr = sample_bezier(&z, scene.endpoints(), scene_cfg.traj_points)?;
        if !want_invalid || !oracle_validity(&tr, scene, s, oracle) {
            out.push(z);
        }
    }
    Ok(out)
}

/// Refines `cfg.inits_per_scene` initial codes per scene and checks the
/// final trajectories with the oracle.
#[allow(clippy::too_many_arguments)]
pub fn refine_success_rate(
    model: &SpecModel,
    scenes: &[Scene],
    cfg: &RefineConfig,
    scene_cfg: &SceneGenConfig,
    render_cfg: &RenderConfig,
    oracle: &OracleConfig,
    seed: u64,
) -> Result<(RefineSummary, Vec<RefineRun>)> {
    if scenes.is_empty() {
        return Err(Error::Empty("refinement scenes"));
    }
    let s = model.user_type;
    let bounds = scene_cfg.control_box();
    let mut runs = Vec::new();
    let mut skipped = 0;
    for (i, scene) in scenes.iter().enumerate() {
        let inits = initial_codes(
            scene,
            s,
            cfg.inits_per_scene,
            cfg.init_attempts,
            crate::scenegen::mix_seed(seed, &[s.index() as u64, i as u64]),
            scene_cfg,
            oracle,
        )?;
        if inits.is_empty() {
            log::warn!("refine: scene {i} has no oracle-invalid initialization for {s}; skipped");
            skipped += 1;
            continue;
        }
        let surface = ModelSurface::new(model, &render(scene, render_cfg), cfg.log_objective)?;
        for z0 in inits {
            let trace = refine_trajectory(&surface, z0, cfg.steps, cfg.learning_rate, bounds)?;
            let check = |z: BezierParam| -> Result<bool> {
                Ok(oracle_validity(&sample_bezier(&z, scene.endpoints(), scene_cfg.traj_points)?, scene, s, oracle))
            };
            runs.push(RefineRun {
                scene_index: i,
                initial_valid: check(trace.initial())?,
                final_valid: check(trace.last())?,
                trace,
            });
        }
    }
    let attempts = runs.len();
    let successes = runs.iter().filter(|r| r.final_valid).count();
    let ascents = runs.iter().filter(|r| r.trace.values.last() >= r.trace.values.first()).count();
    let frac = |k: usize| if attempts == 0 { 0.0 } else { k as f64 / attempts as f64 };
    Ok((
        RefineSummary {
            user_type: s,
            attempts,
            successes,
            success_rate: frac(successes),
            skipped_scenes: skipped,
            ascent_rate: frac(ascents),
        },
        runs,
    ))
}

/// CSV row of a refinement trace.
#[derive(Debug, Clone, Serialize)]
pub struct TraceRow {
    pub run: usize,
    pub step: usize,
    pub x: f64,
    pub y: f64,
    pub v_hat: f64,
}

pub fn trace_rows(run: usize, trace: &RefineTrace) -> Vec<TraceRow> {
    trace
        .points
        .iter()
        .zip(&trace.values)
        .enumerate()
        .map(|(step, (z, &v_hat))| TraceRow { run, step, x: z.control.x, y: z.control.y, v_hat })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Logistic {
        w: [f64; 2],
        b: f64,
    }

    impl ValiditySurface for Logistic {
        fn value_and_grad(&self, z: &BezierParam) -> Result<(f64, [f64; 2])> {
            let v = 1.0 / (1.0 + (-(self.w[0] * z.control.x + self.w[1] * z.control.y + self.b)).exp());
            let k = v * (1.0 - v);
            Ok((v, [k * self.w[0], k * self.w[1]]))
        }
    }

    struct Broken;

    impl ValiditySurface for Broken {
        fn value_and_grad(&self, z: &BezierParam) -> Result<(f64, [f64; 2])> {
            Ok((0.5, [if z.control.x > 60.0 { f64::NAN } else { 10.0 }, 0.0]))
        }
    }

    const BOX: (Point2, Point2) = (Point2::new(-25.0, -25.0), Point2::new(125.0, 125.0));

    #[test]
    fn zero_steps_rejected() {
        let f = Logistic { w: [0.1, 0.0], b: 0.0 };
        assert!(refine_trajectory(&f, BezierParam::new(0.0, 0.0), 0, 1.0, BOX).is_err());
    }

    #[test]
    fn trace_has_steps_plus_one_entries_and_ascends() {
        let f = Logistic { w: [0.05, -0.02], b: -1.0 };
        let t = refine_trajectory(&f, BezierParam::new(10.0, 40.0), 30, 20.0, BOX).unwrap();
        assert_eq!(t.points.len(), 31);
        assert_eq!(t.values.len(), 31);
        assert!(t.values.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn clamps_to_box() {
        let f = Logistic { w: [0.01, 0.01], b: 0.0 };
        let t = refine_trajectory(&f, BezierParam::new(120.0, 120.0), 5, 1e6, BOX).unwrap();
        assert_eq!(t.last(), BezierParam::new(125.0, 125.0));
    }

    #[test]
    fn non_finite_gradient_truncates() {
        let t = refine_trajectory(&Broken, BezierParam::new(0.0, 0.0), 30, 1.0, BOX).unwrap();
        assert!(t.truncated);
        assert_eq!(t.points.len(), t.values.len());
        assert!(t.last().control.x <= 61.0);
    }
}
