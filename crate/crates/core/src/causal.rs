//! Interventions on learned validity models.
//!
//! Validity is estimated by paired Monte Carlo: every estimate evaluates the
//! same scenes against the same fixed grid of trajectory codes, so a
//! baseline and an intervention differ only in the intervened node.
//! Uncertainty comes from a percentile bootstrap that resamples scenes.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::CausalConfig;
use crate::error::{Error, Result};
use crate::geometry::{BezierParam, ObjectKind, Scene};
use crate::scenegen::{composite_object, render, rng_for, RenderConfig, SceneGenConfig, SceneImage, UserType};
use crate::specmodel::{control_grid, SpecModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValidityEstimate {
    pub mean: f64,
    pub n: usize,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// The node an intervention sets.
#[derive(Debug, Clone, PartialEq)]
pub enum Intervention {
    /// `do(S := s)`: swap in the model of another user type.
    UserType(UserType),
    /// `do(Z_I := enc(I ⊕ o))`: composite an object of this kind into the scene.
    Symbol(ObjectKind),
}

/// Per-scene mean of `values` (rows are scenes), bootstrapped over scenes.
pub fn bootstrap_mean(per_scene: &[f64], reps: usize, confidence: f64, seed: u64) -> (f64, f64, f64) {
    let n = per_scene.len();
    let mean = per_scene.iter().sum::<f64>() / n as f64;
    let mut rng = rng_for(seed, &[0xB007]);
    let mut stats: Vec<f64> = (0..reps)
        .map(|_| (0..n).map(|_| per_scene[rng.gen_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    stats.sort_by(|a, b| a.total_cmp(b));
    let tail = (1.0 - confidence) / 2.0;
    let pick = |q: f64| stats[((q * reps as f64).floor() as usize).min(reps - 1)];
    (mean, pick(tail).min(mean), pick(1.0 - tail).max(mean))
}

/// `v̂` for every (scene, code) pair; row `i` belongs to image `i`.
pub fn validity_matrix(model: &SpecModel, images: &[SceneImage], codes: &[BezierParam]) -> Result<Vec<Vec<f64>>> {
    images
        .par_iter()
        .map(|img| {
            let post = model.encode(img)?;
            model.classify_batch(&post.mu, codes)
        })
        .collect()
}

fn row_means(m: &[Vec<f64>]) -> Vec<f64> {
    m.iter().map(|r| r.iter().sum::<f64>() / r.len() as f64).collect()
}

fn estimate_from(m: &[Vec<f64>], cfg: &CausalConfig, seed: u64) -> ValidityEstimate {
    let (mean, ci_lo, ci_hi) = bootstrap_mean(&row_means(m), cfg.bootstrap_reps, cfg.confidence, seed);
    ValidityEstimate { mean, n: m.iter().map(Vec::len).sum(), ci_lo, ci_hi }
}

fn check_inputs(images: &[SceneImage], codes: &[BezierParam], cfg: &CausalConfig) -> Result<()> {
    if images.is_empty() {
        return Err(Error::Empty("scenes"));
    }
    if codes.is_empty() {
        return Err(Error::Empty("trajectory codes"));
    }
    if images.len() * codes.len() < cfg.min_samples {
        return Err(Error::InvalidInput(format!(
            "{} samples is below the configured minimum of {}",
            images.len() * codes.len(),
            cfg.min_samples
        )));
    }
    Ok(())
}

/// Monte-Carlo mean of `v̂` over `images × codes`.
pub fn estimate_validity(
    model: &SpecModel,
    images: &[SceneImage],
    codes: &[BezierParam],
    cfg: &CausalConfig,
    seed: u64,
) -> Result<ValidityEstimate> {
    check_inputs(images, codes, cfg)?;
    Ok(estimate_from(&validity_matrix(model, images, codes)?, cfg, seed))
}

/// Outcome of one paired comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairedEffect {
    pub baseline: ValidityEstimate,
    pub intervened: ValidityEstimate,
    pub delta: f64,
    pub delta_lo: f64,
    pub delta_hi: f64,
    pub significant: bool,
}

impl PairedEffect {
    fn from_rows(base: &[f64], int: &[f64], cfg: &CausalConfig, seed: u64, n_base: usize, n_int: usize) -> Self {
        let diffs: Vec<f64> = base.iter().zip(int).map(|(b, i)| i - b).collect();
        let (delta, delta_lo, delta_hi) = bootstrap_mean(&diffs, cfg.bootstrap_reps, cfg.confidence, seed);
        let summary = |rows: &[f64], n: usize| {
            let (mean, ci_lo, ci_hi) = bootstrap_mean(rows, cfg.bootstrap_reps, cfg.confidence, seed);
            ValidityEstimate { mean, n, ci_lo, ci_hi }
        };
        let excludes_zero = delta_lo > 0.0 || delta_hi < 0.0;
        PairedEffect {
            baseline: summary(base, n_base),
            intervened: summary(int, n_int),
            delta,
            delta_lo,
            delta_hi,
            significant: excludes_zero && delta.abs() >= cfg.min_effect,
        }
    }
}

/// Per-type estimates and the paired effect of `do(S := b)` against `do(S := a)`
/// for every ordered pair `a < b` in the given model order.
pub fn intervene_user_type(
    models: &[&SpecModel],
    images: &[SceneImage],
    codes: &[BezierParam],
    cfg: &CausalConfig,
    seed: u64,
) -> Result<(Vec<ValidityEstimate>, Vec<(UserType, UserType, PairedEffect)>)> {
    check_inputs(images, codes, cfg)?;
    let mats = models.iter().map(|m| validity_matrix(m, images, codes)).collect::<Result<Vec<_>>>()?;
    let n = images.len() * codes.len();
    let estimates = mats.iter().map(|m| estimate_from(m, cfg, seed)).collect();
    let mut pairs = Vec::new();
    for a in 0..models.len() {
        for b in a + 1..models.len() {
            let eff = PairedEffect::from_rows(&row_means(&mats[a]), &row_means(&mats[b]), cfg, seed, n, n);
            pairs.push((models[a].user_type, models[b].user_type, eff));
        }
    }
    Ok((estimates, pairs))
}

/// Random placements of `kind` in a scene, avoiding existing objects and the
/// endpoint disks. Fewer than `n` are returned when free space runs out.
pub fn sample_placements(
    scene: &Scene,
    kind: ObjectKind,
    n: usize,
    variant: bool,
    scene_cfg: &SceneGenConfig,
    seed: u64,
) -> Vec<crate::geometry::SceneObject> {
    let mut rng = rng_for(seed, &[0x91AC, kind.index() as u64]);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let o = (0..scene_cfg.max_retries).find_map(|_| {
            let o = scene_cfg.sample_object(&mut rng, kind, variant);
            scene_cfg.placement_ok(scene, &o).then_some(o)
        });
        match o {
            Some(o) => out.push(o),
            None => break,
        }
    }
    out
}

/// Paired effect of compositing an object of `kind` into every scene at
/// `cfg.placements_per_scene` random free positions.
#[allow(clippy::too_many_arguments)]
pub fn intervene_symbol(
    model: &SpecModel,
    scenes: &[Scene],
    variant: bool,
    kind: ObjectKind,
    codes: &[BezierParam],
    cfg: &CausalConfig,
    scene_cfg: &SceneGenConfig,
    render_cfg: &RenderConfig,
    seed: u64,
) -> Result<PairedEffect> {
    let images: Vec<SceneImage> = scenes.iter().map(|s| render(s, render_cfg)).collect();
    check_inputs(&images, codes, cfg)?;
    let base = row_means(&validity_matrix(model, &images, codes)?);
    let per_scene: Vec<(f64, usize)> = scenes
        .par_iter()
        .zip(&images)
        .enumerate()
        .map(|(i, (scene, img))| {
            let placements = sample_placements(
                scene,
                kind,
                cfg.placements_per_scene,
                variant,
                scene_cfg,
                crate::scenegen::mix_seed(seed, &[i as u64]),
            );
            if placements.is_empty() {
                log::warn!("no free placement for {kind} in scene {i}; using the unmodified scene");
                return Ok((base[i], codes.len()));
            }
            let mut sum = 0.0;
            for o in &placements {
                let edited = composite_object(img, o, (scene.width, scene.height), render_cfg)?;
                let post = model.encode(&edited)?;
                sum += model.classify_batch(&post.mu, codes)?.iter().sum::<f64>();
            }
            Ok((sum / (placements.len() * codes.len()) as f64, placements.len() * codes.len()))
        })
        .collect::<Result<Vec<_>>>()?;
    let int: Vec<f64> = per_scene.iter().map(|p| p.0).collect();
    let n_int = per_scene.iter().map(|p| p.1).sum();
    Ok(PairedEffect::from_rows(&base, &int, cfg, seed, images.len() * codes.len(), n_int))
}

/// One cell of the causal table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CausalRow {
    pub user_type: UserType,
    /// `none` or an object kind.
    pub intervention: String,
    pub baseline: f64,
    pub intervened: f64,
    pub delta: f64,
    pub delta_lo: f64,
    pub delta_hi: f64,
    pub significant: bool,
    pub n_baseline: usize,
    pub n_intervened: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CausalReport {
    pub rows: Vec<CausalRow>,
}

/// Grid of trajectory codes shared by every estimate.
pub fn code_grid(scene_cfg: &SceneGenConfig, side: usize) -> Vec<BezierParam> {
    let (lo, hi) = scene_cfg.control_box();
    control_grid(lo, hi, side)
}

/// Types × {none, each kind}. `models` must share the scene distribution.
#[allow(clippy::too_many_arguments)]
pub fn build_causal_table(
    models: &[&SpecModel],
    scenes: &[Scene],
    variant: bool,
    kinds: &[ObjectKind],
    cfg: &CausalConfig,
    scene_cfg: &SceneGenConfig,
    render_cfg: &RenderConfig,
    seed: u64,
) -> Result<CausalReport> {
    let codes = code_grid(scene_cfg, cfg.grid);
    let images: Vec<SceneImage> = scenes.iter().map(|s| render(s, render_cfg)).collect();
    let mut rows = Vec::new();
    for m in models {
        let base = estimate_validity(m, &images, &codes, cfg, seed)?;
        rows.push(CausalRow {
            user_type: m.user_type,
            intervention: "none".into(),
            baseline: base.mean,
            intervened: base.mean,
            delta: 0.0,
            delta_lo: 0.0,
            delta_hi: 0.0,
            significant: false,
            n_baseline: base.n,
            n_intervened: base.n,
        });
        for &k in kinds {
            let e = intervene_symbol(m, scenes, variant, k, &codes, cfg, scene_cfg, render_cfg, seed)?;
            rows.push(CausalRow {
                user_type: m.user_type,
                intervention: k.name().into(),
                baseline: e.baseline.mean,
                intervened: e.intervened.mean,
                delta: e.delta,
                delta_lo: e.delta_lo,
                delta_hi: e.delta_hi,
                significant: e.significant,
                n_baseline: e.baseline.n,
                n_intervened: e.intervened.n,
            });
        }
    }
    Ok(CausalReport { rows })
}

impl CausalReport {
    pub fn cell(&self, s: UserType, intervention: &str) -> Option<&CausalRow> {
        self.rows.iter().find(|r| r.user_type == s && r.intervention == intervention)
    }

    /// Plain-text table; significant cells carry a `*`.
    pub fn to_text(&self) -> String {
        let mut heads: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !heads.contains(&r.intervention.as_str()) {
                heads.push(&r.intervention);
            }
        }
        let mut out = format!("{:<12}", "type");
        for h in &heads {
            out.push_str(&format!("{h:>10}"));
        }
        out.push('\n');
        let mut types: Vec<UserType> = self.rows.iter().map(|r| r.user_type).collect();
        types.dedup();
        for s in types {
            out.push_str(&format!("{:<12}", s.name()));
            for h in &heads {
                match self.cell(s, h) {
                    Some(c) => {
                        let mark = if c.significant { "*" } else { " " };
                        out.push_str(&format!("{:>9.3}{mark}", c.intervened));
                    }
                    None => out.push_str(&format!("{:>10}", "-")),
                }
            }
            out.push('\n');
        }
        out
    }

    /// `(type, symbol, Δ, significant)` for every symbol intervention.
    pub fn edges(&self) -> Vec<CausalEdge> {
        self.rows
            .iter()
            .filter(|r| r.intervention != "none")
            .map(|r| CausalEdge {
                user_type: r.user_type,
                symbol: r.intervention.clone(),
                delta: r.delta,
                significant: r.significant,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CausalEdge {
    pub user_type: UserType,
    pub symbol: String,
    pub delta: f64,
    pub significant: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bootstrap_of_constant_is_degenerate() {
        let (m, lo, hi) = bootstrap_mean(&[0.5; 20], 200, 0.95, 1);
        assert_eq!((m, lo, hi), (0.5, 0.5, 0.5));
    }

    #[test]
    fn bootstrap_interval_brackets_mean_and_shrinks() {
        let mut rng = rng_for(3, &[]);
        let small: Vec<f64> = (0..20).map(|_| rng.gen::<f64>()).collect();
        let large: Vec<f64> = (0..2000).map(|_| rng.gen::<f64>()).collect();
        let (m1, lo1, hi1) = bootstrap_mean(&small, 500, 0.95, 1);
        let (m2, lo2, hi2) = bootstrap_mean(&large, 500, 0.95, 1);
        assert!(lo1 <= m1 && m1 <= hi1 && lo2 <= m2 && m2 <= hi2);
        assert!(hi2 - lo2 < hi1 - lo1);
    }

    #[test]
    fn identical_rows_are_not_significant() {
        let cfg = CausalConfig::default();
        let rows = [0.2, 0.4, 0.9, 0.1];
        let e = PairedEffect::from_rows(&rows, &rows, &cfg, 0, 4, 4);
        assert_eq!(e.delta, 0.0);
        assert!(!e.significant);
    }
}
