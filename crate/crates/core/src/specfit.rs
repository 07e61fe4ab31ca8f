//! Threshold-envelope extraction from labeled demonstrations.
//!
//! A trajectory point `p` is charged by the objects around it:
//!
//! * `+inf` when some object center lies within `t_min` of `p`,
//! * otherwise, when `p` lies inside the influence band `t_min + t_kind` of
//!   one or more objects, a profile value of the qualifying objects
//!   (the largest, see [`Profile`]),
//! * `0` elsewhere.
//!
//! A demonstration's penalty is the sum over its resampled points. Valid
//! demonstrations must stay strictly below the budget `f_max`, invalid ones
//! must reach it. Thresholds are integers in `[0, U]`, searched exactly by
//! branch-and-bound with interval propagation; the penalty is monotone
//! non-decreasing in every threshold, which makes both the propagation and
//! the pruning sound.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{sample_bezier, ObjectKind, Point2, Scene, Trajectory};
use crate::scenegen::{rng_for, SceneGenConfig};

/// Value charged to a point inside an influence band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// Distance from the point to the object center.
    #[default]
    Literal,
    /// Depth of the point inside the band, `t_min + t_kind - d`.
    Decreasing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PenaltyConfig {
    pub f_max: f64,
    pub resample_points: usize,
    pub profile: Profile,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        Self { f_max: 200.0, resample_points: 64, profile: Profile::Literal }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThresholdParams {
    pub t_min: i64,
    /// Missing kinds count as zero.
    pub t_object: BTreeMap<ObjectKind, i64>,
}

impl ThresholdParams {
    pub fn zeros(kinds: &[ObjectKind]) -> Self {
        Self::uniform(kinds, 0, 0)
    }

    pub fn uniform(kinds: &[ObjectKind], t_min: i64, t_object: i64) -> Self {
        Self { t_min, t_object: kinds.iter().map(|&k| (k, t_object)).collect() }
    }

    pub fn t_kind(&self, kind: ObjectKind) -> i64 {
        self.t_object.get(&kind).copied().unwrap_or(0)
    }

    /// Outer radius of the influence band for `kind`.
    pub fn band(&self, kind: ObjectKind) -> i64 {
        self.t_min + self.t_kind(kind)
    }

    /// `t_min + Σ_k t_k`.
    pub fn objective(&self) -> i64 {
        self.t_min + self.t_object.values().sum::<i64>()
    }

    pub fn to_vec(&self, kinds: &[ObjectKind]) -> Vec<i64> {
        std::iter::once(self.t_min).chain(kinds.iter().map(|&k| self.t_kind(k))).collect()
    }

    pub fn from_vec(kinds: &[ObjectKind], x: &[i64]) -> Self {
        assert_eq!(x.len(), kinds.len() + 1, "threshold vector length");
        Self { t_min: x[0], t_object: kinds.iter().zip(&x[1..]).map(|(&k, &v)| (k, v)).collect() }
    }
}

/// Per-point charge for one object at distance `d`, given the scalar thresholds.
fn profile_value(profile: Profile, d: f64, band: f64) -> f64 {
    match profile {
        Profile::Literal => d,
        Profile::Decreasing => band - d,
    }
}

/// Penalty of `tr` exactly as given (no resampling).
pub fn penalty(tr: &Trajectory, scene: &Scene, p: &ThresholdParams, profile: Profile) -> f64 {
    tr.points.iter().map(|q| point_cost(q, scene, p, profile)).sum()
}

/// The per-point charge `f(p)`.
pub fn point_cost(q: &Point2, scene: &Scene, p: &ThresholdParams, profile: Profile) -> f64 {
    let t_min = p.t_min as f64;
    let mut best: Option<f64> = None;
    for o in &scene.objects {
        let d = q.distance(&o.center);
        if d <= t_min {
            return f64::INFINITY;
        }
        let band = p.band(o.kind) as f64;
        if d <= band {
            let v = profile_value(profile, d, band);
            best = Some(best.map_or(v, |b: f64| b.max(v)));
        }
    }
    best.unwrap_or(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDemo {
    pub scene: Scene,
    pub trajectory: Trajectory,
    pub valid: bool,
}

/// Penalty of a demonstration after resampling to the configured point count.
pub fn demo_penalty(d: &LabeledDemo, p: &ThresholdParams, cfg: &PenaltyConfig) -> Result<f64> {
    let tr = d.trajectory.resample(cfg.resample_points)?;
    Ok(penalty(&tr, &d.scene, p, cfg.profile))
}

/// Whether `p` satisfies every demonstration's constraint.
pub fn feasible(p: &ThresholdParams, demos: &[LabeledDemo], cfg: &PenaltyConfig) -> Result<bool> {
    if demos.is_empty() {
        return Err(Error::Empty("demonstrations"));
    }
    for d in demos {
        let pen = demo_penalty(d, p, cfg)?;
        if (pen < cfg.f_max) != d.valid {
            return Ok(false);
        }
    }
    Ok(true)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Min,
    Max,
}

/// A demonstration reduced to what the solver needs: for each point the
/// distance to every object and the vector slot of its kind threshold.
#[derive(Debug, Clone)]
struct Compiled {
    valid: bool,
    points: Vec<Vec<(f64, Option<usize>)>>,
}

impl Compiled {
    fn new(d: &LabeledDemo, kinds: &[ObjectKind], cfg: &PenaltyConfig) -> Result<Self> {
        let tr = d.trajectory.resample(cfg.resample_points)?;
        let points = tr
            .points
            .iter()
            .map(|q| {
                d.scene
                    .objects
                    .iter()
                    .map(|o| (q.distance(&o.center), kinds.iter().position(|&k| k == o.kind).map(|i| i + 1)))
                    .collect()
            })
            .collect();
        Ok(Self { valid: d.valid, points })
    }

    /// `penalty(x) >= f_max`, with early exit.
    fn reaches(&self, x: &[i64], f_max: f64, profile: Profile) -> bool {
        let t_min = x[0] as f64;
        let mut sum = 0.0;
        for pt in &self.points {
            let mut best: Option<f64> = None;
            for &(d, slot) in pt {
                if d <= t_min {
                    return true;
                }
                let band = (x[0] + slot.map_or(0, |s| x[s])) as f64;
                if d <= band {
                    let v = profile_value(profile, d, band);
                    best = Some(best.map_or(v, |b: f64| b.max(v)));
                }
            }
            sum += best.unwrap_or(0.0);
            if sum >= f_max {
                return true;
            }
        }
        false
    }

    /// Constraint satisfied at `x`.
    fn satisfied(&self, x: &[i64], f_max: f64, profile: Profile) -> bool {
        self.reaches(x, f_max, profile) != self.valid
    }
}

/// A compiled threshold search problem.
pub struct Problem {
    kinds: Vec<ObjectKind>,
    valid: Vec<Compiled>,
    invalid: Vec<Compiled>,
    upper: i64,
    f_max: f64,
    profile: Profile,
}

/// Solver statistics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SearchStats {
    pub nodes: usize,
}

impl Problem {
    pub fn new(demos: &[LabeledDemo], kinds: &[ObjectKind], upper: i64, cfg: &PenaltyConfig) -> Result<Self> {
        if demos.is_empty() {
            return Err(Error::Empty("demonstrations"));
        }
        if upper < 0 {
            return Err(Error::InvalidInput(format!("search upper bound {upper} < 0")));
        }
        if !(cfg.f_max > 0.0) {
            return Err(Error::InvalidInput("f_max must be > 0".into()));
        }
        let mut valid = Vec::new();
        let mut invalid = Vec::new();
        for d in demos {
            let c = Compiled::new(d, kinds, cfg)?;
            if c.valid {
                valid.push(c);
            } else {
                invalid.push(c);
            }
        }
        Ok(Self { kinds: kinds.to_vec(), valid, invalid, upper, f_max: cfg.f_max, profile: cfg.profile })
    }

    pub fn dims(&self) -> usize {
        self.kinds.len() + 1
    }

    pub fn kinds(&self) -> &[ObjectKind] {
        &self.kinds
    }

    pub fn upper(&self) -> i64 {
        self.upper
    }

    pub fn is_feasible(&self, x: &[i64]) -> bool {
        self.valid.iter().all(|c| c.satisfied(x, self.f_max, self.profile))
            && self.invalid.iter().all(|c| c.satisfied(x, self.f_max, self.profile))
    }

    fn valid_ok(&self, x: &[i64]) -> bool {
        self.valid.iter().all(|c| !c.reaches(x, self.f_max, self.profile))
    }

    fn invalid_ok(&self, x: &[i64]) -> bool {
        self.invalid.iter().all(|c| c.reaches(x, self.f_max, self.profile))
    }

    /// Shrinks `[lo, hi]` to the sub-box that can still hold feasible points.
    /// Returns false when the box is empty.
    fn propagate(&self, lo: &mut [i64], hi: &mut [i64]) -> bool {
        loop {
            if !self.valid_ok(lo) || !self.invalid_ok(hi) {
                return false;
            }
            let mut changed = false;
            for i in 0..lo.len() {
                // Largest hi_i keeping the valid constraints at the low corner.
                if hi[i] > lo[i] {
                    let mut probe = lo.to_vec();
                    probe[i] = hi[i];
                    if !self.valid_ok(&probe) {
                        let (mut a, mut b) = (lo[i], hi[i]);
                        while b - a > 1 {
                            let m = a + (b - a) / 2;
                            probe[i] = m;
                            if self.valid_ok(&probe) {
                                a = m;
                            } else {
                                b = m;
                            }
                        }
                        hi[i] = a;
                        changed = true;
                    }
                }
                // Smallest lo_i keeping the invalid constraints at the high corner.
                if hi[i] > lo[i] {
                    let mut probe = hi.to_vec();
                    probe[i] = lo[i];
                    if !self.invalid_ok(&probe) {
                        let (mut a, mut b) = (lo[i], hi[i]);
                        while b - a > 1 {
                            let m = a + (b - a) / 2;
                            probe[i] = m;
                            if self.invalid_ok(&probe) {
                                b = m;
                            } else {
                                a = m;
                            }
                        }
                        lo[i] = b;
                        changed = true;
                    }
                }
            }
            if !changed {
                return true;
            }
        }
    }

    /// Exact optimum of `t_min + Σ t_k` over feasible integer points; ties go
    /// to the lexicographically smallest vector. `None` when infeasible.
    pub fn solve(&self, objective: Objective) -> (Option<Vec<i64>>, SearchStats) {
        let d = self.dims();
        let mut stats = SearchStats::default();
        let mut best: Option<(i64, Vec<i64>)> = None;
        let mut stack = vec![(vec![0i64; d], vec![self.upper; d])];
        let better = |val: i64, x: &[i64], best: &Option<(i64, Vec<i64>)>| match best {
            None => true,
            Some((bv, bx)) => match objective {
                Objective::Max => val > *bv || (val == *bv && x < bx.as_slice()),
                Objective::Min => val < *bv || (val == *bv && x < bx.as_slice()),
            },
        };
        while let Some((mut lo, mut hi)) = stack.pop() {
            stats.nodes += 1;
            if !self.propagate(&mut lo, &mut hi) {
                continue;
            }
            // Only the extreme corner of a box attains its bound.
            let corner = match objective {
                Objective::Max => hi.clone(),
                Objective::Min => lo.clone(),
            };
            let bound = corner.iter().sum::<i64>();
            if let Some((bv, bx)) = &best {
                let dominated = match objective {
                    Objective::Max => bound < *bv,
                    Objective::Min => bound > *bv,
                };
                if dominated || (bound == *bv && corner >= *bx) {
                    continue;
                }
            }
            if self.is_feasible(&corner) {
                if better(bound, &corner, &best) {
                    best = Some((bound, corner));
                }
                continue;
            }
            let (axis, width) = (0..d).map(|i| (i, hi[i] - lo[i])).max_by_key(|&(i, w)| (w, std::cmp::Reverse(i))).unwrap();
            if width == 0 {
                continue;
            }
            let mid = lo[axis] + width / 2;
            let mut lower_hi = hi.clone();
            lower_hi[axis] = mid;
            let mut upper_lo = lo.clone();
            upper_lo[axis] = mid + 1;
            let low = (lo.clone(), lower_hi);
            let high = (upper_lo, hi);
            // Explore the promising half first (the stack pops last-pushed).
            match objective {
                Objective::Max => {
                    stack.push(low);
                    stack.push(high);
                }
                Objective::Min => {
                    stack.push(high);
                    stack.push(low);
                }
            }
        }
        (best.map(|(_, x)| x), stats)
    }
}

/// Default search upper bound: the table diagonal rounded up.
pub fn default_upper_bound(demos: &[LabeledDemo]) -> i64 {
    demos.iter().map(|d| d.scene.diagonal().ceil() as i64).max().unwrap_or(0)
}

/// Optimal thresholds under `objective`, or `None` when no integer point in
/// `[0, upper]^(K+1)` satisfies every demonstration.
pub fn fit_envelope(
    demos: &[LabeledDemo],
    kinds: &[ObjectKind],
    cfg: &PenaltyConfig,
    upper: Option<i64>,
    objective: Objective,
) -> Result<Option<ThresholdParams>> {
    let upper = upper.unwrap_or_else(|| default_upper_bound(demos));
    let problem = Problem::new(demos, kinds, upper, cfg)?;
    let (x, _) = problem.solve(objective);
    Ok(x.map(|x| ThresholdParams::from_vec(kinds, &x)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub min_params: Option<ThresholdParams>,
    pub max_params: Option<ThresholdParams>,
}

impl Envelope {
    pub fn feasible(&self) -> bool {
        self.min_params.is_some() && self.max_params.is_some()
    }
}

pub fn fit_both(
    demos: &[LabeledDemo],
    kinds: &[ObjectKind],
    cfg: &PenaltyConfig,
    upper: Option<i64>,
) -> Result<Envelope> {
    let upper = upper.unwrap_or_else(|| default_upper_bound(demos));
    let problem = Problem::new(demos, kinds, upper, cfg)?;
    let min_params = problem.solve(Objective::Min).0.map(|x| ThresholdParams::from_vec(kinds, &x));
    let max_params = problem.solve(Objective::Max).0.map(|x| ThresholdParams::from_vec(kinds, &x));
    Ok(Envelope { min_params, max_params })
}

/// One budget of the envelope sweep, averaged over seeds that stayed feasible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub n_pos: usize,
    pub n_neg: usize,
    pub runs: usize,
    pub feasible_runs: usize,
    pub min_objective: f64,
    pub max_objective: f64,
    /// Mean band radius `t_min + t_k` per kind, min objective.
    pub min_band: BTreeMap<ObjectKind, f64>,
    pub max_band: BTreeMap<ObjectKind, f64>,
}

/// Fits both envelopes on nested prefixes of each pool: budget `n` uses the
/// first `n` valid and first `n` invalid demonstrations of the pool.
pub fn envelope_curve(
    pools: &[Vec<LabeledDemo>],
    sweep: &[usize],
    kinds: &[ObjectKind],
    cfg: &PenaltyConfig,
    upper: i64,
) -> Result<Vec<CurvePoint>> {
    if pools.is_empty() {
        return Err(Error::Empty("demonstration pools"));
    }
    let mut out = Vec::new();
    for &n in sweep {
        let mut runs = Vec::new();
        for pool in pools {
            let pos: Vec<_> = pool.iter().filter(|d| d.valid).take(n).cloned().collect();
            let neg: Vec<_> = pool.iter().filter(|d| !d.valid).take(n).cloned().collect();
            if pos.len() < n || neg.len() < n {
                log::warn!("envelope sweep truncated at {n}: pool has {} valid / {} invalid", pos.len(), neg.len());
                return Ok(out);
            }
            runs.push([pos, neg].concat());
        }
        let mut point = CurvePoint {
            n_pos: n,
            n_neg: n,
            runs: runs.len(),
            feasible_runs: 0,
            min_objective: 0.0,
            max_objective: 0.0,
            min_band: BTreeMap::new(),
            max_band: BTreeMap::new(),
        };
        for demos in &runs {
            let env = if demos.is_empty() {
                Envelope {
                    min_params: Some(ThresholdParams::zeros(kinds)),
                    max_params: Some(ThresholdParams::uniform(kinds, upper, upper)),
                }
            } else {
                fit_both(demos, kinds, cfg, Some(upper))?
            };
            if let (Some(lo), Some(hi)) = (env.min_params, env.max_params) {
                point.feasible_runs += 1;
                point.min_objective += lo.objective() as f64;
                point.max_objective += hi.objective() as f64;
                for &k in kinds {
                    *point.min_band.entry(k).or_default() += lo.band(k) as f64;
                    *point.max_band.entry(k).or_default() += hi.band(k) as f64;
                }
            }
        }
        let m = point.feasible_runs.max(1) as f64;
        point.min_objective /= m;
        point.max_objective /= m;
        point.min_band.values_mut().chain(point.max_band.values_mut()).for_each(|v| *v /= m);
        out.push(point);
    }
    Ok(out)
}

/// Per-cell penalty `f` at cell centers; row `r` covers `y` in
/// `[r, r+1) * height / resolution`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMap {
    pub resolution: usize,
    pub width: f64,
    pub height: f64,
    pub values: Vec<f64>,
}

impl CostMap {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.resolution + col]
    }

    pub fn cell_center(&self, row: usize, col: usize) -> Point2 {
        let r = self.resolution as f64;
        Point2::new((col as f64 + 0.5) * self.width / r, (row as f64 + 0.5) * self.height / r)
    }
}

pub fn cost_map(p: &ThresholdParams, scene: &Scene, resolution: usize, profile: Profile) -> Result<CostMap> {
    if resolution == 0 {
        return Err(Error::InvalidInput("cost map resolution must be >= 1".into()));
    }
    let mut map = CostMap { resolution, width: scene.width, height: scene.height, values: Vec::with_capacity(resolution * resolution) };
    for row in 0..resolution {
        for col in 0..resolution {
            let c = map.cell_center(row, col);
            map.values.push(point_cost(&c, scene, p, profile));
        }
    }
    Ok(map)
}

/// Clearance of a trajectory: smallest distance from any point to any object center.
pub fn clearance(tr: &Trajectory, scene: &Scene) -> f64 {
    tr.points
        .iter()
        .flat_map(|q| scene.objects.iter().map(move |o| q.distance(&o.center)))
        .fold(f64::INFINITY, f64::min)
}

/// Settings for [`synthetic_demos`].
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub kinds: Vec<ObjectKind>,
    /// True clearance: valid iff every point stays strictly farther than this
    /// from every object center.
    pub clearance: f64,
    /// Demonstrations with clearance within this distance of the truth are redrawn.
    pub margin: f64,
    pub n_valid: usize,
    pub n_invalid: usize,
    pub max_draws: usize,
}

/// Random single-curve scenes holding one object of each listed kind,
/// labeled by a clearance oracle. Valid and invalid demos interleave in
/// draw order.
pub fn synthetic_demos(seed: u64, spec: &SyntheticSpec, scene_cfg: &SceneGenConfig) -> Result<Vec<LabeledDemo>> {
    let mut rng = rng_for(seed, &[0x5F17]);
    let mut out = Vec::new();
    let (mut nv, mut ni) = (0, 0);
    for _ in 0..spec.max_draws {
        if nv >= spec.n_valid && ni >= spec.n_invalid {
            return Ok(out);
        }
        let mut scene = scene_cfg.empty_scene();
        let mut ok = true;
        for &k in &spec.kinds {
            let placed = (0..scene_cfg.max_retries).find_map(|_| {
                let o = scene_cfg.sample_object(&mut rng, k, false);
                scene_cfg.placement_ok(&scene, &o).then_some(o)
            });
            match placed {
                Some(o) => scene.objects.push(o),
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            continue;
        }
        let c = scene_cfg.sample_control(&mut rng);
        let trajectory = sample_bezier(&c, scene.endpoints(), scene_cfg.traj_points)?;
        let cl = clearance(&trajectory, &scene);
        if (cl - spec.clearance).abs() <= spec.margin {
            continue;
        }
        let valid = cl > spec.clearance;
        if valid && nv < spec.n_valid {
            nv += 1;
        } else if !valid && ni < spec.n_invalid {
            ni += 1;
        } else {
            continue;
        }
        out.push(LabeledDemo { scene, trajectory, valid });
    }
    if nv >= spec.n_valid && ni >= spec.n_invalid {
        Ok(out)
    } else {
        Err(Error::InvalidInput(format!(
            "synthetic generator produced {nv}/{} valid and {ni}/{} invalid demos in {} draws",
            spec.n_valid, spec.n_invalid, spec.max_draws
        )))
    }
}

/// Constraint-boundary resolution of a demo set on the resampled points:
/// smallest valid clearance minus largest invalid clearance.
pub fn boundary_gap(demos: &[LabeledDemo], cfg: &PenaltyConfig) -> Result<f64> {
    let mut vmin = f64::INFINITY;
    let mut imax = f64::NEG_INFINITY;
    for d in demos {
        let cl = clearance(&d.trajectory.resample(cfg.resample_points)?, &d.scene);
        if d.valid {
            vmin = vmin.min(cl);
        } else {
            imax = imax.max(cl);
        }
    }
    Ok(vmin - imax)
}

/// Random trajectory through the control box, for tests and examples.
pub fn random_curve(rng: &mut impl Rng, scene_cfg: &SceneGenConfig) -> Result<Trajectory> {
    let c = scene_cfg.sample_control(rng);
    sample_bezier(&c, (scene_cfg.p_init, scene_cfg.p_f), scene_cfg.traj_points)
}
