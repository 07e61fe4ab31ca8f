//! Exhaustive-enumeration oracle for threshold fitting, written directly
//! from the penalty definition and independent of the solver's compiled form.

use std::time::{Duration, Instant};

use demospec::geometry::{ObjectKind, Point2, Scene, SceneObject};
use demospec::scenegen::SceneGenConfig;
use demospec::specfit::{demo_penalty, random_curve, LabeledDemo, Objective, PenaltyConfig, Problem, Profile, ThresholdParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Per demo, per resampled point: (distance, kind slot) for every object.
pub struct Oracle {
    demos: Vec<(bool, Vec<Vec<(f64, usize)>>)>,
    f_max: f64,
    profile: Profile,
}

impl Oracle {
    pub fn new(demos: &[LabeledDemo], kinds: &[ObjectKind], cfg: &PenaltyConfig) -> Self {
        let demos = demos
            .iter()
            .map(|d| {
                let tr = d.trajectory.resample(cfg.resample_points).unwrap();
                let pts = tr
                    .points
                    .iter()
                    .map(|q| {
                        d.scene
                            .objects
                            .iter()
                            .map(|o| {
                                let dx = q.x - o.center.x;
                                let dy = q.y - o.center.y;
                                (dx.hypot(dy), 1 + kinds.iter().position(|&k| k == o.kind).unwrap())
                            })
                            .collect()
                    })
                    .collect();
                (d.valid, pts)
            })
            .collect();
        Self { demos, f_max: cfg.f_max, profile: cfg.profile }
    }

    /// Penalty written out from its definition: infinite inside `t_min`,
    /// the largest qualifying band value otherwise.
    fn penalty(pts: &[Vec<(f64, usize)>], x: &[i64], profile: Profile) -> f64 {
        let mut total = 0.0;
        for objs in pts {
            if objs.iter().any(|&(d, _)| d <= x[0] as f64) {
                return f64::INFINITY;
            }
            let charged = objs
                .iter()
                .filter_map(|&(d, s)| {
                    let band = (x[0] + x[s]) as f64;
                    (d <= band).then(|| match profile {
                        Profile::Literal => d,
                        Profile::Decreasing => band - d,
                    })
                })
                .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))));
            total += charged.unwrap_or(0.0);
        }
        total
    }

    pub fn feasible(&self, x: &[i64]) -> bool {
        self.demos.iter().all(|(valid, pts)| (Self::penalty(pts, x, self.profile) < self.f_max) == *valid)
    }

    pub fn optimum(&self, dims: usize, upper: i64, objective: Objective) -> Option<(i64, Vec<i64>)> {
        let mut best: Option<(i64, Vec<i64>)> = None;
        let mut x = vec![0i64; dims];
        loop {
            if self.feasible(&x) {
                let s: i64 = x.iter().sum();
                let take = match &best {
                    None => true,
                    Some((bs, bx)) => match objective {
                        Objective::Min => s < *bs || (s == *bs && x < *bx),
                        Objective::Max => s > *bs || (s == *bs && x < *bx),
                    },
                };
                if take {
                    best = Some((s, x.clone()));
                }
            }
            let mut i = dims;
            loop {
                if i == 0 {
                    return best;
                }
                i -= 1;
                if x[i] < upper {
                    x[i] += 1;
                    break;
                }
                x[i] = 0;
            }
        }
    }
}

pub fn random_instance(rng: &mut ChaCha8Rng) -> (Vec<LabeledDemo>, Vec<ObjectKind>, i64, PenaltyConfig) {
    let scene_cfg = SceneGenConfig::default();
    let kinds: Vec<ObjectKind> = if rng.gen_bool(0.5) { vec![ObjectKind::Glass] } else { vec![ObjectKind::Bowl, ObjectKind::Glass] };
    let upper = rng.gen_range(15..=60);
    let cfg = PenaltyConfig {
        f_max: rng.gen_range(50.0..400.0),
        resample_points: 32,
        profile: if rng.gen_bool(0.75) { Profile::Literal } else { Profile::Decreasing },
    };
    // labels from a hidden threshold vector keep most instances feasible;
    // a quarter get coin-flip labels
    let truth: Vec<i64> = (0..=kinds.len()).map(|_| rng.gen_range(0..=upper / 2)).collect();
    let truth = ThresholdParams::from_vec(&kinds, &truth);
    let coin = rng.gen_bool(0.25);
    let n = rng.gen_range(1..=12);
    let demos = (0..n)
        .map(|_| {
            let mut scene = Scene::empty(100.0, 100.0, Point2::new(10.0, 10.0), Point2::new(90.0, 90.0));
            for _ in 0..rng.gen_range(1..=2) {
                let k = kinds[rng.gen_range(0..kinds.len())];
                scene.objects.push(SceneObject::new(k, Point2::new(rng.gen_range(20.0..80.0), rng.gen_range(20.0..80.0)), 8.0));
            }
            let trajectory = random_curve(rng, &scene_cfg).unwrap();
            let mut d = LabeledDemo { scene, trajectory, valid: true };
            d.valid = if coin { rng.gen_bool(0.5) } else { demo_penalty(&d, &truth, &cfg).unwrap() < cfg.f_max };
            d
        })
        .collect();
    (demos, kinds, upper, cfg)
}

pub struct Comparison {
    pub instances: usize,
    pub feasible: usize,
    pub infeasible: usize,
    pub mismatches: Vec<String>,
    pub solver_time: Duration,
}

/// Solves `instances` random problems both ways, for both objectives, and
/// records every disagreement in value, vector or feasibility.
pub fn compare_with_solver(instances: usize, seed: u64) -> Comparison {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = Comparison { instances, feasible: 0, infeasible: 0, mismatches: Vec::new(), solver_time: Duration::ZERO };
    for instance in 0..instances {
        let (demos, kinds, upper, cfg) = random_instance(&mut rng);
        let oracle = Oracle::new(&demos, &kinds, &cfg);
        let t0 = Instant::now();
        let problem = Problem::new(&demos, &kinds, upper, &cfg).unwrap();
        let solved: Vec<_> = [Objective::Min, Objective::Max].iter().map(|&o| problem.solve(o).0).collect();
        c.solver_time += t0.elapsed();
        for (objective, got) in [Objective::Min, Objective::Max].into_iter().zip(solved) {
            let want = oracle.optimum(kinds.len() + 1, upper, objective);
            match (&want, &got) {
                (None, None) => c.infeasible += 1,
                (Some((_, x)), Some(g)) if g == x => c.feasible += 1,
                _ => c.mismatches.push(format!("instance {instance} {objective:?}: oracle {want:?}, solver {got:?}")),
            }
        }
    }
    c
}
