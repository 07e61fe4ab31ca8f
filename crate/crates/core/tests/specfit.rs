//! Threshold fitting against an exhaustive-enumeration oracle, plus
//! monotonicity and envelope properties.

mod common;

use std::time::Duration;

use common::solver::{self, random_instance};

use demospec::geometry::{ObjectKind, Point2, Scene, SceneObject};
use demospec::specfit::{
    cost_map, feasible, fit_both, point_cost, Profile,
    ThresholdParams,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn branch_and_bound_matches_exhaustive_search() {
    let c = solver::compare_with_solver(50, 6);
    assert!(c.mismatches.is_empty(), "{:#?}", c.mismatches);
    assert!(c.feasible > 0 && c.infeasible > 0, "degenerate instance mix: {} feasible, {} infeasible", c.feasible, c.infeasible);
    assert!(c.solver_time <= Duration::from_secs(10), "solver took {:?}", c.solver_time);
}

fn small_scene() -> impl Strategy<Value = Scene> {
    prop::collection::vec((0usize..4, 15.0..85.0f64, 15.0..85.0f64), 1..4).prop_map(|objs| {
        let mut s = Scene::empty(100.0, 100.0, Point2::new(10.0, 10.0), Point2::new(90.0, 90.0));
        for (k, x, y) in objs {
            s.objects.push(SceneObject::new(ObjectKind::ALL[k], Point2::new(x, y), 8.0));
        }
        s
    })
}

fn thresholds() -> impl Strategy<Value = Vec<i64>> {
    prop::collection::vec(0i64..40, 5)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn point_cost_is_monotone_in_every_threshold(
        scene in small_scene(), x in thresholds(), axis in 0usize..5, bump in 1i64..10,
        qx in 0.0..100.0f64, qy in 0.0..100.0f64, decreasing in any::<bool>(),
    ) {
        let profile = if decreasing { Profile::Decreasing } else { Profile::Literal };
        let mut y = x.clone();
        y[axis] += bump;
        let q = Point2::new(qx, qy);
        let lo = point_cost(&q, &scene, &ThresholdParams::from_vec(&ObjectKind::ALL, &x), profile);
        let hi = point_cost(&q, &scene, &ThresholdParams::from_vec(&ObjectKind::ALL, &y), profile);
        prop_assert!(hi >= lo, "{lo} -> {hi}");
    }

    #[test]
    fn envelope_endpoints_are_feasible_and_ordered(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (demos, kinds, upper, cfg) = random_instance(&mut rng);
        let env = fit_both(&demos, &kinds, &cfg, Some(upper)).unwrap();
        prop_assert_eq!(env.min_params.is_some(), env.max_params.is_some());
        if let (Some(lo), Some(hi)) = (env.min_params, env.max_params) {
            prop_assert!(feasible(&lo, &demos, &cfg).unwrap());
            prop_assert!(feasible(&hi, &demos, &cfg).unwrap());
            prop_assert!(lo.objective() <= hi.objective());
        }
    }

    #[test]
    fn cost_map_matches_point_cost(scene in small_scene(), x in thresholds()) {
        let p = ThresholdParams::from_vec(&ObjectKind::ALL, &x);
        let map = cost_map(&p, &scene, 10, Profile::Literal).unwrap();
        for r in 0..10 {
            for c in 0..10 {
                let want = point_cost(&map.cell_center(r, c), &scene, &p, Profile::Literal);
                let got = map.get(r, c);
                prop_assert!(got == want || (got.is_infinite() && want.is_infinite()));
            }
        }
    }
}
