//! Scene generation and oracle invariants.

use demospec::geometry::{sample_bezier, BezierParam, ObjectKind, Point2, SceneObject};
use demospec::scenegen::{
    composite_object, generate_demos, generate_scene, oracle_validity, render, OracleConfig, RenderConfig, SceneGenConfig,
    UserType,
};
use proptest::prelude::*;

fn kind() -> impl Strategy<Value = ObjectKind> {
    (0usize..4).prop_map(|i| ObjectKind::ALL[i])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn careful_rejects_everything_normal_rejects(seed in 0u64..5000, cx in 0.0..100.0f64, cy in 0.0..100.0f64) {
        let cfg = SceneGenConfig::default();
        let oracle = OracleConfig::default();
        let scene = generate_scene(seed, 3, &ObjectKind::ALL, false, &cfg).unwrap();
        let tr = sample_bezier(&BezierParam::new(cx, cy), scene.endpoints(), cfg.traj_points).unwrap();
        let careful = oracle_validity(&tr, &scene, UserType::Careful, &oracle);
        let normal = oracle_validity(&tr, &scene, UserType::Normal, &oracle);
        prop_assert!(oracle_validity(&tr, &scene, UserType::Aggressive, &oracle));
        if careful { prop_assert!(normal); }
    }

    #[test]
    fn larger_clearance_never_validates_more(
        seed in 0u64..5000, cx in 0.0..100.0f64, cy in 0.0..100.0f64, r in 0.0..30.0f64, dr in 0.0..20.0f64,
    ) {
        let cfg = SceneGenConfig::default();
        let scene = generate_scene(seed, 2, &ObjectKind::ALL, false, &cfg).unwrap();
        let tr = sample_bezier(&BezierParam::new(cx, cy), scene.endpoints(), cfg.traj_points).unwrap();
        for s in UserType::ALL {
            let wide = oracle_validity(&tr, &scene, s, &OracleConfig::with_clearance(r + dr));
            let narrow = oracle_validity(&tr, &scene, s, &OracleConfig::with_clearance(r));
            prop_assert!(!wide || narrow);
        }
    }

    #[test]
    fn adding_an_object_never_validates_more(
        seed in 0u64..5000, k in kind(), ox in 10.0..90.0f64, oy in 10.0..90.0f64, cx in 0.0..100.0f64, cy in 0.0..100.0f64,
    ) {
        let cfg = SceneGenConfig::default();
        let oracle = OracleConfig::default();
        let scene = generate_scene(seed, 2, &ObjectKind::ALL, false, &cfg).unwrap();
        let mut more = scene.clone();
        more.objects.push(SceneObject::new(k, Point2::new(ox, oy), 8.0));
        let tr = sample_bezier(&BezierParam::new(cx, cy), scene.endpoints(), cfg.traj_points).unwrap();
        for s in UserType::ALL {
            prop_assert!(!oracle_validity(&tr, &more, s, &oracle) || oracle_validity(&tr, &scene, s, &oracle));
        }
    }

    #[test]
    fn compositing_equals_rerendering(seed in 0u64..5000, k in kind(), ox in 5.0..95.0f64, oy in 5.0..95.0f64, variant in any::<bool>()) {
        let cfg = SceneGenConfig::default();
        let rc = RenderConfig { size: 32, ..RenderConfig::default() };
        let scene = generate_scene(seed, 2, &ObjectKind::ALL, variant, &cfg).unwrap();
        let o = SceneObject::new(k, Point2::new(ox, oy), 9.0);
        let composed = composite_object(&render(&scene, &rc), &o, (scene.width, scene.height), &rc).unwrap();
        let mut appended = scene.clone();
        appended.objects.push(o);
        prop_assert_eq!(composed, render(&appended, &rc));
    }

    #[test]
    fn demonstrations_start_and_end_at_the_scene_endpoints(seed in 0u64..5000, n in 1usize..12) {
        let cfg = SceneGenConfig::default();
        let oracle = OracleConfig::default();
        let scene = generate_scene(seed, 2, &ObjectKind::ALL, false, &cfg).unwrap();
        for s in UserType::ALL {
            let demos = generate_demos(&scene, 0, s, n, seed, &cfg, &oracle).unwrap();
            prop_assert_eq!(demos.len(), n);
            for d in &demos {
                prop_assert_eq!(d.trajectory.points[0], scene.p_init);
                prop_assert_eq!(*d.trajectory.points.last().unwrap(), scene.p_f);
                prop_assert_eq!(d.valid, oracle_validity(&d.trajectory, &scene, s, &oracle));
            }
        }
    }
}

#[test]
fn generated_objects_respect_bounds_and_radius_limits() {
    let cfg = SceneGenConfig::default();
    for seed in 0..200 {
        let scene = generate_scene(seed, 3, &ObjectKind::ALL, seed % 2 == 0, &cfg).unwrap();
        for o in &scene.objects {
            assert!(o.center.x >= 0.0 && o.center.x < scene.width && o.center.y >= 0.0 && o.center.y < scene.height);
            assert!(o.radius > 0.0 && o.radius < scene.width.min(scene.height) / 2.0);
        }
        assert!(scene.p_init.x < scene.width / 2.0 && scene.p_init.y < scene.height / 2.0);
        assert!(scene.p_f.x >= scene.width / 2.0 && scene.p_f.y >= scene.height / 2.0);
    }
}

#[test]
fn rendered_blob_count_matches_well_separated_objects() {
    let cfg = SceneGenConfig::default();
    let rc = RenderConfig::default();
    let mut scene = cfg.empty_scene();
    for (i, &(x, y)) in [(25.0, 70.0), (70.0, 25.0), (50.0, 50.0)].iter().enumerate() {
        scene.objects.push(SceneObject::new(ObjectKind::ALL[i], Point2::new(x, y), 8.0));
    }
    assert_eq!(render(&scene, &rc).count_blobs(rc.background, 1e-9), 3);
}
