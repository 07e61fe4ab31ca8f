//! Serialization round-trips for datasets, checkpoints, configs and the
//! demonstration import format.

use demospec::config::RunConfig;
use demospec::geometry::{BezierParam, ObjectKind};
use demospec::io;
use demospec::pipeline::Dataset;
use demospec::scenegen::{render, UserType};
use demospec::specfit::LabeledDemo;
use demospec::specmodel::{Ablation, SpecModel};

fn small_config() -> RunConfig {
    let mut cfg = RunConfig::default().with_image_size(16);
    cfg.dataset.train_scenes_per_type = 3;
    cfg.dataset.test_scenes_per_type = 2;
    cfg.dataset.traj_per_scene = 4;
    cfg.eval.traj_sweep = vec![1, 3];
    cfg
}

#[test]
fn dataset_survives_a_file_round_trip() {
    let cfg = small_config();
    let ds = Dataset::generate(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("dataset.jsonl");
    io::write_dataset(&path, &ds).unwrap();
    assert_eq!(io::read_dataset(&path).unwrap(), ds);
    assert_eq!(io::dataset_to_string(&ds).unwrap(), io::dataset_to_string(&io::read_dataset(&path).unwrap()).unwrap());
}

#[test]
fn checkpoint_restores_an_identical_classifier() {
    let cfg = small_config();
    let ds = Dataset::generate(&cfg).unwrap();
    let model = SpecModel::init(UserType::Normal, cfg.arch.clone(), Ablation::Full.apply(cfg.loss), 42);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    io::write_checkpoint(&path, &model).unwrap();
    let back = io::read_checkpoint(&path).unwrap();
    assert_eq!(back, model);
    let img = render(&ds.scenes[0].scene, &cfg.render);
    let z = model.encode(&img).unwrap().mu;
    assert_eq!(back.encode(&img).unwrap().mu, z);
    for c in [BezierParam::new(20.0, 70.0), BezierParam::new(55.0, 45.0), BezierParam::new(80.0, 15.0)] {
        assert_eq!(back.classify(&z, &c).unwrap().to_bits(), model.classify(&z, &c).unwrap().to_bits());
    }
    assert_eq!(io::checkpoint_to_bytes(&back).unwrap(), std::fs::read(&path).unwrap());
}

#[test]
fn corrupted_checkpoints_are_rejected() {
    let cfg = small_config();
    let model = SpecModel::init(UserType::Careful, cfg.arch.clone(), cfg.loss, 1);
    let bytes = io::checkpoint_to_bytes(&model).unwrap();
    let mut flipped = bytes.clone();
    flipped[bytes.len() / 2] ^= 1;
    assert!(io::checkpoint_from_bytes(&flipped).is_err());
    assert!(io::checkpoint_from_bytes(&bytes[..bytes.len() - 1]).is_err());
    let mut magic = bytes.clone();
    magic[0] = b'X';
    assert!(io::checkpoint_from_bytes(&magic).is_err());
}

#[test]
fn config_snapshot_reloads_to_the_same_config() {
    let mut cfg = small_config();
    cfg.seed = 1234;
    cfg.refine.learning_rate = 7.5;
    let dir = tempfile::tempdir().unwrap();
    io::write_config_snapshot(dir.path(), &cfg).unwrap();
    assert_eq!(RunConfig::load(&dir.path().join(io::CONFIG_SNAPSHOT)).unwrap(), cfg);
}

#[test]
fn partial_config_keeps_defaults() {
    let cfg = RunConfig::from_toml_str("seed = 9\n[render]\nsize = 32\n[arch]\nimage_size = 32\n").unwrap();
    assert_eq!(cfg.seed, 9);
    assert_eq!(cfg.render.size, 32);
    assert_eq!(cfg.render.background, RunConfig::default().render.background);
    assert_eq!(cfg.dataset, RunConfig::default().dataset);
}

#[test]
fn demonstration_lines_round_trip_bit_exactly() {
    let ds = Dataset::generate(&small_config()).unwrap();
    let demos: Vec<LabeledDemo> = ds
        .demos
        .iter()
        .map(|d| LabeledDemo { scene: ds.scene(d.scene_id).unwrap().scene.clone(), trajectory: d.trajectory.clone(), valid: d.valid })
        .collect();
    let text = io::demo_lines(&demos).unwrap();
    let back = io::parse_demo_lines(&text).unwrap();
    assert_eq!(back.len(), demos.len());
    for (a, b) in back.iter().zip(&demos) {
        assert_eq!(a.trajectory, b.trajectory);
        // render-only fields (orientation, variant palette) are not part of the format
        assert_eq!((a.scene.width, a.scene.height, a.scene.p_init, a.scene.p_f), (b.scene.width, b.scene.height, b.scene.p_init, b.scene.p_f));
        let geom = |s: &demospec::geometry::Scene| s.objects.iter().map(|o| (o.kind, o.center, o.radius)).collect::<Vec<_>>();
        assert_eq!(geom(&a.scene), geom(&b.scene));
        assert_eq!(a.valid, b.valid);
    }
    assert_eq!(io::demo_lines(&back).unwrap(), text);
}

#[test]
fn demonstration_format_accepts_documented_example() {
    let text = "# comment\n\
        {\"scene\":{\"objects\":[{\"kind\":\"glass\",\"x\":50,\"y\":50}]},\"trajectory\":[[10,10],[50,20],[90,90]],\"valid\":true}\r\n\
        \n\
        {\"scene\":{\"width\":100,\"height\":100,\"objects\":[{\"kind\":\"bowl\",\"x\":40.5,\"y\":60,\"radius\":12}]},\"trajectory\":[[10,10],[90,90]],\"valid\":false}\n";
    let demos = io::parse_demo_lines(text).unwrap();
    assert_eq!(demos.len(), 2);
    assert_eq!(demos[0].scene.objects[0].kind, ObjectKind::Glass);
    assert_eq!(demos[0].scene.objects[0].radius, 10.0);
    assert_eq!(demos[0].scene.width, 100.0);
    assert_eq!(demos[1].scene.objects[0].radius, 12.0);
    assert!(!demos[1].valid);
}

#[test]
fn demonstration_format_rejects_bad_lines_with_line_numbers() {
    let cases = [
        "{\"scene\":{\"objects\":[]},\"trajectory\":[[10,10]],\"valid\":true}",
        "{\"scene\":{\"objects\":[]},\"trajectory\":[[10,10],[9,9]],\"valid\":true,\"extra\":1}",
        "{\"scene\":{\"objects\":[{\"kind\":\"spoon\",\"x\":1,\"y\":1}]},\"trajectory\":[[10,10],[9,9]],\"valid\":true}",
        "{\"scene\":{\"objects\":[{\"kind\":\"bowl\",\"x\":1,\"y\":1,\"radius\":0}]},\"trajectory\":[[10,10],[9,9]],\"valid\":true}",
        "not json",
    ];
    for c in cases {
        let err = io::parse_demo_lines(&format!("\n{c}\n")).unwrap_err().to_string();
        assert!(err.contains("line 2"), "{c}: {err}");
    }
    assert!(io::parse_demo_lines("# only a comment\n").is_err());
}
