use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nbv_core::fields::{load_voxel_grid, Primitive, SceneSpec};
use nbv_core::uncertainty::DIAGNOSTIC_HEADER;

fn nbv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nbv"))
        .args(args)
        .output()
        .expect("spawn nbv")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn scene(dir: &Path) -> PathBuf {
    let path = dir.join("scene.json");
    SceneSpec::new(vec![
        Primitive::sphere([0.1, 0.0, 0.0], 0.4, [0.8, 0.2, 0.2]),
        Primitive::cube([-0.3, 0.2, 0.1], 0.2, [0.2, 0.2, 0.8]),
    ])
    .save(&path)
    .unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn usage_errors_exit_1_and_help_exits_0() {
    let o = nbv(&["render", "--bogus"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert_eq!(nbv(&[]).status.code(), Some(1));
    assert_eq!(nbv(&["--help"]).status.code(), Some(0));
    assert_eq!(nbv(&["calibrate", "--samples", "x.csv", "--beta-grid", "1:0:0.1"]).status.code(), Some(1));
}

#[test]
fn runtime_errors_exit_2() {
    let o = nbv(&["voxelize", "--scene", "/nonexistent/scene.json", "--out", "/tmp/never.vox"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/scene.json"));
    // Off the camera sphere.
    let dir = tempfile::tempdir().unwrap();
    let sc = scene(dir.path());
    let o = nbv(&["uncertainty", "--scene", s(&sc), "--cam", "0,0,3", "--rays", "16", "--samples", "8"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn render_writes_colour_and_silhouette() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scene(dir.path());
    let out = dir.path().join("view.png");
    let o = nbv(&["render", "--scene", s(&sc), "--cam", "0,0,2", "--res", "16", "--samples", "32", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.exists());
    assert!(dir.path().join("view_silhouette.png").exists());
}

#[test]
fn voxelize_round_trips_through_the_grid_format() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scene(dir.path());
    let out = dir.path().join("grid.vox");
    let o = nbv(&["voxelize", "--scene", s(&sc), "--res", "8", "--out", s(&out)]);
    assert!(o.status.success());
    let g = load_voxel_grid(&out).unwrap();
    assert_eq!(g.dims(), [8, 8, 8]);
    assert!(g.values().iter().any(|&v| v > 0.5));
}

#[test]
fn diagnose_ray_emits_the_diagnostic_header() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scene(dir.path());
    let o = nbv(&["diagnose-ray", "--scene", s(&sc), "--cam", "0,0,2", "--pixel", "64,64"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(DIAGNOSTIC_HEADER));
    assert_eq!(lines.count(), 128);
    let o = nbv(&["diagnose-ray", "--scene", s(&sc), "--cam", "0,0,2", "--pixel", "128,0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn calibrate_prints_one_row_per_beta() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("preds.csv");
    let mut text = String::from("pred,label\n");
    for i in 0..200 {
        let p = (i as f64 + 0.5) / 200.0;
        text.push_str(&format!("{p},{}\n", u8::from(i % 3 == 0)));
    }
    std::fs::write(&path, text).unwrap();
    let o = nbv(&["calibrate", "--samples", s(&path), "--bins", "20", "--beta-grid", "0.5:1.4:0.1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    let rows: Vec<&str> = out.lines().collect();
    assert_eq!(rows[0], "beta,calibration_error");
    assert_eq!(rows.len(), 11);
    assert!(rows[1].starts_with("0.5000,"));
    assert!(rows[10].starts_with("1.4000,"));
}

#[test]
fn uncertainty_and_select_are_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scene(dir.path());
    let u = |seed: &str| {
        let o = nbv(&["uncertainty", "--scene", s(&sc), "--cam", "0,2,0", "--rays", "64", "--samples", "32", "--seed", seed]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        stdout(&o)
    };
    assert_eq!(u("3"), u("3"));
    let sel = |seed: &str| {
        let o = nbv(&[
            "select", "--scene", s(&sc), "--policy", "random", "--view", "0,0,2", "--view", "2,0,0", "--seed", seed,
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        stdout(&o)
    };
    assert_eq!(sel("1"), sel("1"));
    assert_ne!(sel("1"), sel("2"));
    let row: Vec<f64> = sel("1").lines().nth(1).unwrap().split(',').take(3).map(|x| x.parse().unwrap()).collect();
    let r = (row[0] * row[0] + row[1] * row[1] + row[2] * row[2]).sqrt();
    assert!((r - 2.0).abs() < 1e-9);
}

#[test]
fn experiment_writes_records_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("c.json");
    std::fs::write(
        &config,
        r#"{
            "scenes": {"n_scenes": 1, "seed": 2},
            "policies": [{"kind": "random"}, {"kind": "even"}],
            "n_inits": 1,
            "max_views": 2,
            "eval": {"iou_res": 16, "n_psnr_views": 1, "psnr_res": 8, "n_samples": 16},
            "surrogate": {"res_w": 16, "res_acq": 16, "n_samples": 16, "prior_bake_res": 16}
        }"#,
    )
    .unwrap();
    let out = dir.path().join("results");
    let o = nbv(&["experiment", "--config", s(&config), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let records = std::fs::read_to_string(out.join("records.csv")).unwrap();
    assert_eq!(records.lines().count(), 1 + 4);
    assert!(records.starts_with("scene_id,policy,init_seed,step,iou,psnr_mean,u_selected,cam_x,cam_y,cam_z,wall_ms,error\n"));
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(summary.starts_with("policy,step,iou_mean,iou_worst,iou_std,psnr_mean,psnr_worst,psnr_std\n"));
    assert_eq!(summary.lines().count(), 1 + 4);

    std::fs::write(&config, r#"{"scenes": {"n_scenes": 1}, "policies": [{"kind": "random"}], "surprise": 1}"#).unwrap();
    assert_eq!(nbv(&["experiment", "--config", s(&config), "--out", s(&out)]).status.code(), Some(2));
}
