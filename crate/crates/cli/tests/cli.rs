use forcemosaic::commands::evaluate;
use forcemosaic::main_with;
use std::fs;
use std::path::Path;
use tempfile::TempDir;

fn run(args: &[&str]) -> u8 {
    main_with(std::iter::once("forcemosaic").chain(args.iter().copied()))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn simulate(dir: &Path, extra: &[&str]) {
    let mut args = vec!["simulate", "--out", p(dir)];
    args.extend_from_slice(extra);
    assert_eq!(run(&args), 0);
}

fn metrics(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("metrics.json")).unwrap()).unwrap()
}

#[test]
fn simulate_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    simulate(&a, &["--frames", "3", "--seed", "5", "--noise", "0.01"]);
    simulate(&b, &["--frames", "3", "--seed", "5", "--noise", "0.01"]);
    for f in ["forces.csv", "groundtruth.csv", "config.txt", "frames/000001.png", "frames/000003.png"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let forces = fs::read_to_string(a.join("forces.csv")).unwrap();
    assert!(forces.starts_with("frame_id,f1_n,f2_n,f3_n,f4_n\n"));
    assert_eq!(forces.lines().count(), 4);
}

#[test]
fn reconstruct_metrics_match_evaluate() {
    let tmp = TempDir::new().unwrap();
    let (ds, out) = (tmp.path().join("ds"), tmp.path().join("out"));
    simulate(&ds, &["--frames", "4", "--seed", "9"]);
    assert_eq!(run(&["reconstruct", "--dataset", p(&ds), "--out", p(&out)]), 0);
    assert!(out.join("mosaic.png").is_file());
    let path = fs::read_to_string(out.join("path.csv")).unwrap();
    assert_eq!(path.lines().count(), 5);
    let m = metrics(&out);
    assert_eq!(m["frames"], 4);
    assert_eq!(m["skipped"], 0);
    let (rmse, ratio) = evaluate(&out.join("path.csv"), &ds.join("groundtruth.csv")).unwrap();
    assert_eq!(m["rmse_mm"].as_f64().unwrap().to_bits(), rmse.to_bits());
    assert_eq!(m["error_ratio_percent"].as_f64().unwrap().to_bits(), ratio.to_bits());
    assert!(rmse < 0.2, "rmse {rmse}");
    assert_eq!(run(&["evaluate", p(&out.join("path.csv")), p(&ds.join("groundtruth.csv"))]), 0);
}

#[test]
fn metrics_are_null_without_groundtruth() {
    let tmp = TempDir::new().unwrap();
    let (ds, out) = (tmp.path().join("ds"), tmp.path().join("out"));
    simulate(&ds, &["--frames", "2"]);
    fs::remove_file(ds.join("groundtruth.csv")).unwrap();
    assert_eq!(run(&["reconstruct", "--dataset", p(&ds), "--out", p(&out)]), 0);
    let m = metrics(&out);
    assert!(m["rmse_mm"].is_null());
    assert!(m["error_ratio_percent"].is_null());
    assert_eq!(m["frames"], 2);
}

#[test]
fn single_frame_dataset_is_the_origin() {
    let tmp = TempDir::new().unwrap();
    let (ds, out) = (tmp.path().join("ds"), tmp.path().join("out"));
    simulate(&ds, &["--frames", "1"]);
    assert_eq!(run(&["reconstruct", "--dataset", p(&ds), "--out", p(&out)]), 0);
    let path = fs::read_to_string(out.join("path.csv")).unwrap();
    let rows: Vec<&str> = path.lines().collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[1].starts_with("1,0,0,"), "{}", rows[1]);
}

#[test]
fn usage_and_runtime_errors_have_distinct_codes() {
    assert_eq!(run(&["simulate"]), 2);
    assert_eq!(run(&["frobnicate"]), 2);
    assert_eq!(run(&["--help"]), 0);
    let tmp = TempDir::new().unwrap();
    let missing = tmp.path().join("nothing");
    assert_eq!(run(&["reconstruct", "--dataset", p(&missing), "--out", p(tmp.path())]), 1);
    assert_eq!(run(&["evaluate", p(&missing), p(&missing)]), 1);
}

#[test]
fn match_reports_on_real_and_blank_images() {
    let tmp = TempDir::new().unwrap();
    let ds = tmp.path().join("ds");
    simulate(&ds, &["--frames", "2"]);
    let frame = ds.join("frames/000001.png");
    let viz = tmp.path().join("viz.png");
    assert_eq!(run(&["match", p(&frame), p(&frame), "--viz", p(&viz)]), 0);
    assert!(viz.is_file());

    let blank = tmp.path().join("blank.png");
    image::GrayImage::from_pixel(200, 200, image::Luma([128])).save(&blank).unwrap();
    let args = forcemosaic::commands::MatchArgs {
        reference: blank.clone(),
        query: blank,
        viz: None,
        stretch_ratio: 1.13,
        threshold: 1.0,
        seed: 0,
    };
    let c = forcemosaic::commands::run_match(&args).unwrap();
    assert!(c.sift.inliers.is_empty() && c.asift.inliers.is_empty());
    assert!(forcemosaic::commands::match_report(&c).contains("inlier_ratio n/a"));
}

#[test]
fn calibrate_recovers_the_configured_material() {
    let tmp = TempDir::new().unwrap();
    let ds = tmp.path().join("ds");
    let record = tmp.path().join("material.txt");
    simulate(&ds, &["--frames", "6", "--touchdown", "5", "--seed", "3"]);
    assert_eq!(run(&["calibrate", "--dataset", p(&ds), "--out", p(&record)]), 0);
    let value = |text: &str, key: &str| -> f64 {
        let line = text.lines().find(|l| l.trim_start().starts_with(key)).unwrap();
        line.split('=').nth(1).unwrap().trim().parse().unwrap()
    };
    let (fitted, truth) = (fs::read_to_string(&record).unwrap(), fs::read_to_string(ds.join("config.txt")).unwrap());
    for (key, tol) in [("material.youngs_modulus_pa", 0.05), ("material.hooke_constant_n_per_mm", 0.02)] {
        let (a, b) = (value(&fitted, key), value(&truth, key));
        assert!((a / b - 1.0).abs() < tol, "{key}: {a} vs {b}");
    }
}
