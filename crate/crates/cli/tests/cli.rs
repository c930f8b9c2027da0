use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn redseg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_redseg"))
        .args(args)
        .output()
        .expect("spawn redseg")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn gen_small_cohort(dir: &Path, count: usize, size: usize) {
    let out = redseg(&[
        "gen-data",
        "--out",
        dir.to_str().unwrap(),
        "--count",
        &count.to_string(),
        "--size",
        &size.to_string(),
        "--seed",
        "3",
    ]);
    assert_ok(&out);
}

#[test]
fn gen_data_writes_cohort_files() {
    let dir = tempfile::tempdir().unwrap();
    gen_small_cohort(dir.path(), 5, 32);
    for i in 0..5 {
        for suffix in ["", "_disc", "_cup"] {
            assert!(dir.path().join(format!("case{i:04}{suffix}.pgm")).exists());
        }
        for suffix in ["_disc", "_cup"] {
            assert!(dir.path().join(format!("case{i:04}{suffix}.txt")).exists());
        }
    }
    let manifest = fs::read_to_string(dir.path().join("manifest.csv")).unwrap();
    assert!(manifest.starts_with("id,true_cdr,label\n"));
    assert_eq!(manifest.lines().count(), 6);
}

#[test]
fn gen_data_is_deterministic_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    gen_small_cohort(a.path(), 3, 32);
    gen_small_cohort(b.path(), 3, 32);
    for name in ["case0000.pgm", "case0001_disc.pgm", "manifest.csv"] {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name} differs between identical runs"
        );
    }
}

fn write_circle_contour(path: &Path, cx: f64, cy: f64, r: f64) {
    let mut s = String::new();
    for k in 0..720 {
        let t = 2.0 * std::f64::consts::PI * k as f64 / 720.0;
        s.push_str(&format!("{},{}\n", cx + r * t.cos(), cy + r * t.sin()));
    }
    fs::write(path, s).unwrap();
}

#[test]
fn fuse_three_circles_recovers_median_radius() {
    let dir = tempfile::tempdir().unwrap();
    for (n, r) in [(1, 10.0), (2, 12.0), (3, 30.0)] {
        write_circle_contour(&dir.path().join(format!("case_expert{n}.txt")), 32.0, 32.0, r);
    }
    let fused = dir.path().join("fused.txt");
    let mask = dir.path().join("fused.pgm");
    let out = redseg(&[
        "fuse",
        "--base",
        dir.path().join("case.txt").to_str().unwrap(),
        "--out",
        fused.to_str().unwrap(),
        "--mask",
        mask.to_str().unwrap(),
        "--width",
        "64",
        "--height",
        "64",
    ]);
    assert_ok(&out);
    let text = fs::read_to_string(&fused).unwrap();
    let mut n = 0;
    for line in text.lines() {
        let (x, y) = line.split_once(',').unwrap();
        let (x, y): (f64, f64) = (x.parse().unwrap(), y.parse().unwrap());
        let r = ((x - 32.0).powi(2) + (y - 32.0).powi(2)).sqrt();
        assert!((r - 12.0).abs() < 1e-6, "radius {r}");
        n += 1;
    }
    assert_eq!(n, 360);
    assert!(mask.exists());
}

#[test]
fn fuse_without_experts_fails_with_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let out = redseg(&[
        "fuse",
        "--base",
        dir.path().join("case.txt").to_str().unwrap(),
        "--out",
        dir.path().join("fused.txt").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));
}

#[test]
fn eval_identical_directories_scores_ones() {
    let data = tempfile::tempdir().unwrap();
    gen_small_cohort(data.path(), 3, 32);
    // masks-only directory so every shared .pgm is a binary mask
    let masks = tempfile::tempdir().unwrap();
    for i in 0..3 {
        for suffix in ["_disc", "_cup"] {
            let name = format!("case{i:04}{suffix}.pgm");
            fs::copy(data.path().join(&name), masks.path().join(&name)).unwrap();
        }
    }
    let table = data.path().join("metrics.csv");
    let out = redseg(&[
        "eval",
        "--pred",
        masks.path().to_str().unwrap(),
        "--gt",
        masks.path().to_str().unwrap(),
        "--out",
        table.to_str().unwrap(),
    ]);
    assert_ok(&out);
    let text = fs::read_to_string(&table).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "id,sensitivity,specificity,accuracy,precision,dice,jaccard"
    );
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        for v in &fields[1..] {
            assert_eq!(*v, "1", "row {line}");
        }
    }
    assert_eq!(text.lines().count(), 8); // 6 masks + mean + header
}

#[test]
fn eval_disjoint_directories_is_an_error() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let out = redseg(&[
        "eval",
        "--pred",
        a.path().to_str().unwrap(),
        "--gt",
        b.path().to_str().unwrap(),
        "--out",
        a.path().join("t.csv").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
}

#[test]
fn grade_ground_truth_masks_matches_labels() {
    let data = tempfile::tempdir().unwrap();
    gen_small_cohort(data.path(), 20, 32);
    let table = data.path().join("cdr.csv");
    let out = redseg(&[
        "grade",
        "--masks",
        data.path().to_str().unwrap(),
        "--manifest",
        data.path().join("manifest.csv").to_str().unwrap(),
        "--out",
        table.to_str().unwrap(),
    ]);
    assert_ok(&out);
    let text = fs::read_to_string(&table).unwrap();
    assert!(text.starts_with("id,disc_diameter,cup_diameter,cdr,grade,cup_exceeds_disc\n"));
    assert_eq!(text.lines().count(), 21);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("oca"), "{stdout}");
}

#[test]
fn train_toy_emits_checkpoint_log_and_predictions() {
    let data = tempfile::tempdir().unwrap();
    gen_small_cohort(data.path(), 12, 16);
    let out_dir = tempfile::tempdir().unwrap();
    let out = redseg(&[
        "train-toy",
        "--data",
        data.path().to_str().unwrap(),
        "--out",
        out_dir.path().to_str().unwrap(),
        "--iterations",
        "2",
        "--passes",
        "2",
        "--batch",
        "4",
        "--channels",
        "2,4",
        "--seed",
        "1",
    ]);
    assert_ok(&out);
    assert!(out_dir.path().join("model_t3.redh1").exists());
    let log = fs::read_to_string(out_dir.path().join("trainlog_t3.csv")).unwrap();
    assert!(log.starts_with("iteration,alpha,train_loss,val_loss,wall_clock\n"));
    assert_eq!(log.lines().count(), 3);
    // 12 cases at 0.7/0.2/0.1 -> 8 train, 2 val, 2 holdout
    let preds: Vec<_> = fs::read_dir(out_dir.path().join("pred"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    assert_eq!(preds.len(), 4);
}

#[test]
fn skip_compare_tabulates_all_three_curves() {
    let data = tempfile::tempdir().unwrap();
    gen_small_cohort(data.path(), 12, 16);
    let out_dir = tempfile::tempdir().unwrap();
    let out = redseg(&[
        "skip-compare",
        "--data",
        data.path().to_str().unwrap(),
        "--out",
        out_dir.path().to_str().unwrap(),
        "--iterations",
        "2",
        "--passes",
        "2",
        "--batch",
        "4",
        "--channels",
        "2,4",
        "--seed",
        "1",
    ]);
    assert_ok(&out);
    for skip in ["t1", "t2", "t3"] {
        assert!(out_dir.path().join(format!("model_{skip}.redh1")).exists());
    }
    let table = fs::read_to_string(out_dir.path().join("skip_compare.csv")).unwrap();
    assert!(table
        .starts_with("iteration,alpha,t1_train,t1_val,t2_train,t2_val,t3_train,t3_val\n"));
    assert_eq!(table.lines().count(), 3);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.matches("final validation loss").count(), 3);
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = redseg(&["eval", "--bogus"]);
    assert!(!out.status.success());
}

#[test]
fn bad_threshold_is_rejected() {
    let data = tempfile::tempdir().unwrap();
    gen_small_cohort(data.path(), 12, 16);
    let out_dir = tempfile::tempdir().unwrap();
    let out = redseg(&[
        "train-toy",
        "--data",
        data.path().to_str().unwrap(),
        "--out",
        out_dir.path().to_str().unwrap(),
        "--iterations",
        "1",
        "--passes",
        "1",
        "--batch",
        "2",
        "--channels",
        "2,4",
        "--threshold",
        "300",
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("threshold"));
}
