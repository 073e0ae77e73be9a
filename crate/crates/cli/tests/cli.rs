use std::path::Path;
use std::process::{Command, Output};

use semisparse::imageio::{decode_raw_f64, encode_raw_f64};
use semisparse::Field;

fn semisparse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semisparse"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_raw(path: &Path, f: &Field) {
    std::fs::write(path, encode_raw_f64(f)).unwrap();
}

fn read_raw(path: &Path) -> Field {
    decode_raw_f64(&std::fs::read(path).unwrap()).unwrap()
}

fn value(out: &str, key: &str) -> Option<String> {
    out.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")).map(str::to_string))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn sample_image() -> Field {
    Field::from_fn(24, 20, 1, |y, x, _| {
        let base = if x < 10 { 0.3 } else { 0.7 };
        base + 0.02 * ((3 * y + 5 * x) % 7) as f64
    })
}

#[test]
fn smooth_lambda_zero_is_identity() {
    let dir = tempfile::tempdir().unwrap();
    let (inp, out) = (dir.path().join("in.ssf"), dir.path().join("out.ssf"));
    let f = sample_image();
    write_raw(&inp, &f);
    let o = semisparse(&["smooth", "--lambda", "0", p(&inp), p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    // Round-off grows with beta as the low-frequency update approaches an
    // inverse of the difference operator; a few 1e-12 is typical here.
    let err = read_raw(&out).max_abs_diff(&f).unwrap();
    assert!(err <= 1e-10, "{err:e}");
}

#[test]
fn smooth_reports_metrics_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let (inp, out) = (dir.path().join("in.ssf"), dir.path().join("out.ssf"));
    write_raw(&inp, &sample_image());
    let o = semisparse(&["smooth", "-v", "--reference", p(&inp), "--crop", "2", p(&inp), p(&out)]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert!(s.lines().next().unwrap().contains("beta"));
    assert_eq!(value(&s, "iterations").as_deref(), Some("85"));
    let psnr: f64 = value(&s, "psnr").unwrap().parse().unwrap();
    assert!(psnr > 10.0, "{psnr}");
    assert!(value(&s, "mae").is_some());
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let inp = dir.path().join("in.ssf");
    write_raw(&inp, &sample_image());
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"max_iter": 3, "lambda": 0.05}"#).unwrap();
    let out = dir.path().join("a.ssf");
    let o = semisparse(&["smooth", "--config", p(&cfg), p(&inp), p(&out)]);
    assert_eq!(value(&stdout(&o), "iterations").as_deref(), Some("3"));
    let o = semisparse(&["smooth", "--config", p(&cfg), "--max-iter", "5", p(&inp), p(&out)]);
    assert_eq!(value(&stdout(&o), "iterations").as_deref(), Some("5"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let inp = dir.path().join("in.ssf");
    write_raw(&inp, &sample_image());
    let out = dir.path().join("out.ssf");
    // Unknown flag and invalid setting are usage errors.
    assert_eq!(semisparse(&["smooth", "--bogus", p(&inp), p(&out)]).status.code(), Some(1));
    assert_eq!(semisparse(&["smooth", "--order", "9", p(&inp), p(&out)]).status.code(), Some(1));
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"lamda": 1}"#).unwrap();
    assert_eq!(semisparse(&["smooth", "--config", p(&cfg), p(&inp), p(&out)]).status.code(), Some(1));
    // Missing and malformed inputs are I/O errors.
    let missing = dir.path().join("missing.ssf");
    assert_eq!(semisparse(&["smooth", p(&missing), p(&out)]).status.code(), Some(2));
    let bad = dir.path().join("bad.ssf");
    std::fs::write(&bad, b"nope").unwrap();
    assert_eq!(semisparse(&["smooth", p(&bad), p(&out)]).status.code(), Some(2));
    // Help is not an error.
    assert_eq!(semisparse(&["--help"]).status.code(), Some(0));
}

#[test]
fn non_finite_input_is_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let inp = dir.path().join("nan.csv");
    std::fs::write(&inp, "0.1\n0.2\nNaN\n0.4\n").unwrap();
    let out = dir.path().join("out.csv");
    assert_eq!(semisparse(&["smooth", p(&inp), p(&out)]).status.code(), Some(3));
}

#[test]
fn synth_writes_pair_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let (noisy, clean) = (dir.path().join("n.csv"), dir.path().join("c.csv"));
    let o = semisparse(&[
        "synth", "--preset", "mixed", "--length", "64", "--seed", "3", "--clean", p(&clean), p(&noisy),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let side: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("n.csv.json")).unwrap()).unwrap();
    assert_eq!(side["spec"]["seed"], 3);
    assert_eq!(side["preset"], "mixed");
    assert_eq!(side["clean"], "c.csv");
    let n = std::fs::read_to_string(&noisy).unwrap();
    let c = std::fs::read_to_string(&clean).unwrap();
    assert_eq!(n.lines().count(), 64);
    assert_ne!(n, c);
}

#[test]
fn synth_spec_file_round_trips_through_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("a.ssf");
    assert!(semisparse(&["synth", "--height", "32", "--width", "40", "--seed", "9", p(&first)]).status.success());
    // The sidecar's spec regenerates the same data.
    let side: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("a.ssf.json")).unwrap()).unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(&spec, side["spec"].to_string()).unwrap();
    let second = dir.path().join("b.ssf");
    let o = semisparse(&["synth", "--spec", p(&spec), p(&second)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read(&first).unwrap(), std::fs::read(&second).unwrap());
}

#[test]
fn enhance_with_unit_boost_reproduces_input() {
    let dir = tempfile::tempdir().unwrap();
    let (inp, out) = (dir.path().join("in.ssf"), dir.path().join("out.ssf"));
    let f = sample_image();
    write_raw(&inp, &f);
    for log in ["true", "false"] {
        let o = semisparse(&["enhance", "--boost", "1", "--log-domain", log, p(&inp), p(&out)]);
        assert!(o.status.success());
        assert!(read_raw(&out).max_abs_diff(&f).unwrap() < 1e-10);
    }
}

#[test]
fn multiscale_writes_layers() {
    let dir = tempfile::tempdir().unwrap();
    let (inp, out) = (dir.path().join("in.ssf"), dir.path().join("out.ssf"));
    let f = sample_image();
    write_raw(&inp, &f);
    let layers = dir.path().join("layers");
    let levels = r#"[{"config": {"lambda": 0.001, "alpha": 0.01}, "gain": 1.0},
                     {"config": {"lambda": 0.02, "alpha": 1.0}, "gain": 1.0}]"#;
    let o = semisparse(&["multiscale", "--levels", levels, "--layers", p(&layers), p(&inp), p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut sum = read_raw(&layers.join("base.ssf"));
    for i in 0..2 {
        sum = sum.add(&read_raw(&layers.join(format!("detail_{i}.ssf")))).unwrap();
    }
    assert!(sum.max_abs_diff(&f).unwrap() < 1e-12);
    assert!(read_raw(&out).max_abs_diff(&f).unwrap() < 1e-12);
}

#[test]
fn unordered_levels_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (inp, out) = (dir.path().join("in.ssf"), dir.path().join("out.ssf"));
    write_raw(&inp, &sample_image());
    let levels = r#"[{"config": {"lambda": 0.02}}, {"config": {"lambda": 0.001}}]"#;
    let o = semisparse(&["multiscale", "--levels", levels, p(&inp), p(&out)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn hdr_and_stylize_run_on_png() {
    let dir = tempfile::tempdir().unwrap();
    let hdr = dir.path().join("in.hdr");
    let rad = Field::from_fn(16, 16, 3, |y, x, c| 0.01 * (1.0 + y as f64) * (1.0 + x as f64) * (1.0 + c as f64));
    semisparse::imageio::save(&rad, &hdr, &Default::default()).unwrap();
    let png = dir.path().join("tone.png");
    let o = semisparse(&["hdr", "--target-range", "1.5", p(&hdr), p(&png)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(value(&stdout(&o), "base_scale").is_some());

    let styl = dir.path().join("pen.png");
    let o = semisparse(&["stylize", "--mode", "color-pencil", "--edge-tau", "0.001", p(&png), p(&styl)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let loaded = semisparse::imageio::load(&styl, &Default::default()).unwrap();
    assert_eq!(loaded.channels(), 3);
}

#[test]
fn stats_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("plane.ssf");
    write_raw(&img, &Field::from_fn(20, 20, 1, |y, x, _| 0.01 * x as f64 + 0.02 * y as f64));
    let hist = dir.path().join("hist.csv");
    let o = semisparse(&["stats", "--max-order", "3", "--histogram", p(&hist), p(&img)]);
    assert!(o.status.success());
    let s = stdout(&o);
    let rows: Vec<&str> = s.lines().collect();
    assert_eq!(rows[0], "order,ratio,gap");
    assert!(rows[1].starts_with("1,0.000000000,"));
    assert!(rows[2].starts_with("2,1.000000000,"));
    assert!(std::fs::read_to_string(&hist).unwrap().starts_with("order,bin_center,probability"));
}

#[test]
fn verify_passes_with_few_instances() {
    let o = semisparse(&["verify", "--instances", "2"]);
    let s = stdout(&o);
    assert_eq!(s.lines().filter(|l| l.starts_with("PASS") || l.starts_with("FAIL")).count(), 4);
    assert!(s.contains("PASS dense-solve"));
    assert!(s.contains("PASS w-step"));
}
