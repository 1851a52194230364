//! End-to-end tests that drive the compiled binary the way a user would:
//! synthesize a recording, push it through triangulation and analysis, and
//! compare analyses, checking outputs with the library's own parsers.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_gaitkit")
}

struct TempDir(PathBuf);

impl TempDir {
    fn new(name: &str) -> TempDir {
        let dir = std::env::temp_dir().join(format!("gaitkit_cli_{name}_{}", std::process::id()));
        let _ = fs::remove_dir_all(&dir);
        fs::create_dir_all(&dir).unwrap();
        TempDir(dir)
    }

    fn join(&self, relative: &str) -> PathBuf {
        self.0.join(relative)
    }

    fn arg(&self, relative: &str) -> String {
        self.join(relative).to_str().unwrap().to_string()
    }
}

impl Drop for TempDir {
    fn drop(&mut self) {
        let _ = fs::remove_dir_all(&self.0);
    }
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("binary runs")
}

fn run_ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "command {args:?} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn synth(dir: &TempDir, extra: &[&str]) {
    let mut args = vec!["synth", "--output-dir", dir.0.to_str().unwrap()];
    args.extend_from_slice(extra);
    run_ok(&args);
}

fn triangulate(dir: &TempDir, markers_out: &str) {
    run_ok(&[
        "triangulate",
        "--output-dir",
        dir.0.to_str().unwrap(),
        "--calibration",
        &dir.arg("calibration.json"),
        "--keypoints",
        &dir.arg("keypoints_cam0.json"),
        "--keypoints",
        &dir.arg("keypoints_cam1.json"),
        "--keypoints",
        &dir.arg("keypoints_cam2.json"),
        "--keypoints",
        &dir.arg("keypoints_cam3.json"),
        "--markers",
        markers_out,
    ]);
}

fn analyze(out_dir: &str, markers: &str, static_trial: Option<&str>) -> String {
    let mut args = vec!["analyze", "--output-dir", out_dir, "--markers", markers];
    if let Some(s) = static_trial {
        args.extend_from_slice(&["--static-trial", s]);
    }
    run_ok(&args)
}

fn json_of(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

#[test]
fn full_pipeline_from_synth_to_self_compare() {
    let dir = TempDir::new("full");
    synth(&dir, &["--pixel-noise-sd", "1.0", "--dropout-rate", "0.02"]);
    for file in ["calibration.json", "reference.trc", "static.trc", "truth.json"] {
        assert!(dir.join(file).exists(), "{file} missing");
    }

    let markers = dir.arg("markers.trc");
    triangulate(&dir, &markers);
    let text = fs::read_to_string(&markers).unwrap();
    let (set, _) = gaitkit::io::parse_trc(&text).expect("triangulated TRC parses");
    assert_eq!(set.n_frames(), 500);
    assert_eq!(set.labels.len(), 12);

    let analysis_dir = dir.arg("analysis");
    analyze(&analysis_dir, &markers, Some(&dir.arg("static.trc")));
    let analysis = json_of(&dir.join("analysis/analysis.json"));
    let n_cycles = analysis["cycles"].as_array().unwrap().len();
    assert!(n_cycles >= 4, "expected several cycles, got {n_cycles}");

    let spatiotemporal = fs::read_to_string(dir.join("analysis/spatiotemporal.csv")).unwrap();
    assert_eq!(spatiotemporal.lines().count(), n_cycles + 1, "one CSV row per cycle");
    let angles = fs::read_to_string(dir.join("analysis/joint_angles.csv")).unwrap();
    assert!(angles.starts_with("frame,time_s,"));
    assert_eq!(angles.lines().count(), 1 + analysis["n_frames"].as_u64().unwrap() as usize);

    let svgs: Vec<String> = fs::read_dir(dir.join("analysis"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|name| name.ends_with(".svg"))
        .collect();
    assert_eq!(svgs.len(), 3, "exactly three plots, got {svgs:?}");
    assert!(svgs.iter().all(|name| name.starts_with("waveform_")));
    for name in &svgs {
        let svg = fs::read_to_string(dir.join("analysis").join(name)).unwrap();
        assert!(svg.contains("<!-- data"), "{name} lacks its data table");
    }

    // Self-comparison: perfect agreement wherever correlation is defined.
    let compare_dir = dir.arg("self_compare");
    let analysis_json = dir.arg("analysis/analysis.json");
    run_ok(&["compare", "--output-dir", &compare_dir, &analysis_json, &analysis_json]);
    let report = gaitkit::io::parse_report_json(
        &fs::read(dir.join("self_compare/comparison.json")).unwrap(),
    )
    .expect("comparison.json parses");
    assert!(!report.parameters.is_empty());
    for row in &report.parameters {
        if let Some(r) = row.pearson_r {
            assert!((r - 1.0).abs() < 1e-12, "{}: r = {r}", row.parameter);
        }
        assert_eq!(row.mae, 0.0, "{}", row.parameter);
        assert_eq!(row.bias, 0.0, "{}", row.parameter);
        assert_eq!(row.loa_low, 0.0, "{}", row.parameter);
        assert_eq!(row.loa_high, 0.0, "{}", row.parameter);
    }
    let csv = fs::read_to_string(dir.join("self_compare/comparison.csv")).unwrap();
    assert!(csv.starts_with("parameter,n,pearson_r,mae,bias,loa_low,loa_high\n"));
    assert_eq!(csv.lines().count(), report.parameters.len() + 1);

    // One Bland-Altman plot per ROM coordinate in the summary.
    for (coordinate, _) in analysis["rom"].as_object().unwrap() {
        let plot = dir.join(&format!("self_compare/bland_altman_{coordinate}.svg"));
        assert!(plot.exists(), "missing {}", plot.display());
        let svg = fs::read_to_string(&plot).unwrap();
        assert_eq!(svg.matches("stroke-dasharray").count(), 2, "two dashed LoA lines");
    }

    // Reference markers through the same analysis, then compared against
    // the noisy pipeline output: agreement stays within loose bounds.
    let ref_dir = dir.arg("ref_analysis");
    analyze(&ref_dir, &dir.arg("reference.trc"), Some(&dir.arg("static.trc")));
    run_ok(&[
        "compare",
        "--output-dir",
        &dir.arg("cross_compare"),
        &dir.arg("ref_analysis/analysis.json"),
        &analysis_json,
    ]);
    let report = gaitkit::io::parse_report_json(
        &fs::read(dir.join("cross_compare/comparison.json")).unwrap(),
    )
    .unwrap();
    for row in &report.parameters {
        match row.parameter.as_str() {
            "stride_time_right" | "stride_time_left" => {
                assert!(row.mae <= 0.02, "{}: mae {}", row.parameter, row.mae);
            }
            "stride_length_right" | "stride_length_left" => {
                assert!(row.mae <= 0.065, "{}: mae {}", row.parameter, row.mae);
            }
            _ => {}
        }
    }
}

#[test]
fn outputs_are_byte_deterministic() {
    let dir = TempDir::new("determinism");
    let other = TempDir::new("determinism_other");
    for d in [&dir, &other] {
        synth(d, &["--n-strides", "2", "--pixel-noise-sd", "2.0", "--dropout-rate", "0.05"]);
    }
    for file in ["calibration.json", "keypoints_cam0.json", "keypoints_cam3.json", "reference.trc"] {
        assert_eq!(
            fs::read(dir.join(file)).unwrap(),
            fs::read(other.join(file)).unwrap(),
            "{file} differs between identical synth runs"
        );
    }

    triangulate(&dir, &dir.arg("markers_a.trc"));
    triangulate(&dir, &dir.arg("markers_b.trc"));
    assert_eq!(
        fs::read(dir.join("markers_a.trc")).unwrap(),
        fs::read(dir.join("markers_b.trc")).unwrap(),
        "triangulation output differs between identical runs"
    );
}

#[test]
fn missing_calibration_exits_2_and_names_the_path() {
    let dir = TempDir::new("missing_calibration");
    let missing = dir.arg("no_such_calibration.json");
    let out = run(&[
        "triangulate",
        "--output-dir",
        dir.0.to_str().unwrap(),
        "--calibration",
        &missing,
        "--keypoints",
        &dir.arg("whatever.json"),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains(&missing), "stderr must name the path: {}", stderr_of(&out));
}

#[test]
fn analyze_without_complete_cycles_reports_it() {
    let dir = TempDir::new("no_cycles");
    synth(&dir, &["--n-strides", "2"]);
    // 1.2 s of walking holds one heel strike per side: events but no
    // same-side pair, hence no complete cycle.
    let text = fs::read_to_string(dir.join("reference.trc")).unwrap();
    let (set, subject) = gaitkit::io::parse_trc(&text).unwrap();
    let short = set.slice(0..120);
    fs::write(
        dir.join("short.trc"),
        gaitkit::io::write_trc(&short, subject.as_ref()),
    )
    .unwrap();
    let out = run(&[
        "analyze",
        "--output-dir",
        &dir.arg("analysis"),
        "--markers",
        &dir.arg("short.trc"),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(
        stderr_of(&out).contains("no complete gait cycles"),
        "unexpected stderr: {}",
        stderr_of(&out)
    );
}

#[test]
fn compare_rejects_mismatched_cycle_counts() {
    let short = TempDir::new("cycles_3");
    let long = TempDir::new("cycles_4");
    synth(&short, &["--n-strides", "3"]);
    synth(&long, &["--n-strides", "4"]);
    analyze(&short.arg("a"), &short.arg("reference.trc"), None);
    analyze(&long.arg("a"), &long.arg("reference.trc"), None);
    let out = run(&[
        "compare",
        "--output-dir",
        &short.arg("cmp"),
        &short.arg("a/analysis.json"),
        &long.arg("a/analysis.json"),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = stderr_of(&out);
    assert!(stderr.contains("pairing"), "{stderr}");
    assert!(stderr.contains("2 right") && stderr.contains("3 right"), "{stderr}");
}

#[test]
fn config_file_drives_the_recipe_and_flags_override_it() {
    let dir = TempDir::new("config");
    let config = dir.join("pipeline.toml");
    fs::write(
        &config,
        format!(
            "output_dir = \"{}\"\n\n[synth.recipe]\nn_strides = 3\nseed = 9\n",
            dir.arg("from_config").replace('\\', "/")
        ),
    )
    .unwrap();
    let stdout = run_ok(&["synth", "--config", config.to_str().unwrap()]);
    assert!(stdout.contains("3 strides"), "{stdout}");
    assert!(stdout.contains("seed 9"), "{stdout}");
    assert!(dir.join("from_config/reference.trc").exists());

    let stdout = run_ok(&["synth", "--config", config.to_str().unwrap(), "--seed", "11"]);
    assert!(stdout.contains("seed 11"), "flag must override config: {stdout}");

    let out = run(&["synth", "--config", &dir.arg("absent.toml")]);
    assert_eq!(out.status.code(), Some(2));
}
