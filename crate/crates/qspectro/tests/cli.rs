//! End-to-end tests of the `qspectro` binary: outputs, exit codes and
//! byte-level reproducibility.

use std::path::Path;
use std::process::{Command, Output};

use qspectro::growth::{gompertz_absorbance, GompertzParams};

fn qspectro(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qspectro"))
        .args(args)
        .output()
        .expect("binary should launch")
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn scenario(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
        .display()
        .to_string()
}

fn write_synthetic_csv(path: &Path, p: &GompertzParams<f64>, dilution: u32) {
    let mut text = String::from("species,time_h,dilution,od,replicate\n");
    for i in 0..=60 {
        let t = 12.0 * i as f64 / 60.0;
        let a = gompertz_absorbance(t, p).unwrap();
        // diluted reading: the physical rule recovers A = d * OD_d
        let od = a / dilution as f64;
        for rep in ["r1", "r2"] {
            text.push_str(&format!("lacto,{t},{dilution},{od},{rep}\n"));
        }
    }
    std::fs::write(path, text).unwrap();
}

#[test]
fn fit_recovers_growth_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("growth.csv");
    let p = GompertzParams::new(9.4, 1.7, 2.9, 0.036).unwrap();
    write_synthetic_csv(&csv, &p, 20);

    let out_dir = dir.path().join("out");
    let out = qspectro(&[
        "fit",
        "--input",
        csv.to_str().unwrap(),
        "--output-dir",
        out_dir.to_str().unwrap(),
        "--dilution-rule",
        "physical",
    ]);
    assert_success(&out);

    let fit: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("fit.json")).unwrap()).unwrap();
    let params = &fit[0]["report"]["params"];
    let a = params["asymptote_a"].as_f64().unwrap();
    let mu = params["rate_mu"].as_f64().unwrap();
    assert!((a - 9.4).abs() / 9.4 < 1e-3, "a = {a}");
    assert!((mu - 1.7).abs() / 1.7 < 1e-3, "mu = {mu}");
    assert!(out_dir.join("manifest.json").exists());
}

#[test]
fn bad_schema_exits_2_with_line_info() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bad.csv");
    std::fs::write(&csv, "species,time_h,dilution,od,replicate\nlacto,zero,1,0.1,r1\n").unwrap();
    let out = qspectro(&[
        "fit",
        "--input",
        csv.to_str().unwrap(),
        "--output-dir",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2"), "stderr: {err}");

    let csv2 = dir.path().join("bad2.csv");
    std::fs::write(&csv2, "species,hour,dilution,od,replicate\n").unwrap();
    let out = qspectro(&[
        "fit",
        "--input",
        csv2.to_str().unwrap(),
        "--output-dir",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

fn run_detect(out_dir: &Path) {
    let out = qspectro(&[
        "detect",
        "--input",
        &scenario("growth_vs_blank.json"),
        "--output-dir",
        out_dir.to_str().unwrap(),
        "--source",
        "coherent",
        "--source",
        "squeezed:1",
        "--t-step",
        "0.25",
    ]);
    assert_success(&out);
}

#[test]
fn detect_outputs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let run1 = dir.path().join("run1");
    let run2 = dir.path().join("run2");
    run_detect(&run1);
    run_detect(&run2);

    for name in ["sweep_coherent.csv", "sweep_squeezed_1.csv", "summary.json"] {
        let a = std::fs::read(run1.join(name)).unwrap();
        let b = std::fs::read(run2.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
        assert!(!a.is_empty());
    }

    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run1.join("summary.json")).unwrap()).unwrap();
    let squeezed = summary["sources"]
        .as_array()
        .unwrap()
        .iter()
        .find(|s| s["source"] == "squeezed_1")
        .unwrap();
    assert_eq!(squeezed["probes_n"].as_u64().unwrap(), 11267);
    assert_eq!(summary["sources"][0]["detection"]["status"], "reached");
    let t = summary["sources"][0]["detection"]["time"].as_f64().unwrap();
    assert!((t - 2.0).abs() < 0.5, "coherent detection at {t}");

    let sweep = std::fs::read_to_string(run1.join("sweep_coherent.csv")).unwrap();
    assert!(sweep.lines().next().unwrap() == "t,tau_star,p_fp,p_fn,p_mean");
    assert_eq!(sweep.lines().count(), 14); // header + 13 grid points
}

#[test]
fn unreachable_target_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let out = qspectro(&[
        "detect",
        "--input",
        &scenario("growth_vs_blank.json"),
        "--output-dir",
        dir.path().to_str().unwrap(),
        "--target",
        "1e-9",
        "--t-step",
        "0.5",
    ]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn discriminate_shows_quantum_advantage() {
    let dir = tempfile::tempdir().unwrap();
    let out = qspectro(&[
        "discriminate",
        "--input",
        &scenario("discrimination.json"),
        "--output-dir",
        dir.path().to_str().unwrap(),
        "--source",
        "coherent",
        "--source",
        "optimal",
        "--t-max",
        "4.4",
        "--t-step",
        "0.2",
    ]);
    assert_success(&out);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap())
            .unwrap();
    let time = |label: &str| {
        summary["sources"]
            .as_array()
            .unwrap()
            .iter()
            .find(|s| s["source"] == label)
            .unwrap()["detection"]["time"]
            .as_f64()
            .unwrap()
    };
    let adv = time("coherent") - time("optimal");
    assert!((adv - 0.5).abs() <= 0.25, "advantage {adv}");
}

fn errorbar_rows(out_dir: &Path, label: &str) -> Vec<(f64, f64, f64, f64)> {
    let text = std::fs::read_to_string(out_dir.join(format!("errorbars_{label}.csv"))).unwrap();
    text.lines()
        .skip(1)
        .map(|l| {
            let v: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
            (v[0], v[1], v[2], v[3])
        })
        .collect()
}

#[test]
fn errorbars_truncate_at_zero_and_scale_with_budget() {
    let dir = tempfile::tempdir().unwrap();
    for (sub, n_tot) in [("a", "150"), ("b", "1500")] {
        let out = qspectro(&[
            "errorbars",
            "--input",
            &scenario("growth_params.json"),
            "--output-dir",
            dir.path().join(sub).to_str().unwrap(),
            "--source",
            "coherent",
            "--n-tot",
            n_tot,
            "--t-min",
            "0",
            "--t-max",
            "3",
            "--t-step",
            "1.5",
        ]);
        assert_success(&out);
    }
    let small = errorbar_rows(&dir.path().join("a"), "coherent");
    let large = errorbar_rows(&dir.path().join("b"), "coherent");

    // at t = 0 the curve sits at the blank level and the bar would dip
    // below zero: it must be clipped and asymmetric instead
    let (_, mean, lo, hi) = small[0];
    assert!(lo >= 0.0);
    assert!((hi - mean) - (mean - lo) > 1e-6, "bar should be asymmetric near zero");

    // far from zero the half-width scales as 1/sqrt(n_tot)
    let (_, m_s, lo_s, hi_s) = small[2];
    let (_, m_l, lo_l, hi_l) = large[2];
    assert!((m_s - m_l).abs() < 1e-12);
    let ratio = (hi_s - lo_s) / (hi_l - lo_l);
    assert!((ratio - 10f64.sqrt()).abs() < 1e-6, "ratio {ratio}");
}

#[test]
fn simulate_agrees_with_analytics() {
    let dir = tempfile::tempdir().unwrap();
    let out = qspectro(&[
        "simulate",
        "--input",
        &scenario("growth_vs_blank.json"),
        "--output-dir",
        dir.path().to_str().unwrap(),
        "--trials",
        "200000",
        "--seed",
        "7",
        "--time",
        "2.0",
    ]);
    assert_success(&out);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("simulation.json")).unwrap())
            .unwrap();
    assert_eq!(report["fp_within_wilson_99"], true);
    assert_eq!(report["fn_within_wilson_99"], true);
    assert_eq!(report["null_mean_within_3se"], true);
}
