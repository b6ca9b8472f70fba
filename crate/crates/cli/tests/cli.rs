use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn specshrink(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_specshrink"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = specshrink(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn simulate_is_deterministic_per_seed() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    ok(&["simulate", "--out", "a.mts", "--trials", "3", "--seed", "11"], d);
    ok(&["simulate", "--out", "b.mts", "--trials", "3", "--seed", "11"], d);
    ok(&["simulate", "--out", "c.mts", "--trials", "3", "--seed", "12"], d);
    let a = fs::read(d.join("a.mts")).unwrap();
    assert_eq!(a, fs::read(d.join("b.mts")).unwrap());
    assert_ne!(a, fs::read(d.join("c.mts")).unwrap());
    assert_eq!(&a[..4], b"MTS1");
}

#[test]
fn zero_trials_is_a_single_line_error() {
    let dir = TempDir::new().unwrap();
    let out = specshrink(&["simulate", "--out", "x.mts", "--trials", "0"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert_eq!(stderr.lines().count(), 1, "{stderr}");
    assert!(stderr.starts_with("error: "));
    assert!(!dir.path().join("x.mts").exists());
}

#[test]
fn fixed_unit_weight_matches_the_var_method() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    ok(&["simulate", "--out", "s.mts", "--trials", "8", "--samples", "128", "--seed", "5"], d);
    ok(&["estimate", "--input", "s.mts", "--method", "var", "--out-dir", "var"], d);
    ok(
        &["estimate", "--input", "s.mts", "--method", "shrinkage", "--fixed", "--weight", "1.0", "--out-dir", "shr"],
        d,
    );
    for file in ["spectra.csv", "cross_spectra.csv"] {
        assert_eq!(
            fs::read_to_string(d.join("var").join(file)).unwrap(),
            fs::read_to_string(d.join("shr").join(file)).unwrap()
        );
    }
    let weights = read_csv(&d.join("shr/weights.csv"));
    assert_eq!(weights.len(), 65);
    assert!(weights.iter().all(|r| r[5] == "1.00000000000"));
    let report = fs::read_to_string(d.join("shr/fit_report.txt")).unwrap();
    assert!(report.contains("weight: fixed 1"), "{report}");
}

#[test]
fn fixed_weight_is_rejected_for_other_methods() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    ok(&["simulate", "--out", "s.mts", "--trials", "4", "--samples", "64"], d);
    let out = specshrink(&["estimate", "--input", "s.mts", "--method", "var", "--fixed", "--out-dir", "o"], d);
    assert!(!out.status.success());
    assert!(!d.join("o").exists());
}

#[test]
fn white_noise_csv_input_gives_flat_spectra() {
    use rand::{rngs::StdRng, Rng, SeedableRng};
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let mut rng = StdRng::seed_from_u64(1);
    let mut csv = String::from("trial,channel,time,value\n");
    let (n, p, t) = (60, 2, 128);
    for trial in 0..n {
        for ch in 0..p {
            for s in 0..t {
                let u: f64 = (0..12).map(|_| rng.random::<f64>()).sum::<f64>() - 6.0;
                csv.push_str(&format!("{trial},{ch},{s},{u}\n"));
            }
        }
    }
    fs::write(d.join("wn.csv"), csv).unwrap();
    for method in ["raw", "smoothed", "multitaper", "var", "shrinkage"] {
        let out_dir = format!("wn_{method}");
        ok(
            &["estimate", "--input", "wn.csv", "--csv-sampling-rate", "128", "--method", method, "--out-dir", &out_dir],
            d,
        );
        let rows = read_csv(&d.join(&out_dir).join("spectra.csv"));
        assert_eq!(rows.len(), 65 * p);
        let level = 1.0 / (2.0 * std::f64::consts::PI);
        let mean = rows.iter().map(|r| r[2].parse::<f64>().unwrap()).sum::<f64>() / rows.len() as f64;
        assert!((mean / level - 1.0).abs() < 0.1, "{method}: {mean}");
        assert_eq!(rows[2][0], "1.00000000000");
    }
}

#[test]
fn truncated_input_fails_cleanly_without_outputs() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    ok(&["simulate", "--out", "s.mts", "--trials", "3", "--samples", "64"], d);
    let bytes = fs::read(d.join("s.mts")).unwrap();
    fs::write(d.join("cut.mts"), &bytes[..bytes.len() - 5]).unwrap();
    let out = specshrink(&["estimate", "--input", "cut.mts", "--out-dir", "o"], d);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("byte "), "{stderr}");
    assert_eq!(stderr.lines().count(), 1);
    assert!(!d.join("o").exists());
}

#[test]
fn identical_conditions_give_zero_statistics() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    ok(&["simulate", "--out", "s.mts", "--trials", "6", "--samples", "128", "--seed", "2"], d);
    let stdout = ok(
        &["connectivity", "--input", "s.mts", "--input", "s.mts", "--span", "7", "--order", "2", "--out-dir", "c"],
        d,
    );
    assert!(stdout.contains("0 test(s) rejected"), "{stdout}");
    let tests = read_csv(&d.join("c/tests.csv"));
    assert_eq!(tests.len(), 2 * 66);
    for row in &tests {
        assert_eq!(row[6], "0");
        assert_eq!(row[8], "false");
    }
    let pc = read_csv(&d.join("c/partial_coherence.csv"));
    assert_eq!(pc.len(), 2 * 2 * 144);
}

#[test]
fn connectivity_rejects_mismatched_channels() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    ok(&["simulate", "--out", "s.mts", "--trials", "4", "--samples", "64"], d);
    fs::write(
        d.join("two.csv"),
        (0..4)
            .flat_map(|n| (0..2).flat_map(move |c| (0..64).map(move |t| format!("{n},{c},{t},{}\n", (t * (c + 1)) as f64 % 7.0))))
            .fold(String::from("trial,channel,time,value\n"), |acc, l| acc + &l),
    )
    .unwrap();
    let out = specshrink(&["connectivity", "--input", "s.mts", "--input", "two.csv", "--out-dir", "c"], d);
    assert!(!out.status.success());
    assert!(String::from_utf8(out.stderr).unwrap().contains("channel mismatch"));
    assert!(!d.join("c").exists());
}

#[test]
fn compare_single_replicate_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let args = |out: &'static str| {
        vec!["compare", "--reps", "1", "--trials", "6", "--samples", "64", "--seed", "9", "--out-dir", out]
    };
    ok(&args("r1"), d);
    ok(&args("r2"), d);
    for file in ["mse_spectral.csv", "mse_pcoh.csv", "mean_weight.csv", "integrated_mse.csv"] {
        assert_eq!(
            fs::read(d.join("r1").join(file)).unwrap(),
            fs::read(d.join("r2").join(file)).unwrap(),
            "{file}"
        );
    }
    let rows = read_csv(&d.join("r1/mse_spectral.csv"));
    assert_eq!(rows.len(), 33);
    assert!(rows.iter().all(|r| r[1] == "0"));
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    ok(&["simulate", "--out", "s.mts", "--trials", "5", "--samples", "64"], d);
    fs::write(d.join("run.cfg"), "# test run\nmethod = smoothed\nspan_max = 5\nout_dir = from_cfg\n").unwrap();
    ok(&["estimate", "--config", "run.cfg", "--input", "s.mts"], d);
    let report = fs::read_to_string(d.join("from_cfg/fit_report.txt")).unwrap();
    assert!(report.starts_with("method: smoothed"));
    let spans = report.lines().find(|l| l.starts_with("spans:")).unwrap();
    assert!(spans.split_whitespace().skip(1).all(|s| s == "3" || s == "5"), "{spans}");
    ok(&["estimate", "--config", "run.cfg", "--input", "s.mts", "--method", "raw", "--out-dir", "flag"], d);
    assert!(fs::read_to_string(d.join("flag/fit_report.txt")).unwrap().starts_with("method: raw"));
}
