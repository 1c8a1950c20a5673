use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use qord_core::estimation::extract_rotation;
use qord_core::io;
use serde_json::Value;

fn qord(args: &[&str], config: Option<&Path>, out: &Path) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_qord"));
    cmd.args(args).arg("--out").arg(out).arg("--quiet");
    if let Some(c) = config {
        cmd.arg("--config").arg(c);
    }
    cmd.output().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn first_line(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const SMALL: &str = "[experiment]\nn_bins = 40\npair_rate = 5000.0\n";

#[test]
fn grid_bundle_headers_and_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "grid.toml", SMALL);
    let out = dir.path().join("bundle");
    let res = qord(&["grid"], Some(&cfg), &out);
    assert_eq!(code(&res), 0, "{}", stderr(&res));

    assert_eq!(
        first_line(&out.join("fig4_table.csv")),
        "scheme,parameter,concentration_g_per_ml,delta_lambda_nm,lambda1_nm,lambda2_nm,estimate_rad,std_error_rad,prediction_rad,estimate_deg,std_error_deg,prediction_deg,status"
    );
    let table = std::fs::read_to_string(out.join("fig4_table.csv")).unwrap();
    assert_eq!(table.lines().count(), 21);
    assert_eq!(
        first_line(&out.join("counts/psi_quantum_c0.4_dl19_sample.csv")),
        "bin_index,n_hh,n_hv,n_vh,n_vv"
    );

    let lines: Vec<Value> = std::fs::read_to_string(out.join("estimates.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 20);
    let mut keys: Vec<&str> = lines[0].as_object().unwrap().keys().map(String::as_str).collect();
    keys.sort_unstable();
    assert_eq!(
        keys,
        [
            "bias_phase_rad",
            "concentration_g_per_ml",
            "crb_sigma_deg",
            "crb_sigma_rad",
            "delta_lambda_nm",
            "fi_used_per_rad2",
            "lambda1_nm",
            "lambda2_nm",
            "n_bins",
            "n_pairs",
            "n_pairs_reference",
            "parameter",
            "prediction_rad",
            "ratio_to_classical_crb",
            "sample_label",
            "scheme",
            "std_error_combined_rad",
            "std_error_deg",
            "std_error_rad",
            "theta_reference_rad",
            "theta_sample_rad",
            "value_deg",
            "value_rad",
            "visibility",
            "visibility_inconsistent",
        ]
    );

    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "complete");
    let cells = manifest["cells"].as_array().unwrap();
    assert_eq!(cells.len(), 20);
    let mut seen = std::collections::BTreeSet::new();
    for c in cells {
        assert_eq!(c["status"], "ok");
        assert_eq!(c["runs"].as_array().unwrap().len(), 2);
        seen.insert(format!("{}|{}|{}", c["scheme"], c["concentration_g_per_ml"], c["delta_lambda_nm"]));
    }
    assert_eq!(seen.len(), 20);
}

#[test]
fn grid_is_byte_identical_and_seed_sensitive() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "grid.toml", SMALL);
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    assert_eq!(code(&qord(&["grid"], Some(&cfg), &a)), 0);
    assert_eq!(code(&qord(&["grid"], Some(&cfg), &b)), 0);
    assert_eq!(code(&qord(&["grid", "--seed", "77"], Some(&cfg), &c)), 0);
    for file in ["fig4_table.csv", "estimates.jsonl", "manifest.json", "config.json", "counts/phi_quantum_c0.2_dl3_blank.csv"] {
        assert_eq!(std::fs::read(a.join(file)).unwrap(), std::fs::read(b.join(file)).unwrap(), "{file}");
    }
    assert_ne!(
        std::fs::read(a.join("counts/phi_quantum_c0.2_dl3_blank.csv")).unwrap(),
        std::fs::read(c.join("counts/phi_quantum_c0.2_dl3_blank.csv")).unwrap()
    );
    // predictions do not depend on the seed
    let predictions = |dir: &Path| -> Vec<String> {
        let mut r = csv::Reader::from_path(dir.join("fig4_table.csv")).unwrap();
        r.records().map(|rec| rec.unwrap()[8].to_string()).collect()
    };
    assert_eq!(predictions(&a), predictions(&c));
}

#[test]
fn grid_exit_codes_distinguish_partial_and_total_failure() {
    let dir = tempfile::tempdir().unwrap();
    let partial = write_config(dir.path(), "p.toml", &format!("{SMALL}[grid]\ndelta_lambda_nm = [5.0, 25.0]\n"));
    let res = qord(&["grid"], Some(&partial), &dir.path().join("p"));
    assert_eq!(code(&res), 2, "{}", stderr(&res));
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("p/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "partial");
    assert_eq!(manifest["n_failed"], 4);

    let total = write_config(dir.path(), "t.toml", &format!("{SMALL}[grid]\ndelta_lambda_nm = [25.0]\n"));
    assert_eq!(code(&qord(&["grid"], Some(&total), &dir.path().join("t"))), 3);
}

#[test]
fn invalid_config_reports_line_and_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", "[experiment]\nseed = 4\nvisibility = 1.5\n");
    let res = qord(&["fisher"], Some(&cfg), &dir.path().join("o"));
    assert_eq!(code(&res), 1);
    assert!(stderr(&res).contains("bad.toml:3:"), "{}", stderr(&res));
    // nothing is written when validation fails
    assert!(!dir.path().join("o/fi_curve.csv").exists());

    let cfg = write_config(dir.path(), "typo.toml", "[fisher]\npoints = 11\nhalf_widht_deg = 3\n");
    let res = qord(&["fisher"], Some(&cfg), &dir.path().join("o"));
    assert_eq!(code(&res), 1);
    assert!(stderr(&res).contains("typo.toml:3:"), "{}", stderr(&res));

    let res = qord(&["fisher", "--no-such-flag"], None, &dir.path().join("o"));
    assert_eq!(code(&res), 1);
}

fn fisher(dir: &Path, visibility: f64) -> (Value, Vec<[f64; 4]>) {
    let cfg = write_config(dir, &format!("f{visibility}.toml"), &format!("[experiment]\nvisibility = {visibility}\n"));
    let out = dir.join(format!("f{visibility}"));
    let res = qord(&["fisher"], Some(&cfg), &out);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    assert_eq!(first_line(&out.join("fi_curve.csv")), "delta_alpha_rad,fi_exp,fi_quantum_ideal,fi_classical_ideal");
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(out.join("fisher_summary.json")).unwrap()).unwrap();
    let rows = csv::Reader::from_path(out.join("fi_curve.csv"))
        .unwrap()
        .deserialize::<[f64; 4]>()
        .map(Result::unwrap)
        .collect();
    (summary, rows)
}

#[test]
fn fisher_examples() {
    let dir = tempfile::tempdir().unwrap();
    let (s, _) = fisher(dir.path(), 1.0);
    assert_eq!(format!("{:.3}", s["enhancement_ratio"].as_f64().unwrap()), "2.000");

    let (s, _) = fisher(dir.path(), 0.92);
    assert_eq!(format!("{:.3}", s["max_fi_exp"].as_f64().unwrap()), "3.386");
    assert!((s["break_even_visibility"].as_f64().unwrap() - 0.5f64.sqrt()).abs() < 1e-9);

    let (s, rows) = fisher(dir.path(), 0.5);
    assert!(rows.iter().all(|r| r[1] < r[3]));
    assert_eq!(s["fraction_above_classical"].as_f64().unwrap(), 0.0);
}

#[test]
fn simulate_then_estimate_matches_library_and_injection() {
    let dir = tempfile::tempdir().unwrap();
    let base = "[experiment]\nvisibility = 0.925\n";
    let sample = write_config(
        dir.path(),
        "s.toml",
        &format!("{base}[simulate]\nscheme = \"phi_quantum\"\nconcentration_g_per_ml = 0.4\ndelta_lambda_nm = 11\nlabel = \"sucrose\"\n"),
    );
    let blank = write_config(
        dir.path(),
        "b.toml",
        &format!("{base}[simulate]\nscheme = \"phi_quantum\"\ndelta_lambda_nm = 11\nlabel = \"water\"\n"),
    );
    let data = dir.path().join("data");
    assert_eq!(code(&qord(&["simulate"], Some(&sample), &data)), 0);
    assert_eq!(code(&qord(&["simulate", "--seed", "2"], Some(&blank), &data)), 0);
    assert!(data.join("sucrose.meta.json").exists());

    let est = write_config(
        dir.path(),
        "e.toml",
        "[estimate]\npairs = [{ reference = \"data/water.csv\", sample = \"data/sucrose.csv\" }]\n",
    );
    let res = qord(&["estimate"], Some(&est), &dir.path().join("est"));
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let line: Value = serde_json::from_str(std::fs::read_to_string(dir.path().join("est/estimates.jsonl")).unwrap().trim()).unwrap();

    // the CLI adds no numerics of its own
    let reference = io::read_counts(&data.join("water.csv")).unwrap();
    let sucrose = io::read_counts(&data.join("sucrose.csv")).unwrap();
    let direct = extract_rotation(&reference, &sucrose, 0.925).unwrap().record();
    assert_eq!(line, serde_json::to_value(&direct).unwrap());

    // injected mean rotation at c = 0.4 g/ml, 11 nm separation
    let truth = 2.7304;
    let value = line["value_deg"].as_f64().unwrap();
    let sigma = line["std_error_combined_rad"].as_f64().unwrap().to_degrees();
    assert!((value - truth).abs() < 4.0 * sigma, "{value} vs {truth} ± {sigma}");
}

#[test]
fn estimate_rejects_bad_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    for (name, delta) in [("a", 3), ("b", 7)] {
        let cfg = write_config(
            dir.path(),
            &format!("{name}.toml"),
            &format!("[experiment]\nn_bins = 5\n[simulate]\ndelta_lambda_nm = {delta}\nlabel = \"{name}\"\n"),
        );
        assert_eq!(code(&qord(&["simulate"], Some(&cfg), &data)), 0);
    }
    // mismatched wavelengths between blank and sample
    let cfg = write_config(dir.path(), "e.toml", "[estimate]\npairs = [{ reference = \"data/a.csv\", sample = \"data/b.csv\" }]\n");
    let res = qord(&["estimate"], Some(&cfg), &dir.path().join("o"));
    assert_eq!(code(&res), 1);
    assert!(stderr(&res).contains("wavelength mismatch"), "{}", stderr(&res));

    // empty counts file
    std::fs::write(data.join("empty.csv"), "").unwrap();
    std::fs::copy(data.join("a.meta.json"), data.join("empty.meta.json")).unwrap();
    let cfg = write_config(dir.path(), "e2.toml", "[estimate]\npairs = [{ reference = \"data/a.csv\", sample = \"data/empty.csv\" }]\n");
    let res = qord(&["estimate"], Some(&cfg), &dir.path().join("o"));
    assert_eq!(code(&res), 1);
    assert!(stderr(&res).contains("empty.csv"), "{}", stderr(&res));

    // schema violation names file and field
    std::fs::write(data.join("bad.csv"), "bin_index,n_hh,n_hv,n_vh,n_vv\n0,1,2,-3,4\n").unwrap();
    std::fs::copy(data.join("a.meta.json"), data.join("bad.meta.json")).unwrap();
    let cfg = write_config(dir.path(), "e3.toml", "[estimate]\npairs = [{ reference = \"data/a.csv\", sample = \"data/bad.csv\" }]\n");
    let res = qord(&["estimate"], Some(&cfg), &dir.path().join("o"));
    assert_eq!(code(&res), 1);
    let err = stderr(&res);
    assert!(err.contains("bad.csv") && err.contains("n_vh"), "{err}");

    // estimate without pairs is a configuration error
    let res = qord(&["estimate"], None, &dir.path().join("o"));
    assert_eq!(code(&res), 1);
}

#[test]
fn calibrate_and_diagnose_write_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "[experiment]\nvisibility = 0.914\n[calibrate]\nsettings = 12\nbins_per_setting = 5\n");
    let res = qord(&["calibrate"], Some(&cfg), &dir.path().join("cal"));
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let curve: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("cal/calibration.json")).unwrap()).unwrap();
    let v = curve["visibility"].as_f64().unwrap();
    let se = curve["visibility_se"].as_f64().unwrap();
    assert!((v - 0.914).abs() < 4.0 * se, "{v} ± {se}");
    assert_eq!(curve["channels"].as_array().unwrap().len(), 4);

    let cfg = write_config(dir.path(), "d.toml", "[experiment]\nn_bins = 40\n");
    let res = qord(&["diagnose"], Some(&cfg), &dir.path().join("noise"));
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let path = dir.path().join("noise/noise.csv");
    assert_eq!(
        first_line(&path),
        "source,channel,mean,variance,fano,fano_sigma,overdispersed,consistent_with_poisson"
    );
    assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 1 + 160);
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            qord_core::config::Config::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert!(n >= 6);
}
