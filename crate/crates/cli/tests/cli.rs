use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

use fibercurv::families::FamilySpec;
use fibercurv::grid::FdConfig;
use fibercurv_cli::{RunInput, EXIT_FAIL, EXIT_INVALID, EXIT_PASS};

fn input(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("inputs").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fibercurv"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_input(cmd: &str, file: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--input", file.to_str().unwrap()];
    args.extend_from_slice(extra);
    run(&args)
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_temp(dir: &tempfile::TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn block_sups(level: &Value) -> Vec<f64> {
    ["fiber", "mixed", "base", "scalar"]
        .iter()
        .map(|b| level[b]["sup"].as_f64().unwrap())
        .collect()
}

#[test]
fn flat_product_check_passes_at_rounding_level() {
    let out = run_input("check", &input("flat_product.json"), &[]);
    assert_eq!(out.status.code(), Some(EXIT_PASS), "{}", stderr(&out));
    let v = json(&out);
    assert_eq!(v["status"], "pass");
    for level in v["levels"].as_array().unwrap() {
        assert!(block_sups(level).iter().all(|&s| s <= 1e-10));
    }
}

#[test]
fn kasner_with_invalid_traces_is_invalid_input() {
    let out = run_input("check", &input("kasner_invalid.json"), &[]);
    assert_eq!(out.status.code(), Some(EXIT_INVALID));
    assert!(stderr(&out).contains("Tr A"), "{}", stderr(&out));
}

#[test]
fn kasner_fine_grid_check_passes() {
    let out = run_input("check", &input("kasner_257.json"), &[]);
    assert_eq!(out.status.code(), Some(EXIT_PASS), "{}", stderr(&out));
}

#[test]
fn random_metric_check_fails_with_exit_one() {
    let out = run_input("check", &input("random.json"), &[]);
    assert_eq!(out.status.code(), Some(EXIT_FAIL));
    assert_eq!(json(&out)["status"], "fail");
}

#[test]
fn malformed_json_names_offending_key() {
    let dir = tempfile::tempdir().unwrap();
    let bad_type = write_temp(
        &dir,
        "bad_type.json",
        r#"{"family": {"name": "flat_product", "base_dim": 1, "fiber_dim": 1},
            "chart": {"ranges": [[0.0, 1.0]], "points": ["many"]}}"#,
    );
    let out = run_input("check", &bad_type, &[]);
    assert_eq!(out.status.code(), Some(EXIT_INVALID));
    assert!(stderr(&out).contains("chart.points"), "{}", stderr(&out));

    let unknown = write_temp(
        &dir,
        "unknown.json",
        r#"{"family": {"name": "boundary_model"}, "chart": {"ranges": [[0, 1], [0.1, 1]], "points": [9, 9]},
            "tolerances": 1e-3}"#,
    );
    let out = run_input("check", &unknown, &[]);
    assert_eq!(out.status.code(), Some(EXIT_INVALID));
    assert!(stderr(&out).contains("tolerances"), "{}", stderr(&out));

    let truncated = write_temp(&dir, "truncated.json", r#"{"family": {"#);
    assert_eq!(run_input("check", &truncated, &[]).status.code(), Some(EXIT_INVALID));

    let missing = dir.path().join("absent.json");
    assert_eq!(run_input("check", &missing, &[]).status.code(), Some(EXIT_INVALID));
}

#[test]
fn flag_validation() {
    let f = input("flat_product.json");
    assert_eq!(run_input("check", &f, &["--fd-order", "3"]).status.code(), Some(EXIT_INVALID));
    assert_eq!(run_input("check", &f, &["--levels", "5"]).status.code(), Some(EXIT_INVALID));
    assert_eq!(run_input("check", &f, &["--tol", "-1"]).status.code(), Some(EXIT_INVALID));
    assert_eq!(run_input("convergence", &f, &["--levels", "1"]).status.code(), Some(EXIT_INVALID));
    assert_eq!(run_input("check", &f, &["--levels", "1"]).status.code(), Some(EXIT_INVALID));
    let out = run_input("check", &f, &["--levels", "1", "--tol", "1e-12", "--fd-order", "2"]);
    assert_eq!(out.status.code(), Some(EXIT_PASS));
    let v = json(&out);
    assert_eq!(v["fd_order"], 2);
    assert_eq!(v["tolerance_source"], "explicit");
}

#[test]
fn lambda_flag_shifts_residual() {
    let out = run_input(
        "check",
        &input("flat_product.json"),
        &["--lambda", "-0.5", "--levels", "1", "--tol", "1e-9"],
    );
    assert_eq!(out.status.code(), Some(EXIT_FAIL));
    let v = json(&out);
    assert_eq!(v["lambda"], -0.5);
    // Ric = 0 and g = Id: fiber block residual is 0.5, scalar 4 · 0.5.
    let sups = block_sups(&v["levels"][0]);
    assert!((sups[0] - 0.5).abs() < 1e-15 && (sups[3] - 2.0).abs() < 1e-15, "{sups:?}");
}

#[test]
fn output_is_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for p in [&a, &b] {
        let out = run_input("identities", &input("semiflat_solved.json"), &["--out", p.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(EXIT_PASS));
        assert!(out.stdout.is_empty());
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

fn csv_rows(out: &Output) -> Vec<Vec<String>> {
    let text = String::from_utf8(out.stdout.clone()).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("level,h,fiber_sup,mixed_sup,base_sup,scalar_sup,order_estimate")
    );
    lines.map(|l| l.split(',').map(str::to_string).collect()).collect()
}

fn last_order(rows: &[Vec<String>]) -> String {
    rows.last().unwrap()[6].clone()
}

#[test]
fn convergence_flat_product_is_exact() {
    let out = run_input("convergence", &input("flat_product.json"), &[]);
    assert_eq!(out.status.code(), Some(EXIT_PASS));
    let rows = csv_rows(&out);
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0][6], "");
    assert!(rows[1..].iter().all(|r| r[6] == "exact"));
}

#[test]
fn convergence_kasner_reaches_fourth_order() {
    for file in ["kasner.json", "kasner_rotated.json"] {
        let out = run_input("convergence", &input(file), &[]);
        assert_eq!(out.status.code(), Some(EXIT_PASS), "{file}");
        let rows = csv_rows(&out);
        let order: f64 = last_order(&rows).parse().unwrap();
        assert!(order >= 3.5, "{file}: {order}");
        // 17 significant digits, '.' decimal separator
        let h = &rows[0][1];
        assert_eq!(h.split('e').next().unwrap().len(), 18, "{h}");
        assert_eq!(h.parse::<f64>().unwrap(), 1.0 / 32.0);
    }
    let out = run_input("convergence", &input("kasner.json"), &["--fd-order", "2", "--levels", "4"]);
    assert_eq!(out.status.code(), Some(EXIT_PASS));
    let order: f64 = last_order(&csv_rows(&out)).parse().unwrap();
    assert!((order - 2.0).abs() < 0.1, "{order}");
}

#[test]
fn convergence_semiflat_solved() {
    let out = run_input("convergence", &input("semiflat_solved.json"), &[]);
    assert_eq!(out.status.code(), Some(EXIT_PASS), "{}", stderr(&out));
    let order: f64 = last_order(&csv_rows(&out)).parse().unwrap();
    assert!(order >= 3.5, "{order}");
}

#[test]
fn convergence_non_einstein_fails() {
    let out = run_input("convergence", &input("random.json"), &[]);
    assert_eq!(out.status.code(), Some(EXIT_FAIL));
}

fn report<'a>(v: &'a Value, name: &str) -> &'a Value {
    v["reports"]
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["name"] == name)
        .unwrap_or_else(|| panic!("no report {name}"))
}

#[test]
fn identities_random_skips_conditional_checks() {
    let out = run_input("identities", &input("random.json"), &[]);
    assert_eq!(out.status.code(), Some(EXIT_PASS), "{}", stderr(&out));
    let v = json(&out);
    assert_eq!(v["einstein"], false);
    for name in ["grad_sqrt_det_g", "laplacian_sqrt_det_g"] {
        assert_eq!(report(&v, name)["status"], "pass");
    }
    for name in ["subharmonicity", "harmonic_map", "twist_constancy", "conformality"] {
        assert_eq!(report(&v, name)["status"], "not-applicable");
    }
}

#[test]
fn identities_semiflat_all_pass() {
    let out = run_input("identities", &input("semiflat_solved.json"), &[]);
    assert_eq!(out.status.code(), Some(EXIT_PASS), "{}", stderr(&out));
    let v = json(&out);
    let reports = v["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 7);
    assert!(reports.iter().all(|r| r["status"] == "pass"));
}

#[test]
fn identities_boundary_model_emits_det_profile() {
    let out = run_input("identities", &input("boundary_model.json"), &[]);
    assert_eq!(out.status.code(), Some(EXIT_PASS), "{}", stderr(&out));
    let v = json(&out);
    let p = &v["det_g_profile"];
    let b2 = p["b2"].as_array().unwrap();
    let det = p["det_g"].as_array().unwrap();
    assert_eq!(b2.len(), 33);
    assert_eq!(b2[0].as_f64(), Some(0.1));
    for (y, d) in b2.iter().zip(det) {
        let (y, d) = (y.as_f64().unwrap(), d.as_f64().unwrap());
        assert!((d - y * y).abs() <= 1e-12);
    }
    assert_eq!(report(&v, "harmonic_map")["status"], "not-applicable");
    assert_eq!(report(&v, "twist_constancy")["status"], "pass");
}

#[test]
fn family_output_round_trips_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let tab = dir.path().join("tab.json");
    let out = run_input("family", &input("random.json"), &["--out", tab.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(EXIT_PASS));

    let doc = RunInput::from_path(&tab).unwrap();
    let chart = doc.chart.as_ref().unwrap().to_chart().unwrap();
    let parsed = doc.tabulated.as_ref().unwrap().to_metric(&chart).unwrap();
    let src = RunInput::from_path(&input("random.json")).unwrap();
    let family: FamilySpec = src.family.unwrap();
    let built = family.build(&chart, &FdConfig::fourth()).unwrap();
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(parsed.fiber_metric().values()), bits(built.fiber_metric().values()));
    assert_eq!(bits(parsed.connection().values()), bits(built.connection().values()));
    assert_eq!(bits(parsed.base().field().values()), bits(built.base().field().values()));

    // Same residual report from the tabulated and the family document.
    let args = ["--levels", "1", "--tol", "1"];
    let a = json(&run_input("check", &tab, &args));
    let b = json(&run_input("check", &input("random.json"), &args));
    assert_eq!(a["levels"], b["levels"]);
}

#[test]
fn tabulated_shape_mismatch_is_invalid() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"{
        "tabulated": {
            "fiber_metric": {"shape": [5, 1, 1], "data": [1, 1, 1, 1, 1]},
            "connection": {"shape": [5, 1, 1], "data": [0, 0, 0, 0, 0]},
            "base_metric": {"shape": [4, 1, 1], "data": [1, 1, 1, 1]}
        },
        "chart": {"ranges": [[0, 1]], "points": [5]},
        "tolerance": 1e-9
    }"#;
    let p = write_temp(&dir, "tab.json", text);
    let out = run_input("check", &p, &[]);
    assert_eq!(out.status.code(), Some(EXIT_INVALID));
    assert!(stderr(&out).contains("base_metric"), "{}", stderr(&out));
    // refining tabulated data is impossible
    let ok = write_temp(&dir, "ok.json", &text.replace("[4, 1, 1], \"data\": [1, 1, 1, 1]", "[5, 1, 1], \"data\": [1, 1, 1, 1, 1]"));
    assert_eq!(run_input("check", &ok, &["--fd-order", "2"]).status.code(), Some(EXIT_PASS));
    assert_eq!(run_input("check", &ok, &["--levels", "2"]).status.code(), Some(EXIT_INVALID));
}

#[test]
fn solve_conformal_factor() {
    let out = run_input("solve", &input("semiflat_solved.json"), &[]);
    assert_eq!(out.status.code(), Some(EXIT_PASS), "{}", stderr(&out));
    let v = json(&out);
    assert_eq!(v["ricci_form"]["status"], "pass");
    assert_eq!(v["phi"]["shape"], serde_json::json!([33, 33]));
    assert!(v["relative_residual"].as_f64().unwrap() <= 1e-12);
}

#[test]
fn solve_ode_recovers_kasner_matrix() {
    let out = run_input("solve", &input("ode_quadratic.json"), &[]);
    assert_eq!(out.status.code(), Some(EXIT_PASS), "{}", stderr(&out));
    let v = json(&out);
    let s = &v["structure"];
    assert_eq!(s["branch"], "quadratic");
    assert!((s["trace_a"].as_f64().unwrap() - 2.0).abs() < 1e-6);
    assert!((s["trace_a2"].as_f64().unwrap() - 4.0).abs() < 1e-6);
    assert!(v["conserved_drift"].as_f64().unwrap() < 1e-8);
}

#[test]
fn solve_ode_constant_branch_with_enforcement() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"{"ode": {
        "s0": 1.0, "s1": 2.0,
        "g0": [[2.0, 0.3], [0.3, 1.0]],
        "gs0": [[0.4, -0.1], [-0.1, 0.2]],
        "step": 0.01, "branch": "constant_det", "enforce": true}}"#;
    let p = write_temp(&dir, "ode.json", text);
    let out = run_input("solve", &p, &[]);
    assert_eq!(out.status.code(), Some(EXIT_PASS), "{}", stderr(&out));
    let v = json(&out);
    assert!(v["max_slope"].as_f64().unwrap() <= 1e-8);
}

#[test]
fn solve_without_problem_is_invalid() {
    let out = run_input("solve", &input("flat_product.json"), &[]);
    assert_eq!(out.status.code(), Some(EXIT_INVALID));
}
