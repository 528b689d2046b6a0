use std::path::PathBuf;
use std::process::Command;

use mtrate_cli::examples::problem_file;
use mtrate_cli::problem::{Base, NoiseSpec, Options, ProblemFile};
use mtrate_cli::resolve_tol;
use mtrate_core::matlib::SymMatrix;
use mtrate_core::two_terminal::{gap_supremum, normalize};
use proptest::prelude::*;
use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_mtrate"));
    c.env_remove(mtrate_cli::TOL_ENV);
    c
}

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn run(cmd: &mut Command) -> Run {
    let out = cmd.output().expect("binary runs");
    Run {
        code: out.status.code().expect("exited normally"),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

fn temp_file(name: &str, contents: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("mtrate-cli-tests-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    std::fs::write(&path, contents).unwrap();
    path
}

fn example_file(id: u8) -> PathBuf {
    temp_file(&format!("example{id}.json"), &problem_file(id).unwrap().to_json())
}

fn json(r: &Run) -> Value {
    serde_json::from_str(&r.stdout).unwrap_or_else(|e| panic!("bad json ({e}): {}", r.stdout))
}

#[test]
fn closed_form_check_passes_on_second_instance() {
    let f = example_file(2);
    let r = run(bin().args(["check", "--method", "corollary1"]).arg(&f));
    assert_eq!(r.code, 0, "{}", r.stdout);
    assert_eq!(json(&r)["report"]["verdict"], "pass");
}

#[test]
fn diagonal_noise_check_fails_on_second_instance() {
    let f = example_file(2);
    let r = run(bin().args(["check", "--method", "wang-bc"]).arg(&f));
    assert_eq!(r.code, 1);
    let v = json(&r);
    assert_eq!(v["method"], "wang-bc");
    assert_eq!(v["report"]["verdict"], "fail");
}

#[test]
fn closed_form_check_is_not_applicable_when_degraded() {
    let f = example_file(1);
    let r = run(bin().args(["check", "--method", "corollary1"]).arg(&f));
    assert_eq!(r.code, 1);
    assert_eq!(json(&r)["report"]["verdict"], "not-applicable");
}

#[test]
fn certificate_and_structure_checks_pass_on_first_instance() {
    let f = example_file(1);
    for method in ["theorem2", "bd"] {
        let r = run(bin().args(["check", "--method", method]).arg(&f));
        assert_eq!(r.code, 0, "{method}: {}", r.stdout);
    }
    let v = json(&run(bin().args(["check", "--method", "bd"]).arg(&f)));
    assert_eq!(v["structure"]["partition"], serde_json::json!([[1], [2], [3, 4]]));
}

#[test]
fn bad_input_exits_with_two() {
    let asym = temp_file("asym.json", r#"{"sigma_y": [[1.0, 0.5], [0.4, 1.0]], "d": [0.5, 0.5]}"#);
    let unknown = temp_file("unknown.json", r#"{"sigma_y": [[1.0]], "d": [0.5], "extra": 1}"#);
    let missing = temp_file("missing.json", r#"{"sigma_y": [[1.0]], "d": [0.5]}"#);
    for f in [&asym, &unknown] {
        let r = run(bin().arg("solve-bt").arg(f));
        assert_eq!(r.code, 2, "{}", r.stderr);
        assert!(r.stderr.starts_with("mtrate: "));
    }
    let r = run(bin().args(["check", "--method", "wang"]).arg(&missing));
    assert_eq!(r.code, 2);
    let r = run(bin().arg("solve-bt").arg("/nonexistent/problem.json"));
    assert_eq!(r.code, 2);
}

#[test]
fn identity_source_gives_scaled_identity() {
    let f = temp_file(
        "identity.json",
        r#"{"sigma_y": [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], "d": [0.25, 0.25, 0.25]}"#,
    );
    let v = json(&run(bin().args(["--base", "nats", "solve-bt"]).arg(&f)));
    let dt = SymMatrix::from_rows(&serde_json::from_value::<Vec<Vec<f64>>>(v["d_tilde"].clone()).unwrap()).unwrap();
    assert!(dt.max_abs_diff(&SymMatrix::from_diagonal(&[0.25; 3])) < 1e-9);
    let want = 1.5 * 4f64.ln();
    assert!((v["sum_rate"].as_f64().unwrap() - want).abs() < 1e-9);
}

#[test]
fn bits_are_nats_over_ln2() {
    let f = example_file(3);
    let nats = json(&run(bin().args(["--base", "nats", "solve-bt"]).arg(&f)))["sum_rate"].as_f64().unwrap();
    let bits = json(&run(bin().arg("solve-bt").arg(&f)))["sum_rate"].as_f64().unwrap();
    assert!((bits - nats / std::f64::consts::LN_2).abs() < 1e-12);
    assert_eq!(Base::Bits.rate(std::f64::consts::LN_2), 1.0);
}

#[test]
fn block_circulant_flag_matches_generic_solver() {
    let f = example_file(2);
    let generic = json(&run(bin().arg("solve-bt").arg(&f)));
    let closed = json(&run(bin().args(["solve-bt", "--block-circulant"]).arg(&f)));
    assert_eq!(closed["solver"], "block-circulant");
    let (a, b) = (generic["sum_rate"].as_f64().unwrap(), closed["sum_rate"].as_f64().unwrap());
    assert!((a - b).abs() < 1e-7, "{a} vs {b}");

    let r = run(bin().args(["solve-bt", "--block-circulant"]).arg(example_file(1)));
    assert_ne!(r.code, 0);
}

#[test]
fn curves_stay_within_gap_supremum() {
    let (v1, v2, rho, d1, d2) = (1.0, 2.0, -0.6, 0.2, 0.3);
    let r = run(bin().args(["--base", "nats", "curves", "--steps", "50"]).args([
        format!("--v1={v1}"),
        format!("--v2={v2}"),
        format!("--rho={rho}"),
        format!("--d1={d1}"),
        format!("--d2={d2}"),
    ]));
    assert_eq!(r.code, 0, "{}", r.stderr);
    let cov = rho * f64::sqrt(v1 * v2);
    let sigma = SymMatrix::from_row_slice(2, &[v1, cov, cov, v2]).unwrap();
    let sup = gap_supremum(&normalize(&sigma, &SymMatrix::from_diagonal(&[d1, d2])).unwrap());

    let mut reader = csv::Reader::from_reader(r.stdout.as_bytes());
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(
        header,
        ["theta", "r_mu", "r_lb", "r_ub", "lower_bound", "bt_upper", "wagner_composite", "gap"]
    );
    let rows: Vec<Vec<f64>> =
        reader.records().map(|rec| rec.unwrap().iter().map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 50);
    for row in &rows {
        let gap = row[7];
        assert!(gap >= -1e-12 && gap <= sup + 1e-12, "gap {gap} sup {sup}");
        assert!(row[4] <= row[5] + 1e-12, "lower bound above upper bound");
        assert!(row[0].abs() < 1.0, "theta {} outside (-1, 1)", row[0]);
    }
}

#[test]
fn independent_sources_have_no_gap() {
    let r = run(bin().args(["curves", "--rho=0", "--d1=0.5", "--d2=0.5", "--steps", "9"]));
    assert_eq!(r.code, 0, "{}", r.stderr);
    let mut reader = csv::Reader::from_reader(r.stdout.as_bytes());
    let mid: Vec<f64> = reader.records().nth(4).unwrap().unwrap().iter().map(|x| x.parse().unwrap()).collect();
    assert!(mid[0].abs() < 1e-12, "middle of the grid is theta = 0");
    assert!(mid[7].abs() < 1e-12);
}

#[test]
fn bundled_examples_report_expected_exit_codes() {
    for (id, code) in [(1, 0), (2, 1), (3, 0)] {
        let r = run(bin().args(["example", &id.to_string()]));
        assert_eq!(r.code, code, "example {id}: {}", r.stdout);
        let v = json(&r);
        assert_eq!(v["example"], id);
    }
    let v = json(&run(bin().args(["example", "2"])));
    let failed: Vec<&str> = v["checks"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["ok"] == false)
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    assert!(failed.iter().all(|n| n.starts_with("diagonal-noise lhs") || n.ends_with("right side")), "{failed:?}");
}

#[test]
fn search_finds_witness_on_third_instance() {
    let f = example_file(3);
    let r = run(bin().args(["search-noise", "--k", "1", "--budget", "2000"]).arg(&f));
    assert_eq!(r.code, 0, "{}", r.stdout);
    let v = json(&r);
    assert!(v["score"].as_f64().unwrap() > 0.0);
    assert!(v["evaluations"].as_u64().unwrap() <= 2000);
}

#[test]
fn tolerance_precedence() {
    assert_eq!(resolve_tol(Some(1e-3), Some(1e-4), Some("1e-5"), 1e-8).unwrap(), 1e-3);
    assert_eq!(resolve_tol(None, Some(1e-4), Some("1e-5"), 1e-8).unwrap(), 1e-4);
    assert_eq!(resolve_tol(None, None, Some(" 1e-5 "), 1e-8).unwrap(), 1e-5);
    assert_eq!(resolve_tol(None, None, None, 1e-8).unwrap(), 1e-8);
    assert!(resolve_tol(None, None, Some("tiny"), 1e-8).is_err());
    assert!(resolve_tol(Some(-1.0), None, None, 1e-8).is_err());
}

#[test]
fn environment_tolerance_is_honoured() {
    let f = example_file(3);
    let r = run(bin().env("MTRATE_TOL", "nope").args(["check", "--method", "corollary1"]).arg(&f));
    assert_eq!(r.code, 2);
    let r = run(bin().env("MTRATE_TOL", "0.25").args(["check", "--method", "corollary1"]).arg(&f));
    assert_eq!(r.code, 0);
}

#[test]
fn closed_pipe_is_not_a_panic() {
    use std::io::Read;
    use std::process::Stdio;
    let mut child = bin()
        .args(["curves", "--steps", "100000", "--d1=0.5", "--d2=0.5", "--rho=0.3"])
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    drop(child.stdout.take());
    let mut err = String::new();
    child.stderr.take().unwrap().read_to_string(&mut err).unwrap();
    child.wait().unwrap();
    assert!(!err.contains("panicked"), "{err}");
}

fn matrix(n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(-10.0f64..10.0, n * n).prop_map(move |xs| {
        (0..n).map(|i| (0..n).map(|j| if i <= j { xs[i * n + j] } else { xs[j * n + i] }).collect()).collect()
    })
}

fn problem_files() -> impl Strategy<Value = ProblemFile> {
    (1usize..5).prop_flat_map(|n| {
        (
            matrix(n),
            prop::collection::vec(0.01f64..5.0, n),
            prop::option::of((Just(n), matrix(n), Just(Vec::from_iter(1..=n)).prop_shuffle())),
            prop::option::of((prop::option::of(1e-12f64..1.0), prop::option::of(prop_oneof![Just(Base::Bits), Just(Base::Nats)]))),
        )
            .prop_map(|(sigma_y, d, noise, options)| ProblemFile {
                sigma_y,
                d,
                noise: noise.map(|(n, sigma_n, perm)| NoiseSpec { perm, k: n / 2, sigma_n }),
                certificate: None,
                options: options.map(|(tol, base)| Options { tol, base }),
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn problem_files_round_trip(file in problem_files()) {
        let text = file.to_json();
        let back = ProblemFile::from_json(&text).unwrap();
        prop_assert_eq!(&back, &file);
        prop_assert_eq!(back.to_json(), text);
    }
}

#[test]
fn bundled_problem_files_round_trip_and_validate() {
    for id in 1..=3 {
        let file = problem_file(id).unwrap();
        let back = ProblemFile::from_json(&file.to_json()).unwrap();
        assert_eq!(back, file);
        let v = back.validate().unwrap();
        assert_eq!(v.certificate.is_some(), id == 1);
    }
}
