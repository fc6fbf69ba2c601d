use std::fs;
use std::process::{Command, Output};

fn hvcg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hvcg")).args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn best_response_prints_example() {
    let out = hvcg(&["best-response", "--values", "1,70,101,102,103", "--colluders", "2,4", "--r", "3"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("items taken by coalition: 1"), "{text}");
    assert!(text.contains("joint utility: 102 (truthful: 64)"), "{text}");
    assert!(text.contains("price 1  welfare 275  revenue 3"), "{text}");
}

#[test]
fn invalid_arguments_exit_with_two() {
    let cases: [&[&str]; 4] = [
        &["best-response", "--values", "1,2", "--colluders", "0,1", "--r", "1"],
        &["objective", "--dist", "lognormal", "--n", "3", "--c", "1", "--r", "2"],
        &["objective", "--n", "3", "--c", "1", "--r", "0"],
        &["objective", "--n", "3", "--c", "1", "--r", "2", "--objective", "profit"],
    ];
    for args in cases {
        let out = hvcg(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn objective_table_marks_best_split() {
    let out = hvcg(&["objective", "--n", "4", "--c", "3", "--r", "3", "--objective", "exact"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 1 + 4);
    assert_eq!(text.matches("<- k*").count(), 1);
}

#[test]
fn simulate_writes_four_rows() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("point.csv");
    let out = hvcg(&[
        "simulate", "--dist", "quadratic", "--n", "6", "--c", "3", "--r", "4", "--k", "2", "--reps", "50", "--seed", "5",
        "--out", path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(&path).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.lines().any(|l| l.starts_with("quadratic,hvcg,6,3,4,50,5,2,")));

    let bad = hvcg(&["simulate", "--n", "3", "--k", "5", "--reps", "10", "--out", path.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn sweep_writes_csv_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let out = hvcg(&[
        "sweep", "--c", "2", "--r", "3", "--n-from", "1", "--n-to", "5", "--reps", "1", "--seed", "3", "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 5 * 4);
    assert!(csv.starts_with("distribution,mechanism,N,C,r,reps,seed,k_star,"));
    for plot in ["welfare.svg", "revenue.svg"] {
        let svg = fs::read_to_string(dir.path().join(plot)).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 4);
    }
}

#[test]
fn quick_verify_passes() {
    let out = hvcg(&["verify", "--quick"]);
    let text = stdout(&out);
    assert!(out.status.success(), "{text}");
    assert!(!text.contains("FAIL"));
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 7);
}
