use std::path::Path;
use std::process::{Command, Output};

use hgm_cli::{parse_csv_table, table_row, Estimator, TableSpec};
use hgm_core::families::{orthant, p_simplex, Family};
use hgm_core::HalfspaceSystem;

fn hgm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hgm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout)
        .unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

#[test]
fn prob_on_triangle_file() {
    let dir = tempfile::tempdir().unwrap();
    let file = write(dir.path(), "p2.json", &p_simplex(2).to_json());
    let out = hgm(&["prob", &file]);
    assert!(out.status.success());
    let v = json(&out);
    assert!((v["probability"].as_f64().unwrap() - 0.285205).abs() < 5e-4);
    assert_eq!(v["method"], "bounded");

    let csv = write(dir.path(), "p2.csv", &p_simplex(2).to_csv());
    let from_csv = json(&hgm(&["prob", &csv, "--rel-tol", "1e-10"]));
    assert!((from_csv["probability"].as_f64().unwrap() - 0.285205).abs() < 5e-4);
}

#[test]
fn prob_orthant_by_cone_method() {
    let dir = tempfile::tempdir().unwrap();
    let file = write(dir.path(), "orthant.json", &orthant(2).to_json());
    let out = hgm(&["prob", &file, "--method", "cone"]);
    assert!(out.status.success());
    assert!((json(&out)["probability"].as_f64().unwrap() - 0.25).abs() < 1e-10);
}

#[test]
fn prob_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(
        dir.path(),
        "bad.json",
        "{\"d\": 2, \"n\": 1, \"a\": [[1.0]]",
    );
    let out = hgm(&["prob", &bad]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out)["error"], "parse");

    let zero = write(dir.path(), "zero.csv", "0,0,1\n1,0,1\n");
    assert_eq!(hgm(&["prob", &zero]).status.code(), Some(2));

    // a strip is neither bounded nor a simplicial cone
    let strip =
        HalfspaceSystem::from_rows(&[vec![1.0, -1.0], vec![0.0, 0.0]], &[1.0, 1.0]).unwrap();
    let file = write(dir.path(), "strip.json", &strip.to_json());
    let out = hgm(&["prob", &file]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(json(&out)["error"], "no_applicable_method");

    let tri = write(dir.path(), "p2.json", &p_simplex(2).to_json());
    assert_eq!(
        hgm(&["prob", &tri, "--method", "cone"]).status.code(),
        Some(3)
    );
}

#[test]
fn table_csv_round_trips() {
    let out = hgm(&[
        "table",
        "--family",
        "C",
        "--d-min",
        "2",
        "--d-max",
        "4",
        "--samples",
        "20000",
        "--seed",
        "3",
        "--format",
        "csv",
    ]);
    assert!(out.status.success());
    let rows = parse_csv_table(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(rows.iter().map(|r| r.d).collect::<Vec<_>>(), vec![2, 3, 4]);
    assert!((rows[0].hgm.unwrap() - 0.580822).abs() < 1e-3);
    let mut spec = TableSpec::new(Family::C, 2, 4);
    spec.mc_samples = 20_000;
    spec.seed = 3;
    for r in &rows {
        assert!(
            r.same_values(&table_row(&spec, r.d)),
            "row {} not reproduced",
            r.d
        );
    }
}

#[test]
fn table_markdown_and_json() {
    let md = hgm(&[
        "table",
        "--family",
        "Q",
        "--d-max",
        "4",
        "--methods",
        "hgm",
        "--format",
        "md",
    ]);
    let text = String::from_utf8(md.stdout).unwrap();
    assert!(
        text.contains("| 2 | 5.1758e-02 |") && text.contains("| 3 | 7.0235e-03 |"),
        "{text}"
    );

    let js = hgm(&[
        "table",
        "--family",
        "P",
        "--d-max",
        "3",
        "--estimators",
        "hgm,quad",
        "--format",
        "json",
    ]);
    let rows = json(&js);
    assert_eq!(rows.as_array().unwrap().len(), 2);
    let row = &rows[1];
    assert!((row["hgm"].as_f64().unwrap() - row["quad"].as_f64().unwrap()).abs() < 1e-6);
    assert!(row["mc"].is_null());

    let mut spec = TableSpec::new(Family::P, 2, 3);
    spec.estimators = vec![Estimator::Hgm];
    assert!(table_row(&spec, 2).mc.is_none());
}

#[test]
fn table_rejects_large_dimension() {
    let out = hgm(&["table", "--family", "P", "--d-max", "13"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn check_passes_restricted_and_perturbed() {
    let out = hgm(&["check", "--d-max", "3"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(out.status.success(), "{text}");
    assert!(text.contains("| identity |") && text.contains("all checks passed"));

    let out = hgm(&["check", "--d-max", "3", "--perturb", "1e-3"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
}

#[test]
fn thread_cap_does_not_change_results() {
    let args = [
        "table",
        "--family",
        "P",
        "--d-max",
        "3",
        "--samples",
        "30000",
        "--format",
        "csv",
    ];
    let one = Command::new(env!("CARGO_BIN_EXE_hgm"))
        .args(args)
        .env("HGM_THREADS", "1")
        .output()
        .unwrap();
    let many = hgm(&args);
    let a = parse_csv_table(&String::from_utf8(one.stdout).unwrap()).unwrap();
    let b = parse_csv_table(&String::from_utf8(many.stdout).unwrap()).unwrap();
    assert!(a.iter().zip(&b).all(|(x, y)| x.same_values(y)));

    let bad = Command::new(env!("CARGO_BIN_EXE_hgm"))
        .args(args)
        .env("HGM_THREADS", "lots")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));
}
