use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn condwalk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_condwalk")).args(args).output().expect("binary runs")
}

fn stdout(args: &[&str]) -> String {
    let o = condwalk(args);
    assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn json(args: &[&str]) -> Value {
    serde_json::from_str(&stdout(args)).expect("valid json")
}

fn plain(args: &[&str]) -> f64 {
    stdout(args).trim().parse().unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("condwalk-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn a(x: i64, y: i64) -> f64 {
    plain(&["kernel", "--x", &x.to_string(), "--y", &y.to_string(), "--plain"])
}

#[test]
fn help_lists_every_subcommand() {
    let h = stdout(&["--help"]);
    for cmd in ["kernel", "prob", "sample", "exp", "oracle", "kochen-stone"] {
        assert!(h.contains(cmd), "{cmd} missing from help");
    }
    let p = stdout(&["prob", "--help"]);
    for f in ["return", "hit", "srw-annulus", "exit-inner", "never-hit-disk", "excursion-hit", "psi", "two-split"] {
        assert!(p.contains(f), "{f} missing from prob help");
    }
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(condwalk(&["bogus"]).status.code(), Some(1));
    assert_eq!(condwalk(&["kernel", "--x", "1"]).status.code(), Some(1));
    assert_eq!(condwalk(&["--seed", "abc", "sample", "walk", "--x", "1", "--y", "0", "--exit", "10"]).status.code(), Some(1));
}

#[test]
fn resource_errors_exit_three() {
    assert_eq!(condwalk(&["kernel", "--x", "0", "--y", "0", "--radius", "1e7"]).status.code(), Some(3));
}

#[test]
fn kernel_values() {
    assert_eq!(stdout(&["kernel", "--x", "1", "--y", "0", "--plain"]).trim(), "1.0000000000000000");
    assert_eq!(stdout(&["kernel", "--x", "1", "--y", "1", "--plain"]).trim(), "1.2732395447351628");
    let j = json(&["kernel", "--x", "-3", "--y", "4"]);
    assert_eq!(j["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(j["exact"], true);
    assert!((j["a"].as_f64().unwrap() - a(4, 3)).abs() < 1e-15);
}

#[test]
fn prob_return_at_neighbour_is_half() {
    assert_eq!(plain(&["prob", "return", "--x", "1", "--y", "0", "--plain"]), 0.5);
    let r = plain(&["prob", "return", "--x", "1", "--y", "1", "--plain"]);
    assert!((r - (1.0 - 1.0 / (2.0 * a(1, 1)))).abs() < 1e-15);
}

#[test]
fn prob_hit_matches_kernel_values() {
    let p = plain(&["prob", "hit", "--x", "3", "--y", "0", "--target", "0,3", "--plain"]);
    let want = (a(3, 0) + a(0, 3) - a(3, -3)) / (2.0 * a(3, 0));
    assert!((p - want).abs() < 1e-14, "{p} vs {want}");
}

#[test]
fn prob_annulus_formulas_are_probabilities() {
    for args in [
        vec!["prob", "srw-annulus", "--x", "3", "--y", "0", "--target", "0,3", "--radius", "50"],
        vec!["prob", "exit-inner", "--x", "10", "--y", "0", "--inner", "4", "--radius", "100"],
        vec!["prob", "never-hit-disk", "--x", "20", "--y", "5", "--inner", "4"],
        vec!["prob", "excursion-hit", "--x", "300", "--y", "0", "--target", "60,10", "--n", "256"],
        vec!["prob", "excursion-hit", "--x", "30", "--y", "0", "--target", "4,1", "--radius", "100"],
    ] {
        let j = json(&args);
        let v = j["value"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&v), "{args:?} gave {v}");
        assert!(j["error_bound"].as_f64().unwrap() >= 0.0);
        assert_eq!(j["version"], env!("CARGO_PKG_VERSION"));
    }
}

#[test]
fn prob_psi_reports_both_forms() {
    let j = json(&["prob", "psi", "--n", "256"]);
    let m = j["minimum_over_shell"]["value"].as_f64().unwrap();
    assert!((m - 0.1618).abs() < 1e-3, "{m}");
    assert!(j["value"].as_f64().unwrap() > m);
}

#[test]
fn prob_two_split_solves_the_system() {
    let j = json(&["prob", "two-split", "--h1", "0.5", "--h2", "0.45", "--q12", "0.5", "--q21", "0.5"]);
    let (p1, p2) = (j["p1"].as_f64().unwrap(), j["p2"].as_f64().unwrap());
    assert!((p1 + p2 * 0.5 - 0.5).abs() < 1e-12);
    assert!((p2 + p1 * 0.5 - 0.45).abs() < 1e-12);
}

#[test]
fn sample_walk_is_reproducible() {
    let args = ["--seed", "7", "sample", "walk", "--x", "5", "--y", "0", "--exit", "100"];
    let first = stdout(&args);
    assert_eq!(first, stdout(&args));
    let j: Value = serde_json::from_str(&first).unwrap();
    assert_eq!(j["reason"], "exited-radius");
    assert_eq!(j["seed"], 7);

    let path = scratch("path.csv");
    let j = json(&["sample", "walk", "--x", "2", "--y", "0", "--exit", "20", "--path-out", path.to_str().unwrap()]);
    let rows = std::fs::read_to_string(&path).unwrap().lines().count();
    assert_eq!(rows as u64, j["steps"].as_u64().unwrap() + 2);
}

#[test]
fn sample_chain_counts_excursions() {
    let out = scratch("chain.jsonl");
    let j = json(&["sample", "chain", "--n", "32", "--jsonl-out", out.to_str().unwrap()]);
    let count = j["count"].as_u64().unwrap();
    assert!(count >= 1);
    assert_eq!(j["decisions"].as_array().unwrap().len() as u64, count);
    assert!(std::fs::read_to_string(&out).unwrap().lines().count() as u64 >= count);
}

#[test]
fn oracle_solve_probabilities_sum_to_one() {
    let csv = scratch("oracle.csv");
    let j = json(&["oracle", "solve", "--radius", "10", "--targets", "3,0", "--x", "1", "--y", "0", "--csv-out", csv.to_str().unwrap()]);
    let q = &j["query"];
    let s = q["p_target"].as_f64().unwrap() + q["p_exit"].as_f64().unwrap();
    assert!((s - 1.0).abs() < 1e-12);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count() as u64, j["sites"].as_u64().unwrap() + 1);
    let j = json(&["oracle", "solve", "--radius", "10", "--kind", "simple", "--targets", "0,0", "--x", "0", "--y", "1"]);
    assert!(j["query"]["p_target"].as_f64().unwrap() > 0.5);
}

#[test]
fn kochen_stone_independent_example() {
    let p = scratch("p.txt");
    let m = scratch("pjoint.txt");
    std::fs::write(&p, "1, 0.5, 0.3333333333333333\n").unwrap();
    std::fs::write(&m, "1 0.5 0.3333333333333333\n0.5 0.5 0.16666666666666666\n0.3333333333333333 0.16666666666666666 0.3333333333333333\n").unwrap();
    let j = json(&["kochen-stone", "--p-file", p.to_str().unwrap(), "--pjoint-file", m.to_str().unwrap()]);
    let b = j["bound"].as_f64().unwrap();
    assert!((b - (121.0 / 36.0) / (23.0 / 6.0)).abs() < 1e-12, "{b}");
    std::fs::write(&m, "1 0.9 0.3\n0.9 0.5 0.1\n0.3 0.1 0.3333333333333333\n").unwrap();
    assert_eq!(condwalk(&["kochen-stone", "--p-file", p.to_str().unwrap(), "--pjoint-file", m.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn uniform_law_output_is_byte_identical() {
    let run = |threads: &str, name: &str| {
        let out = scratch(name);
        let args = [
            "--seed", "11", "--threads", threads, "--out", out.to_str().unwrap(), "exp", "uniform-law", "--n", "32",
            "--samples", "100", "--set", "circle:20",
        ];
        let code = condwalk(&args).status.code().unwrap();
        assert!(code == 0 || code == 2, "exit {code}");
        std::fs::read(out).unwrap()
    };
    let a = run("1", "u1.json");
    assert_eq!(a, run("1", "u2.json"));
    assert_eq!(a, run("2", "u3.json"));
    let j: Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(j["experiment_id"], "uniform-law");
    assert_eq!(j["samples"].as_array().unwrap().len(), 100);
}

#[test]
fn big_holes_and_recurrence_report_checks() {
    let o = condwalk(&["exp", "big-holes", "--region", "box:1,1,2,2", "--levels", "1,2", "--samples", "200"]);
    assert!(matches!(o.status.code(), Some(0 | 2)));
    let j: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(j["summary"]["levels"].as_array().unwrap().len(), 2);
    assert!(!j["checks"].as_array().unwrap().is_empty());

    let pts = scratch("points.txt");
    std::fs::write(&pts, "2,0\n5,-3\n").unwrap();
    let fam = format!("points:{}", pts.display());
    let o = condwalk(&["exp", "recurrence", "--family", &fam, "--samples", "20"]);
    assert!(matches!(o.status.code(), Some(0 | 2)), "{}", String::from_utf8_lossy(&o.stderr));
    let j: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(j["experiment_id"], "recurrence");
}
