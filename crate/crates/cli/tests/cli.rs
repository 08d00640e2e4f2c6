//! End-to-end behaviour of the `looptree` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn looptree(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_looptree"))
        .args(args)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn zero_replicas_is_a_validation_error() {
    let o = looptree(&[
        "survival",
        "--tree",
        "regular:3",
        "--model",
        "link",
        "--betas",
        "0.5",
        "--depth",
        "4",
        "--replicas",
        "0",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("replicas"));
}

#[test]
fn missing_and_foreign_keys_are_named() {
    let o = looptree(&[
        "survival",
        "--tree",
        "regular:3",
        "--model",
        "link",
        "--depth",
        "4",
        "--replicas",
        "100",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("betas"), "{}", stderr(&o));
    let o = looptree(&["prune-prob", "--depth", "4"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("depth"));
    let o = looptree(&[
        "survival",
        "--tree",
        "star:3",
        "--model",
        "link",
        "--betas",
        "0.5",
        "--depth",
        "4",
        "--replicas",
        "100",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("tree"));
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "tree = \"regular:3\"\nmodel = \"link\"\nbetas = \"0.2:1.0:3\"\ndepth = 5\nreplicas = 500\nseed = 9\n").unwrap();
    let out = dir.path().join("s.csv");
    let o = looptree(&[
        "survival",
        "--config",
        cfg.to_str().unwrap(),
        "--depth",
        "4",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "model,beta,u,D,N,estimate,stderr");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("link,0.2,1,4,500,"));
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("s.csv.meta.json")).unwrap())
            .unwrap();
    assert_eq!(meta["config"]["depth"], 4);
    assert_eq!(meta["config"]["seed"], 9);
    assert_eq!(meta["config"]["u"], 1.0);
    assert_eq!(meta["command"], "survival");
}

#[test]
fn bad_config_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "replicaz = 10\n").unwrap();
    let o = looptree(&["prune-prob", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("replicaz"), "{}", stderr(&o));
}

#[test]
fn no_transition_exits_with_diagnostic_status_and_no_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.csv");
    let o = looptree(&[
        "threshold",
        "--tree",
        "gw:poisson:0.9",
        "--model",
        "link",
        "--depth",
        "40",
        "--replicas",
        "1000",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn gwt_check_reports_link_threshold_and_poisson_verdicts() {
    let o = looptree(&["gwt-check", "--law", "poisson:3", "--betas", "0.2,1"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let threshold: f64 = text
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .nth(2)
        .unwrap()
        .parse()
        .unwrap();
    assert!((threshold - (-(1.0f64 - 1.0 / 3.0).ln())).abs() < 1e-12);
    assert!(text.contains("poisson_sufficient,1,"));
    assert!(text
        .lines()
        .any(|l| l.starts_with("poisson_sufficient,1,") && l.ends_with(",true")));
    assert!(text
        .lines()
        .any(|l| l.starts_with("poisson_sufficient,0.2,") && l.ends_with(",false")));
}

#[test]
fn prune_prob_columns_are_monotone() {
    let o = looptree(&[
        "prune-prob",
        "--d-max",
        "6",
        "--lambdas",
        "0.5,2",
        "--us",
        "0,1",
    ]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<(usize, usize, String, f64)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (
                f[0].parse().unwrap(),
                f[1].parse().unwrap(),
                format!("{}/{}", f[2], f[3]),
                f[4].parse().unwrap(),
            )
        })
        .collect();
    let r = |d: usize, ds: usize, key: &str| {
        rows.iter()
            .find(|x| x.0 == d && x.1 == ds && x.2 == key)
            .unwrap()
            .3
    };
    for key in ["0.5/0", "0.5/1", "2/0", "2/1"] {
        for d in 3..=6 {
            for ds in 2..=6 {
                assert!(r(d, ds, key) <= r(d - 1, ds, key) && r(d, ds, key) <= r(d, ds - 1, key));
            }
        }
    }
}

#[test]
fn gen_tree_writes_csv_that_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("tree.csv");
    let o = looptree(&[
        "gen-tree",
        "--tree",
        "regular:4",
        "--depth",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let tree = looptree::RootedTree::from_csv(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(tree.level_sizes(), vec![1, 4, 12, 36]);
    assert!(Path::new(&format!("{}.meta.json", out.display())).exists());
}
