use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const TABLE_ONE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/tests/fixtures/table_one.csv");

fn pvseq(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pvseq"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = pvseq(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str], cwd: &Path) -> i32 {
    pvseq(args, cwd).status.code().expect("exit code")
}

fn field<'a>(stdout: &'a str, key: &str) -> &'a str {
    stdout
        .split_whitespace()
        .find_map(|tok| tok.strip_prefix(key).and_then(|t| t.strip_prefix('=')))
        .unwrap_or_else(|| panic!("no {key}= in {stdout:?}"))
}

#[test]
fn reduce_examples() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let out = ok(
        &[
            "reduce",
            "--n",
            "5",
            "--m",
            "2",
            "--relation",
            "um",
            "--variant",
            "reduction",
        ],
        d,
    );
    assert_eq!(field(&out, "edges"), "594");
    assert_eq!(field(&out, "nodes"), "243");
    let out = ok(
        &[
            "reduce",
            "--n",
            "1",
            "--m",
            "6",
            "--relation",
            "us",
            "--variant",
            "reduction",
        ],
        d,
    );
    assert_eq!(field(&out, "edges"), "6");
    let out = ok(
        &[
            "reduce",
            "--n",
            "3",
            "--m",
            "2",
            "--relation",
            "us",
            "--variant",
            "operation",
        ],
        d,
    );
    assert_eq!(field(&out, "edges"), "81");

    let csv = fs::read_to_string(d.join("graph_n5_m2_um_reduction.csv")).unwrap();
    assert!(csv.starts_with("# n=5 m=2 relation=um variant=reduction\nu_rank,v_rank\n"));
    assert_eq!(csv.lines().count(), 2 + 594);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("graph_n5_m2_um_reduction.json")).unwrap()).unwrap();
    assert_eq!(summary["edges"], 594);
    assert_eq!(summary["variant"], "reduction");
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    assert_eq!(code(&["reduce", "--m", "2"], d), 2);
    assert_eq!(code(&["reduce", "--n", "0", "--m", "2"], d), 2);
    assert_eq!(code(&["reduce", "--n", "3", "--m", "2", "--relation", "ux"], d), 2);
    assert_eq!(code(&["reduce", "--n", "3", "--m", "2", "--colour"], d), 2);
    assert_eq!(code(&["frobnicate"], d), 2);
    assert_eq!(
        code(&["reduce", "--n", "9", "--m", "3", "--variant", "enumeration"], d),
        3
    );
    assert_eq!(code(&["fit", "--n", "3", "--m", "3", "--input", "missing.csv"], d), 1);
    assert_eq!(code(&["--help"], d), 0);
}

#[test]
fn help_documents_every_subcommand() {
    let dir = TempDir::new().unwrap();
    let help = ok(&["--help"], dir.path());
    for cmd in ["reduce", "tables", "fit", "evaluate", "synth", "postprocess"] {
        assert!(help.contains(cmd), "{cmd} missing from help");
    }
    let fit_help = ok(&["fit", "--help"], dir.path());
    for flag in [
        "--n",
        "--m",
        "--relation",
        "--variant",
        "--abs-tol",
        "--zero-weight-eps",
        "--input",
        "--out-dir",
    ] {
        assert!(fit_help.contains(flag), "{flag} missing from fit help");
    }
}

#[test]
fn config_file_sits_between_flags_and_defaults() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    fs::write(d.join("run.cfg"), "# settings\nn = 5\nm = 2\nrelation = us\n").unwrap();
    let out = ok(&["reduce", "--config", "run.cfg"], d);
    assert_eq!(field(&out, "edges"), "634");
    assert_eq!(field(&out, "variant"), "reduction");
    let out = ok(&["reduce", "--config", "run.cfg", "--relation", "um"], d);
    assert_eq!(field(&out, "edges"), "594");

    fs::write(d.join("bad.cfg"), "n = 5\nshape = round\n").unwrap();
    assert_eq!(code(&["reduce", "--config", "bad.cfg", "--m", "2"], d), 2);
    assert_eq!(code(&["reduce", "--config", "absent.cfg"], d), 1);
}

#[test]
fn tables_rows_and_om_markers() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    ok(&["tables", "--max-vars", "3125", "--max-m", "6", "--out", "t.csv"], d);
    let text = fs::read_to_string(d.join("t.csv")).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(
        rows[0],
        "n,m,vars,enumeration_um,enumeration_us,operation_um,operation_us,reduction_um,reduction_us"
    );
    for expected in [
        "5,2,243,21383,17945,1890,1620,594,634",
        "5,3,1024,346374,255260,9600,7680,3072,3546",
        "5,4,3125,3045422,2038236,32500,25000,10500,12898",
        "4,6,2401,1860622,1224030,18816,14406,7350,9675",
        "1,6,7,21,21,6,6,6,6",
    ] {
        assert!(rows.contains(&expected), "missing {expected}");
    }

    let capped = ok(
        &["tables", "--max-vars", "1024", "--max-m", "3", "--edge-cap", "300000"],
        d,
    );
    assert!(capped.lines().any(|l| l == "5,3,1024,OM,255260,9600,7680,3072,3546"));
}

#[test]
fn fit_reproduces_the_toy_table() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let out = ok(
        &["fit", "--n", "3", "--m", "3", "--input", TABLE_ONE, "--out-dir", "out"],
        d,
    );
    assert!(out.contains("labels on 2015-04-04"));
    assert!(out.contains("6 user-item pairs"));

    let grid = fs::read_to_string(d.join("out/rf_grid.csv")).unwrap();
    let targets: Vec<(String, f64, f64)> = grid
        .lines()
        .skip(1)
        .map(|l| {
            let c: Vec<&str> = l.split(',').collect();
            (
                format!("{},{}", c[0], c[1]),
                c[2].parse().unwrap(),
                c[3].parse().unwrap(),
            )
        })
        .collect();
    let lookup = |key: &str| targets.iter().find(|t| t.0 == key).map(|t| (t.1, t.2)).unwrap();
    assert_eq!(lookup("2,1"), (1.0, 1.0));
    assert_eq!(lookup("3,3"), (3.0, 1.0 / 3.0));
    assert_eq!(lookup("3,2"), (1.0, 0.0));
    assert_eq!(lookup("1,3"), (1.0, 0.0));
    assert_eq!(lookup("1,1"), (0.0, 0.0));

    let table = fs::read_to_string(d.join("out/sequence_probabilities.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 64);
    assert!(table.lines().any(|l| l.starts_with("4,\"0,1,0\",1.0,1.0,")));
    for v3 in 0..=2 {
        assert!(d.join(format!("out/slice_v3_{v3}.csv")).exists());
    }
    let diag: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("out/fit_diagnostics.json")).unwrap()).unwrap();
    assert_eq!(diag["sequence"]["status"], "converged");
    assert_eq!(diag["rf"]["status"], "converged");
    assert_eq!(diag["sequence"]["edges"], 120);
}

#[test]
fn evaluate_hand_scored_user() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    fs::write(
        d.join("model.csv"),
        "rank,sequence,weight,target,fitted\n0,\"0,0\",0,0,0\n1,\"0,1\",1,0,0.1\n2,\"1,0\",1,0,0.5\n3,\"1,1\",1,1,0.9\n",
    )
    .unwrap();
    fs::write(
        d.join("val.csv"),
        "user_id,item_id,v1,v2,chosen\nu,a,1,1,1\nu,b,0,1,0\nu,c,1,0,0\nu,d,0,1,1\n",
    )
    .unwrap();
    ok(
        &[
            "evaluate",
            "--n",
            "2",
            "--m",
            "1",
            "--input",
            "val.csv",
            "--model-file",
            "model.csv",
            "--out",
            "m.json",
        ],
        d,
    );
    let metrics: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("m.json")).unwrap()).unwrap();
    // selection {a, c, b}: b and d tie on probability and recency, b wins on id
    assert_eq!(metrics["N"], 3);
    assert_eq!(metrics["users_evaluated"], 1);
    assert_eq!(metrics["mean_recall"], 0.5);
    assert!((metrics["mean_precision"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-15);
    assert!((metrics["mean_f1"].as_f64().unwrap() - 0.4).abs() < 1e-15);

    let mismatch = pvseq(
        &[
            "evaluate",
            "--n",
            "3",
            "--m",
            "1",
            "--input",
            "val.csv",
            "--model-file",
            "model.csv",
        ],
        d,
    );
    assert_eq!(mismatch.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&mismatch.stderr).contains("space mismatch between model and data"));
}

#[test]
fn synth_fit_evaluate_round_trip_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let synth = |seed: &str, out: &str| {
        ok(
            &[
                "synth", "--n", "4", "--m", "2", "--truth", "recency", "--users", "400", "--seed", seed, "--out", out,
            ],
            d,
        )
    };
    synth("1", "train.csv");
    synth("1", "train_again.csv");
    synth("2", "val.csv");
    assert_eq!(
        fs::read(d.join("train.csv")).unwrap(),
        fs::read(d.join("train_again.csv")).unwrap()
    );

    let fit = |out: &str| {
        ok(
            &[
                "fit",
                "--n",
                "4",
                "--m",
                "2",
                "--input",
                "train.csv",
                "--zero-weight-eps",
                "1e-9",
                "--out-dir",
                out,
            ],
            d,
        )
    };
    fit("a");
    fit("b");
    for name in [
        "sequence_probabilities.csv",
        "rf_grid.csv",
        "slice_v3_1.csv",
        "fit_diagnostics.json",
    ] {
        assert_eq!(
            fs::read(d.join("a").join(name)).unwrap(),
            fs::read(d.join("b").join(name)).unwrap(),
            "{name}"
        );
    }
    let diag: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("a/fit_diagnostics.json")).unwrap()).unwrap();
    assert_eq!(diag["sequence"]["status"], "converged");

    for model in ["a/sequence_probabilities.csv", "a/rf_grid.csv"] {
        let out = ok(
            &[
                "evaluate",
                "--n",
                "4",
                "--m",
                "2",
                "--input",
                "val.csv",
                "--model-file",
                model,
            ],
            d,
        );
        let metrics: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert!(metrics["users_evaluated"].as_u64().unwrap() > 0);
        let f1 = metrics["mean_f1"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&f1));
    }
}

#[test]
fn synth_clicks_feed_fit() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    ok(
        &[
            "synth",
            "--n",
            "3",
            "--m",
            "2",
            "--users",
            "50",
            "--format",
            "clicks",
            "--out",
            "clicks.csv",
        ],
        d,
    );
    assert!(fs::read_to_string(d.join("clicks.csv"))
        .unwrap()
        .starts_with("user_id,item_id,timestamp,event_type\n"));
    let out = ok(
        &[
            "fit",
            "--n",
            "3",
            "--m",
            "2",
            "--input",
            "clicks.csv",
            "--model",
            "rf",
            "--out-dir",
            "o",
        ],
        d,
    );
    assert!(out.contains("labels on 2015-08-19"));
    assert!(d.join("o/rf_grid.csv").exists());
    assert!(!d.join("o/sequence_probabilities.csv").exists());
}

#[test]
fn postprocess_restores_monotonicity() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    ok(
        &[
            "synth", "--n", "2", "--m", "2", "--users", "200", "--seed", "3", "--out", "h.csv",
        ],
        d,
    );
    let preds: String = (0..9)
        .map(|i| format!("{}\n", if i % 2 == 0 { 0.8 } else { 0.1 }))
        .collect();
    fs::write(d.join("p.txt"), preds).unwrap();
    ok(
        &[
            "postprocess",
            "--n",
            "2",
            "--m",
            "2",
            "--input",
            "h.csv",
            "--predictions",
            "p.txt",
            "--out",
            "fixed.csv",
            "--diagnostics",
            "diag.json",
        ],
        d,
    );
    let fitted: Vec<f64> = fs::read_to_string(d.join("fixed.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(fitted.len(), 9);
    // (0,1) <= (0,2) <= (1,2) <= (2,2) is a chain under both orders
    for (a, b) in [(1, 2), (2, 5), (5, 8)] {
        assert!(fitted[a] <= fitted[b] + 1e-8, "{fitted:?}");
    }
    let diag: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("diag.json")).unwrap()).unwrap();
    assert_eq!(diag["status"], "converged");

    fs::write(d.join("short.txt"), "0.5\n0.5\n").unwrap();
    let args = [
        "postprocess",
        "--n",
        "2",
        "--m",
        "2",
        "--input",
        "h.csv",
        "--predictions",
        "short.txt",
        "--out",
        "x.csv",
    ];
    assert_eq!(code(&args, d), 2);
}

#[test]
fn stalled_solver_exits_with_four() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    ok(
        &["synth", "--n", "5", "--m", "2", "--users", "2000", "--out", "h.csv"],
        d,
    );
    let args = [
        "fit",
        "--n",
        "5",
        "--m",
        "2",
        "--input",
        "h.csv",
        "--max-iters",
        "1",
        "--rel-tol",
        "1e-300",
        "--out-dir",
        "o",
    ];
    assert_eq!(code(&args, d), 4);
    assert!(d.join("o/fit_diagnostics.json").exists());
}
