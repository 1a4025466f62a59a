use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn meshclr(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_meshclr"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("run meshclr")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Asserts a failure with exactly one `error: <code>: ...` line.
fn assert_error(o: &Output, code: &str) {
    assert!(!o.status.success());
    let err = stderr(o);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with(&format!("error: {code}: ")), "{err}");
}

const TETRA: &str =
    "v 1 1 1\nv 1 -1 -1\nv -1 1 -1\nv -1 -1 1\nf 1 2 3\nf 1 4 2\nf 1 3 4\nf 2 4 3\n";

#[test]
fn validate_ok_and_invalid() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("t.obj"), TETRA).unwrap();
    let o = meshclr(&["validate", "t.obj"], dir.path());
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "ok");

    fs::write(
        dir.path().join("fan.obj"),
        "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\nv 1 1 1\nf 1 2 3\nf 1 2 4\nf 1 2 5\n",
    )
    .unwrap();
    let o = meshclr(&["validate", "fan.obj"], dir.path());
    assert_error(&o, "invalid_mesh");
    assert!(stdout(&o).contains("non_manifold_edge"));
}

#[test]
fn parse_errors_are_one_line() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("quad.obj"),
        "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n",
    )
    .unwrap();
    assert_error(
        &meshclr(&["features", "quad.obj"], dir.path()),
        "non_triangular_face",
    );
    assert_error(&meshclr(&["validate", "missing.obj"], dir.path()), "io");
    assert_error(&meshclr(&["frobnicate"], dir.path()), "usage");
    assert_eq!(meshclr(&["frobnicate"], dir.path()).status.code(), Some(2));
}

#[test]
fn features_csv() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("t.obj"), TETRA).unwrap();
    let o = meshclr(&["features", "t.obj"], dir.path());
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 7);
    assert!(text.starts_with("dihedral,angle_a,angle_b,ratio_a,ratio_b\n"));
    assert!(
        meshclr(&["features", "t.obj", "--csv", "f.csv"], dir.path())
            .status
            .success()
    );
    assert_eq!(fs::read_to_string(dir.path().join("f.csv")).unwrap(), text);
}

#[test]
fn augment_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    assert!(meshclr(&["gen-data", "--n", "1", "--out", "d"], dir.path())
        .status
        .success());
    let run = |seed: &str| {
        stdout(&meshclr(
            &["augment", "d/mesh_000.obj", "--seed", seed],
            dir.path(),
        ))
    };
    assert_eq!(run("4"), run("4"));
    assert_ne!(run("4"), run("5"));
    let o = meshclr(
        &[
            "augment",
            "d/mesh_000.obj",
            "--seed",
            "1",
            "--sigma",
            "0",
            "--p-shift",
            "0",
            "--p-flip",
            "0",
        ],
        dir.path(),
    );
    let original = fs::read_to_string(dir.path().join("d/mesh_000.obj")).unwrap();
    assert_eq!(stdout(&o), original);
    assert_error(
        &meshclr(
            &["augment", "d/mesh_000.obj", "--seed", "1", "--p-flip", "2"],
            dir.path(),
        ),
        "config",
    );
}

#[test]
fn gen_data_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        assert!(meshclr(
            &[
                "gen-data",
                "--n",
                "3",
                "--classes",
                "4",
                "--seed",
                "9",
                "--out",
                out
            ],
            dir.path()
        )
        .status
        .success());
    }
    for name in ["mesh_002.obj", "mesh_002.labels"] {
        let a = fs::read(dir.path().join("a").join(name)).unwrap();
        let b = fs::read(dir.path().join("b").join(name)).unwrap();
        assert_eq!(a, b);
    }
    let labels = fs::read_to_string(dir.path().join("a/mesh_000.labels")).unwrap();
    assert_eq!(labels.lines().count(), 480);
    assert_error(
        &meshclr(&["gen-data", "--classes", "9", "--out", "c"], dir.path()),
        "config",
    );
}

#[test]
fn pretrain_finetune_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert!(
        meshclr(&["gen-data", "--n", "4", "--seed", "2", "--out", "d"], p)
            .status
            .success()
    );
    fs::write(
        p.join("run.toml"),
        "seed = 3\n[train]\nm1 = 2\nn1 = 2\nm2 = 2\nn2 = 2\nlr = 0.001\n",
    )
    .unwrap();

    let o = meshclr(
        &[
            "pretrain",
            "--data",
            "d",
            "--config",
            "run.toml",
            "--out",
            "enc.json",
            "--metrics",
            "pre.csv",
        ],
        p,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let curve = fs::read_to_string(p.join("pre.csv")).unwrap();
    assert_eq!(curve.lines().count(), 3);

    // flag overrides the config file
    let o = meshclr(
        &[
            "pretrain",
            "--data",
            "d",
            "--config",
            "run.toml",
            "--n1",
            "1",
            "--out",
            "e1.json",
            "--metrics",
            "one.csv",
        ],
        p,
    );
    assert!(o.status.success());
    assert_eq!(
        fs::read_to_string(p.join("one.csv"))
            .unwrap()
            .lines()
            .count(),
        2
    );

    let o = meshclr(
        &[
            "finetune",
            "--data",
            "d",
            "--ckpt",
            "enc.json",
            "--fraction",
            "50",
            "--config",
            "run.toml",
            "--out",
            "seg.json",
        ],
        p,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("trained on 2 meshes"));

    let o = meshclr(&["eval", "--ckpt", "seg.json", "--data", "d"], p);
    assert!(o.status.success());
    let acc: f64 = stdout(&o)
        .trim()
        .strip_prefix("accuracy ")
        .unwrap()
        .parse()
        .unwrap();
    assert!((0.0..=1.0).contains(&acc));
    assert_eq!(
        stdout(&meshclr(&["eval", "--ckpt", "seg.json", "--data", "d"], p)),
        stdout(&o)
    );

    assert_error(
        &meshclr(&["eval", "--ckpt", "enc.json", "--data", "d"], p),
        "checkpoint",
    );
    assert_error(
        &meshclr(
            &["pretrain", "--data", "d", "--m1", "8", "--out", "x.json"],
            p,
        ),
        "config",
    );
}

#[test]
fn experiment_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(
        p.join("spec.toml"),
        "fractions = [50, 100]\nrepeats = 1\n[data]\nsource = \"synthetic\"\nn = 6\nclasses = 2\n[train]\nm1 = 2\nn1 = 1\nm2 = 2\nn2 = 1\n",
    )
    .unwrap();
    let o = meshclr(&["experiment", "--spec", "spec.toml", "--out", "r"], p);
    assert!(o.status.success(), "{}", stderr(&o));
    let results = fs::read_to_string(p.join("r/results.csv")).unwrap();
    assert_eq!(results.lines().count(), 3);
    assert_eq!(stdout(&o), results);
    for name in [
        "convergence_no_ssl_50.csv",
        "convergence_ssl_100.csv",
        "pretrain_loss.csv",
    ] {
        assert!(p.join("r").join(name).is_file(), "{name}");
    }

    let o = meshclr(
        &[
            "experiment",
            "--spec",
            "spec.toml",
            "--fractions",
            "100",
            "--no-ssl",
            "--out",
            "s",
        ],
        p,
    );
    assert!(o.status.success());
    let results = fs::read_to_string(p.join("s/results.csv")).unwrap();
    assert_eq!(results.lines().count(), 2);
    assert!(results.lines().nth(1).unwrap().starts_with("100,"));

    assert_error(
        &meshclr(
            &[
                "experiment",
                "--spec",
                "spec.toml",
                "--fractions",
                "0",
                "--out",
                "t",
            ],
            p,
        ),
        "config",
    );
}
