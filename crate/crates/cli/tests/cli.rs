use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_intent-games"));
    for var in [
        "INTENT_GAMES_CONFIG",
        "INTENT_GAMES_OUT",
        "INTENT_GAMES_SEED",
        "INTENT_GAMES_THREADS",
    ] {
        cmd.env_remove(var);
    }
    cmd
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn empty_model_list_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "environment = \"scalar_toy\"\nmodels = []\n");
    let out_dir = dir.path().join("out");
    let out = run(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(
        stderr(&out).contains("models: must be non-empty"),
        "{}",
        stderr(&out)
    );
    assert!(!out_dir.exists());
}

#[test]
fn unknown_parameter_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "environment = \"scalar_toy\"\nmodels = [\"passive\"]\n[params]\nfriction = 1.0\n",
    );
    let out = run(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("friction"), "{}", stderr(&out));
}

fn read_tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                files.push((
                    path.strip_prefix(root).unwrap().to_path_buf(),
                    std::fs::read(&path).unwrap(),
                ));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn same_seed_gives_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "environment = \"scalar_toy\"\nmodels = [\"active\", \"passive\", \"complete_info\"]\nnoise_std = 0.1\n",
    );
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for (out_dir, threads) in [(&a, "1"), (&b, "3")] {
        let out = run(&[
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
            "--seed",
            "7",
            "--threads",
            threads,
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    }
    let (ta, tb) = (read_tree(&a), read_tree(&b));
    assert_eq!(ta, tb);
    let names: Vec<_> = ta
        .iter()
        .map(|(p, _)| p.to_string_lossy().into_owned())
        .collect();
    for expected in [
        "summary.csv",
        "belief_error.svg",
        "regret.svg",
        "rollouts/active_1.csv",
        "rollouts/passive_-1.csv",
    ] {
        assert!(
            names.iter().any(|n| n == expected),
            "missing {expected} in {names:?}"
        );
    }
}

#[test]
fn seed_changes_noisy_rollouts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "environment = \"scalar_toy\"\nmodels = [\"passive\"]\nnoise_std = 0.1\ntheta = [1.0]\n",
    );
    let mut outputs = Vec::new();
    for seed in ["1", "2"] {
        let out_dir = dir.path().join(seed);
        let out = run(&[
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
            "--seed",
            seed,
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
        outputs.push(std::fs::read(out_dir.join("rollouts/passive_1.csv")).unwrap());
    }
    assert_ne!(outputs[0], outputs[1]);
}

#[test]
fn rollout_csv_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let cfg = write_config(
        dir.path(),
        "environment = \"furniture\"\nmodels = [\"passive\"]\ntheta = [1.1]\nhorizon = 5\n",
    );
    let out = run(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let mut reader = csv::Reader::from_path(out_dir.join("rollouts/passive_1.1.csv")).unwrap();
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header[0], "t");
    assert!(header.contains(&"b1_var0".to_string()));
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 6);
    for row in &rows {
        assert_eq!(row.len(), header.len());
    }
    let var = header.iter().position(|h| h == "b1_var0").unwrap();
    let v: f64 = rows[5][var].parse().unwrap();
    assert!(v > 0.0 && v < 0.4);
}

#[test]
fn print_config_round_trips_through_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["print-config", "scalar_toy"]);
    assert_eq!(out.status.code(), Some(0));
    let cfg = write_config(dir.path(), &String::from_utf8(out.stdout).unwrap());
    let out_dir = dir.path().join("out");
    let out = run(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(out_dir.join("summary.csv").exists());
    assert_eq!(run(&["print-config", "venus"]).status.code(), Some(2));
}

#[test]
fn environment_variables_supply_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "environment = \"scalar_toy\"\nmodels = [\"passive\"]\ntheta = [0.0]\n",
    );
    let out_dir = dir.path().join("env_out");
    let out = bin()
        .arg("run")
        .env("INTENT_GAMES_CONFIG", &cfg)
        .env("INTENT_GAMES_OUT", &out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(out_dir.join("summary.csv").exists());
}

#[test]
fn prop1_passes_on_shipped_config_and_fails_without_learning() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("prop1_lander.toml");
    let out = run(&[
        "check",
        "prop1",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report = std::fs::read_to_string(dir.path().join("prop1_report.txt")).unwrap();
    assert!(report.contains("result: pass"));
    assert!(report.contains("alpha: 0.5"));

    let frozen = write_config(
        dir.path(),
        "environment = \"lunar_lander\"\nrho2 = 4.0\nalpha = 0.0\n[params]\nswitch_enabled = false\n",
    );
    let out = run(&[
        "check",
        "prop1",
        "--config",
        frozen.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(
        stdout.contains("contraction_factor: 1.0000000000000000e0"),
        "{stdout}"
    );
}

#[test]
fn prop2_passes_and_vacuous_case_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("prop2_scalar_toy.toml");
    let out = run(&[
        "check",
        "prop2",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));

    let inert = write_config(dir.path(), "environment = \"scalar_toy\"\nalpha = 0.0\n");
    let out = run(&[
        "check",
        "prop2",
        "--config",
        inert.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let gap: f64 = stdout
        .lines()
        .find_map(|l| l.strip_prefix("gap: "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(gap.abs() <= 1e-8, "{gap}");
}

#[test]
fn exact_checks_reject_nonlinear_environments() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "environment = \"manipulation\"\n");
    let out = run(&[
        "check",
        "prop1",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("environment:"), "{}", stderr(&out));
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("blocker");
    std::fs::write(&blocker, "").unwrap();
    let cfg = write_config(
        dir.path(),
        "environment = \"scalar_toy\"\nmodels = [\"passive\"]\n",
    );
    let out = run(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        blocker.join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4), "{}", stderr(&out));
}

#[test]
fn bench_writes_timings() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "environment = \"lunar_lander\"\ntheta = [25.0]\nbench_repeats = 5\n",
    );
    let out = run(&[
        "bench",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let mut reader = csv::Reader::from_path(dir.path().join("bench.csv")).unwrap();
    let phases: Vec<String> = reader
        .records()
        .map(|r| r.unwrap()[1].to_string())
        .collect();
    assert_eq!(phases, ["solve", "plan", "action"]);
}
