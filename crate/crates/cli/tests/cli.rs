use std::process::Command;

fn fairbfl() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fairbfl"))
}

const QUICK: [&str; 4] = ["rounds=3", "n_clients=10", "data.n_samples=300", "epochs=1"];

#[test]
fn run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = fairbfl()
        .args(["run", "--out"])
        .arg(dir.path())
        .args(QUICK)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["run.csv", "run.manifest.toml", "summary.csv"] {
        assert!(dir.path().join("run").join(f).exists(), "{f}");
    }
}

#[test]
fn config_file_and_env_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "mode = \"fl\"\nrounds = 2\n[data]\nn_samples = 300\n").unwrap();
    let out = fairbfl()
        .env("FAIRBFL_OUT_DIR", dir.path())
        .args(["preset", "general", "--config"])
        .arg(&cfg)
        .args(["n_clients=10", "hp.epochs=1"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = std::fs::read_to_string(dir.path().join("general/general.manifest.toml")).unwrap();
    assert!(manifest.contains("mode = \"fl\""));
    assert!(manifest.contains("rounds = 2"));
}

#[test]
fn invalid_values_exit_nonzero_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let out = fairbfl()
        .args(["run", "--out"])
        .arg(dir.path())
        .arg("lambda=1.5")
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("lambda"));

    let out = fairbfl()
        .args(["run", "--out"])
        .arg(dir.path())
        .arg("no_such_key=1")
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_key"));

    let out = fairbfl()
        .args(["preset", "general", "--out"])
        .arg(dir.path())
        .arg("rounds=0")
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn unknown_preset_is_rejected() {
    let out = fairbfl().args(["preset", "nonsense"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nonsense"));
}
