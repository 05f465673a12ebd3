use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"
clients = 12
scheduled = 3
rounds = 4
episodes = 2
scenario = "c"
policy = "dm"
n_clusters = 3

[train]
hidden = 8

[dataset]
source = "synthetic"
synthetic_dim = 16
synthetic_per_class = 200
synthetic_test_per_class = 20
train_pool = 600
"#;

fn fedsched(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fedsched"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("exp.toml");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn run_writes_csvs_and_dumps() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let out = dir.path().join("out");
    let o = fedsched(&[
        "run", "--config", &cfg, "--policy", "rr", "--k", "2", "--seeds", "4,5",
        "--out-dir", out.to_str().unwrap(), "--dump-graph", "--dump-embeddings",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rounds = fs::read_to_string(out.join("rounds.csv")).unwrap();
    assert_eq!(rounds.lines().count(), 1 + 2 * 4);
    assert!(rounds.lines().skip(1).all(|l| l.split(',').any(|f| f == "rr")));
    assert!(out.join("summary.csv").exists());
    for seed in [4, 5] {
        assert!(out.join(format!("graph_seed{seed}.txt")).exists());
        let emb = fs::read_to_string(out.join(format!("embeddings_seed{seed}.csv"))).unwrap();
        assert!(emb.lines().count() >= 12);
    }
}

#[test]
fn repeated_runs_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let outs: Vec<_> = ["a", "b"]
        .iter()
        .map(|d| {
            let out = dir.path().join(d);
            let o = fedsched(&["sweep", "--config", &cfg, "--policies", "dm,rnd", "--k-values", "2,3",
                "--out-dir", out.to_str().unwrap()]);
            assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
            out
        })
        .collect();
    for f in ["rounds.csv", "summary.csv"] {
        assert_eq!(fs::read(outs[0].join(f)).unwrap(), fs::read(outs[1].join(f)).unwrap());
    }
}

#[test]
fn embed_inspect_prints_one_row_per_client() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let o = fedsched(&["embed-inspect", "--config", &cfg, "--seed", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = String::from_utf8(o.stdout).unwrap();
    assert!(csv.lines().count() >= 12);
}

#[test]
fn failures_exit_nonzero_and_name_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let o = fedsched(&["run", "--config", dir.path().join("missing.toml").to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("loading config"));

    let cfg = write_config(dir.path(), &CONFIG.replace("clients = 12", "clients = 12\nbogus = 1"));
    let o = fedsched(&["run", "--config", &cfg]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("loading config"));

    let cfg = write_config(dir.path(), CONFIG);
    let o = fedsched(&["run", "--config", &cfg, "--k", "40"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("validating overrides"));

    let idx = CONFIG.replace("source = \"synthetic\"", "source = \"idx\"\ndir = \"nowhere\"");
    let cfg = write_config(dir.path(), &idx);
    let o = fedsched(&["run", "--config", &cfg]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("loading dataset"));
}
