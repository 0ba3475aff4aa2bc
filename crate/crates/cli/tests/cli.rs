use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_bosonkernel");

fn ionosphere() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/ionosphere.data").canonicalize().unwrap()
}

fn small_config(dir: &Path, extra: &str) -> PathBuf {
    let text = format!(
        r#"
seeds = [0, 1]
out = "out"

[dataset]
name = "ionosphere"
path = "{}"
subsample = 80

[circuit]
modes = 3
photons = 2

[train]
epochs = 2
batch_size = 16

[readout]
sizes = [1, 8]
draws = 2
{extra}
"#,
        ionosphere().display()
    );
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str], cwd: &Path) -> Output {
    Command::new(BIN).args(args).current_dir(cwd).env_remove("BOSONKERNEL_CACHE_DIR").output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Data rows of a provenance-stamped CSV, header first.
fn table(path: &Path) -> Vec<String> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# config: {"));
    assert!(lines.next().unwrap().starts_with("# seeds: ["));
    lines.map(str::to_string).collect()
}

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn run_writes_self_describing_results() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "");
    let o = run(&["run", "--config", cfg.to_str().unwrap()], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let out = tmp.path().join("out");
    let summary = table(&out.join("summary.csv"));
    assert_eq!(summary[0], "seed,quantum,linear,sigmoid,neural_network");
    assert_eq!(summary.len(), 3);
    for seed in ["seed-0", "seed-1"] {
        for f in ["trace.csv", "weights.bkew", "weights.json", "svm.json", "readout.csv", "separation.json"] {
            assert!(out.join(seed).join(f).is_file(), "{seed}/{f}");
        }
        for f in ["hist-train-same.csv", "hist-train-different.csv", "hist-test-same.csv", "hist-test-different.csv"] {
            let rows = table(&out.join(seed).join(f));
            assert_eq!(rows.len(), 21);
            let total: f64 = rows[1..].iter().map(|r| r.rsplit(',').next().unwrap().parse::<f64>().unwrap()).sum();
            assert!(total == 0.0 || (total - 1.0).abs() < 1e-9);
        }
        let trace = table(&out.join(seed).join("trace.csv"));
        assert_eq!(trace.len(), 3);
    }
    let run_json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(run_json["config"]["circuit"]["modes"], 3);
    assert_eq!(run_json["seeds"], serde_json::json!([0, 1]));
    assert_eq!(run_json["run"]["per_seed"].as_array().unwrap().len(), 2);
    let readout = run_json["run"]["per_seed"][0]["readout"].as_array().unwrap();
    let sizes: Vec<u64> = readout.iter().map(|r| r["size"].as_u64().unwrap()).collect();
    assert_eq!(sizes, vec![1, 8, 65]);
    assert_eq!(readout[2]["mean_accuracy"], run_json["run"]["per_seed"][0]["quantum_accuracy"]);
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "");
    let mut snaps = Vec::new();
    for workers in ["1", "2", "1"] {
        let o = run(&["run", "--config", cfg.to_str().unwrap(), "--workers", workers], tmp.path());
        assert!(o.status.success(), "{}", stderr(&o));
        snaps.push(snapshot(&tmp.path().join("out")));
        fs::remove_dir_all(tmp.path().join("out")).unwrap();
    }
    assert!(!snaps[0].is_empty());
    assert_eq!(snaps[0], snaps[1]);
    assert_eq!(snaps[0], snaps[2]);
}

#[test]
fn flags_override_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "");
    let cache = tmp.path().join("kcache");
    let o = run(
        &["baselines", "--config", cfg.to_str().unwrap(), "--seed", "7", "--out", "elsewhere"],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = table(&tmp.path().join("elsewhere/baselines.csv"));
    assert_eq!(rows.len(), 2);
    assert!(rows[1].starts_with("7,"));

    let o = Command::new(BIN)
        .args(["sweep-readout", "--config", cfg.to_str().unwrap(), "--seed", "0"])
        .current_dir(tmp.path())
        .env("BOSONKERNEL_CACHE_DIR", &cache)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_dir(&cache).unwrap().count(), 1);
}

#[test]
fn sweeps_emit_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "[sweep]\nphotons = [1, 2]\ngrid = [[3, 1, 1], [3, 2, 2], [4, 3, 2]]\n");
    let c = cfg.to_str().unwrap();
    let out = tmp.path().join("out");

    assert!(run(&["sweep-photons", "--config", c], tmp.path()).status.success());
    let rows = table(&out.join("photon_sweep.csv"));
    assert_eq!(rows[0], "seed,photons,hilbert_dim,accuracy");
    assert_eq!(rows.len(), 1 + 2 * 2);
    assert!(rows[1].starts_with("0,1,3,"));
    assert!(rows[2].starts_with("0,2,6,"));
    assert_eq!(table(&out.join("photon_sweep_summary.csv")).len(), 3);
    assert_eq!(table(&out.join("photon_sweep_baselines.csv")).len(), 3);

    assert!(run(&["sweep-dimension", "--config", c, "--seed", "0"], tmp.path()).status.success());
    let rows = table(&out.join("dimension_sweep.csv"));
    assert_eq!(rows[0], "seed,modes,layers,photons,hilbert_dim,tbu_count,full_depth,accuracy");
    assert!(rows[1].starts_with("0,3,1,1,3,1,false,"));
    assert!(rows[2].starts_with("0,3,2,2,6,2,true,"));
    assert!(rows[3].starts_with("0,4,3,2,10,5,true,"));

    assert!(run(&["sweep-readout", "--config", c], tmp.path()).status.success());
    let rows = table(&out.join("readout_sweep.csv"));
    assert_eq!(rows[0], "size,mean_accuracy,std_accuracy,full_accuracy");
    let last: Vec<&str> = rows.last().unwrap().split(',').collect();
    assert_eq!(last[0], "65");
    assert!((last[1].parse::<f64>().unwrap() - last[3].parse::<f64>().unwrap()).abs() < 1e-12);
    assert!(rows[1].starts_with("1,"));

    assert!(run(&["histograms", "--config", c], tmp.path()).status.success());
    let rows = table(&out.join("separation.csv"));
    assert_eq!(rows[0], "seed,split,jsd,chernoff,epsilon,readout_bound");
    assert_eq!(rows.len(), 1 + 2 * 2 * 3);
}

#[test]
fn exit_codes_follow_error_kind() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = run(&["run", "--config", "nope.toml"], tmp.path());
    assert_eq!(missing.status.code(), Some(1));
    assert!(stderr(&missing).contains("config error"));

    assert_eq!(run(&["run"], tmp.path()).status.code(), Some(1));

    let cfg = small_config(tmp.path(), "");
    let text = fs::read_to_string(&cfg).unwrap();
    fs::write(&cfg, text.replace("photons = 2", "photons = 4")).unwrap();
    assert_eq!(run(&["run", "--config", cfg.to_str().unwrap()], tmp.path()).status.code(), Some(1));

    fs::write(&cfg, text.replace("ionosphere.data", "missing.data")).unwrap();
    let data = run(&["run", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(data.status.code(), Some(2));
    assert!(stderr(&data).contains("data error in load"));

    fs::write(&cfg, text.replace("batch_size = 16", "batch_size = 16\nlearning_rate = 1e308")).unwrap();
    let num = run(&["run", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(num.status.code(), Some(3), "{}", stderr(&num));
    assert!(stderr(&num).contains("numerical error in train"));
}

#[test]
fn help_succeeds() {
    let o = Command::new(BIN).arg("--help").output().unwrap();
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    for sub in ["run", "sweep-photons", "sweep-dimension", "sweep-readout", "histograms", "baselines", "fetch-data"] {
        assert!(text.contains(sub), "{sub}");
    }
}
