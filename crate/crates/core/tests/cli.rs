//! Exit statuses, output files and manifests of the command-line runner.

use std::fs;
use std::path::Path;

use rwre_lab::cli;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

const LAW: &str = r#"{"nu": 1, "steps": [[-1], [1]], "kind": "dirichlet", "alphas": [1, 1]}"#;

fn write_config(dir: &Path, body: Value) -> String {
    let p = dir.join("config.json");
    fs::write(&p, serde_json::to_vec(&body).unwrap()).unwrap();
    p.to_string_lossy().into_owned()
}

fn run(args: &[&str]) -> i32 {
    let mut v = vec!["rwre-lab".to_string()];
    v.extend(args.iter().map(|s| s.to_string()));
    cli::main(v)
}

fn base(out: &Path) -> Value {
    json!({"law": serde_json::from_str::<Value>(LAW).unwrap(), "output_dir": out, "threads": 2})
}

#[test]
fn passing_run_writes_summary_csv_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = write_config(tmp.path(), base(&out));
    assert_eq!(
        run(&[
            "density",
            "--config",
            &cfg,
            "--M",
            "300",
            "--density_ladder",
            "[0,1,2]"
        ]),
        0
    );
    let manifest: Value =
        serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    let files = manifest["files"].as_array().unwrap();
    assert!(files.iter().any(|f| f["name"] == "summary.json"));
    assert!(files.iter().any(|f| f["name"] == "density_f.csv"));
    for f in files {
        let bytes = fs::read(out.join(f["name"].as_str().unwrap())).unwrap();
        assert_eq!(f["sha256"], hex::encode(Sha256::digest(&bytes)));
        assert_eq!(f["bytes"], bytes.len());
    }
    assert_eq!(
        manifest["config"]["M"], 300,
        "the config is echoed with overrides applied"
    );
}

#[test]
fn statistical_failure_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = write_config(tmp.path(), base(&out));
    // A zero z-tolerance cannot be met by a Monte Carlo mean.
    let code = run(&[
        "density",
        "--config",
        &cfg,
        "--M",
        "50",
        "--density_ladder",
        "[1]",
        "--thresholds.se_mult",
        "0",
    ]);
    assert_eq!(code, 1);
    assert!(out.join("summary.json").exists());
}

#[test]
fn malformed_law_exits_two_without_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let mut body = base(&out);
    body["law"] =
        json!({"nu": 1, "steps": [[-1], [1]], "kind": "deterministic", "vector": [0.5, 1.0]});
    let cfg = write_config(tmp.path(), body);
    assert_eq!(run(&["clt", "--config", &cfg]), 2);
    assert!(!out.exists());
    assert_eq!(run(&["clt", "--config", &cfg, "--no_such_key", "1"]), 2);
    assert_eq!(run(&["nonsense", "--config", &cfg]), 2);
    assert_eq!(run(&["clt"]), 2);
}

#[test]
fn resource_cap_exits_three_without_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = write_config(tmp.path(), base(&out));
    assert_eq!(
        run(&[
            "collisions",
            "--config",
            &cfg,
            "--support_cap",
            "100",
            "--n",
            "256"
        ]),
        3
    );
    assert!(!out.exists());
}

#[test]
fn describe_prints_without_running() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = write_config(tmp.path(), base(&out));
    assert_eq!(
        run(&["describe", "--config", &cfg, "--experiment", "all"]),
        0
    );
    assert!(!out.exists());
    fs::write(tmp.path().join("bad.json"), "{not json").unwrap();
    assert_eq!(
        run(&[
            "describe",
            "--config",
            tmp.path().join("bad.json").to_str().unwrap()
        ]),
        2
    );
}

#[test]
fn reruns_are_digest_identical_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let mut digests = Vec::new();
    for (i, threads) in [1, 3, 1].iter().enumerate() {
        let out = tmp.path().join(format!("out{i}"));
        let cfg = write_config(tmp.path(), base(&out));
        let code = run(&[
            "scaling",
            "--config",
            &cfg,
            "--M",
            "30",
            "--ladder",
            "[8,16,32]",
            "--decay_ladder",
            "[8,16,32,64]",
            "--threads",
            &threads.to_string(),
        ]);
        assert!(code == 0 || code == 1);
        let manifest: Value =
            serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
        digests.push(manifest["files"].clone());
    }
    assert_eq!(digests[0], digests[1]);
    assert_eq!(digests[0], digests[2]);
}
