use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn savetag(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_savetag"))
        .args(args)
        .output()
        .expect("run savetag")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Small, fast configuration over the demo fixture.
fn write_config(dir: &Path) -> std::path::PathBuf {
    let fast = |hidden: Vec<usize>, lr: f64, dropout: f64| {
        json!({
            "epochs": 30,
            "learning_rate": lr,
            "dropout": dropout,
            "hidden_dims": hidden,
            "weight_decay": 0.0,
        })
    };
    let cfg = json!({
        "dataset": dir.join("data"),
        "out": dir.join("out"),
        "encoder": { "dim": 32 },
        "classifier": fast(vec![16], 0.01, 0.5),
        "confidence": fast(vec![16], 0.01, 0.0),
        "seeds": [0, 1],
        "edge_factor": 4,
    });
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

#[test]
fn fixture_augment_train_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let o = savetag(&["fixture", "--dir", data.to_str().unwrap()]);
    assert!(o.status.success(), "{o:?}");
    assert!(stdout(&o).contains("420 nodes"));

    let config = write_config(dir.path());
    let config = config.to_str().unwrap();
    let o = savetag(&["--config", config, "augment"]);
    assert!(o.status.success(), "{o:?}");
    assert!(stdout(&o).contains("420 -> 456 nodes"), "{}", stdout(&o));
    let out = dir.path().join("out");
    for f in ["artifacts.json", "augment_report.json", "gen_cache.jsonl", "augmented/nodes.jsonl"] {
        assert!(out.join(f).exists(), "missing {f}");
    }

    let o = savetag(&["--config", config, "train-eval", "--grid", "origin,llm_C"]);
    assert!(o.status.success(), "{o:?}");
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report-origin-llm_C.json")).unwrap()).unwrap();
    let cells: Vec<&str> = report["cells"].as_array().unwrap().iter().map(|c| c["cell"].as_str().unwrap()).collect();
    assert_eq!(cells, ["origin", "llm_C"]);
    assert_eq!(report["cells"][0]["macro_f1"]["n"], 2);

    let o = savetag(&["--config", config, "stats"]);
    assert!(o.status.success(), "{o:?}");
    let stats: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(stats.is_object());
}

#[test]
fn edge_none_leaves_every_synthetic_node_isolated() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert!(savetag(&["fixture", "--dir", data.to_str().unwrap()]).status.success());
    let config = write_config(dir.path());
    let o = savetag(&["--config", config.to_str().unwrap(), "--edge", "none", "augment"]);
    assert!(o.status.success(), "{o:?}");
    assert!(stdout(&o).contains("0 edges added, 36 isolated"), "{}", stdout(&o));
}

#[test]
fn unknown_cell_and_missing_dataset_are_errors() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope");
    let o = savetag(&["--dataset", missing.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "augment"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));

    let o = savetag(&["--out", dir.path().to_str().unwrap(), "train-eval", "--grid", "bogus"]);
    assert!(!o.status.success());
}

fn verify_lines(o: &Output) -> Vec<(bool, String)> {
    stdout(o)
        .lines()
        .filter_map(|l| {
            let mut parts = l.split_whitespace();
            let status = parts.next()?;
            let name = parts.next()?.to_string();
            match status {
                "PASS" => Some((true, name)),
                "FAIL" => Some((false, name)),
                _ => None,
            }
        })
        .collect()
}

#[test]
fn verify_exit_status_tracks_failed_checks() {
    let o = savetag(&["verify"]);
    let lines = verify_lines(&o);
    assert!(lines.len() >= 6, "{}", stdout(&o));
    assert_eq!(o.status.success(), lines.iter().all(|(ok, _)| *ok));
    for (ok, name) in &lines {
        // The stated margin bound is the only check expected to fail.
        if name != "margin_bound" {
            assert!(ok, "{name} failed:\n{}", stdout(&o));
        }
    }
}

#[test]
fn verify_injected_bug_breaks_contraction() {
    let o = savetag(&["verify", "--inject-bug"]);
    assert!(!o.status.success());
    let lines = verify_lines(&o);
    assert!(lines.contains(&(false, "contraction".to_string())), "{}", stdout(&o));
}

#[test]
fn verify_with_pure_self_weight_keeps_isolation() {
    let o = savetag(&["verify", "--alpha", "1"]);
    let lines = verify_lines(&o);
    assert!(lines.contains(&(true, "isolation".to_string())), "{}", stdout(&o));
}
