mod common;

use std::path::Path;

use common::{random_pool, run, run_in, write_pool_file};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

fn corpus_file(dir: &Path, pools: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pools: Vec<_> = (0..pools)
        .map(|p| random_pool(&mut rng, &format!("p{p}"), 6, 5))
        .collect();
    let path = dir.join("pools.jsonl");
    write_pool_file(&path, &pools);
    path.to_string_lossy().into_owned()
}

fn records(path: &Path) -> Vec<Value> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

fn lowest_argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let pools = corpus_file(dir.path(), 3, 1);
    let out = dir.path().join("r.jsonl");
    let out = out.to_str().unwrap();

    assert_eq!(run(&["rerank", "--pools", &pools, "--out", out]).status.code(), Some(0));

    let missing = run(&["rerank", "--pools", "/nonexistent/pools.jsonl", "--out", out]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).starts_with("error[io]"));

    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{not json\n").unwrap();
    let strict = run(&["rerank", "--pools", bad.to_str().unwrap(), "--strict", "--out", out]);
    assert_eq!(strict.status.code(), Some(1));

    for args in [
        vec!["rerank", "--pools", pools.as_str(), "--weight", "1.5", "--out", out],
        vec!["rerank", "--pools", pools.as_str(), "--workers", "0", "--out", out],
        vec![
            "rerank",
            "--pools",
            pools.as_str(),
            "--consistency",
            "external:missing",
            "--out",
            out,
        ],
        vec!["evaluate", "--pools", pools.as_str(), "--metrics", "bleu", "--out", out],
        vec![
            "sweep",
            "--pools",
            pools.as_str(),
            "--axis",
            "weight",
            "--points",
            "0,2",
            "--out",
            out,
        ],
    ] {
        let o = run(&args);
        assert_eq!(
            o.status.code(),
            Some(2),
            "{args:?}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
}

#[test]
fn weight_endpoints_select_single_column_argmax() {
    let dir = tempfile::tempdir().unwrap();
    let pools = corpus_file(dir.path(), 20, 2);
    for (w, column) in [("0", "raw_sis"), ("1", "raw_sen")] {
        let out = dir.path().join(format!("w{w}.jsonl"));
        let o = run(&[
            "rerank",
            "--pools",
            &pools,
            "--weight",
            w,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success());
        for rec in records(&out) {
            let col = floats(&rec["scores"][column]);
            assert_eq!(
                rec["selected_index"].as_u64().unwrap() as usize,
                lowest_argmax(&col),
                "{column}"
            );
        }
    }
}

#[test]
fn outputs_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let pools = corpus_file(dir.path(), 24, 3);
    let mut snapshots: Vec<Vec<Vec<u8>>> = Vec::new();
    for workers in ["1", "3", "8"] {
        let sub = dir.path().join(format!("w{workers}"));
        std::fs::create_dir(&sub).unwrap();
        let common = ["--workers", workers, "--pools", pools.as_str()];
        let steps: [&[&str]; 3] = [
            &["rerank", "--out", "r.jsonl"],
            &["evaluate", "--iterations", "500", "--out", "e.json", "--table", "e.txt"],
            &["sweep", "--axis", "pseudo-refs", "--points", "1,2,5", "--out", "s.json"],
        ];
        for step in steps {
            let args: Vec<&str> = step[..1].iter().chain(&common).chain(&step[1..]).copied().collect();
            let o = run_in(&sub, &args);
            assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        }
        let files = [
            "r.jsonl",
            "r.jsonl.manifest.json",
            "e.json",
            "e.txt",
            "e.json.manifest.json",
            "s.json",
        ];
        snapshots.push(files.iter().map(|f| std::fs::read(sub.join(f)).unwrap()).collect());
    }
    assert_eq!(snapshots[0], snapshots[1]);
    assert_eq!(snapshots[0], snapshots[2]);
}

#[test]
fn manifest_records_inputs_and_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let pools = corpus_file(dir.path(), 2, 4);
    let out = dir.path().join("r.jsonl");
    assert!(run(&[
        "rerank",
        "--pools",
        &pools,
        "--seed",
        "9",
        "--out",
        out.to_str().unwrap()
    ])
    .status
    .success());
    let m: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.jsonl.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["command"], "rerank");
    assert_eq!(m["seed"], 9);
    assert_eq!(m["config"]["rerank"]["weight"], 0.75);
    assert_eq!(m["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
    assert_eq!(m["outputs"][0]["file"], "r.jsonl");
    assert!(m["scorers"]["consistency"]
        .as_str()
        .unwrap()
        .starts_with("builtin:source_overlap@"));
    assert!(m["scorers"]["utility"]
        .as_str()
        .unwrap()
        .starts_with("builtin_lexical:rouge_1@"));
}

#[test]
fn failed_commit_leaves_no_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let pools = corpus_file(dir.path(), 3, 5);
    let out = dir.path().join("e.json");
    let table = dir.path().join("missing-dir").join("e.txt");
    let o = run(&[
        "evaluate",
        "--pools",
        &pools,
        "--iterations",
        "100",
        "--out",
        out.to_str().unwrap(),
        "--table",
        table.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!out.exists());
    assert!(!dir.path().join("e.json.manifest.json").exists());
    let leftovers: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert_eq!(leftovers, vec!["pools.jsonl".to_string()]);
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let pools = corpus_file(dir.path(), 4, 6);
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(&cfg, "weight = 0.0\nutility = \"rouge_l\"\nseed = 5\n").unwrap();
    let out = dir.path().join("r.jsonl");
    let o = run(&[
        "rerank",
        "--pools",
        &pools,
        "--config",
        cfg.to_str().unwrap(),
        "--weight",
        "0.5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.jsonl.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config"]["rerank"]["weight"], 0.5);
    assert_eq!(m["config"]["rerank"]["utility"], "rouge_l");
    assert_eq!(m["seed"], 5);

    std::fs::write(&cfg, "weight = \"heavy\"\n").unwrap();
    let o = run(&[
        "rerank",
        "--pools",
        &pools,
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn oracle_and_significance_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let pools = corpus_file(dir.path(), 30, 7);
    let p = |n: &str| dir.path().join(n).to_string_lossy().into_owned();
    assert!(run(&[
        "oracle",
        "--pools",
        &pools,
        "--metric",
        "rouge_1",
        "--out",
        &p("o.jsonl")
    ])
    .status
    .success());
    assert!(run(&["rerank", "--pools", &pools, "--out", &p("r.jsonl")])
        .status
        .success());
    let o = run(&[
        "significance",
        "--pools",
        &pools,
        "--a",
        &p("o.jsonl"),
        "--b",
        &p("r.jsonl"),
        "--metric",
        "rouge_1",
        "--iterations",
        "2000",
        "--out",
        &p("sig.json"),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let sig: Value = serde_json::from_str(&std::fs::read_to_string(p("sig.json")).unwrap()).unwrap();
    assert_eq!(sig["system_a"], "o");
    assert!(sig["mean_a"].as_f64().unwrap() >= sig["mean_b"].as_f64().unwrap());
    let pv = sig["p_value"].as_f64().unwrap();
    assert_eq!(sig["significant"].as_bool().unwrap(), pv < 0.05 / 3.0);
}

#[test]
fn iaa_command() {
    let dir = tempfile::tempdir().unwrap();
    let ann = dir.path().join("ann.jsonl");
    std::fs::write(
        &ann,
        "{\"sample_id\":\"s1\",\"rankings\":{\"x\":[1,2,3,4],\"y\":[1,3,2,4]}}\n\
         {\"sample_id\":\"s2\",\"rankings\":{\"x\":[1,2,3],\"y\":[3,2,1],\"z\":[1,2,3]}}\n",
    )
    .unwrap();
    let out = dir.path().join("iaa.json");
    let o = run(&[
        "iaa",
        "--annotations",
        ann.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let mean = v["mean_max_tau_b"].as_f64().unwrap();
    assert!((mean - (2.0 / 3.0 + 1.0) / 2.0).abs() < 1e-12);
}

#[test]
fn correlate_command() {
    let dir = tempfile::tempdir().unwrap();
    let pools = corpus_file(dir.path(), 10, 8);
    let out = dir.path().join("c.json");
    let o = run(&[
        "correlate",
        "--pools",
        &pools,
        "--weights",
        "0,1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let labels: Vec<&str> = v["labels"]
        .as_array()
        .unwrap()
        .iter()
        .map(|l| l.as_str().unwrap())
        .collect();
    assert_eq!(&labels[..2], &["source_overlap-0.0", "MBR-1.0"]);
    assert_eq!(v["values"][0][0], 1.0);
}
