use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn ptd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ptd"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn ptd")
}

fn ok(args: &[&str]) -> String {
    let out = ptd(args);
    assert!(
        out.status.success(),
        "ptd {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const TABLE: &str = r#"
textures = ["woven", "dotted", "braided"]
artistic = ["", "art deco"]
spatial = ["", "spiraled"]
enhancer = ["", "vivid"]
color = ["", "blue"]
"#;

/// Builds a small refined dataset: 3 textures × 16 prompts × 3 images.
fn dataset(dir: &Path, workers: &str) -> std::path::PathBuf {
    let table = dir.join("table.toml");
    std::fs::write(&table, TABLE).unwrap();
    let prompts = dir.join("prompts.jsonl");
    ok(&[
        "prompts",
        "emit",
        "--table",
        s(&table),
        "--out",
        s(&prompts),
    ]);
    let root = dir.join("ds");
    ok(&[
        "generate",
        "--manifest",
        s(&prompts),
        "--n",
        "3",
        "--size",
        "64",
        "--out",
        s(&root),
        "--flag-schedule",
        "words:vivid",
        "--max-attempts",
        "4",
        "--workers",
        workers,
    ]);
    let manifest = root.join("manifest.jsonl");
    ok(&[
        "embed",
        "--manifest",
        s(&manifest),
        "--mock-dims",
        "8,12,10,6",
        "--batch",
        "7",
    ]);
    ok(&[
        "refine",
        "all",
        "--manifest",
        s(&manifest),
        "--patch",
        "16",
        "--workers",
        workers,
    ]);
    manifest
}

#[test]
fn prompt_count_of_builtin_table() {
    assert_eq!(ok(&["prompts", "emit", "--count"]).trim(), "48384");
    let two = ok(&[
        "prompts",
        "emit",
        "--count",
        "--template",
        "{artistic} {spatial} {enhancer} {color} {texture} texture",
        "--template",
        "a {color} {texture} surface, {artistic}, {spatial}, {enhancer}",
    ]);
    assert_eq!(two.trim(), "96768");

    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("default.toml");
    std::fs::write(&table, ok(&["prompts", "table"])).unwrap();
    let count = ok(&["prompts", "emit", "--count", "--table", s(&table)]);
    assert_eq!(count.trim(), "48384");
}

#[test]
fn pipeline_writes_consistent_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path(), "3");
    let root = manifest.parent().unwrap();

    // 3 textures × 2^4 optional-slot combinations.
    let prompts = std::fs::read_to_string(dir.path().join("prompts.jsonl")).unwrap();
    assert_eq!(prompts.lines().count(), 48);

    let verify = ok(&["verify", "--root", s(root)]);
    assert!(verify.contains("0 problems"), "{verify}");

    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(root.join("refine_report.json")).unwrap())
            .unwrap();
    let totals: Vec<u64> = report
        .as_array()
        .unwrap()
        .iter()
        .map(|r| {
            r["classes"]
                .as_object()
                .unwrap()
                .values()
                .map(|c| c["kept"].as_u64().unwrap())
                .sum()
        })
        .collect();
    assert_eq!(totals.len(), 3);
    assert!(totals.windows(2).all(|w| w[1] <= w[0]), "{totals:?}");

    // Only "vivid" prompts are flagged (on odd seeds), so every one of them
    // sees a flag and every other word co-occurs with vivid half the time.
    let flags: Value = serde_json::from_str(&ok(&["flags", "--root", s(root)])).unwrap();
    let rate = |word: &str, field: &str| {
        flags["words"]
            .as_array()
            .unwrap()
            .iter()
            .find(|w| w["word"] == word)
            .unwrap()[field]
            .as_f64()
            .unwrap()
    };
    assert_eq!(rate("vivid", "prompt_flag_ratio"), 1.0);
    assert_eq!(rate("art deco", "prompt_flag_ratio"), 0.5);
    assert_eq!(rate("woven", "prompt_flag_ratio"), 0.5);
    assert!(rate("vivid", "image_flag_ratio") > rate("woven", "image_flag_ratio"));
}

#[test]
fn worker_count_does_not_change_outputs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ma = dataset(a.path(), "1");
    let mb = dataset(b.path(), "6");
    assert_eq!(std::fs::read(&ma).unwrap(), std::fs::read(&mb).unwrap());
    for kind in ["clip_image", "inception_pool", "classifier_probs"] {
        let f = format!("features/{kind}.ptdf");
        assert_eq!(
            std::fs::read(ma.parent().unwrap().join(&f)).unwrap(),
            std::fs::read(mb.parent().unwrap().join(&f)).unwrap(),
            "{kind}"
        );
    }
}

#[test]
fn verify_fails_on_orphan_feature_rows() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path(), "2");
    let root = manifest.parent().unwrap();
    let text = std::fs::read_to_string(&manifest).unwrap();
    let kept: Vec<&str> = text.lines().skip(1).collect();
    std::fs::write(&manifest, kept.join("\n") + "\n").unwrap();
    let out = ptd(&["verify", "--root", s(root)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn metrics_and_tav_reports() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path(), "2");
    let m = s(&manifest);
    let root = manifest.parent().unwrap();

    let is: Value = serde_json::from_str(&ok(&[
        "metrics",
        "is",
        "--manifest",
        m,
        "--splits",
        "2",
        "--per-class",
    ]))
    .unwrap();
    let mean = is["overall"]["mean"].as_f64().unwrap();
    assert!((1.0..=10.0).contains(&mean), "{mean}");
    assert_eq!(is["per_class"].as_object().unwrap().len(), 3);

    let fid: Value = serde_json::from_str(&ok(&[
        "metrics",
        "fid",
        "--manifest",
        m,
        "--slice",
        "all",
        "--mock-dims",
        "8,12,10,6",
        "--reference",
        s(&root.join("woven")),
    ]))
    .unwrap();
    assert!(fid["fid"]["all"].as_f64().unwrap() > 0.0);

    let png = dir.path().join("map.png");
    let spectrum: Value = serde_json::from_str(&ok(&[
        "metrics",
        "spectrum",
        "--manifest",
        m,
        "--side",
        "32",
        "--map",
        s(&png),
        "--reference",
        s(&root.join("woven")),
    ]))
    .unwrap();
    assert_eq!(spectrum["dataset"]["radial"].as_array().unwrap().len(), 17);
    assert!(spectrum["distance"].as_f64().unwrap() >= 0.0);
    assert!(png.exists());

    let csv = dir.path().join("pairs.csv");
    let pairs: Value = serde_json::from_str(&ok(&[
        "metrics",
        "clipstats",
        "--manifest",
        m,
        "--top",
        "3",
        "--csv",
        s(&csv),
    ]))
    .unwrap();
    let live = std::fs::read_to_string(&manifest)
        .unwrap()
        .lines()
        .filter(|l| {
            let r: Value = serde_json::from_str(l).unwrap();
            r["survives"]["clip"] == true
        })
        .count() as u64;
    let texture_color: u64 = pairs["table"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|p| p["family"] == "texture×color")
        .map(|p| p["n"].as_u64().unwrap())
        .sum();
    assert_eq!(texture_color, live);
    assert!(std::fs::read_to_string(&csv)
        .unwrap()
        .starts_with("family,first,second,n,mean,median"));

    let tav_csv = dir.path().join("tav.csv");
    let tav: Value = serde_json::from_str(&ok(&[
        "tav",
        "--manifest",
        m,
        "--top",
        "2",
        "--csv",
        s(&tav_csv),
    ]))
    .unwrap();
    assert_eq!(tav["top"].as_object().unwrap().len(), 3);
    assert_eq!(
        std::fs::read_to_string(&tav_csv).unwrap().lines().count(),
        1 + 3 * 2
    );
}

#[test]
fn eval_assign_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path(), "2");
    let m = s(&manifest);
    let ratings = dir.path().join("ratings.jsonl");
    let r = s(&ratings);
    ok(&[
        "eval",
        "assign",
        "--manifest",
        m,
        "--ratings",
        r,
        "--n",
        "2",
        "--per",
        "5",
        "--seed",
        "3",
    ]);
    let sessions: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("sessions.json")).unwrap())
            .unwrap();
    assert_eq!(sessions.as_array().unwrap().len(), 2);
    assert_eq!(sessions[0]["session_id"], "session-01");

    let ids: Vec<u64> = sessions[0]["image_ids"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_u64().unwrap())
        .collect();
    let mut log = String::new();
    for (i, id) in ids.iter().enumerate() {
        log.push_str(&format!(
            "{{\"session_id\":\"session-01\",\"image_id\":{id},\"quality\":1,\"representativeness\":1,\"timestamp\":{i}}}\n"
        ));
        log.push_str(&format!(
            "{{\"session_id\":\"session-01\",\"image_id\":{id},\"quality\":4,\"representativeness\":5,\"timestamp\":{}}}\n",
            100 + i
        ));
    }
    std::fs::write(&ratings, log).unwrap();

    // Assignments are frozen once ratings exist.
    assert!(!ptd(&[
        "eval",
        "assign",
        "--manifest",
        m,
        "--ratings",
        r,
        "--seed",
        "3"
    ])
    .status
    .success());

    let out = dir.path().join("stages.json");
    let text = ok(&[
        "eval",
        "report",
        "--manifest",
        m,
        "--ratings",
        r,
        "--out",
        s(&out),
    ]);
    assert!(text.starts_with("stage"), "{text}");
    let table: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(table["rows"][0]["n"], 5);
    assert_eq!(table["rows"][0]["quality"], 4.0);
    assert_eq!(table["rows"][0]["representativeness"], 5.0);
}

#[test]
fn bad_arguments_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let out = ptd(&[
        "refine",
        "all",
        "--manifest",
        s(&dir.path().join("missing.jsonl")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.jsonl"));
    let out = ptd(&[
        "prompts",
        "emit",
        "--count",
        "--template",
        "{texture} {nope}",
    ]);
    assert!(!out.status.success());
}
