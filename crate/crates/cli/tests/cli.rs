use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
seeds = [0]

[data.world]
num_drugs = 80
num_relations = 4
latent_dim = 4
feature_dim = 6
edge_threshold = 1.0
seed = 5

[teacher]
dim = 8
epochs = 3
batch_size = 64
lr = 0.01

[student]
hidden = 16
epochs = 3
batch_size = 64
optimizer = "adam"
lr = 0.01

[eval]
bootstrap_iterations = 100
"#;

fn ddi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ddi"))
        .args(args)
        .output()
        .expect("ddi runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn setup() -> (tempfile::TempDir, std::path::PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.toml");
    fs::write(&cfg, TINY).unwrap();
    (dir, cfg)
}

#[test]
fn gen_writes_a_loadable_world() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("w.toml");
    fs::write(&spec, "num_drugs = 40\nnum_relations = 3\nedge_threshold = 1.0\n").unwrap();
    let out = dir.path().join("world");
    let o = ddi(&["gen", "--spec", s(&spec), "--out", s(&out), "--seed", "9"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["triples.tsv", "features.txt", "kg_embeddings.txt", "world.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    assert!(fs::read_to_string(out.join("world.json")).unwrap().contains("\"seed\": 9"));
}

#[test]
fn staged_commands_match_a_full_run() {
    let (dir, cfg) = setup();
    let full = dir.path().join("full");
    let staged = dir.path().join("staged");
    let o = ddi(&["run", "-c", s(&cfg), "-o", s(&full)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("student"));
    for cmd in [
        "split",
        "pools",
        "train-teacher",
        "distill",
        "baselines",
        "score",
        "calibrate",
        "eval",
        "report",
        "plot",
    ] {
        let o = ddi(&[cmd, "-c", s(&cfg), "-o", s(&staged)]);
        assert_eq!(code(&o), 0, "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
    }
    for m in ["teacher", "student", "feature-mlp", "kg-distmult", "concat-mlp"] {
        let rel = format!("seed-0/reports/{m}.json");
        assert_eq!(fs::read(full.join(&rel)).unwrap(), fs::read(staged.join(&rel)).unwrap());
    }
    assert!(staged.join("seed-0/plots/roc.svg").is_file());
    assert!(staged.join("aggregate/summary.txt").is_file());

    let reports: Vec<String> = ["teacher", "student", "feature-mlp"]
        .iter()
        .map(|m| full.join(format!("seed-0/reports/{m}.json")).display().to_string())
        .collect();
    let mut args = vec!["compare", "--baseline", "feature-mlp"];
    args.extend(reports.iter().map(String::as_str));
    let o = ddi(&args);
    assert_eq!(code(&o), 0);
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), 4);
}

#[test]
fn tampered_pool_exits_with_checksum_code() {
    let (dir, cfg) = setup();
    let out = dir.path().join("run");
    for cmd in ["split", "pools", "train-teacher"] {
        assert_eq!(code(&ddi(&[cmd, "-c", s(&cfg), "-o", s(&out)])), 0);
    }
    let pool = out.join("seed-0/pools/train.tsv");
    let text = fs::read_to_string(&pool).unwrap();
    fs::write(&pool, text.replacen('\t', "\t1", 1)).unwrap();
    let o = ddi(&["distill", "-c", s(&cfg), "-o", s(&out)]);
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("pools/train.tsv"));
}

#[test]
fn planted_test_node_edge_exits_with_leakage_code() {
    let (dir, cfg) = setup();
    let out = dir.path().join("run");
    for cmd in ["split", "pools", "train-teacher"] {
        assert_eq!(code(&ddi(&[cmd, "-c", s(&cfg), "-o", s(&out)])), 0);
    }
    let test_edges = fs::read_to_string(out.join("seed-0/split/test.tsv")).unwrap();
    let planted = test_edges.lines().find(|l| !l.starts_with('#')).unwrap();
    let extra = dir.path().join("extra.tsv");
    fs::write(&extra, format!("{planted}\n")).unwrap();
    let o = ddi(&["distill", "-c", s(&cfg), "-o", s(&out), "--extra-kd", s(&extra)]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("leakage"));
}

#[test]
fn config_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let bad = dir.path().join("bad.toml");
    for text in ["[data.world]\n[eval]\ntarget_tpr = 1.5\n", "[data.world]\nbogus = 1\n", "[data]\n"] {
        fs::write(&bad, text).unwrap();
        let o = ddi(&["split", "-c", s(&bad), "-o", s(&out)]);
        assert_eq!(code(&o), 2, "{text}");
    }
    // Running a later stage before its inputs exist is also a config error.
    let (_d, cfg) = setup();
    assert_eq!(code(&ddi(&["score", "-c", s(&cfg), "-o", s(&out)])), 2);
    assert_eq!(code(&ddi(&["split"])), 2);
}

#[test]
fn comparing_reports_from_different_pools_is_refused() {
    let (dir, cfg) = setup();
    let out = dir.path().join("run");
    let o = ddi(&["run", "-c", s(&cfg), "-o", s(&out), "--seed", "0"]);
    assert_eq!(code(&o), 0);
    let o = ddi(&["run", "-c", s(&cfg), "-o", s(&out), "--seed", "1"]);
    assert_eq!(code(&o), 0);
    let a = out.join("seed-0/reports/student.json");
    let b = out.join("seed-1/reports/teacher.json");
    assert_eq!(code(&ddi(&["compare", s(&a), s(&b)])), 4);
}
