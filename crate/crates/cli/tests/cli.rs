use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = r#"
seed = 7
mode = "desk"

[sequence]
source = "mobius"
length = 5000

[schedule]
N = 2
M = 6
eps_table = [0.21, 0.125, 0.055]
delta_table = [0.21, 0.125, 0.055]
r = [1.5]
desk_jumps = { 7 = 3 }
desk_p = { 1 = 1 }
horizon = 3

[schedule.caps]
max_level = 2
max_family = 60
max_candidates = 20000

[checks]
n_list = [30, 100, 200, 300]
diameter_samples = 10
"#;

fn forge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_forge")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(root).unwrap() {
        let path = entry.unwrap().path();
        let rel = path.file_name().unwrap().to_string_lossy().into_owned();
        if path.is_dir() {
            for (k, v) in tree(&path) {
                out.insert(format!("{rel}/{k}"), v);
            }
        } else {
            out.insert(rel, std::fs::read(&path).unwrap());
        }
    }
    out
}

#[test]
fn bad_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.toml",
        &SMALL.replace("seed = 7", "seed = 7\nflavour = 1"),
    );
    let out = forge(&["schedule", "--config", s(&cfg)]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("flavour"));
    let missing = forge(&["build", "--config", s(&cfg), "--out", s(&dir.path().join("run"))]);
    assert_eq!(code(&missing), 2);
}

#[test]
fn no_passers_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "tight.toml",
        &SMALL.replace("[0.21, 0.125, 0.055]", "[0.01, 0.01, 0.01]"),
    );
    let out = forge(&["build", "--config", s(&cfg), "--out", s(&dir.path().join("run"))]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("level 1"));
}

#[test]
fn builds_verify_and_catch_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.toml", SMALL);
    let run = dir.path().join("run");
    let out = forge(&["build", "--config", s(&cfg), "--out", s(&run)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["levels"].as_array().unwrap().len(), 3);

    let ok = forge(&["verify", "--out", s(&run), "--config", s(&cfg)]);
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stdout));
    assert!(run.join("verify.json").is_file());
    assert!(run.join("uncorrelation.csv").is_file());

    // Only the selected section runs.
    let entropy = forge(&["verify", "--out", s(&run), "--checks", "entropy"]);
    assert_eq!(code(&entropy), 0);
    let text = String::from_utf8_lossy(&entropy.stdout);
    assert!(text.contains("entropy_identity"));
    assert!(!text.contains("reverify") && !text.contains("uniform_uncorrelation"));

    let other = write_config(dir.path(), "other.toml", &SMALL.replace("seed = 7", "seed = 8"));
    assert_eq!(code(&forge(&["verify", "--out", s(&run), "--config", s(&other)])), 2);
    assert_eq!(code(&forge(&["verify", "--out", s(&run), "--checks", "colour"])), 2);

    // Complementing a block maps every code image to plus or minus itself,
    // so it would still pass; a repeated block does not.
    let blocks = run.join("level_2/blocks.txt");
    let text = std::fs::read_to_string(&blocks).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    lines[3] = lines[2].clone();
    std::fs::write(&blocks, lines.join("\n") + "\n").unwrap();
    let bad = forge(&["verify", "--out", s(&run), "--checks", "reverify", "--quiet"]);
    assert_eq!(code(&bad), 4);
    let text = String::from_utf8_lossy(&bad.stdout);
    assert!(text.contains("FAIL blocks_digest"), "{text}");
    assert!(text.contains("FAIL reverify"), "{text}");
}

#[test]
fn builds_are_deterministic_and_resume_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.toml", SMALL);
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    for out in [&a, &b] {
        assert_eq!(code(&forge(&["build", "--config", s(&cfg), "--out", s(out)])), 0);
    }
    assert_eq!(tree(&a), tree(&b));

    assert_eq!(
        code(&forge(&["build", "--config", s(&cfg), "--out", s(&c), "--levels", "1"])),
        0
    );
    assert!(!c.join("level_2").exists());
    let resumed = forge(&["build", "--config", s(&cfg), "--out", s(&c)]);
    assert_eq!(code(&resumed), 0);
    let summary: serde_json::Value = serde_json::from_slice(&resumed.stdout).unwrap();
    assert_eq!(summary["levels"][1]["resumed"], true);
    assert_eq!(summary["levels"][2]["resumed"], false);
    assert_eq!(tree(&a), tree(&c));

    // A different config may not reuse the directory.
    let other = write_config(dir.path(), "other.toml", &SMALL.replace("seed = 7", "seed = 8"));
    assert_eq!(code(&forge(&["build", "--config", s(&other), "--out", s(&c)])), 2);
}

#[test]
fn seq_commands() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mu.txt");
    assert_eq!(code(&forge(&["seq", "mobius", "--n", "12", "--output", s(&path)])), 0);
    let text = std::fs::read_to_string(&path).unwrap();
    let values: Vec<i32> = text.lines().map(|l| l.trim().parse().unwrap()).collect();
    assert_eq!(values, [1, -1, -1, 0, -1, 1, -1, 0, 0, 1, -1, 0]);

    let ok = forge(&["seq", "verify", "--n", "200000"]);
    assert_eq!(code(&ok), 0);
    let report: serde_json::Value = serde_json::from_slice(&ok.stdout).unwrap();
    assert_eq!(report["entries"].as_array().unwrap().len(), 55);

    let ones = dir.path().join("ones.txt");
    std::fs::write(&ones, "1\n".repeat(500)).unwrap();
    assert_eq!(code(&forge(&["seq", "verify", "--input", s(&ones), "--t-max", "3"])), 4);
    assert_eq!(code(&forge(&["seq", "verify"])), 1);
}
