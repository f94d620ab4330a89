use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

fn motionid(ws: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_motionid"))
        .args(args)
        .env("MOTIONID_WORKSPACE", ws)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn ok(ws: &Path, args: &[&str]) -> String {
    let out = motionid(ws, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

const TRAIN: &[&str] = &["train", "--groups", "2", "--rounds", "15", "--num-leaves", "8", "--min-data-in-leaf", "5", "--min-child-weight", "1"];

fn pipeline(ws: &Path) {
    ok(ws, &["synth", "--users", "12", "--sessions", "6", "--notes", "40", "--seed", "5"]);
    ok(ws, &["featurize", "--samples-per-user", "40", "--eval-samples", "20", "--ratios", "0.5,0.2,0.1,0.2", "--seed", "5"]);
    ok(ws, TRAIN);
}

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn end_to_end_synthetic_run() {
    let dir = tempfile::tempdir().unwrap();
    let ws = dir.path();
    pipeline(ws);
    let report = ok(ws, &["evaluate", "--samples-per-user", "20", "--curve", "1,5,20"]);
    assert!(report.contains("users_evaluated = 12"), "{report}");
    let acc: f64 = report
        .lines()
        .find_map(|l| l.strip_prefix("per_user_accuracy = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(acc > 0.5, "{report}");
    assert!(ws.join("per_user.csv").is_file());
    for stage in ["synth", "featurize", "train", "evaluate"] {
        let m: serde_json::Value = serde_json::from_slice(&std::fs::read(ws.join(format!("{stage}.manifest.json"))).unwrap()).unwrap();
        assert_eq!(m["stage"], stage);
    }
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(ws.join("train.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config"]["seed"], 0);
    assert_eq!(m["config"]["groups"], 2);

    // Training replays are identified by resubstitution.
    let replay = ws.join("replays/user00007/user00007_0000.midr");
    let ranked = ok(ws, &["identify", replay.to_str().unwrap(), "--top", "3"]);
    let first = ranked.lines().next().unwrap();
    assert!(first.starts_with("1\tuser00007\t"), "{ranked}");
    assert_eq!(ranked.lines().count(), 3);

    // Unchanged inputs skip the stage.
    assert!(ok(ws, TRAIN).contains("up to date"));
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    pipeline(a.path());
    pipeline(b.path());
    let (ta, tb) = (tree(a.path()), tree(b.path()));
    assert_eq!(ta.keys().collect::<Vec<_>>(), tb.keys().collect::<Vec<_>>());
    for (k, v) in &ta {
        assert!(tb[k] == *v, "{k} differs");
    }
}

#[test]
fn adduser_rewrites_two_group_files() {
    let dir = tempfile::tempdir().unwrap();
    let ws = dir.path();
    pipeline(ws);
    let other = tempfile::tempdir().unwrap();
    ok(other.path(), &["synth", "--users", "13", "--sessions", "6", "--notes", "40", "--seed", "5"]);
    let new_user = other.path().join("replays/user00012");
    let mut files: Vec<String> = std::fs::read_dir(&new_user)
        .unwrap()
        .map(|e| e.unwrap().path().to_string_lossy().into_owned())
        .collect();
    files.sort();
    let mut args = vec!["adduser", "--samples-per-user", "40"];
    args.extend(files.iter().map(String::as_str));
    let out = ok(ws, &args);
    assert!(out.contains("retrained layer1_group") && out.contains("layer2_group"), "{out}");
    let ranked = ok(ws, &["identify", &files[0], "--top", "1"]);
    assert!(ranked.starts_with("1\tuser00012\t"), "{ranked}");
}

#[test]
fn missing_workspace_fails_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere");
    let out = motionid(&missing, &["synth", "--users", "2"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("motionid synth:"));
    assert!(!missing.exists());
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn stages_need_their_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = motionid(dir.path(), &["train"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("run featurize first"));
    let out = motionid(dir.path(), &["featurize", "--ratios", "1,2"]);
    assert_eq!(out.status.code(), Some(2));
}
