use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn vrattract(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vrattract"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let o = vrattract(args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small two-subject corpus, one session directory per subject.
fn corpus(root: &Path) -> Vec<PathBuf> {
    fs::create_dir_all(root).unwrap();
    let gen = root.join("gen.toml");
    fs::write(
        &gen,
        "n_face = 10\nn_cloth = 10\nn_color = 10\nn_composite = 10\nn_subjects = 2\n",
    )
    .unwrap();
    let dir = root.join("corpus");
    ok(&["synth", "--config", s(&gen), "--seed", "3", "--out", s(&dir)]);
    assert!(dir.join("truth.json").is_file());
    let mut sessions: Vec<PathBuf> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_dir())
        .collect();
    sessions.sort();
    assert_eq!(sessions.len(), 2);
    sessions
}

#[test]
fn end_to_end_commands() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let sessions = corpus(root);
    let session = s(&sessions[0]);
    ok(&["validate", session, s(&sessions[1])]);

    let pre = root.join("pre");
    ok(&["preprocess", session, "--no-ica", "--out", s(&pre)]);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(pre.join("preprocess.json")).unwrap()).unwrap();
    assert_eq!(report["ica_applied"], false);

    let layout = ok(&["features", "--layout"]);
    assert_eq!(layout.lines().count(), 252);

    let feats = root.join("f.csv");
    ok(&["features", session, "--out", s(&feats)]);

    let ranking: serde_json::Value = serde_json::from_str(&ok(&["select", s(&feats), "--k", "5"])).unwrap();
    assert_eq!(ranking["order"].as_array().unwrap().len(), 5);

    let model = root.join("model.json");
    ok(&["train", s(&feats), "--out", s(&model)]);
    let preds = ok(&["predict", s(&feats), "--model", s(&model)]);
    let mut lines = preds.lines();
    assert_eq!(lines.next(), Some("event_id,predicted,posterior,decision"));
    assert_eq!(lines.count(), 40);

    let cfg = root.join("cv.toml");
    fs::write(&cfg, "[cv]\nn_folds = 5\nn_repeats = 2\n\n[report]\nsweep_sizes = [20]\n").unwrap();
    let cv: serde_json::Value = serde_json::from_str(&ok(&["cv", s(&feats), "--config", s(&cfg)])).unwrap();
    assert_eq!(cv["repeat_accuracies"].as_array().unwrap().len(), 2);

    let run = root.join("run");
    let summary = ok(&["report", s(&root.join("corpus")), "--config", s(&cfg), "--out", s(&run)]);
    assert!(summary.contains("all"));
    let status: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run.join("status.json")).unwrap()).unwrap();
    assert_eq!(status["status"], "ok");
    assert_eq!(fs::read_dir(run.join("sessions")).unwrap().count(), 2);

    let replay = ok(&["session-replay", session, "--schedule", "3,6,9"]);
    let rows: Vec<&str> = replay.lines().collect();
    assert_eq!(rows[0], "trial,event_id,predicted,posterior,user_label,model_version");
    assert_eq!(rows.len(), 11);
    let frozen = ok(&["session-replay", session, "--schedule", ""]);
    assert!(frozen.lines().skip(1).all(|l| l.ends_with(",0")));
}

#[test]
fn synth_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let a = corpus(&tmp.path().join("a"));
    let b = corpus(&tmp.path().join("b"));
    for (x, y) in a.iter().zip(&b) {
        for f in fs::read_dir(x).unwrap() {
            let f = f.unwrap().path();
            assert_eq!(fs::read(&f).unwrap(), fs::read(y.join(f.file_name().unwrap())).unwrap());
        }
    }
}

#[test]
fn exit_codes() {
    assert_eq!(vrattract(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(vrattract(&["select"]).status.code(), Some(2));
    assert_eq!(vrattract(&["features"]).status.code(), Some(2));

    let tmp = tempfile::tempdir().unwrap();
    let sessions = corpus(tmp.path());
    let session_file = fs::read_dir(&sessions[0])
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.extension().is_some_and(|e| e == "json"))
        .unwrap();
    fs::write(&session_file, "{ broken").unwrap();
    assert_eq!(vrattract(&["validate", s(&sessions[0])]).status.code(), Some(1));

    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "bogus = 1\n").unwrap();
    let o = vrattract(&["features", "--layout", "--config", s(&bad)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!o.stderr.is_empty());

    let run = tmp.path().join("run");
    let o = vrattract(&["report", s(&sessions[0]), "--out", s(&run)]);
    assert_eq!(o.status.code(), Some(1));
    let status: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run.join("status.json")).unwrap()).unwrap();
    assert_eq!(status["status"], "failed");
}
