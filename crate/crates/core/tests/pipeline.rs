use std::fs;
use std::path::{Path, PathBuf};

use vrattract::analysis::ReportConfig;
use vrattract::classify::{CvConfig, ModelFile};
use vrattract::features::FeatureMatrix;
use vrattract::io::{read_session, write_session, IngestOptions, SESSION_FILE};
use vrattract::model::Category;
use vrattract::pipeline::{run_pipeline, session_replay, PipelineConfig};
use vrattract::synth::{generate_corpus, generate_session, write_corpus, GeneratorConfig};

fn small(seed: u64) -> GeneratorConfig {
    GeneratorConfig {
        n_face: 12,
        n_cloth: 12,
        n_color: 12,
        n_composite: 12,
        seed,
        ..Default::default()
    }
}

fn quick_config() -> PipelineConfig {
    PipelineConfig {
        cv: CvConfig {
            n_folds: 5,
            n_repeats: 2,
        },
        report: ReportConfig {
            sweep_sizes: vec![20],
            ablation: true,
        },
        ..Default::default()
    }
}

fn session_dir(root: &Path, seed: u64) -> PathBuf {
    let (s, _) = generate_session(&small(seed)).unwrap();
    let dir = root.join(&s.session_id);
    write_session(&s, &dir).unwrap();
    dir
}

fn status(out: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(out.join("status.json")).unwrap()).unwrap()
}

#[test]
fn run_directory_contract() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = session_dir(tmp.path(), 1);
    let out = tmp.path().join("run");
    let report = run_pipeline(&quick_config(), std::slice::from_ref(&dir), &out).unwrap();
    assert_eq!(status(&out)["status"], "ok");
    for f in ["config.toml", "run.log", "model.json", "report.json", "report.csv", "report.svg"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let sid = &report.sessions[0].session_id;
    let sdir = out.join("sessions").join(sid);
    let m = FeatureMatrix::read_csv(&sdir.join("features.csv")).unwrap();
    assert_eq!((m.n_rows(), m.n_cols()), (48, 252));
    assert!(sdir.join("preprocess.json").is_file());
    assert_eq!(PipelineConfig::load(&out.join("config.toml")).unwrap(), quick_config());
    let models = ModelFile::read(&out.join("model.json")).unwrap();
    assert_eq!(models.get(Some(sid)).unwrap().session_id.as_deref(), Some(sid.as_str()));

    let s = &report.sessions[0];
    assert!(s.stages.filter && s.stages.ica && s.stages.despike && s.stages.plr);
    assert_eq!(s.accuracy.categories.len(), 4);
    assert_eq!(s.accuracy.ablation.len(), 3);
    assert!(report.summary.iter().any(|e| e.key == "all" && e.paper_reference == Some(0.692)));
    let svg = fs::read_to_string(out.join("report.svg")).unwrap();
    assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));

    // A second run into the same directory appends to the log.
    let before = fs::read_to_string(out.join("run.log")).unwrap();
    let again = run_pipeline(&quick_config(), &[dir], &out).unwrap();
    let after = fs::read_to_string(out.join("run.log")).unwrap();
    assert!(after.starts_with(&before) && after.len() > before.len());
    assert_eq!(again, report);
}

#[test]
fn reports_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = session_dir(tmp.path(), 2);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_pipeline(&quick_config(), std::slice::from_ref(&dir), &a).unwrap();
    run_pipeline(&quick_config(), &[dir], &b).unwrap();
    for f in ["report.json", "report.csv", "report.svg", "model.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn ablation_is_marked_in_the_report() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = session_dir(tmp.path(), 3);
    let mut cfg = quick_config();
    cfg.preprocess.enable_ica = false;
    cfg.preprocess.enable_despike = false;
    cfg.report.ablation = false;
    let out = tmp.path().join("run");
    let report = run_pipeline(&cfg, &[dir], &out).unwrap();
    let s = &report.sessions[0];
    assert!(!s.stages.ica && !s.stages.despike && s.stages.filter && s.stages.plr);
    assert_eq!(s.n_ica_removed, None);
    let sid = &s.session_id;
    let pre: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("sessions").join(sid).join("preprocess.json")).unwrap())
            .unwrap();
    assert_eq!(pre["ica_applied"], false);
    assert_eq!(pre["despike_applied"], false);
}

#[test]
fn failures_leave_a_status_marker() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = session_dir(tmp.path(), 4);
    fs::write(dir.join(SESSION_FILE), "{ not json").unwrap();
    let out = tmp.path().join("run");
    assert!(run_pipeline(&quick_config(), &[dir], &out).is_err());
    let st = status(&out);
    assert_eq!(st["status"], "failed");
    assert_eq!(st["stage"], "ingest");
    assert!(!st["error"].as_str().unwrap().is_empty());
    assert!(fs::read_to_string(out.join("run.log")).unwrap().contains("failed"));

    let out = tmp.path().join("empty");
    assert!(run_pipeline(&quick_config(), &[], &out).is_err());
    assert_eq!(status(&out)["status"], "failed");
}

fn replay_session(seed: u64) -> vrattract::model::Session {
    let gen = GeneratorConfig {
        n_face: 10,
        n_cloth: 10,
        n_color: 10,
        n_composite: 10,
        seed,
        ..Default::default()
    };
    generate_session(&gen).unwrap().0
}

#[test]
fn replay_logs_ten_predictions() {
    let s = replay_session(5);
    let cfg = PipelineConfig::default();
    let log = session_replay(&s, &cfg, &[3, 6, 9]).unwrap();
    assert_eq!(log.records.len(), 10);
    assert_eq!(log.versions_used, 4);
    let versions: Vec<usize> = log.records.iter().map(|r| r.model_version).collect();
    assert_eq!(versions, [0, 0, 0, 1, 1, 1, 2, 2, 2, 3]);

    let mut buf = Vec::new();
    log.write_to(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("trial,event_id,predicted,posterior,user_label,model_version"));
    assert_eq!(lines.count(), 10);

    let frozen = session_replay(&s, &cfg, &[]).unwrap();
    assert_eq!(frozen.versions_used, 1);
    assert!(frozen.records.iter().all(|r| r.model_version == 0));
    assert!(session_replay(&replay_session(5), &cfg, &[3, 6, 9]).unwrap() == log);
}

#[test]
fn replay_agrees_with_strong_signal() {
    let cfg = PipelineConfig::default();
    let mean: f64 = (10..16)
        .map(|seed| session_replay(&replay_session(seed), &cfg, &[3, 6, 9]).unwrap().agreement)
        .sum::<f64>()
        / 6.0;
    assert!(mean >= 0.8, "{mean}");
}

#[test]
fn corpus_defaults_follow_the_protocol() {
    let cfg = GeneratorConfig::default();
    let (s, _) = generate_session(&cfg).unwrap();
    assert_eq!(s.events.len(), 144);
    let count = |c: Category| s.events.iter().filter(|e| e.category == c).count();
    assert_eq!(
        [Category::Face, Category::Cloth, Category::Color, Category::Composite].map(count),
        [30, 30, 30, 54]
    );

    let small = GeneratorConfig {
        n_face: 4,
        n_cloth: 4,
        n_color: 4,
        n_composite: 4,
        ..Default::default()
    };
    let corpus = generate_corpus(&small).unwrap();
    assert_eq!(corpus.sessions.len(), 13);
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    write_corpus(&corpus, &a).unwrap();
    write_corpus(&generate_corpus(&small).unwrap(), &b).unwrap();
    let dirs: Vec<PathBuf> = fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_dir())
        .collect();
    assert_eq!(dirs.len(), 13);
    for d in &dirs {
        let name = d.file_name().unwrap();
        for f in fs::read_dir(d).unwrap() {
            let f = f.unwrap().path();
            let twin = b.join(name).join(f.file_name().unwrap());
            assert_eq!(fs::read(&f).unwrap(), fs::read(twin).unwrap());
        }
        let back = read_session(d, IngestOptions::default()).unwrap();
        assert!(corpus.sessions.contains(&back));
    }
}
