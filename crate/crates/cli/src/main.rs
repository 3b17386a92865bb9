use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use vrattract::classify::{cross_validate, train, ModelFile};
use vrattract::features::{layout, FeatureMatrix};
use vrattract::io::{read_session, SESSION_FILE};
use vrattract::model::{validate_session_with, Label, Session};
use vrattract::pipeline::{run_pipeline, session_features, session_replay, PipelineConfig};
use vrattract::preprocess::preprocess_session;
use vrattract::select::rank_features;
use vrattract::synth::{generate_corpus, write_corpus, GeneratorConfig};

/// Attractiveness recognition from EEG and eye-tracking sessions.
#[derive(Parser)]
#[command(name = "vrattract", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML configuration (pipeline settings; generator settings for `synth`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file or directory, depending on the subcommand.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    no_ica: bool,
    #[arg(long, global = true)]
    no_despike: bool,
    #[arg(long, global = true)]
    no_plr: bool,
    /// Accept EEG sampling rates other than 250/500 Hz.
    #[arg(long, global = true)]
    allow_any_rate: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus with a planted like/dislike signature.
    Synth {
        #[arg(long)]
        effect_size: Option<f64>,
        #[arg(long)]
        subjects: Option<usize>,
    },
    /// Check session contracts; exits 1 on any violation.
    Validate { sessions: Vec<PathBuf> },
    /// Run the preprocessing chain and write its report.
    Preprocess { session: PathBuf },
    /// Extract the feature matrix of a session.
    Features {
        session: Option<PathBuf>,
        /// Print the canonical column layout and exit.
        #[arg(long)]
        layout: bool,
    },
    /// Rank features of a feature matrix.
    Select {
        features: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Train a model on a feature matrix.
    Train { features: PathBuf },
    /// Predict rows of a feature matrix.
    Predict {
        features: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Which model of a multi-session model file to use.
        #[arg(long)]
        session: Option<String>,
    },
    /// Repeated k-fold cross-validation on a feature matrix.
    Cv { features: PathBuf },
    /// Full pipeline over sessions or corpus directories into a run directory.
    Report { inputs: Vec<PathBuf> },
    /// Offline replay of the incremental prediction protocol.
    SessionReplay {
        session: PathBuf,
        /// Comma-separated 1-based retraining points; empty disables retraining.
        #[arg(long)]
        schedule: Option<String>,
    },
}

enum Failure {
    Domain(anyhow::Error),
    Usage(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Domain(e)
    }
}

impl From<vrattract::Error> for Failure {
    fn from(e: vrattract::Error) -> Self {
        Failure::Domain(e.into())
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(anyhow::anyhow!(msg.into()))
}

fn pipeline_config(g: &Global) -> Result<PipelineConfig> {
    let mut cfg = match &g.config {
        Some(p) => PipelineConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if g.no_ica {
        cfg.preprocess.enable_ica = false;
    }
    if g.no_despike {
        cfg.preprocess.enable_despike = false;
    }
    if g.no_plr {
        cfg.preprocess.enable_plr = false;
    }
    cfg.allow_any_rate |= g.allow_any_rate;
    Ok(cfg)
}

fn load_session(path: &Path, cfg: &PipelineConfig) -> Result<Session> {
    read_session(path, cfg.ingest_options()).with_context(|| format!("reading session {}", path.display()))
}

/// Session directories named directly, or found one level below a corpus directory.
fn session_dirs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.join(SESSION_FILE).is_file() {
            out.push(p.clone());
            continue;
        }
        let mut found: Vec<PathBuf> = fs::read_dir(p)
            .with_context(|| format!("reading {}", p.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|d| d.join(SESSION_FILE).is_file())
            .collect();
        if found.is_empty() {
            bail!("no sessions under {}", p.display());
        }
        found.sort();
        out.extend(found);
    }
    Ok(out)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(p, text)?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn label_name(l: Label) -> &'static str {
    match l {
        Label::Like => "like",
        Label::Dislike => "dislike",
    }
}

fn run(cli: Cli) -> std::result::Result<(), Failure> {
    let g = &cli.global;
    let out = g.out.as_deref();
    match cli.command {
        Command::Synth { effect_size, subjects } => {
            let mut gen = match &g.config {
                Some(p) => toml::from_str::<GeneratorConfig>(&fs::read_to_string(p).map_err(anyhow::Error::from)?)
                    .map_err(|e| usage(format!("{}: {e}", p.display())))?,
                None => GeneratorConfig::default(),
            };
            if let Some(e) = effect_size {
                gen.effect_size = e;
            }
            if let Some(n) = subjects {
                gen.n_subjects = n;
            }
            if let Some(s) = g.seed {
                gen.seed = s;
            }
            let dir = out.ok_or_else(|| usage("synth needs --out <dir>"))?;
            let corpus = generate_corpus(&gen)?;
            write_corpus(&corpus, dir)?;
            log::info!("wrote {} sessions to {}", corpus.sessions.len(), dir.display());
        }
        Command::Validate { sessions } => {
            if sessions.is_empty() {
                return Err(usage("validate needs at least one session"));
            }
            let cfg = pipeline_config(g)?;
            let mut bad = 0usize;
            for dir in session_dirs(&sessions)? {
                let s = load_session(&dir, &cfg)?;
                let diags = validate_session_with(&s, cfg.allow_any_rate);
                if diags.is_empty() {
                    println!("{}: ok", s.session_id);
                }
                for d in &diags {
                    println!("{}: {d}", s.session_id);
                }
                bad += diags.len();
            }
            if bad > 0 {
                return Err(Failure::Domain(anyhow::anyhow!("{bad} contract violation(s)")));
            }
        }
        Command::Preprocess { session } => {
            let cfg = pipeline_config(g)?;
            let s = load_session(&session, &cfg)?;
            let (_, report) = preprocess_session(&s, &cfg.preprocess)?;
            emit(
                out.map(|d| d.join("preprocess.json")).as_deref(),
                &(serde_json::to_string_pretty(&report).map_err(anyhow::Error::from)? + "\n"),
            )?;
        }
        Command::Features { session, layout: show_layout } => {
            let cfg = pipeline_config(g)?;
            if show_layout {
                for c in layout(&cfg.features) {
                    println!("{}", c.name);
                }
                return Ok(());
            }
            let session = session.ok_or_else(|| usage("features needs a session or --layout"))?;
            let s = load_session(&session, &cfg)?;
            let (_, _, m, skipped) = session_features(&s, &cfg)?;
            for sk in &skipped {
                log::warn!("skipped {}: {}", sk.event_id, sk.reason);
            }
            let path = out.ok_or_else(|| usage("features needs --out <file.csv>"))?;
            m.write_csv(path)?;
        }
        Command::Select { features, k, alpha } => {
            let cfg = pipeline_config(g)?;
            let m = FeatureMatrix::read_csv(&features)?;
            let mut ranking = rank_features(&m, alpha.unwrap_or(cfg.train.selection.alpha))?;
            if let Some(k) = k {
                let keep = vrattract::select::select_top_k(&ranking, k)?;
                ranking.order = keep;
                ranking.k = Some(k);
            }
            emit(out, &(serde_json::to_string_pretty(&ranking).map_err(anyhow::Error::from)? + "\n"))?;
        }
        Command::Train { features } => {
            let cfg = pipeline_config(g)?;
            let m = FeatureMatrix::read_csv(&features)?;
            let model = train(&m, &cfg.train, cfg.seed)?;
            let path = out.ok_or_else(|| usage("train needs --out <model.json>"))?;
            ModelFile::new(vec![model]).write(path)?;
        }
        Command::Predict { features, model, session } => {
            let file = ModelFile::read(&model)?;
            let model = file.get(session.as_deref())?;
            let m = FeatureMatrix::read_csv(&features)?;
            let preds = model.predict_matrix(&m)?;
            let mut text = String::from("event_id,predicted,posterior,decision\n");
            for (id, p) in m.event_ids.iter().zip(preds) {
                text += &format!("{id},{},{:.6},{:.6}\n", label_name(p.label), p.posterior, p.decision);
            }
            emit(out, &text)?;
        }
        Command::Cv { features } => {
            let cfg = pipeline_config(g)?;
            let m = FeatureMatrix::read_csv(&features)?;
            let r = cross_validate(&m, &cfg.train, &cfg.cv, cfg.seed, None)?;
            emit(out, &(serde_json::to_string_pretty(&r).map_err(anyhow::Error::from)? + "\n"))?;
        }
        Command::Report { inputs } => {
            if inputs.is_empty() {
                return Err(usage("report needs at least one session or corpus directory"));
            }
            let cfg = pipeline_config(g)?;
            let dir = out.ok_or_else(|| usage("report needs --out <run dir>"))?;
            let report = run_pipeline(&cfg, &session_dirs(&inputs)?, dir)?;
            for e in &report.summary {
                println!("{:<10} {:.3} ({} sessions)", e.key, e.mean, e.n_sessions);
            }
        }
        Command::SessionReplay { session, schedule } => {
            let cfg = pipeline_config(g)?;
            let schedule = match schedule {
                None => cfg.replay.schedule.clone(),
                Some(s) => s
                    .split(',')
                    .map(str::trim)
                    .filter(|t| !t.is_empty())
                    .map(|t| t.parse::<usize>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|e| usage(format!("bad --schedule: {e}")))?,
            };
            let s = load_session(&session, &cfg)?;
            let log = session_replay(&s, &cfg, &schedule)?;
            match out {
                Some(p) => log.write_csv(p)?,
                None => log.write_to(std::io::stdout().lock())?,
            }
            eprintln!(
                "agreement {:.3} over {} trials, {} model versions",
                log.agreement,
                log.records.len(),
                log.versions_used
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Domain(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(e)) => {
            eprintln!("usage error: {e:#}");
            ExitCode::from(2)
        }
    }
}
