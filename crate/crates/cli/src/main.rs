use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use hikma_core::clock::SystemClock;
use hikma_core::intake::{DatasetMeta, DuaItem};
use hikma_core::ledger::LedgerError;
use hikma_core::orchestrator::{
    compute_metrics, run_from_config, Config, DatasetFixture, Engine, Gate, GateDecision, PipelineError,
};
use hikma_core::track::{PaperId, Track};

#[derive(Parser)]
#[command(name = "hikma", version, about = "Drive papers through the HIKMA pipeline")]
struct Cli {
    /// TOML configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Ledger directory; overrides `ledger_dir` from the config.
    #[arg(long, global = true)]
    ledger: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Register a dataset and open a paper on it.
    Register {
        #[arg(long)]
        url: String,
        #[arg(long)]
        track: Track,
        /// License text or SPDX identifier.
        #[arg(long)]
        license: String,
        /// DUA checklist as `item=yes;item=no`.
        #[arg(long, default_value = "")]
        dua: String,
        #[arg(long)]
        title: String,
        #[arg(long, default_value = "")]
        description: String,
        /// Semicolon-separated variable names.
        #[arg(long, default_value = "")]
        variables: String,
    },
    Generate { paper: PaperId },
    Review { paper: PaperId },
    Triage { paper: PaperId },
    Revise { paper: PaperId },
    #[command(name = "camera-ready")]
    CameraReady { paper: PaperId },
    Present { paper: PaperId },
    /// Build, publish and audit the release, then archive approved papers.
    Archive {
        #[arg(long)]
        publish_dir: Option<PathBuf>,
    },
    /// Record a human checkpoint decision.
    Approve {
        gate: Gate,
        paper: PaperId,
        #[arg(long)]
        reject: bool,
        #[arg(long, default_value = "")]
        note: String,
        #[arg(long)]
        approver: Option<String>,
    },
    /// Re-check a published directory against the latest manifest.
    Audit {
        #[arg(long)]
        publish_dir: Option<PathBuf>,
    },
    Metrics,
    #[command(name = "export-workbook")]
    ExportWorkbook {
        #[arg(long)]
        track: Track,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every shipped or configured dataset through the whole pipeline.
    Run {
        #[arg(long)]
        publish_dir: Option<PathBuf>,
    },
}

#[derive(Debug)]
struct Failure {
    kind: &'static str,
    message: String,
}

impl<E: Into<PipelineError>> From<E> for Failure {
    fn from(e: E) -> Self {
        let e = e.into();
        let kind = match &e {
            PipelineError::Ledger(
                LedgerError::IllegalTransition { .. }
                | LedgerError::Terminal { .. }
                | LedgerError::StageMismatch { .. }
                | LedgerError::UnmetGate { .. },
            ) => "precondition",
            PipelineError::Ledger(LedgerError::UnknownPaper(_) | LedgerError::UnknownDataset(_)) => "not_found",
            PipelineError::Ledger(_) => "ledger",
            PipelineError::Config(_) => "config",
            PipelineError::Agent(_) => "agent",
            PipelineError::Precondition { .. } => "precondition",
            PipelineError::Archive(_) => "archive",
            _ => "pipeline",
        };
        Failure { kind, message: e.to_string() }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { kind: "usage", message: message.into() }
}

fn load_config(cli: &Cli) -> Result<Config, Failure> {
    let mut config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(l) = &cli.ledger {
        config.ledger_dir = Some(l.clone());
    }
    Ok(config)
}

fn persistent_engine(config: &Config) -> Result<Engine, Failure> {
    if config.ledger_dir.is_none() {
        return Err(usage("this command needs --ledger or ledger_dir in the config"));
    }
    Ok(Engine::from_config(config)?)
}

fn publish_dir(flag: &Option<PathBuf>, config: &Config) -> Result<PathBuf, Failure> {
    flag.clone()
        .or_else(|| config.publish_dir.clone())
        .ok_or_else(|| usage("needs --publish-dir or publish_dir in the config"))
}

fn parse_dua(s: &str) -> Result<Vec<DuaItem>, Failure> {
    s.split(';')
        .map(str::trim)
        .filter(|i| !i.is_empty())
        .map(|i| match i.rsplit_once('=') {
            Some((name, "yes")) => Ok(DuaItem::new(name.trim(), true)),
            Some((name, "no")) => Ok(DuaItem::new(name.trim(), false)),
            _ => Err(usage(format!("DUA item {i:?} must be name=yes or name=no"))),
        })
        .collect()
}

fn stage_json(engine: &Engine, pid: &PaperId) -> Value {
    let stage = engine.ledger().paper(pid).map(|p| p.stage.to_string());
    json!({ "paper_id": pid, "stage": stage })
}

fn execute(cli: &Cli) -> Result<Value, Failure> {
    let config = load_config(cli)?;
    let clock = SystemClock;
    match &cli.command {
        Command::Run { publish_dir: flag } => {
            let dir = publish_dir(flag, &config)?;
            let (engine, summary) = run_from_config(&config, &dir)?;
            let metrics = compute_metrics(engine.ledger());
            Ok(json!({ "summary": summary, "metrics": metrics }))
        }
        Command::Register { url, track, license, dua, title, description, variables } => {
            let engine = persistent_engine(&config)?;
            let fixture = DatasetFixture {
                track: *track,
                url: url.clone(),
                meta: DatasetMeta {
                    title: title.clone(),
                    description: description.clone(),
                    variables: variables.split(';').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect(),
                },
                license: license.clone(),
                dua: parse_dua(dua)?,
            };
            let ds = engine.register_dataset(&fixture, hikma_core::clock::Clock::now(&clock))?;
            let serial = engine.ledger().snapshot().papers_in_track(*track).count() as u32 + 1;
            let pid = PaperId::new(*track, serial);
            engine.register_paper(&pid, &ds.dataset_id, &fixture.meta, &clock)?;
            Ok(json!({ "dataset_id": ds.dataset_id, "paper_id": pid, "ip_risk": ds.ip_risk }))
        }
        Command::Generate { paper } => {
            let engine = persistent_engine(&config)?;
            let res = engine.generate(paper, &clock)?;
            Ok(json!({ "paper_id": paper, "draft": res.output_hash, "stage": stage_json(&engine, paper)["stage"] }))
        }
        Command::Review { paper } => {
            let engine = persistent_engine(&config)?;
            engine.review(paper, &clock)?;
            Ok(stage_json(&engine, paper))
        }
        Command::Triage { paper } => {
            let engine = persistent_engine(&config)?;
            let decision = engine.triage(paper, &clock)?;
            let record = engine.ledger().paper(paper).and_then(|p| p.triage.clone());
            Ok(json!({ "paper_id": paper, "decision": decision, "triage": record }))
        }
        Command::Revise { paper } => {
            let engine = persistent_engine(&config)?;
            let outcome = engine.revise(paper, &clock)?;
            Ok(json!({ "paper_id": paper, "check": outcome }))
        }
        Command::CameraReady { paper } => {
            let engine = persistent_engine(&config)?;
            let report = engine.camera_ready(paper, &clock)?;
            Ok(json!({ "paper_id": paper, "report": report, "stage": stage_json(&engine, paper)["stage"] }))
        }
        Command::Present { paper } => {
            let engine = persistent_engine(&config)?;
            let script = engine.present(paper, &clock)?;
            Ok(json!({ "paper_id": paper, "duration_s": script.total_s(), "blocks": script.blocks.len() }))
        }
        Command::Approve { gate, paper, reject, note, approver } => {
            let mut config = config.clone();
            if let Some(a) = approver {
                config.approver = a.clone();
            }
            let engine = persistent_engine(&config)?;
            let decision = if *reject { GateDecision::Reject } else { GateDecision::Approve };
            let stage = engine.approve(paper, *gate, decision, note, &clock)?;
            Ok(json!({ "paper_id": paper, "gate": gate, "decision": decision, "stage": stage.to_string() }))
        }
        Command::Archive { publish_dir: flag } => {
            let engine = persistent_engine(&config)?;
            let dir = publish_dir(flag, &config)?;
            let pending = engine
                .ledger()
                .snapshot()
                .papers
                .values()
                .any(|p| p.stage == hikma_core::stage::Stage::Presented && p.audit_passed != Some(true));
            let release = if pending {
                let out = engine.release(&dir, &clock)?;
                Some(json!({ "manifest_hash": out.manifest.manifest_hash, "audit": out.report }))
            } else {
                None
            };
            let archived = engine.archive_approved(&clock)?;
            if !archived.is_empty() {
                engine.proceedings(&clock)?;
            }
            Ok(json!({ "release": release, "archived": archived }))
        }
        Command::Audit { publish_dir: flag } => {
            let engine = persistent_engine(&config)?;
            let dir = publish_dir(flag, &config)?;
            let manifest = hikma_core::archive::latest_manifest(engine.ledger())
                .map_err(PipelineError::from)?
                .ok_or_else(|| usage("no manifest has been recorded"))?;
            let report = hikma_core::archive::audit(&manifest, &dir).map_err(PipelineError::from)?;
            if !report.passed() {
                return Err(Failure {
                    kind: "audit",
                    message: serde_json::to_string(&report).expect("report serializes"),
                });
            }
            Ok(serde_json::to_value(&report).expect("report serializes"))
        }
        Command::Metrics => {
            let engine = persistent_engine(&config)?;
            Ok(serde_json::to_value(compute_metrics(engine.ledger())).expect("metrics serialize"))
        }
        Command::ExportWorkbook { track, out } => {
            let engine = persistent_engine(&config)?;
            let csv = engine.ledger().export_workbook(*track);
            match out {
                Some(path) => {
                    write(path, &csv)?;
                    Ok(json!({ "track": track, "written": path }))
                }
                None => {
                    let _ = std::io::stdout().write_all(csv.as_bytes());
                    Ok(Value::Null)
                }
            }
        }
    }
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure { kind: "io", message: format!("{}: {e}", path.display()) })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(Value::Null) => ExitCode::SUCCESS,
        Ok(v) => {
            // A closed pipe (e.g. `| head`) is not an error worth reporting.
            let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(&v).expect("json value serializes"));
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("{}", json!({ "error": f.kind, "message": f.message }));
            ExitCode::FAILURE
        }
    }
}
