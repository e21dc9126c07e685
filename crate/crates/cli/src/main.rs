//! `kinetrain`: knowledge base, calibration, sessions, gateway, replay and
//! evaluation from one binary.
//!
//! Exit codes: 0 success, 1 operational error, 2 usage error.

mod config;

use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use kinetrain_core::ems::{run_calibration, LoopbackDevice, TcpDeviceLink};
use kinetrain_core::eval::{closed_loop_benefit, metrics_of_log, score_workflow};
use kinetrain_core::flight_sim::{FlightCondition, TraineeSkill};
use kinetrain_core::knowledge_base::{load_corpus, ChunkParams, HashEmbedder, KnowledgeBase, SearchFilter, Tier};
use kinetrain_core::session::gateway::{Gateway, GatewayConfig};
use kinetrain_core::session::{read_log_file, replay, run_session, SessionConfig};
use kinetrain_core::TaskId;
use serde_json::json;

use crate::config::{BackendKind, FileConfig};

#[derive(Debug, Parser)]
#[command(name = "kinetrain", version, about = "Flight-skill coaching loop with EMS cues")]
struct Cli {
    /// Config file (TOML). Defaults to $KINETRAIN_CONFIG, then ./kinetrain.toml.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Print machine-readable JSON instead of tables.
    #[arg(long, global = true)]
    json: bool,
    /// Log level filter, e.g. `info` or `kinetrain_core=debug`.
    #[arg(long, global = true, default_value = "warn", value_name = "FILTER")]
    log_level: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build or query the knowledge index.
    #[command(subcommand)]
    Kb(KbCommand),
    /// Ramp each stimulator channel and record the trainee's thresholds.
    Calibrate(CalibrateArgs),
    /// Fly a batch session and write its log.
    Run(RunArgs),
    /// Serve the gateway and trainer UI for interactive sessions.
    Serve(ServeArgs),
    /// Recompute a log and report disagreements with what it stores.
    Replay(ReplayArgs),
    /// Score session logs.
    Eval(EvalArgs),
}

#[derive(Debug, Subcommand)]
enum KbCommand {
    /// Chunk and embed a directory of markdown documents.
    Build {
        /// Directory of `.md` documents with `+++` front matter.
        dir: PathBuf,
        /// Index file to write.
        #[arg(long, default_value = "kb.ktix", value_name = "PATH")]
        out: PathBuf,
    },
    /// Top-k chunks for a query.
    Query {
        /// Query text.
        text: String,
        /// Number of hits.
        #[arg(long, short, default_value_t = 3)]
        k: usize,
        /// Restrict to a tier (repeatable).
        #[arg(long, value_name = "TIER")]
        tier: Vec<Tier>,
        /// Drop chunks tagged for other tasks.
        #[arg(long, value_name = "TASK")]
        task: Option<TaskId>,
        /// Index file; the configured index or the bundled corpus otherwise.
        #[arg(long, value_name = "PATH")]
        index: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    /// Trainee identifier stored in the profile.
    #[arg(long, default_value = "trainee")]
    subject: String,
    /// Hard current ceiling for the ramp, in mA.
    #[arg(long, default_value_t = 20.0, value_name = "MA")]
    ceiling_ma: f64,
    /// Stimulator socket; overrides the configured device.
    #[arg(long, value_name = "ADDR")]
    device: Option<String>,
    /// Profile file to write.
    #[arg(long, default_value = "calibration.json", value_name = "PATH")]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SkillPreset {
    Novice,
    Perfect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Condition {
    Normal,
    Abnormal,
}

impl From<Condition> for FlightCondition {
    fn from(c: Condition) -> Self {
        match c {
            Condition::Normal => FlightCondition::Normal,
            Condition::Abnormal => FlightCondition::Abnormal,
        }
    }
}

/// Settings shared by `run` and `serve`.
#[derive(Debug, Args)]
struct SessionArgs {
    /// Task to fly.
    #[arg(long, default_value = "steep_turn", value_name = "TASK")]
    task: TaskId,
    /// Built-in scenario condition.
    #[arg(long, value_enum, default_value_t = Condition::Normal)]
    condition: Condition,
    /// Scenario file instead of the built-in one.
    #[arg(long, value_name = "PATH")]
    scenario: Option<PathBuf>,
    /// Guidance backend; overrides the config file.
    #[arg(long, value_enum)]
    backend: Option<BackendKind>,
    /// Artificial oracle latency in ms; overrides the config file.
    #[arg(long, value_name = "MS")]
    delay_ms: Option<u64>,
    /// Per-tick chain deadline in ms (below 1000).
    #[arg(long, value_name = "MS")]
    deadline_ms: Option<u64>,
    /// Deliver EMS cues.
    #[arg(long, value_enum, default_value_t = OnOff::On)]
    assist: OnOff,
    /// Seed for the synthetic trainee.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Synthetic trainee preset.
    #[arg(long, value_enum, default_value_t = SkillPreset::Novice)]
    skill: SkillPreset,
    /// Stimulator socket; overrides the config file.
    #[arg(long, value_name = "ADDR")]
    device: Option<String>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    session: SessionArgs,
    /// JSON-lines telemetry to analyze instead of flying the scenario.
    #[arg(long, value_name = "PATH")]
    telemetry: Option<PathBuf>,
    /// Log file to write; `<task>-<condition>-<seed>.jsonl` by default.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[command(flatten)]
    session: SessionArgs,
    /// Listen port; overrides the config file.
    #[arg(long)]
    port: Option<u16>,
    /// Listen address; overrides the config file.
    #[arg(long, value_name = "ADDR")]
    bind: Option<String>,
    /// Built UI to serve at `/`.
    #[arg(long, value_name = "PATH")]
    static_dir: Option<PathBuf>,
    /// Directory for session logs.
    #[arg(long, value_name = "PATH")]
    log_dir: Option<PathBuf>,
    /// Tick period in ms.
    #[arg(long, value_name = "MS")]
    tick_ms: Option<u64>,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    /// Session log.
    log: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Session logs to score.
    #[arg(required = true)]
    logs: Vec<PathBuf>,
    /// Also fly the steep turn with and without assist over this many seeds.
    #[arg(long, value_name = "N")]
    benefit_seeds: Option<u64>,
}

fn session_config(args: &SessionArgs, file: &FileConfig) -> anyhow::Result<SessionConfig> {
    let mut backend = file.backend.clone();
    if let Some(kind) = args.backend {
        backend.kind = kind;
    }
    if let Some(d) = args.delay_ms {
        backend.delay_ms = d;
    }
    Ok(SessionConfig {
        task: args.task,
        condition: args.condition.into(),
        scenario_path: args.scenario.clone(),
        telemetry_path: None,
        backend: backend.choice()?,
        assist: args.assist == OnOff::On,
        seed: args.seed,
        skill: match args.skill {
            SkillPreset::Novice => TraineeSkill::novice(),
            SkillPreset::Perfect => TraineeSkill::perfect(),
        },
        profile_path: file.profile.clone(),
        deadline_ms: args.deadline_ms.unwrap_or(file.deadline_ms),
        device_addr: args.device.clone().or_else(|| file.device_addr.clone()),
        kb_index: file.kb_index.clone(),
        task_spec_path: file.task_spec_path(args.task),
    })
}

fn print_json(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json"));
}

fn cmd_kb(cmd: KbCommand, file: &FileConfig, json_out: bool) -> anyhow::Result<()> {
    match cmd {
        KbCommand::Build { dir, out } => {
            let docs = load_corpus(&dir)?;
            let kb = KnowledgeBase::build(&docs, Arc::new(HashEmbedder::default()), &ChunkParams::default())?;
            kb.save(&out)?;
            if json_out {
                print_json(&json!({ "documents": docs.len(), "chunks": kb.index().len(), "index": out }));
            } else {
                println!("{} documents, {} chunks -> {}", docs.len(), kb.index().len(), out.display());
            }
        }
        KbCommand::Query { text, k, tier, task, index } => {
            let kb = match index.or_else(|| file.kb_index.clone()) {
                Some(p) => KnowledgeBase::load(&p, Arc::new(HashEmbedder::default()))?,
                None => KnowledgeBase::builtin(),
            };
            let filter = SearchFilter {
                tiers: tier.into_iter().collect(),
                require_tags: Vec::new(),
                task: task.map(|t| t.as_str().to_string()),
            };
            let hits = kb.search(&text, k, &filter)?;
            if json_out {
                print_json(&serde_json::to_value(&hits)?);
            } else {
                for h in &hits {
                    println!("{:>2}  {:.4}  {}  [{}]", h.rank, h.score, h.chunk.chunk_id, h.chunk.tier);
                    println!("    {}", h.chunk.text.lines().next().unwrap_or_default());
                }
            }
        }
    }
    Ok(())
}

fn cmd_calibrate(args: CalibrateArgs, file: &FileConfig, json_out: bool) -> anyhow::Result<()> {
    let mut link: Box<dyn kinetrain_core::ems::DeviceLink> = match args.device.or_else(|| file.device_addr.clone()) {
        Some(addr) => Box::new(TcpDeviceLink::connect(&addr, Duration::from_millis(500))?),
        None => {
            eprintln!("no device configured; pulses go to a simulated stimulator");
            Box::new(LoopbackDevice::default())
        }
    };
    let stdin = std::io::stdin();
    let profile = run_calibration(stdin.lock(), std::io::stderr(), link.as_mut(), &args.subject, args.ceiling_ma)?;
    std::fs::write(&args.out, serde_json::to_string_pretty(&profile)?)
        .with_context(|| format!("writing {}", args.out.display()))?;
    if json_out {
        print_json(&serde_json::to_value(&profile)?);
    } else {
        println!("profile written to {}", args.out.display());
    }
    Ok(())
}

fn cmd_run(args: RunArgs, file: &FileConfig, json_out: bool) -> anyhow::Result<()> {
    let mut config = session_config(&args.session, file)?;
    config.telemetry_path = args.telemetry.clone();
    let out_path = args.out.unwrap_or_else(|| {
        PathBuf::from(format!("{}-{}-{}.jsonl", config.task.as_str(), config.condition, config.seed))
    });
    let out = run_session(&config)?;
    let mut w =
        BufWriter::new(std::fs::File::create(&out_path).with_context(|| format!("creating {}", out_path.display()))?);
    out.log.write_to(&mut w)?;
    w.flush()?;

    let records = &out.log.records;
    let passed = records.iter().filter(|r| r.verdict.overall).count();
    let commands: usize = records.iter().map(|r| r.commands.len()).sum();
    let voice: usize = records.iter().map(|r| r.voice.len()).sum();
    let metrics = metrics_of_log(&out.log).ok();
    if json_out {
        print_json(&json!({
            "log": out_path,
            "ticks": records.len(),
            "passed": passed,
            "commands": commands,
            "voice_events": voice,
            "touchdown": out.touchdown,
            "metrics": metrics,
        }));
    } else {
        println!(
            "{} ticks, {} passed validation, {} commands, {} voice events",
            records.len(),
            passed,
            commands,
            voice
        );
        if let Some(m) = metrics {
            let p = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{:.1}%", 100.0 * x));
            println!(
                "altitude in band {}  bank in band {}  speed in band {}",
                p(m.altitude_in_band_proportion),
                p(m.bank_in_band_proportion),
                p(m.speed_in_band_proportion)
            );
            if let Some(t) = m.task_completion_time_s {
                println!("completed in {t:.0} s");
            }
        }
        println!("log written to {}", out_path.display());
    }
    Ok(())
}

fn cmd_serve(args: ServeArgs, file: &FileConfig, json_out: bool) -> anyhow::Result<()> {
    let session = session_config(&args.session, file)?;
    let bind = args.bind.unwrap_or_else(|| file.gateway.bind.clone());
    let port = args.port.unwrap_or(file.gateway.port);
    let log_dir = args.log_dir.or_else(|| file.gateway.log_dir.clone());
    if let Some(d) = &log_dir {
        std::fs::create_dir_all(d)?;
    }
    let config = GatewayConfig {
        bind: format!("{bind}:{port}"),
        static_dir: args.static_dir.or_else(|| file.gateway.static_dir.clone()),
        log_dir,
        tick_period: Duration::from_millis(args.tick_ms.unwrap_or(file.gateway.tick_ms).max(1)),
        session,
    };
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let gw = Gateway::bind(config).await?;
        let addr = gw.local_addr()?;
        if json_out {
            println!("{}", json!({ "listening": format!("http://{addr}") }));
        } else {
            println!("listening on http://{addr}");
        }
        gw.serve(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
        anyhow::Ok(())
    })
}

fn cmd_replay(args: ReplayArgs, json_out: bool) -> anyhow::Result<bool> {
    let log = read_log_file(&args.log)?;
    let rep = replay(&log);
    if json_out {
        print_json(&serde_json::to_value(&rep)?);
    } else {
        println!("{} ticks, {} pass, {} mismatches", rep.ticks, rep.pass_ticks, rep.mismatches.len());
        for m in &rep.mismatches {
            println!("  tick {:>4}  {:<14} {}", m.tick, m.field, m.detail);
        }
    }
    Ok(rep.is_clean())
}

fn cmd_eval(args: EvalArgs, json_out: bool) -> anyhow::Result<()> {
    let logs = args
        .logs
        .iter()
        .map(|p| read_log_file(p).with_context(|| format!("reading {}", p.display())))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let report = score_workflow(&logs)?;
    let benefit = match args.benefit_seeds {
        Some(n) => {
            let seeds: Vec<u64> = (0..n).collect();
            Some(closed_loop_benefit(TaskId::SteepTurn, TraineeSkill::novice(), &seeds)?)
        }
        None => None,
    };
    if json_out {
        print_json(&json!({ "report": report, "benefit": benefit }));
    } else {
        print!("{}", report.table());
        if let Some(b) = benefit {
            println!(
                "steep turn over {} seeds: bank in band {:.3} -> {:.3} ({:+.3}), altitude in band {:.3} -> {:.3} ({:+.3})",
                b.seeds.len(),
                b.bank_off,
                b.bank_on,
                b.bank_delta(),
                b.altitude_off,
                b.altitude_on,
                b.altitude_delta()
            );
        }
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let file = config::load(cli.config.as_deref())?;
    match cli.command {
        Command::Kb(cmd) => cmd_kb(cmd, &file, cli.json)?,
        Command::Calibrate(args) => cmd_calibrate(args, &file, cli.json)?,
        Command::Run(args) => cmd_run(args, &file, cli.json)?,
        Command::Serve(args) => cmd_serve(args, &file, cli.json)?,
        Command::Replay(args) => return cmd_replay(args, cli.json),
        Command::Eval(args) => cmd_eval(args, cli.json)?,
    }
    Ok(true)
}

fn check_paths(cli: &Cli) -> anyhow::Result<()> {
    let exists = |p: &Path| if p.exists() { Ok(()) } else { bail!("{} not found", p.display()) };
    match &cli.command {
        Command::Replay(a) => exists(&a.log),
        Command::Eval(a) => a.logs.iter().try_for_each(|p| exists(p)),
        _ => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::new(&cli.log_level))
        .with_writer(std::io::stderr)
        .init();
    if let Err(e) = check_paths(&cli) {
        eprintln!("error: {e:#}");
        return ExitCode::from(1);
    }
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            tracing::debug!("{e:?}");
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
