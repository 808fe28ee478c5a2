//! The `dar` command.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use dar::corpus::{build_from_manifest, load_manifest};
use dar::eval::{load_dataset, load_report, report_to_csv, report_to_json, run_benchmark, BenchmarkOptions, RunReport, Variant};
use dar::{Backends, DarConfig, DarEngine, EmbeddingIndex};
use log::info;
use serde_json::json;

use crate::config::{ServiceConfig, ENV_CONFIG};

#[derive(Debug, Parser)]
#[command(name = "dar", version, about = "Interactive text-to-image retrieval")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Corpus index management.
    #[command(subcommand)]
    Index(IndexCommand),
    /// Run the HTTP service.
    Serve {
        /// Service config; defaults to $DAR_CONFIG.
        config: Option<PathBuf>,
    },
    /// Benchmark replay.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Interactive sessions.
    #[command(subcommand)]
    Session(SessionCommand),
    /// Print a saved run report.
    Report {
        run: PathBuf,
        /// Emit CSV instead of a table.
        #[arg(long)]
        csv: bool,
    },
}

#[derive(Debug, Subcommand)]
pub enum IndexCommand {
    /// Encode a corpus manifest (JSON array or JSON Lines) into an index file.
    Build {
        input: PathBuf,
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides `backends.dim`.
        #[arg(long)]
        dim: Option<usize>,
    },
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Replay a dialogue dataset and report cumulative Hits@k per turn.
    Run(EvalRun),
}

#[derive(Debug, Args)]
pub struct EvalRun {
    pub dataset: PathBuf,
    pub index: PathBuf,
    pub config: PathBuf,
    /// Repeatable; defaults to `dar`.
    #[arg(long, value_parser = parse_variant)]
    pub variant: Vec<Variant>,
    /// Overrides `session.hit_k`.
    #[arg(long)]
    pub k: Option<usize>,
    /// JSON report path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the curves as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Exclude failed dialogues from the denominator.
    #[arg(long)]
    pub strict: bool,
    /// Record wall-clock timings in the report.
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Subcommand)]
pub enum SessionCommand {
    /// Line-oriented session on stdin/stdout.
    Repl { index: PathBuf, config: PathBuf },
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: dar::Error| e.to_string())
}

/// Parses `std::env::args`, runs the command and returns the exit code.
pub fn main() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            let causes: Vec<String> = e.chain().skip(1).map(ToString::to_string).collect();
            let body = json!({ "error": { "message": e.to_string(), "causes": causes } });
            eprintln!("{body}");
            1
        }
    }
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Index(IndexCommand::Build { input, out, config, dim }) => {
            index_build(&input, &out, config.as_deref(), dim)
        }
        Command::Serve { config } => serve(config),
        Command::Eval(EvalCommand::Run(args)) => {
            let report = eval_run(&args)?;
            let json = report_to_json(&report)?;
            match &args.out {
                Some(path) => std::fs::write(path, json).with_context(|| format!("writing {}", path.display()))?,
                None => println!("{json}"),
            }
            if let Some(path) = &args.csv {
                std::fs::write(path, report_to_csv(&report)?)
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            Ok(())
        }
        Command::Session(SessionCommand::Repl { index, config }) => {
            let engine = engine(&index, &DarConfig::load(&config)?)?;
            let stdin = std::io::stdin();
            repl(&engine, &DarConfig::load(&config)?, stdin.lock(), std::io::stdout().lock())
        }
        Command::Report { run, csv } => {
            let report = load_report(&run).with_context(|| format!("reading {}", run.display()))?;
            if csv {
                print!("{}", report_to_csv(&report)?);
            } else {
                print!("{}", report_table(&report));
            }
            Ok(())
        }
    }
}

fn load_config(path: Option<&Path>) -> anyhow::Result<DarConfig> {
    Ok(match path {
        Some(p) => DarConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => DarConfig::default(),
    })
}

fn engine(index: &Path, config: &DarConfig) -> anyhow::Result<DarEngine> {
    let ix = EmbeddingIndex::load(index).with_context(|| format!("loading {}", index.display()))?;
    Ok(config.engine(Arc::new(ix))?)
}

pub fn index_build(input: &Path, out: &Path, config: Option<&Path>, dim: Option<usize>) -> anyhow::Result<()> {
    let mut cfg = load_config(config)?;
    if let Some(d) = dim {
        cfg.backends.dim = d;
    }
    let records = load_manifest(input).with_context(|| format!("reading {}", input.display()))?;
    let backends = Backends::from_config(&cfg.backends)?;
    let index = build_from_manifest(&records, &backends)?;
    index.save(out).with_context(|| format!("writing {}", out.display()))?;
    info!("wrote {} entries of dim {} to {}", index.len(), index.dim(), out.display());
    Ok(())
}

fn serve(config: Option<PathBuf>) -> anyhow::Result<()> {
    let path = config.or_else(|| std::env::var_os(ENV_CONFIG).map(PathBuf::from));
    let mut cfg = match &path {
        Some(p) => ServiceConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => ServiceConfig::default(),
    };
    cfg.apply_env()?;
    tokio::runtime::Runtime::new()?.block_on(crate::server::serve(cfg))
}

pub fn eval_run(args: &EvalRun) -> anyhow::Result<RunReport> {
    let mut cfg = DarConfig::load(&args.config).with_context(|| format!("reading {}", args.config.display()))?;
    if let Some(k) = args.k {
        cfg.session.hit_k = k;
    }
    let engine = engine(&args.index, &cfg)?;
    let dataset = load_dataset(&args.dataset, engine.index())
        .with_context(|| format!("reading {}", args.dataset.display()))?;
    let variants = if args.variant.is_empty() { vec![Variant::Dar] } else { args.variant.clone() };
    let opts = BenchmarkOptions {
        strict: args.strict,
        record_timing: args.timing,
    };
    let report = run_benchmark(&dataset, &engine, &cfg.session, &variants, opts)?;
    for v in &report.variants {
        info!(
            "{}: Hits@{} per turn {:?} (n={}, failures={})",
            v.variant,
            report.hit_k,
            v.curve.values(),
            v.n,
            v.failures.len()
        );
    }
    Ok(report)
}

/// Fixed-width table: one row per turn, one column per variant.
pub fn report_table(report: &RunReport) -> String {
    let mut out = format!("{:>4}", "turn");
    for v in &report.variants {
        out.push_str(&format!("  {:>8}", v.variant.name()));
    }
    out.push('\n');
    for t in 0..=report.turns {
        out.push_str(&format!("{t:>4}"));
        for v in &report.variants {
            out.push_str(&format!("  {:>7.2}%", 100.0 * v.curve.at(t)));
        }
        out.push('\n');
    }
    for v in &report.variants {
        out.push_str(&format!("{}: n={} failures={}\n", v.variant, v.n, v.failures.len()));
    }
    out
}

/// Reads the initial description, then alternates questions and answers.
/// An answer line of `:accept <id>` accepts a corpus image; `:quit` or EOF
/// ends the session.
pub fn repl(engine: &DarEngine, config: &DarConfig, mut input: impl BufRead, mut out: impl Write) -> anyhow::Result<()> {
    let mut line = String::new();
    let mut read = |line: &mut String| -> anyhow::Result<bool> {
        line.clear();
        Ok(input.read_line(line)? > 0)
    };
    write!(out, "describe the image> ")?;
    out.flush()?;
    if !read(&mut line)? {
        return Ok(());
    }
    let d0 = line.trim().to_owned();
    let mut state = engine.create_session("repl", &d0, config.session.clone(), None)?;
    print_turn(&mut out, engine, state.latest().expect("turn 0"))?;
    while state.is_active() {
        let question = engine.generate_question(&state)?;
        write!(out, "{question}\n> ")?;
        out.flush()?;
        if !read(&mut line)? {
            break;
        }
        let answer = line.trim();
        if answer == ":quit" {
            break;
        }
        if let Some(id) = answer.strip_prefix(":accept") {
            let id: u64 = id.trim().parse().context("`:accept` takes a corpus id")?;
            engine.accept(&mut state, id)?;
            break;
        }
        let rec = engine.submit_turn(&mut state, &question, answer)?;
        print_turn(&mut out, engine, rec)?;
    }
    writeln!(out, "session {:?} after {} turns", state.status, state.records.len() - 1)?;
    if let Some(id) = state.accepted {
        writeln!(out, "accepted {id}")?;
    }
    Ok(())
}

fn print_turn(out: &mut impl Write, engine: &DarEngine, rec: &dar::TurnRecord) -> std::io::Result<()> {
    writeln!(out, "turn {}: {}", rec.turn, rec.refined_query.text)?;
    for f in &rec.failures {
        writeln!(out, "  image {} failed: {}", f.k, f.message)?;
    }
    for (i, r) in rec.ranking.iter().enumerate() {
        let uri = engine.index().get(r.id).map_or("", |e| e.uri);
        writeln!(out, "  {:>2}. {:>8}  {:.4}  {uri}", i + 1, r.id, r.score)?;
    }
    Ok(())
}
