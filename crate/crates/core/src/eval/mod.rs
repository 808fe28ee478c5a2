//! Benchmark replay and cumulative Hits@k reporting.

pub mod curve;
pub mod dataset;

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::session::{DarEngine, SessionConfig};

pub use self::curve::{curve_from_rank_matrix, first_hit_turn, hits_at_k_curve, HitsCurve};
pub use self::dataset::{
    load_dataset, parse_dataset, save_raw_dataset, split_qa, DialogueDataset, DialogueEntry,
    RawDialogue,
};

/// A retrieval pipeline configuration to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Reformulation, generation and fusion.
    Dar,
    /// Text-only retrieval on the concatenated dialogue.
    Concat,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Dar => "dar",
            Variant::Concat => "concat",
        }
    }

    pub fn session_config(self, base: &SessionConfig) -> SessionConfig {
        match self {
            Variant::Dar => base.clone(),
            Variant::Concat => base.concat_baseline(),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dar" => Ok(Variant::Dar),
            "concat" => Ok(Variant::Concat),
            other => Err(Error::InvalidInput(format!("unknown variant {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BenchmarkOptions {
    /// Drop dialogues whose pipeline failed from the denominator instead of
    /// counting them as misses.
    pub strict: bool,
    /// Attach wall-clock timings to the report. Off by default so that
    /// reports are byte-reproducible.
    pub record_timing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueFailure {
    pub dialogue: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantReport {
    pub variant: Variant,
    /// Dialogues in the denominator.
    pub n: usize,
    pub curve: HitsCurve,
    pub first_hit_turns: Vec<Option<usize>>,
    /// `target_ranks[d][t]`; `None` for turns skipped after a hit.
    pub target_ranks: Vec<Vec<Option<usize>>>,
    pub failures: Vec<DialogueFailure>,
    pub turns_executed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub total_ms: f64,
    pub per_variant_ms: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: SessionConfig,
    pub hit_k: usize,
    pub turns: usize,
    pub dialogues: usize,
    pub variants: Vec<VariantReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

impl RunReport {
    pub fn variant(&self, v: Variant) -> Option<&VariantReport> {
        self.variants.iter().find(|r| r.variant == v)
    }
}

struct DialogueRun {
    ranks: Vec<Option<usize>>,
    turns_executed: usize,
    error: Option<String>,
}

fn replay(engine: &DarEngine, cfg: &SessionConfig, idx: usize, entry: &DialogueEntry) -> DialogueRun {
    let turns = cfg.max_turns;
    let mut ranks = vec![None; turns + 1];
    let mut executed = 0;
    let id = format!("dialogue-{idx}");
    let mut state = match engine.create_session(id, &entry.initial_description, cfg.clone(), Some(entry.target_id)) {
        Ok(s) => s,
        Err(e) => {
            return DialogueRun {
                ranks,
                turns_executed: 0,
                error: Some(e.to_string()),
            }
        }
    };
    executed += 1;
    ranks[0] = state.records[0].target_rank;
    for (t, qa) in entry.turns.iter().take(turns).enumerate() {
        if !state.is_active() {
            break;
        }
        match engine.submit_turn(&mut state, &qa.question, &qa.answer) {
            Ok(rec) => {
                ranks[t + 1] = rec.target_rank;
                executed += 1;
            }
            Err(e) => {
                return DialogueRun {
                    ranks,
                    turns_executed: executed,
                    error: Some(e.to_string()),
                }
            }
        }
    }
    DialogueRun {
        ranks,
        turns_executed: executed,
        error: None,
    }
}

/// Replays every dialogue of `dataset` through each variant.
///
/// Turns `0..=T` are run per dialogue until the target ranks within
/// `config.hit_k`; the remaining turns are skipped.
pub fn run_benchmark(
    dataset: &DialogueDataset,
    engine: &DarEngine,
    config: &SessionConfig,
    variants: &[Variant],
    opts: BenchmarkOptions,
) -> Result<RunReport> {
    config.validate()?;
    let started = Instant::now();
    let turns = dataset.turns();
    let mut per_variant_ms = Vec::new();
    let mut reports = Vec::with_capacity(variants.len());
    for &variant in variants {
        let t0 = Instant::now();
        let mut cfg = variant.session_config(config);
        cfg.max_turns = turns.max(1);
        let runs: Vec<DialogueRun> = dataset
            .entries
            .par_iter()
            .enumerate()
            .map(|(i, e)| replay(engine, &cfg, i, e))
            .collect();

        let mut failures = Vec::new();
        let mut first_hit_turns = Vec::new();
        let mut target_ranks = Vec::new();
        let mut turns_executed = 0;
        for (i, run) in runs.into_iter().enumerate() {
            turns_executed += run.turns_executed;
            if let Some(message) = run.error {
                failures.push(DialogueFailure { dialogue: i, message });
                if opts.strict {
                    continue;
                }
            }
            let mut ranks = run.ranks;
            ranks.truncate(turns + 1);
            first_hit_turns.push(first_hit_turn(&ranks, cfg.hit_k));
            target_ranks.push(ranks);
        }
        let n = first_hit_turns.len();
        reports.push(VariantReport {
            variant,
            n,
            curve: hits_at_k_curve(&first_hit_turns, turns, n),
            first_hit_turns,
            target_ranks,
            failures,
            turns_executed,
        });
        per_variant_ms.push(t0.elapsed().as_secs_f64() * 1e3);
    }
    Ok(RunReport {
        config: config.clone(),
        hit_k: config.hit_k,
        turns,
        dialogues: dataset.len(),
        variants: reports,
        timing: opts.record_timing.then(|| Timing {
            total_ms: started.elapsed().as_secs_f64() * 1e3,
            per_variant_ms,
        }),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

pub fn report_to_json(report: &RunReport) -> Result<String> {
    Ok(serde_json::to_string_pretty(report)?)
}

/// One row per (variant, turn): `variant,turn,hits_at_k,n`.
pub fn report_to_csv(report: &RunReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["variant", "turn", "hits_at_k", "n"])?;
    for v in &report.variants {
        for (t, h) in v.curve.values().iter().enumerate() {
            w.write_record([v.variant.name(), &t.to_string(), &h.to_string(), &v.n.to_string()])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn emit_report(report: &RunReport, path: impl AsRef<Path>, format: ReportFormat) -> Result<()> {
    let body = match format {
        ReportFormat::Json => report_to_json(report)?,
        ReportFormat::Csv => report_to_csv(report)?,
    };
    std::fs::write(path, body)?;
    Ok(())
}

pub fn load_report(path: impl AsRef<Path>) -> Result<RunReport> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}
