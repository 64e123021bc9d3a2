//! `nowcast`: generate synthetic corpora, train model variants, evaluate,
//! predict and tabulate results. Every command leaves its artifacts and a
//! `run_manifest.json` in the directory given by `--out`.

mod panel;
mod plots;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use nowcast::grid_store::{Split, SplitScheme, Timestamp};
use nowcast::metrics::VerificationReport;
use nowcast::pipeline::{self, EvalConfig, FailureKind, PipelineError};
use nowcast::synthetic::CorpusConfig;
use nowcast::trainer::TrainConfig;

#[derive(Parser)]
#[command(name = "nowcast", version, about = "Hourly precipitation nowcasting toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic storm corpus.
    Synth(SynthArgs),
    /// Train one model variant on a corpus.
    Train(TrainArgs),
    /// Score a checkpoint on a split; writes report tables and plots.
    Eval(EvalArgs),
    /// Forecast one sample; writes prediction grids and a comparison panel.
    Predict(PredictArgs),
    /// Merge the reports of several eval runs into summary tables and plots.
    Report(ReportArgs),
}

#[derive(Args)]
struct Common {
    /// Key-value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Print the effective config (defaults plus file and flags) and exit.
    #[arg(long)]
    print_config: bool,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    common: Common,
    /// Overrides the config seed; `NOWCAST_SEED` does the same.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    seed: Option<u64>,
    /// Corpus directory produced by `synth`.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Variant tag, e.g. `GRU+WMAE+Adv+Atn`; overrides `train.variant`.
    #[arg(long)]
    variant: Option<String>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// train, val or test.
    #[arg(long)]
    split: Option<String>,
    /// Comma-separated lead hours, e.g. `0,1,2`.
    #[arg(long, value_delimiter = ',')]
    hours: Option<Vec<usize>>,
    /// Comma-separated rain thresholds in mm/hr.
    #[arg(long, value_delimiter = ',')]
    thresholds: Option<Vec<f64>>,
    /// Also score persistence and extrapolation.
    #[arg(long)]
    with_baselines: bool,
    /// Classifier checkpoint; adds a blended model.
    #[arg(long)]
    classifier: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    /// Sample anchor `YYYY-MM-DD HH:MM` (UTC); defaults to the first test sample.
    #[arg(long)]
    anchor: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Eval output directories to merge.
    #[arg(long = "input", required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    let kind = e
        .chain()
        .find_map(|c| c.downcast_ref::<PipelineError>())
        .map_or(FailureKind::Data, PipelineError::kind);
    match kind {
        FailureKind::Usage => 2,
        FailureKind::Data => 3,
        FailureKind::Numeric => 4,
    }
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    PipelineError::Usage(msg.into()).into()
}

fn required<'a>(v: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    v.as_deref().ok_or_else(|| usage(format!("{flag} is required")))
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Predict(a) => predict(a),
        Command::Report(a) => report(a),
    }
}

fn synth(a: SynthArgs) -> Result<()> {
    let kv = pipeline::load_config(a.common.config.as_deref())?;
    let mut cfg = CorpusConfig::from_kv(&kv).map_err(PipelineError::from)?;
    cfg.seed = pipeline::resolve_seed(a.seed, cfg.seed)?;
    if a.common.print_config {
        print!("{}", cfg.to_kv().to_text());
        return Ok(());
    }
    let out = required(&a.common.out, "--out")?;
    let (manifest, inputs) = pipeline::run_synth(&cfg, out)?;
    let run = pipeline::write_run_manifest(&inputs, a.common.config.as_deref(), out)?;
    println!("{} frames -> {} (hash {})", manifest.len(), out.display(), &run.output_hash[..12]);
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let mut kv = pipeline::load_config(a.common.config.as_deref())?;
    if let Some(v) = &a.variant {
        kv.set("train.variant", v);
    }
    let mut cfg = TrainConfig::from_kv(&kv).map_err(PipelineError::from)?;
    cfg.seed = pipeline::resolve_seed(a.seed, cfg.seed)?;
    if a.common.print_config {
        print!("{}", cfg.to_kv().to_text());
        return Ok(());
    }
    let corpus = required(&a.corpus, "--corpus")?;
    let out = required(&a.common.out, "--out")?;
    let (state, ledger, inputs) = pipeline::run_train(&cfg, corpus, out)?;
    pipeline::write_run_manifest(&inputs, a.common.config.as_deref(), out)?;
    print!("{}", ledger.to_csv());
    println!(
        "{}: {} parameters, best epoch {} -> {}",
        state.variant,
        state.parameter_count(),
        ledger.best_epoch,
        out.join(nowcast::trainer::BEST_CHECKPOINT).display()
    );
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let kv = pipeline::load_config(a.common.config.as_deref())?;
    let mut cfg = EvalConfig::from_kv(&kv).map_err(PipelineError::from)?;
    if let Some(s) = &a.split {
        cfg.split = Split::parse(s).ok_or_else(|| usage(format!("--split {s:?}: expected train, val or test")))?;
    }
    if let Some(h) = a.hours {
        cfg.hours = h;
    }
    if let Some(t) = a.thresholds {
        cfg.thresholds = t;
    }
    cfg.with_baselines |= a.with_baselines;
    if a.classifier.is_some() {
        cfg.classifier = a.classifier;
    }
    cfg.validate().map_err(|(k, m)| usage(format!("{k}: {m}")))?;
    if a.common.print_config {
        print!("{}", cfg.to_kv().to_text());
        return Ok(());
    }
    let checkpoint = required(&a.checkpoint, "--checkpoint")?;
    let corpus = required(&a.corpus, "--corpus")?;
    let out = required(&a.common.out, "--out")?;
    let (reports, inputs) = pipeline::run_eval(checkpoint, corpus, &cfg, out)?;
    write_plots(&reports, out)?;
    pipeline::write_run_manifest(&inputs, a.common.config.as_deref(), out)?;
    print!("{}", summary_table(&reports));
    Ok(())
}

fn parse_anchor(s: &str) -> Result<Timestamp> {
    s.parse::<Timestamp>()
        .map_err(|e| usage(format!("--anchor {s:?}: {e}")))
}

fn predict(a: PredictArgs) -> Result<()> {
    let anchor = a.anchor.as_deref().map(parse_anchor).transpose()?;
    let (pred, inputs) = pipeline::run_predict(&a.checkpoint, &a.corpus, anchor, &SplitScheme::default(), &a.out)?;
    let panel_path = a.out.join("panel.png");
    panel::write_panel(&pred.sample, &pred.forecast, &panel_path)?;
    pipeline::write_run_manifest(&inputs, None, &a.out)?;
    println!(
        "{} at {}: {} grids, panel {}",
        pred.forecast.source,
        pred.sample.anchor,
        pred.files.len(),
        panel_path.display()
    );
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let mut reports: Vec<VerificationReport> = Vec::new();
    let mut hash_input = Vec::new();
    for dir in &a.inputs {
        let rs = pipeline::read_reports(dir)?;
        for r in rs {
            if reports.iter().any(|o| o.model == r.model && o.split == r.split) {
                continue;
            }
            reports.push(r);
        }
        hash_input.push(pipeline::content_hash(dir)?);
    }
    if reports.is_empty() {
        return Err(usage("no reports found in the inputs"));
    }
    fs::create_dir_all(&a.out).with_context(|| a.out.display().to_string())?;
    pipeline::write_reports(&reports, &a.out)?;
    let table = summary_table(&reports);
    fs::write(a.out.join("summary.md"), &table).with_context(|| a.out.display().to_string())?;
    write_plots(&reports, &a.out)?;
    let inputs = pipeline::RunInputs {
        command: "report",
        seed: 0,
        input_hash: hash_input.join(""),
    };
    pipeline::write_run_manifest(&inputs, None, &a.out)?;
    print!("{table}");
    Ok(())
}

fn write_plots(reports: &[VerificationReport], out: &Path) -> Result<()> {
    let files = [
        ("csi_vs_threshold.svg", plots::threshold_svg(reports, plots::Score::Csi)),
        ("hss_vs_threshold.svg", plots::threshold_svg(reports, plots::Score::Hss)),
        ("performance_diagram.svg", plots::performance_svg(reports)),
    ];
    for (name, svg) in files {
        let p = out.join(name);
        fs::write(&p, svg).with_context(|| p.display().to_string())?;
    }
    Ok(())
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.4}"))
}

/// Markdown tables: WMAE per hour, then CSI and HSS per threshold for the
/// first hour of each report.
fn summary_table(reports: &[VerificationReport]) -> String {
    let mut out = String::new();
    let Some(first) = reports.first() else {
        return out;
    };
    let hours: Vec<usize> = first.hours.iter().map(|h| h.hour).collect();
    out.push_str("| model |");
    for h in &hours {
        out.push_str(&format!(" H{h} WMAE(0.5) | H{h} WMAE(0) |"));
    }
    out.push('\n');
    out.push_str(&"|---".repeat(1 + 2 * hours.len()));
    out.push_str("|\n");
    for r in reports {
        out.push_str(&format!("| {} |", r.model));
        for h in &r.hours {
            out.push_str(&format!(" {:.4} | {:.4} |", h.wmae[0], h.wmae[1]));
        }
        out.push('\n');
    }
    for (label, pick) in [("CSI", 0usize), ("HSS", 1)] {
        for h in &hours {
            let thresholds: Vec<f64> = first.hours.iter().find(|x| x.hour == *h).map_or_else(Vec::new, |x| {
                x.thresholds.iter().map(|t| t.threshold).collect()
            });
            out.push_str(&format!("\n| {label} H{h} |"));
            for t in &thresholds {
                out.push_str(&format!(" ≥{t} |"));
            }
            out.push('\n');
            out.push_str(&"|---".repeat(1 + thresholds.len()));
            out.push_str("|\n");
            for r in reports {
                out.push_str(&format!("| {} |", r.model));
                if let Some(hs) = r.hour(*h) {
                    for t in &hs.thresholds {
                        out.push_str(&format!(" {} |", cell(if pick == 0 { t.csi } else { t.hss })));
                    }
                }
                out.push('\n');
            }
        }
    }
    out
}
