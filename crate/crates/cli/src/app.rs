//! Command-line dispatch: `fit`, `simulate`, `evaluate`, `trace-demo`, and
//! `report`. Every command is seeded, so rerunning with the same flags
//! reproduces output files byte for byte.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use proxitrace_core::classify::parse_model;
use proxitrace_core::dataset::{
    load_case, read_mapping_file, summarize, Case, ColumnMapping, LoadOutcome,
};
use proxitrace_core::eval::{evaluate_case_detailed, train_full, CaseEvaluation, Method};
use proxitrace_core::filtering::FilterConfig;
use proxitrace_core::signal::{
    fit_path_loss, predict_rss, read_model_file, write_model_file, NoiseTable, PathLossModel,
};
use proxitrace_core::timing::{read_scenario_file, run_encounter, write_trace_file, ScenarioFile};

use crate::demo::{reference_model, run_demo, DemoConfig};
use crate::report;

#[derive(Debug, Parser)]
#[command(
    name = "proxitrace",
    version,
    about = "BLE proximity tracing toolkit: path-loss fitting, encounter simulation, \
             risk classification, and signature-matching demos"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit path-loss coefficients to a measurement file.
    Fit(FitArgs),
    /// Simulate one broadcast/scan encounter and write its reception trace.
    Simulate(SimulateArgs),
    /// Train and score one case/method cell; prints accuracy and confusion rows.
    Evaluate(EvaluateArgs),
    /// Multi-device exchange-then-trace walkthrough with signature matching.
    TraceDemo(TraceDemoArgs),
    /// Full accuracy table and figure data files over every case present.
    Report(ReportArgs),
}

/// Shared run parameters. Defaults are the reference configuration: 2 m risk
/// threshold, window-100 smoothing, and (where timing matters) the 100 ms
/// low-latency advertising preset.
#[derive(Debug, Clone, Copy, Args)]
pub struct RunConfig {
    /// Moving-average window length in samples.
    #[arg(long, default_value_t = 100)]
    pub window: usize,
    /// High/low-risk distance threshold in meters.
    #[arg(long = "threshold-m", default_value_t = 2.0)]
    pub threshold_m: f64,
    /// Base seed for every derived random stream.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of repeated train/test splits behind each accuracy cell.
    #[arg(long, default_value_t = 30)]
    pub repeats: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { window: 100, threshold_m: 2.0, seed: 0, repeats: 30 }
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Measurement CSV file.
    #[arg(long)]
    pub data: PathBuf,
    /// Column-mapping file for non-default CSV layouts.
    #[arg(long)]
    pub mapping: Option<PathBuf>,
    /// Body-position case label recorded with the loaded samples.
    #[arg(long, default_value = "HH")]
    pub case: String,
    /// Write the fitted model file here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario description file (key=value header plus distance breakpoints).
    #[arg(long)]
    pub scenario: PathBuf,
    /// Path-loss model file; the built-in reference fit is used when omitted.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Output trace CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Measurement CSV file.
    #[arg(long)]
    pub data: PathBuf,
    /// Body-position case label (HH, HP, HB, PB, PP, BB).
    #[arg(long, default_value = "HH")]
    pub case: String,
    /// Risk method: dt, lda, nb, knn, svm, or pl.
    #[arg(long, default_value = "dt")]
    pub method: String,
    /// Column-mapping file for non-default CSV layouts.
    #[arg(long)]
    pub mapping: Option<PathBuf>,
    /// Also train on the full dataset and write the model dump here
    /// (classifier methods only).
    #[arg(long)]
    pub model_out: Option<PathBuf>,
    #[command(flatten)]
    pub run: RunConfig,
}

#[derive(Debug, Args)]
pub struct TraceDemoArgs {
    /// Number of participating devices.
    #[arg(long, default_value_t = 5)]
    pub devices: usize,
    /// Length of the interaction phase, in seconds.
    #[arg(long, default_value_t = 600)]
    pub duration_s: u32,
    /// Index of the device marked infected afterwards.
    #[arg(long, default_value_t = 0)]
    pub infected: usize,
    /// Path-loss model file; the built-in reference fit is used when omitted.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Trained classifier dump; when given, risk comes from this model
    /// instead of the path-loss threshold rule.
    #[arg(long)]
    pub classifier: Option<PathBuf>,
    /// Write the report here as well as printing it.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub run: RunConfig,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory holding per-case measurement files named HH.csv … BB.csv.
    #[arg(long)]
    pub data: PathBuf,
    /// Directory the table and figure data files are written into.
    #[arg(long)]
    pub out: PathBuf,
    /// Column-mapping file applied to every case file.
    #[arg(long)]
    pub mapping: Option<PathBuf>,
    #[command(flatten)]
    pub run: RunConfig,
}

pub fn run() -> Result<()> {
    match Cli::parse().command {
        Command::Fit(args) => cmd_fit(&args),
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Evaluate(args) => cmd_evaluate(&args),
        Command::TraceDemo(args) => cmd_trace_demo(&args),
        Command::Report(args) => report::cmd_report(&args),
    }
}

pub(crate) fn load_mapping(path: &Option<PathBuf>) -> Result<ColumnMapping> {
    match path {
        Some(p) => {
            read_mapping_file(p).with_context(|| format!("reading mapping {}", p.display()))
        }
        None => Ok(ColumnMapping::default()),
    }
}

pub(crate) fn parse_case(label: &str) -> Result<Case> {
    label.parse().map_err(|e: String| anyhow!(e))
}

fn load_model_or_reference(path: &Option<PathBuf>) -> Result<PathLossModel> {
    match path {
        Some(p) => read_model_file(p).with_context(|| format!("reading model {}", p.display())),
        None => Ok(reference_model()),
    }
}

pub(crate) fn load_samples(
    data: &Path,
    case: Case,
    mapping: &ColumnMapping,
) -> Result<LoadOutcome> {
    load_case(data, mapping, case).with_context(|| format!("loading {}", data.display()))
}

fn cmd_fit(args: &FitArgs) -> Result<()> {
    let mapping = load_mapping(&args.mapping)?;
    let case = parse_case(&args.case)?;
    let outcome = load_samples(&args.data, case, &mapping)?;
    let stats = summarize(&outcome.dataset);
    let points: Vec<(f64, f64)> = stats.iter().map(|s| (s.distance_m, s.mean_rss)).collect();
    let model = fit_path_loss(&points).context("fitting path-loss model")?;
    let sse: f64 = points
        .iter()
        .map(|&(d, rss)| {
            let r = predict_rss(&model, d).expect("fit distances are positive") - rss;
            r * r
        })
        .sum();

    println!("case={case}");
    println!("samples={} skipped={}", outcome.dataset.samples.len(), outcome.skipped);
    println!("distances={}", points.len());
    println!("n={}", model.n());
    println!("c={}", model.c());
    println!("sse={sse}");
    if let Some(out) = &args.out {
        write_model_file(&model, out).with_context(|| format!("writing {}", out.display()))?;
        println!("model={}", out.display());
    }
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let ScenarioFile { scenario, noise_var } = read_scenario_file(&args.scenario)
        .with_context(|| format!("reading scenario {}", args.scenario.display()))?;
    let model = load_model_or_reference(&args.model)?;
    let samples = run_encounter(&scenario, &model, &NoiseTable::constant(noise_var))
        .context("running encounter")?;
    write_trace_file(&args.out, &samples)
        .with_context(|| format!("writing {}", args.out.display()))?;
    println!("duration_ms={} receptions={}", scenario.duration_ms, samples.len());
    println!("trace={}", args.out.display());
    Ok(())
}

fn confusion_line(tag: &str, eval: &CaseEvaluation) {
    let c = eval.confusion;
    println!(
        "confusion_{tag} high_high={} high_low={} low_high={} low_low={}",
        c.high_high, c.high_low, c.low_high, c.low_low
    );
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let mapping = load_mapping(&args.mapping)?;
    let case = parse_case(&args.case)?;
    let method: Method = args.method.parse().map_err(|e: String| anyhow!(e))?;
    let run = &args.run;
    let filter = FilterConfig::new(run.window).context("filter window")?;
    let outcome = load_samples(&args.data, case, &mapping)?;
    let samples = &outcome.dataset.samples;

    let raw = evaluate_case_detailed(
        samples,
        method,
        FilterConfig::raw(),
        run.threshold_m,
        run.seed,
        run.repeats,
    )
    .context("raw evaluation")?;
    let filtered =
        evaluate_case_detailed(samples, method, filter, run.threshold_m, run.seed, run.repeats)
            .context("filtered evaluation")?;

    println!(
        "case={case} method={method} window={} threshold_m={} seed={} repeats={}",
        run.window, run.threshold_m, run.seed, run.repeats
    );
    println!(
        "raw mean={:.4} ci_lo={:.4} ci_hi={:.4}",
        raw.report.mean, raw.report.ci_lo, raw.report.ci_hi
    );
    println!(
        "filtered mean={:.4} ci_lo={:.4} ci_hi={:.4}",
        filtered.report.mean, filtered.report.ci_lo, filtered.report.ci_hi
    );
    confusion_line("raw", &raw);
    confusion_line("filtered", &filtered);

    if let Some(out) = &args.model_out {
        let Method::Classifier(kind) = method else {
            bail!("--model-out needs a classifier method; the path-loss rule has no trained state");
        };
        let model = train_full(samples, kind, filter, run.threshold_m, run.seed)
            .context("training export model")?;
        fs::write(out, proxitrace_core::classify::dump_model(&model))
            .with_context(|| format!("writing {}", out.display()))?;
        println!("model={}", out.display());
    }
    Ok(())
}

fn cmd_trace_demo(args: &TraceDemoArgs) -> Result<()> {
    if args.duration_s == 0 {
        bail!("duration must be positive");
    }
    let mut config = DemoConfig::star(
        args.devices,
        i64::from(args.duration_s) * 1000,
        args.infected,
        args.run.seed,
    );
    config.threshold_m = args.run.threshold_m;
    config.filter = FilterConfig::new(args.run.window).context("filter window")?;
    config.model = load_model_or_reference(&args.model)?;
    let classifier = match &args.classifier {
        Some(p) => {
            let text =
                fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Some(parse_model(&text).context("parsing classifier dump")?)
        }
        None => None,
    };

    let report = run_demo(&config)?;
    let text = match &classifier {
        Some(model) => crate::demo::reclassify_with(&report, model).to_text(),
        None => report.to_text(),
    };
    print!("{text}");
    if let Some(out) = &args.out {
        fs::write(out, &text).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(())
}
