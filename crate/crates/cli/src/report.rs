//! The consolidated report: the full case × method accuracy table plus the
//! figure data files (window sweep, threshold sweep, ranging-error CDF, and
//! observation-time sweep), written as plain CSV.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use proxitrace_core::classify::ClassifierKind;
use proxitrace_core::dataset::{summarize, Case};
use proxitrace_core::eval::{
    accuracy_over_time, distance_error_cdf, evaluate_case, sweep_threshold, sweep_window,
    AccuracyReport, ErrorCdf, Method,
};
use proxitrace_core::filtering::FilterConfig;
use proxitrace_core::signal::{fit_path_loss, RssSample};

use crate::app::{load_mapping, load_samples, ReportArgs};

/// Window lengths traced out by the smoothing sweep.
pub const WINDOW_SWEEP: [usize; 6] = [1, 10, 25, 50, 100, 200];
/// Distancing thresholds traced out by the threshold sweep.
pub const THRESHOLD_SWEEP_M: [f64; 5] = [0.5, 1.0, 1.5, 2.0, 3.0];
/// Episode-prefix durations traced out by the observation-time sweep.
pub const TIME_SWEEP_S: [f64; 6] = [1.0, 2.0, 5.0, 10.0, 20.0, 60.0];

struct CaseData {
    case: Case,
    samples: Vec<RssSample>,
}

struct TableRow {
    case: Case,
    method: Method,
    variant: &'static str,
    report: AccuracyReport,
}

/// Per-case figure data, computed in one parallel pass.
struct FigureBundle {
    case: Case,
    window_rows: Vec<(Method, usize, AccuracyReport)>,
    threshold_rows: Vec<(Method, f64, AccuracyReport)>,
    time_rows: Vec<(f64, AccuracyReport)>,
    cdf: ErrorCdf,
}

fn write_file(dir: &Path, name: &str, content: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, content).with_context(|| format!("writing {}", path.display()))
}

pub fn cmd_report(args: &ReportArgs) -> Result<()> {
    let mapping = load_mapping(&args.mapping)?;
    let run = &args.run;
    let filter = FilterConfig::new(run.window).context("filter window")?;
    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;

    let mut cases: Vec<CaseData> = Vec::new();
    for case in Case::ALL {
        let path = args.data.join(format!("{case}.csv"));
        if !path.exists() {
            eprintln!("warning: {} not found; skipping case {case}", path.display());
            continue;
        }
        let outcome = load_samples(&path, case, &mapping)?;
        println!(
            "loaded case={case} samples={} skipped={}",
            outcome.dataset.samples.len(),
            outcome.skipped
        );
        cases.push(CaseData { case, samples: outcome.dataset.samples });
    }
    if cases.is_empty() {
        bail!("no case files found under {}", args.data.display());
    }

    // Accuracy table: one cell per case × method × {raw, filtered}. The cells
    // fan out in parallel; collecting by index keeps the output order fixed.
    let mut specs: Vec<(usize, Method, &'static str, FilterConfig)> = Vec::new();
    for (ci, _) in cases.iter().enumerate() {
        for method in Method::ALL {
            specs.push((ci, method, "raw", FilterConfig::raw()));
            specs.push((ci, method, "filtered", filter));
        }
    }
    let rows: Vec<TableRow> = specs
        .par_iter()
        .map(|&(ci, method, variant, cell_filter)| {
            let cd = &cases[ci];
            let report = evaluate_case(
                &cd.samples,
                method,
                cell_filter,
                run.threshold_m,
                run.seed,
                run.repeats,
            )
            .map_err(anyhow::Error::new)
            .with_context(|| format!("evaluating {} {method} {variant}", cd.case))?;
            Ok(TableRow { case: cd.case, method, variant, report })
        })
        .collect::<Result<_>>()?;

    let mut table = String::from("case,method,variant,mean,ci_lo,ci_hi\n");
    for row in &rows {
        table.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.case, row.method, row.variant, row.report.mean, row.report.ci_lo, row.report.ci_hi
        ));
    }
    write_file(&args.out, "accuracy_table.csv", &table)?;
    println!("wrote accuracy_table.csv rows={}", rows.len());

    // Figure data, one bundle per case, parallel over cases.
    let bundles: Vec<FigureBundle> = cases
        .par_iter()
        .map(|cd| {
            let ctx = |what: &str| format!("{} for {}", what, cd.case);
            let mut window_rows = Vec::new();
            for method in [Method::Classifier(ClassifierKind::Dt), Method::PathLoss] {
                let per_window = sweep_window(
                    &cd.samples,
                    method,
                    &WINDOW_SWEEP,
                    run.threshold_m,
                    run.seed,
                    run.repeats,
                )
                .map_err(anyhow::Error::new)
                .with_context(|| ctx("window sweep"))?;
                window_rows.extend(per_window.into_iter().map(|(w, r)| (method, w, r)));
            }

            let threshold_rows = sweep_threshold(
                &cd.samples,
                &[
                    Method::PathLoss,
                    Method::Classifier(ClassifierKind::Dt),
                    Method::Classifier(ClassifierKind::Lda),
                ],
                &THRESHOLD_SWEEP_M,
                filter,
                run.seed,
                run.repeats,
            )
            .map_err(anyhow::Error::new)
            .with_context(|| ctx("threshold sweep"))?;

            let time_rows = accuracy_over_time(
                &cd.samples,
                Method::PathLoss,
                &TIME_SWEEP_S,
                run.threshold_m,
                run.seed,
                run.repeats,
            )
            .map_err(anyhow::Error::new)
            .with_context(|| ctx("observation-time sweep"))?;

            // Ranging errors under the model fitted to this case's own
            // per-distance means, over smoothed samples.
            let dataset = proxitrace_core::dataset::CaseDataset {
                case: cd.case,
                samples: cd.samples.clone(),
                source: String::new(),
            };
            let stats = summarize(&dataset);
            let points: Vec<(f64, f64)> =
                stats.iter().map(|s| (s.distance_m, s.mean_rss)).collect();
            let model = fit_path_loss(&points)
                .map_err(anyhow::Error::new)
                .with_context(|| ctx("path-loss fit"))?;
            let cdf = distance_error_cdf(&cd.samples, &model, filter)
                .map_err(anyhow::Error::new)
                .with_context(|| ctx("error CDF"))?;

            Ok(FigureBundle { case: cd.case, window_rows, threshold_rows, time_rows, cdf })
        })
        .collect::<Result<_>>()?;

    let mut window_csv = String::from("case,method,window,mean,ci_lo,ci_hi\n");
    let mut threshold_csv = String::from("case,method,threshold_m,mean,ci_lo,ci_hi\n");
    let mut time_csv = String::from("case,method,duration_s,mean,ci_lo,ci_hi\n");
    for b in &bundles {
        for (method, w, r) in &b.window_rows {
            window_csv.push_str(&format!(
                "{},{},{},{},{},{}\n",
                b.case, method, w, r.mean, r.ci_lo, r.ci_hi
            ));
        }
        for (method, t, r) in &b.threshold_rows {
            threshold_csv.push_str(&format!(
                "{},{},{},{},{},{}\n",
                b.case, method, t, r.mean, r.ci_lo, r.ci_hi
            ));
        }
        for (t, r) in &b.time_rows {
            time_csv.push_str(&format!(
                "{},PL,{},{},{},{}\n",
                b.case, t, r.mean, r.ci_lo, r.ci_hi
            ));
        }
    }
    write_file(&args.out, "window_sweep.csv", &window_csv)?;
    println!("wrote window_sweep.csv rows={}", bundles.len() * 2 * WINDOW_SWEEP.len());
    write_file(&args.out, "threshold_sweep.csv", &threshold_csv)?;
    println!("wrote threshold_sweep.csv rows={}", bundles.len() * 3 * THRESHOLD_SWEEP_M.len());
    write_file(&args.out, "time_sweep.csv", &time_csv)?;
    println!("wrote time_sweep.csv rows={}", bundles.len() * TIME_SWEEP_S.len());

    for b in &bundles {
        let mut cdf_csv = String::from("error_m,cum_fraction\n");
        for &(e, f) in &b.cdf.points {
            cdf_csv.push_str(&format!("{e},{f}\n"));
        }
        let name = format!("error_cdf_{}.csv", b.case);
        write_file(&args.out, &name, &cdf_csv)?;
        println!(
            "wrote {name} points={} mae={:.4} p80={:.4}",
            b.cdf.points.len(),
            b.cdf.mae,
            b.cdf.percentile(0.8)
        );
    }

    // Head-to-head verdict: is the smoothed decision tree the strongest
    // method within every case?
    let mut dt_best_everywhere = true;
    for cd in &cases {
        let filtered: Vec<&TableRow> =
            rows.iter().filter(|r| r.case == cd.case && r.variant == "filtered").collect();
        let dt = filtered
            .iter()
            .find(|r| r.method == Method::Classifier(ClassifierKind::Dt))
            .expect("every case evaluates DT");
        let best_other = filtered
            .iter()
            .filter(|r| r.method != Method::Classifier(ClassifierKind::Dt))
            .max_by(|a, b| a.report.mean.total_cmp(&b.report.mean))
            .expect("every case evaluates more than one method");
        let dt_is_best = dt.report.mean >= best_other.report.mean;
        dt_best_everywhere &= dt_is_best;
        println!(
            "verdict case={} dt_filtered={:.4} best_other={}:{:.4} dt_is_best={}",
            cd.case, dt.report.mean, best_other.method, best_other.report.mean, dt_is_best
        );
    }
    println!("dt_best_in_every_case={dt_best_everywhere}");
    Ok(())
}
