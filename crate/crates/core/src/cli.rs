//! The `rosetta` command line.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::continual::{run_sweep, write_sweep_csv, SequentialRunResult, TaskData};
use crate::corpus::{build_term_stats, dsi, read_documents, Document, SpecializationParams};
use crate::error::{Error, Result};
use crate::harness::adapter::{AdapterSpec, Prediction};
use crate::harness::generator::{generate_synthetic, GeneratorConfig};
use crate::harness::manifest::{load_manifest, read_items};
use crate::harness::report::{emit_report, ReportFormat, RECORDS, TRANSITIONS};
use crate::harness::runner::run_suite;
use crate::jsonl;
use crate::metrics::{aggregate_report, read_records, read_transitions, MetricsReport};
use crate::par::{self, Execution};
use crate::scl::{fit_source_only, labeled_accuracy, scl_fit_with, DocClassifier, LogisticHyper, SclConfig};

const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Parser)]
#[command(name = "rosetta", version, about = "Cross-domain performance inversion toolkit")]
#[command(arg_required_else_help = true)]
struct Cli {
    #[command(flatten)]
    global: GlobalOptions,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalOptions {
    /// Seed for every random choice [default: 42]
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Directory for result files; created if absent
    #[arg(long, global = true, default_value = "rosetta-out")]
    output_dir: PathBuf,

    /// Report format (json or csv)
    #[arg(long, global = true, default_value = "json")]
    format: ReportFormat,

    /// More log output on stderr (repeatable)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    /// Worker threads for data-parallel stages
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Domain specificity index of a corpus against a reference corpus
    Dsi {
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        #[arg(long, default_value_t = 5.0)]
        ratio: f64,
        #[arg(long, default_value_t = 3)]
        min_count: u64,
    },
    /// Metric report from evaluation records
    Score {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        transitions: Option<PathBuf>,
        #[arg(long)]
        dsi: Option<f64>,
    },
    /// Synthetic two-domain corpora, task files and EWC task pair
    Generate {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Fit an SCL model and a source-only baseline
    Scl {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long, default_value_t = 50)]
        pivots: usize,
        /// Defaults to min(25, pivots)
        #[arg(long)]
        dims: Option<usize>,
        #[arg(long, default_value_t = 1.0)]
        mu: f64,
        /// Task item files to answer with the SCL model (offline predictions)
        #[arg(long)]
        predict: Vec<PathBuf>,
    },
    /// Sequential training on two tasks with and without the EWC penalty
    Ewc {
        #[arg(long)]
        task_a: PathBuf,
        #[arg(long)]
        task_b: PathBuf,
        #[arg(long, default_value_t = 10.0)]
        lambda: f64,
        #[arg(long, default_value_t = 1)]
        seeds: u64,
    },
    /// Run a benchmark suite against a model adapter
    Bench {
        #[arg(long)]
        manifest: PathBuf,
        /// offline:<predictions.jsonl>, subprocess:<command ...>, or a JSON spec file
        #[arg(long)]
        adapter: String,
    },
    /// Re-emit a report from a previous bench run's records
    Report {
        #[arg(long)]
        run_dir: PathBuf,
        #[arg(long)]
        dsi: Option<f64>,
    },
}

/// Parse `args` (including the program name), run, and return the exit status.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    0
                }
                _ => {
                    eprint!("{}", e.render());
                    1
                }
            };
        }
    };
    let level = match cli.global.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .target(env_logger::Target::Stderr)
        .try_init();

    match run(&cli) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                1
            } else {
                2
            }
        }
    }
}

fn run(cli: &Cli) -> Result<String> {
    let g = &cli.global;
    if g.threads == 0 {
        return Err(Error::validation("--threads must be at least 1"));
    }
    par::init_threads(g.threads);
    let exec = if g.threads > 1 { Execution::Parallel } else { Execution::Sequential };
    let out = g.output_dir.as_path();
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let seed = g.seed.unwrap_or(DEFAULT_SEED);

    match &cli.command {
        Command::Dsi { target, reference, ratio, min_count } => {
            let params = SpecializationParams {
                ratio_threshold: *ratio,
                min_count: *min_count,
                ..Default::default()
            };
            let result = dsi(
                &read_documents(target)?,
                &build_term_stats(&read_documents(reference)?)?,
                &params,
            )?;
            jsonl::write_json(&out.join("dsi.json"), &result)?;
            Ok(format!(
                "dsi {:.4} ({} specialized terms, {} tokens)",
                result.dsi,
                result.specialized_terms.len(),
                result.total_tokens
            ))
        }
        Command::Score { records, transitions, dsi } => {
            let records = read_records(records)?;
            let transitions = match transitions {
                Some(p) => read_transitions(p)?,
                None => Vec::new(),
            };
            let report = aggregate_report(&records, &transitions, *dsi)?;
            emit_report(&report, None, g.format, out)?;
            Ok(summarize(&report))
        }
        Command::Generate { config } => {
            let mut cfg: GeneratorConfig = match config {
                Some(p) => jsonl::read_json(p)?,
                None => GeneratorConfig::default(),
            };
            if let Some(s) = g.seed {
                cfg.seed = s;
            }
            let data = generate_synthetic(&cfg)?;
            let manifest = data.write(out)?;
            Ok(format!(
                "generated {} + {} documents (seed {}), manifest {}",
                data.source.len(),
                data.target.len(),
                cfg.seed,
                manifest.display()
            ))
        }
        Command::Scl { source, target, pivots, dims, mu, predict } => {
            let cfg = SclConfig {
                n_pivots: *pivots,
                k_dims: dims.unwrap_or((*pivots).min(SclConfig::default().k_dims)),
                projection_scale: *mu,
                seed,
                ..Default::default()
            };
            let source = read_documents(source)?;
            let target = read_documents(target)?;
            scl_command(exec, &cfg, &source, &target, predict, out)
        }
        Command::Ewc { task_a, task_b, lambda, seeds } => {
            if *seeds == 0 {
                return Err(Error::validation("--seeds must be at least 1"));
            }
            let a = TaskData::read(task_a)?;
            let b = TaskData::read(task_b)?;
            let seed_list: Vec<u64> = (0..*seeds).map(|i| seed.wrapping_add(i)).collect();
            let results = run_sweep(exec, &seed_list, &[0.0, *lambda], &LogisticHyper::default(), |_| {
                Ok((a.clone(), b.clone()))
            })?;
            jsonl::write_json(&out.join("ewc_results.json"), &results)?;
            write_sweep_csv(&out.join("ewc_sweep.csv"), &results)?;
            let mean = |l: f64| mean_forgetting(&results, l);
            Ok(format!(
                "mean forgetting: lambda=0 {:.4}, lambda={} {:.4} over {} seeds",
                mean(0.0),
                lambda,
                mean(*lambda),
                seeds
            ))
        }
        Command::Bench { manifest, adapter } => {
            let manifest = load_manifest(manifest)?;
            let spec = AdapterSpec::parse_cli(adapter)?;
            let mut adapter = spec.connect()?;
            let run = run_suite(&manifest, &mut adapter)?;
            jsonl::write_json(&out.join(TRANSITIONS), &run.transitions)?;
            let report = aggregate_report(&run.records, &run.transitions, None)?;
            emit_report(&report, Some(&run.records), g.format, out)?;
            Ok(summarize(&report))
        }
        Command::Report { run_dir, dsi } => {
            let records = read_records(&run_dir.join(RECORDS))?;
            let tpath = run_dir.join(TRANSITIONS);
            let transitions = if tpath.is_file() { read_transitions(&tpath)? } else { Vec::new() };
            let report = aggregate_report(&records, &transitions, *dsi)?;
            emit_report(&report, None, g.format, out)?;
            Ok(summarize(&report))
        }
    }
}

fn mean_forgetting(results: &[SequentialRunResult], lambda: f64) -> f64 {
    let arm: Vec<f64> = results.iter().filter(|r| r.lambda == lambda).map(|r| r.forgetting).collect();
    arm.iter().sum::<f64>() / arm.len() as f64
}

fn summarize(r: &MetricsReport) -> String {
    let mut s = format!(
        "acc_specialized {:.4} acc_general {:.4} pim {:.4}",
        r.accuracy_specialized, r.accuracy_general, r.pim
    );
    if let Some(c) = r.cdcs {
        s += &format!(" cdcs {c:.4}");
    }
    if let Some(a) = r.ars {
        s += &format!(" ars {a:.4}");
    }
    s + &format!(" ({} records)", r.n_records)
}

#[derive(Serialize)]
struct SclSummary {
    n_pivots: usize,
    k_dims: usize,
    pivots: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    baseline_target_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    scl_target_accuracy: Option<f64>,
}

fn scl_command(
    exec: Execution,
    cfg: &SclConfig,
    source: &[Document],
    target: &[Document],
    predict: &[PathBuf],
    out: &Path,
) -> Result<String> {
    let model = scl_fit_with(exec, source, target, cfg)?;
    let model_path = out.join("scl_model.json");
    fs::write(&model_path, model.to_json() + "\n").map_err(|e| Error::io(&model_path, e))?;

    // Target accuracy is only reported when every target document is labeled.
    let labeled = target.iter().all(|d| d.label.is_some());
    let (base_acc, scl_acc) = if labeled {
        let baseline = fit_source_only(source, target, &cfg.hyper)?;
        (Some(labeled_accuracy(&baseline, target)?), Some(labeled_accuracy(&model, target)?))
    } else {
        (None, None)
    };
    jsonl::write_json(
        &out.join("scl_summary.json"),
        &SclSummary {
            n_pivots: model.pivot_set.pivots.len(),
            k_dims: model.svd.k,
            pivots: model.pivot_set.tokens.clone(),
            baseline_target_accuracy: base_acc,
            scl_target_accuracy: scl_acc,
        },
    )?;

    let mut predictions: Vec<Prediction> = Vec::new();
    for path in predict {
        let items = read_items(path)?;
        predictions.extend(par::map(exec, &items, |item| Prediction {
            task_id: None,
            item_id: item.item_id.clone(),
            answer: model
                .predict_label(&Document::new(item.item_id.clone(), item.prompt.clone()))
                .to_string(),
            latency_seconds: None,
        }));
    }
    if !predict.is_empty() {
        jsonl::write_jsonl(&out.join("predictions.jsonl"), &predictions)?;
    }

    Ok(match (base_acc, scl_acc) {
        (Some(b), Some(s)) => format!(
            "scl: {} pivots, k={}, target accuracy {:.4} (source-only {:.4})",
            model.pivot_set.pivots.len(),
            model.svd.k,
            s,
            b
        ),
        _ => format!("scl: {} pivots, k={}", model.pivot_set.pivots.len(), model.svd.k),
    })
}
