use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use ivos_core::dataset::{list_sequences, load_sequence, write_davis};
use ivos_core::harness::{score_directories, write_report, ReportFormat, SequenceFailure};
use ivos_core::{generate_synthetic, run_evaluation, FusionKind, InteractionKind, PropagatorKind, RunConfig, Strategy, SynthSpec};
use serde::Deserialize;

#[derive(Parser)]
#[command(name = "ivos", version, about = "Round-based interactive video segmentation benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a DAVIS-layout dataset and write a report.
    Run(RunArgs),
    /// Render synthetic sequences from a JSON spec into a DAVIS-layout directory.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "480p")]
        resolution: String,
    },
    /// Score predicted label PNGs against ground truth.
    Score {
        #[arg(long)]
        pred_root: PathBuf,
        #[arg(long)]
        gt_root: PathBuf,
        #[arg(long)]
        tolerance: Option<usize>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    dataset_root: PathBuf,
    #[arg(long, default_value = "480p")]
    resolution: String,
    /// Comma-separated sequence names; all sequences when omitted.
    #[arg(long, value_delimiter = ',')]
    sequences: Vec<String>,
    /// JSON run configuration; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    strategy: Option<Strategy>,
    #[arg(long)]
    max_clicks: Option<usize>,
    #[arg(long)]
    rounds: Option<u32>,
    #[arg(long)]
    memory_stride: Option<usize>,
    #[arg(long)]
    interaction: Option<InteractionKind>,
    #[arg(long)]
    propagator: Option<PropagatorKind>,
    #[arg(long)]
    fusion: Option<FusionKind>,
    #[arg(long)]
    decay_lambda: Option<f64>,
    #[arg(long)]
    min_region_area: Option<f64>,
    #[arg(long)]
    click_radius: Option<usize>,
    #[arg(long)]
    tolerance: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Record wall-clock round times and time-based metrics.
    #[arg(long)]
    timing: bool,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Report path; `.csv` writes the curve summary, anything else JSON.
    #[arg(long)]
    report: PathBuf,
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => RunConfig::default(),
        };
        if let Some(v) = self.strategy {
            c.strategy = v;
        }
        if let Some(v) = self.max_clicks {
            c.max_clicks = v;
        }
        if let Some(v) = self.rounds {
            c.max_rounds = v;
        }
        if let Some(v) = self.memory_stride {
            c.memory_stride = v;
        }
        if let Some(v) = self.interaction {
            c.backends.interaction = v;
        }
        if let Some(v) = self.propagator {
            c.backends.propagator = v;
        }
        if let Some(v) = self.fusion {
            c.backends.fusion = v;
        }
        if let Some(v) = self.decay_lambda {
            c.backends.decay_lambda = v;
        }
        if let Some(v) = self.min_region_area {
            c.min_region_area = v;
        }
        if self.click_radius.is_some() {
            c.click_radius = self.click_radius;
        }
        if self.tolerance.is_some() {
            c.boundary_tolerance = self.tolerance;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        c.timing |= self.timing;
        c.validate()?;
        Ok(c)
    }
}

fn run(args: &RunArgs) -> Result<()> {
    let config = args.config()?;
    let names = if args.sequences.is_empty() {
        list_sequences(&args.dataset_root, &args.resolution)?
    } else {
        args.sequences.clone()
    };
    if names.is_empty() {
        bail!("no sequences found under {}", args.dataset_root.display());
    }

    let mut loaded = Vec::new();
    let mut failures = Vec::new();
    for name in &names {
        match load_sequence(&args.dataset_root, &args.resolution, name) {
            Ok(seq) => loaded.push(seq),
            Err(e) => {
                log::warn!("skipping `{name}`: {e}");
                failures.push(SequenceFailure {
                    name: name.clone(),
                    error: e.to_string(),
                });
            }
        }
    }
    log::info!("evaluating {} sequence(s)", loaded.len());

    let mut report = run_evaluation(&loaded, &config, args.workers)?;
    report.add_failures(failures);
    write_report(&report, &args.report, ReportFormat::from_path(&args.report))?;

    for s in &report.sequences {
        println!("{:<24} rounds {:>2}  R-AUC-J&F {:.4}", s.name, s.rounds_run, s.r_auc);
    }
    for f in &report.failures {
        println!("{:<24} FAILED: {}", f.name, f.error);
    }
    match report.r_auc {
        Some(v) => println!("overall R-AUC-J&F {v:.4} over {} sequence(s)", report.sequences.len()),
        None => bail!("every sequence failed; report written to {}", args.report.display()),
    }
    if let Some(t) = &report.timing {
        if let Some(v) = t.mean_auc_jf {
            println!("AUC-J&F {v:.4} (wall clock)");
        }
        if let Some(v) = t.mean_jf_at_60s {
            println!("J&F@60s {v:.4} (wall clock)");
        }
    }
    Ok(())
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SpecFile {
    One(SynthSpec),
    Many(Vec<SynthSpec>),
}

fn synth(spec: &Path, out: &Path, resolution: &str) -> Result<()> {
    let text = fs::read_to_string(spec).with_context(|| format!("reading {}", spec.display()))?;
    let specs = match serde_json::from_str(&text).with_context(|| format!("parsing {}", spec.display()))? {
        SpecFile::One(s) => vec![s],
        SpecFile::Many(v) => v,
    };
    for s in &specs {
        let seq = generate_synthetic(s)?;
        write_davis(out, resolution, &seq)?;
        println!("wrote {} ({} frames)", seq.name, s.frames);
    }
    Ok(())
}

fn score(pred_root: &Path, gt_root: &Path, tolerance: Option<usize>) -> Result<()> {
    let report = score_directories(pred_root, gt_root, tolerance)?;
    println!("{:<24} {:>6} {:>8} {:>8} {:>8}", "sequence", "frames", "J", "F", "J&F");
    for s in &report.sequences {
        println!("{:<24} {:>6} {:>8.4} {:>8.4} {:>8.4}", s.name, s.frames, s.mean_j, s.mean_f, s.mean_jf);
    }
    println!("{:<24} {:>6} {:>8.4} {:>8.4} {:>8.4}", "mean", "", report.mean_j, report.mean_f, report.mean_jf);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => run(args),
        Command::Synth { spec, out, resolution } => synth(spec, out, resolution),
        Command::Score {
            pred_root,
            gt_root,
            tolerance,
        } => score(pred_root, gt_root, *tolerance),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
