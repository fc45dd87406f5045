//! Multi-sequence evaluation runs and their reports.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{BackendConfig, BackendError, BackendSet};
use crate::dataset::{list_files, read_label_png, DatasetError, SequenceDataset};
use crate::interactions::default_click_radius;
use crate::mask::ObjectId;
use crate::metrics::{auc_time, default_boundary_tolerance, frame_score, jf_at, r_auc, MetricError, RoundCurve};
use crate::robot::{next_annotation, BudgetConfig, RobotConfig, RobotError, RoundAnnotation, Strategy};
use crate::scheduler::{run_round, RoundContext, SchedulerError, SessionState};

pub const SCHEMA_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Robot(#[from] RobotError),
    #[error(transparent)]
    Scheduler(#[from] SchedulerError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("could not build worker pool: {0}")]
    Pool(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("report encoding failed: {0}")]
    Encode(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub strategy: Strategy,
    pub max_clicks: usize,
    pub max_rounds: u32,
    pub memory_stride: usize,
    pub backends: BackendConfig,
    /// Fraction of the frame area below which erroneous regions get no click.
    pub min_region_area: f64,
    /// Disk radius for click maps; scaled from the frame size when absent.
    pub click_radius: Option<usize>,
    /// Boundary matching tolerance; scaled from the frame size when absent.
    pub boundary_tolerance: Option<usize>,
    /// Recorded in the report; the bundled backends draw no random numbers.
    pub seed: u64,
    pub timing: bool,
    pub time_budget_per_object_seconds: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let robot = RobotConfig::default();
        Self {
            strategy: robot.strategy,
            max_clicks: robot.max_clicks,
            max_rounds: robot.budget.max_rounds,
            memory_stride: 5,
            backends: BackendConfig::default(),
            min_region_area: robot.min_region_fraction,
            click_radius: None,
            boundary_tolerance: None,
            seed: 0,
            timing: false,
            time_budget_per_object_seconds: robot.budget.time_budget_per_object_seconds,
        }
    }
}

impl RunConfig {
    pub fn robot(&self) -> RobotConfig {
        RobotConfig {
            strategy: self.strategy,
            max_clicks: self.max_clicks,
            min_region_fraction: self.min_region_area,
            budget: BudgetConfig {
                max_rounds: self.max_rounds,
                time_budget_per_object_seconds: self.time_budget_per_object_seconds,
            },
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.robot().validate()?;
        if self.memory_stride == 0 {
            return Err(HarnessError::Config("memory stride must be at least 1".into()));
        }
        let l = self.backends.decay_lambda;
        if !(l >= 0.0 && l.is_finite()) {
            return Err(HarnessError::Config(format!("decay lambda must be >= 0, got {l}")));
        }
        Ok(())
    }
}

/// Scores reported for a trained neural click pipeline on the DAVIS 2017
/// validation set. They are targets for real backends; the bundled
/// reference backends do not produce them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTargets {
    pub r_auc_jf: f64,
    pub auc_jf: f64,
    pub jf_at_60s: f64,
    /// R-AUC-J&F reported for this run's strategy and click cap, if any.
    pub strategy_r_auc_jf: Option<f64>,
}

impl ReferenceTargets {
    pub fn for_config(strategy: Strategy, max_clicks: usize) -> Self {
        let row: &[f64] = match strategy {
            Strategy::F1 => &[0.69],
            Strategy::F2 => &[0.72, 0.76, 0.76, 0.75, 0.75, 0.75, 0.76],
            Strategy::F3 => &[0.74, 0.77, 0.78, 0.78, 0.78, 0.78, 0.78],
        };
        Self {
            r_auc_jf: 0.76,
            auc_jf: 0.83,
            jf_at_60s: 0.84,
            strategy_r_auc_jf: max_clicks.checked_sub(1).and_then(|i| row.get(i)).copied(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceReport {
    pub name: String,
    pub num_frames: usize,
    pub object_ids: Vec<ObjectId>,
    /// Global J&F before any interaction.
    pub initial_jf: f64,
    pub rounds_run: u32,
    pub stopped_early: bool,
    pub annotations: Vec<RoundAnnotation>,
    /// Rounds 1 to `rounds_run` without timestamps.
    pub curve: RoundCurve,
    pub r_auc: f64,
}

impl SequenceReport {
    /// Number of (frame, object) pairs behind each curve value.
    pub fn pairs(&self) -> usize {
        self.num_frames * self.object_ids.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceFailure {
    pub name: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceTiming {
    pub name: String,
    pub budget_seconds: f64,
    pub round_seconds: Vec<f64>,
    pub auc_jf: Option<f64>,
    pub jf_at_60s: Option<f64>,
}

/// Wall-clock results. They depend on the machine that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub note: String,
    pub sequences: Vec<SequenceTiming>,
    pub mean_auc_jf: Option<f64>,
    pub mean_jf_at_60s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub schema_version: String,
    pub config: RunConfig,
    pub partial: bool,
    pub sequences: Vec<SequenceReport>,
    pub failures: Vec<SequenceFailure>,
    /// Pooled over every (frame, object) pair of every sequence, each
    /// sequence holding its last value after it stops.
    pub global_curve: RoundCurve,
    pub r_auc: Option<f64>,
    pub reference_targets: ReferenceTargets,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<TimingReport>,
}

impl EvaluationReport {
    /// Adds sequences that failed before evaluation (while loading, say)
    /// and marks the report partial.
    pub fn add_failures(&mut self, failures: impl IntoIterator<Item = SequenceFailure>) {
        self.failures.extend(failures);
        self.failures.sort_by(|a, b| a.name.cmp(&b.name));
        self.partial = !self.failures.is_empty();
    }

    /// Recomputes the pooled curve and its R-AUC from the sequence curves.
    pub fn recompute_global(&self) -> Result<(RoundCurve, Option<f64>), MetricError> {
        global_curve(&self.sequences, self.config.max_rounds)
    }
}

fn global_curve(sequences: &[SequenceReport], r_max: u32) -> Result<(RoundCurve, Option<f64>), MetricError> {
    let last = sequences.iter().map(|s| s.curve.last_round()).max().unwrap_or(0);
    let total: usize = sequences.iter().map(SequenceReport::pairs).sum();
    let mut curve = RoundCurve::new();
    for round in 1..=last {
        let mut sum = 0.0;
        for s in sequences {
            let v = s.curve.value_at_round(round).ok_or(MetricError::EmptyCurve)?;
            sum += v * s.pairs() as f64;
        }
        curve.push((sum / total as f64).clamp(0.0, 1.0), None);
    }
    let auc = if curve.is_empty() {
        None
    } else {
        Some(r_auc(&curve, r_max)?)
    };
    Ok((curve, auc))
}

struct SequenceOutcome {
    report: SequenceReport,
    timing: Option<SequenceTiming>,
}

/// Runs the robot on one sequence until it stops or the budget runs out.
fn evaluate_sequence(seq: &SequenceDataset, config: &RunConfig) -> Result<SequenceOutcome, HarnessError> {
    let gt = &seq.ground_truth;
    let (w, h) = gt.dims();
    let tolerance = config.boundary_tolerance.unwrap_or_else(|| default_boundary_tolerance(w, h));
    let robot = config.robot();
    let set = BackendSet::build(&config.backends, gt)?;
    let ctx = RoundContext {
        gt,
        backends: set.backends(),
        frames: &seq.frames,
        stride: config.memory_stride,
        click_radius: config.click_radius.unwrap_or_else(|| default_click_radius(w, h)),
    };
    let mut state = SessionState::new(gt, tolerance)?;
    if config.timing {
        state.enable_timing();
    }
    let initial_jf = state.global_jf();
    let mut annotations = Vec::new();
    let mut stopped_early = false;
    while state.round() < config.max_rounds {
        let annotation = next_annotation(&state, gt, &robot, seq.initial_scribbles.as_deref())?;
        if annotation.is_stop() {
            log::info!("{}: nothing left to correct after round {}", seq.name, state.round());
            stopped_early = true;
            break;
        }
        run_round(&mut state, &annotation, &ctx)?;
        log::debug!("{}: round {} J&F {:.4}", seq.name, state.round(), state.global_jf());
        annotations.push(annotation);
    }

    let mut curve = state.curve().clone();
    if curve.is_empty() {
        curve.push(initial_jf, config.timing.then_some(0.0));
    }
    let round_seconds: Vec<f64> = curve.samples.iter().filter_map(|s| s.wall_clock_seconds).collect();
    for s in &mut curve.samples {
        s.wall_clock_seconds = None;
    }
    let timing = config.timing.then(|| {
        let mut timed = curve.clone();
        for (s, &t) in timed.samples.iter_mut().zip(&round_seconds) {
            s.wall_clock_seconds = Some(t);
        }
        let budget_seconds = robot.budget.time_budget_seconds(gt.object_ids().len());
        SequenceTiming {
            name: seq.name.clone(),
            budget_seconds,
            auc_jf: auc_time(&timed, budget_seconds).ok(),
            jf_at_60s: jf_at(&timed, 60.0).ok(),
            round_seconds,
        }
    });
    let r = r_auc(&curve, config.max_rounds)?;
    Ok(SequenceOutcome {
        report: SequenceReport {
            name: seq.name.clone(),
            num_frames: gt.num_frames(),
            object_ids: gt.object_ids().iter().copied().collect(),
            initial_jf,
            rounds_run: state.round(),
            stopped_early,
            annotations,
            curve,
            r_auc: r,
        },
        timing,
    })
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Option<Vec<f64>> = values.collect();
    let v = v?;
    if v.is_empty() {
        return None;
    }
    Some(v.iter().sum::<f64>() / v.len() as f64)
}

/// Evaluates every sequence on a pool of `workers` threads (0 picks the
/// machine's parallelism). Results are merged in sequence-name order, so
/// the report does not depend on the worker count. A failing sequence is
/// recorded and marks the report partial.
pub fn run_evaluation(
    datasets: &[SequenceDataset],
    config: &RunConfig,
    workers: usize,
) -> Result<EvaluationReport, HarnessError> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| HarnessError::Pool(e.to_string()))?;
    let mut order: Vec<&SequenceDataset> = datasets.iter().collect();
    order.sort_by(|a, b| a.name.cmp(&b.name));
    let results: Vec<(String, Result<SequenceOutcome, HarnessError>)> = pool.install(|| {
        use rayon::prelude::*;
        order
            .par_iter()
            .map(|seq| (seq.name.clone(), evaluate_sequence(seq, config)))
            .collect()
    });

    let mut sequences = Vec::new();
    let mut timings = Vec::new();
    let mut failures = Vec::new();
    for (name, result) in results {
        match result {
            Ok(outcome) => {
                sequences.push(outcome.report);
                timings.extend(outcome.timing);
            }
            Err(e) => {
                log::warn!("sequence `{name}` failed: {e}");
                failures.push(SequenceFailure {
                    name,
                    error: e.to_string(),
                });
            }
        }
    }
    let (global, auc) = global_curve(&sequences, config.max_rounds)?;
    let timing = config.timing.then(|| TimingReport {
        note: "wall-clock results; they depend on the hardware and load of the machine that ran them".into(),
        mean_auc_jf: mean(timings.iter().map(|t| t.auc_jf)),
        mean_jf_at_60s: mean(timings.iter().map(|t| t.jf_at_60s)),
        sequences: timings,
    });
    Ok(EvaluationReport {
        schema_version: SCHEMA_VERSION.to_string(),
        config: config.clone(),
        partial: !failures.is_empty(),
        sequences,
        failures,
        global_curve: global,
        r_auc: auc,
        reference_targets: ReferenceTargets::for_config(config.strategy, config.max_clicks),
        timing,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl ReportFormat {
    /// `.csv` files get CSV, everything else JSON.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => ReportFormat::Csv,
            _ => ReportFormat::Json,
        }
    }
}

pub fn report_to_json(report: &EvaluationReport) -> Result<String, HarnessError> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

/// One `sequence,round,global_jf` row per sequence round, then a summary
/// row with the pooled R-AUC.
pub fn report_to_csv(report: &EvaluationReport) -> String {
    let mut out = String::from("sequence,round,global_jf\n");
    for s in &report.sequences {
        for sample in &s.curve.samples {
            out.push_str(&format!("{},{},{}\n", csv_field(&s.name), sample.round, sample.global_jf));
        }
    }
    let summary = report.r_auc.map_or(String::new(), |v| v.to_string());
    out.push_str(&format!("r_auc,,{summary}\n"));
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn write_report(report: &EvaluationReport, path: &Path, format: ReportFormat) -> Result<(), HarnessError> {
    let text = match format {
        ReportFormat::Json => report_to_json(report)?,
        ReportFormat::Csv => report_to_csv(report),
    };
    let io = |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(text.as_bytes()).map_err(io)
}

pub fn read_report(path: &Path) -> Result<EvaluationReport, HarnessError> {
    let text = fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(serde_json::from_str(&text)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceScore {
    pub name: String,
    pub frames: usize,
    pub mean_j: f64,
    pub mean_f: f64,
    pub mean_jf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub sequences: Vec<SequenceScore>,
    pub mean_j: f64,
    pub mean_f: f64,
    pub mean_jf: f64,
}

/// Scores predicted masks against ground truth. Both roots hold one
/// directory of indexed PNGs per sequence; every ground-truth sequence
/// must have a prediction for each of its frames.
pub fn score_directories(pred_root: &Path, gt_root: &Path, tolerance: Option<usize>) -> Result<ScoreReport, HarnessError> {
    let mut names = Vec::new();
    for entry in fs::read_dir(gt_root).map_err(|source| HarnessError::Io {
        path: gt_root.to_path_buf(),
        source,
    })? {
        let entry = entry.map_err(|source| HarnessError::Io {
            path: gt_root.to_path_buf(),
            source,
        })?;
        if entry.path().is_dir() {
            names.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    names.sort();
    let (mut all_j, mut all_f, mut n_all) = (0.0, 0.0, 0usize);
    let mut sequences = Vec::new();
    for name in names {
        let gt_files = list_files(&gt_root.join(&name), "png")?;
        let (mut sj, mut sf, mut n) = (0.0, 0.0, 0usize);
        let mut ids = BTreeSet::new();
        let mut pairs = Vec::new();
        for g in &gt_files {
            let gt = read_label_png(g)?;
            let p = pred_root.join(&name).join(g.file_name().expect("listed files have names"));
            let pred = read_label_png(&p)?;
            ids.extend(gt.object_ids());
            pairs.push((pred, gt));
        }
        for (i, (pred, gt)) in pairs.iter().enumerate() {
            if ids.is_empty() {
                break;
            }
            let tol = tolerance.unwrap_or_else(|| default_boundary_tolerance(gt.width(), gt.height()));
            let score = frame_score(i, pred, gt, &ids, tol)?;
            for s in score.per_object.values() {
                sj += s.j;
                sf += s.f;
                n += 1;
            }
        }
        all_j += sj;
        all_f += sf;
        n_all += n;
        let d = n.max(1) as f64;
        sequences.push(SequenceScore {
            name,
            frames: gt_files.len(),
            mean_j: sj / d,
            mean_f: sf / d,
            mean_jf: (sj + sf) / (2.0 * d),
        });
    }
    let d = n_all.max(1) as f64;
    Ok(ScoreReport {
        sequences,
        mean_j: all_j / d,
        mean_f: all_f / d,
        mean_jf: (all_j + all_f) / (2.0 * d),
    })
}
