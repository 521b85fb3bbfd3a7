//! Command-line front end: data generation, training, prediction and
//! evaluation subcommands plus the full leave-one-subject-out experiment.
//!
//! Exit codes: 0 success, 1 invalid input or usage, 2 filesystem failure.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::evaluation::{
    bland_altman_points, labels_to_segments, limits_of_agreement, precision_recall_f1, reg_metrics,
    run_pipeline_eval, BlandAltmanPoint, PipelineConfig,
};
use crate::features::{extract_feature_vector, feature_names, roi_window, CATALOG_VERSION, FEATURE_DIM};
use crate::io::{
    format_sig9, load_model, read_annotations, read_heights, read_session_csv, save_model, synth_generate,
    write_annotations, write_atomic, write_heights, write_session_csv, HeightRecord, ImuSession,
    SyntheticConfig, CHECKPOINT_FORMAT_VERSION,
};
use crate::regression::{fit_regressor, permutation_importance, RegressorConfig, RegressorKind, TrainedRegressor};
use crate::segmentation::{
    extract_segments, jump_counts, match_segments, segments_to_labels, select_roi, ClassVocabulary, MatchResult,
    Segment, DEFAULT_MIN_DURATION, DEFAULT_ROI_WIDTH,
};
use crate::tcn::{predict, train, ModelWeights, MsTcnConfig, TCN_FORMAT_VERSION};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_IO: i32 = 2;

const HEIGHTS_FILE: &str = "heights.csv";
const ANNOTATION_DIR: &str = "annotations";
const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Parser)]
#[command(name = "vjump", version, about = "Volleyball jump segmentation and jump height estimation from waist IMU data")]
pub struct Cli {
    /// Seed for every random choice of the run.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML settings file; command-line flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate labeled synthetic sessions and their jump heights.
    Synth(SynthArgs),
    /// Train a segmentation network on labeled sessions.
    Train(TrainArgs),
    /// Segment one session with a trained network.
    Predict(PredictArgs),
    /// Score predicted segments against ground truth.
    EvalSeg(EvalSegArgs),
    /// Compute jump features for ground-truth or predicted segments.
    ExtractFeatures(ExtractArgs),
    /// Fit a height regressor on a feature table.
    FitReg(FitRegArgs),
    /// Score a height regressor on a feature table.
    EvalReg(EvalRegArgs),
    /// Run the full leave-one-subject-out experiment.
    Pipeline(PipelineArgs),
    /// Permutation importance of each feature for a height regressor.
    Importance(ImportanceArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Number of subjects (sessions) to generate.
    #[arg(long)]
    pub subjects: Option<usize>,
    /// Accelerometer noise standard deviation in g.
    #[arg(long)]
    pub noise_std: Option<f64>,
    /// Session length in seconds.
    #[arg(long)]
    pub duration: Option<f64>,
    /// Seed of the segment script, separate from the noise seed.
    #[arg(long)]
    pub script_seed: Option<u64>,
}

#[derive(Debug, Args, Default)]
pub struct TcnArgs {
    /// Training epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Number of stages; each after the first refines the previous one.
    #[arg(long)]
    pub stages: Option<usize>,
    /// Dilated residual layers per stage.
    #[arg(long)]
    pub layers: Option<usize>,
    /// Feature maps per layer.
    #[arg(long)]
    pub filters: Option<usize>,
    /// Adam learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory of session CSVs.
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub tcn: TcnArgs,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Segmentation checkpoint written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    /// Session CSV to segment.
    #[arg(long)]
    pub session: PathBuf,
    /// Drop predicted segments shorter than this many samples.
    #[arg(long)]
    pub min_duration: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalSegArgs {
    /// Directory of predicted annotation CSVs named after the subjects.
    #[arg(long)]
    pub pred: PathBuf,
    /// Directory of labeled session CSVs.
    #[arg(long)]
    pub data: PathBuf,
    /// Minimum IoU for a predicted segment to match a true one.
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Directory of session CSVs and heights.csv.
    #[arg(long)]
    pub data: PathBuf,
    /// Directory of predicted annotation CSVs; ground truth when absent.
    #[arg(long)]
    pub segments: Option<PathBuf>,
    /// Feature window width in samples.
    #[arg(long)]
    pub roi_width: Option<usize>,
    /// Minimum IoU when matching predicted segments to true heights.
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FitRegArgs {
    /// Feature table written by `extract-features`.
    #[arg(long)]
    pub features: PathBuf,
    /// rf, gbt or mlp.
    #[arg(long)]
    pub regressor: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvalRegArgs {
    /// Regressor checkpoint written by `fit-reg`.
    #[arg(long)]
    pub model: PathBuf,
    /// Feature table with heights.
    #[arg(long)]
    pub features: PathBuf,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Directory of labeled session CSVs and heights.csv.
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub tcn: TcnArgs,
    /// rf, gbt or mlp.
    #[arg(long)]
    pub regressor: Option<String>,
    /// Feature window width in samples.
    #[arg(long)]
    pub roi_width: Option<usize>,
    /// Minimum IoU for a predicted segment to match a true one.
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ImportanceArgs {
    /// Regressor checkpoint written by `fit-reg`.
    #[arg(long)]
    pub model: PathBuf,
    /// Feature table with heights.
    #[arg(long)]
    pub features: PathBuf,
    /// Shuffles per feature.
    #[arg(long)]
    pub repeats: Option<usize>,
}

/// Every tunable of a run. Loaded from the `--config` file, then
/// overridden by flags; the merged result is echoed in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub synth: SyntheticConfig,
    pub tcn: MsTcnConfig,
    pub regressor: RegressorConfig,
    pub roi_width: usize,
    pub iou_threshold: f64,
    pub min_duration: usize,
    pub importance_repeats: usize,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            seed: None,
            out: None,
            synth: SyntheticConfig::default(),
            tcn: MsTcnConfig::default(),
            regressor: RegressorConfig::default(),
            roi_width: DEFAULT_ROI_WIDTH,
            iou_threshold: 0.1,
            min_duration: DEFAULT_MIN_DURATION,
            importance_repeats: 10,
        }
    }
}

impl Settings {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
                .unwrap_or(0);
            Error::Parse {
                path: path.to_path_buf(),
                line,
                message: e.message().to_string(),
            }
        })
    }

    /// Pushes the run seed into every seeded component.
    fn apply_seed(&mut self) {
        if let Some(seed) = self.seed {
            self.synth.seed = seed;
            self.tcn.seed = seed;
            self.regressor = self.regressor.clone().with_seed(seed);
        }
    }

    fn apply_tcn(&mut self, a: &TcnArgs) {
        if let Some(v) = a.epochs {
            self.tcn.epochs = v;
        }
        if let Some(v) = a.stages {
            self.tcn.num_stages = v;
        }
        if let Some(v) = a.layers {
            self.tcn.stage.num_layers = v;
        }
        if let Some(v) = a.filters {
            self.tcn.stage.num_filters = v;
        }
        if let Some(v) = a.lr {
            self.tcn.optimizer.lr = v;
        }
    }

    fn apply_regressor(&mut self, kind: Option<&str>) -> Result<()> {
        if let Some(k) = kind {
            let kind: RegressorKind = k.parse()?;
            if kind != self.regressor.kind() {
                self.regressor = RegressorConfig::default_for(kind);
            }
        }
        Ok(())
    }

    fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            tcn: self.tcn.clone(),
            regressor: self.regressor.clone(),
            roi_width: self.roi_width,
            iou_threshold: self.iou_threshold,
            min_duration: self.min_duration,
        }
    }
}

/// Provenance record written next to every run's outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub settings: Settings,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub versions: serde_json::Value,
    pub started_unix_s: u64,
    pub wall_clock_s: f64,
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn run(argv: &[String]) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli, argv) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_io() {
                EXIT_IO
            } else {
                EXIT_INVALID
            }
        }
    }
}

struct Run {
    settings: Settings,
    out: PathBuf,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Run {
    fn output(&mut self, name: &str) -> PathBuf {
        let p = self.out.join(name);
        self.outputs.push(p.clone());
        p
    }
}

fn dispatch(cli: Cli, argv: &[String]) -> Result<()> {
    let started = Instant::now();
    let started_unix_s = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut settings = match &cli.config {
        Some(p) => Settings::load(p)?,
        None => Settings::default(),
    };
    if cli.seed.is_some() {
        settings.seed = cli.seed;
    }
    if cli.out.is_some() {
        settings.out = cli.out.clone();
    }
    let out = settings.out.clone().unwrap_or_else(|| PathBuf::from("."));
    let mut run = Run {
        settings,
        out,
        inputs: cli.config.iter().cloned().collect(),
        outputs: Vec::new(),
    };
    let vocab = ClassVocabulary::default();
    let name = match &cli.command {
        Command::Synth(a) => {
            cmd_synth(&mut run, a)?;
            "synth"
        }
        Command::Train(a) => {
            cmd_train(&mut run, a, &vocab)?;
            "train"
        }
        Command::Predict(a) => {
            cmd_predict(&mut run, a, &vocab)?;
            "predict"
        }
        Command::EvalSeg(a) => {
            cmd_eval_seg(&mut run, a, &vocab)?;
            "eval-seg"
        }
        Command::ExtractFeatures(a) => {
            cmd_extract(&mut run, a, &vocab)?;
            "extract-features"
        }
        Command::FitReg(a) => {
            cmd_fit_reg(&mut run, a)?;
            "fit-reg"
        }
        Command::EvalReg(a) => {
            cmd_eval_reg(&mut run, a)?;
            "eval-reg"
        }
        Command::Pipeline(a) => {
            cmd_pipeline(&mut run, a, &vocab)?;
            "pipeline"
        }
        Command::Importance(a) => {
            cmd_importance(&mut run, a)?;
            "importance"
        }
    };
    let manifest_path = run.out.join(MANIFEST_FILE);
    let manifest = RunManifest {
        command: name.to_string(),
        argv: argv.to_vec(),
        settings: run.settings,
        inputs: run.inputs,
        outputs: run.outputs,
        versions: json!({
            "vjump": env!("CARGO_PKG_VERSION"),
            "feature_catalog": CATALOG_VERSION,
            "tcn_format": TCN_FORMAT_VERSION,
            "checkpoint_format": CHECKPOINT_FORMAT_VERSION,
        }),
        started_unix_s,
        wall_clock_s: started.elapsed().as_secs_f64(),
    };
    write_json(&manifest_path, &manifest)?;
    log::info!("{name} finished in {:.1} s", started.elapsed().as_secs_f64());
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::invalid(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Labeled sessions (`*.csv`, sorted by name) and optional `heights.csv`
/// of a data directory. Sessions without a label column take their labels
/// from `annotations/<subject>.csv` when present.
pub fn load_data_dir(dir: &Path, vocab: &ClassVocabulary) -> Result<(Vec<ImuSession>, Vec<HeightRecord>)> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_csv = path.extension().is_some_and(|e| e == "csv");
        if is_csv && path.is_file() && path.file_name().is_some_and(|n| n != HEIGHTS_FILE) {
            files.push(path);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(Error::invalid(format!("no session CSVs in {}", dir.display())));
    }
    let mut sessions = Vec::with_capacity(files.len());
    for f in files {
        let mut s = read_session_csv(&f, vocab)?;
        if s.labels.is_none() {
            let ann = dir.join(ANNOTATION_DIR).join(format!("{}.csv", s.subject_id));
            if ann.is_file() {
                let segs = read_annotations(&ann, vocab, Some(s.len()))?;
                s.labels = Some(segments_to_labels(&segs, s.len())?);
            }
        }
        sessions.push(s);
    }
    let heights_path = dir.join(HEIGHTS_FILE);
    let heights = if heights_path.is_file() {
        read_heights(&heights_path, vocab)?
    } else {
        Vec::new()
    };
    Ok((sessions, heights))
}

fn require_labels(sessions: &[ImuSession]) -> Result<()> {
    match sessions.iter().find(|s| s.labels.is_none()) {
        Some(s) => Err(Error::invalid(format!("session {} has no labels", s.subject_id))),
        None => Ok(()),
    }
}

fn cmd_synth(run: &mut Run, a: &SynthArgs) -> Result<()> {
    let s = &mut run.settings;
    if let Some(v) = a.subjects {
        s.synth.num_subjects = v;
    }
    if let Some(v) = a.noise_std {
        s.synth.noise_std_g = v;
    }
    if let Some(v) = a.duration {
        s.synth.session_duration_s = v;
    }
    if a.script_seed.is_some() {
        s.synth.script_seed = a.script_seed;
    }
    s.apply_seed();
    let data = synth_generate(&s.synth)?;
    let vocab = ClassVocabulary::default();
    for session in &data.sessions {
        let path = run.output(&format!("{}.csv", session.subject_id));
        write_session_csv(&path, session, &vocab)?;
        let segs = extract_segments(session.labels.as_ref().expect("generated sessions are labeled"));
        let ann = run.output(&format!("{ANNOTATION_DIR}/{}.csv", session.subject_id));
        write_annotations(&ann, &segs, &vocab)?;
    }
    let heights = run.output(HEIGHTS_FILE);
    write_heights(&heights, &data.heights, &vocab)?;
    log::info!(
        "wrote {} sessions with {} height-labeled jumps to {}",
        data.sessions.len(),
        data.heights.len(),
        run.out.display()
    );
    Ok(())
}

fn cmd_train(run: &mut Run, a: &TrainArgs, vocab: &ClassVocabulary) -> Result<()> {
    run.settings.apply_tcn(&a.tcn);
    run.settings.apply_seed();
    run.inputs.push(a.data.clone());
    let (sessions, _) = load_data_dir(&a.data, vocab)?;
    require_labels(&sessions)?;
    let outcome = train(&run.settings.tcn, &sessions)?;
    let path = run.output("model.ckpt");
    save_model(&outcome.weights, &path)?;
    let mut log_csv = String::from("epoch,loss\n");
    for (i, l) in outcome.loss_history.iter().enumerate() {
        writeln!(log_csv, "{},{}", i + 1, format_sig9(*l)).expect("string write");
    }
    let loss_path = run.output("loss.csv");
    write_atomic(&loss_path, log_csv.as_bytes())
}

fn cmd_predict(run: &mut Run, a: &PredictArgs, vocab: &ClassVocabulary) -> Result<()> {
    if let Some(v) = a.min_duration {
        run.settings.min_duration = v;
    }
    run.inputs.extend([a.model.clone(), a.session.clone()]);
    let weights: ModelWeights = load_model(&a.model)?;
    let session = read_session_csv(&a.session, vocab)?;
    let (_, labels) = predict(&weights, &session)?;
    let segs = labels_to_segments(&labels, run.settings.min_duration);
    let path = run.output(&format!("{}.csv", session.subject_id));
    write_annotations(&path, &segs, vocab)?;
    let (counts, total) = jump_counts(&segs, vocab);
    log::info!("{}: {} segments, {total} height-eligible ({counts:?})", session.subject_id, segs.len());
    Ok(())
}

fn predicted_segments(dir: &Path, session: &ImuSession, vocab: &ClassVocabulary) -> Result<Vec<Segment>> {
    read_annotations(&dir.join(format!("{}.csv", session.subject_id)), vocab, Some(session.len()))
}

fn cmd_eval_seg(run: &mut Run, a: &EvalSegArgs, vocab: &ClassVocabulary) -> Result<()> {
    if let Some(t) = a.threshold {
        run.settings.iou_threshold = t;
    }
    run.inputs.extend([a.pred.clone(), a.data.clone()]);
    let (sessions, _) = load_data_dir(&a.data, vocab)?;
    require_labels(&sessions)?;
    let threshold = run.settings.iou_threshold;
    let mut results = Vec::new();
    let mut pred_counts = Vec::new();
    let mut true_counts = Vec::new();
    for s in &sessions {
        let pred = predicted_segments(&a.pred, s, vocab)?;
        let truth = extract_segments(s.labels.as_ref().expect("checked"));
        pred_counts.push(jump_counts(&pred, vocab).1);
        true_counts.push(jump_counts(&truth, vocab).1);
        results.push(match_segments(&pred, &truth, threshold));
    }
    let merged = MatchResult::merge(&results, threshold);
    let count_loa = if sessions.len() >= 2 {
        Some(limits_of_agreement(&pred_counts, &true_counts)?)
    } else {
        None
    };
    let path = run.output("seg_metrics.json");
    write_json(
        &path,
        &json!({
            "seg_metrics": precision_recall_f1(&merged),
            "count_loa": count_loa,
            "classes": vocab.names(),
        }),
    )
}

/// One row of a feature table.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub subject_id: String,
    pub segment: Segment,
    pub height_m: Option<f64>,
    pub values: Vec<f64>,
}

fn features_header() -> String {
    let mut h = String::from("subject_id,start_sample,end_sample,label,height_m");
    for n in feature_names() {
        h.push(',');
        h.push_str(&n);
    }
    h
}

/// Values are written in shortest round-trip form so that models fitted
/// from the table see exactly the in-memory features.
pub fn write_feature_table(path: &Path, rows: &[FeatureRow], vocab: &ClassVocabulary) -> Result<()> {
    let mut out = features_header();
    out.push('\n');
    for r in rows {
        let label = vocab.name(r.segment.class_id).unwrap_or("?");
        let h = r.height_m.map(|v| v.to_string()).unwrap_or_default();
        write!(out, "{},{},{},{label},{h}", r.subject_id, r.segment.start, r.segment.end).expect("string write");
        for v in &r.values {
            write!(out, ",{v}").expect("string write");
        }
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

pub fn read_feature_table(path: &Path, vocab: &ClassVocabulary) -> Result<Vec<FeatureRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let fail = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == features_header() => {}
        _ => {
            return Err(fail(
                1,
                format!("bad header; expected the {CATALOG_VERSION}-catalog feature columns"),
            ))
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != 5 + FEATURE_DIM {
            return Err(fail(line_no, format!("expected {} fields, found {}", 5 + FEATURE_DIM, cells.len())));
        }
        let num = |j: usize| -> Result<f64> {
            cells[j]
                .parse::<f64>()
                .map_err(|_| fail(line_no, format!("field {}: {:?} is not a number", j + 1, cells[j])))
        };
        let idx = |j: usize| -> Result<usize> {
            cells[j]
                .parse::<usize>()
                .map_err(|_| fail(line_no, format!("field {}: {:?} is not a sample index", j + 1, cells[j])))
        };
        let class = vocab.require(cells[3]).map_err(|e| fail(line_no, e.to_string()))?;
        let height_m = if cells[4].is_empty() { None } else { Some(num(4)?) };
        let values = (5..5 + FEATURE_DIM).map(num).collect::<Result<Vec<_>>>()?;
        rows.push(FeatureRow {
            subject_id: cells[0].to_string(),
            segment: Segment::new(idx(1)?, idx(2)?, class),
            height_m,
            values,
        });
    }
    Ok(rows)
}

/// Feature rows of a session's eligible jumps. With predicted segments,
/// each row carries the height of the ground-truth jump it matches.
fn session_features(
    session: &ImuSession,
    segments: &[Segment],
    matches: Option<&MatchResult>,
    heights: &BTreeMap<(String, Segment), f64>,
    vocab: &ClassVocabulary,
    roi_width: usize,
) -> Result<Vec<FeatureRow>> {
    let mut rows = Vec::new();
    for seg in segments.iter().filter(|s| vocab.is_eligible(s.class_id)) {
        let truth = match matches {
            Some(m) => m.pairs.iter().find(|p| p.pred == *seg).map(|p| p.truth),
            None => Some(*seg),
        };
        let height_m = truth.and_then(|t| heights.get(&(session.subject_id.clone(), t)).copied());
        let roi = select_roi(seg, session.len(), roi_width);
        let window = roi_window(session.samples.view(), &roi);
        let fv = extract_feature_vector(window.view(), seg.class_id, vocab)?;
        rows.push(FeatureRow {
            subject_id: session.subject_id.clone(),
            segment: *seg,
            height_m,
            values: fv.values,
        });
    }
    Ok(rows)
}

fn cmd_extract(run: &mut Run, a: &ExtractArgs, vocab: &ClassVocabulary) -> Result<()> {
    if let Some(w) = a.roi_width {
        run.settings.roi_width = w;
    }
    if let Some(t) = a.threshold {
        run.settings.iou_threshold = t;
    }
    run.inputs.push(a.data.clone());
    run.inputs.extend(a.segments.iter().cloned());
    let (sessions, heights) = load_data_dir(&a.data, vocab)?;
    let index: BTreeMap<(String, Segment), f64> = heights
        .iter()
        .map(|h| ((h.subject_id.clone(), h.segment), h.height_m))
        .collect();
    let mut rows = Vec::new();
    for s in &sessions {
        let truth = s.labels.as_ref().map(|l| extract_segments(l));
        let new_rows = match &a.segments {
            Some(dir) => {
                let pred = predicted_segments(dir, s, vocab)?;
                let m = truth
                    .as_ref()
                    .map(|t| match_segments(&pred, t, run.settings.iou_threshold));
                session_features(s, &pred, m.as_ref(), &index, vocab, run.settings.roi_width)?
            }
            None => {
                let truth = truth
                    .ok_or_else(|| Error::invalid(format!("session {} has no labels", s.subject_id)))?;
                session_features(s, &truth, None, &index, vocab, run.settings.roi_width)?
            }
        };
        rows.extend(new_rows);
    }
    let path = run.output("features.csv");
    write_feature_table(&path, &rows, vocab)?;
    log::info!("wrote {} feature rows", rows.len());
    Ok(())
}

/// Rows with a known height as a design matrix and target vector.
fn labeled_matrix(rows: &[FeatureRow]) -> (Array2<f64>, Vec<f64>, Vec<&FeatureRow>) {
    let kept: Vec<&FeatureRow> = rows.iter().filter(|r| r.height_m.is_some()).collect();
    let mut x = Array2::zeros((kept.len(), FEATURE_DIM));
    for (i, r) in kept.iter().enumerate() {
        x.row_mut(i).assign(&ndarray::ArrayView1::from(&r.values));
    }
    let y = kept.iter().map(|r| r.height_m.expect("filtered")).collect();
    (x, y, kept)
}

fn cmd_fit_reg(run: &mut Run, a: &FitRegArgs) -> Result<()> {
    run.settings.apply_regressor(a.regressor.as_deref())?;
    run.settings.apply_seed();
    run.inputs.push(a.features.clone());
    let rows = read_feature_table(&a.features, &ClassVocabulary::default())?;
    let (x, y, _) = labeled_matrix(&rows);
    if y.is_empty() {
        return Err(Error::invalid("feature table has no rows with a height"));
    }
    let model = fit_regressor(x.view(), &y, &run.settings.regressor)?;
    let path = run.output("regressor.ckpt");
    save_model(&model, &path)
}

fn cmd_eval_reg(run: &mut Run, a: &EvalRegArgs) -> Result<()> {
    run.inputs.extend([a.model.clone(), a.features.clone()]);
    let vocab = ClassVocabulary::default();
    let model: TrainedRegressor = load_model(&a.model)?;
    let rows = read_feature_table(&a.features, &vocab)?;
    let (x, y, kept) = labeled_matrix(&rows);
    let pred = model.predict_matrix(x.view())?;
    let mut table = String::from("subject_id,start_sample,end_sample,label,height_m,predicted_height_m\n");
    for (r, p) in kept.iter().zip(&pred) {
        writeln!(
            table,
            "{},{},{},{},{},{}",
            r.subject_id,
            r.segment.start,
            r.segment.end,
            vocab.name(r.segment.class_id).unwrap_or("?"),
            format_sig9(r.height_m.expect("filtered")),
            format_sig9(*p)
        )
        .expect("string write");
    }
    let pred_path = run.output("predictions.csv");
    write_atomic(&pred_path, table.as_bytes())?;
    let metrics = reg_metrics(&y, &pred)?;
    let (points, loa) = bland_altman_points(&y, &pred)?;
    let ba = run.output("bland_altman.csv");
    write_bland_altman(&ba, &points)?;
    let path = run.output("reg_metrics.json");
    write_json(&path, &json!({ "reg_metrics": metrics, "height_loa": loa }))
}

fn write_bland_altman(path: &Path, points: &[BlandAltmanPoint]) -> Result<()> {
    let mut out = String::from("mean,diff\n");
    for p in points {
        writeln!(out, "{},{}", format_sig9(p.mean), format_sig9(p.diff)).expect("string write");
    }
    write_atomic(path, out.as_bytes())
}

fn cmd_pipeline(run: &mut Run, a: &PipelineArgs, vocab: &ClassVocabulary) -> Result<()> {
    run.settings.apply_tcn(&a.tcn);
    run.settings.apply_regressor(a.regressor.as_deref())?;
    if let Some(w) = a.roi_width {
        run.settings.roi_width = w;
    }
    if let Some(t) = a.threshold {
        run.settings.iou_threshold = t;
    }
    run.settings.apply_seed();
    run.inputs.push(a.data.clone());
    let (sessions, heights) = load_data_dir(&a.data, vocab)?;
    require_labels(&sessions)?;
    let report = run_pipeline_eval(&sessions, &heights, vocab, &run.settings.pipeline())?;
    let ba = run.output("bland_altman.csv");
    write_bland_altman(&ba, &report.bland_altman_points)?;
    let path = run.output("report.json");
    write_json(&path, &report)?;
    let f1 = report.seg_metrics.overall.f1;
    match &report.reg_metrics {
        Some(m) => log::info!("F1 {f1:.3}, R² {:.3}, RMSE {:.3} m over {} jumps", m.r2, m.rmse, m.n),
        None => log::info!("F1 {f1:.3}; too few matched jumps for height metrics"),
    }
    Ok(())
}

fn cmd_importance(run: &mut Run, a: &ImportanceArgs) -> Result<()> {
    if let Some(r) = a.repeats {
        run.settings.importance_repeats = r;
    }
    run.inputs.extend([a.model.clone(), a.features.clone()]);
    let model: TrainedRegressor = load_model(&a.model)?;
    let rows = read_feature_table(&a.features, &ClassVocabulary::default())?;
    let (x, y, _) = labeled_matrix(&rows);
    let seed = run.settings.seed.unwrap_or(0);
    let ranked = permutation_importance(&model, x.view(), &y, run.settings.importance_repeats, seed)?;
    let names = feature_names();
    let mut out = String::from("rank,feature,importance\n");
    for (rank, (j, v)) in ranked.iter().enumerate() {
        writeln!(out, "{},{},{}", rank + 1, names[*j], format_sig9(*v)).expect("string write");
    }
    let path = run.output("importance.csv");
    write_atomic(&path, out.as_bytes())
}
