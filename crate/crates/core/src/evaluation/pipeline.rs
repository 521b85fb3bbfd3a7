use std::collections::{BTreeMap, HashMap};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{
    bland_altman_points, limits_of_agreement, loso_split, precision_recall_f1, reg_metrics, AgreementStats,
    BlandAltmanPoint, LosoFold, RegMetrics, SegMetrics,
};
use crate::error::{Error, Result};
use crate::features::{extract_feature_vector, roi_window, CATALOG_VERSION, FEATURE_DIM};
use crate::io::{HeightRecord, ImuSession};
use crate::regression::{fit_regressor, RegressorConfig};
use crate::segmentation::{
    extract_segments, jump_counts, match_segments, min_duration_filter, select_roi, ClassVocabulary, MatchResult,
    Segment, DEFAULT_MIN_DURATION, DEFAULT_ROI_WIDTH,
};
use crate::tcn::{predict, train, MsTcnConfig, TCN_FORMAT_VERSION};

/// Settings of one leave-one-subject-out experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub tcn: MsTcnConfig,
    pub regressor: RegressorConfig,
    pub roi_width: usize,
    pub iou_threshold: f64,
    pub min_duration: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            tcn: MsTcnConfig::default(),
            regressor: RegressorConfig::default(),
            roi_width: DEFAULT_ROI_WIDTH,
            iou_threshold: 0.1,
            min_duration: DEFAULT_MIN_DURATION,
        }
    }
}

/// Produces sample-wise labels for a held-out session after fitting on the
/// training sessions of its fold.
pub trait Segmenter {
    fn segment(&self, fold: &LosoFold, train: &[ImuSession], test: &ImuSession) -> Result<Vec<usize>>;
}

/// Feature rows of a set of jumps; `y` holds their true heights.
#[derive(Debug, Clone)]
pub struct JumpFeatures {
    pub x: Array2<f64>,
    pub y: Vec<f64>,
}

/// Predicts heights of the test jumps from a model fitted on the training
/// jumps. Implementations must not read `test.y`, except oracles.
pub trait HeightEstimator {
    fn estimate(&self, fold: &LosoFold, train: &JumpFeatures, test: &JumpFeatures) -> Result<Vec<f64>>;
}

/// Trains an MS-TCN per fold.
pub struct TcnSegmenter {
    pub config: MsTcnConfig,
}

impl Segmenter for TcnSegmenter {
    fn segment(&self, fold: &LosoFold, train_sessions: &[ImuSession], test: &ImuSession) -> Result<Vec<usize>> {
        log::info!(
            "fold {}: training segmenter on {} sessions, testing on {}",
            fold.fold_index,
            train_sessions.len(),
            fold.test
        );
        let outcome = train(&self.config, train_sessions)?;
        if let Some(last) = outcome.loss_history.last() {
            log::info!("fold {}: final training loss {last:.4}", fold.fold_index);
        }
        Ok(predict(&outcome.weights, test)?.1)
    }
}

/// Fits a feature regressor per fold.
pub struct RegressorEstimator {
    pub config: RegressorConfig,
}

impl HeightEstimator for RegressorEstimator {
    fn estimate(&self, _fold: &LosoFold, train_set: &JumpFeatures, test: &JumpFeatures) -> Result<Vec<f64>> {
        if test.y.is_empty() {
            return Ok(Vec::new());
        }
        let model = fit_regressor(train_set.x.view(), &train_set.y, &self.config)?;
        model.predict_matrix(test.x.view())
    }
}

/// One true-positive jump of the pooled height evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpOutcome {
    pub subject_id: String,
    pub pred: Segment,
    pub truth: Segment,
    pub height_m: f64,
    pub predicted_height_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    pub fold_index: usize,
    pub test_subject: String,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub predicted_jumps: usize,
    pub true_jumps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub seg_metrics: SegMetrics,
    /// Per-subject agreement of height-eligible jump counts.
    pub count_loa: AgreementStats,
    /// Pooled over true-positive jumps; absent with fewer than two.
    pub reg_metrics: Option<RegMetrics>,
    pub bland_altman_points: Vec<BlandAltmanPoint>,
    pub height_loa: Option<AgreementStats>,
    pub folds: Vec<FoldSummary>,
    pub jumps: Vec<JumpOutcome>,
    pub config_echo: serde_json::Value,
}

/// Heights keyed by subject and ground-truth segment.
fn height_index(heights: &[HeightRecord]) -> HashMap<(&str, Segment), f64> {
    heights
        .iter()
        .map(|h| ((h.subject_id.as_str(), h.segment), h.height_m))
        .collect()
}

fn feature_rows(
    jumps: &[(&ImuSession, Segment)],
    vocab: &ClassVocabulary,
    roi_width: usize,
) -> Result<Array2<f64>> {
    let mut x = Array2::zeros((jumps.len(), FEATURE_DIM));
    for (i, (session, seg)) in jumps.iter().enumerate() {
        let roi = select_roi(seg, session.len(), roi_width);
        let window = roi_window(session.samples.view(), &roi);
        let fv = extract_feature_vector(window.view(), seg.class_id, vocab)?;
        x.row_mut(i).assign(&ndarray::ArrayView1::from(&fv.values));
    }
    Ok(x)
}

/// Features and heights of every height-eligible ground-truth jump in
/// `sessions`. Fails if a jump has no height record.
pub fn ground_truth_features(
    sessions: &[ImuSession],
    heights: &[HeightRecord],
    vocab: &ClassVocabulary,
    roi_width: usize,
) -> Result<JumpFeatures> {
    let index = height_index(heights);
    let mut jumps = Vec::new();
    let mut y = Vec::new();
    for s in sessions {
        let labels = s
            .labels
            .as_ref()
            .ok_or_else(|| Error::invalid(format!("session {} has no labels", s.subject_id)))?;
        for seg in extract_segments(labels) {
            if !vocab.is_eligible(seg.class_id) {
                continue;
            }
            let h = index.get(&(s.subject_id.as_str(), seg)).ok_or_else(|| {
                Error::invalid(format!(
                    "no height for {} jump [{}, {}) of subject {}",
                    vocab.name(seg.class_id).unwrap_or("?"),
                    seg.start,
                    seg.end,
                    s.subject_id
                ))
            })?;
            jumps.push((s, seg));
            y.push(*h);
        }
    }
    Ok(JumpFeatures {
        x: feature_rows(&jumps, vocab, roi_width)?,
        y,
    })
}

/// Predicted segments from sample-wise labels, with short runs removed.
pub fn labels_to_segments(labels: &[usize], min_duration: usize) -> Vec<Segment> {
    min_duration_filter(&extract_segments(labels), min_duration)
}

/// Full experiment with an MS-TCN segmenter and a feature regressor.
pub fn run_pipeline_eval(
    sessions: &[ImuSession],
    heights: &[HeightRecord],
    vocab: &ClassVocabulary,
    config: &PipelineConfig,
) -> Result<EvalReport> {
    let segmenter = TcnSegmenter {
        config: config.tcn.clone(),
    };
    let estimator = RegressorEstimator {
        config: config.regressor.clone(),
    };
    run_pipeline_eval_with(sessions, heights, vocab, config, &segmenter, &estimator)
}

/// Leave-one-subject-out experiment with pluggable models. Segment metrics
/// cover every non-background class; heights are evaluated on true-positive
/// jumps pooled across folds.
pub fn run_pipeline_eval_with(
    sessions: &[ImuSession],
    heights: &[HeightRecord],
    vocab: &ClassVocabulary,
    config: &PipelineConfig,
    segmenter: &dyn Segmenter,
    estimator: &dyn HeightEstimator,
) -> Result<EvalReport> {
    if !(config.iou_threshold > 0.0 && config.iou_threshold <= 1.0) {
        return Err(Error::invalid(format!(
            "iou threshold must lie in (0, 1], got {}",
            config.iou_threshold
        )));
    }
    if config.roi_width < 4 {
        return Err(Error::invalid("roi width must be at least 4 samples"));
    }
    let ids: Vec<String> = sessions.iter().map(|s| s.subject_id.clone()).collect();
    let folds = loso_split(&ids)?;
    let by_id: BTreeMap<&str, &ImuSession> = sessions.iter().map(|s| (s.subject_id.as_str(), s)).collect();
    let index = height_index(heights);

    let mut matches = Vec::new();
    let mut summaries = Vec::new();
    let mut pred_counts = Vec::new();
    let mut true_counts = Vec::new();
    let mut jumps = Vec::new();

    for fold in &folds {
        let test = by_id[fold.test.as_str()];
        let truth_labels = test
            .labels
            .as_ref()
            .ok_or_else(|| Error::invalid(format!("session {} has no labels", test.subject_id)))?;
        let train_sessions: Vec<ImuSession> = fold.train.iter().map(|id| by_id[id.as_str()].clone()).collect();

        let labels = segmenter.segment(fold, &train_sessions, test)?;
        if labels.len() != test.len() {
            return Err(Error::dim(format!(
                "segmenter returned {} labels for a {}-sample session",
                labels.len(),
                test.len()
            )));
        }
        let pred = labels_to_segments(&labels, config.min_duration);
        let truth = extract_segments(truth_labels);
        let m = match_segments(&pred, &truth, config.iou_threshold);

        pred_counts.push(jump_counts(&pred, vocab).1);
        true_counts.push(jump_counts(&truth, vocab).1);

        // heights of true-positive eligible jumps
        let mut tp_jumps = Vec::new();
        let mut tp_heights = Vec::new();
        for pair in m.pairs.iter().filter(|p| vocab.is_eligible(p.truth.class_id)) {
            let h = index.get(&(test.subject_id.as_str(), pair.truth)).ok_or_else(|| {
                Error::invalid(format!(
                    "no height for jump [{}, {}) of subject {}",
                    pair.truth.start, pair.truth.end, test.subject_id
                ))
            })?;
            tp_jumps.push((test, pair.pred));
            tp_heights.push((*pair, *h));
        }
        let train_set = ground_truth_features(&train_sessions, heights, vocab, config.roi_width)?;
        let test_set = JumpFeatures {
            x: feature_rows(&tp_jumps, vocab, config.roi_width)?,
            y: tp_heights.iter().map(|(_, h)| *h).collect(),
        };
        let estimates = estimator.estimate(fold, &train_set, &test_set)?;
        if estimates.len() != test_set.y.len() {
            return Err(Error::dim("height estimator returned the wrong number of estimates"));
        }
        for ((pair, h), est) in tp_heights.iter().zip(estimates) {
            jumps.push(JumpOutcome {
                subject_id: test.subject_id.clone(),
                pred: pair.pred,
                truth: pair.truth,
                height_m: *h,
                predicted_height_m: est,
            });
        }
        log::info!(
            "fold {} ({}): tp {} fp {} fn {}",
            fold.fold_index,
            fold.test,
            m.overall.tp,
            m.overall.fp,
            m.overall.fn_
        );
        summaries.push(FoldSummary {
            fold_index: fold.fold_index,
            test_subject: fold.test.clone(),
            tp: m.overall.tp,
            fp: m.overall.fp,
            fn_: m.overall.fn_,
            predicted_jumps: pred.len(),
            true_jumps: truth.len(),
        });
        matches.push(m);
    }

    let merged = MatchResult::merge(&matches, config.iou_threshold);
    let truth_h: Vec<f64> = jumps.iter().map(|j| j.height_m).collect();
    let pred_h: Vec<f64> = jumps.iter().map(|j| j.predicted_height_m).collect();
    let (reg, points, height_loa) = if jumps.len() >= 2 {
        let (points, stats) = bland_altman_points(&truth_h, &pred_h)?;
        (Some(reg_metrics(&truth_h, &pred_h)?), points, Some(stats))
    } else {
        (None, Vec::new(), None)
    };

    Ok(EvalReport {
        seg_metrics: precision_recall_f1(&merged),
        count_loa: limits_of_agreement(&pred_counts, &true_counts)?,
        reg_metrics: reg,
        bland_altman_points: points,
        height_loa,
        folds: summaries,
        jumps,
        config_echo: json!({
            "iou_threshold": config.iou_threshold,
            "roi_width": config.roi_width,
            "min_duration": config.min_duration,
            "tcn": config.tcn,
            "tcn_seed": config.tcn.seed,
            "regressor": config.regressor,
            "catalog_version": CATALOG_VERSION,
            "tcn_format_version": TCN_FORMAT_VERSION,
            "classes": vocab.names(),
            "subjects": folds.iter().map(|f| f.test.clone()).collect::<Vec<_>>(),
        }),
    })
}

/// Returns the ground-truth labels of the test session.
pub struct OracleSegmenter;

impl Segmenter for OracleSegmenter {
    fn segment(&self, _fold: &LosoFold, _train: &[ImuSession], test: &ImuSession) -> Result<Vec<usize>> {
        test.labels
            .clone()
            .ok_or_else(|| Error::invalid(format!("session {} has no labels", test.subject_id)))
    }
}

/// Returns the true heights of the test jumps.
pub struct OracleEstimator;

impl HeightEstimator for OracleEstimator {
    fn estimate(&self, _fold: &LosoFold, _train: &JumpFeatures, test: &JumpFeatures) -> Result<Vec<f64>> {
        Ok(test.y.clone())
    }
}
