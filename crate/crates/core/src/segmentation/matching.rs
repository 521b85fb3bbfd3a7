use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Segment;

/// Intersection over union of two half-open intervals. Classes are ignored.
pub fn iou(a: &Segment, b: &Segment) -> f64 {
    let inter = a.end.min(b.end).saturating_sub(a.start.max(b.start));
    if inter == 0 {
        return 0.0;
    }
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub pred: Segment,
    pub truth: Segment,
    pub iou: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub pairs: Vec<MatchedPair>,
    pub unmatched_pred: Vec<Segment>,
    pub unmatched_truth: Vec<Segment>,
    pub overall: ClassCounts,
    /// Keyed by class id; contains every class seen on either side.
    pub per_class: BTreeMap<usize, ClassCounts>,
    pub threshold: f64,
}

impl MatchResult {
    /// Combines per-session results into one.
    pub fn merge(results: &[MatchResult], threshold: f64) -> MatchResult {
        let mut out = MatchResult {
            pairs: Vec::new(),
            unmatched_pred: Vec::new(),
            unmatched_truth: Vec::new(),
            overall: ClassCounts::default(),
            per_class: BTreeMap::new(),
            threshold,
        };
        for r in results {
            out.pairs.extend_from_slice(&r.pairs);
            out.unmatched_pred.extend_from_slice(&r.unmatched_pred);
            out.unmatched_truth.extend_from_slice(&r.unmatched_truth);
            out.overall.tp += r.overall.tp;
            out.overall.fp += r.overall.fp;
            out.overall.fn_ += r.overall.fn_;
            for (&c, k) in &r.per_class {
                let e = out.per_class.entry(c).or_default();
                e.tp += k.tp;
                e.fp += k.fp;
                e.fn_ += k.fn_;
            }
        }
        out
    }
}

/// Class-aware greedy one-to-one matching.
///
/// Candidates are same-class pairs with `iou >= threshold`. They are taken
/// in descending IoU order (ties: earlier truth start, then earlier pred
/// start), skipping pairs whose prediction or truth is already used.
pub fn match_segments(pred: &[Segment], truth: &[Segment], threshold: f64) -> MatchResult {
    let mut candidates = Vec::new();
    for (pi, p) in pred.iter().enumerate() {
        for (ti, t) in truth.iter().enumerate() {
            if p.class_id != t.class_id {
                continue;
            }
            let v = iou(p, t);
            if v > 0.0 && v >= threshold {
                candidates.push((v, pi, ti));
            }
        }
    }
    candidates.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(Ordering::Equal)
            .then(truth[a.2].start.cmp(&truth[b.2].start))
            .then(pred[a.1].start.cmp(&pred[b.1].start))
    });

    let mut pred_used = vec![false; pred.len()];
    let mut truth_used = vec![false; truth.len()];
    let mut pairs = Vec::new();
    for (v, pi, ti) in candidates {
        if pred_used[pi] || truth_used[ti] {
            continue;
        }
        pred_used[pi] = true;
        truth_used[ti] = true;
        pairs.push(MatchedPair {
            pred: pred[pi],
            truth: truth[ti],
            iou: v,
        });
    }
    pairs.sort_by_key(|p| (p.truth.start, p.pred.start));

    let unmatched_pred: Vec<Segment> = pred
        .iter()
        .zip(&pred_used)
        .filter(|(_, &u)| !u)
        .map(|(s, _)| *s)
        .collect();
    let unmatched_truth: Vec<Segment> = truth
        .iter()
        .zip(&truth_used)
        .filter(|(_, &u)| !u)
        .map(|(s, _)| *s)
        .collect();

    let mut per_class: BTreeMap<usize, ClassCounts> = BTreeMap::new();
    for p in &pairs {
        per_class.entry(p.truth.class_id).or_default().tp += 1;
    }
    for s in &unmatched_pred {
        per_class.entry(s.class_id).or_default().fp += 1;
    }
    for s in &unmatched_truth {
        per_class.entry(s.class_id).or_default().fn_ += 1;
    }
    let overall = ClassCounts {
        tp: pairs.len(),
        fp: unmatched_pred.len(),
        fn_: unmatched_truth.len(),
    };
    MatchResult {
        pairs,
        unmatched_pred,
        unmatched_truth,
        overall,
        per_class,
        threshold,
    }
}
