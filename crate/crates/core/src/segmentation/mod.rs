//! From sample-wise labels to jump segments, analysis windows and
//! segment-level matching.

mod matching;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use matching::{iou, match_segments, ClassCounts, MatchResult, MatchedPair};

/// Index of the background (non-jump) class in every vocabulary.
pub const BACKGROUND: usize = 0;

/// Default ROI width: 3 s at 100 Hz.
pub const DEFAULT_ROI_WIDTH: usize = 300;

/// Default minimum predicted segment length: 0.1 s at 100 Hz.
pub const DEFAULT_MIN_DURATION: usize = 10;

/// Ordered class names; index 0 is background. Height-eligible classes are
/// the ones whose jumps carry a height target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassVocabulary {
    names: Vec<String>,
    eligible: Vec<bool>,
}

impl Default for ClassVocabulary {
    fn default() -> Self {
        let names = ["NULL", "CMJ", "Smash", "Block", "OS", "Squat", "Dive", "Hop"];
        let eligible = [false, true, true, true, true, false, false, false];
        ClassVocabulary {
            names: names.iter().map(|s| s.to_string()).collect(),
            eligible: eligible.to_vec(),
        }
    }
}

impl ClassVocabulary {
    pub fn new(names: Vec<String>, eligible: Vec<bool>) -> Result<Self> {
        if names.is_empty() || names.len() != eligible.len() {
            return Err(Error::invalid(
                "vocabulary needs one eligibility flag per class and at least a background class",
            ));
        }
        if eligible[BACKGROUND] {
            return Err(Error::invalid("background class cannot be height-eligible"));
        }
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(Error::invalid(format!("duplicate class name {n}")));
            }
        }
        Ok(ClassVocabulary { names, eligible })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Looks up a class by name, listing the vocabulary on failure.
    pub fn require(&self, name: &str) -> Result<usize> {
        self.index_of(name).ok_or_else(|| {
            Error::invalid(format!(
                "unknown class {name:?}; expected one of {}",
                self.names.join(", ")
            ))
        })
    }

    pub fn is_eligible(&self, id: usize) -> bool {
        self.eligible.get(id).copied().unwrap_or(false)
    }

    /// Height-eligible class ids in vocabulary order.
    pub fn eligible_classes(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.eligible[i]).collect()
    }

    /// Position of `id` among the height-eligible classes.
    pub fn eligible_ordinal(&self, id: usize) -> Option<usize> {
        if !self.is_eligible(id) {
            return None;
        }
        Some(self.eligible[..id].iter().filter(|&&e| e).count())
    }
}

/// Half-open run `[start, end)` of one non-background class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    pub class_id: usize,
}

impl Segment {
    pub fn new(start: usize, end: usize, class_id: usize) -> Self {
        Segment {
            start,
            end,
            class_id,
        }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

/// Maximal runs of identical non-background labels, in temporal order.
pub fn extract_segments(labels: &[usize]) -> Vec<Segment> {
    let mut out = Vec::new();
    let mut t = 0;
    while t < labels.len() {
        let class = labels[t];
        let start = t;
        while t < labels.len() && labels[t] == class {
            t += 1;
        }
        if class != BACKGROUND {
            out.push(Segment::new(start, t, class));
        }
    }
    out
}

/// Paints segments onto a background sequence of length `len`.
pub fn segments_to_labels(segments: &[Segment], len: usize) -> Result<Vec<usize>> {
    let mut labels = vec![BACKGROUND; len];
    let mut painted = vec![false; len];
    for seg in segments {
        if seg.start >= seg.end || seg.end > len {
            return Err(Error::invalid(format!(
                "segment [{}, {}) invalid for length {len}",
                seg.start, seg.end
            )));
        }
        if seg.class_id == BACKGROUND {
            return Err(Error::invalid("segment cannot carry the background class"));
        }
        for t in seg.start..seg.end {
            if painted[t] {
                return Err(Error::invalid(format!(
                    "segments overlap at sample {t}"
                )));
            }
            painted[t] = true;
            labels[t] = seg.class_id;
        }
    }
    Ok(labels)
}

/// Drops segments shorter than `min_len` samples.
pub fn min_duration_filter(segments: &[Segment], min_len: usize) -> Vec<Segment> {
    segments
        .iter()
        .filter(|s| s.len() >= min_len)
        .copied()
        .collect()
}

/// Fixed-width analysis window around a segment's midpoint. The in-range
/// part is `[window_start, window_end)`; the rest is zero padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Roi {
    pub segment: Segment,
    pub window_start: usize,
    pub window_end: usize,
    pub left_pad: usize,
    pub right_pad: usize,
}

impl Roi {
    pub fn width(&self) -> usize {
        self.left_pad + (self.window_end - self.window_start) + self.right_pad
    }
}

/// Window `[mid - W/2, mid + W - W/2)` with `mid = ⌊(start+end)/2⌋`, clipped
/// to `[0, len)`.
pub fn select_roi(segment: &Segment, len: usize, width: usize) -> Roi {
    let mid = ((segment.start + segment.end) / 2) as isize;
    let lo = mid - (width / 2) as isize;
    let hi = lo + width as isize;
    let window_start = lo.clamp(0, len as isize) as usize;
    let window_end = hi.clamp(0, len as isize) as usize;
    let window_end = window_end.max(window_start);
    let left_pad = (window_start as isize - lo) as usize;
    let right_pad = width - left_pad - (window_end - window_start);
    Roi {
        segment: *segment,
        window_start,
        window_end,
        left_pad,
        right_pad,
    }
}

/// Count of height-eligible segments per eligible class (vocabulary order)
/// and their total.
pub fn jump_counts(segments: &[Segment], vocab: &ClassVocabulary) -> (Vec<usize>, usize) {
    let eligible = vocab.eligible_classes();
    let mut counts = vec![0; eligible.len()];
    for s in segments {
        if let Some(k) = vocab.eligible_ordinal(s.class_id) {
            counts[k] += 1;
        }
    }
    let total = counts.iter().sum();
    (counts, total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn vocabulary_defaults() {
        let v = ClassVocabulary::default();
        assert_eq!(v.len(), 8);
        assert_eq!(v.eligible_classes(), vec![1, 2, 3, 4]);
        assert_eq!(v.eligible_ordinal(3), Some(2));
        assert_eq!(v.eligible_ordinal(5), None);
        assert_eq!(v.index_of("OS"), Some(4));
        let err = v.require("Spike").unwrap_err().to_string();
        assert!(err.contains("CMJ") && err.contains("Hop"));
        assert!(ClassVocabulary::new(vec!["a".into(), "a".into()], vec![false, true]).is_err());
    }

    #[test]
    fn extract_examples() {
        assert_eq!(
            extract_segments(&[0, 0, 1, 1, 1, 0, 2, 2]),
            vec![Segment::new(2, 5, 1), Segment::new(6, 8, 2)]
        );
        assert!(extract_segments(&[0, 0, 0]).is_empty());
        assert_eq!(
            extract_segments(&[3, 3, 2]),
            vec![Segment::new(0, 2, 3), Segment::new(2, 3, 2)]
        );
    }

    #[test]
    fn paint_examples() {
        assert_eq!(segments_to_labels(&[], 4).unwrap(), vec![0, 0, 0, 0]);
        assert_eq!(
            segments_to_labels(&[Segment::new(1, 3, 2)], 4).unwrap(),
            vec![0, 2, 2, 0]
        );
        let overlap = [Segment::new(0, 3, 1), Segment::new(2, 4, 2)];
        assert!(segments_to_labels(&overlap, 5).is_err());
        assert!(segments_to_labels(&[Segment::new(2, 6, 1)], 5).is_err());
    }

    #[test]
    fn min_duration_examples() {
        let segs = vec![Segment::new(0, 3, 1), Segment::new(10, 40, 2)];
        assert_eq!(min_duration_filter(&segs, 1), segs);
        assert_eq!(min_duration_filter(&segs, 10), vec![Segment::new(10, 40, 2)]);
    }

    #[test]
    fn roi_examples() {
        let roi = select_roi(&Segment::new(100, 160, 1), 10_000, 300);
        // mid = 130, window [-20, 280)
        assert_eq!((roi.window_start, roi.window_end), (0, 280));
        assert_eq!((roi.left_pad, roi.right_pad), (20, 0));

        let roi = select_roi(&Segment::new(5000, 5100, 1), 10_000, 300);
        assert_eq!((roi.window_start, roi.window_end), (4900, 5200));
        assert_eq!((roi.left_pad, roi.right_pad), (0, 0));

        let roi = select_roi(&Segment::new(998, 1000, 1), 1000, 300);
        // mid = 999 = N - 1
        assert_eq!(roi.window_end, 1000);
        assert_eq!(roi.right_pad, 149);
        assert_eq!(roi.width(), 300);
    }

    #[test]
    fn jump_count_examples() {
        let v = ClassVocabulary::default();
        assert_eq!(jump_counts(&[], &v), (vec![0, 0, 0, 0], 0));
        let one_each: Vec<_> = (1..=7).map(|c| Segment::new(c * 10, c * 10 + 5, c)).collect();
        assert_eq!(jump_counts(&one_each, &v), (vec![1, 1, 1, 1], 4));
    }

    proptest! {
        #[test]
        fn extract_then_paint_is_identity(labels in prop::collection::vec(0usize..4, 0..200)) {
            let segs = extract_segments(&labels);
            prop_assert_eq!(segments_to_labels(&segs, labels.len()).unwrap(), labels.clone());
            // sorted, non-overlapping, non-background, covering exactly the non-background samples
            for w in segs.windows(2) {
                prop_assert!(w[0].end <= w[1].start);
            }
            let covered: usize = segs.iter().map(Segment::len).sum();
            prop_assert_eq!(covered, labels.iter().filter(|&&l| l != BACKGROUND).count());
            prop_assert!(segs.iter().all(|s| s.class_id != BACKGROUND && !s.is_empty()));
        }

        #[test]
        fn min_duration_matches_brute_count(
            lens in prop::collection::vec(1usize..30, 0..20),
            min_len in 0usize..25,
        ) {
            let mut t = 0;
            let segs: Vec<_> = lens.iter().map(|&l| { let s = Segment::new(t, t + l, 1); t += l + 1; s }).collect();
            let kept = min_duration_filter(&segs, min_len);
            let brute = segs.iter().filter(|s| s.end - s.start >= min_len).count();
            prop_assert_eq!(kept.len(), brute);
        }

        #[test]
        fn roi_width_is_constant(start in 0usize..500, len in 1usize..100, n_extra in 0usize..600, width in 2usize..400) {
            let n = start + len + n_extra;
            let roi = select_roi(&Segment::new(start, start + len, 1), n, width);
            prop_assert_eq!(roi.width(), width);
            prop_assert!(roi.window_end <= n);
        }
    }
}
