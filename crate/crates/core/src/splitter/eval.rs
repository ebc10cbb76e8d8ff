//! Boundary detection evaluation.
//!
//! Precision/recall/F1 against ground truth with a frame tolerance. The
//! matcher walks both sorted lists and pairs each ground-truth boundary
//! with the earliest unmatched prediction inside the tolerance window; for
//! interval windows on a line this greedy order achieves maximum-cardinality
//! matching, which the test suite cross-checks against exhaustive search.

use std::io::BufRead;

use serde::{Deserialize, Serialize};

use super::{range_to_midpoint, SplitterError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitEvalResult {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub false_negatives: u64,
}

/// Scores predicted boundaries against ground truth at `tolerance` frames.
///
/// Conventions for degenerate inputs: both lists empty scores 1.0 across
/// the board; an empty prediction list against nonempty ground truth (or
/// vice versa) scores 0.
pub fn eval_split(pred: &[u64], gt: &[u64], tolerance: u64) -> SplitEvalResult {
    let mut pred = pred.to_vec();
    let mut gt = gt.to_vec();
    pred.sort_unstable();
    gt.sort_unstable();

    let mut tp = 0u64;
    let mut pi = 0usize;
    for &g in &gt {
        while pi < pred.len() && pred[pi] + tolerance < g {
            pi += 1; // too far left to match this or any later gt
        }
        if pi < pred.len() && pred[pi] <= g + tolerance {
            tp += 1;
            pi += 1;
        }
    }

    let precision = match (pred.len(), gt.len()) {
        (0, 0) => 1.0,
        (0, _) => 0.0,
        (p, _) => tp as f64 / p as f64,
    };
    let recall = match (gt.len(), pred.len()) {
        (0, 0) => 1.0,
        (0, _) => 0.0,
        (g, _) => tp as f64 / g as f64,
    };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    SplitEvalResult {
        precision,
        recall,
        f1,
        tp,
        fp: pred.len() as u64 - tp,
        false_negatives: gt.len() as u64 - tp,
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum AnnotationLine {
    Frame { frame: u64 },
    Range { start: u64, end: u64 },
}

/// Parses a line-delimited JSON boundary annotation file. Each line is
/// either `{"frame": n}` or `{"start": a, "end": b}`; ranges collapse to
/// their midpoint. Returns sorted indices.
pub fn parse_boundary_lines<R: BufRead>(reader: R) -> Result<Vec<u64>, SplitterError> {
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: AnnotationLine =
            serde_json::from_str(&line).map_err(|e| SplitterError::BadAnnotation {
                line: lineno + 1,
                detail: e.to_string(),
            })?;
        out.push(match parsed {
            AnnotationLine::Frame { frame } => frame,
            AnnotationLine::Range { start, end } => {
                if start > end {
                    return Err(SplitterError::BadAnnotation {
                        line: lineno + 1,
                        detail: format!("start {start} > end {end}"),
                    });
                }
                range_to_midpoint(start, end)
            }
        });
    }
    out.sort_unstable();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction_scores_one() {
        let r = eval_split(&[10, 50, 90], &[10, 50, 90], 0);
        assert_eq!((r.precision, r.recall, r.f1), (1.0, 1.0, 1.0));
        assert_eq!((r.tp, r.fp, r.false_negatives), (3, 0, 0));
    }

    #[test]
    fn half_matched_example() {
        let r = eval_split(&[10, 50], &[11, 80], 2);
        assert_eq!(r.tp, 1);
        assert_eq!((r.precision, r.recall, r.f1), (0.5, 0.5, 0.5));
    }

    #[test]
    fn empty_prediction_convention() {
        let r = eval_split(&[], &[5], 2);
        assert_eq!((r.precision, r.recall, r.f1), (0.0, 0.0, 0.0));
        assert_eq!(r.false_negatives, 1);

        let r = eval_split(&[], &[], 2);
        assert_eq!((r.precision, r.recall, r.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn matching_is_one_to_one() {
        // Two predictions near one gt: only one can match.
        let r = eval_split(&[9, 11], &[10], 2);
        assert_eq!(r.tp, 1);
        assert_eq!(r.fp, 1);
    }

    #[test]
    fn earliest_available_beats_nearest_on_crossing_windows() {
        // gt 10 is nearest to pred 11, but using pred 8 for it frees pred 11
        // for gt 12; the matcher must find both.
        let r = eval_split(&[8, 11], &[10, 12], 2);
        assert_eq!(r.tp, 2);
    }

    #[test]
    fn parses_frame_and_range_lines() {
        let text = "{\"frame\": 42}\n{\"start\": 100, \"end\": 110}\n{\"frame\": 7}\n";
        let parsed = parse_boundary_lines(text.as_bytes()).unwrap();
        assert_eq!(parsed, vec![7, 42, 105]);
    }

    #[test]
    fn garbage_annotation_is_an_error() {
        let text = "{\"frame\": 42}\nnot json\n";
        assert!(matches!(
            parse_boundary_lines(text.as_bytes()),
            Err(SplitterError::BadAnnotation { line: 2, .. })
        ));
    }
}
