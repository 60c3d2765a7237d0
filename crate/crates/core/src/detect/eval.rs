use super::Detection;

/// Precision/recall/F1 of a detection stream against ground-truth transition
/// ordinals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionScores {
    pub true_positives: usize,
    pub detected: usize,
    pub truth: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// True when precision or recall was undefined (no detections or no
    /// truth) and reported as 0.
    pub undefined: bool,
}

/// Matches detections to truth ordinals. A detection at index d is a true
/// positive iff d lies in (t, t+window] for some not-yet-matched truth t;
/// matching is greedy in stream order and each truth absorbs at most one
/// detection.
pub fn evaluate_detections(detected: &[Detection], truth: &[usize], window: usize) -> DetectionScores {
    debug_assert!(truth.windows(2).all(|w| w[0] <= w[1]), "truth must be sorted");
    let mut matched = vec![false; truth.len()];
    let mut tp = 0usize;
    for det in detected {
        let hit = truth
            .iter()
            .enumerate()
            .find(|&(k, &t)| !matched[k] && det.index > t && det.index <= t + window);
        if let Some((k, _)) = hit {
            matched[k] = true;
            tp += 1;
        }
    }
    let mut undefined = false;
    let precision = if detected.is_empty() {
        undefined = true;
        0.0
    } else {
        tp as f64 / detected.len() as f64
    };
    let recall = if truth.is_empty() {
        undefined = true;
        0.0
    } else {
        tp as f64 / truth.len() as f64
    };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    DetectionScores {
        true_positives: tp,
        detected: detected.len(),
        truth: truth.len(),
        precision,
        recall,
        f1,
        undefined,
    }
}
