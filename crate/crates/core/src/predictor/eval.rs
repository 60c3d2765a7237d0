//! Predictor evaluation: multi-label delta F1 and page accuracy@10.

use crate::nn::{sigmoid, softmax_rows};
use crate::trace::Trace;
use crate::{Error, Result};

use super::amma::{AmmaModel, HeadKind, ModelInput};
use super::compress::decode_binary16;
use super::labels::{build_labels, DeltaBitmap};
use super::train::{collect_windows, PhaseModelSet, TrainedPair};
use super::vocab::{PageVocab, UNKNOWN_TOKEN};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictorScores {
    /// Micro-averaged multi-label F1 of top-D_s deltas vs label bitmaps.
    pub delta_f1_micro: f64,
    /// Mean of per-window F1 scores.
    pub delta_f1_macro: f64,
    /// Fraction of windows whose predicted page occurs within the next 10
    /// accesses.
    pub accuracy_at_10: f64,
    pub windows: usize,
}

/// Sigmoid delta scores ranked descending; ties broken by smaller |delta|,
/// then by positive sign.
pub fn delta_predict(model: &AmmaModel, input: &ModelInput) -> Vec<(i64, f64)> {
    let bits = match model.head_kind {
        HeadKind::DeltaSigmoid { bits } => bits,
        _ => panic!("delta_predict needs a delta-head model"),
    };
    let bpp = (bits / 2 + 1) as u64;
    let map = DeltaBitmap::new(bpp);
    let (logits, _) = model.forward(input);
    let scores = sigmoid(&logits);
    let mut ranked: Vec<(i64, f64)> = (0..bits)
        .map(|i| (map.delta_of(i), scores.get(0, i)))
        .collect();
    ranked.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("finite scores")
            .then(a.0.abs().cmp(&b.0.abs()))
            .then(b.0.cmp(&a.0)) // positive before negative
    });
    ranked
}

/// Page prediction: (token, confidence). The softmax head returns the
/// argmax token and its probability; the binary head thresholds 16 sigmoid
/// bits at 0.5 and decodes them (unknown when outside the vocabulary).
pub fn page_predict(model: &AmmaModel, input: &ModelInput, vocab_len: usize) -> (usize, f64) {
    let (logits, _) = model.forward(input);
    match model.head_kind {
        HeadKind::PageSoftmax { .. } => {
            let probs = softmax_rows(&logits);
            let row = probs.row(0);
            let (tok, &p) = row
                .iter()
                .enumerate()
                .max_by(|(ia, a), (ib, b)| a.partial_cmp(b).expect("finite").then(ib.cmp(ia)))
                .expect("nonempty head");
            (tok, p)
        }
        HeadKind::PageBinary16 => {
            let probs = sigmoid(&logits);
            let mut bits = [false; 16];
            let mut conf = 1.0;
            for (i, bit) in bits.iter_mut().enumerate() {
                let p = probs.get(0, i);
                *bit = p >= 0.5;
                conf *= if *bit { p } else { 1.0 - p };
            }
            let tok = decode_binary16(&bits) as usize;
            if tok < vocab_len {
                (tok, conf)
            } else {
                (UNKNOWN_TOKEN, conf)
            }
        }
        HeadKind::DeltaSigmoid { .. } => panic!("page_predict needs a page-head model"),
    }
}

struct F1Acc {
    tp: usize,
    fp: usize,
    fnn: usize,
    macro_sum: f64,
    windows: usize,
    at10_correct: usize,
    at10_total: usize,
}

fn score_window(
    acc: &mut F1Acc,
    delta: &AmmaModel,
    page: &AmmaModel,
    trace: &Trace,
    vocab: &PageVocab,
    t: usize,
    d_s: usize,
) -> Result<()> {
    let (bitmap, _) = build_labels(trace, t, delta.cfg.lookforward_f, vocab)?;
    let input = delta.input_from_trace(trace, t, vocab);
    let predicted: Vec<i64> = delta_predict(delta, &input)
        .into_iter()
        .take(d_s)
        .map(|(d, _)| d)
        .collect();
    let truth = bitmap.set_deltas();
    let tp = predicted.iter().filter(|d| truth.contains(d)).count();
    let fp = predicted.len() - tp;
    let fnn = truth.len() - tp;
    acc.tp += tp;
    acc.fp += fp;
    acc.fnn += fnn;
    acc.macro_sum += if 2 * tp + fp + fnn == 0 {
        1.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fnn) as f64
    };
    acc.windows += 1;

    if t + 10 < trace.len() {
        let pinput = page.input_from_trace(trace, t, vocab);
        let (tok, _) = page_predict(page, &pinput, vocab.len());
        let correct = vocab.page(tok).is_some_and(|pred_page| {
            trace.accesses[t + 1..=t + 10]
                .iter()
                .any(|a| trace.meta.page_of(a.block_addr) == pred_page)
        });
        acc.at10_total += 1;
        if correct {
            acc.at10_correct += 1;
        }
    }
    Ok(())
}

fn finish(acc: F1Acc) -> Result<PredictorScores> {
    if acc.windows == 0 {
        return Err(Error::Config("no evaluation windows".into()));
    }
    let denom = 2 * acc.tp + acc.fp + acc.fnn;
    Ok(PredictorScores {
        delta_f1_micro: if denom == 0 { 1.0 } else { 2.0 * acc.tp as f64 / denom as f64 },
        delta_f1_macro: acc.macro_sum / acc.windows as f64,
        accuracy_at_10: if acc.at10_total == 0 {
            0.0
        } else {
            acc.at10_correct as f64 / acc.at10_total as f64
        },
        windows: acc.windows,
    })
}

/// Evaluates a pooled pair over every full window of the trace.
pub fn evaluate_pooled_pair(
    pair: &TrainedPair,
    trace: &Trace,
    vocab: &PageVocab,
    d_s: usize,
) -> Result<PredictorScores> {
    let windows = collect_windows(trace, &pair.delta.cfg, None);
    let mut acc = F1Acc {
        tp: 0,
        fp: 0,
        fnn: 0,
        macro_sum: 0.0,
        windows: 0,
        at10_correct: 0,
        at10_total: 0,
    };
    for t in windows {
        score_window(&mut acc, &pair.delta, &pair.page, trace, vocab, t, d_s)?;
    }
    finish(acc)
}

/// Evaluates a phase-specific model set: each window is scored by the
/// models of its true phase label.
pub fn evaluate_phase_set(set: &PhaseModelSet, trace: &Trace, d_s: usize) -> Result<PredictorScores> {
    if !trace.has_phase_labels() {
        return Err(Error::Config("phase-set evaluation needs a labeled trace".into()));
    }
    let cfg = &set.pairs[0].delta.cfg;
    let windows = collect_windows(trace, cfg, None);
    let mut acc = F1Acc {
        tp: 0,
        fp: 0,
        fnn: 0,
        macro_sum: 0.0,
        windows: 0,
        at10_correct: 0,
        at10_total: 0,
    };
    for t in windows {
        let phase = trace.accesses[t].phase.expect("labeled trace");
        let pair = set
            .pair_for_phase(phase)
            .ok_or_else(|| Error::Config(format!("no models for phase {phase}")))?;
        score_window(&mut acc, &pair.delta, &pair.page, trace, &set.vocab, t, d_s)?;
    }
    finish(acc)
}
