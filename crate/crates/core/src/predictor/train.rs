//! Phase-specific (and pooled) training of the delta and page models.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::nn::{
    adam_step, bce_loss, cce_loss, sigmoid, sigmoid_bce_backward, softmax_cce_backward,
    softmax_rows, AdamConfig, HasParams,
};
use crate::trace::Trace;
use crate::{Error, Real, Result, Tensor};

use super::amma::{AmmaConfig, AmmaModel, HeadKind};
use super::compress::encode_binary16;
use super::labels::build_labels;
use super::vocab::PageVocab;

#[derive(Debug, Clone)]
pub struct TrainHyper {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Per-model cap on training windows (subsampled deterministically).
    pub max_windows: usize,
    pub seed: u64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self {
            epochs: 3,
            batch_size: 16,
            lr: 1e-3,
            max_windows: 2000,
            seed: 1,
        }
    }
}

/// A trained delta/page model pair with its loss curves.
pub struct TrainedPair {
    /// Phase the pair was trained on; None for a pooled pair.
    pub phase: Option<u8>,
    pub delta: AmmaModel,
    pub page: AmmaModel,
    pub delta_losses: Vec<f64>,
    pub page_losses: Vec<f64>,
}

/// One model pair per phase plus the shared page vocabulary.
pub struct PhaseModelSet {
    pub pairs: Vec<TrainedPair>,
    pub vocab: PageVocab,
}

impl PhaseModelSet {
    pub fn pair_for_phase(&self, phase: u8) -> Option<&TrainedPair> {
        self.pairs.iter().find(|p| p.phase == Some(phase))
    }
}

/// Window end-indices usable for training: the whole T-window must carry
/// the requested phase label (when given) and F future accesses must exist.
pub fn collect_windows(trace: &Trace, cfg: &AmmaConfig, phase: Option<u8>) -> Vec<usize> {
    let t_len = cfg.history_t;
    let f = cfg.lookforward_f;
    if trace.len() < t_len + f + 1 {
        return Vec::new();
    }
    (t_len - 1..trace.len() - f)
        .filter(|&t| match phase {
            None => true,
            Some(p) => trace.accesses[t + 1 - t_len..=t]
                .iter()
                .all(|a| a.phase == Some(p)),
        })
        .collect()
}

/// Domain-separated sub-seed derivation (FNV-1a over seed, tag, index) so
/// one global seed fans out into independently reproducible subsystems.
pub fn derive_seed(seed: u64, tag: &str, index: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut mix = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    mix(&seed.to_le_bytes());
    mix(tag.as_bytes());
    mix(&index.to_le_bytes());
    h
}

fn subsample(windows: &[usize], max: usize, seed: u64) -> Vec<usize> {
    if windows.len() <= max {
        return windows.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = windows.to_vec();
    w.shuffle(&mut rng);
    w.truncate(max);
    w.sort_unstable();
    w
}

/// Hard target tensor for a window under the model's head.
pub(crate) fn hard_target(
    model: &AmmaModel,
    trace: &Trace,
    t: usize,
    vocab: &PageVocab,
) -> Result<(Tensor, usize)> {
    let (bitmap, token) = build_labels(trace, t, model.cfg.lookforward_f, vocab)?;
    let target = match model.head_kind {
        HeadKind::DeltaSigmoid { bits } => {
            debug_assert_eq!(bits, bitmap.len());
            Tensor::from_vec(
                1,
                bits,
                bitmap.bits().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
            )
        }
        HeadKind::PageSoftmax { .. } => Tensor::zeros(1, 1), // token used directly
        HeadKind::PageBinary16 => {
            let bits = encode_binary16(token as u16);
            Tensor::from_vec(1, 16, bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect())
        }
    };
    Ok((target, token))
}

/// Minibatch Adam over the given windows; returns per-epoch mean losses.
pub(crate) fn train_model(
    model: &mut AmmaModel,
    trace: &Trace,
    vocab: &PageVocab,
    windows: &[usize],
    hyper: &TrainHyper,
    seed: u64,
) -> Result<Vec<f64>> {
    if windows.is_empty() {
        return Err(Error::Train("no training windows".into()));
    }
    let mut order = subsample(windows, hyper.max_windows, derive_seed(seed, "subsample", 0));
    // Inputs and targets are fixed per window; build them once.
    let samples: Vec<(crate::predictor::ModelInput, Tensor, usize)> = order
        .iter()
        .map(|&t| {
            let input = model.input_from_trace(trace, t, vocab);
            let (target, token) = hard_target(model, trace, t, vocab)?;
            Ok((input, target, token))
        })
        .collect::<Result<_>>()?;
    let index_of: std::collections::HashMap<usize, usize> =
        order.iter().enumerate().map(|(i, &t)| (t, i)).collect();
    let adam = AdamConfig {
        lr: hyper.lr,
        ..AdamConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "epochs", 0));
    let mut losses = Vec::with_capacity(hyper.epochs);
    let mut step = 0u64;
    for _epoch in 0..hyper.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(hyper.batch_size.max(1)) {
            model.zero_grads();
            let scale = 1.0 / batch.len() as Real;
            for &t in batch {
                let (input, target, token) = &samples[index_of[&t]];
                let (logits, cache) = model.forward(input);
                let mut dlogits = match model.head_kind {
                    HeadKind::DeltaSigmoid { .. } | HeadKind::PageBinary16 => {
                        let p = sigmoid(&logits);
                        let (loss, _) = bce_loss(&p, target);
                        epoch_loss += loss;
                        sigmoid_bce_backward(&p, target)
                    }
                    HeadKind::PageSoftmax { .. } => {
                        let probs = softmax_rows(&logits);
                        let (loss, _) = cce_loss(&probs, &[*token]);
                        epoch_loss += loss;
                        softmax_cce_backward(&probs, &[*token])
                    }
                };
                dlogits.scale(scale);
                model.backward(&cache, &dlogits);
            }
            step += 1;
            adam_step(model, &adam, step)?;
        }
        losses.push(epoch_loss / order.len() as f64);
    }
    Ok(losses)
}

/// Trains a delta/page pair on the given windows.
pub fn train_pair(
    trace: &Trace,
    vocab: &PageVocab,
    cfg: &AmmaConfig,
    hyper: &TrainHyper,
    windows: &[usize],
    phase: Option<u8>,
) -> Result<TrainedPair> {
    cfg.validate(trace.meta.block_bits)?;
    let tag = phase.map_or(u64::MAX, u64::from);
    let bits = 2 * (trace.meta.blocks_per_page() as usize - 1);
    let mut delta = AmmaModel::new(
        cfg,
        HeadKind::DeltaSigmoid { bits },
        vocab.len(),
        derive_seed(hyper.seed, "delta-init", tag),
    )?;
    let mut page = AmmaModel::new(
        cfg,
        HeadKind::PageSoftmax { vocab: vocab.len() },
        vocab.len(),
        derive_seed(hyper.seed, "page-init", tag),
    )?;
    let delta_losses = train_model(
        &mut delta,
        trace,
        vocab,
        windows,
        hyper,
        derive_seed(hyper.seed, "delta-train", tag),
    )?;
    let page_losses = train_model(
        &mut page,
        trace,
        vocab,
        windows,
        hyper,
        derive_seed(hyper.seed, "page-train", tag),
    )?;
    Ok(TrainedPair {
        phase,
        delta,
        page,
        delta_losses,
        page_losses,
    })
}

/// Trains one model pair per phase of a labeled trace.
pub fn train_phase_models(
    trace: &Trace,
    cfg: &AmmaConfig,
    hyper: &TrainHyper,
) -> Result<PhaseModelSet> {
    if !trace.has_phase_labels() {
        return Err(Error::Train("phase-specific training needs a labeled trace".into()));
    }
    let vocab = PageVocab::from_trace(trace);
    let mut pairs = Vec::with_capacity(trace.meta.num_phases);
    for phase in 0..trace.meta.num_phases {
        let windows = collect_windows(trace, cfg, Some(phase as u8));
        if windows.is_empty() {
            return Err(Error::InsufficientPhaseData {
                phase,
                msg: format!(
                    "no full windows (need {} in-phase accesses with {} future)",
                    cfg.history_t, cfg.lookforward_f
                ),
            });
        }
        pairs.push(train_pair(trace, &vocab, cfg, hyper, &windows, Some(phase as u8))?);
    }
    Ok(PhaseModelSet { pairs, vocab })
}

/// Trains a single pooled pair over all phases of the trace.
pub fn train_pooled_pair(trace: &Trace, cfg: &AmmaConfig, hyper: &TrainHyper) -> Result<TrainedPair> {
    let vocab = PageVocab::from_trace(trace);
    let windows = collect_windows(trace, cfg, None);
    if windows.is_empty() {
        return Err(Error::Train("trace too short for any training window".into()));
    }
    train_pair(trace, &vocab, cfg, hyper, &windows, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{MemoryAccess, TraceMeta};

    fn labeled_trace(len: usize) -> Trace {
        // Two alternating halves: phase 0 strides +1 on page region A,
        // phase 1 strides +2 on region B.
        let half = len / 2;
        let accesses = (0..len)
            .map(|i| {
                let (phase, block) = if i < half {
                    (0u8, 0x1000 + i as u64)
                } else {
                    (1u8, 0x9000 + 2 * (i - half) as u64)
                };
                MemoryAccess {
                    index: i as u64,
                    pc: 0x400000 + (phase as u64) * 0x100,
                    block_addr: block,
                    phase: Some(phase),
                }
            })
            .collect();
        let meta = TraceMeta {
            num_phases: 2,
            transition_truth: vec![half],
            ..TraceMeta::default()
        };
        Trace::new(meta, accesses).unwrap()
    }

    fn tiny_cfg() -> AmmaConfig {
        AmmaConfig {
            history_t: 4,
            lookforward_f: 16,
            attn_dim: 4,
            fusion_dim: 4,
            trans_dim: 4,
            trans_layers: 1,
            heads: 2,
            head_layers: 1,
            segment_bits: 8,
            num_segments: 8,
        }
    }

    #[test]
    fn windows_respect_phase_and_lookforward() {
        let trace = labeled_trace(200);
        let cfg = tiny_cfg();
        let w0 = collect_windows(&trace, &cfg, Some(0));
        let w1 = collect_windows(&trace, &cfg, Some(1));
        let all = collect_windows(&trace, &cfg, None);
        assert!(!w0.is_empty() && !w1.is_empty());
        assert!(w0.iter().all(|&t| t < 100));
        assert!(w1.iter().all(|&t| t >= 100 + cfg.history_t - 1));
        assert!(all.len() >= w0.len() + w1.len());
        assert!(all.iter().all(|&t| t + cfg.lookforward_f < trace.len()));
    }

    #[test]
    fn phase_training_yields_one_pair_per_phase_and_decreasing_loss() {
        let trace = labeled_trace(300);
        let cfg = tiny_cfg();
        let hyper = TrainHyper {
            epochs: 3,
            batch_size: 8,
            lr: 2e-3,
            max_windows: 64,
            seed: 5,
        };
        let set = train_phase_models(&trace, &cfg, &hyper).unwrap();
        assert_eq!(set.pairs.len(), 2);
        for pair in &set.pairs {
            assert_eq!(pair.delta_losses.len(), 3);
            assert!(
                pair.delta_losses[2] < pair.delta_losses[0],
                "delta loss should drop: {:?}",
                pair.delta_losses
            );
        }
    }

    #[test]
    fn training_is_seed_reproducible() {
        let trace = labeled_trace(200);
        let cfg = tiny_cfg();
        let hyper = TrainHyper {
            epochs: 2,
            batch_size: 8,
            lr: 1e-3,
            max_windows: 32,
            seed: 9,
        };
        let a = train_phase_models(&trace, &cfg, &hyper).unwrap();
        let b = train_phase_models(&trace, &cfg, &hyper).unwrap();
        for (pa, pb) in a.pairs.iter().zip(&b.pairs) {
            assert_eq!(pa.delta_losses, pb.delta_losses);
            assert_eq!(pa.page_losses, pb.page_losses);
        }
    }

    #[test]
    fn unlabeled_trace_is_rejected() {
        let mut trace = labeled_trace(200);
        for a in &mut trace.accesses {
            a.phase = None;
        }
        let err = train_phase_models(&trace, &tiny_cfg(), &TrainHyper::default());
        assert!(err.is_err());
    }

    #[test]
    fn short_phase_is_named_in_error() {
        let trace = labeled_trace(20); // too short for T+F windows
        match train_phase_models(&trace, &tiny_cfg(), &TrainHyper::default()) {
            Err(Error::InsufficientPhaseData { phase, .. }) => assert_eq!(phase, 0),
            Err(e) => panic!("expected InsufficientPhaseData, got {e}"),
            Ok(_) => panic!("expected InsufficientPhaseData, got models"),
        }
    }
}
