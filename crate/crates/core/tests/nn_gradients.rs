//! Central finite-difference validation of every layer's backward pass and
//! of the full predictor + loss composites.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use fetchlab::nn::{
    bce_loss, cce_loss, grad_check, sigmoid, sigmoid_bce_backward, softmax_cce_backward,
    softmax_rows, Embedding, Ffn, HasParams, LayerNorm, Linear, MhaBlock, SelfAttention,
    Tensor2, TransformerLayer,
};
use fetchlab::predictor::{AmmaConfig, AmmaModel, HeadKind, PageVocab};
use fetchlab::trace::{MemoryAccess, Trace, TraceMeta};
use fetchlab::{Real, Tensor};

/// Deterministic dense tensor with incommensurate entries.
fn probe(rows: usize, cols: usize, salt: f64) -> Tensor {
    let data = (0..rows * cols)
        .map(|i| ((i as f64 + salt) * 0.7391).sin())
        .collect();
    Tensor2::from_vec(rows, cols, data)
}

/// Weighted-sum loss `Σ w∘y`, whose gradient w.r.t. y is exactly `w`.
fn wsum(y: &Tensor, w: &Tensor) -> Real {
    y.data().iter().zip(w.data()).map(|(&a, &b)| a * b).sum()
}

#[test]
fn linear_gradients_are_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut lin = Linear::<Real>::new("lin", 4, 3, true, &mut rng);
    let x = probe(5, 4, 0.0);
    let w = probe(5, 3, 9.0);
    let err = grad_check(
        &mut lin,
        |m| {
            m.zero_grads();
            let y = m.forward(&x);
            let _ = m.backward(&x, &w);
            wsum(&y, &w)
        },
        |m| wsum(&m.forward(&x), &w),
        1e-5,
    );
    assert!(err < 1e-6, "linear max relative error {err}");
}

#[test]
fn layer_norm_gradients() {
    let mut ln = LayerNorm::<Real>::new("ln", 6);
    let x = probe(4, 6, 1.0);
    let w = probe(4, 6, 13.0);
    let err = grad_check(
        &mut ln,
        |m| {
            m.zero_grads();
            let (y, cache) = m.forward(&x);
            let _ = m.backward(&cache, &w);
            wsum(&y, &w)
        },
        |m| wsum(&m.forward(&x).0, &w),
        1e-5,
    );
    assert!(err < 1e-3, "layer norm max relative error {err}");
}

#[test]
fn self_attention_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut sa = SelfAttention::<Real>::new("sa", 4, 6, &mut rng);
    let x = probe(5, 4, 2.0);
    let w = probe(5, 6, 17.0);
    let err = grad_check(
        &mut sa,
        |m| {
            m.zero_grads();
            let (y, cache) = m.forward(&x);
            let _ = m.backward(&cache, &w);
            wsum(&y, &w)
        },
        |m| wsum(&m.forward(&x).0, &w),
        1e-5,
    );
    assert!(err < 1e-3, "self-attention max relative error {err}");
}

#[test]
fn mha_block_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut mha = MhaBlock::<Real>::new("mha", 6, 2, &mut rng);
    let x = probe(4, 6, 3.0);
    let w = probe(4, 6, 19.0);
    let err = grad_check(
        &mut mha,
        |m| {
            m.zero_grads();
            let (y, cache) = m.forward(&x);
            let _ = m.backward(&cache, &w);
            wsum(&y, &w)
        },
        |m| wsum(&m.forward(&x).0, &w),
        1e-5,
    );
    assert!(err < 1e-3, "multi-head attention max relative error {err}");
}

#[test]
fn ffn_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut ffn = Ffn::<Real>::new("ffn", 5, 8, &mut rng);
    let x = probe(3, 5, 4.0);
    let w = probe(3, 5, 23.0);
    let err = grad_check(
        &mut ffn,
        |m| {
            m.zero_grads();
            let (y, cache) = m.forward(&x);
            let _ = m.backward(&cache, &w);
            wsum(&y, &w)
        },
        |m| wsum(&m.forward(&x).0, &w),
        1e-5,
    );
    assert!(err < 1e-3, "feed-forward max relative error {err}");
}

#[test]
fn transformer_layer_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let mut layer = TransformerLayer::<Real>::new("t", 6, 2, 12, &mut rng);
    let x = probe(4, 6, 5.0);
    let w = probe(4, 6, 29.0);
    let err = grad_check(
        &mut layer,
        |m| {
            m.zero_grads();
            let (y, cache) = m.forward(&x);
            let _ = m.backward(&cache, &w);
            wsum(&y, &w)
        },
        |m| wsum(&m.forward(&x).0, &w),
        1e-5,
    );
    assert!(err < 1e-3, "transformer layer max relative error {err}");
}

#[test]
fn embedding_gradients_are_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let mut emb = Embedding::<Real>::new("emb", 7, 4, &mut rng);
    let tokens = [3usize, 0, 5, 3];
    let w = probe(4, 4, 31.0);
    let err = grad_check(
        &mut emb,
        |m| {
            m.zero_grads();
            let y = m.forward(&tokens);
            m.backward(&tokens, &w);
            wsum(&y, &w)
        },
        |m| wsum(&m.forward(&tokens), &w),
        1e-5,
    );
    assert!(err < 1e-6, "embedding max relative error {err}");
}

fn tiny_cfg() -> AmmaConfig {
    AmmaConfig {
        history_t: 3,
        lookforward_f: 8,
        attn_dim: 4,
        fusion_dim: 6,
        trans_dim: 4,
        trans_layers: 1,
        heads: 2,
        head_layers: 2,
        segment_bits: 8,
        num_segments: 8,
    }
}

fn tiny_trace() -> Trace {
    let accesses = (0..40u64)
        .map(|i| MemoryAccess {
            index: i,
            pc: 0x400000 + 8 * (i % 5),
            block_addr: 0x1000 + i * 3 + (i % 7),
            phase: None,
        })
        .collect();
    Trace::new(TraceMeta::default(), accesses).unwrap()
}

#[test]
fn full_model_with_bce_loss_gradients() {
    let trace = tiny_trace();
    let vocab = PageVocab::from_trace(&trace);
    let cfg = tiny_cfg();
    let mut model = AmmaModel::new(&cfg, HeadKind::DeltaSigmoid { bits: 6 }, 0, 21).unwrap();
    let input = model.input_from_trace(&trace, 5, &vocab);
    let target = Tensor2::from_vec(1, 6, vec![1.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
    let err = grad_check(
        &mut model,
        |m| {
            m.zero_grads();
            let (logits, cache) = m.forward(&input);
            let p = sigmoid(&logits);
            let (loss, _) = bce_loss(&p, &target);
            let dz = sigmoid_bce_backward(&p, &target);
            m.backward(&cache, &dz);
            loss
        },
        |m| {
            let (logits, _) = m.forward(&input);
            let (loss, _) = bce_loss(&sigmoid(&logits), &target);
            loss
        },
        1e-5,
    );
    assert!(err < 1e-3, "composite sigmoid model max relative error {err}");
}

#[test]
fn full_model_with_cce_loss_gradients() {
    let trace = tiny_trace();
    let vocab = PageVocab::from_trace(&trace);
    let cfg = tiny_cfg();
    let mut model = AmmaModel::new(
        &cfg,
        HeadKind::PageSoftmax { vocab: vocab.len() },
        vocab.len(),
        22,
    )
    .unwrap();
    let input = model.input_from_trace(&trace, 7, &vocab);
    let target = 1usize;
    let err = grad_check(
        &mut model,
        |m| {
            m.zero_grads();
            let (logits, cache) = m.forward(&input);
            let probs = softmax_rows(&logits);
            let (loss, _) = cce_loss(&probs, &[target]);
            let dz = softmax_cce_backward(&probs, &[target]);
            m.backward(&cache, &dz);
            loss
        },
        |m| {
            let (logits, _) = m.forward(&input);
            let (loss, _) = cce_loss(&softmax_rows(&logits), &[target]);
            loss
        },
        1e-5,
    );
    assert!(err < 1e-3, "composite softmax model max relative error {err}");
}

/// Negative control: a corrupted backward pass must be caught.
#[test]
fn corrupted_backward_fails_the_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut lin = Linear::<Real>::new("lin", 4, 3, true, &mut rng);
    let x = probe(5, 4, 6.0);
    let w = probe(5, 3, 37.0);
    let err = grad_check(
        &mut lin,
        |m| {
            m.zero_grads();
            let y = m.forward(&x);
            let _ = m.backward(&x, &w);
            // Sabotage one gradient entry.
            m.visit_params(&mut |p| {
                if p.name.ends_with(".w") {
                    p.grad.data_mut()[0] += 0.5;
                }
            });
            wsum(&y, &w)
        },
        |m| wsum(&m.forward(&x), &w),
        1e-5,
    );
    assert!(err > 1e-3, "corrupted gradient slipped through (err {err})");
}
