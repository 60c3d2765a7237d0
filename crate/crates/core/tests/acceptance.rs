//! End-to-end acceptance gate. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion fails.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fetchlab::baseline::{BestOffset, BoConfig, Isb, IsbConfig};
use fetchlab::cstp::{
    cstp_step, degree_bounds, ChainPredictor, CstpConfig, CstpController, CtxItem, Pbot,
};
use fetchlab::detect::{
    dt_train, evaluate_detections, ks_statistic, kswin_threshold, Detection, Kswin, KswinConfig,
    SoftDtDetector, SoftKswin,
};
use fetchlab::detect::DtDetector;
use fetchlab::nn::{
    bce_loss, cce_loss, grad_check, sigmoid, sigmoid_bce_backward, softmax_cce_backward,
    softmax_rows, Embedding, Ffn, HasParams, LayerNorm, Linear, MhaBlock, SelfAttention, Tensor2,
    TransformerLayer,
};
use fetchlab::predictor::{
    build_labels, decode_binary16, delta_predict, derive_seed, distill_model, encode_binary16,
    evaluate_phase_set, evaluate_pooled_pair, hash_normalize_pc, quantize_model, train_pair,
    train_phase_models, train_pooled_pair, AmmaConfig, AmmaModel, DistillMode, HeadKind,
    PageVocab, TrainHyper,
};
use fetchlab::sim::{
    estimate_latency, simulate, BoPrefetcher, CacheConfig, CstpPrefetcher, IsbPrefetcher,
    LatencyConfig, LoopDetector, NonePrefetcher, OraclePrefetcher, SimReport,
};
use fetchlab::trace::{
    generate_synthetic_trace, phase_pc_pool, split_first_iteration, write_trace,
    MemoryAccess, SynthConfig, Trace, TraceMeta,
};
use fetchlab::{Real, Tensor};

type Check = Result<(), String>;

fn ensure(cond: bool, msg: String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg)
    }
}

// ---------------------------------------------------------------- criterion 1

/// Brute-force two-sample ECDF sweep oracle.
fn ks_oracle(a: &[f64], b: &[f64]) -> f64 {
    let mut d: f64 = 0.0;
    for &x in a.iter().chain(b) {
        let fa = a.iter().filter(|&&v| v <= x).count() as f64 / a.len() as f64;
        let fb = b.iter().filter(|&&v| v <= x).count() as f64 / b.len() as f64;
        d = d.max((fa - fb).abs());
    }
    d
}

fn c01_ks_statistic_vs_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for case in 0..1000 {
        let draw = |rng: &mut ChaCha8Rng, n: usize| -> Vec<f64> {
            (0..n)
                .map(|_| {
                    if rng.random_bool(0.3) {
                        // Integer draws force ties within and across samples.
                        rng.random_range(-5..5) as f64
                    } else {
                        rng.random_range(-5.0..5.0)
                    }
                })
                .collect()
        };
        let na = rng.random_range(1..=50);
        let nb = rng.random_range(1..=50);
        let a = draw(&mut rng, na);
        let b = draw(&mut rng, nb);
        let got = ks_statistic(&a, &b).map_err(|e| e.to_string())?;
        let want = ks_oracle(&a, &b);
        ensure(
            (got - want).abs() < 1e-12,
            format!("case {case}: statistic {got} vs oracle {want}"),
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------- criterion 2

fn c02_threshold_reference_values() -> Check {
    let t1 = kswin_threshold(0.005, 30, 30).map_err(|e| e.to_string())?;
    ensure((t1 - 0.4469).abs() < 1e-3, format!("threshold(0.005,30,30) = {t1}"))?;
    let t2 = kswin_threshold(0.01, 100, 100).map_err(|e| e.to_string())?;
    ensure((t2 - 0.2302).abs() < 1e-3, format!("threshold(0.01,100,100) = {t2}"))
}

// ---------------------------------------------------------------- criterion 3

const C3_SEG: usize = 1200;
const C3_TRUTH: [usize; 3] = [1200, 2400, 3600];
const C3_LAG: usize = 600; // 2·w

/// Value stream: four phase segments with disjoint uniform supports, plus
/// two 14-sample impulse bursts per segment drawn from the other support.
fn c3_value_stream(seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stream = Vec::with_capacity(4 * C3_SEG);
    for seg in 0..4 {
        let phase = seg % 2;
        for j in 0..C3_SEG {
            let burst = (600..614).contains(&j) || (900..914).contains(&j);
            let p = if burst { 1 - phase } else { phase };
            let base = 2.0 * p as f64;
            stream.push(rng.random_range(base..base + 1.0));
        }
    }
    stream
}

/// Hashed-PC stream: same segmentation, impulse noise = one wrong-pool PC
/// at four fixed offsets per segment.
fn c3_pc_stream(seed: u64) -> Vec<f64> {
    let pools: Vec<Vec<f64>> = (0..2)
        .map(|p| phase_pc_pool(p, 2, 8).iter().map(|&pc| hash_normalize_pc(pc)).collect())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stream = Vec::with_capacity(4 * C3_SEG);
    for seg in 0..4 {
        let phase = seg % 2;
        for j in 0..C3_SEG {
            let impulse = matches!(j, 150 | 450 | 750 | 1050);
            let p = if impulse { 1 - phase } else { phase };
            let pool = &pools[p];
            stream.push(pool[rng.random_range(0..pool.len())]);
        }
    }
    stream
}

fn c03_soft_detectors_on_noisy_traces() -> Check {
    let t_len = 9;
    // Phase classifier trained on clean in-band windows.
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    for phase in 0..2usize {
        let pool: Vec<f64> = phase_pc_pool(phase, 2, 8)
            .iter()
            .map(|&pc| hash_normalize_pc(pc))
            .collect();
        for _ in 0..60 {
            xs.push((0..t_len).map(|_| pool[rng.random_range(0..pool.len())]).collect());
            ys.push(phase);
        }
    }
    let tree = dt_train(&xs, &ys).map_err(|e| e.to_string())?;

    let mut soft_kswin_precisions = Vec::new();
    for s in 0..20u64 {
        // --- KSWIN family on the value stream ---
        let stream = c3_value_stream(derive_seed(3, "c3-values", s));
        // A persistent shift keeps the exceedance ratio at ~1.0, while a
        // burst episode tops out around 0.7; 0.85 separates them under
        // history-sampling noise.
        let cfg = KswinConfig {
            th_r: 0.85,
            rng_seed: derive_seed(3, "c3-kswin-rng", s),
            ..KswinConfig::default()
        };
        let mut hard = Kswin::new(cfg.clone()).map_err(|e| e.to_string())?;
        let mut soft = SoftKswin::new(cfg).map_err(|e| e.to_string())?;
        let hard_hits: Vec<Detection> = stream.iter().filter_map(|&x| hard.update(x)).collect();
        let soft_hits: Vec<Detection> = stream.iter().filter_map(|&x| soft.update(x)).collect();
        let hs = evaluate_detections(&hard_hits, &C3_TRUTH, C3_LAG);
        let ss = evaluate_detections(&soft_hits, &C3_TRUTH, C3_LAG);
        ensure(ss.recall == 1.0, format!("trace {s}: soft KSWIN recall {}", ss.recall))?;
        ensure(
            ss.precision > hs.precision,
            format!("trace {s}: KSWIN precision soft {} vs hard {}", ss.precision, hs.precision),
        )?;
        soft_kswin_precisions.push(ss.precision);

        // --- DT family on the hashed-PC stream ---
        let pcs = c3_pc_stream(derive_seed(3, "c3-pcs", s));
        let mut hard_dt = DtDetector::new(tree.clone());
        let mut soft_dt = SoftDtDetector::new(tree.clone(), 32).map_err(|e| e.to_string())?;
        let mut hard_hits = Vec::new();
        let mut soft_hits = Vec::new();
        for t in t_len - 1..pcs.len() {
            let feats = &pcs[t + 1 - t_len..=t];
            if let Some(mut d) = hard_dt.update(feats) {
                d.index = t;
                hard_hits.push(d);
            }
            if let Some(mut d) = soft_dt.update(feats) {
                d.index = t;
                soft_hits.push(d);
            }
        }
        let hs = evaluate_detections(&hard_hits, &C3_TRUTH, C3_LAG);
        let ss = evaluate_detections(&soft_hits, &C3_TRUTH, C3_LAG);
        ensure(ss.recall == 1.0, format!("trace {s}: soft DT recall {}", ss.recall))?;
        ensure(
            ss.precision > hs.precision,
            format!("trace {s}: DT precision soft {} vs hard {}", ss.precision, hs.precision),
        )?;
    }
    let mean = soft_kswin_precisions.iter().sum::<f64>() / soft_kswin_precisions.len() as f64;
    ensure(mean >= 0.8, format!("mean soft KSWIN precision {mean}"))
}

// ---------------------------------------------------------------- criterion 4

fn probe(rows: usize, cols: usize, salt: f64) -> Tensor {
    let data = (0..rows * cols)
        .map(|i| ((i as f64 + salt) * 0.7391).sin())
        .collect();
    Tensor2::from_vec(rows, cols, data)
}

fn wsum(y: &Tensor, w: &Tensor) -> Real {
    y.data().iter().zip(w.data()).map(|(&a, &b)| a * b).sum()
}

fn c04_gradient_checks() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let ok = |name: &str, err: f64, bound: f64| -> Check {
        ensure(err < bound, format!("{name}: max relative error {err} (bound {bound})"))
    };

    let mut lin = Linear::<Real>::new("lin", 4, 3, true, &mut rng);
    let (x, w) = (probe(5, 4, 0.0), probe(5, 3, 9.0));
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
    ok("linear", err, 1e-6)?;

    macro_rules! cached_layer {
        ($name:expr, $layer:expr, $x:expr, $w:expr) => {{
            let mut layer = $layer;
            let (x, w) = ($x, $w);
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
            ok($name, err, 1e-3)?;
        }};
    }
    cached_layer!("layer-norm", LayerNorm::<Real>::new("ln", 6), probe(4, 6, 1.0), probe(4, 6, 13.0));
    cached_layer!(
        "self-attention",
        SelfAttention::<Real>::new("sa", 4, 6, &mut rng),
        probe(5, 4, 2.0),
        probe(5, 6, 17.0)
    );
    cached_layer!(
        "multi-head-attention",
        MhaBlock::<Real>::new("mha", 6, 2, &mut rng),
        probe(4, 6, 3.0),
        probe(4, 6, 19.0)
    );
    cached_layer!("ffn", Ffn::<Real>::new("ffn", 5, 8, &mut rng), probe(3, 5, 4.0), probe(3, 5, 23.0));
    cached_layer!(
        "transformer-layer",
        TransformerLayer::<Real>::new("t", 6, 2, 12, &mut rng),
        probe(4, 6, 5.0),
        probe(4, 6, 29.0)
    );

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
    ok("embedding", err, 1e-6)?;

    // Full model + loss composites.
    let accesses = (0..40u64)
        .map(|i| MemoryAccess {
            index: i,
            pc: 0x400000 + 8 * (i % 5),
            block_addr: 0x1000 + i * 3 + (i % 7),
            phase: None,
        })
        .collect();
    let trace = Trace::new(TraceMeta::default(), accesses).map_err(|e| e.to_string())?;
    let vocab = PageVocab::from_trace(&trace);
    let cfg = AmmaConfig {
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
    };
    let mut model = AmmaModel::new(&cfg, HeadKind::DeltaSigmoid { bits: 6 }, 0, 21)
        .map_err(|e| e.to_string())?;
    let input = model.input_from_trace(&trace, 5, &vocab);
    let target = Tensor2::from_vec(1, 6, vec![1.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
    let err = grad_check(
        &mut model,
        |m| {
            m.zero_grads();
            let (logits, cache) = m.forward(&input);
            let p = sigmoid(&logits);
            let (loss, _) = bce_loss(&p, &target);
            m.backward(&cache, &sigmoid_bce_backward(&p, &target));
            loss
        },
        |m| {
            let (logits, _) = m.forward(&input);
            bce_loss(&sigmoid(&logits), &target).0
        },
        1e-5,
    );
    ok("model+bce", err, 1e-3)?;

    let mut model = AmmaModel::new(
        &cfg,
        HeadKind::PageSoftmax { vocab: vocab.len() },
        vocab.len(),
        22,
    )
    .map_err(|e| e.to_string())?;
    let input = model.input_from_trace(&trace, 7, &vocab);
    let err = grad_check(
        &mut model,
        |m| {
            m.zero_grads();
            let (logits, cache) = m.forward(&input);
            let probs = softmax_rows(&logits);
            let (loss, _) = cce_loss(&probs, &[1]);
            m.backward(&cache, &softmax_cce_backward(&probs, &[1]));
            loss
        },
        |m| {
            let (logits, _) = m.forward(&input);
            cce_loss(&softmax_rows(&logits), &[1]).0
        },
        1e-5,
    );
    ok("model+cce", err, 1e-3)
}

// ---------------------------------------------------------------- criterion 5

/// Two-phase fixture where phase identity is the only disambiguator: each
/// loop starts with phase-identical prefixes whose futures (in-page deltas
/// for the first prefix, the next page for the second) depend on the phase.
fn phase_ambiguity_fixture(seed: u64) -> Trace {
    let meta = TraceMeta {
        num_phases: 2,
        ..TraceMeta::default()
    };
    let pool = phase_pc_pool(0, 1, 8);
    let rot = seed as usize;
    let page_a: u64 = 0x100;
    let tail_pages = [0x200u64, 0x300];
    let mut accesses: Vec<MemoryAccess> = Vec::new();
    let mut truth = Vec::new();
    for seg in 0..6usize {
        if seg > 0 {
            truth.push(accesses.len());
        }
        let phase = (seg % 2) as u8;
        for _ in 0..5 {
            let mut emit = |page: u64, off: u64, li: usize| {
                accesses.push(MemoryAccess {
                    index: accesses.len() as u64,
                    pc: pool[(li + rot) % pool.len()],
                    block_addr: meta.block_of(page, off),
                    phase: Some(phase),
                });
            };
            // Shared prefix 1 (delta-ambiguous endpoint).
            for (li, off) in (0..9u64).enumerate() {
                emit(page_a, off, li);
            }
            // Phase-dependent in-page mid run.
            for (li, k) in (0..8u64).enumerate() {
                emit(page_a, 20 + 20 * phase as u64 + k, 9 + li);
            }
            // Shared prefix 2 (page-ambiguous endpoint).
            for (li, off) in (54..63u64).enumerate() {
                emit(page_a, off, 17 + li);
            }
            // Phase-dependent tail page.
            for (li, off) in (0..12u64).enumerate() {
                emit(tail_pages[phase as usize], off, 26 + li);
            }
        }
    }
    let meta = TraceMeta {
        transition_truth: truth,
        ..meta
    };
    Trace::new(meta, accesses).expect("fixture is well-formed")
}

fn c5_cfg() -> AmmaConfig {
    AmmaConfig {
        history_t: 9,
        lookforward_f: 8,
        attn_dim: 8,
        fusion_dim: 16,
        trans_dim: 16,
        trans_layers: 1,
        heads: 2,
        head_layers: 1,
        segment_bits: 8,
        num_segments: 8,
    }
}

fn c05_phase_specific_beats_pooled() -> Check {
    let cfg = c5_cfg();
    for seed in [1u64, 2, 3] {
        let trace = phase_ambiguity_fixture(seed);
        let hyper = TrainHyper {
            epochs: 30,
            batch_size: 16,
            lr: 2e-3,
            max_windows: 1200,
            seed: derive_seed(5, "c5", seed),
        };
        let set = train_phase_models(&trace, &cfg, &hyper).map_err(|e| e.to_string())?;
        let pooled = train_pooled_pair(&trace, &cfg, &hyper).map_err(|e| e.to_string())?;
        let vocab = PageVocab::from_trace(&trace);
        let ps = evaluate_phase_set(&set, &trace, 8).map_err(|e| e.to_string())?;
        let po = evaluate_pooled_pair(&pooled, &trace, &vocab, 8).map_err(|e| e.to_string())?;
        ensure(
            ps.delta_f1_micro > po.delta_f1_micro,
            format!(
                "seed {seed}: delta F1 phase-specific {} vs pooled {}",
                ps.delta_f1_micro, po.delta_f1_micro
            ),
        )?;
        ensure(
            ps.accuracy_at_10 > po.accuracy_at_10,
            format!(
                "seed {seed}: accuracy@10 phase-specific {} vs pooled {}",
                ps.accuracy_at_10, po.accuracy_at_10
            ),
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------- criterion 6

fn unlabeled_trace(blocks: &[u64], pc_period: u64) -> Trace {
    let accesses = blocks
        .iter()
        .enumerate()
        .map(|(i, &b)| MemoryAccess {
            index: i as u64,
            pc: 0x400000 + 16 * (i as u64 % pc_period),
            block_addr: b,
            phase: None,
        })
        .collect();
    Trace::new(TraceMeta::default(), accesses).expect("trace is well-formed")
}

fn c06_overfit_sanity() -> Check {
    // Pure +1 stride: the delta model must saturate on delta +1.
    let blocks: Vec<u64> = (0x4000..0x4000 + 400u64).collect();
    let trace = unlabeled_trace(&blocks, 4);
    let cfg = AmmaConfig {
        history_t: 4,
        lookforward_f: 1,
        ..c5_cfg()
    };
    let hyper = TrainHyper {
        epochs: 30,
        batch_size: 16,
        lr: 2e-3,
        max_windows: 400,
        seed: 6,
    };
    let pair = train_pair(
        &trace,
        &PageVocab::from_trace(&trace),
        &cfg,
        &hyper,
        &fetchlab::predictor::collect_windows(&trace, &cfg, None),
        None,
    )
    .map_err(|e| e.to_string())?;
    let vocab = PageVocab::from_trace(&trace);
    for t in [50usize, 150, 250] {
        let input = pair.delta.input_from_trace(&trace, t, &vocab);
        let ranked = delta_predict(&pair.delta, &input);
        let (top_delta, score) = ranked[0];
        ensure(
            top_delta == 1 && score > 0.9,
            format!("stride window {t}: top delta {top_delta} score {score}"),
        )?;
    }

    // Two-page cycle: predicted pages must appear within the next 10
    // accesses nearly always.
    let meta = TraceMeta::default();
    let cyc: Vec<u64> = (0..300)
        .map(|i| meta.block_of(if i % 2 == 0 { 5 } else { 9 }, 0))
        .collect();
    let trace = unlabeled_trace(&cyc, 2);
    let cfg = AmmaConfig {
        history_t: 4,
        lookforward_f: 2,
        ..c5_cfg()
    };
    let pair = train_pooled_pair(&trace, &cfg, &hyper).map_err(|e| e.to_string())?;
    let scores = evaluate_pooled_pair(&pair, &trace, &PageVocab::from_trace(&trace), 2)
        .map_err(|e| e.to_string())?;
    ensure(
        scores.accuracy_at_10 > 0.9,
        format!("page-cycle accuracy@10 {}", scores.accuracy_at_10),
    )
}

// ---------------------------------------------------------------- criterion 7

/// Scripted chain predictor for the worked expansion example.
struct Scripted {
    meta: TraceMeta,
}

impl ChainPredictor for Scripted {
    fn top_deltas(&self, _ctx: &[CtxItem], _d_s: usize) -> Vec<i64> {
        vec![2, 3]
    }

    fn next_page(&self, ctx: &[CtxItem]) -> Option<u64> {
        (self.meta.page_of(ctx.last().unwrap().block) == 1).then_some(2)
    }
}

/// Saturating predictor used to probe the per-step request cap.
struct Greedy {
    meta: TraceMeta,
}

impl ChainPredictor for Greedy {
    fn top_deltas(&self, _ctx: &[CtxItem], d_s: usize) -> Vec<i64> {
        (1..=d_s as i64).collect()
    }

    fn next_page(&self, ctx: &[CtxItem]) -> Option<u64> {
        Some(self.meta.page_of(ctx.last().unwrap().block) + 1)
    }
}

fn c07_chain_expansion() -> Check {
    let (lo, hi) = degree_bounds(2, 2).map_err(|e| e.to_string())?;
    ensure((lo, hi) == (3, 6), format!("degree bounds {lo}..{hi}, expected 3..6"))?;

    let meta = TraceMeta::default();
    // Worked example: demand A-0, spatial deltas {2,3}, one chain hop to
    // page B whose last recorded offset is 4.
    let mut pbot = Pbot::new(16);
    pbot.update(2, 4, 0x99);
    let window: Vec<CtxItem> = [5u64, 3, 0] // demand block is A-0
        .iter()
        .map(|&off| CtxItem {
            block: meta.block_of(1, off),
            pc: 0x42,
        })
        .collect();
    let pred = Scripted { meta: meta.clone() };
    let got = cstp_step(&pred, &window, &meta, &pbot, 2, 2);
    let want = vec![
        meta.block_of(1, 2),
        meta.block_of(1, 3),
        meta.block_of(2, 6),
        meta.block_of(2, 7),
    ];
    ensure(got == want, format!("expansion {got:?}, expected {want:?}"))?;

    // Cap: even a saturating predictor never exceeds D_s·(D_t+1).
    let mut pbot = Pbot::new(64);
    for page in 0..32u64 {
        pbot.update(page, 5, 0x99);
    }
    let pred = Greedy { meta: meta.clone() };
    for start in 0..16u64 {
        let window: Vec<CtxItem> = (0..3)
            .map(|i| CtxItem {
                block: meta.block_of(start, i),
                pc: 0x42,
            })
            .collect();
        let got = cstp_step(&pred, &window, &meta, &pbot, 2, 2);
        ensure(got.len() <= hi, format!("step issued {} requests (cap {hi})", got.len()))?;
    }
    Ok(())
}

// ---------------------------------------------------------------- criterion 8

fn c8_cfg() -> AmmaConfig {
    AmmaConfig {
        history_t: 9,
        lookforward_f: 64,
        attn_dim: 8,
        fusion_dim: 16,
        trans_dim: 16,
        trans_layers: 1,
        heads: 2,
        head_layers: 1,
        segment_bits: 8,
        num_segments: 8,
    }
}

fn run_sim(
    trace: &Trace,
    prefetcher: &mut dyn fetchlab::sim::Prefetcher,
    distance: usize,
) -> Result<SimReport, String> {
    simulate(trace, prefetcher, &CacheConfig::default(), distance).map_err(|e| e.to_string())
}

fn c08_prefetcher_ordering() -> Check {
    let trace = generate_synthetic_trace(&SynthConfig::default(), 8).map_err(|e| e.to_string())?;
    let (train, eval) = split_first_iteration(&trace).map_err(|e| e.to_string())?;
    let hyper = TrainHyper {
        epochs: 3,
        batch_size: 16,
        lr: 2e-3,
        max_windows: 1500,
        seed: derive_seed(8, "c8", 0),
    };
    let set = train_phase_models(&train, &c8_cfg(), &hyper).map_err(|e| e.to_string())?;
    let controller =
        CstpController::new(set, CstpConfig::default()).map_err(|e| e.to_string())?;

    let mut oracle = OraclePrefetcher { degree: 6 };
    let mut bo = BoPrefetcher(BestOffset::new(BoConfig::default()));
    let mut isb = IsbPrefetcher(Isb::new(IsbConfig::default()));
    let mut cstp = CstpPrefetcher::new(controller, LoopDetector::TrueLabels, 0);

    let r_oracle = run_sim(&eval, &mut oracle, 0)?;
    let r_bo = run_sim(&eval, &mut bo, 0)?;
    let r_isb = run_sim(&eval, &mut isb, 0)?;
    let r_cstp = run_sim(&eval, &mut cstp, 0)?;

    ensure(
        r_oracle.coverage > r_cstp.coverage,
        format!("coverage oracle {} vs learned {}", r_oracle.coverage, r_cstp.coverage),
    )?;
    ensure(
        r_cstp.coverage > r_bo.coverage,
        format!("coverage learned {} vs best-offset {}", r_cstp.coverage, r_bo.coverage),
    )?;
    ensure(
        r_cstp.coverage > r_isb.coverage,
        format!("coverage learned {} vs isb {}", r_cstp.coverage, r_isb.coverage),
    )?;
    ensure(
        r_cstp.accuracy >= 0.7 * r_oracle.accuracy,
        format!("accuracy learned {} vs oracle {}", r_cstp.accuracy, r_oracle.accuracy),
    )
}

// ---------------------------------------------------------------- criterion 9

/// Single-phase trace with a per-page pseudo-random walk plus label noise.
fn c9_trace(seed: u64) -> Trace {
    let meta = TraceMeta::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Fixed per-page offset sequences.
    let pages: Vec<u64> = (0..8).map(|p| 0x700 + p).collect();
    let seqs: Vec<Vec<u64>> = (0..pages.len())
        .map(|_| (0..12).map(|_| rng.random_range(0..64u64)).collect())
        .collect();
    let mut blocks = Vec::new();
    while blocks.len() < 2400 {
        for (pi, &page) in pages.iter().enumerate() {
            for &off in &seqs[pi] {
                // Impulsive same-page noise.
                let off = if rng.random_bool(0.15) {
                    rng.random_range(0..64u64)
                } else {
                    off
                };
                blocks.push(meta.block_of(page, off));
            }
        }
    }
    unlabeled_trace(&blocks, 8)
}

fn delta_f1_micro(
    model: &AmmaModel,
    trace: &Trace,
    vocab: &PageVocab,
    windows: &[usize],
    d_s: usize,
) -> Result<f64, String> {
    let (mut tp, mut fp, mut fnn) = (0usize, 0usize, 0usize);
    for &t in windows {
        let (bitmap, _) =
            build_labels(trace, t, model.cfg.lookforward_f, vocab).map_err(|e| e.to_string())?;
        let input = model.input_from_trace(trace, t, vocab);
        let predicted: Vec<i64> = delta_predict(model, &input)
            .into_iter()
            .take(d_s)
            .map(|(d, _)| d)
            .collect();
        let truth = bitmap.set_deltas();
        let w_tp = predicted.iter().filter(|d| truth.contains(d)).count();
        tp += w_tp;
        fp += predicted.len() - w_tp;
        fnn += truth.len() - w_tp;
    }
    let denom = 2 * tp + fp + fnn;
    Ok(if denom == 0 { 1.0 } else { 2.0 * tp as f64 / denom as f64 })
}

fn c09_compression() -> Check {
    // Binary16 token encoding is a bijection.
    for tok in 0..=u16::MAX {
        let bits = encode_binary16(tok);
        ensure(decode_binary16(&bits) == tok, format!("binary16 roundtrip failed at {tok}"))?;
    }

    let trace = c9_trace(99);
    let vocab = PageVocab::from_trace(&trace);
    let teacher_cfg = AmmaConfig {
        history_t: 9,
        lookforward_f: 12,
        ..AmmaConfig::default() // full-width teacher dims
    };
    let student_cfg = AmmaConfig {
        attn_dim: 8,
        fusion_dim: 8,
        trans_dim: 8,
        heads: 2,
        ..teacher_cfg.clone()
    };
    let windows = fetchlab::predictor::collect_windows(&trace, &teacher_cfg, None);
    let teacher_hyper = TrainHyper {
        epochs: 16,
        batch_size: 16,
        lr: 2e-3,
        max_windows: 600,
        seed: derive_seed(9, "teacher", 0),
    };
    let mut teacher = train_pair(&trace, &vocab, &teacher_cfg, &teacher_hyper, &windows, None)
        .map_err(|e| e.to_string())?;

    let d_s = 6;
    let eval_windows: Vec<usize> = windows.iter().copied().step_by(3).collect();
    let teacher_f1 = delta_f1_micro(&teacher.delta, &trace, &vocab, &eval_windows, d_s)?;

    for seed in [11u64, 12, 13] {
        let student_hyper = TrainHyper {
            epochs: 4,
            batch_size: 16,
            lr: 2e-3,
            max_windows: 600,
            seed: derive_seed(9, "student", seed),
        };
        let distilled = distill_model(
            &DistillMode::Single(&teacher.delta),
            &student_cfg,
            HeadKind::DeltaSigmoid { bits: 126 },
            &trace,
            &vocab,
            &windows,
            &student_hyper,
            2.0,
        )
        .map_err(|e| e.to_string())?;
        let scratch = train_pair(&trace, &vocab, &student_cfg, &student_hyper, &windows, None)
            .map_err(|e| e.to_string())?;

        // Parameter reduction.
        let mut distilled = distilled;
        let ratio = teacher.delta.param_count() as f64 / distilled.param_count() as f64;
        ensure(ratio >= 50.0, format!("parameter reduction {ratio:.1}x < 50x"))?;

        let f1_distilled = delta_f1_micro(&distilled, &trace, &vocab, &eval_windows, d_s)?;
        let mut scratch = scratch;
        let f1_scratch = delta_f1_micro(&scratch.delta, &trace, &vocab, &eval_windows, d_s)?;
        ensure(
            f1_distilled > f1_scratch,
            format!(
                "seed {seed}: distilled F1 {f1_distilled} vs scratch {f1_scratch} (teacher {teacher_f1})"
            ),
        )?;
        let _ = scratch.delta.param_count(); // silence unused-mut paths
    }

    // Quantization: 8-bit affine round-trip costs at most 0.03 F1.
    let (_quant, report) = quantize_model(&mut teacher.delta);
    ensure(report.params > 0, "empty quantization report".into())?;
    let f1_quant = delta_f1_micro(&teacher.delta, &trace, &vocab, &eval_windows, d_s)?;
    ensure(
        teacher_f1 - f1_quant <= 0.03,
        format!("quantization degraded F1 from {teacher_f1} to {f1_quant}"),
    )
}

// --------------------------------------------------------------- criterion 10

fn c10_latency_model() -> Check {
    let full = estimate_latency(&LatencyConfig::default()).map_err(|e| e.to_string())? as f64;
    ensure(
        (full - 123.0).abs() <= 0.25 * 123.0,
        format!("full-size latency {full} outside 123 +/- 25%"),
    )?;
    let small = estimate_latency(&LatencyConfig {
        attn_dim: 8,
        fusion_dim: 8,
        trans_dim: 8,
        ..LatencyConfig::default()
    })
    .map_err(|e| e.to_string())? as f64;
    ensure(
        (small - 79.0).abs() <= 0.25 * 79.0,
        format!("compressed latency {small} outside 79 +/- 25%"),
    )?;

    let mut prev = 0u64;
    for p in 3..=10u32 {
        let d = 1usize << p;
        let cfg = LatencyConfig {
            attn_dim: d,
            fusion_dim: d,
            trans_dim: d,
            ..LatencyConfig::default()
        };
        let t = estimate_latency(&cfg).map_err(|e| e.to_string())?;
        ensure(t > prev, format!("latency not monotone at dim {d}"))?;
        prev = t;
        let deeper = estimate_latency(&LatencyConfig { layers: 2, ..cfg }).map_err(|e| e.to_string())?;
        ensure(deeper > t, format!("latency not monotone in layers at dim {d}"))?;
    }
    Ok(())
}

// --------------------------------------------------------------- criterion 11

/// Periodic fixture: 64 interleaved per-page +1 walks, so every predicted
/// block has at least 64 accesses of lead time. Offsets are staggered per
/// stream so consecutive accesses spread across cache sets.
fn periodic_trace() -> Trace {
    let meta = TraceMeta {
        num_phases: 1,
        ..TraceMeta::default()
    };
    let pool = phase_pc_pool(0, 1, 8);
    let streams = 64u64;
    let len = (streams * 64 * 3) as usize;
    let accesses = (0..len)
        .map(|i| {
            let s = i as u64 % streams;
            let step = i as u64 / streams;
            MemoryAccess {
                index: i as u64,
                pc: pool[(s % pool.len() as u64) as usize],
                block_addr: meta.block_of(0x500 + s, (step + s) % 64),
                phase: Some(0),
            }
        })
        .collect();
    Trace::new(meta, accesses).expect("fixture is well-formed")
}

fn c11_distance_robustness() -> Check {
    let trace = periodic_trace();
    let cfg = AmmaConfig {
        history_t: 9,
        lookforward_f: 130,
        attn_dim: 8,
        fusion_dim: 16,
        trans_dim: 16,
        trans_layers: 1,
        heads: 2,
        head_layers: 1,
        segment_bits: 8,
        num_segments: 8,
    };
    let hyper = TrainHyper {
        epochs: 3,
        batch_size: 16,
        lr: 2e-3,
        max_windows: 800,
        seed: derive_seed(11, "c11", 0),
    };
    let mut coverages = Vec::new();
    for distance in [0usize, 50] {
        // Training is deterministic, so each run rebuilds an identical set.
        let set = train_phase_models(&trace, &cfg, &hyper).map_err(|e| e.to_string())?;
        let controller =
            CstpController::new(set, CstpConfig::default()).map_err(|e| e.to_string())?;
        let mut pf = CstpPrefetcher::new(controller, LoopDetector::TrueLabels, 0);
        let report = run_sim(&trace, &mut pf, distance)?;
        coverages.push(report.coverage);
    }
    ensure(
        (coverages[0] - coverages[1]).abs() <= 0.1,
        format!("coverage at distance 0 = {}, at 50 = {}", coverages[0], coverages[1]),
    )
}

// --------------------------------------------------------------- criterion 12

fn c12_end_to_end_determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let synth = SynthConfig {
        iterations: 2,
        scatter_len: 400,
        gather_len: 400,
        ..SynthConfig::default()
    };

    // Trace bytes.
    let mut trace_bytes = Vec::new();
    for run in 0..2 {
        let trace = generate_synthetic_trace(&synth, 12).map_err(|e| e.to_string())?;
        let path = dir.path().join(format!("trace{run}.txt"));
        write_trace(&path, &trace).map_err(|e| e.to_string())?;
        trace_bytes.push(std::fs::read(&path).map_err(|e| e.to_string())?);
    }
    ensure(trace_bytes[0] == trace_bytes[1], "trace files differ between runs".into())?;

    // Checkpoint bytes.
    let trace = generate_synthetic_trace(&synth, 12).map_err(|e| e.to_string())?;
    let cfg = AmmaConfig {
        history_t: 9,
        lookforward_f: 16,
        attn_dim: 8,
        fusion_dim: 8,
        trans_dim: 8,
        trans_layers: 1,
        heads: 2,
        head_layers: 1,
        segment_bits: 8,
        num_segments: 8,
    };
    let hyper = TrainHyper {
        epochs: 1,
        batch_size: 16,
        lr: 1e-3,
        max_windows: 200,
        seed: 12,
    };
    let mut ckpt_bytes = Vec::new();
    for run in 0..2 {
        let mut pair = train_pooled_pair(&trace, &cfg, &hyper).map_err(|e| e.to_string())?;
        let path = dir.path().join(format!("delta{run}.ckpt"));
        pair.delta
            .save(&path, &BTreeMap::new())
            .map_err(|e| e.to_string())?;
        ckpt_bytes.push(std::fs::read(&path).map_err(|e| e.to_string())?);
    }
    ensure(ckpt_bytes[0] == ckpt_bytes[1], "checkpoints differ between runs".into())?;

    // Report text.
    let mut reports = Vec::new();
    for _ in 0..2 {
        let mut none = NonePrefetcher;
        let mut bo = BoPrefetcher(BestOffset::new(BoConfig::default()));
        let r1 = run_sim(&trace, &mut none, 0)?;
        let r2 = run_sim(&trace, &mut bo, 0)?;
        reports.push(format!("{}\n{}", r1.to_text(), r2.to_text()));
    }
    ensure(reports[0] == reports[1], "simulation reports differ between runs".into())?;

    // Text round-trip.
    let mut bo = BoPrefetcher(BestOffset::new(BoConfig::default()));
    let report = run_sim(&trace, &mut bo, 0)?;
    let back = SimReport::from_text(&report.to_text()).map_err(|e| e.to_string())?;
    ensure(back == report, "report text round-trip mismatch".into())
}

// ------------------------------------------------------------------- runner

#[test]
fn acceptance() {
    let checks: Vec<(&str, fn() -> Check)> = vec![
        ("01 ks-statistic-vs-oracle", c01_ks_statistic_vs_oracle),
        ("02 drift-threshold-values", c02_threshold_reference_values),
        ("03 soft-detectors-on-noisy-traces", c03_soft_detectors_on_noisy_traces),
        ("04 gradient-checks", c04_gradient_checks),
        ("05 phase-specific-beats-pooled", c05_phase_specific_beats_pooled),
        ("06 overfit-sanity", c06_overfit_sanity),
        ("07 chain-expansion-bounds", c07_chain_expansion),
        ("08 prefetcher-ordering", c08_prefetcher_ordering),
        ("09 compression-pipeline", c09_compression),
        ("10 latency-model", c10_latency_model),
        ("11 distance-robustness", c11_distance_robustness),
        ("12 end-to-end-determinism", c12_end_to_end_determinism),
    ];
    let mut failures = Vec::new();
    for (name, f) in checks {
        match f() {
            Ok(()) => println!("criterion {name}: PASS"),
            Err(e) => {
                println!("criterion {name}: FAIL - {e}");
                failures.push(format!("{name}: {e}"));
            }
        }
    }
    assert!(failures.is_empty(), "failed criteria:\n{}", failures.join("\n"));
}
