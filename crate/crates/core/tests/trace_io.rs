//! Trace file round-trips, synthetic-generator determinism, and address
//! arithmetic properties.

use proptest::prelude::*;
use tempfile::tempdir;

use fetchlab::predictor::hash_normalize_pc;
use fetchlab::trace::{
    generate_synthetic_trace, parse_trace, phase_pc_pool, split_first_iteration, write_trace,
    MemoryAccess, SynthConfig, Trace, TraceMeta,
};

fn small_synth() -> SynthConfig {
    SynthConfig {
        iterations: 2,
        scatter_len: 300,
        gather_len: 300,
        ..SynthConfig::default()
    }
}

#[test]
fn write_then_parse_is_identity_for_synthetic_trace() {
    let trace = generate_synthetic_trace(&small_synth(), 9).unwrap();
    let dir = tempdir().unwrap();
    let path = dir.path().join("t.txt");
    write_trace(&path, &trace).unwrap();
    let back = parse_trace(&path, &TraceMeta::default()).unwrap();
    assert_eq!(back.meta, trace.meta);
    assert_eq!(back.accesses, trace.accesses);
}

proptest! {
    #[test]
    fn write_then_parse_is_identity_for_arbitrary_accesses(
        pcs in prop::collection::vec(0u64..(1 << 48), 1..40),
        blocks in prop::collection::vec(0u64..(1 << 40), 1..40),
    ) {
        let n = pcs.len().min(blocks.len());
        let accesses: Vec<MemoryAccess> = (0..n)
            .map(|i| MemoryAccess {
                index: i as u64,
                pc: pcs[i],
                block_addr: blocks[i],
                phase: None,
            })
            .collect();
        let trace = Trace::new(TraceMeta::default(), accesses).unwrap();
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.txt");
        write_trace(&path, &trace).unwrap();
        let back = parse_trace(&path, &TraceMeta::default()).unwrap();
        prop_assert_eq!(back.accesses, trace.accesses);
    }
}

#[test]
fn generator_is_deterministic_per_seed() {
    let cfg = small_synth();
    let a = generate_synthetic_trace(&cfg, 5).unwrap();
    let b = generate_synthetic_trace(&cfg, 5).unwrap();
    assert_eq!(a.accesses, b.accesses);
    let c = generate_synthetic_trace(&cfg, 6).unwrap();
    assert_ne!(a.accesses, c.accesses);
}

#[test]
fn synthetic_trace_is_fully_labeled_with_truth() {
    let trace = generate_synthetic_trace(&small_synth(), 1).unwrap();
    assert!(trace.has_phase_labels());
    assert_eq!(trace.meta.num_phases, 2);
    // 2 iterations x 2 phases -> 3 interior transitions.
    assert_eq!(trace.meta.transition_truth.len(), 3);
    let starts = trace.segment_starts();
    for w in starts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let phase = trace.accesses[a].phase;
        assert!(trace.accesses[a..b].iter().all(|x| x.phase == phase));
        if b < trace.len() {
            assert_ne!(trace.accesses[b].phase, phase);
        }
    }
}

#[test]
fn phase_labels_are_all_or_none() {
    let mk = |phase| MemoryAccess { index: 0, pc: 1, block_addr: 2, phase };
    assert!(Trace::new(TraceMeta::default(), vec![mk(Some(0)), mk(None)]).is_err());
    assert!(Trace::new(TraceMeta::default(), vec![mk(Some(0)), mk(Some(1))]).is_ok());
    assert!(Trace::new(TraceMeta::default(), vec![mk(None), mk(None)]).is_ok());
}

#[test]
fn first_iteration_split_reindexes_both_halves() {
    let cfg = small_synth();
    let trace = generate_synthetic_trace(&cfg, 3).unwrap();
    let (train, eval) = split_first_iteration(&trace).unwrap();
    let iter_len = cfg.scatter_len + cfg.gather_len;
    assert_eq!(train.len(), iter_len);
    assert_eq!(eval.len(), trace.len() - iter_len);
    // Both halves are reindexed from zero.
    assert!(train.accesses.iter().enumerate().all(|(i, a)| a.index == i as u64));
    assert!(eval.accesses.iter().enumerate().all(|(i, a)| a.index == i as u64));
    // Content is preserved.
    assert_eq!(train.accesses[10].block_addr, trace.accesses[10].block_addr);
    assert_eq!(eval.accesses[0].block_addr, trace.accesses[iter_len].block_addr);
    // Transition truth is shifted into eval coordinates.
    for &t in &eval.meta.transition_truth {
        assert!(t < eval.len());
        assert_ne!(eval.accesses[t].phase, eval.accesses[t - 1].phase);
    }
}

#[test]
fn phase_pc_pools_occupy_disjoint_hash_bands() {
    for num_phases in [2usize, 3] {
        for phase in 0..num_phases {
            let pool = phase_pc_pool(phase, num_phases, 8);
            assert_eq!(pool.len(), 8);
            let lo = phase as f64 / num_phases as f64;
            let hi = (phase + 1) as f64 / num_phases as f64;
            for pc in pool {
                let h = hash_normalize_pc(pc);
                assert!(h >= lo && h < hi, "pc {pc:#x} hashed to {h} outside [{lo},{hi})");
            }
        }
    }
}

proptest! {
    #[test]
    fn page_offset_decomposition_roundtrips(block in 0u64..(1 << 52)) {
        let meta = TraceMeta::default();
        let page = meta.page_of(block);
        let off = meta.offset_of(block);
        prop_assert!(off < meta.blocks_per_page());
        prop_assert_eq!(meta.block_of(page, off), block);
    }

    #[test]
    fn hash_normalize_pc_is_in_unit_interval(pc in any::<u64>()) {
        let h = hash_normalize_pc(pc);
        prop_assert!((0.0..1.0).contains(&h));
    }
}

#[test]
fn parse_rejects_malformed_lines() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("bad.txt");
    std::fs::write(&path, "0x400000\n").unwrap();
    assert!(parse_trace(&path, &TraceMeta::default()).is_err());
    std::fs::write(&path, "0x400000,zzz\n").unwrap();
    assert!(parse_trace(&path, &TraceMeta::default()).is_err());
}
