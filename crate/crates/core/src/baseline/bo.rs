//! Best-offset spatial prefetcher, scored on trace order.

use std::collections::VecDeque;

use crate::trace::TraceMeta;

#[derive(Debug, Clone)]
pub struct BoConfig {
    /// Candidate block offsets, tested round-robin.
    pub candidates: Vec<i64>,
    pub max_score: u32,
    pub max_rounds: u32,
    /// A winner scoring at or below this emits nothing.
    pub bad_score: u32,
    pub degree: usize,
    pub recent_len: usize,
}

impl Default for BoConfig {
    fn default() -> Self {
        let mut candidates = Vec::new();
        for d in [1i64, 2, 3, 4, 5, 6, 7, 8, 10, 12, 14, 16, 18, 20, 24, 30, 32] {
            candidates.push(d);
            candidates.push(-d);
        }
        Self {
            candidates,
            max_score: 31,
            max_rounds: 100,
            bad_score: 1,
            degree: 6,
            recent_len: 256,
        }
    }
}

/// Learns the best block offset by checking, for each candidate d, whether
/// `addr − d` was recently requested; emits the winner repeatedly up to the
/// configured degree, clipped to the trigger's page.
pub struct BestOffset {
    cfg: BoConfig,
    scores: Vec<u32>,
    next_candidate: usize,
    round: u32,
    recent: VecDeque<u64>,
    best: Option<i64>,
}

impl BestOffset {
    pub fn new(cfg: BoConfig) -> Self {
        assert!(!cfg.candidates.is_empty(), "need candidate offsets");
        let n = cfg.candidates.len();
        Self {
            cfg,
            scores: vec![0; n],
            next_candidate: 0,
            round: 0,
            recent: VecDeque::new(),
            best: None,
        }
    }

    pub fn best_offset(&self) -> Option<i64> {
        self.best
    }

    fn finish_learning(&mut self) {
        let (idx, &score) = self
            .scores
            .iter()
            .enumerate()
            .max_by(|(ia, a), (ib, b)| a.cmp(b).then(ib.cmp(ia)))
            .expect("nonempty scores");
        self.best = (score > self.cfg.bad_score).then(|| self.cfg.candidates[idx]);
        self.scores.iter_mut().for_each(|s| *s = 0);
        self.next_candidate = 0;
        self.round = 0;
    }

    pub fn access(&mut self, block_addr: u64, meta: &TraceMeta) -> Vec<u64> {
        // Learning: test one candidate per access.
        let d = self.cfg.candidates[self.next_candidate];
        let base = block_addr.wrapping_add_signed(-d);
        if self.recent.contains(&base) {
            self.scores[self.next_candidate] += 1;
        }
        self.next_candidate += 1;
        if self.next_candidate == self.cfg.candidates.len() {
            self.next_candidate = 0;
            self.round += 1;
        }
        if self.scores.iter().any(|&s| s >= self.cfg.max_score) || self.round >= self.cfg.max_rounds
        {
            self.finish_learning();
        }

        if self.recent.len() == self.cfg.recent_len {
            self.recent.pop_front();
        }
        self.recent.push_back(block_addr);

        let Some(best) = self.best else {
            return Vec::new();
        };
        let page = meta.page_of(block_addr);
        let bpp = meta.blocks_per_page() as i64;
        let offset = meta.offset_of(block_addr) as i64;
        (1..=self.cfg.degree as i64)
            .filter_map(|k| {
                let off = offset + k * best;
                (off >= 0 && off < bpp).then(|| meta.block_of(page, off as u64))
            })
            .collect()
    }
}
