//! Set-associative LRU cache with prefetched/useful line bits.

use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct CacheConfig {
    pub size_bytes: usize,
    pub ways: usize,
    pub block_bytes: usize,
}

impl Default for CacheConfig {
    fn default() -> Self {
        // Desk-scale default so synthetic traces exhibit meaningful miss
        // rates; larger geometries are config-overridable.
        Self {
            size_bytes: 64 * 1024,
            ways: 16,
            block_bytes: 64,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Line {
    tag: u64,
    valid: bool,
    prefetched: bool,
    useful: bool,
    last_used: u64,
}

const EMPTY: Line = Line {
    tag: 0,
    valid: false,
    prefetched: false,
    useful: false,
    last_used: 0,
};

pub struct CacheModel {
    sets: usize,
    ways: usize,
    lines: Vec<Line>,
    stamp: u64,
    /// Prefetched lines evicted before any demand hit.
    pub evicted_unused_prefetches: u64,
}

impl CacheModel {
    pub fn new(cfg: &CacheConfig) -> Result<Self> {
        if cfg.ways == 0 || cfg.block_bytes == 0 || cfg.size_bytes == 0 {
            return Err(Error::Config("cache geometry must be nonzero".into()));
        }
        let per_set = cfg.ways * cfg.block_bytes;
        if cfg.size_bytes % per_set != 0 {
            return Err(Error::Config("cache size must be a multiple of way·block".into()));
        }
        let sets = cfg.size_bytes / per_set;
        if !sets.is_power_of_two() {
            return Err(Error::Config(format!("set count {sets} must be a power of two")));
        }
        Ok(Self {
            sets,
            ways: cfg.ways,
            lines: vec![EMPTY; sets * cfg.ways],
            stamp: 0,
            evicted_unused_prefetches: 0,
        })
    }

    pub fn sets(&self) -> usize {
        self.sets
    }

    fn set_of(&mut self, block: u64) -> &mut [Line] {
        let s = (block as usize) & (self.sets - 1);
        &mut self.lines[s * self.ways..(s + 1) * self.ways]
    }

    /// Demand lookup. Returns (hit, first_use_of_prefetch): the second flag
    /// is true exactly once per useful prefetched line.
    pub fn demand_access(&mut self, block: u64) -> (bool, bool) {
        self.stamp += 1;
        let stamp = self.stamp;
        let ways = self.ways;
        let set = self.set_of(block);
        if let Some(line) = set.iter_mut().find(|l| l.valid && l.tag == block) {
            line.last_used = stamp;
            let newly_useful = line.prefetched && !line.useful;
            line.useful = line.useful || line.prefetched;
            return (true, newly_useful);
        }
        let victim = (0..ways)
            .min_by_key(|&w| if set[w].valid { set[w].last_used } else { 0 })
            .expect("nonzero ways");
        let evicted = set[victim];
        set[victim] = Line {
            tag: block,
            valid: true,
            prefetched: false,
            useful: false,
            last_used: stamp,
        };
        if evicted.valid && evicted.prefetched && !evicted.useful {
            self.evicted_unused_prefetches += 1;
        }
        (false, false)
    }

    /// Prefetch fill. Returns false when the block is already resident
    /// (the fill is a no-op).
    pub fn prefetch_fill(&mut self, block: u64) -> bool {
        self.stamp += 1;
        let stamp = self.stamp;
        let ways = self.ways;
        let set = self.set_of(block);
        if set.iter().any(|l| l.valid && l.tag == block) {
            return false;
        }
        let victim = (0..ways)
            .min_by_key(|&w| if set[w].valid { set[w].last_used } else { 0 })
            .expect("nonzero ways");
        let evicted = set[victim];
        set[victim] = Line {
            tag: block,
            valid: true,
            prefetched: true,
            useful: false,
            last_used: stamp,
        };
        if evicted.valid && evicted.prefetched && !evicted.useful {
            self.evicted_unused_prefetches += 1;
        }
        true
    }

    pub fn is_resident(&self, block: u64) -> bool {
        let s = (block as usize) & (self.sets - 1);
        self.lines[s * self.ways..(s + 1) * self.ways]
            .iter()
            .any(|l| l.valid && l.tag == block)
    }
}
