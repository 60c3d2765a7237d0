//! Irregular-stream-buffer-style temporal prefetcher: record and replay of
//! PC-localized access streams through a structural address space.

use std::collections::HashMap;

#[derive(Debug, Clone)]
pub struct IsbConfig {
    /// Structural addresses per allocated region; successor links never
    /// cross a region boundary.
    pub region_len: u64,
    pub degree: usize,
}

impl Default for IsbConfig {
    fn default() -> Self {
        Self {
            region_len: 256,
            degree: 6,
        }
    }
}

/// Per-PC record-and-replay prefetcher. Physical block addresses are laid
/// out in a structural space in first-touch successor order; on a hit in
/// the physical→structural map, the next structural slots are replayed.
pub struct Isb {
    cfg: IsbConfig,
    phys_to_struct: HashMap<u64, u64>,
    struct_to_phys: HashMap<u64, u64>,
    /// Last physical block seen per PC (the training pointer).
    last_per_pc: HashMap<u64, u64>,
    next_region: u64,
    pub regions_allocated: u64,
}

impl Isb {
    pub fn new(cfg: IsbConfig) -> Self {
        assert!(cfg.region_len >= 2, "regions must hold at least 2 entries");
        Self {
            cfg,
            phys_to_struct: HashMap::new(),
            struct_to_phys: HashMap::new(),
            last_per_pc: HashMap::new(),
            next_region: 0,
            regions_allocated: 0,
        }
    }

    fn alloc_region(&mut self) -> u64 {
        let start = self.next_region * self.cfg.region_len;
        self.next_region += 1;
        self.regions_allocated += 1;
        start
    }

    fn map(&mut self, phys: u64, structural: u64) {
        if let Some(old_s) = self.phys_to_struct.insert(phys, structural) {
            self.struct_to_phys.remove(&old_s);
        }
        if let Some(old_p) = self.struct_to_phys.insert(structural, phys) {
            if old_p != phys {
                self.phys_to_struct.remove(&old_p);
            }
        }
    }

    pub fn access(&mut self, block_addr: u64, pc: u64) -> Vec<u64> {
        // Replay: emit the physical mappings of the next structural slots.
        let requests = match self.phys_to_struct.get(&block_addr) {
            Some(&s) => {
                let region_end = (s / self.cfg.region_len + 1) * self.cfg.region_len;
                (s + 1..region_end)
                    .take(self.cfg.degree)
                    .filter_map(|slot| self.struct_to_phys.get(&slot).copied())
                    .collect()
            }
            None => Vec::new(),
        };

        // Record: link the previous access of this PC to the current one.
        if let Some(&prev) = self.last_per_pc.get(&pc) {
            if prev != block_addr {
                let prev_s = match self.phys_to_struct.get(&prev) {
                    Some(&s) => s,
                    None => {
                        let s = self.alloc_region();
                        self.map(prev, s);
                        s
                    }
                };
                let successor = prev_s + 1;
                let crosses = successor % self.cfg.region_len == 0;
                let cur_s = self.phys_to_struct.get(&block_addr).copied();
                match (crosses, cur_s) {
                    // Already linked correctly: nothing to do.
                    (_, Some(s)) if !crosses && s == successor => {}
                    (false, _) => self.map(block_addr, successor),
                    // Successor would cross the region edge: start a new
                    // region for the current block unless it has a home.
                    (true, Some(_)) => {}
                    (true, None) => {
                        let s = self.alloc_region();
                        self.map(block_addr, s);
                    }
                }
            }
        }
        self.last_per_pc.insert(pc, block_addr);
        requests
    }

    /// Audits that the two maps are mutually inverse.
    pub fn maps_consistent(&self) -> bool {
        self.phys_to_struct
            .iter()
            .all(|(&p, &s)| self.struct_to_phys.get(&s) == Some(&p))
            && self
                .struct_to_phys
                .iter()
                .all(|(&s, &p)| self.phys_to_struct.get(&p) == Some(&s))
    }
}
