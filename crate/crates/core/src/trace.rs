//! Memory-trace data model, text-format I/O, and the synthetic
//! scatter-gather trace generator.
//!
//! Trace text format: one access per line, `0x<pc>,0x<byte_addr>[,<phase>]`.
//! Header comment lines start with `#` and carry metadata as `# key=value`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::predictor::hash_normalize_pc;
use crate::{Error, Result};

/// One LLC access event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemoryAccess {
    /// 0-based position in the stream.
    pub index: u64,
    pub pc: u64,
    /// Byte address right-shifted by `block_bits`.
    pub block_addr: u64,
    pub phase: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceMeta {
    pub block_bits: u32,
    pub page_bits: u32,
    pub num_phases: usize,
    /// Ordinal indices where the phase changes (first access of each new
    /// segment), present iff ground truth is known.
    pub transition_truth: Vec<usize>,
}

impl Default for TraceMeta {
    fn default() -> Self {
        Self {
            block_bits: 6,
            page_bits: 12,
            num_phases: 1,
            transition_truth: Vec::new(),
        }
    }
}

impl TraceMeta {
    pub fn blocks_per_page(&self) -> u64 {
        1 << (self.page_bits - self.block_bits)
    }

    pub fn page_of(&self, block_addr: u64) -> u64 {
        block_addr >> (self.page_bits - self.block_bits)
    }

    pub fn offset_of(&self, block_addr: u64) -> u64 {
        block_addr & (self.blocks_per_page() - 1)
    }

    pub fn block_of(&self, page: u64, offset: u64) -> u64 {
        (page << (self.page_bits - self.block_bits)) | offset
    }

    pub fn validate(&self) -> Result<()> {
        if self.page_bits <= self.block_bits {
            return Err(Error::Config("page_bits must exceed block_bits".into()));
        }
        if self.num_phases < 1 {
            return Err(Error::Config("num_phases must be >= 1".into()));
        }
        if self.transition_truth.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(
                "transition_truth must be strictly increasing".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Trace {
    pub meta: TraceMeta,
    pub accesses: Vec<MemoryAccess>,
}

impl Trace {
    pub fn new(meta: TraceMeta, accesses: Vec<MemoryAccess>) -> Result<Self> {
        meta.validate()?;
        let labeled = accesses.iter().filter(|a| a.phase.is_some()).count();
        if labeled != 0 && labeled != accesses.len() {
            return Err(Error::Config(
                "either all accesses carry a phase label or none do".into(),
            ));
        }
        Ok(Self { meta, accesses })
    }

    pub fn len(&self) -> usize {
        self.accesses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.accesses.is_empty()
    }

    pub fn has_phase_labels(&self) -> bool {
        self.accesses.first().is_some_and(|a| a.phase.is_some())
    }

    /// Segment boundaries: start index of every phase segment, from labels
    /// or transition truth.
    pub fn segment_starts(&self) -> Vec<usize> {
        let mut starts = vec![0usize];
        if !self.meta.transition_truth.is_empty() {
            starts.extend(self.meta.transition_truth.iter().copied());
        } else if self.has_phase_labels() {
            for i in 1..self.accesses.len() {
                if self.accesses[i].phase != self.accesses[i - 1].phase {
                    starts.push(i);
                }
            }
        }
        starts
    }
}

pub fn parse_trace(path: &Path, default_meta: &TraceMeta) -> Result<Trace> {
    let reader = BufReader::new(File::open(path)?);
    let mut meta = default_meta.clone();
    let mut accesses = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('#') {
            parse_header(rest.trim(), &mut meta);
            continue;
        }
        let mut fields = trimmed.split(',');
        let pc = parse_hex(fields.next(), lineno, "pc")?;
        let byte_addr = parse_hex(fields.next(), lineno, "byte address")?;
        let phase = match fields.next() {
            None => None,
            Some(p) => Some(p.trim().parse::<u8>().map_err(|_| Error::TraceParse {
                line: lineno,
                msg: format!("invalid phase field {p:?}"),
            })?),
        };
        if fields.next().is_some() {
            return Err(Error::TraceParse {
                line: lineno,
                msg: "too many fields".into(),
            });
        }
        accesses.push(MemoryAccess {
            index: accesses.len() as u64,
            pc,
            block_addr: byte_addr >> meta.block_bits,
            phase,
        });
    }
    if accesses.is_empty() {
        return Err(Error::EmptyTrace(path.display().to_string()));
    }
    Trace::new(meta, accesses)
}

fn parse_header(rest: &str, meta: &mut TraceMeta) {
    let Some((key, value)) = rest.split_once('=') else {
        return;
    };
    match key.trim() {
        "block_bits" => {
            if let Ok(v) = value.trim().parse() {
                meta.block_bits = v;
            }
        }
        "page_bits" => {
            if let Ok(v) = value.trim().parse() {
                meta.page_bits = v;
            }
        }
        "num_phases" => {
            if let Ok(v) = value.trim().parse() {
                meta.num_phases = v;
            }
        }
        "transitions" => {
            meta.transition_truth = value
                .split(';')
                .filter_map(|t| t.trim().parse().ok())
                .collect();
        }
        _ => {}
    }
}

fn parse_hex(field: Option<&str>, lineno: usize, what: &str) -> Result<u64> {
    let field = field.ok_or_else(|| Error::TraceParse {
        line: lineno,
        msg: format!("missing {what} field"),
    })?;
    let field = field.trim();
    let digits = field
        .strip_prefix("0x")
        .or_else(|| field.strip_prefix("0X"))
        .ok_or_else(|| Error::TraceParse {
            line: lineno,
            msg: format!("{what} field {field:?} must start with 0x"),
        })?;
    u64::from_str_radix(digits, 16).map_err(|_| Error::TraceParse {
        line: lineno,
        msg: format!("invalid hex in {what} field {field:?}"),
    })
}

pub fn write_trace(path: &Path, trace: &Trace) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# block_bits={}", trace.meta.block_bits)?;
    writeln!(w, "# page_bits={}", trace.meta.page_bits)?;
    writeln!(w, "# num_phases={}", trace.meta.num_phases)?;
    if !trace.meta.transition_truth.is_empty() {
        let list: Vec<String> = trace
            .meta
            .transition_truth
            .iter()
            .map(|t| t.to_string())
            .collect();
        writeln!(w, "# transitions={}", list.join(";"))?;
    }
    for a in &trace.accesses {
        let byte_addr = a.block_addr << trace.meta.block_bits;
        match a.phase {
            Some(p) => writeln!(w, "0x{:x},0x{:x},{}", a.pc, byte_addr, p)?,
            None => writeln!(w, "0x{:x},0x{:x}", a.pc, byte_addr)?,
        }
    }
    w.flush()?;
    Ok(())
}

/// Configuration of the synthetic scatter-gather workload.
///
/// Each iteration emits a Scatter segment (per-core sequential edge reads
/// interleaved round-robin with jitter, plus scattered writes into far-apart
/// bin pages) followed by a Gather segment (irregular but repeating per-bin
/// reads plus strided vertex-region writes). Every phase draws its PCs from
/// a disjoint pool.
#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub iterations: usize,
    pub scatter_len: usize,
    pub gather_len: usize,
    /// Simulated cores; also the number of bins/partitions.
    pub partitions: usize,
    pub edge_pages_per_core: usize,
    pub bin_pages_per_partition: usize,
    pub vertex_pages_per_core: usize,
    pub pcs_per_phase: usize,
    pub block_bits: u32,
    pub page_bits: u32,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            iterations: 3,
            scatter_len: 2400,
            gather_len: 2400,
            partitions: 4,
            edge_pages_per_core: 8,
            bin_pages_per_partition: 4,
            vertex_pages_per_core: 2,
            pcs_per_phase: 8,
            block_bits: 6,
            page_bits: 12,
        }
    }
}

const NUM_PHASES: usize = 2; // Scatter, Gather
const EDGE_BASE_PAGE: u64 = 0x100;
const VERTEX_BASE_PAGE: u64 = 0x4000;
const BIN_BASE_PAGE: u64 = 0x8000;
const BIN_PAGE_STRIDE: u64 = 64; // wide page jumps between bins
const PC_BASE: u64 = 0x400000;

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(Error::Config("iterations must be >= 1".into()));
        }
        if self.scatter_len == 0 || self.gather_len == 0 {
            return Err(Error::Config("zero-length phase segment".into()));
        }
        if self.partitions < 1 {
            return Err(Error::Config("partitions must be >= 1".into()));
        }
        if self.pcs_per_phase < 3 {
            return Err(Error::Config("pcs_per_phase must be >= 3".into()));
        }
        if self.page_bits <= self.block_bits {
            return Err(Error::Config("page_bits must exceed block_bits".into()));
        }
        Ok(())
    }

    fn blocks_per_page(&self) -> u64 {
        1 << (self.page_bits - self.block_bits)
    }

    fn edge_block(&self, core: usize, e: u64) -> u64 {
        let base = EDGE_BASE_PAGE + (core * self.edge_pages_per_core) as u64;
        (base << (self.page_bits - self.block_bits)) + e
    }

    fn bin_block(&self, bin: usize, slot: u64) -> u64 {
        let base = BIN_BASE_PAGE + bin as u64 * BIN_PAGE_STRIDE;
        (base << (self.page_bits - self.block_bits)) + slot
    }

    fn vertex_block(&self, core: usize, v: u64) -> u64 {
        let base = VERTEX_BASE_PAGE + (core * self.vertex_pages_per_core) as u64;
        (base << (self.page_bits - self.block_bits)) + v
    }
}

/// PC pool for one phase: candidate PCs are scanned in a fixed order and
/// kept when their hash-normalized value falls in the phase's band of
/// [0, 1), so per-phase PC distributions occupy disjoint ranges.
pub fn phase_pc_pool(phase: usize, num_phases: usize, size: usize) -> Vec<u64> {
    let lo = phase as f64 / num_phases as f64;
    let hi = (phase + 1) as f64 / num_phases as f64;
    let mut pool = Vec::with_capacity(size);
    let mut k = 0u64;
    while pool.len() < size {
        let pc = PC_BASE + 16 * k;
        let h = hash_normalize_pc(pc);
        if h >= lo && h < hi {
            pool.push(pc);
        }
        k += 1;
    }
    pool
}

/// Deterministic synthetic trace with ground-truth phase labels.
pub fn generate_synthetic_trace(cfg: &SynthConfig, seed: u64) -> Result<Trace> {
    cfg.validate()?;
    let p = cfg.partitions;
    let bpp = cfg.blocks_per_page();
    let edge_blocks = cfg.edge_pages_per_core as u64 * bpp;
    let bin_blocks = cfg.bin_pages_per_partition as u64 * bpp;
    let vertex_blocks = cfg.vertex_pages_per_core as u64 * bpp;

    let pools: Vec<Vec<u64>> = (0..NUM_PHASES)
        .map(|ph| phase_pc_pool(ph, NUM_PHASES, cfg.pcs_per_phase))
        .collect();

    // Per-bin slot permutation, fixed across iterations, so bin accesses
    // are irregular within a page but repeat every iteration.
    let mut perm_rng = ChaCha8Rng::seed_from_u64(seed);
    perm_rng.set_stream(1);
    let perms: Vec<Vec<u64>> = (0..p)
        .map(|_| {
            let mut slots: Vec<u64> = (0..bin_blocks).collect();
            for i in (1..slots.len()).rev() {
                let j = perm_rng.random_range(0..=i);
                slots.swap(i, j);
            }
            slots
        })
        .collect();

    let mut accesses = Vec::with_capacity(cfg.iterations * (cfg.scatter_len + cfg.gather_len));
    let mut transition_truth = Vec::new();
    for it in 0..cfg.iterations {
        for phase in 0..NUM_PHASES {
            if !(it == 0 && phase == 0) {
                transition_truth.push(accesses.len());
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(100 + (it * NUM_PHASES + phase) as u64);
            let seg_len = if phase == 0 {
                cfg.scatter_len
            } else {
                cfg.gather_len
            };
            emit_segment(
                cfg,
                phase,
                seg_len,
                &pools[phase],
                &perms,
                edge_blocks,
                bin_blocks,
                vertex_blocks,
                &mut rng,
                &mut accesses,
            );
        }
    }
    let meta = TraceMeta {
        block_bits: cfg.block_bits,
        page_bits: cfg.page_bits,
        num_phases: NUM_PHASES,
        transition_truth,
    };
    Trace::new(meta, accesses)
}

#[allow(clippy::too_many_arguments)]
fn emit_segment(
    cfg: &SynthConfig,
    phase: usize,
    seg_len: usize,
    pool: &[u64],
    perms: &[Vec<u64>],
    edge_blocks: u64,
    bin_blocks: u64,
    vertex_blocks: u64,
    rng: &mut ChaCha8Rng,
    accesses: &mut Vec<MemoryAccess>,
) {
    let p = cfg.partitions;
    let mut seq_ptr = vec![0u64; p]; // edge read (scatter) or bin read (gather)
    let mut alt_ptr = vec![0u64; p]; // bin write (scatter) or vertex write (gather)
    let mut count = 0usize;
    let mut round = 0usize;
    while count < seg_len {
        // Round-robin core order with one jittered swap per round.
        let mut order: Vec<usize> = (0..p).collect();
        if p > 1 {
            let a = rng.random_range(0..p);
            let b = rng.random_range(0..p);
            order.swap(a, b);
        }
        let write_round = round % 4 == 3;
        for &core in &order {
            if count >= seg_len {
                break;
            }
            let block = if phase == 0 {
                if write_round {
                    let bin = (core + round / 4) % p;
                    let slot = perms[bin][(alt_ptr[bin] % bin_blocks) as usize];
                    alt_ptr[bin] += 1;
                    cfg.bin_block(bin, slot)
                } else {
                    let e = seq_ptr[core] % edge_blocks;
                    seq_ptr[core] += 1;
                    cfg.edge_block(core, e)
                }
            } else if write_round {
                let v = (alt_ptr[core] * 2) % vertex_blocks;
                alt_ptr[core] += 1;
                cfg.vertex_block(core, v)
            } else {
                let slot = perms[core][(seq_ptr[core] % bin_blocks) as usize];
                seq_ptr[core] += 1;
                cfg.bin_block(core, slot)
            };
            let mut pc = if write_round { pool[1] } else { pool[0] };
            if count % 16 == 7 {
                pc = pool[2 + (count / 16) % (pool.len() - 2)];
            }
            accesses.push(MemoryAccess {
                index: accesses.len() as u64,
                pc,
                block_addr: block,
                phase: Some(phase as u8),
            });
            count += 1;
        }
        round += 1;
    }
}

/// Splits a multi-iteration trace into a training part (the first
/// `num_phases` segments, i.e. the first iteration) and an evaluation part
/// (everything after).
pub fn split_first_iteration(trace: &Trace) -> Result<(Trace, Trace)> {
    let starts = trace.segment_starts();
    let n = trace.meta.num_phases;
    if starts.len() < n + 1 {
        return Err(Error::Config(format!(
            "need at least {} phase segments to split, found {}",
            n + 1,
            starts.len()
        )));
    }
    let cut = starts[n];
    let mut train_meta = trace.meta.clone();
    train_meta.transition_truth = starts[1..n].to_vec();
    let mut eval_meta = trace.meta.clone();
    eval_meta.transition_truth = starts[n + 1..].iter().map(|s| s - cut).collect();

    let reindex = |slice: &[MemoryAccess]| {
        slice
            .iter()
            .enumerate()
            .map(|(i, a)| MemoryAccess {
                index: i as u64,
                ..*a
            })
            .collect::<Vec<_>>()
    };
    let train = Trace::new(train_meta, reindex(&trace.accesses[..cut]))?;
    let eval = Trace::new(eval_meta, reindex(&trace.accesses[cut..]))?;
    Ok((train, eval))
}
