//! Chain spatio-temporal prefetch generation: the page base offset table,
//! degree bounds, chained request expansion, and phase-switch monitoring.

use std::collections::{BTreeMap, HashMap};

use crate::predictor::{delta_predict, page_predict, AmmaModel, ModelInput, PageVocab, WindowInput};
use crate::trace::{Trace, TraceMeta};
use crate::{Error, Result, Tensor};

/// Total prefetch degree envelope: (D_s + 1, D_s·(D_t + 1)).
pub fn degree_bounds(d_s: usize, d_t: usize) -> Result<(usize, usize)> {
    if d_s < 1 || d_t < 1 {
        return Err(Error::Config("degrees must be >= 1".into()));
    }
    Ok((d_s + 1, d_s * (d_t + 1)))
}

/// Latest (offset, pc) seen for a page.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PbotEntry {
    pub last_offset: u64,
    pub last_pc: u64,
}

/// Page base offset table: bounded page → entry map with LRU eviction.
#[derive(Debug, Clone)]
pub struct Pbot {
    capacity: usize,
    entries: HashMap<u64, (PbotEntry, u64)>,
    lru: BTreeMap<u64, u64>,
    stamp: u64,
    pub evictions: u64,
}

impl Pbot {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "PBOT capacity must be >= 1");
        Self {
            capacity,
            entries: HashMap::new(),
            lru: BTreeMap::new(),
            stamp: 0,
            evictions: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, page: u64) -> Option<&PbotEntry> {
        self.entries.get(&page).map(|(e, _)| e)
    }

    /// Upserts the entry for a page and refreshes its LRU position.
    pub fn update(&mut self, page: u64, offset: u64, pc: u64) {
        self.stamp += 1;
        if let Some((e, old)) = self.entries.get_mut(&page) {
            e.last_offset = offset;
            e.last_pc = pc;
            let old = *old;
            self.lru.remove(&old);
            self.lru.insert(self.stamp, page);
            self.entries.get_mut(&page).unwrap().1 = self.stamp;
            return;
        }
        if self.entries.len() == self.capacity {
            let (&oldest, &victim) = self.lru.iter().next().expect("nonempty at capacity");
            self.lru.remove(&oldest);
            self.entries.remove(&victim);
            self.evictions += 1;
        }
        self.entries.insert(
            page,
            (
                PbotEntry {
                    last_offset: offset,
                    last_pc: pc,
                },
                self.stamp,
            ),
        );
        self.lru.insert(self.stamp, page);
    }
}

/// One context item fed to the chain predictors: a (block, pc) pair, real
/// or synthesized from a PBOT entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CtxItem {
    pub block: u64,
    pub pc: u64,
}

/// The model interface the chain walker needs: ranked in-page deltas and
/// the next predicted page (None = unknown token).
pub trait ChainPredictor {
    fn top_deltas(&self, ctx: &[CtxItem], d_s: usize) -> Vec<i64>;
    fn next_page(&self, ctx: &[CtxItem]) -> Option<u64>;
}

/// A trained delta/page model pair behind the [`ChainPredictor`] interface.
pub struct ModelPairPredictor<'a> {
    pub delta: &'a AmmaModel,
    pub page: &'a AmmaModel,
    pub vocab: &'a PageVocab,
    pub meta: &'a TraceMeta,
}

impl ModelPairPredictor<'_> {
    fn input_for(&self, model: &AmmaModel, ctx: &[CtxItem]) -> ModelInput {
        let pcs = ctx
            .iter()
            .map(|c| crate::predictor::hash_normalize_pc(c.pc))
            .collect();
        let addr = match model.head_kind {
            crate::predictor::HeadKind::DeltaSigmoid { .. } => {
                let rows: Vec<Vec<f64>> = ctx
                    .iter()
                    .map(|c| {
                        crate::predictor::segment_address(
                            c.block,
                            model.cfg.segment_bits,
                            model.cfg.num_segments,
                        )
                    })
                    .collect();
                WindowInput::Segments(Tensor::from_rows(&rows))
            }
            _ => WindowInput::Tokens(
                ctx.iter()
                    .map(|c| self.vocab.token(self.meta.page_of(c.block)))
                    .collect(),
            ),
        };
        ModelInput { addr, pcs }
    }
}

impl ChainPredictor for ModelPairPredictor<'_> {
    fn top_deltas(&self, ctx: &[CtxItem], d_s: usize) -> Vec<i64> {
        let input = self.input_for(self.delta, ctx);
        delta_predict(self.delta, &input)
            .into_iter()
            .take(d_s)
            .map(|(d, _)| d)
            .collect()
    }

    fn next_page(&self, ctx: &[CtxItem]) -> Option<u64> {
        let input = self.input_for(self.page, ctx);
        let (token, _) = page_predict(self.page, &input, self.vocab.len());
        self.vocab.page(token)
    }
}

/// One chained spatio-temporal expansion. `window` is the last T real
/// accesses, newest last. Returns deduplicated block addresses, never
/// including the demand block, capped at D_s·(D_t+1).
pub fn cstp_step(
    pred: &dyn ChainPredictor,
    window: &[CtxItem],
    meta: &TraceMeta,
    pbot: &Pbot,
    d_s: usize,
    d_t: usize,
) -> Vec<u64> {
    let bpp = meta.blocks_per_page() as i64;
    let demand = window.last().expect("window must be full").block;
    let cap = d_s * (d_t + 1);
    let mut requests: Vec<u64> = Vec::with_capacity(cap);
    let push_deltas = |requests: &mut Vec<u64>, anchor: u64, deltas: &[i64]| {
        let page = meta.page_of(anchor);
        let offset = meta.offset_of(anchor) as i64;
        for &d in deltas {
            let off = offset + d;
            if off < 0 || off >= bpp {
                continue; // out-of-page sums are discarded
            }
            let block = meta.block_of(page, off as u64);
            if block != demand && !requests.contains(&block) {
                requests.push(block);
            }
        }
    };

    // Spatial expansion on the demand page.
    let deltas = pred.top_deltas(window, d_s);
    push_deltas(&mut requests, demand, &deltas);

    // Temporal chain through PBOT-synthesized contexts.
    let mut ctx: Vec<CtxItem> = window.to_vec();
    for _hop in 0..d_t {
        let Some(page) = pred.next_page(&ctx) else {
            break; // unknown token terminates the chain
        };
        let Some(entry) = pbot.get(page) else {
            break; // page offset missing in PBOT
        };
        let pseudo = CtxItem {
            block: meta.block_of(page, entry.last_offset),
            pc: entry.last_pc,
        };
        ctx.remove(0);
        ctx.push(pseudo);
        let deltas = pred.top_deltas(&ctx, d_s);
        push_deltas(&mut requests, pseudo.block, &deltas);
    }
    requests.truncate(cap);
    requests
}

#[derive(Debug, Clone)]
pub struct CstpConfig {
    pub d_s: usize,
    pub d_t: usize,
    pub pbot_capacity: usize,
    pub monitor_len: usize,
}

impl Default for CstpConfig {
    fn default() -> Self {
        Self {
            d_s: 2,
            d_t: 2,
            pbot_capacity: 4096,
            monitor_len: 1000,
        }
    }
}

struct Monitoring {
    remaining: usize,
    scores: Vec<u64>,
}

/// The prefetching controller: active-phase bookkeeping, PBOT maintenance,
/// chain expansion per access, and post-transition monitoring.
pub struct CstpController {
    pub cfg: CstpConfig,
    pub models: crate::predictor::PhaseModelSet,
    pub active_phase: usize,
    pub pbot: Pbot,
    monitoring: Option<Monitoring>,
    /// Completed monitoring episodes (diagnostics).
    pub monitor_episodes: u64,
}

impl CstpController {
    pub fn new(models: crate::predictor::PhaseModelSet, cfg: CstpConfig) -> Result<Self> {
        degree_bounds(cfg.d_s, cfg.d_t)?;
        if models.pairs.is_empty() {
            return Err(Error::Config("controller needs at least one model pair".into()));
        }
        let pbot = Pbot::new(cfg.pbot_capacity);
        Ok(Self {
            cfg,
            models,
            active_phase: 0,
            pbot,
            monitoring: None,
            monitor_episodes: 0,
        })
    }

    fn predictor_for<'a>(&'a self, phase: usize, meta: &'a TraceMeta) -> ModelPairPredictor<'a> {
        let pair = &self.models.pairs[phase];
        ModelPairPredictor {
            delta: &pair.delta,
            page: &pair.page,
            vocab: &self.models.vocab,
            meta,
        }
    }

    /// Starts a monitoring episode in which every phase's delta model is
    /// scored for `monitor_len` accesses before the best one is activated.
    pub fn on_transition(&mut self, monitor_len: usize) -> Result<()> {
        if monitor_len == 0 {
            return Err(Error::Config("monitoring must observe at least 1 access".into()));
        }
        self.monitoring = Some(Monitoring {
            remaining: monitor_len,
            scores: vec![0; self.models.pairs.len()],
        });
        Ok(())
    }

    /// Forces the active phase (label-driven upper-bound mode).
    pub fn set_active_phase(&mut self, phase: usize) {
        if phase < self.models.pairs.len() {
            self.active_phase = phase;
            self.monitoring = None;
        }
    }

    /// Processes one demand access and returns the prefetch block addresses
    /// generated from the window ending at it.
    pub fn on_access(&mut self, trace: &Trace, t: usize) -> Vec<u64> {
        let meta = &trace.meta;
        let t_len = self.models.pairs[self.active_phase].delta.cfg.history_t;

        // Monitoring: score each phase on whether it would have predicted
        // the realized same-page delta from the previous window.
        if self.monitoring.is_some() && t >= t_len {
            let prev = trace.accesses[t - 1].block_addr;
            let cur = trace.accesses[t].block_addr;
            if meta.page_of(prev) == meta.page_of(cur) && prev != cur {
                let realized = cur as i64 - prev as i64;
                let window = ctx_window(trace, t - 1, t_len);
                let mut hits = vec![false; self.models.pairs.len()];
                for (phase, hit) in hits.iter_mut().enumerate() {
                    let pred = self.predictor_for(phase, meta);
                    *hit = pred.top_deltas(&window, self.cfg.d_s).contains(&realized);
                }
                let mon = self.monitoring.as_mut().expect("checked above");
                for (s, h) in mon.scores.iter_mut().zip(hits) {
                    *s += h as u64;
                }
            }
            let mon = self.monitoring.as_mut().expect("checked above");
            mon.remaining -= 1;
            if mon.remaining == 0 {
                let best = mon.scores.iter().max().copied().unwrap_or(0);
                let winner = if mon.scores[self.active_phase] == best {
                    self.active_phase // ties keep the previous phase
                } else {
                    mon.scores
                        .iter()
                        .position(|&s| s == best)
                        .unwrap_or(self.active_phase)
                };
                self.active_phase = winner;
                self.monitoring = None;
                self.monitor_episodes += 1;
            }
        }

        let requests = if t + 1 >= t_len {
            let window = ctx_window(trace, t, t_len);
            let pred = self.predictor_for(self.active_phase, meta);
            cstp_step(&pred, &window, meta, &self.pbot, self.cfg.d_s, self.cfg.d_t)
        } else {
            Vec::new()
        };

        let a = &trace.accesses[t];
        self.pbot
            .update(meta.page_of(a.block_addr), meta.offset_of(a.block_addr), a.pc);
        requests
    }
}

/// The last `t_len` real accesses ending at `t` as context items.
pub fn ctx_window(trace: &Trace, t: usize, t_len: usize) -> Vec<CtxItem> {
    trace.accesses[t + 1 - t_len..=t]
        .iter()
        .map(|a| CtxItem {
            block: a.block_addr,
            pc: a.pc,
        })
        .collect()
}
