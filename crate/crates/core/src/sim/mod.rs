//! Trace-driven evaluation: the prefetcher interface, distance prefetching,
//! metric accounting, and report serialization.

mod cache;
mod latency;

pub use cache::{CacheConfig, CacheModel};
pub use latency::{estimate_latency, LatencyConfig};

use std::collections::{HashMap, VecDeque};

use crate::baseline::{BestOffset, Isb};
use crate::cstp::CstpController;
use crate::detect::{
    evaluate_detections, Detection, DetectionScores, DtDetector, Kswin, SoftDtDetector, SoftKswin,
};
use crate::predictor::hash_normalize_pc;
use crate::trace::Trace;
use crate::{Error, Result};

/// A prefetcher consumes the demand stream one access at a time and emits
/// block addresses to fetch.
pub trait Prefetcher {
    fn name(&self) -> String;
    fn on_access(&mut self, trace: &Trace, idx: usize) -> Vec<u64>;
    /// Detection stream and lag window, when an online detector ran.
    fn detector_results(&self) -> Option<(&[Detection], usize)> {
        None
    }
}

/// Issues nothing; the pure-cache reference.
pub struct NonePrefetcher;

impl Prefetcher for NonePrefetcher {
    fn name(&self) -> String {
        "none".into()
    }

    fn on_access(&mut self, _trace: &Trace, _idx: usize) -> Vec<u64> {
        Vec::new()
    }
}

/// Upper bound: peeks at the next future accesses.
pub struct OraclePrefetcher {
    pub degree: usize,
}

impl Prefetcher for OraclePrefetcher {
    fn name(&self) -> String {
        "oracle".into()
    }

    fn on_access(&mut self, trace: &Trace, idx: usize) -> Vec<u64> {
        let current = trace.accesses[idx].block_addr;
        let mut out = Vec::with_capacity(self.degree);
        for a in trace.accesses.iter().skip(idx + 1) {
            if out.len() == self.degree {
                break;
            }
            if a.block_addr != current && !out.contains(&a.block_addr) {
                out.push(a.block_addr);
            }
        }
        out
    }
}

pub struct BoPrefetcher(pub BestOffset);

impl Prefetcher for BoPrefetcher {
    fn name(&self) -> String {
        "bo".into()
    }

    fn on_access(&mut self, trace: &Trace, idx: usize) -> Vec<u64> {
        self.0.access(trace.accesses[idx].block_addr, &trace.meta)
    }
}

pub struct IsbPrefetcher(pub Isb);

impl Prefetcher for IsbPrefetcher {
    fn name(&self) -> String {
        "isb".into()
    }

    fn on_access(&mut self, trace: &Trace, idx: usize) -> Vec<u64> {
        let a = &trace.accesses[idx];
        self.0.access(a.block_addr, a.pc)
    }
}

/// Which online detector (if any) drives controller transitions.
pub enum LoopDetector {
    /// No detector: switch on ground-truth labels (upper-bound mode).
    TrueLabels,
    Kswin(Kswin),
    SoftKswin(SoftKswin),
    Dt { det: DtDetector, window: VecDeque<f64>, t_len: usize },
    SoftDt { det: SoftDtDetector, window: VecDeque<f64>, t_len: usize },
}

/// The learned controller wired to an optional online detector.
pub struct CstpPrefetcher {
    pub controller: CstpController,
    pub detector: LoopDetector,
    pub detections: Vec<Detection>,
    /// Lag window used when scoring the detections.
    pub lag_window: usize,
    last_label: Option<u8>,
}

impl CstpPrefetcher {
    pub fn new(controller: CstpController, detector: LoopDetector, lag_window: usize) -> Self {
        Self {
            controller,
            detector,
            detections: Vec::new(),
            lag_window,
            last_label: None,
        }
    }
}

impl Prefetcher for CstpPrefetcher {
    fn name(&self) -> String {
        "cstp".into()
    }

    fn on_access(&mut self, trace: &Trace, idx: usize) -> Vec<u64> {
        let a = &trace.accesses[idx];
        let monitor_len = self.controller.cfg.monitor_len;
        let mut fired: Option<Detection> = None;
        match &mut self.detector {
            LoopDetector::TrueLabels => {
                if let Some(label) = a.phase {
                    if self.last_label != Some(label) {
                        self.controller.set_active_phase(label as usize);
                    }
                    self.last_label = Some(label);
                }
            }
            LoopDetector::Kswin(d) => fired = d.update(hash_normalize_pc(a.pc)),
            LoopDetector::SoftKswin(d) => fired = d.update(hash_normalize_pc(a.pc)),
            LoopDetector::Dt { det, window, t_len } => {
                window.push_back(hash_normalize_pc(a.pc));
                if window.len() > *t_len {
                    window.pop_front();
                }
                if window.len() == *t_len {
                    let feats: Vec<f64> = window.iter().copied().collect();
                    fired = det.update(&feats);
                }
            }
            LoopDetector::SoftDt { det, window, t_len } => {
                window.push_back(hash_normalize_pc(a.pc));
                if window.len() > *t_len {
                    window.pop_front();
                }
                if window.len() == *t_len {
                    let feats: Vec<f64> = window.iter().copied().collect();
                    fired = det.update(&feats);
                }
            }
        }
        if let Some(mut det) = fired {
            det.index = idx; // detector-local ordinals -> trace ordinals
            self.detections.push(det);
            let _ = self.controller.on_transition(monitor_len);
        }
        self.controller.on_access(trace, idx)
    }

    fn detector_results(&self) -> Option<(&[Detection], usize)> {
        match self.detector {
            LoopDetector::TrueLabels => None,
            _ => Some((&self.detections, self.lag_window)),
        }
    }
}

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseStats {
    pub phase: u8,
    pub demand: u64,
    pub misses: u64,
    pub useful: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub schema_version: u32,
    pub prefetcher: String,
    pub distance: usize,
    pub demand_accesses: u64,
    pub demand_hits: u64,
    pub demand_misses: u64,
    pub prefetches_issued: u64,
    pub prefetches_useful: u64,
    pub late_or_evicted: u64,
    /// useful / issued.
    pub accuracy: f64,
    /// useful / (useful + residual demand misses).
    pub coverage: f64,
    pub per_phase: Vec<PhaseStats>,
    pub detector: Option<DetectionScores>,
}

/// Replays a trace against a prefetcher. Requests issued at access i are
/// applied to the cache after `distance` further demand accesses (0 =
/// available from the next access on), modeling inference latency.
pub fn simulate(
    trace: &Trace,
    prefetcher: &mut dyn Prefetcher,
    cache_cfg: &CacheConfig,
    distance: usize,
) -> Result<SimReport> {
    if trace.is_empty() {
        return Err(Error::EmptyTrace("simulation input".into()));
    }
    let mut cache = CacheModel::new(cache_cfg)?;
    let mut queue: VecDeque<(usize, u64, bool)> = VecDeque::new(); // (due, block, late)
    let mut pending: HashMap<u64, u32> = HashMap::new();

    let mut hits = 0u64;
    let mut misses = 0u64;
    let mut issued = 0u64;
    let mut useful = 0u64;
    let mut late = 0u64;
    let mut phase_stats: HashMap<u8, PhaseStats> = HashMap::new();

    for i in 0..trace.len() {
        let a = &trace.accesses[i];
        let (hit, newly_useful) = cache.demand_access(a.block_addr);
        if hit {
            hits += 1;
        } else {
            misses += 1;
            // Any in-flight request for this block arrived too late.
            if pending.get(&a.block_addr).copied().unwrap_or(0) > 0 {
                for entry in queue.iter_mut() {
                    if entry.1 == a.block_addr {
                        entry.2 = true;
                    }
                }
            }
        }
        if newly_useful {
            useful += 1;
        }
        if let Some(p) = a.phase {
            let s = phase_stats.entry(p).or_insert(PhaseStats {
                phase: p,
                demand: 0,
                misses: 0,
                useful: 0,
            });
            s.demand += 1;
            s.misses += (!hit) as u64;
            s.useful += newly_useful as u64;
        }

        for block in prefetcher.on_access(trace, i) {
            queue.push_back((i + distance, block, false));
            *pending.entry(block).or_insert(0) += 1;
        }

        while queue.front().is_some_and(|&(due, _, _)| due <= i) {
            let (_, block, was_late) = queue.pop_front().expect("checked nonempty");
            if let Some(c) = pending.get_mut(&block) {
                *c -= 1;
                if *c == 0 {
                    pending.remove(&block);
                }
            }
            if cache.prefetch_fill(block) {
                issued += 1;
            } else if was_late {
                // The demand already missed on it: a non-useful issue.
                issued += 1;
                late += 1;
            }
            // Otherwise: resident for another reason; a silent no-op.
        }
    }

    let late_or_evicted = late + cache.evicted_unused_prefetches;
    let mut per_phase: Vec<PhaseStats> = phase_stats.into_values().collect();
    per_phase.sort_by_key(|s| s.phase);
    let detector = prefetcher
        .detector_results()
        .map(|(dets, lag)| evaluate_detections(dets, &trace.meta.transition_truth, lag));
    Ok(SimReport {
        schema_version: REPORT_SCHEMA_VERSION,
        prefetcher: prefetcher.name(),
        distance,
        demand_accesses: trace.len() as u64,
        demand_hits: hits,
        demand_misses: misses,
        prefetches_issued: issued,
        prefetches_useful: useful,
        late_or_evicted,
        accuracy: if issued == 0 { 0.0 } else { useful as f64 / issued as f64 },
        coverage: if useful + misses == 0 {
            0.0
        } else {
            useful as f64 / (useful + misses) as f64
        },
        per_phase,
        detector,
    })
}

impl SimReport {
    /// Structured key=value text, one field per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            s.push_str(k);
            s.push('=');
            s.push_str(&v);
            s.push('\n');
        };
        kv("schema_version", self.schema_version.to_string());
        kv("prefetcher", self.prefetcher.clone());
        kv("distance", self.distance.to_string());
        kv("demand_accesses", self.demand_accesses.to_string());
        kv("demand_hits", self.demand_hits.to_string());
        kv("demand_misses", self.demand_misses.to_string());
        kv("prefetches_issued", self.prefetches_issued.to_string());
        kv("prefetches_useful", self.prefetches_useful.to_string());
        kv("late_or_evicted", self.late_or_evicted.to_string());
        // Default float formatting is the shortest exact representation, so
        // from_text(to_text(r)) reproduces r bit-for-bit.
        kv("accuracy", self.accuracy.to_string());
        kv("coverage", self.coverage.to_string());
        for p in &self.per_phase {
            kv(&format!("phase{}.demand", p.phase), p.demand.to_string());
            kv(&format!("phase{}.misses", p.phase), p.misses.to_string());
            kv(&format!("phase{}.useful", p.phase), p.useful.to_string());
        }
        if let Some(d) = &self.detector {
            kv("detector.precision", d.precision.to_string());
            kv("detector.recall", d.recall.to_string());
            kv("detector.f1", d.f1.to_string());
            kv("detector.true_positives", d.true_positives.to_string());
            kv("detector.detected", d.detected.to_string());
            kv("detector.truth", d.truth.to_string());
            kv("detector.undefined", d.undefined.to_string());
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut map: HashMap<&str, &str> = HashMap::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Report(format!("bad report line {line:?}")))?;
            map.insert(k, v);
        }
        let get = |k: &str| map.get(k).copied().ok_or_else(|| Error::Report(format!("missing key {k}")));
        let pu64 = |k: &str| -> Result<u64> {
            get(k)?.parse().map_err(|_| Error::Report(format!("bad number for {k}")))
        };
        let pf64 = |k: &str| -> Result<f64> {
            get(k)?.parse().map_err(|_| Error::Report(format!("bad number for {k}")))
        };
        let schema_version = pu64("schema_version")? as u32;
        if schema_version != REPORT_SCHEMA_VERSION {
            return Err(Error::Report(format!(
                "schema version {schema_version} (expected {REPORT_SCHEMA_VERSION})"
            )));
        }
        let mut per_phase = Vec::new();
        for phase in 0u8..=255 {
            let key = format!("phase{phase}.demand");
            if !map.contains_key(key.as_str()) {
                break;
            }
            per_phase.push(PhaseStats {
                phase,
                demand: pu64(&key)?,
                misses: pu64(&format!("phase{phase}.misses"))?,
                useful: pu64(&format!("phase{phase}.useful"))?,
            });
        }
        let detector = if map.contains_key("detector.precision") {
            Some(DetectionScores {
                true_positives: pu64("detector.true_positives")? as usize,
                detected: pu64("detector.detected")? as usize,
                truth: pu64("detector.truth")? as usize,
                precision: pf64("detector.precision")?,
                recall: pf64("detector.recall")?,
                f1: pf64("detector.f1")?,
                undefined: get("detector.undefined")? == "true",
            })
        } else {
            None
        };
        Ok(SimReport {
            schema_version,
            prefetcher: get("prefetcher")?.to_string(),
            distance: pu64("distance")? as usize,
            demand_accesses: pu64("demand_accesses")?,
            demand_hits: pu64("demand_hits")?,
            demand_misses: pu64("demand_misses")?,
            prefetches_issued: pu64("prefetches_issued")?,
            prefetches_useful: pu64("prefetches_useful")?,
            late_or_evicted: pu64("late_or_evicted")?,
            accuracy: pf64("accuracy")?,
            coverage: pf64("coverage")?,
            per_phase,
            detector,
        })
    }

    pub fn csv_header() -> &'static str {
        "prefetcher,distance,demand_accesses,demand_hits,demand_misses,prefetches_issued,\
         prefetches_useful,late_or_evicted,accuracy,coverage,detector_precision,detector_recall,\
         detector_f1"
    }

    pub fn to_csv_row(&self) -> String {
        let (dp, dr, df) = self
            .detector
            .map(|d| (format!("{:.6}", d.precision), format!("{:.6}", d.recall), format!("{:.6}", d.f1)))
            .unwrap_or_else(|| ("".into(), "".into(), "".into()));
        format!(
            "{},{},{},{},{},{},{},{},{:.6},{:.6},{},{},{}",
            self.prefetcher,
            self.distance,
            self.demand_accesses,
            self.demand_hits,
            self.demand_misses,
            self.prefetches_issued,
            self.prefetches_useful,
            self.late_or_evicted,
            self.accuracy,
            self.coverage,
            dp,
            dr,
            df
        )
    }
}
