use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

use super::{Detection, DetectorKind};

/// Two-sample Kolmogorov-Smirnov statistic: `sup_x |F_a(x) − F_b(x)|`,
/// computed exactly by a merged-sort sweep over both samples.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Detector("K-S statistic needs nonempty samples".into()));
    }
    let mut sa: Vec<f64> = a.to_vec();
    let mut sb: Vec<f64> = b.to_vec();
    sa.sort_by(|x, y| x.partial_cmp(y).expect("finite samples"));
    sb.sort_by(|x, y| x.partial_cmp(y).expect("finite samples"));
    let (na, nb) = (sa.len() as f64, sb.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < sa.len() && j < sb.len() {
        let x = sa[i].min(sb[j]);
        while i < sa.len() && sa[i] <= x {
            i += 1;
        }
        while j < sb.len() && sb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d.min(1.0))
}

/// Drift threshold `sqrt(−ln(α/2)·(1 + r/h)/(2r))`. With h = r this reduces
/// to `sqrt(−ln(α/2)/r)`.
pub fn kswin_threshold(alpha: f64, r: usize, h: usize) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Detector(format!("alpha must be in (0,1), got {alpha}")));
    }
    if r < 1 || h < 1 {
        return Err(Error::Detector("window sizes must be >= 1".into()));
    }
    Ok((-(alpha / 2.0).ln() * (1.0 + r as f64 / h as f64) / (2.0 * r as f64)).sqrt())
}

#[derive(Debug, Clone)]
pub struct KswinConfig {
    /// Sliding-window capacity.
    pub w: usize,
    /// Recent-window size.
    pub r: usize,
    /// History-sample size.
    pub h: usize,
    /// Significance level.
    pub alpha: f64,
    /// Soft ratio threshold (Soft-KSWIN only).
    pub th_r: f64,
    pub rng_seed: u64,
}

impl Default for KswinConfig {
    fn default() -> Self {
        Self {
            w: 300,
            r: 30,
            h: 30,
            alpha: 0.005,
            th_r: 0.5,
            rng_seed: 0x5eed,
        }
    }
}

impl KswinConfig {
    fn validate(&self) -> Result<f64> {
        if self.r + self.h > self.w {
            return Err(Error::Detector("r + h must not exceed w".into()));
        }
        if !(self.th_r > 0.0 && self.th_r <= 1.0) {
            return Err(Error::Detector("th_r must be in (0,1]".into()));
        }
        kswin_threshold(self.alpha, self.r, self.h)
    }
}

/// Hard KSWIN: fires as soon as the K-S statistic between a sampled history
/// window and the recent window exceeds the threshold, then resets.
pub struct Kswin {
    cfg: KswinConfig,
    threshold: f64,
    psi: VecDeque<f64>,
    rng: ChaCha8Rng,
    samples_seen: usize,
}

impl Kswin {
    pub fn new(cfg: KswinConfig) -> Result<Self> {
        let threshold = cfg.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
        Ok(Self {
            cfg,
            threshold,
            psi: VecDeque::new(),
            rng,
            samples_seen: 0,
        })
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn update(&mut self, x: f64) -> Option<Detection> {
        self.samples_seen += 1;
        self.psi.push_back(x);
        if self.psi.len() > self.cfg.w {
            self.psi.pop_front();
        }
        if self.psi.len() < self.cfg.w {
            return None;
        }
        let d = sampled_statistic(&self.psi, self.cfg.w - self.cfg.r, self.cfg.r, self.cfg.h, &mut self.rng);
        if d > self.threshold {
            self.psi.clear();
            return Some(Detection {
                index: self.samples_seen - 1,
                kind: DetectorKind::Kswin,
            });
        }
        None
    }
}

/// Soft KSWIN: a counter starts at the first exceedance; the history window
/// is drawn only from the prefix not yet polluted by the new pattern, and a
/// transition is declared only if the exceedance ratio stays above `th_r`
/// for a full recent-window span.
pub struct SoftKswin {
    cfg: KswinConfig,
    threshold: f64,
    psi: VecDeque<f64>,
    rng: ChaCha8Rng,
    samples_seen: usize,
    counter: usize,
    detections: usize,
    /// Set when the history pool had to be clamped below `h` samples.
    pub clamped: bool,
}

impl SoftKswin {
    pub fn new(cfg: KswinConfig) -> Result<Self> {
        let threshold = cfg.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
        Ok(Self {
            cfg,
            threshold,
            psi: VecDeque::new(),
            rng,
            samples_seen: 0,
            counter: 0,
            detections: 0,
            clamped: false,
        })
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn counter(&self) -> usize {
        self.counter
    }

    pub fn update(&mut self, x: f64) -> Option<Detection> {
        self.samples_seen += 1;
        self.psi.push_back(x);
        if self.psi.len() > self.cfg.w {
            self.psi.pop_front();
        }
        if self.psi.len() < self.cfg.w {
            return None;
        }
        // History pool excludes the newest r points and the `counter` points
        // that arrived since the episode started.
        let mut pool_len = (self.cfg.w - self.cfg.r).saturating_sub(self.counter);
        if pool_len < self.cfg.h {
            self.clamped = true;
            pool_len = pool_len.max(1);
        }
        let d = sampled_statistic(&self.psi, pool_len, self.cfg.r, self.cfg.h, &mut self.rng);
        let exceeded = d > self.threshold;
        if self.counter > 0 {
            self.counter += 1;
        }
        if exceeded {
            self.detections += 1;
            if self.counter == 0 {
                self.counter = 1;
            }
        }
        if self.counter >= self.cfg.r {
            let fired = self.detections as f64 / self.counter as f64 > self.cfg.th_r;
            self.counter = 0;
            self.detections = 0;
            if fired {
                self.psi.clear();
                return Some(Detection {
                    index: self.samples_seen - 1,
                    kind: DetectorKind::SoftKswin,
                });
            }
        }
        None
    }
}

/// Recent window = the `r` newest points; history = `h` uniform samples
/// (seeded) from the oldest `pool_len` points.
fn sampled_statistic(
    psi: &VecDeque<f64>,
    pool_len: usize,
    r: usize,
    h: usize,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let w = psi.len();
    let recent: Vec<f64> = psi.iter().skip(w - r).copied().collect();
    let history: Vec<f64> = (0..h)
        .map(|_| psi[rng.random_range(0..pool_len)])
        .collect();
    ks_statistic(&history, &recent).expect("windows are nonempty")
}
