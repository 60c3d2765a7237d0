//! Structured run configuration: one TOML file with sections for every
//! subsystem, a mandatory global seed, and converters into the domain
//! config structs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baseline::{BoConfig, IsbConfig};
use crate::cstp::CstpConfig;
use crate::detect::KswinConfig;
use crate::predictor::{AmmaConfig, TrainHyper};
use crate::sim::CacheConfig;
use crate::trace::SynthConfig;
use crate::{Error, Result};

/// Environment variable overriding the output root directory.
pub const OUTPUT_ROOT_ENV: &str = "FETCHLAB_OUT";

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Global seed; every subsystem derives its own sub-seed from it.
    pub seed: u64,
    #[serde(default)]
    pub synth: SynthSection,
    #[serde(default)]
    pub detector: DetectorSection,
    #[serde(default)]
    pub predictor: PredictorSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub cstp: CstpSection,
    #[serde(default)]
    pub bo: BoSection,
    #[serde(default)]
    pub isb: IsbSection,
    #[serde(default)]
    pub cache: CacheSection,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub paths: PathsSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            synth: SynthSection::default(),
            detector: DetectorSection::default(),
            predictor: PredictorSection::default(),
            train: TrainSection::default(),
            cstp: CstpSection::default(),
            bo: BoSection::default(),
            isb: IsbSection::default(),
            cache: CacheSection::default(),
            sim: SimSection::default(),
            paths: PathsSection::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("config parse error: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Output root: the env override when set, else the configured path.
    pub fn output_root(&self) -> PathBuf {
        std::env::var_os(OUTPUT_ROOT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| self.paths.out_dir.clone())
    }
}

macro_rules! section {
    ($name:ident { $($(#[$attr:meta])* $field:ident : $ty:ty),+ $(,)? } from $src:ty { $($sfield:ident),+ $(,)? }) => {
        #[derive(Debug, Clone, Deserialize, Serialize)]
        #[serde(deny_unknown_fields, default)]
        pub struct $name {
            $($(#[$attr])* pub $field: $ty,)+
        }

        impl Default for $name {
            fn default() -> Self {
                let d = <$src>::default();
                Self { $($sfield: d.$sfield,)+ }
            }
        }
    };
}

section!(SynthSection {
    iterations: usize,
    scatter_len: usize,
    gather_len: usize,
    partitions: usize,
    edge_pages_per_core: usize,
    bin_pages_per_partition: usize,
    vertex_pages_per_core: usize,
    pcs_per_phase: usize,
    block_bits: u32,
    page_bits: u32,
} from SynthConfig {
    iterations, scatter_len, gather_len, partitions, edge_pages_per_core,
    bin_pages_per_partition, vertex_pages_per_core, pcs_per_phase,
    block_bits, page_bits,
});

impl SynthSection {
    pub fn to_synth_config(&self) -> SynthConfig {
        SynthConfig {
            iterations: self.iterations,
            scatter_len: self.scatter_len,
            gather_len: self.gather_len,
            partitions: self.partitions,
            edge_pages_per_core: self.edge_pages_per_core,
            bin_pages_per_partition: self.bin_pages_per_partition,
            vertex_pages_per_core: self.vertex_pages_per_core,
            pcs_per_phase: self.pcs_per_phase,
            block_bits: self.block_bits,
            page_bits: self.page_bits,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorSection {
    /// One of: none, kswin, soft_kswin, dt, soft_dt.
    pub kind: String,
    pub window: usize,
    pub recent: usize,
    pub history: usize,
    pub alpha: f64,
    pub soft_ratio: f64,
    /// Soft-DT prediction-queue length (even).
    pub dt_queue: usize,
    /// Detection-to-truth matching window; 0 means 2·window.
    pub lag_window: usize,
}

impl Default for DetectorSection {
    fn default() -> Self {
        let d = KswinConfig::default();
        Self {
            kind: "soft_kswin".into(),
            window: d.w,
            recent: d.r,
            history: d.h,
            alpha: d.alpha,
            soft_ratio: d.th_r,
            dt_queue: 32,
            lag_window: 0,
        }
    }
}

impl DetectorSection {
    pub fn to_kswin_config(&self, seed: u64) -> KswinConfig {
        KswinConfig {
            w: self.window,
            r: self.recent,
            h: self.history,
            alpha: self.alpha,
            th_r: self.soft_ratio,
            rng_seed: seed,
        }
    }

    pub fn effective_lag(&self) -> usize {
        if self.lag_window == 0 {
            2 * self.window
        } else {
            self.lag_window
        }
    }
}

section!(PredictorSection {
    history_t: usize,
    lookforward_f: usize,
    attn_dim: usize,
    fusion_dim: usize,
    trans_dim: usize,
    trans_layers: usize,
    heads: usize,
    head_layers: usize,
    segment_bits: u32,
    num_segments: usize,
} from AmmaConfig {
    history_t, lookforward_f, attn_dim, fusion_dim, trans_dim, trans_layers,
    heads, head_layers, segment_bits, num_segments,
});

impl PredictorSection {
    pub fn to_amma_config(&self) -> AmmaConfig {
        AmmaConfig {
            history_t: self.history_t,
            lookforward_f: self.lookforward_f,
            attn_dim: self.attn_dim,
            fusion_dim: self.fusion_dim,
            trans_dim: self.trans_dim,
            trans_layers: self.trans_layers,
            heads: self.heads,
            head_layers: self.head_layers,
            segment_bits: self.segment_bits,
            num_segments: self.num_segments,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub max_windows: usize,
    /// Student dims for distillation (attention / fusion / transformer).
    pub student_attn_dim: usize,
    pub student_fusion_dim: usize,
    pub student_trans_dim: usize,
    pub distill_temperature: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainHyper::default();
        Self {
            epochs: d.epochs,
            batch_size: d.batch_size,
            lr: d.lr,
            max_windows: d.max_windows,
            student_attn_dim: 8,
            student_fusion_dim: 16,
            student_trans_dim: 8,
            distill_temperature: 2.0,
        }
    }
}

impl TrainSection {
    pub fn to_hyper(&self, seed: u64) -> TrainHyper {
        TrainHyper {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            max_windows: self.max_windows,
            seed,
        }
    }

    pub fn student_config(&self, teacher: &AmmaConfig) -> AmmaConfig {
        AmmaConfig {
            attn_dim: self.student_attn_dim,
            fusion_dim: self.student_fusion_dim,
            trans_dim: self.student_trans_dim,
            ..teacher.clone()
        }
    }
}

section!(CstpSection {
    d_s: usize,
    d_t: usize,
    pbot_capacity: usize,
    monitor_len: usize,
} from CstpConfig { d_s, d_t, pbot_capacity, monitor_len });

impl CstpSection {
    pub fn to_cstp_config(&self) -> CstpConfig {
        CstpConfig {
            d_s: self.d_s,
            d_t: self.d_t,
            pbot_capacity: self.pbot_capacity,
            monitor_len: self.monitor_len,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoSection {
    pub max_score: u32,
    pub max_rounds: u32,
    pub bad_score: u32,
    pub degree: usize,
    pub recent_len: usize,
}

impl Default for BoSection {
    fn default() -> Self {
        let d = BoConfig::default();
        Self {
            max_score: d.max_score,
            max_rounds: d.max_rounds,
            bad_score: d.bad_score,
            degree: d.degree,
            recent_len: d.recent_len,
        }
    }
}

impl BoSection {
    pub fn to_bo_config(&self) -> BoConfig {
        BoConfig {
            max_score: self.max_score,
            max_rounds: self.max_rounds,
            bad_score: self.bad_score,
            degree: self.degree,
            recent_len: self.recent_len,
            ..BoConfig::default()
        }
    }
}

section!(IsbSection {
    region_len: u64,
    degree: usize,
} from IsbConfig { region_len, degree });

impl IsbSection {
    pub fn to_isb_config(&self) -> IsbConfig {
        IsbConfig {
            region_len: self.region_len,
            degree: self.degree,
        }
    }
}

section!(CacheSection {
    size_bytes: usize,
    ways: usize,
    block_bytes: usize,
} from CacheConfig { size_bytes, ways, block_bytes });

impl CacheSection {
    pub fn to_cache_config(&self) -> CacheConfig {
        CacheConfig {
            size_bytes: self.size_bytes,
            ways: self.ways,
            block_bytes: self.block_bytes,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    /// Accesses between issuing a prefetch and it landing in the cache.
    pub distance: usize,
    /// Prefetchers to run, in report order.
    pub prefetchers: Vec<String>,
    pub oracle_degree: usize,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            distance: 0,
            prefetchers: ["none", "bo", "isb", "cstp", "oracle"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            oracle_degree: 6,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsSection {
    /// Output root; overridden by the env variable when set.
    pub out_dir: PathBuf,
    pub trace_file: String,
    pub model_dir: String,
    pub report_dir: String,
}

impl Default for PathsSection {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("out"),
            trace_file: "trace.txt".into(),
            model_dir: "models".into(),
            report_dir: "reports".into(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip_through_toml() {
        let cfg = RunConfig::default();
        let text = cfg.to_toml();
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(back.seed, cfg.seed);
        assert_eq!(back.synth.iterations, cfg.synth.iterations);
        assert_eq!(back.sim.prefetchers, cfg.sim.prefetchers);
    }

    #[test]
    fn missing_seed_is_an_error() {
        let err = RunConfig::from_toml("[synth]\niterations = 2\n");
        assert!(err.is_err(), "seed must be mandatory");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_toml("seed = 1\n[synth]\ntypo_key = 2\n");
        assert!(err.is_err());
    }

    #[test]
    fn sections_default_when_absent() {
        let cfg = RunConfig::from_toml("seed = 7\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.detector.kind, "soft_kswin");
        assert_eq!(cfg.detector.effective_lag(), 600);
        assert_eq!(cfg.cstp.d_s, 2);
        assert_eq!(cfg.cache.ways, 16);
    }
}
