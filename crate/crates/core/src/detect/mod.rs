//! Online phase-transition detection over the PC stream.

mod eval;
mod kswin;
mod tree;

pub use eval::{evaluate_detections, DetectionScores};
pub use kswin::{ks_statistic, kswin_threshold, Kswin, KswinConfig, SoftKswin};
pub use tree::{dt_train, DecisionTree, DtDetector, SoftDtDetector};

/// Which detector fired.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectorKind {
    Kswin,
    SoftKswin,
    Dt,
    SoftDt,
}

impl std::fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            DetectorKind::Kswin => "kswin",
            DetectorKind::SoftKswin => "soft_kswin",
            DetectorKind::Dt => "dt",
            DetectorKind::SoftDt => "soft_dt",
        };
        f.write_str(s)
    }
}

/// A fired phase-transition detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Detection {
    /// Ordinal of the stream sample at which the detector fired.
    pub index: usize,
    pub kind: DetectorKind,
}
