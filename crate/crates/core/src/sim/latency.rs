//! Analytic critical-path latency estimate for the attention pipeline,
//! assuming a fully parallel matrix-multiply unit with a log-depth
//! reduction tree.

use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct LatencyConfig {
    pub attn_dim: usize,
    pub fusion_dim: usize,
    pub trans_dim: usize,
    pub layers: usize,
    pub include_hash: bool,
    pub include_head: bool,
    pub include_av: bool,
}

impl Default for LatencyConfig {
    fn default() -> Self {
        Self {
            attn_dim: 64,
            fusion_dim: 128,
            trans_dim: 128,
            layers: 1,
            include_hash: true,
            include_head: true,
            include_av: true,
        }
    }
}

/// Matrix-multiply critical path: one multiply plus a log₂-depth adder
/// tree.
fn t_mm(d: usize) -> Result<u64> {
    if !d.is_power_of_two() {
        return Err(Error::Config(format!(
            "latency model needs power-of-two dims, got {d}"
        )));
    }
    Ok(1 + d.trailing_zeros() as u64)
}

const T_AV: u64 = 1;
const T_HASH: u64 = 1;

/// Attention sublayer: Q, K, V projections and two attention matmuls occur
/// along the critical path (4 matmuls), plus scale, softmax, and combine.
fn t_att(d: usize) -> Result<u64> {
    Ok(4 * t_mm(d)? + 3 * T_AV)
}

/// Fusion/transformer layer critical path: attention, output projection,
/// and four vector stages (residual, norms, activation).
fn t_layer(d: usize) -> Result<u64> {
    Ok(t_att(d)? + t_mm(d)? + 4 * T_AV)
}

/// Total estimated cycles for one inference.
pub fn estimate_latency(cfg: &LatencyConfig) -> Result<u64> {
    if cfg.layers == 0 {
        return Err(Error::Config("need at least one transformer layer".into()));
    }
    let t_emb = t_mm(cfg.attn_dim)? + T_AV;
    let mut total = t_emb + t_att(cfg.attn_dim)? + t_layer(cfg.fusion_dim)?
        + cfg.layers as u64 * t_layer(cfg.trans_dim)?;
    if cfg.include_hash {
        total += T_HASH;
    }
    if cfg.include_head {
        total += t_mm(cfg.trans_dim)?;
    }
    if cfg.include_av {
        total += T_AV;
    }
    Ok(total)
}
