//! Scalar input features: PC hashing and block-address segmentation.

use crate::Real;

/// Mixes a PC through the SplitMix64 finalizer and normalizes the result to
/// [0, 1). Constants are the published SplitMix64 ones. The top 53 hash bits
/// are kept so the division is exact in a 64-bit real and the output can
/// never round up to 1.0.
pub fn hash_normalize_pc(pc: u64) -> Real {
    let mut z = pc.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as Real / (1u64 << 53) as Real
}

/// Splits the low `segments · bits` bits of a block address into `segments`
/// fields of `bits` bits each, least-significant field first, each
/// normalized to [0, 1) by division by 2^bits.
pub fn segment_address(block_addr: u64, bits: u32, segments: usize) -> Vec<Real> {
    assert!(bits >= 1 && bits <= 32, "segment width out of range");
    let mask = (1u64 << bits) - 1;
    let denom = (1u64 << bits) as Real;
    (0..segments)
        .map(|s| {
            let shift = s as u32 * bits;
            let field = if shift >= 64 { 0 } else { (block_addr >> shift) & mask };
            field as Real / denom
        })
        .collect()
}
