//! Training labels: same-page delta bitmaps and future page tokens.

use crate::trace::Trace;
use crate::{Error, Result};

use super::vocab::{PageVocab, UNKNOWN_TOKEN};

/// Multi-label target over signed same-page deltas. Position i encodes
/// delta d ∈ [−(Bpp−1), −1] ∪ [1, Bpp−1] in ascending order; there is no
/// position for delta 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeltaBitmap {
    bits: Vec<bool>,
    blocks_per_page: u64,
}

impl DeltaBitmap {
    pub fn new(blocks_per_page: u64) -> Self {
        Self {
            bits: vec![false; 2 * (blocks_per_page as usize - 1)],
            blocks_per_page,
        }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.iter().all(|&b| !b)
    }

    /// Bit position of a delta, or None when out of range or zero.
    pub fn index_of(&self, delta: i64) -> Option<usize> {
        let bpp = self.blocks_per_page as i64;
        if delta == 0 || delta.abs() >= bpp {
            return None;
        }
        Some(if delta < 0 {
            (delta + bpp - 1) as usize
        } else {
            (delta + bpp - 2) as usize
        })
    }

    /// Delta encoded at a bit position.
    pub fn delta_of(&self, index: usize) -> i64 {
        let bpp = self.blocks_per_page as i64;
        let i = index as i64;
        if i < bpp - 1 {
            i - (bpp - 1)
        } else {
            i - bpp + 2
        }
    }

    pub fn set(&mut self, delta: i64) {
        if let Some(i) = self.index_of(delta) {
            self.bits[i] = true;
        }
    }

    pub fn get_bit(&self, index: usize) -> bool {
        self.bits[index]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn set_deltas(&self) -> Vec<i64> {
        self.bits
            .iter()
            .enumerate()
            .filter(|&(_, &b)| b)
            .map(|(i, _)| self.delta_of(i))
            .collect()
    }
}

/// Labels for the window ending at access `t`: bits for every same-page
/// delta realized within the next `lookforward` accesses, and the token of
/// the first future access on a different page (unknown token if none).
pub fn build_labels(
    trace: &Trace,
    t: usize,
    lookforward: usize,
    vocab: &PageVocab,
) -> Result<(DeltaBitmap, usize)> {
    if t + lookforward >= trace.len() {
        return Err(Error::Config(format!(
            "label window out of range: t={t}, F={lookforward}, trace length {}",
            trace.len()
        )));
    }
    let meta = &trace.meta;
    let current = trace.accesses[t].block_addr;
    let current_page = meta.page_of(current);
    let mut bitmap = DeltaBitmap::new(meta.blocks_per_page());
    let mut page_token = UNKNOWN_TOKEN;
    let mut page_found = false;
    for j in t + 1..=t + lookforward {
        let b = trace.accesses[j].block_addr;
        if meta.page_of(b) == current_page {
            bitmap.set(b as i64 - current as i64);
        } else if !page_found {
            page_found = true;
            page_token = vocab.token(meta.page_of(b));
        }
    }
    Ok((bitmap, page_token))
}
