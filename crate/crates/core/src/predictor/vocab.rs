//! Page-number vocabulary: a bidirectional page ↔ token map with token 0
//! reserved for unknown pages.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::trace::Trace;
use crate::{Error, Result};

pub const UNKNOWN_TOKEN: usize = 0;

#[derive(Debug, Clone, Default)]
pub struct PageVocab {
    page_to_token: HashMap<u64, usize>,
    /// token id → page; index 0 is the unknown sentinel.
    token_to_page: Vec<Option<u64>>,
}

impl PageVocab {
    pub fn new() -> Self {
        Self {
            page_to_token: HashMap::new(),
            token_to_page: vec![None],
        }
    }

    /// Builds a vocabulary from every page of a trace, in first-seen order.
    pub fn from_trace(trace: &Trace) -> Self {
        let mut v = Self::new();
        for a in &trace.accesses {
            v.insert(trace.meta.page_of(a.block_addr));
        }
        v
    }

    pub fn insert(&mut self, page: u64) -> usize {
        *self.page_to_token.entry(page).or_insert_with(|| {
            self.token_to_page.push(Some(page));
            self.token_to_page.len() - 1
        })
    }

    /// Token for a page; unknown pages map to token 0.
    pub fn token(&self, page: u64) -> usize {
        self.page_to_token.get(&page).copied().unwrap_or(UNKNOWN_TOKEN)
    }

    pub fn page(&self, token: usize) -> Option<u64> {
        self.token_to_page.get(token).copied().flatten()
    }

    /// Number of tokens including the unknown sentinel.
    pub fn len(&self) -> usize {
        self.token_to_page.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_to_page.len() <= 1
    }

    /// FNV-1a over (page, token) pairs in token order; stable across runs
    /// and platforms, used to tie checkpoints to their vocabulary.
    pub fn content_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut mix = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        for (tok, page) in self.token_to_page.iter().enumerate() {
            mix(&(tok as u64).to_le_bytes());
            mix(&page.unwrap_or(u64::MAX).to_le_bytes());
        }
        h
    }

    /// Writes one `page_hex token_id` pair per line.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        for (tok, page) in self.token_to_page.iter().enumerate() {
            if let Some(p) = page {
                writeln!(w, "0x{p:x} {tok}")?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let reader = BufReader::new(File::open(path)?);
        let mut pairs: Vec<(u64, usize)> = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            let err = || Error::Config(format!("bad vocab line {}: {trimmed:?}", lineno + 1));
            let (page_s, tok_s) = trimmed.split_once(' ').ok_or_else(err)?;
            let page = page_s
                .strip_prefix("0x")
                .and_then(|d| u64::from_str_radix(d, 16).ok())
                .ok_or_else(err)?;
            let tok: usize = tok_s.trim().parse().map_err(|_| err())?;
            if tok == UNKNOWN_TOKEN {
                return Err(Error::Config("vocab token 0 is reserved for unknown".into()));
            }
            pairs.push((page, tok));
        }
        pairs.sort_by_key(|&(_, t)| t);
        let mut v = Self::new();
        for (page, tok) in pairs {
            if tok != v.token_to_page.len() {
                return Err(Error::Config(format!("non-contiguous vocab token {tok}")));
            }
            if v.page_to_token.insert(page, tok).is_some() {
                return Err(Error::Config(format!("duplicate vocab page 0x{page:x}")));
            }
            v.token_to_page.push(Some(page));
        }
        Ok(v)
    }
}
