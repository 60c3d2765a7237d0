//! The multi-modality attention predictor: per-modality embedding and
//! self-attention, sequence-wise concatenation, a fusion attention layer,
//! transformer layers, mean pooling, and an MLP head.

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::nn::{
    read_checkpoint, write_checkpoint, Checkpoint, Embedding, HasParams, Linear, Param,
    SelfAttention, SelfAttnCache, Tensor2, TransformerCache, TransformerLayer,
};
use crate::trace::Trace;
use crate::{Error, Real, Result, Tensor};

use super::input::{hash_normalize_pc, segment_address};
use super::vocab::PageVocab;

/// Architecture hyperparameters shared by the delta and page models.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AmmaConfig {
    /// History window length T (accesses per input).
    pub history_t: usize,
    /// Look-forward window F (accesses scanned for labels).
    pub lookforward_f: usize,
    /// Per-modality embedding/attention width.
    pub attn_dim: usize,
    /// Fusion attention width.
    pub fusion_dim: usize,
    /// Transformer width.
    pub trans_dim: usize,
    pub trans_layers: usize,
    pub heads: usize,
    pub head_layers: usize,
    /// Address segmentation: field width in bits and field count.
    pub segment_bits: u32,
    pub num_segments: usize,
}

impl Default for AmmaConfig {
    fn default() -> Self {
        Self {
            history_t: 9,
            lookforward_f: 256,
            attn_dim: 64,
            fusion_dim: 128,
            trans_dim: 128,
            trans_layers: 1,
            heads: 4,
            head_layers: 1,
            segment_bits: 8,
            num_segments: 8,
        }
    }
}

impl AmmaConfig {
    pub fn validate(&self, block_bits: u32) -> Result<()> {
        if self.trans_dim % self.heads != 0 {
            return Err(Error::Config(format!(
                "trans_dim {} not divisible by heads {}",
                self.trans_dim, self.heads
            )));
        }
        if self.history_t < 1 || self.trans_layers < 1 || self.head_layers < 1 {
            return Err(Error::Config("history, layers, and head depth must be >= 1".into()));
        }
        if (self.num_segments as u32) * self.segment_bits < 64 - block_bits {
            return Err(Error::Config(
                "segments must cover every block-address bit (S·b >= 64 − block_bits)".into(),
            ));
        }
        Ok(())
    }
}

/// Output head flavor; fixed at construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadKind {
    /// One sigmoid score per delta-bitmap position.
    DeltaSigmoid { bits: usize },
    /// One softmax logit per page token.
    PageSoftmax { vocab: usize },
    /// 16 sigmoid bits encoding the page token in binary.
    PageBinary16,
}

impl HeadKind {
    pub fn out_dim(&self) -> usize {
        match *self {
            HeadKind::DeltaSigmoid { bits } => bits,
            HeadKind::PageSoftmax { vocab } => vocab,
            HeadKind::PageBinary16 => 16,
        }
    }

    fn tag(&self) -> &'static str {
        match self {
            HeadKind::DeltaSigmoid { .. } => "delta_sigmoid",
            HeadKind::PageSoftmax { .. } => "page_softmax",
            HeadKind::PageBinary16 => "page_binary16",
        }
    }
}

/// Address-modality input for one window.
#[derive(Debug, Clone)]
pub enum WindowInput {
    /// T×S segmented block addresses (delta model).
    Segments(Tensor),
    /// T page tokens (page model).
    Tokens(Vec<usize>),
}

/// One model input: the address modality plus T hashed PCs.
#[derive(Debug, Clone)]
pub struct ModelInput {
    pub addr: WindowInput,
    pub pcs: Vec<Real>,
}

enum AddrEncoder {
    Segments(Linear<Real>),
    Tokens(Embedding<Real>),
}

pub struct AmmaModel {
    pub cfg: AmmaConfig,
    pub head_kind: HeadKind,
    addr_enc: AddrEncoder,
    pc_enc: Linear<Real>,
    sa_addr: SelfAttention<Real>,
    sa_pc: SelfAttention<Real>,
    fusion: SelfAttention<Real>,
    /// Present iff fusion_dim != trans_dim.
    bridge: Option<Linear<Real>>,
    layers: Vec<TransformerLayer<Real>>,
    head: Vec<Linear<Real>>,
}

pub struct AmmaCache {
    addr: WindowInput,
    pc_mat: Tensor,
    sa_addr: SelfAttnCache<Real>,
    sa_pc: SelfAttnCache<Real>,
    fusion: SelfAttnCache<Real>,
    fused: Tensor,
    tcaches: Vec<TransformerCache<Real>>,
    seq_rows: usize,
    /// Input to each head linear (post-ReLU for hidden layers).
    head_ins: Vec<Tensor>,
}

impl AmmaModel {
    /// Builds a model with seeded Glorot initialization. `vocab_len` sizes
    /// the token embedding for page models and is ignored for the delta
    /// model (which consumes segmented addresses).
    pub fn new(cfg: &AmmaConfig, head_kind: HeadKind, vocab_len: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let addr_enc = match head_kind {
            HeadKind::DeltaSigmoid { .. } => AddrEncoder::Segments(Linear::new(
                "addr_emb",
                cfg.num_segments,
                cfg.attn_dim,
                true,
                &mut rng,
            )),
            HeadKind::PageSoftmax { .. } | HeadKind::PageBinary16 => {
                if vocab_len < 2 {
                    return Err(Error::Config("page model needs a vocabulary".into()));
                }
                AddrEncoder::Tokens(Embedding::new("addr_emb", vocab_len, cfg.attn_dim, &mut rng))
            }
        };
        let pc_enc = Linear::new("pc_emb", 1, cfg.attn_dim, true, &mut rng);
        let sa_addr = SelfAttention::new("sa_addr", cfg.attn_dim, cfg.attn_dim, &mut rng);
        let sa_pc = SelfAttention::new("sa_pc", cfg.attn_dim, cfg.attn_dim, &mut rng);
        let fusion = SelfAttention::new("fusion", cfg.attn_dim, cfg.fusion_dim, &mut rng);
        let bridge = (cfg.fusion_dim != cfg.trans_dim)
            .then(|| Linear::new("bridge", cfg.fusion_dim, cfg.trans_dim, false, &mut rng));
        let layers = (0..cfg.trans_layers)
            .map(|l| {
                TransformerLayer::new(
                    &format!("trans{l}"),
                    cfg.trans_dim,
                    cfg.heads,
                    4 * cfg.trans_dim,
                    &mut rng,
                )
            })
            .collect();
        let mut head = Vec::with_capacity(cfg.head_layers);
        for l in 0..cfg.head_layers {
            let last = l + 1 == cfg.head_layers;
            let out = if last { head_kind.out_dim() } else { cfg.trans_dim };
            head.push(Linear::new(&format!("head{l}"), cfg.trans_dim, out, true, &mut rng));
        }
        Ok(Self {
            cfg: cfg.clone(),
            head_kind,
            addr_enc,
            pc_enc,
            sa_addr,
            sa_pc,
            fusion,
            bridge,
            layers,
            head,
        })
    }

    /// Builds the model input for the window ending at access `t`
    /// (accesses t−T+1 ..= t).
    pub fn input_from_trace(&self, trace: &Trace, t: usize, vocab: &PageVocab) -> ModelInput {
        let t_len = self.cfg.history_t;
        assert!(t + 1 >= t_len, "window start before trace begin");
        let window = &trace.accesses[t + 1 - t_len..=t];
        let pcs: Vec<Real> = window.iter().map(|a| hash_normalize_pc(a.pc)).collect();
        let addr = match self.addr_enc {
            AddrEncoder::Segments(_) => {
                let rows: Vec<Vec<Real>> = window
                    .iter()
                    .map(|a| {
                        segment_address(a.block_addr, self.cfg.segment_bits, self.cfg.num_segments)
                    })
                    .collect();
                WindowInput::Segments(Tensor::from_rows(&rows))
            }
            AddrEncoder::Tokens(_) => WindowInput::Tokens(
                window
                    .iter()
                    .map(|a| vocab.token(trace.meta.page_of(a.block_addr)))
                    .collect(),
            ),
        };
        ModelInput { addr, pcs }
    }

    /// Forward pass over one window; returns head logits (1×out) and the
    /// cache needed for `backward`.
    pub fn forward(&self, input: &ModelInput) -> (Tensor, AmmaCache) {
        let t_len = self.cfg.history_t;
        assert_eq!(input.pcs.len(), t_len, "pc modality length mismatch");
        let addr_emb = match (&self.addr_enc, &input.addr) {
            (AddrEncoder::Segments(lin), WindowInput::Segments(segs)) => {
                assert_eq!(segs.rows(), t_len, "address modality length mismatch");
                lin.forward(segs)
            }
            (AddrEncoder::Tokens(emb), WindowInput::Tokens(tokens)) => {
                assert_eq!(tokens.len(), t_len, "address modality length mismatch");
                emb.forward(tokens)
            }
            _ => panic!("input modality does not match model's address encoder"),
        };
        let pc_mat = Tensor::from_vec(t_len, 1, input.pcs.clone());
        let pc_emb = self.pc_enc.forward(&pc_mat);
        let (a_out, sa_addr) = self.sa_addr.forward(&addr_emb);
        let (p_out, sa_pc) = self.sa_pc.forward(&pc_emb);
        let concat = a_out.vstack(&p_out);
        let (fused, fusion) = self.fusion.forward(&concat);
        let mut x = match &self.bridge {
            Some(b) => b.forward(&fused),
            None => fused.clone(),
        };
        let mut tcaches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (y, c) = layer.forward(&x);
            tcaches.push(c);
            x = y;
        }
        let seq_rows = x.rows();
        let pooled = x.col_means();
        let mut head_ins = Vec::with_capacity(self.head.len());
        let mut h = pooled;
        for (l, lin) in self.head.iter().enumerate() {
            head_ins.push(h.clone());
            h = lin.forward(&h);
            if l + 1 < self.head.len() {
                h = h.map(|v| v.max(0.0));
            }
        }
        (
            h,
            AmmaCache {
                addr: input.addr.clone(),
                pc_mat,
                sa_addr,
                sa_pc,
                fusion,
                fused,
                tcaches,
                seq_rows,
                head_ins,
            },
        )
    }

    /// Accumulates parameter gradients from dL/dlogits.
    pub fn backward(&mut self, cache: &AmmaCache, dlogits: &Tensor) {
        let mut d = dlogits.clone();
        for l in (0..self.head.len()).rev() {
            d = self.head[l].backward(&cache.head_ins[l], &d);
            if l > 0 {
                // ReLU mask: head_ins[l] is the post-activation input.
                for (g, &v) in d.data_mut().iter_mut().zip(cache.head_ins[l].data()) {
                    if v <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
        }
        // Mean-pool backward: every position shares dpooled/rows.
        let inv = 1.0 / cache.seq_rows as Real;
        let mut dx = Tensor::zeros(cache.seq_rows, d.cols());
        for i in 0..cache.seq_rows {
            for (o, &g) in dx.row_mut(i).iter_mut().zip(d.row(0)) {
                *o = g * inv;
            }
        }
        for (layer, c) in self.layers.iter_mut().zip(&cache.tcaches).rev() {
            dx = layer.backward(c, &dx);
        }
        let dfused = match &mut self.bridge {
            Some(b) => b.backward(&cache.fused, &dx),
            None => dx,
        };
        let dconcat = self.fusion.backward(&cache.fusion, &dfused);
        let t_len = self.cfg.history_t;
        let da = dconcat.slice_rows(0, t_len);
        let dp = dconcat.slice_rows(t_len, 2 * t_len);
        let daddr_emb = self.sa_addr.backward(&cache.sa_addr, &da);
        let dpc_emb = self.sa_pc.backward(&cache.sa_pc, &dp);
        let _ = self.pc_enc.backward(&cache.pc_mat, &dpc_emb);
        match (&mut self.addr_enc, &cache.addr) {
            (AddrEncoder::Segments(lin), WindowInput::Segments(segs)) => {
                let _ = lin.backward(segs, &daddr_emb);
            }
            (AddrEncoder::Tokens(emb), WindowInput::Tokens(tokens)) => {
                emb.backward(tokens, &daddr_emb);
            }
            _ => unreachable!("cache built by this model"),
        }
    }

    fn vocab_len(&self) -> usize {
        match &self.addr_enc {
            AddrEncoder::Segments(_) => 0,
            AddrEncoder::Tokens(emb) => emb.table.value.rows(),
        }
    }

    /// Writes the model to the binary checkpoint format with the given
    /// extra metadata (phase id, vocab hash, ...).
    pub fn save(&mut self, path: &Path, extra_meta: &BTreeMap<String, String>) -> Result<()> {
        let mut meta = extra_meta.clone();
        meta.insert("head".into(), self.head_kind.tag().into());
        meta.insert("out_dim".into(), self.head_kind.out_dim().to_string());
        meta.insert("vocab_len".into(), self.vocab_len().to_string());
        let c = &self.cfg;
        for (k, v) in [
            ("history_t", c.history_t),
            ("lookforward_f", c.lookforward_f),
            ("attn_dim", c.attn_dim),
            ("fusion_dim", c.fusion_dim),
            ("trans_dim", c.trans_dim),
            ("trans_layers", c.trans_layers),
            ("heads", c.heads),
            ("head_layers", c.head_layers),
            ("segment_bits", c.segment_bits as usize),
            ("num_segments", c.num_segments),
        ] {
            meta.insert(format!("cfg.{k}"), v.to_string());
        }
        let mut tensors = Vec::new();
        self.visit_params(&mut |p: &mut Param<Real>| {
            tensors.push((p.name.clone(), p.value.clone()));
        });
        write_checkpoint(path, &Checkpoint { meta, tensors })
    }

    /// Reads a checkpoint written by [`AmmaModel::save`].
    pub fn load(path: &Path) -> Result<(Self, BTreeMap<String, String>)> {
        let ckpt = read_checkpoint(path)?;
        let get = |k: &str| -> Result<usize> {
            ckpt.meta
                .get(k)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Checkpoint(format!("missing or bad meta key {k}")))
        };
        let cfg = AmmaConfig {
            history_t: get("cfg.history_t")?,
            lookforward_f: get("cfg.lookforward_f")?,
            attn_dim: get("cfg.attn_dim")?,
            fusion_dim: get("cfg.fusion_dim")?,
            trans_dim: get("cfg.trans_dim")?,
            trans_layers: get("cfg.trans_layers")?,
            heads: get("cfg.heads")?,
            head_layers: get("cfg.head_layers")?,
            segment_bits: get("cfg.segment_bits")? as u32,
            num_segments: get("cfg.num_segments")?,
        };
        let out_dim = get("out_dim")?;
        let vocab_len = get("vocab_len")?;
        let head_kind = match ckpt.meta.get("head").map(String::as_str) {
            Some("delta_sigmoid") => HeadKind::DeltaSigmoid { bits: out_dim },
            Some("page_softmax") => HeadKind::PageSoftmax { vocab: out_dim },
            Some("page_binary16") => HeadKind::PageBinary16,
            other => {
                return Err(Error::Checkpoint(format!("unknown head kind {other:?}")));
            }
        };
        let mut model = Self::new(&cfg, head_kind, vocab_len.max(2), 0)?;
        let mut err: Option<Error> = None;
        model.visit_params(&mut |p: &mut Param<Real>| {
            if err.is_some() {
                return;
            }
            match ckpt.tensor(&p.name) {
                Ok(t) if t.rows() == p.value.rows() && t.cols() == p.value.cols() => {
                    p.value = t.clone();
                }
                Ok(t) => {
                    err = Some(Error::Checkpoint(format!(
                        "tensor {} has shape {}x{}, expected {}x{}",
                        p.name,
                        t.rows(),
                        t.cols(),
                        p.value.rows(),
                        p.value.cols()
                    )));
                }
                Err(e) => err = Some(e),
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        Ok((model, ckpt.meta))
    }
}

impl HasParams<Real> for AmmaModel {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param<Real>)) {
        match &mut self.addr_enc {
            AddrEncoder::Segments(lin) => lin.visit_params(f),
            AddrEncoder::Tokens(emb) => emb.visit_params(f),
        }
        self.pc_enc.visit_params(f);
        self.sa_addr.visit_params(f);
        self.sa_pc.visit_params(f);
        self.fusion.visit_params(f);
        if let Some(b) = &mut self.bridge {
            b.visit_params(f);
        }
        for l in &mut self.layers {
            l.visit_params(f);
        }
        for h in &mut self.head {
            h.visit_params(f);
        }
    }
}

/// All-zero window input of the right shape; handy for shape and
/// determinism checks.
pub fn zero_input(cfg: &AmmaConfig, tokens: bool) -> ModelInput {
    let addr = if tokens {
        WindowInput::Tokens(vec![0; cfg.history_t])
    } else {
        WindowInput::Segments(Tensor2::zeros(cfg.history_t, cfg.num_segments))
    };
    ModelInput {
        addr,
        pcs: vec![0.0; cfg.history_t],
    }
}
