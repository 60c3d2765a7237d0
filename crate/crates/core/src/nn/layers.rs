use rand::Rng;

use super::tensor::{Param, Scalar, Tensor2};
use super::HasParams;

/// Row-wise softmax with max-subtraction.
pub fn softmax_rows<F: Scalar>(x: &Tensor2<F>) -> Tensor2<F> {
    let mut out = x.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().cloned().fold(F::neg_infinity(), F::max);
        let mut sum = F::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        let inv = F::one() / sum;
        for v in row.iter_mut() {
            *v *= inv;
        }
    }
    out
}

/// Backward of a row-wise softmax: `a` is the softmax output.
fn softmax_rows_backward<F: Scalar>(a: &Tensor2<F>, da: &Tensor2<F>) -> Tensor2<F> {
    let mut out = Tensor2::zeros(a.rows(), a.cols());
    for i in 0..a.rows() {
        let arow = a.row(i);
        let darow = da.row(i);
        let dot: F = arow.iter().zip(darow).map(|(&x, &y)| x * y).sum();
        for (o, (&x, &y)) in out.row_mut(i).iter_mut().zip(arow.iter().zip(darow)) {
            *o = x * (y - dot);
        }
    }
    out
}

pub struct AttnCache<F: Scalar> {
    q: Tensor2<F>,
    k: Tensor2<F>,
    v: Tensor2<F>,
    a: Tensor2<F>,
    scale: F,
}

impl<F: Scalar> AttnCache<F> {
    pub fn weights(&self) -> &Tensor2<F> {
        &self.a
    }
}

/// Scaled dot-product attention: `softmax(q·kᵀ/√d_k)·v`.
pub fn attention<F: Scalar>(
    q: &Tensor2<F>,
    k: &Tensor2<F>,
    v: &Tensor2<F>,
    d_k: usize,
) -> (Tensor2<F>, AttnCache<F>) {
    assert_eq!(q.cols(), k.cols(), "query/key dim mismatch");
    assert_eq!(k.rows(), v.rows(), "key/value length mismatch");
    let scale = F::one() / F::c(d_k as f64).sqrt();
    let mut scores = q.matmul_nt(k);
    scores.scale(scale);
    let a = softmax_rows(&scores);
    let out = a.matmul(v);
    (
        out,
        AttnCache {
            q: q.clone(),
            k: k.clone(),
            v: v.clone(),
            a,
            scale,
        },
    )
}

/// Returns (dq, dk, dv).
pub fn attention_backward<F: Scalar>(
    cache: &AttnCache<F>,
    dout: &Tensor2<F>,
) -> (Tensor2<F>, Tensor2<F>, Tensor2<F>) {
    let dv = cache.a.matmul_tn(dout);
    let da = dout.matmul_nt(&cache.v);
    let mut dscores = softmax_rows_backward(&cache.a, &da);
    dscores.scale(cache.scale);
    let dq = dscores.matmul(&cache.k);
    let dk = dscores.matmul_tn(&cache.q);
    (dq, dk, dv)
}

/// Fully connected layer `y = x·W + b`.
pub struct Linear<F: Scalar> {
    pub w: Param<F>,
    pub b: Option<Param<F>>,
}

impl<F: Scalar> Linear<F> {
    pub fn new(name: &str, input: usize, output: usize, bias: bool, rng: &mut impl Rng) -> Self {
        Self {
            w: Param::new(format!("{name}.w"), Tensor2::glorot(input, output, rng)),
            b: bias.then(|| Param::new(format!("{name}.b"), Tensor2::zeros(1, output))),
        }
    }

    pub fn from_weights(name: &str, w: Tensor2<F>, b: Option<Tensor2<F>>) -> Self {
        Self {
            w: Param::new(format!("{name}.w"), w),
            b: b.map(|b| Param::new(format!("{name}.b"), b)),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w.value.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.w.value.cols()
    }

    pub fn forward(&self, x: &Tensor2<F>) -> Tensor2<F> {
        assert_eq!(
            x.cols(),
            self.w.value.rows(),
            "linear input dim mismatch ({} vs {})",
            x.cols(),
            self.w.value.rows()
        );
        let mut y = x.matmul(&self.w.value);
        if let Some(b) = &self.b {
            for i in 0..y.rows() {
                for (o, &bv) in y.row_mut(i).iter_mut().zip(b.value.row(0)) {
                    *o += bv;
                }
            }
        }
        y
    }

    /// Accumulates gradients and returns dx. `x` is the forward input.
    pub fn backward(&mut self, x: &Tensor2<F>, dy: &Tensor2<F>) -> Tensor2<F> {
        self.w.grad.add_assign(&x.matmul_tn(dy));
        if let Some(b) = &mut self.b {
            b.grad.add_assign(&dy.col_sums());
        }
        dy.matmul_nt(&self.w.value)
    }
}

impl<F: Scalar> HasParams<F> for Linear<F> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param<F>)) {
        f(&mut self.w);
        if let Some(b) = &mut self.b {
            f(b);
        }
    }
}

/// Per-row layer normalization with learned scale and shift.
pub struct LayerNorm<F: Scalar> {
    pub gamma: Param<F>,
    pub beta: Param<F>,
    eps: F,
}

pub struct LayerNormCache<F: Scalar> {
    xhat: Tensor2<F>,
    inv_std: Vec<F>,
}

impl<F: Scalar> LayerNorm<F> {
    pub fn new(name: &str, dim: usize) -> Self {
        let mut gamma = Tensor2::zeros(1, dim);
        gamma.fill(F::one());
        Self {
            gamma: Param::new(format!("{name}.gamma"), gamma),
            beta: Param::new(format!("{name}.beta"), Tensor2::zeros(1, dim)),
            eps: F::c(1e-5),
        }
    }

    pub fn forward(&self, x: &Tensor2<F>) -> (Tensor2<F>, LayerNormCache<F>) {
        let d = F::c(x.cols() as f64);
        let mut xhat = Tensor2::zeros(x.rows(), x.cols());
        let mut inv_std = Vec::with_capacity(x.rows());
        let mut y = Tensor2::zeros(x.rows(), x.cols());
        for i in 0..x.rows() {
            let row = x.row(i);
            let mean = row.iter().cloned().sum::<F>() / d;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() / d;
            let istd = F::one() / (var + self.eps).sqrt();
            inv_std.push(istd);
            for j in 0..x.cols() {
                let xh = (row[j] - mean) * istd;
                xhat.set(i, j, xh);
                y.set(i, j, self.gamma.value.get(0, j) * xh + self.beta.value.get(0, j));
            }
        }
        (y, LayerNormCache { xhat, inv_std })
    }

    pub fn backward(&mut self, cache: &LayerNormCache<F>, dy: &Tensor2<F>) -> Tensor2<F> {
        let rows = dy.rows();
        let cols = dy.cols();
        let d = F::c(cols as f64);
        let mut dx = Tensor2::zeros(rows, cols);
        for i in 0..rows {
            let dyrow = dy.row(i);
            let xhrow = cache.xhat.row(i);
            for j in 0..cols {
                self.gamma.grad.data_mut()[j] += dyrow[j] * xhrow[j];
                self.beta.grad.data_mut()[j] += dyrow[j];
            }
            let dxhat: Vec<F> = (0..cols)
                .map(|j| dyrow[j] * self.gamma.value.get(0, j))
                .collect();
            let sum_dxhat: F = dxhat.iter().cloned().sum();
            let sum_dxhat_xhat: F = dxhat.iter().zip(xhrow).map(|(&a, &b)| a * b).sum();
            let istd = cache.inv_std[i];
            for j in 0..cols {
                let v = (d * dxhat[j] - sum_dxhat - xhrow[j] * sum_dxhat_xhat) * istd / d;
                dx.set(i, j, v);
            }
        }
        dx
    }
}

impl<F: Scalar> HasParams<F> for LayerNorm<F> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param<F>)) {
        f(&mut self.gamma);
        f(&mut self.beta);
    }
}

/// Single-head self-attention with linear Q/K/V projections. Used for the
/// per-modality layers and the fusion layer (where it also changes width).
pub struct SelfAttention<F: Scalar> {
    pub wq: Linear<F>,
    pub wk: Linear<F>,
    pub wv: Linear<F>,
}

pub struct SelfAttnCache<F: Scalar> {
    x: Tensor2<F>,
    attn: AttnCache<F>,
}

impl<F: Scalar> SelfAttention<F> {
    pub fn new(name: &str, input: usize, output: usize, rng: &mut impl Rng) -> Self {
        Self {
            wq: Linear::new(&format!("{name}.wq"), input, output, false, rng),
            wk: Linear::new(&format!("{name}.wk"), input, output, false, rng),
            wv: Linear::new(&format!("{name}.wv"), input, output, false, rng),
        }
    }

    pub fn forward(&self, x: &Tensor2<F>) -> (Tensor2<F>, SelfAttnCache<F>) {
        let q = self.wq.forward(x);
        let k = self.wk.forward(x);
        let v = self.wv.forward(x);
        let (out, attn) = attention(&q, &k, &v, self.wq.out_dim());
        (out, SelfAttnCache { x: x.clone(), attn })
    }

    pub fn backward(&mut self, cache: &SelfAttnCache<F>, dout: &Tensor2<F>) -> Tensor2<F> {
        let (dq, dk, dv) = attention_backward(&cache.attn, dout);
        let mut dx = self.wq.backward(&cache.x, &dq);
        dx.add_assign(&self.wk.backward(&cache.x, &dk));
        dx.add_assign(&self.wv.backward(&cache.x, &dv));
        dx
    }
}

impl<F: Scalar> HasParams<F> for SelfAttention<F> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param<F>)) {
        self.wq.visit_params(f);
        self.wk.visit_params(f);
        self.wv.visit_params(f);
    }
}

/// Multi-head self-attention sublayer with residual connection and layer
/// normalization: `LN(x + MSA(x))`.
pub struct MhaBlock<F: Scalar> {
    pub wq: Linear<F>,
    pub wk: Linear<F>,
    pub wv: Linear<F>,
    pub wo: Linear<F>,
    pub ln: LayerNorm<F>,
    heads: usize,
}

pub struct MhaBlockCache<F: Scalar> {
    x: Tensor2<F>,
    q: Tensor2<F>,
    k: Tensor2<F>,
    v: Tensor2<F>,
    head_caches: Vec<AttnCache<F>>,
    concat: Tensor2<F>,
    ln: LayerNormCache<F>,
}

impl<F: Scalar> MhaBlock<F> {
    pub fn new(name: &str, dim: usize, heads: usize, rng: &mut impl Rng) -> Self {
        assert!(heads >= 1 && dim % heads == 0, "dim must divide by heads");
        Self {
            wq: Linear::new(&format!("{name}.wq"), dim, dim, false, rng),
            wk: Linear::new(&format!("{name}.wk"), dim, dim, false, rng),
            wv: Linear::new(&format!("{name}.wv"), dim, dim, false, rng),
            wo: Linear::new(&format!("{name}.wo"), dim, dim, false, rng),
            ln: LayerNorm::new(&format!("{name}.ln"), dim),
            heads,
        }
    }

    pub fn forward(&self, x: &Tensor2<F>) -> (Tensor2<F>, MhaBlockCache<F>) {
        let dim = self.wq.out_dim();
        let hd = dim / self.heads;
        let q = self.wq.forward(x);
        let k = self.wk.forward(x);
        let v = self.wv.forward(x);
        let mut concat = Tensor2::zeros(x.rows(), dim);
        let mut head_caches = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let (lo, hi) = (h * hd, (h + 1) * hd);
            let (out_h, cache_h) = attention(
                &q.slice_cols(lo, hi),
                &k.slice_cols(lo, hi),
                &v.slice_cols(lo, hi),
                hd,
            );
            concat.set_cols(lo, &out_h);
            head_caches.push(cache_h);
        }
        let o = self.wo.forward(&concat);
        let mut resid = x.clone();
        resid.add_assign(&o);
        let (y, ln) = self.ln.forward(&resid);
        (
            y,
            MhaBlockCache {
                x: x.clone(),
                q,
                k,
                v,
                head_caches,
                concat,
                ln,
            },
        )
    }

    pub fn backward(&mut self, cache: &MhaBlockCache<F>, dy: &Tensor2<F>) -> Tensor2<F> {
        let dim = self.wq.out_dim();
        let hd = dim / self.heads;
        let dresid = self.ln.backward(&cache.ln, dy);
        let dconcat = self.wo.backward(&cache.concat, &dresid);
        let mut dq = Tensor2::zeros(cache.q.rows(), dim);
        let mut dk = Tensor2::zeros(cache.k.rows(), dim);
        let mut dv = Tensor2::zeros(cache.v.rows(), dim);
        for h in 0..self.heads {
            let (lo, hi) = (h * hd, (h + 1) * hd);
            let (dq_h, dk_h, dv_h) =
                attention_backward(&cache.head_caches[h], &dconcat.slice_cols(lo, hi));
            dq.set_cols(lo, &dq_h);
            dk.set_cols(lo, &dk_h);
            dv.set_cols(lo, &dv_h);
        }
        let mut dx = self.wq.backward(&cache.x, &dq);
        dx.add_assign(&self.wk.backward(&cache.x, &dk));
        dx.add_assign(&self.wv.backward(&cache.x, &dv));
        dx.add_assign(&dresid); // residual path
        dx
    }
}

impl<F: Scalar> HasParams<F> for MhaBlock<F> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param<F>)) {
        self.wq.visit_params(f);
        self.wk.visit_params(f);
        self.wv.visit_params(f);
        self.wo.visit_params(f);
        self.ln.visit_params(f);
    }
}

/// Position-wise feed-forward network `max(0, xW₁+b₁)W₂+b₂`.
pub struct Ffn<F: Scalar> {
    pub w1: Linear<F>,
    pub w2: Linear<F>,
}

pub struct FfnCache<F: Scalar> {
    x: Tensor2<F>,
    hidden: Tensor2<F>,
}

impl<F: Scalar> Ffn<F> {
    pub fn new(name: &str, dim: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        Self {
            w1: Linear::new(&format!("{name}.w1"), dim, hidden, true, rng),
            w2: Linear::new(&format!("{name}.w2"), hidden, dim, true, rng),
        }
    }

    pub fn forward(&self, x: &Tensor2<F>) -> (Tensor2<F>, FfnCache<F>) {
        let hidden = self.w1.forward(x).map(|v| v.max(F::zero()));
        let y = self.w2.forward(&hidden);
        (
            y,
            FfnCache {
                x: x.clone(),
                hidden,
            },
        )
    }

    pub fn backward(&mut self, cache: &FfnCache<F>, dy: &Tensor2<F>) -> Tensor2<F> {
        let mut dhidden = self.w2.backward(&cache.hidden, dy);
        for (d, &h) in dhidden.data_mut().iter_mut().zip(cache.hidden.data()) {
            if h <= F::zero() {
                *d = F::zero();
            }
        }
        self.w1.backward(&cache.x, &dhidden)
    }
}

impl<F: Scalar> HasParams<F> for Ffn<F> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param<F>)) {
        self.w1.visit_params(f);
        self.w2.visit_params(f);
    }
}

/// One Transformer layer: MSA sublayer then FFN sublayer, each wrapped in a
/// residual connection and layer normalization.
pub struct TransformerLayer<F: Scalar> {
    pub mha: MhaBlock<F>,
    pub ffn: Ffn<F>,
    pub ln2: LayerNorm<F>,
}

pub struct TransformerCache<F: Scalar> {
    mha: MhaBlockCache<F>,
    ffn: FfnCache<F>,
    ln2: LayerNormCache<F>,
}

impl<F: Scalar> TransformerLayer<F> {
    pub fn new(name: &str, dim: usize, heads: usize, ffn_hidden: usize, rng: &mut impl Rng) -> Self {
        Self {
            mha: MhaBlock::new(&format!("{name}.mha"), dim, heads, rng),
            ffn: Ffn::new(&format!("{name}.ffn"), dim, ffn_hidden, rng),
            ln2: LayerNorm::new(&format!("{name}.ln2"), dim),
        }
    }

    pub fn forward(&self, x: &Tensor2<F>) -> (Tensor2<F>, TransformerCache<F>) {
        let (y1, mha) = self.mha.forward(x);
        let (f, ffn) = self.ffn.forward(&y1);
        let mut resid = y1.clone();
        resid.add_assign(&f);
        let (y2, ln2) = self.ln2.forward(&resid);
        (y2, TransformerCache { mha, ffn, ln2 })
    }

    pub fn backward(&mut self, cache: &TransformerCache<F>, dy: &Tensor2<F>) -> Tensor2<F> {
        let dresid = self.ln2.backward(&cache.ln2, dy);
        let mut dy1 = self.ffn.backward(&cache.ffn, &dresid);
        dy1.add_assign(&dresid);
        self.mha.backward(&cache.mha, &dy1)
    }
}

impl<F: Scalar> HasParams<F> for TransformerLayer<F> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param<F>)) {
        self.mha.visit_params(f);
        self.ffn.visit_params(f);
        self.ln2.visit_params(f);
    }
}

/// Token embedding table.
pub struct Embedding<F: Scalar> {
    pub table: Param<F>,
}

impl<F: Scalar> Embedding<F> {
    pub fn new(name: &str, vocab: usize, dim: usize, rng: &mut impl Rng) -> Self {
        Self {
            table: Param::new(format!("{name}.table"), Tensor2::glorot(vocab, dim, rng)),
        }
    }

    pub fn forward(&self, tokens: &[usize]) -> Tensor2<F> {
        let dim = self.table.value.cols();
        let mut out = Tensor2::zeros(tokens.len(), dim);
        for (i, &t) in tokens.iter().enumerate() {
            out.row_mut(i).copy_from_slice(self.table.value.row(t));
        }
        out
    }

    pub fn backward(&mut self, tokens: &[usize], dout: &Tensor2<F>) {
        for (i, &t) in tokens.iter().enumerate() {
            for (g, &d) in self
                .table
                .grad
                .row_mut(t)
                .iter_mut()
                .zip(dout.row(i))
            {
                *g += d;
            }
        }
    }
}

impl<F: Scalar> HasParams<F> for Embedding<F> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param<F>)) {
        f(&mut self.table);
    }
}

/// Standalone multi-head attention block application (residual + layer norm
/// included), for callers that do not keep the cache.
pub fn multi_head_attention<F: Scalar>(x: &Tensor2<F>, block: &MhaBlock<F>) -> Tensor2<F> {
    block.forward(x).0
}
