use super::tensor::{Scalar, Tensor2};

const CLAMP: f64 = 1e-7;

pub fn sigmoid<F: Scalar>(x: &Tensor2<F>) -> Tensor2<F> {
    x.map(|v| F::one() / (F::one() + (-v).exp()))
}

/// Mean binary cross entropy over all elements. `p` are probabilities
/// (post-sigmoid), clamped to [1e-7, 1-1e-7]. Returns (loss, dL/dp).
pub fn bce_loss<F: Scalar>(p: &Tensor2<F>, targets: &Tensor2<F>) -> (F, Tensor2<F>) {
    assert_eq!(p.rows(), targets.rows());
    assert_eq!(p.cols(), targets.cols());
    let lo = F::c(CLAMP);
    let hi = F::one() - lo;
    let n = F::c(p.len() as f64);
    let mut loss = F::zero();
    let mut dp = Tensor2::zeros(p.rows(), p.cols());
    for (i, (&pv, &y)) in p.data().iter().zip(targets.data()).enumerate() {
        let pc = pv.max(lo).min(hi);
        loss -= y * pc.ln() + (F::one() - y) * (F::one() - pc).ln();
        dp.data_mut()[i] = (pc - y) / (pc * (F::one() - pc) * n);
    }
    (loss / n, dp)
}

/// Gradient of mean BCE with respect to pre-sigmoid logits: `(σ(z) − y)/n`.
/// Numerically stable shortcut used by the training loop.
pub fn sigmoid_bce_backward<F: Scalar>(p: &Tensor2<F>, targets: &Tensor2<F>) -> Tensor2<F> {
    let n = F::c(p.len() as f64);
    let mut dz = p.clone();
    for (d, &y) in dz.data_mut().iter_mut().zip(targets.data()) {
        *d = (*d - y) / n;
    }
    dz
}

/// Mean categorical cross entropy. `probs` rows must sum to 1; `targets`
/// holds one class index per row. Returns (loss, dL/dprobs).
pub fn cce_loss<F: Scalar>(probs: &Tensor2<F>, targets: &[usize]) -> (F, Tensor2<F>) {
    assert_eq!(probs.rows(), targets.len());
    let lo = F::c(CLAMP);
    let n = F::c(probs.rows() as f64);
    let mut loss = F::zero();
    let mut dp = Tensor2::zeros(probs.rows(), probs.cols());
    for (i, &t) in targets.iter().enumerate() {
        assert!(t < probs.cols(), "target class out of range");
        let p = probs.get(i, t).max(lo);
        loss -= p.ln();
        dp.set(i, t, -F::one() / (p * n));
    }
    (loss / n, dp)
}

/// Gradient of mean CCE with respect to pre-softmax logits:
/// `(softmax(z) − onehot)/n`.
pub fn softmax_cce_backward<F: Scalar>(probs: &Tensor2<F>, targets: &[usize]) -> Tensor2<F> {
    let n = F::c(probs.rows() as f64);
    let mut dz = probs.clone();
    dz.scale(F::one() / n);
    for (i, &t) in targets.iter().enumerate() {
        let v = dz.get(i, t);
        dz.set(i, t, v - F::one() / n);
    }
    dz
}
