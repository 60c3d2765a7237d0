use super::tensor::Scalar;
use super::HasParams;

/// Central finite-difference check of analytic gradients.
///
/// `loss_and_grad` must zero the gradient buffers, run forward + backward,
/// and return the loss. `loss_only` runs just the forward pass. Returns the
/// maximum relative error over every parameter entry.
pub fn grad_check<F: Scalar, M: HasParams<F>>(
    model: &mut M,
    mut loss_and_grad: impl FnMut(&mut M) -> F,
    mut loss_only: impl FnMut(&mut M) -> F,
    eps: F,
) -> F {
    let _ = loss_and_grad(model);
    let mut analytic: Vec<F> = Vec::new();
    model.visit_params(&mut |p| analytic.extend_from_slice(p.grad.data()));

    // Count parameters to walk each flat index exactly once.
    let mut total = 0usize;
    model.visit_params(&mut |p| total += p.value.len());
    assert_eq!(analytic.len(), total);

    let mut max_rel = F::zero();
    for flat in 0..total {
        let plus = perturbed_loss(model, &mut loss_only, flat, eps);
        let minus = perturbed_loss(model, &mut loss_only, flat, -eps);
        let fd = (plus - minus) / (F::c(2.0) * eps);
        let g = analytic[flat];
        let denom = F::one().max(fd.abs()).max(g.abs());
        let rel = (fd - g).abs() / denom;
        if rel > max_rel {
            max_rel = rel;
        }
    }
    max_rel
}

fn perturbed_loss<F: Scalar, M: HasParams<F>>(
    model: &mut M,
    loss_only: &mut impl FnMut(&mut M) -> F,
    flat: usize,
    delta: F,
) -> F {
    nudge(model, flat, delta);
    let loss = loss_only(model);
    nudge(model, flat, -delta);
    loss
}

fn nudge<F: Scalar, M: HasParams<F>>(model: &mut M, flat: usize, delta: F) {
    let mut offset = 0usize;
    model.visit_params(&mut |p| {
        let len = p.value.len();
        if flat >= offset && flat < offset + len {
            let i = flat - offset;
            p.value.data_mut()[i] = p.value.data()[i] + delta;
        }
        offset += len;
    });
}
