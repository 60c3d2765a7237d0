//! Model compression: binary page encoding, teacher-student distillation,
//! and 8-bit affine quantization.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::nn::{
    adam_step, sigmoid, sigmoid_bce_backward, softmax_rows, AdamConfig, HasParams, Param, Tensor2,
};
use crate::trace::Trace;
use crate::{Error, Real, Result};

use super::amma::{AmmaConfig, AmmaModel, HeadKind};
use super::train::{derive_seed, TrainHyper};
use super::vocab::PageVocab;

/// Page token as 16 bits, least-significant bit first.
pub fn encode_binary16(token: u16) -> [bool; 16] {
    std::array::from_fn(|i| (token >> i) & 1 == 1)
}

pub fn decode_binary16(bits: &[bool; 16]) -> u16 {
    bits.iter()
        .enumerate()
        .fold(0u16, |acc, (i, &b)| acc | ((b as u16) << i))
}

/// Which teacher scores each training window.
pub enum DistillMode<'a> {
    /// One teacher for every window.
    Single(&'a AmmaModel),
    /// Per-phase teachers indexed by the window's phase label; the
    /// single-student-from-N-teachers setup.
    PerPhase(Vec<&'a AmmaModel>),
}

impl DistillMode<'_> {
    fn teacher_for(&self, trace: &Trace, t: usize) -> Result<&AmmaModel> {
        match self {
            DistillMode::Single(m) => Ok(m),
            DistillMode::PerPhase(ms) => {
                let phase = trace.accesses[t]
                    .phase
                    .ok_or_else(|| Error::Train("per-phase distillation needs labels".into()))?;
                ms.get(phase as usize).copied().ok_or_else(|| {
                    Error::Train(format!("no teacher for phase {phase}"))
                })
            }
        }
    }
}

/// Trains a student with loss 0.5·hard + 0.5·soft, where the soft target is
/// the teacher's temperature-scaled output distribution. The student's own
/// logits are not temperature-scaled (simple-variant distillation).
#[allow(clippy::too_many_arguments)]
pub fn distill_model(
    mode: &DistillMode,
    student_cfg: &AmmaConfig,
    head: HeadKind,
    trace: &Trace,
    vocab: &PageVocab,
    windows: &[usize],
    hyper: &TrainHyper,
    temperature: f64,
) -> Result<AmmaModel> {
    if windows.is_empty() {
        return Err(Error::Train("no distillation windows".into()));
    }
    if temperature <= 0.0 {
        return Err(Error::Train("temperature must be positive".into()));
    }
    student_cfg.validate(trace.meta.block_bits)?;
    let mut student = AmmaModel::new(
        &AmmaConfig {
            lookforward_f: student_cfg.lookforward_f,
            ..student_cfg.clone()
        },
        head,
        vocab.len(),
        derive_seed(hyper.seed, "distill-init", 0),
    )?;

    // Hard targets and teacher soft targets are fixed per window.
    let mut samples = Vec::with_capacity(windows.len().min(hyper.max_windows));
    let mut order: Vec<usize> = windows.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(hyper.seed, "distill", 0));
    if order.len() > hyper.max_windows {
        order.shuffle(&mut rng);
        order.truncate(hyper.max_windows);
        order.sort_unstable();
    }
    for &t in &order {
        let teacher = mode.teacher_for(trace, t)?;
        let tin = teacher.input_from_trace(trace, t, vocab);
        let (tz, _) = teacher.forward(&tin);
        let scaled = tz.map(|v| v / temperature as Real);
        let soft = match head {
            HeadKind::DeltaSigmoid { .. } | HeadKind::PageBinary16 => sigmoid(&scaled),
            HeadKind::PageSoftmax { .. } => softmax_rows(&scaled),
        };
        let (hard, token) = super::train::hard_target(&student, trace, t, vocab)?;
        samples.push((t, hard, token, soft));
    }

    let adam = AdamConfig {
        lr: hyper.lr,
        ..AdamConfig::default()
    };
    let mut step = 0u64;
    let mut idx: Vec<usize> = (0..samples.len()).collect();
    for _epoch in 0..hyper.epochs {
        idx.shuffle(&mut rng);
        for batch in idx.chunks(hyper.batch_size.max(1)) {
            student.zero_grads();
            let scale = 0.5 / batch.len() as Real;
            for &i in batch {
                let (t, hard, token, soft) = &samples[i];
                let input = student.input_from_trace(trace, *t, vocab);
                let (logits, cache) = student.forward(&input);
                let mut dlogits = match head {
                    HeadKind::DeltaSigmoid { .. } | HeadKind::PageBinary16 => {
                        let p = sigmoid(&logits);
                        let mut d = sigmoid_bce_backward(&p, hard);
                        d.add_assign(&sigmoid_bce_backward(&p, soft));
                        d
                    }
                    HeadKind::PageSoftmax { .. } => {
                        // Hard grad (p − onehot) plus soft grad (p − q),
                        // assembled as 2p − q − onehot.
                        let p = softmax_rows(&logits);
                        let mut d = p.clone();
                        d.add_assign(&p);
                        let mut q = soft.clone();
                        q.scale(-1.0);
                        d.add_assign(&q);
                        let v = d.get(0, *token);
                        d.set(0, *token, v - 1.0);
                        d
                    }
                };
                dlogits.scale(scale);
                student.backward(&cache, &dlogits);
            }
            step += 1;
            adam_step(&mut student, &adam, step)?;
        }
    }
    Ok(student)
}

/// One 8-bit tensor: real value ≈ scale·q + offset.
#[derive(Debug, Clone)]
pub struct QuantTensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub scale: f64,
    pub offset: f64,
    pub data: Vec<u8>,
}

#[derive(Debug, Clone)]
pub struct QuantizedModel {
    pub tensors: Vec<QuantTensor>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuantReport {
    pub tensors: usize,
    pub params: usize,
    /// One byte per parameter.
    pub payload_bytes: usize,
    /// Per-tensor header bytes (name, shape, scale, offset).
    pub overhead_bytes: usize,
    pub total_bytes: usize,
}

/// Per-tensor affine 8-bit quantization. A degenerate tensor (all entries
/// equal) stores scale 1 with the value as offset.
pub fn quantize_model(model: &mut AmmaModel) -> (QuantizedModel, QuantReport) {
    let mut tensors = Vec::new();
    model.visit_params(&mut |p: &mut Param<Real>| {
        let data = p.value.data();
        let min = data.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let (scale, offset) = if max > min {
            ((max - min) / 255.0, min)
        } else {
            (1.0, min)
        };
        let q: Vec<u8> = data
            .iter()
            .map(|&v| (((v - offset) / scale).round().clamp(0.0, 255.0)) as u8)
            .collect();
        tensors.push(QuantTensor {
            name: p.name.clone(),
            rows: p.value.rows(),
            cols: p.value.cols(),
            scale,
            offset,
            data: q,
        });
    });
    let params: usize = tensors.iter().map(|t| t.data.len()).sum();
    let overhead: usize = tensors.iter().map(|t| t.name.len() + 4 + 8 + 8 + 8 + 8).sum();
    let report = QuantReport {
        tensors: tensors.len(),
        params,
        payload_bytes: params,
        overhead_bytes: overhead,
        total_bytes: params + overhead,
    };
    (QuantizedModel { tensors }, report)
}

impl QuantizedModel {
    /// Overwrites the model's parameters with their dequantized values,
    /// simulating the 8-bit inference path.
    pub fn apply(&self, model: &mut AmmaModel) -> Result<()> {
        let mut err: Option<Error> = None;
        let mut i = 0usize;
        model.visit_params(&mut |p: &mut Param<Real>| {
            if err.is_some() {
                return;
            }
            let Some(t) = self.tensors.get(i) else {
                err = Some(Error::Checkpoint("quantized tensor count mismatch".into()));
                return;
            };
            i += 1;
            if t.name != p.name || t.rows != p.value.rows() || t.cols != p.value.cols() {
                err = Some(Error::Checkpoint(format!(
                    "quantized tensor {} does not match parameter {}",
                    t.name, p.name
                )));
                return;
            }
            let deq: Vec<Real> = t.data.iter().map(|&q| t.scale * q as f64 + t.offset).collect();
            p.value = Tensor2::from_vec(t.rows, t.cols, deq);
        });
        match err {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}
