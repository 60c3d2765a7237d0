//! Input preprocessing, label construction, the multi-modality attention
//! predictor (delta and page heads), phase-specific training, evaluation,
//! and model compression (distillation, quantization, binary page encoding).

mod amma;
mod compress;
mod eval;
mod input;
mod labels;
mod train;
mod vocab;

pub use amma::{zero_input, AmmaCache, AmmaConfig, AmmaModel, HeadKind, ModelInput, WindowInput};
pub use compress::{
    decode_binary16, distill_model, encode_binary16, quantize_model, DistillMode, QuantReport,
    QuantizedModel,
};
pub use eval::{
    delta_predict, evaluate_phase_set, evaluate_pooled_pair, page_predict, PredictorScores,
};
pub use input::{hash_normalize_pc, segment_address};
pub use labels::{build_labels, DeltaBitmap};
pub use train::{
    collect_windows, derive_seed, train_pair, train_phase_models, train_pooled_pair, PhaseModelSet, TrainHyper,
    TrainedPair,
};
pub use vocab::PageVocab;
