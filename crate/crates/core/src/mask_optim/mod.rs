//! Mask optimization against mel-domain references.
//!
//! The mask lives on the linear magnitude grid so the estimate can be
//! resynthesized with the mixture phase; the loss lives in mel space where
//! the references were produced.

mod loss;
mod mask;
mod optimizer;
mod reference;

pub use loss::{check_compatible, dgmo_grad, dgmo_loss, Objective};
pub use mask::{sigmoid, Mask, MaskInit, ONES_LOGIT};
pub use optimizer::{
    apply_mask_reconstruct, ideal_ratio_mask, optimize_mask, reconstruct_values,
    write_loss_trace_csv, AnalyzedMixture, OptimizerConfig, ReferenceProvider, ReferenceRequest,
    SeparationResult, StepRule, LOGIT_LIMIT,
};
pub use reference::{CreatedBy, Provenance, ReferenceSet};
