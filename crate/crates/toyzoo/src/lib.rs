//! Desk-scale objective pairs for the solvers in `tolcone-core`.
//!
//! - [`QuadraticPair`]: two convex quadratics with closed-form composite
//!   minimum.
//! - [`NonconvexPair`]: smooth non-convex pair for stationarity runs.
//! - [`AttentionToyPair`]: a single attention layer whose target-token mass
//!   is erased while another prompt's attention pattern is preserved.
//! - [`ToyFlowModel`] with [`FlowErasurePair`]: a conditional
//!   rectified-flow model over a 2D Gaussian mixture, a low-rank trainable
//!   delta, and the ESD / attention / LoRA / RSC losses, for single images
//!   and short frame sequences.

// NaN-rejecting guards are written as `!(x > 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod attention;
mod erasure;
mod error;
mod flow;
mod losses;
mod nonconvex;
mod quadratic;
mod sample;

pub use attention::{
    attention_backward, attention_forward, attention_regularizer, scramble_tokens, AttentionToyPair, AttnForward,
    Scrambled, ToyAttention,
};
pub use erasure::{
    anchor_and_propagate_objectives, volumetric_attention_regularizer, ErasureSettings, FlowErasurePair, Frame,
    LossParts, LossWeights, Probe, VideoVolume, VIDEO_PHASES,
};
pub use error::{Result, ToyError};
pub use flow::{
    AttnMap, Concept, FlowPass, FlowWeights, FlowWorld, Lora, PretrainConfig, Prompt, TokenId, Tokens, ToyFlowModel,
    HIDDEN, LORA_PARAMS, MLP_IN, RANK, SEQ, TOKEN_DIM,
};
pub use losses::{
    composite_erasure_loss, composite_preservation_loss, esd_target, esd_velocity_loss, lora_preservation_loss,
    rsc_grad_fe, rsc_loss, ConceptFeatures,
};
pub use nonconvex::NonconvexPair;
pub use quadratic::QuadraticPair;
pub use sample::{
    concept_accuracy, euler_sample, evaluate_concepts, generate_samples, read_samples, write_samples, ConceptScores,
    Sample, SampleRecord,
};
