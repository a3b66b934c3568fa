//! Human-aligned mixup.
//!
//! Mixing kernels with decoupled data and label coefficients, the H-Mix
//! judgment corpus and its analyses, logistic category-boundary fitting,
//! label policies built from human judgments, a small from-scratch classifier
//! for desk-scale training and evaluation, and the session logic behind the
//! elicitation service.

pub mod boundary;
pub mod elicit;
pub mod error;
pub mod hmix;
pub mod mix;
pub mod policy;
pub mod train;

pub use error::{Error, Result};
pub use mix::{
    data_mix, label_mix, sample_lambda, sweep_stimuli, CoefficientDistribution, Endpoint,
    ImageTensor, LabelDistribution, MixCoefficient, MixedStimulus,
};
