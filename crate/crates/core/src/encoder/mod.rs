//! Node featurization, a GIN encoder with sum-pooling readout, projection
//! heads onto the unit sphere, agent-based predictions, and weight
//! perturbation for the augmented view.

mod features;
mod model;

pub use features::{featurize, FeatureScheme, DEFAULT_DEGREE_CAP};
pub use model::{
    agents_on_tape, encode, encode_on_tape, forward, predict, predict_on_tape, project_and_normalize,
    project_on_tape, EncoderConfig, EncoderParams, Forward, GraphBatch, Head, Linear, Mlp2, ModelVars,
    PerturbScope,
};
