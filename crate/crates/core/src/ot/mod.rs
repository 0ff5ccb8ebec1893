//! Entropic optimal transport with uniform marginals, plus an exact solver
//! for tiny instances.

mod exact;
mod newton;
mod sinkhorn;

pub use exact::{exact_ot_small, ExactPlan, EXACT_OT_MAX_CELLS};
pub use sinkhorn::{
    entropic_dual_objective, entropic_objective, marginal_residual, sinkhorn_uniform, OtConfig,
    TransportPlan,
};
pub(crate) use newton::{newton_scale_to_uniform, newton_transport};
