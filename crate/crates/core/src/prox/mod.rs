//! Proximal mappings and Moreau envelopes used by both solvers.

mod fused;
mod logdet;
mod objective;

pub use fused::{fused_penalty, prox_fgl, prox_fused, soft_threshold, tv_chain, FusedProxResult};
pub(crate) use fused::{check_penalty, for_each_fiber};
pub use logdet::{moreau_env_logdet, phi_minus, phi_minus_scalar, phi_plus, phi_plus_scalar};
pub use objective::{fgl_penalty, moreau_env_fgl, primal_objective, ProblemData};
