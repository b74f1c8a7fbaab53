//! Small fully connected networks with hand-written backward passes.

mod deform;
mod em;
mod encoding;
mod mlp;

pub use deform::{
    apply_deformation, deformation_backward, quat_mul, quat_mul_vjp, DeformCache, DeformNet, DEFORM_OUTPUTS,
};
pub use em::{softplus, EmCache, EmNet, EmVariant, DEPTH, HIDDEN};
pub use encoding::{PositionalEncoding, RoomNorm};
pub use mlp::{Dense, Mlp, MlpCache, MlpGrads, MlpShape};
