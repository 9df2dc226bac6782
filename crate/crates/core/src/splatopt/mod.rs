//! Differentiable ray-wise Gaussian rendering and anchored optimization.

mod grad;
mod loss;
mod optimize;
mod params;
mod render;
mod witness;

pub use grad::{loss_gradient, params_loss, params_loss_gradient, PrimitiveGradient};
pub use loss::{rendering_loss, TrainingFrame};
pub use optimize::{optimize_anchored, write_loss_trace, OptimizeOutcome, OptimizerConfig, MAX_HALVINGS};
pub use params::SplatParams;
pub use render::{
    composite_ray, ray_approach, render_frame, render_with, RayApproach, RayComposite, RenderOptions, RenderedFrame,
    NEAR_PLANE,
};
pub use witness::{ambiguity_witness, split_weights, AmbiguityWitness};
