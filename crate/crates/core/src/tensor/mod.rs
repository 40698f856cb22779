//! Tensors, the autodiff graph, gradient checking and the optimizer.

pub mod gradcheck;
mod graph;
pub(crate) mod kernels;
mod optim;
mod params;
mod value;

pub use gradcheck::{
    check_gradients, check_gradients_sampled, check_param_gradients, default_cases, grad_check, GradReport,
    PRIMITIVE_OPS,
};
pub use graph::{Graph, NodeId, LEAKY_SLOPE};
pub use kernels::ConvGeom;
pub use optim::Adam;
pub use params::{Bound, ParamStore};
pub use value::Tensor;
