//! Reverse-mode differentiation over per-sentence graphs and the
//! Riemannian SGD update.

mod check;
mod graph;
mod rsgd;

pub use check::{finite_diff_check, relative_error};
pub(crate) use graph::dense_forward;
pub use graph::{
    distance_vjp, log_sum_exp, mobius_add_vjp, mobius_scale_vjp, softmax, DenseLayer, DenseParam, GradientRecord,
    Graph, NodeId, PROB_CLAMP,
};
pub use rsgd::{riemannian_rescale, rsgd_step, rsgd_step_in_place, sgd_step_in_place};
