//! Differentiable numeric kernel: tape autodiff, optimizer, lr schedule.

pub mod gradcheck;
pub mod graph;
pub mod optim;
pub mod params;
pub mod schedule;

pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
pub use graph::{Gradients, Graph, Var};
pub use optim::{adamw_step, clip_global_norm, global_norm, AdamWConfig, OptimizerState};
pub use params::{Param, ParamId, ParamStore};
pub use schedule::{lr_at, LrSchedule};
