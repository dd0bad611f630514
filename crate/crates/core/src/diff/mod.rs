//! Minimal reverse-mode differentiation.
//!
//! A [`Tape`] records every operation of one forward pass. Parameters are
//! copied onto the tape from a [`ParamStore`]; [`Tape::backward`] walks the
//! tape in reverse and accumulates parameter gradients back into the
//! store, where [`sgd_step`] consumes them.
//!
//! All arithmetic is `f64`. Tensors are rank 1 to 3, row-major.

mod gradcheck;
mod optim;
mod params;
mod tape;

pub use gradcheck::{
    analytic_gradients, check_gradients, compare_gradients, GradCheckOptions, GradCheckReport,
};
pub use optim::{clip_grad_norm, sgd_step, Optimizer, OptimizerKind};
pub use params::{Init, Param, ParamStore};
pub use tape::{Tape, Var};
