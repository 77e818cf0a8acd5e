//! Dense network machinery in double precision.

mod checkpoint;
mod gradcheck;
mod loss;
mod matrix;
mod network;
mod optim;

pub use checkpoint::{NetworkCheckpoint, NETWORK_FORMAT, NETWORK_VERSION};
pub use gradcheck::{
    gradient_check, relative_error, CheckLoss, GradCheckOptions, GradCheckReport, ParamCheck,
};
pub use loss::{
    mse_grad, mse_loss, reconstruction_grad, reconstruction_loss, row_sum_squared_grad,
    row_sum_squared_loss,
};
pub use matrix::{gemm, Matrix};
pub use network::{
    Backward, Dense, DenseGrad, DropoutMasks, ForwardCache, Gradients, Layer, Mode, Network,
    SkipLink,
};
pub use optim::{adam_step, adamw_step, OptimizerConfig, OptimizerKind, OptimizerState};
