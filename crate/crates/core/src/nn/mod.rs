//! Minimal neural-network core with analytic gradients.
//!
//! Only the layer kinds the FDR regressors need are provided: `conv1d`,
//! `maxpool1d`, `flatten`, `dense`, `lstm` and `bilstm`. Each has a free
//! forward function (`*_apply` / `*_forward`) and a matching `*_backward`;
//! [`Network`] chains them and handles the bookkeeping.
//!
//! Everything runs in `f64`.

mod layers;
mod loss;
mod network;
mod optim;
mod tensor;

pub use layers::{
    bilstm_apply, bilstm_backward, bilstm_forward, conv1d_apply, conv1d_backward, conv1d_forward,
    dense_apply, dense_backward, dense_forward, lstm_apply, lstm_backward, lstm_forward,
    maxpool1d_apply, maxpool1d_backward, maxpool1d_forward, Activation, BiLstmCache, LstmCache,
    LstmGrads, LstmParams,
};
pub use loss::{mse_grad, mse_loss, sse_loss};
pub use network::{ForwardTrace, Gradients, Layer, LayerSpec, Network};
pub use optim::{adam_step, lr_at_epoch, AdamState, EarlyStopUpdate, EarlyStopping, StopDecision};
pub use tensor::Tensor;
