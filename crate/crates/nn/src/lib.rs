//! Minimal neural-network toolkit: a differentiable tape with support for
//! gradients of gradients, dense and LSTM layers, and Adam.

pub mod layers;
pub mod optim;
pub mod tape;

pub use layers::{fan_in_uniform, Activation, Linear, LstmCell, LstmState, Mlp, ParamSet};
pub use optim::Adam;
pub use tape::{sigmoid, softmax_groups, softmax_rows, Matrix, Tape, Var};
