//! Minimal dense-network numeric core.

mod check;
mod network;
mod optim;
mod serialize;
mod tensor;

pub use check::{compare_with_finite_differences, finite_diff_check, FiniteDiffReport};
pub use network::{
    forward_layers, logit_input_gradient, logit_jacobian, logits_of, output_of, softmax, Activation, DenseLayer, ForwardTrace,
    Gradient, LossSpec, Network,
};
pub use optim::{
    deserialize_adam_default, train_classifier, EarlyStop, EarlyStopper, LossKind, Optimizer, OptimizerConfig, OptimizerKind, Trained,
};
pub use serialize::{ModelDocument, MODEL_FORMAT_VERSION};
pub use tensor::Tensor2;
