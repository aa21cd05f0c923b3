//! Fault-tolerant storage for a fixed-point LeNet: SECDED(22,16) codewords
//! whose detected double errors are zeroed, plus a statistical fault
//! injector that estimates the accuracy distribution under random bit flips.

pub mod campaign;
pub mod dataset;
pub mod error;
pub mod fixedpoint;
pub mod injector;
pub mod nn;
pub mod scalar;
pub mod secded;
pub mod stats;
pub mod store;
pub mod weights;

pub use error::{Error, Result};
pub use fixedpoint::{Acc32, Fx16, QFormat};
pub use scalar::Scalar;
pub use store::{ProtectedModel, ProtectionMode, ReadReport};

/// The deployed network.
pub type FixedModel = nn::Model<Fx16>;
pub type FixedTensor = nn::Tensor<Fx16>;
pub type FixedEvalSet = nn::EvalSet<Fx16>;
/// Floating-point reference networks.
pub type FloatModel = nn::Model<f32>;
pub type DoubleModel = nn::Model<f64>;
