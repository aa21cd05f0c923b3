//! Deterministic inference for the 7-layer LeNet variant, generic over the
//! scalar type.

mod eval;
mod layer;
mod model;
mod tensor;

pub use eval::{count_correct, evaluate, predictions, AccuracyMode, EvalSet};
pub use layer::{conv2d, dense, maxpool, relu, Conv2d, Dense, Layer, Padding};
pub use model::{
    argmax, image_tensor, infer, model_stats, tensor_stats, LayerClass, LayerStats, Model, ParamId,
    ParamKind, IMAGE_PIXELS, IMAGE_SIDE, LENET_TOTAL_BIASES, LENET_TOTAL_WEIGHTS,
    LENET_WEIGHT_COUNTS, NUM_CLASSES,
};
pub use tensor::Tensor;
