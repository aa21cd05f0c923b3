use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixedpoint::QFormat;
use crate::nn::{Conv2d, Dense, Layer, Padding, Tensor};
use crate::scalar::Scalar;

pub const IMAGE_SIDE: usize = 28;
pub const IMAGE_PIXELS: usize = IMAGE_SIDE * IMAGE_SIDE;
pub const NUM_CLASSES: usize = 10;

/// Weight counts of the five parameterized layers (conv1, conv2, fc1, fc2, fc3).
pub const LENET_WEIGHT_COUNTS: [usize; 5] = [128, 512, 69_120, 10_080, 840];
pub const LENET_TOTAL_WEIGHTS: usize = 80_680;
pub const LENET_TOTAL_BIASES: usize = 238;

/// `[filters, in_channels, kh, kw]` and padding of both convolutions, then
/// `[outputs, inputs]` of the three dense layers.
const LENET_CONV: [([usize; 4], Padding); 2] = [
    (
        [8, 1, 4, 4],
        Padding {
            top: 1,
            left: 1,
            bottom: 2,
            right: 2,
        },
    ),
    ([16, 8, 2, 2], Padding::NONE),
];
const LENET_DENSE: [[usize; 2]; 3] = [[120, 576], [84, 120], [10, 84]];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerClass {
    Conv,
    Fc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ParamKind {
    Weights,
    Bias,
}

/// Address of one parameter tensor inside a model.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ParamId {
    pub layer: usize,
    pub kind: ParamKind,
    pub class: LayerClass,
    /// e.g. `conv1.weight`, `fc3.bias`
    pub name: String,
}

impl fmt::Display for ParamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model<S> {
    layers: Vec<Layer<S>>,
    qformat: QFormat,
}

impl<S: Scalar> Model<S> {
    pub fn new(layers: Vec<Layer<S>>, qformat: QFormat) -> Self {
        Model { layers, qformat }
    }

    /// Builds the 7-layer LeNet variant from `(weights, bias)` pairs given in
    /// layer order.
    pub fn lenet(params: Vec<(Tensor<S>, Tensor<S>)>) -> Result<Self> {
        if params.len() != 5 {
            return Err(Error::Topology(format!(
                "expected 5 parameterized layers, got {}",
                params.len()
            )));
        }
        let mut it = params.into_iter();
        let mut layers = Vec::with_capacity(11);
        for (shape, padding) in LENET_CONV {
            let (w, b) = it.next().expect("length checked");
            w.expect_shape(&shape)?;
            layers.push(Layer::Conv(Conv2d::new(padding, w, b)?));
            layers.push(Layer::Relu);
            layers.push(Layer::MaxPool);
        }
        for (i, shape) in LENET_DENSE.into_iter().enumerate() {
            let (w, b) = it.next().expect("length checked");
            w.expect_shape(&shape)?;
            layers.push(Layer::Dense(Dense::new(w, b)?));
            if i < 2 {
                layers.push(Layer::Relu);
            }
        }
        Ok(Model::new(layers, QFormat::Q4_11))
    }

    pub fn lenet_zeros() -> Self {
        let mut params = Vec::new();
        for (shape, _) in LENET_CONV {
            params.push((Tensor::zeros(shape.to_vec()), Tensor::zeros(vec![shape[0]])));
        }
        for shape in LENET_DENSE {
            params.push((Tensor::zeros(shape.to_vec()), Tensor::zeros(vec![shape[0]])));
        }
        Model::lenet(params).expect("static topology")
    }

    pub fn layers(&self) -> &[Layer<S>] {
        &self.layers
    }

    pub fn qformat(&self) -> QFormat {
        self.qformat
    }

    /// Weight counts of every parameterized layer, in order.
    pub fn weight_counts(&self) -> Vec<usize> {
        self.layers
            .iter()
            .map(Layer::param_count)
            .filter(|&(w, _)| w > 0)
            .map(|(w, _)| w)
            .collect()
    }

    /// Verifies the exact LeNet variant: layer sequence, kernel shapes,
    /// padding and the (128, 512, 69120, 10080, 840) weight counts.
    pub fn check_topology(&self) -> Result<()> {
        let expected = Model::<S>::lenet_zeros();
        if self.layers.len() != expected.layers.len() {
            return Err(Error::Topology(format!(
                "expected {} layers, got {}",
                expected.layers.len(),
                self.layers.len()
            )));
        }
        for (i, (got, want)) in self.layers.iter().zip(&expected.layers).enumerate() {
            let ok = match (got, want) {
                (Layer::Conv(a), Layer::Conv(b)) => {
                    a.weights.shape() == b.weights.shape() && a.padding == b.padding
                }
                (Layer::Dense(a), Layer::Dense(b)) => a.weights.shape() == b.weights.shape(),
                (Layer::MaxPool, Layer::MaxPool) | (Layer::Relu, Layer::Relu) => true,
                _ => false,
            };
            if !ok {
                return Err(Error::Topology(format!("layer {i} does not match the LeNet variant")));
            }
        }
        let counts = self.weight_counts();
        if counts != LENET_WEIGHT_COUNTS {
            return Err(Error::Topology(format!("weight counts {counts:?}")));
        }
        Ok(())
    }

    pub fn forward(&self, input: &Tensor<S>) -> Result<Tensor<S>> {
        let mut x = input.clone();
        for layer in &self.layers {
            x = layer.forward(&x)?;
        }
        Ok(x)
    }

    pub fn predict(&self, input: &Tensor<S>) -> Result<usize> {
        Ok(argmax(self.forward(input)?.values()))
    }

    /// Parameter tensors in storage order (per layer: weights, then bias).
    pub fn params(&self) -> Vec<(ParamId, &Tensor<S>)> {
        let mut out = Vec::new();
        let (mut convs, mut fcs) = (0, 0);
        for (i, layer) in self.layers.iter().enumerate() {
            let (w, b, class, name) = match layer {
                Layer::Conv(c) => {
                    convs += 1;
                    (&c.weights, &c.bias, LayerClass::Conv, format!("conv{convs}"))
                }
                Layer::Dense(d) => {
                    fcs += 1;
                    (&d.weights, &d.bias, LayerClass::Fc, format!("fc{fcs}"))
                }
                Layer::MaxPool | Layer::Relu => continue,
            };
            for (kind, t, suffix) in [(ParamKind::Weights, w, "weight"), (ParamKind::Bias, b, "bias")] {
                let id = ParamId {
                    layer: i,
                    kind,
                    class,
                    name: format!("{name}.{suffix}"),
                };
                out.push((id, t));
            }
        }
        out
    }

    /// Same structure, parameter values replaced in [`Model::params`] order.
    pub fn with_params(&self, tensors: Vec<Tensor<S>>) -> Result<Self> {
        let mut model = self.clone();
        let mut it = tensors.into_iter();
        for layer in &mut model.layers {
            let (w, b) = match layer {
                Layer::Conv(c) => (&mut c.weights, &mut c.bias),
                Layer::Dense(d) => (&mut d.weights, &mut d.bias),
                Layer::MaxPool | Layer::Relu => continue,
            };
            for slot in [w, b] {
                let t = it
                    .next()
                    .ok_or_else(|| Error::Topology("too few parameter tensors".into()))?;
                t.expect_shape(slot.shape())?;
                *slot = t;
            }
        }
        if it.next().is_some() {
            return Err(Error::Topology("too many parameter tensors".into()));
        }
        Ok(model)
    }

    pub fn convert<T: Scalar>(&self) -> Model<T> {
        let layers = self
            .layers
            .iter()
            .map(|l| match l {
                Layer::Conv(c) => Layer::Conv(Conv2d {
                    padding: c.padding,
                    weights: c.weights.convert(),
                    bias: c.bias.convert(),
                }),
                Layer::Dense(d) => Layer::Dense(Dense {
                    weights: d.weights.convert(),
                    bias: d.bias.convert(),
                }),
                Layer::MaxPool => Layer::MaxPool,
                Layer::Relu => Layer::Relu,
            })
            .collect();
        Model::new(layers, self.qformat)
    }
}

/// Index of the largest value; ties go to the smallest index.
pub fn argmax<S: Scalar>(values: &[S]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Maps 8-bit grayscale pixels to `[1, 28, 28]` via `pixel / 255`.
pub fn image_tensor<S: Scalar>(pixels: &[u8]) -> Result<Tensor<S>> {
    if pixels.len() != IMAGE_PIXELS {
        return Err(Error::MalformedImage {
            expected: IMAGE_PIXELS,
            actual: pixels.len(),
        });
    }
    let values = pixels.iter().map(|&p| S::from_real(f64::from(p) / 255.0)).collect();
    Tensor::new(vec![1, IMAGE_SIDE, IMAGE_SIDE], values)
}

pub fn infer<S: Scalar>(model: &Model<S>, pixels: &[u8]) -> Result<usize> {
    model.predict(&image_tensor(pixels)?)
}

/// Descriptive statistics of one parameter tensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerStats {
    pub name: String,
    pub count: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub stddev: f64,
}

pub fn model_stats<S: Scalar>(model: &Model<S>) -> Vec<LayerStats> {
    model
        .params()
        .into_iter()
        .map(|(id, t)| tensor_stats(id.name, t))
        .collect()
}

pub fn tensor_stats<S: Scalar>(name: String, t: &Tensor<S>) -> LayerStats {
    let n = t.len();
    if n == 0 {
        return LayerStats {
            name,
            count: 0,
            mean: 0.0,
            stddev: 0.0,
        };
    }
    let vals = t.to_reals();
    let mean = vals.iter().sum::<f64>() / n as f64;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    LayerStats {
        name,
        count: n,
        mean,
        stddev: var.sqrt(),
    }
}
