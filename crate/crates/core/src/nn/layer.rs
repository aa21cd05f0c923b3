use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Padding {
    pub top: usize,
    pub left: usize,
    pub bottom: usize,
    pub right: usize,
}

impl Padding {
    pub const NONE: Padding = Padding {
        top: 0,
        left: 0,
        bottom: 0,
        right: 0,
    };
}

/// Cross-correlation layer; weights are `[filters, in_channels, kernel_h, kernel_w]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d<S> {
    pub padding: Padding,
    pub weights: Tensor<S>,
    pub bias: Tensor<S>,
}

/// Fully connected layer; weights are `[outputs, inputs]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<S> {
    pub weights: Tensor<S>,
    pub bias: Tensor<S>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer<S> {
    Conv(Conv2d<S>),
    /// 2x2 window, stride 2, odd trailing rows/columns dropped.
    MaxPool,
    Dense(Dense<S>),
    Relu,
}

impl<S: Scalar> Conv2d<S> {
    pub fn new(padding: Padding, weights: Tensor<S>, bias: Tensor<S>) -> Result<Self> {
        if weights.shape().len() != 4 {
            return Err(Error::ShapeMismatch {
                expected: vec![0; 4],
                actual: weights.shape().to_vec(),
            });
        }
        bias.expect_shape(&[weights.shape()[0]])?;
        Ok(Conv2d {
            padding,
            weights,
            bias,
        })
    }

    pub fn filters(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn kernel(&self) -> (usize, usize) {
        (self.weights.shape()[2], self.weights.shape()[3])
    }
}

impl<S: Scalar> Dense<S> {
    pub fn new(weights: Tensor<S>, bias: Tensor<S>) -> Result<Self> {
        if weights.shape().len() != 2 {
            return Err(Error::ShapeMismatch {
                expected: vec![0; 2],
                actual: weights.shape().to_vec(),
            });
        }
        bias.expect_shape(&[weights.shape()[0]])?;
        Ok(Dense { weights, bias })
    }

    pub fn outputs(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn inputs(&self) -> usize {
        self.weights.shape()[1]
    }
}

fn feature_map_dims(input: &Tensor<impl Scalar>) -> Result<(usize, usize, usize)> {
    match *input.shape() {
        [c, h, w] => Ok((c, h, w)),
        _ => Err(Error::ShapeMismatch {
            expected: vec![0; 3],
            actual: input.shape().to_vec(),
        }),
    }
}

pub fn conv2d<S: Scalar>(input: &Tensor<S>, layer: &Conv2d<S>) -> Result<Tensor<S>> {
    let (channels, height, width) = feature_map_dims(input)?;
    let (kh, kw) = layer.kernel();
    let pad = layer.padding;
    if channels != layer.in_channels() {
        return Err(Error::ShapeMismatch {
            expected: vec![layer.in_channels(), height, width],
            actual: input.shape().to_vec(),
        });
    }
    let ph = height + pad.top + pad.bottom;
    let pw = width + pad.left + pad.right;
    if ph < kh || pw < kw {
        return Err(Error::ShapeMismatch {
            expected: vec![channels, kh, kw],
            actual: input.shape().to_vec(),
        });
    }

    // zero-padded copy keeps the inner loop branch-free
    let mut padded = vec![S::zero(); channels * ph * pw];
    for c in 0..channels {
        for y in 0..height {
            let src = &input.values()[(c * height + y) * width..][..width];
            let dst = (c * ph + y + pad.top) * pw + pad.left;
            padded[dst..dst + width].copy_from_slice(src);
        }
    }

    let (oh, ow) = (ph - kh + 1, pw - kw + 1);
    let filters = layer.filters();
    let weights = layer.weights.values();
    let mut out = Vec::with_capacity(filters * oh * ow);
    for f in 0..filters {
        let bias = layer.bias.values()[f];
        let kernel = &weights[f * channels * kh * kw..][..channels * kh * kw];
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = S::acc_init(bias);
                for c in 0..channels {
                    for ky in 0..kh {
                        let row = &padded[(c * ph + oy + ky) * pw + ox..][..kw];
                        let krow = &kernel[(c * kh + ky) * kw..][..kw];
                        for (&w, &x) in krow.iter().zip(row) {
                            acc = S::mac(acc, w, x);
                        }
                    }
                }
                out.push(S::finish(acc));
            }
        }
    }
    Tensor::new(vec![filters, oh, ow], out)
}

pub fn maxpool<S: Scalar>(input: &Tensor<S>) -> Result<Tensor<S>> {
    let (channels, height, width) = feature_map_dims(input)?;
    if height < 2 || width < 2 {
        return Err(Error::ShapeMismatch {
            expected: vec![channels, 2, 2],
            actual: input.shape().to_vec(),
        });
    }
    let (oh, ow) = (height / 2, width / 2);
    let v = input.values();
    let mut out = Vec::with_capacity(channels * oh * ow);
    for c in 0..channels {
        for oy in 0..oh {
            for ox in 0..ow {
                let at = |dy: usize, dx: usize| v[(c * height + 2 * oy + dy) * width + 2 * ox + dx];
                let mut m = at(0, 0);
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let x = at(dy, dx);
                    if x > m {
                        m = x;
                    }
                }
                out.push(m);
            }
        }
    }
    Tensor::new(vec![channels, oh, ow], out)
}

/// Matrix-vector product; any input shape is accepted as long as the flat
/// length matches (flattening is implicit).
pub fn dense<S: Scalar>(input: &Tensor<S>, layer: &Dense<S>) -> Result<Tensor<S>> {
    let n = layer.inputs();
    if input.len() != n {
        return Err(Error::ShapeMismatch {
            expected: vec![n],
            actual: input.shape().to_vec(),
        });
    }
    let x = input.values();
    let out = layer
        .weights
        .values()
        .chunks_exact(n)
        .zip(layer.bias.values())
        .map(|(row, &b)| {
            let acc = row
                .iter()
                .zip(x)
                .fold(S::acc_init(b), |acc, (&w, &xi)| S::mac(acc, w, xi));
            S::finish(acc)
        })
        .collect();
    Tensor::new(vec![layer.outputs()], out)
}

pub fn relu<S: Scalar>(input: &Tensor<S>) -> Tensor<S> {
    input.map(Scalar::relu)
}

impl<S: Scalar> Layer<S> {
    pub fn forward(&self, input: &Tensor<S>) -> Result<Tensor<S>> {
        match self {
            Layer::Conv(conv) => conv2d(input, conv),
            Layer::MaxPool => maxpool(input),
            Layer::Dense(fc) => dense(input, fc),
            Layer::Relu => Ok(relu(input)),
        }
    }

    pub fn param_count(&self) -> (usize, usize) {
        match self {
            Layer::Conv(c) => (c.weights.len(), c.bias.len()),
            Layer::Dense(d) => (d.weights.len(), d.bias.len()),
            Layer::MaxPool | Layer::Relu => (0, 0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixedpoint::Fx16;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fx(shape: Vec<usize>, v: &[f64]) -> Tensor<Fx16> {
        Tensor::from_reals(shape, v).unwrap()
    }

    /// Direct double-precision cross-correlation with explicit bounds checks.
    fn conv_oracle(
        x: &[f64],
        (c, h, w): (usize, usize, usize),
        k: &[f64],
        (f, kh, kw): (usize, usize, usize),
        b: &[f64],
        pad: Padding,
    ) -> Vec<f64> {
        let oh = h + pad.top + pad.bottom - kh + 1;
        let ow = w + pad.left + pad.right - kw + 1;
        let mut out = vec![0.0; f * oh * ow];
        for fi in 0..f {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut s = b[fi];
                    for ci in 0..c {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (oy + ky) as isize - pad.top as isize;
                                let ix = (ox + kx) as isize - pad.left as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                s += k[((fi * c + ci) * kh + ky) * kw + kx]
                                    * x[(ci * h + iy as usize) * w + ix as usize];
                            }
                        }
                    }
                    out[(fi * oh + oy) * ow + ox] = s;
                }
            }
        }
        out
    }

    fn grid(v: f64) -> f64 {
        (v * 2048.0).round() / 2048.0
    }

    #[test]
    fn zero_weights_give_bias_everywhere() {
        let conv = Conv2d::new(
            Padding { top: 1, left: 1, bottom: 2, right: 2 },
            Tensor::zeros(vec![2, 1, 4, 4]),
            fx(vec![2], &[0.75, -1.5]),
        )
        .unwrap();
        let input = fx(vec![1, 5, 5], &[3.0; 25]);
        let out = conv2d(&input, &conv).unwrap();
        assert_eq!(out.shape(), &[2, 5, 5]);
        assert!(out.values()[..25].iter().all(|&v| v == Fx16::from_real(0.75)));
        assert!(out.values()[25..].iter().all(|&v| v == Fx16::from_real(-1.5)));
    }

    #[test]
    fn identity_kernel_shifts_input() {
        // single 1.0 at kernel (1, 1) with pad top/left 1: output equals input
        let mut k = vec![0.0; 16];
        k[4 + 1] = 1.0;
        let conv = Conv2d::new(
            Padding { top: 1, left: 1, bottom: 2, right: 2 },
            fx(vec![1, 1, 4, 4], &k),
            Tensor::zeros(vec![1]),
        )
        .unwrap();
        let vals: Vec<f64> = (0..36).map(|i| i as f64 / 8.0).collect();
        let input = fx(vec![1, 6, 6], &vals);
        assert_eq!(conv2d(&input, &conv).unwrap(), input);

        // kernel (0, 0) without padding: shifted copy
        let mut k = vec![0.0; 4];
        k[0] = 1.0;
        let conv = Conv2d::new(Padding::NONE, fx(vec![1, 1, 2, 2], &k), Tensor::zeros(vec![1])).unwrap();
        let out = conv2d(&input, &conv).unwrap();
        assert_eq!(out.shape(), &[1, 5, 5]);
        for y in 0..5 {
            for x in 0..5 {
                assert_eq!(out.values()[y * 5 + x], input.values()[y * 6 + x]);
            }
        }
    }

    #[test]
    fn conv_matches_double_precision_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pad = Padding { top: 1, left: 1, bottom: 2, right: 2 };
        for _ in 0..20 {
            let x: Vec<f64> = (0..2 * 25).map(|_| grid(rng.gen_range(-1.0..1.0))).collect();
            let k: Vec<f64> = (0..3 * 2 * 16).map(|_| grid(rng.gen_range(-0.5..0.5))).collect();
            let b: Vec<f64> = (0..3).map(|_| grid(rng.gen_range(-0.5..0.5))).collect();
            let want = conv_oracle(&x, (2, 5, 5), &k, (3, 4, 4), &b, pad);
            let conv = Conv2d::new(pad, fx(vec![3, 2, 4, 4], &k), fx(vec![3], &b)).unwrap();
            let got = conv2d(&fx(vec![2, 5, 5], &x), &conv).unwrap().to_reals();
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() <= 2f64.powi(-10), "{g} vs {w}");
            }
        }
    }

    #[test]
    fn conv_rejects_wrong_channels() {
        let conv = Conv2d::new(Padding::NONE, Tensor::<f32>::zeros(vec![1, 2, 2, 2]), Tensor::zeros(vec![1])).unwrap();
        assert!(conv2d(&Tensor::zeros(vec![1, 4, 4]), &conv).is_err());
        assert!(conv2d(&Tensor::zeros(vec![16]), &conv).is_err());
    }

    #[test]
    fn maxpool_constant_and_floor() {
        let t = Tensor::<f32>::new(vec![2, 13, 13], vec![0.5; 2 * 169]).unwrap();
        let out = maxpool(&t).unwrap();
        assert_eq!(out.shape(), &[2, 6, 6]);
        assert!(out.values().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn maxpool_picks_window_maxima() {
        #[rustfmt::skip]
        let v = [
            0.0, 9.0, 0.0, 0.0,
            0.0, 0.0, 0.0, 7.0,
            5.0, 0.0, 0.0, 0.0,
            0.0, 0.0, 0.0, 8.0,
        ];
        let out = maxpool(&Tensor::<f64>::new(vec![1, 4, 4], v.to_vec()).unwrap()).unwrap();
        assert_eq!(out.values(), &[9.0, 7.0, 5.0, 8.0]);
        assert!(maxpool(&Tensor::<f64>::zeros(vec![1, 1, 4])).is_err());
    }

    #[test]
    fn dense_identity_and_bias() {
        let mut eye = vec![0.0; 16];
        for i in 0..4 {
            eye[i * 4 + i] = 1.0;
        }
        let layer = Dense::new(fx(vec![4, 4], &eye), Tensor::zeros(vec![4])).unwrap();
        let x = fx(vec![4], &[0.5, -2.0, 3.25, 0.0]);
        assert_eq!(dense(&x, &layer).unwrap(), x);

        let layer = Dense::new(Tensor::zeros(vec![3, 4]), fx(vec![3], &[1.0, -1.0, 0.25])).unwrap();
        assert_eq!(dense(&x, &layer).unwrap().to_reals(), vec![1.0, -1.0, 0.25]);
        assert!(dense(&fx(vec![3], &[0.0; 3]), &layer).is_err());
    }

    #[test]
    fn dense_matches_double_precision_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let w: Vec<f64> = (0..32).map(|_| grid(rng.gen_range(-1.0..1.0))).collect();
            let b: Vec<f64> = (0..4).map(|_| grid(rng.gen_range(-1.0..1.0))).collect();
            let x: Vec<f64> = (0..8).map(|_| grid(rng.gen_range(-2.0..2.0))).collect();
            let layer = Dense::new(fx(vec![4, 8], &w), fx(vec![4], &b)).unwrap();
            let got = dense(&fx(vec![8], &x), &layer).unwrap().to_reals();
            for o in 0..4 {
                let want: f64 = b[o] + (0..8).map(|i| w[o * 8 + i] * x[i]).sum::<f64>();
                assert!((got[o] - want).abs() <= 2f64.powi(-10));
            }
        }
    }

    #[test]
    fn relu_cases() {
        let neg = Tensor::<f32>::new(vec![3], vec![-1.0, -0.5, -3.0]).unwrap();
        assert!(relu(&neg).values().iter().all(|&v| v == 0.0));
        let pos = Tensor::<f32>::new(vec![2], vec![1.0, 0.5]).unwrap();
        assert_eq!(relu(&pos), pos);
        let mixed = Tensor::<f32>::new(vec![4], vec![-1.0, 2.0, -0.0, 3.0]).unwrap();
        assert_eq!(relu(&mixed).values(), &[0.0, 2.0, 0.0, 3.0]);
    }
}
