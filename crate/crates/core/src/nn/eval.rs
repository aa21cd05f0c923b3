use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::nn::{image_tensor, Model, Tensor};
use crate::scalar::Scalar;

/// What a prediction is compared against.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccuracyMode {
    /// True labels.
    #[default]
    Truth,
    /// Fault-free predictions of the same model.
    Golden,
}

/// Dataset pre-converted to network inputs, so repeated evaluations skip
/// pixel quantization.
#[derive(Clone, Debug)]
pub struct EvalSet<S> {
    inputs: Vec<Tensor<S>>,
    labels: Vec<u8>,
    golden: Option<Vec<u8>>,
}

impl<S: Scalar> EvalSet<S> {
    pub fn new(dataset: &Dataset) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let inputs = dataset.images().map(image_tensor).collect::<Result<_>>()?;
        Ok(EvalSet {
            inputs,
            labels: dataset.labels().to_vec(),
            golden: None,
        })
    }

    /// Records `model`'s own predictions as the golden reference.
    pub fn with_golden_from(mut self, model: &Model<S>) -> Result<Self> {
        self.golden = Some(predictions(model, &self)?);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn golden(&self) -> Option<&[u8]> {
        self.golden.as_deref()
    }

    fn reference(&self, mode: AccuracyMode) -> Result<&[u8]> {
        match mode {
            AccuracyMode::Truth => Ok(&self.labels),
            AccuracyMode::Golden => self
                .golden
                .as_deref()
                .ok_or_else(|| Error::Config("golden predictions have not been recorded".into())),
        }
    }
}

pub fn predictions<S: Scalar>(model: &Model<S>, set: &EvalSet<S>) -> Result<Vec<u8>> {
    set.inputs
        .par_iter()
        .map(|x| model.predict(x).map(|c| c as u8))
        .collect()
}

/// Number of images whose prediction matches the reference; the reduction
/// is an integer sum, so the result does not depend on the thread count.
pub fn count_correct<S: Scalar>(model: &Model<S>, set: &EvalSet<S>, mode: AccuracyMode) -> Result<usize> {
    let reference = set.reference(mode)?;
    set.inputs
        .par_iter()
        .zip(reference.par_iter())
        .map(|(x, &want)| model.predict(x).map(|c| usize::from(c == usize::from(want))))
        .try_reduce(|| 0, |a, b| Ok(a + b))
}

pub fn evaluate<S: Scalar>(model: &Model<S>, set: &EvalSet<S>, mode: AccuracyMode) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(count_correct(model, set, mode)? as f64 / set.len() as f64)
}
