use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Network, NetworkError};
use crate::dataset::{Clip, Label};
use crate::tensor::rng::SeededRng;
use crate::tensor::{Scalar, Tensor};

/// Two-class confusion counts with Suspicious as the positive class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub true_positive: u64,
    pub false_negative: u64,
    pub false_positive: u64,
    pub true_negative: u64,
}

impl ConfusionMatrix {
    pub fn new(true_positive: u64, false_negative: u64, false_positive: u64, true_negative: u64) -> Self {
        ConfusionMatrix { true_positive, false_negative, false_positive, true_negative }
    }

    pub fn record(&mut self, truth: Label, predicted: Label) {
        match (truth, predicted) {
            (Label::Suspicious, Label::Suspicious) => self.true_positive += 1,
            (Label::Suspicious, Label::Normal) => self.false_negative += 1,
            (Label::Normal, Label::Suspicious) => self.false_positive += 1,
            (Label::Normal, Label::Normal) => self.true_negative += 1,
        }
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        self.true_positive += other.true_positive;
        self.false_negative += other.false_negative;
        self.false_positive += other.false_positive;
        self.true_negative += other.true_negative;
    }

    pub fn total(&self) -> u64 {
        self.true_positive + self.false_negative + self.false_positive + self.true_negative
    }

    pub fn accuracy(&self) -> f64 {
        (self.true_positive + self.true_negative) as f64 / self.total() as f64
    }

    /// Recall on suspicious clips; `None` without any.
    pub fn suspicious_accuracy(&self) -> Option<f64> {
        let n = self.true_positive + self.false_negative;
        (n > 0).then(|| self.true_positive as f64 / n as f64)
    }

    /// Recall on normal clips; `None` without any.
    pub fn normal_accuracy(&self) -> Option<f64> {
        let n = self.true_negative + self.false_positive;
        (n > 0).then(|| self.true_negative as f64 / n as f64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub confusion: ConfusionMatrix,
    pub accuracy: f64,
    pub suspicious_accuracy: Option<f64>,
    pub normal_accuracy: Option<f64>,
}

impl EvalResult {
    pub fn from_confusion(confusion: ConfusionMatrix) -> Result<Self, NetworkError> {
        if confusion.total() == 0 {
            return Err(NetworkError::EmptyEvaluation);
        }
        Ok(EvalResult {
            confusion,
            accuracy: confusion.accuracy(),
            suspicious_accuracy: confusion.suspicious_accuracy(),
            normal_accuracy: confusion.normal_accuracy(),
        })
    }
}

fn check_clips<T: Scalar>(net: &Network<T>, clips: &[&Clip]) -> Result<(), NetworkError> {
    let expected = net.config().input_dims();
    for clip in clips {
        if clip.frames.dims() != expected {
            return Err(NetworkError::ClipShape {
                source_id: clip.file_name(),
                expected,
                got: clip.frames.dims().to_vec(),
            });
        }
    }
    Ok(())
}

/// Stacks clips into `[N, 1, D, H, W]` with their class indices.
pub(crate) fn stack<T: Scalar>(clips: &[&Clip]) -> Result<(Tensor<T>, Vec<usize>), NetworkError> {
    let dims = clips[0].frames.dims();
    let mut data = Vec::with_capacity(clips.len() * clips[0].frames.len());
    for c in clips {
        data.extend(c.frames.data().iter().map(|&v| T::of_f64(v as f64)));
    }
    let batch = Tensor::new(vec![clips.len(), 1, dims[0], dims[1], dims[2]], data)?;
    Ok((batch, clips.iter().map(|c| c.label.index()).collect()))
}

/// One shuffled pass over `clips` in batches of the configured size (the
/// last batch may be smaller). Returns the mean of the batch losses.
pub fn train_epoch<T: Scalar>(net: &mut Network<T>, clips: &[&Clip], rng: &mut SeededRng) -> Result<f64, NetworkError> {
    if !net.is_training() {
        return Err(NetworkError::Config("network is in evaluation mode".into()));
    }
    if clips.is_empty() {
        return Err(NetworkError::Config("no training clips".into()));
    }
    check_clips(net, clips)?;
    let mut order: Vec<usize> = (0..clips.len()).collect();
    order.shuffle(rng);
    let mut total = 0.0;
    let mut batches = 0usize;
    for chunk in order.chunks(net.config().batch_size) {
        let picked: Vec<&Clip> = chunk.iter().map(|&i| clips[i]).collect();
        let (batch, labels) = stack(&picked)?;
        total += net.train_step(&batch, &labels)?.as_f64();
        batches += 1;
    }
    Ok(total / batches as f64)
}

pub fn evaluate<T: Scalar>(net: &Network<T>, clips: &[&Clip]) -> Result<EvalResult, NetworkError> {
    if clips.is_empty() {
        return Err(NetworkError::EmptyEvaluation);
    }
    check_clips(net, clips)?;
    let mut confusion = ConfusionMatrix::default();
    for chunk in clips.chunks(net.config().batch_size) {
        let (batch, _) = stack(chunk)?;
        for (clip, p) in chunk.iter().zip(net.predict(&batch)?) {
            confusion.record(clip.label, Label::from_index(p).expect("binary prediction"));
        }
    }
    EvalResult::from_confusion(confusion)
}
