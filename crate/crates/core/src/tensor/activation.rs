use super::{Scalar, Tensor, TensorError};

pub fn relu<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    let mut out = input.clone();
    out.data_mut().iter_mut().for_each(|v| *v = v.max(T::zero()));
    out
}

/// Masks `grad_out` where `input <= 0` (the derivative at zero is taken as 0).
pub fn relu_backward<T: Scalar>(input: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
    if input.dims() != grad_out.dims() {
        return Err(TensorError::shape(
            "relu_backward",
            format!("input {:?} vs grad_out {:?}", input.dims(), grad_out.dims()),
        ));
    }
    let mut grad = grad_out.clone();
    for (g, &x) in grad.data_mut().iter_mut().zip(input.data()) {
        if x <= T::zero() {
            *g = T::zero();
        }
    }
    Ok(grad)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CrossEntropy<T = f32> {
    /// Mean negative log-probability of the true class over the batch.
    pub loss: T,
    pub probabilities: Tensor<T>,
    /// `(probabilities − one_hot) / N`.
    pub grad_logits: Tensor<T>,
}

/// Two-class softmax with cross-entropy against `labels` (0 = Normal,
/// 1 = Suspicious).
pub fn softmax_cross_entropy<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<CrossEntropy<T>, TensorError> {
    const OP: &str = "softmax_cross_entropy";
    logits.expect_rank(OP, 2)?;
    let (n, classes) = (logits.dims()[0], logits.dims()[1]);
    if classes != 2 {
        return Err(TensorError::shape(OP, format!("expected 2 classes, got {classes}")));
    }
    if labels.len() != n {
        return Err(TensorError::shape(OP, format!("{} labels for {n} rows", labels.len())));
    }
    if let Some(bad) = labels.iter().position(|&l| l > 1) {
        return Err(TensorError::Invalid {
            op: OP,
            detail: format!("label {} at row {bad} is not 0 or 1", labels[bad]),
        });
    }
    logits.ensure_finite(OP, "logits")?;

    let scale = T::one() / T::of_f64(n as f64);
    let mut probs = Vec::with_capacity(n * 2);
    let mut grad = Vec::with_capacity(n * 2);
    let mut loss = T::zero();
    for (row, &label) in logits.data().chunks_exact(2).zip(labels) {
        let peak = row[0].max(row[1]);
        let shifted = [row[0] - peak, row[1] - peak];
        let exps = [shifted[0].exp(), shifted[1].exp()];
        let total = exps[0] + exps[1];
        let log_total = total.ln();
        loss -= shifted[label] - log_total;
        for (class, e) in exps.into_iter().enumerate() {
            let p = e / total;
            probs.push(p);
            let target = if class == label { T::one() } else { T::zero() };
            grad.push((p - target) * scale);
        }
    }
    Ok(CrossEntropy {
        loss: loss * scale,
        probabilities: Tensor::new(vec![n, 2], probs)?,
        grad_logits: Tensor::new(vec![n, 2], grad)?,
    })
}
