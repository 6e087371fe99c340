//! The binary 3D CNN: four 3×3×3 convolutions in two pairs, each pair
//! followed by 2×2×2 max pooling, then two dense layers.
//!
//! ```text
//! conv(1→f0) relu conv(f0→f1) relu pool
//! conv(f1→f2) relu conv(f2→f3) relu pool
//! flatten dense(→units) relu dense(→2)
//! ```

mod checkpoint;
mod train;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Resolution;
use crate::tensor::rng::{seeded_stream, streams};
use crate::tensor::{
    adam_step, conv3d_backward, conv3d_backward_params, conv3d_forward, dense_backward, dense_forward,
    maxpool3d_backward, maxpool3d_forward, relu, relu_backward, softmax_cross_entropy, AdamConfig, AdamState,
    ConvParams, PoolIndices, Scalar, Tensor, TensorError, KERNEL_VOLUME,
};

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use train::{evaluate, train_epoch, ConfusionMatrix, EvalResult};

pub const PAPER_FILTERS: [usize; 4] = [32, 32, 64, 64];
pub const PAPER_DENSE_UNITS: usize = 512;
pub const DEFAULT_BATCH_SIZE: usize = 8;
pub const DEFAULT_EPOCHS: usize = 100;
/// Building a network larger than this logs a warning.
pub const PARAMETER_WARNING_THRESHOLD: usize = 50_000_000;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("configuration mismatch in {}", fields.join(", "))]
    ConfigMismatch { fields: Vec<String> },
    #[error("clip {source_id} is {got:?}, network expects {expected:?}")]
    ClipShape { source_id: String, expected: [usize; 3], got: Vec<usize> },
    #[error("evaluation set is empty")]
    EmptyEvaluation,
    #[error("checkpoint format error at byte {offset}: {detail}")]
    Format { offset: u64, detail: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArchitectureMode {
    /// Filter counts 32/32/64/64 and 512 dense units.
    Paper,
    /// Any positive widths.
    Custom,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub mode: ArchitectureMode,
    pub depth: usize,
    pub height: usize,
    pub width: usize,
    pub filters: [usize; 4],
    pub dense_units: usize,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl NetworkConfig {
    pub fn paper(depth: usize, resolution: Resolution) -> Self {
        NetworkConfig {
            mode: ArchitectureMode::Paper,
            depth,
            height: resolution.height,
            width: resolution.width,
            filters: PAPER_FILTERS,
            dense_units: PAPER_DENSE_UNITS,
            adam: AdamConfig::default(),
            batch_size: DEFAULT_BATCH_SIZE,
            epochs: DEFAULT_EPOCHS,
            seed: 0,
        }
    }

    pub fn custom(depth: usize, resolution: Resolution, filters: [usize; 4], dense_units: usize) -> Self {
        NetworkConfig { mode: ArchitectureMode::Custom, filters, dense_units, ..Self::paper(depth, resolution) }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_learning_rate(mut self, lr: f64) -> Self {
        self.adam.learning_rate = lr;
        self
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size;
        self
    }

    pub fn with_epochs(mut self, epochs: usize) -> Self {
        self.epochs = epochs;
        self
    }

    pub fn input_dims(&self) -> [usize; 3] {
        [self.depth, self.height, self.width]
    }

    /// Spatial extent after both pooling stages.
    pub fn pooled_dims(&self) -> [usize; 3] {
        self.input_dims().map(|e| e / 2 / 2)
    }

    pub fn flatten_width(&self) -> usize {
        self.filters[3] * self.pooled_dims().iter().product::<usize>()
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        if self.mode == ArchitectureMode::Paper
            && (self.filters != PAPER_FILTERS || self.dense_units != PAPER_DENSE_UNITS)
        {
            return Err(NetworkError::Config(format!(
                "paper mode fixes filters {PAPER_FILTERS:?} and {PAPER_DENSE_UNITS} dense units; use custom mode for {:?}/{}",
                self.filters, self.dense_units
            )));
        }
        if self.filters.contains(&0) || self.dense_units == 0 {
            return Err(NetworkError::Config("layer widths must be positive".into()));
        }
        if self.pooled_dims().contains(&0) {
            return Err(NetworkError::Config(format!(
                "input {:?} collapses to zero after two 2×2×2 poolings (each extent must be at least 4)",
                self.input_dims()
            )));
        }
        if self.batch_size == 0 {
            return Err(NetworkError::Config("batch size must be positive".into()));
        }
        let lr = self.adam.learning_rate;
        if !(lr.is_finite() && lr >= 0.0) {
            return Err(NetworkError::Config(format!("learning rate {lr} must be finite and non-negative")));
        }
        Ok(())
    }

    /// `(name, dims)` of every parameter tensor in network order.
    pub fn parameter_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut shapes = Vec::with_capacity(12);
        let mut cin = 1;
        for (i, &cout) in self.filters.iter().enumerate() {
            shapes.push((format!("conv{}.weight", i + 1), vec![cout, cin, 3, 3, 3]));
            shapes.push((format!("conv{}.bias", i + 1), vec![cout]));
            cin = cout;
        }
        shapes.push(("dense1.weight".into(), vec![self.flatten_width(), self.dense_units]));
        shapes.push(("dense1.bias".into(), vec![self.dense_units]));
        shapes.push(("dense2.weight".into(), vec![self.dense_units, 2]));
        shapes.push(("dense2.bias".into(), vec![2]));
        shapes
    }

    /// Closed form: `Σ (c_in·27 + 1)·c_out` over convolutions plus
    /// `(fan_in + 1)·fan_out` over dense layers.
    pub fn parameter_count(&self) -> usize {
        let mut total = 0;
        let mut cin = 1;
        for &cout in &self.filters {
            total += (cin * KERNEL_VOLUME + 1) * cout;
            cin = cout;
        }
        total + (self.flatten_width() + 1) * self.dense_units + (self.dense_units + 1) * 2
    }

    /// Names of architecture fields that differ from `other`. Training
    /// hyperparameters are not compared.
    pub fn architecture_differences(&self, other: &NetworkConfig) -> Vec<String> {
        let mut fields = Vec::new();
        let mut check = |name: &str, same: bool| {
            if !same {
                fields.push(name.to_string());
            }
        };
        check("mode", self.mode == other.mode);
        check("depth", self.depth == other.depth);
        check("height", self.height == other.height);
        check("width", self.width == other.width);
        check("filters", self.filters == other.filters);
        check("dense_units", self.dense_units == other.dense_units);
        fields
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network<T: Scalar = f32> {
    config: NetworkConfig,
    names: Vec<String>,
    params: Vec<Tensor<T>>,
    optimizer: Vec<AdamState<T>>,
    training: bool,
}

/// Intermediate values kept by a training forward pass.
struct Cache<T> {
    conv_inputs: [Tensor<T>; 4],
    conv_outputs: [Tensor<T>; 4],
    pools: [PoolIndices; 2],
    flat: Tensor<T>,
    hidden: Tensor<T>,
}

pub fn build_network<T: Scalar>(config: &NetworkConfig) -> Result<Network<T>, NetworkError> {
    config.validate()?;
    let count = config.parameter_count();
    if count > PARAMETER_WARNING_THRESHOLD {
        log::warn!(
            "network for input {:?} has {count} parameters (over {PARAMETER_WARNING_THRESHOLD})",
            config.input_dims()
        );
    }
    let mut rng = seeded_stream(config.seed, streams::INIT);
    let mut names = Vec::new();
    let mut params = Vec::new();
    for (name, dims) in config.parameter_shapes() {
        let tensor = if name.ends_with(".bias") {
            Tensor::zeros(dims)?
        } else {
            let fan_in: usize = if dims.len() == 2 { dims[0] } else { dims[1..].iter().product() };
            let limit = (6.0 / fan_in as f64).sqrt();
            Tensor::from_fn(dims, |_| T::of_f64(rng.random_range(-limit..limit)))?
        };
        names.push(name);
        params.push(tensor);
    }
    let optimizer = params.iter().map(|p| AdamState::new(config.adam, p.len())).collect();
    Ok(Network { config: config.clone(), names, params, optimizer, training: true })
}

impl<T: Scalar> Network<T> {
    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn parameters(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.params)
    }

    pub fn parameters_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(self.params.iter_mut())
    }

    pub fn optimizer_states(&self) -> &[AdamState<T>] {
        &self.optimizer
    }

    /// Number of optimizer updates applied so far.
    pub fn step_count(&self) -> u64 {
        self.optimizer.first().map_or(0, AdamState::step_count)
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn set_training(&mut self, training: bool) {
        self.training = training;
    }

    pub(crate) fn from_parts(
        config: NetworkConfig,
        params: Vec<Tensor<T>>,
        optimizer: Vec<AdamState<T>>,
    ) -> Result<Self, NetworkError> {
        config.validate()?;
        let shapes = config.parameter_shapes();
        if params.len() != shapes.len() || optimizer.len() != shapes.len() {
            return Err(NetworkError::Config(format!(
                "expected {} parameter tensors, got {} with {} optimizer states",
                shapes.len(),
                params.len(),
                optimizer.len()
            )));
        }
        for ((name, dims), p) in shapes.iter().zip(&params) {
            if p.dims() != dims.as_slice() {
                return Err(NetworkError::Config(format!("{name} is {:?}, expected {dims:?}", p.dims())));
            }
        }
        let names = shapes.into_iter().map(|(n, _)| n).collect();
        Ok(Network { config, names, params, optimizer, training: true })
    }

    fn conv(&self, layer: usize) -> Result<ConvParams<T>, TensorError> {
        ConvParams::new(self.params[2 * layer].clone(), self.params[2 * layer + 1].clone())
    }

    fn check_batch(&self, batch: &Tensor<T>) -> Result<(), NetworkError> {
        let d = batch.dims();
        let [depth, height, width] = self.config.input_dims();
        if d.len() != 5 || d[1] != 1 || d[2..] != [depth, height, width] {
            return Err(TensorError::shape(
                "network_forward",
                format!("batch is {d:?}, expected [N, 1, {depth}, {height}, {width}]"),
            )
            .into());
        }
        Ok(())
    }

    fn forward_cached(&self, batch: &Tensor<T>) -> Result<(Tensor<T>, Cache<T>), NetworkError> {
        self.check_batch(batch)?;
        let n = batch.dims()[0];
        let c1 = relu(&conv3d_forward(batch, &self.conv(0)?)?);
        let c2 = relu(&conv3d_forward(&c1, &self.conv(1)?)?);
        let (p1, i1) = maxpool3d_forward(&c2)?;
        let c3 = relu(&conv3d_forward(&p1, &self.conv(2)?)?);
        let c4 = relu(&conv3d_forward(&c3, &self.conv(3)?)?);
        let (p2, i2) = maxpool3d_forward(&c4)?;
        let flat = p2.reshape(vec![n, self.config.flatten_width()])?;
        let hidden = relu(&dense_forward(&flat, &self.params[8], &self.params[9])?);
        let logits = dense_forward(&hidden, &self.params[10], &self.params[11])?;
        let cache = Cache {
            conv_inputs: [batch.clone(), c1.clone(), p1, c3.clone()],
            conv_outputs: [c1, c2, c3, c4],
            pools: [i1, i2],
            flat,
            hidden,
        };
        Ok((logits, cache))
    }

    /// Logits `[N, 2]` for a batch `[N, 1, D, H, W]`.
    pub fn forward(&self, batch: &Tensor<T>) -> Result<Tensor<T>, NetworkError> {
        Ok(self.forward_cached(batch)?.0)
    }

    /// Mean cross-entropy over the batch and its gradient with respect to
    /// every parameter tensor, in [`Network::parameters`] order.
    pub fn loss_and_gradients(&self, batch: &Tensor<T>, labels: &[usize]) -> Result<(T, Vec<Tensor<T>>), NetworkError> {
        let (logits, cache) = self.forward_cached(batch)?;
        let ce = softmax_cross_entropy(&logits, labels)?;
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.params.len()];

        let d2 = dense_backward(&cache.hidden, &self.params[10], &ce.grad_logits)?;
        grads[10] = Some(d2.weights);
        grads[11] = Some(d2.bias);
        let g_hidden = relu_backward(&cache.hidden, &d2.input)?;
        let d1 = dense_backward(&cache.flat, &self.params[8], &g_hidden)?;
        grads[8] = Some(d1.weights);
        grads[9] = Some(d1.bias);

        let pooled = cache.pools[1].output_dims().to_vec();
        let mut g = maxpool3d_backward(&cache.pools[1], &d1.input.reshape(pooled)?)?;
        for layer in (0..4).rev() {
            if layer == 1 {
                g = maxpool3d_backward(&cache.pools[0], &g)?;
            }
            let g_pre = relu_backward(&cache.conv_outputs[layer], &g)?;
            if layer == 0 {
                let (w, b) = conv3d_backward_params(&cache.conv_inputs[0], &self.conv(0)?, &g_pre)?;
                grads[0] = Some(w);
                grads[1] = Some(b);
                break;
            }
            let cg = conv3d_backward(&cache.conv_inputs[layer], &self.conv(layer)?, &g_pre)?;
            grads[2 * layer] = Some(cg.weights);
            grads[2 * layer + 1] = Some(cg.bias);
            g = cg.input;
        }
        let grads = grads.into_iter().map(|g| g.expect("every layer visited")).collect();
        Ok((ce.loss, grads))
    }

    /// One Adam update from precomputed gradients. Nothing changes if any
    /// gradient is non-finite.
    pub fn apply_gradients(&mut self, grads: &[Tensor<T>]) -> Result<(), NetworkError> {
        if grads.len() != self.params.len() {
            return Err(NetworkError::Config(format!(
                "{} gradients for {} parameters",
                grads.len(),
                self.params.len()
            )));
        }
        for (name, g) in self.names.iter().zip(grads) {
            g.ensure_finite("apply_gradients", name)?;
        }
        for (((name, p), g), state) in self.names.iter().zip(&mut self.params).zip(grads).zip(&mut self.optimizer) {
            adam_step(name, p.data_mut(), g.data(), state)?;
        }
        Ok(())
    }

    pub fn train_step(&mut self, batch: &Tensor<T>, labels: &[usize]) -> Result<T, NetworkError> {
        let (loss, grads) = self.loss_and_gradients(batch, labels)?;
        self.apply_gradients(&grads)?;
        Ok(loss)
    }

    /// Predicted class per row (1 = Suspicious). Ties go to Normal.
    pub fn predict(&self, batch: &Tensor<T>) -> Result<Vec<usize>, NetworkError> {
        let logits = self.forward(batch)?;
        Ok(logits.data().chunks_exact(2).map(|r| usize::from(r[1] > r[0])).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::rng::seeded_rng;

    fn small() -> NetworkConfig {
        NetworkConfig::custom(4, Resolution::new(4, 4), [2, 2, 2, 2], 3).with_seed(3)
    }

    #[test]
    fn paper_parameter_count_at_32x24_depth_10() {
        let c = NetworkConfig::paper(10, Resolution::new(32, 24));
        assert_eq!(c.flatten_width(), 6144);
        assert_eq!(c.parameter_count(), 896 + 27_680 + 55_360 + 110_656 + 3_146_240 + 1_026);
        assert_eq!(c.parameter_count(), 3_341_858);
        let shapes = c.parameter_shapes();
        assert_eq!(shapes.iter().map(|(_, d)| d.iter().product::<usize>()).sum::<usize>(), 3_341_858);
    }

    #[test]
    fn config_validation() {
        let mut c = NetworkConfig::paper(10, Resolution::new(32, 24));
        c.filters = [8, 8, 16, 16];
        assert!(c.validate().is_err());
        c.mode = ArchitectureMode::Custom;
        assert!(c.validate().is_ok());
        assert!(NetworkConfig::paper(3, Resolution::new(32, 24)).validate().is_err());
    }

    #[test]
    fn build_matches_closed_form_and_is_seeded() {
        let c = small();
        let a: Network = build_network(&c).unwrap();
        assert_eq!(a.parameter_count(), c.parameter_count());
        assert_eq!(a, build_network(&c).unwrap());
        assert_ne!(a, build_network(&c.clone().with_seed(4)).unwrap());
        let (_, b) = a.parameters().find(|(n, _)| *n == "conv2.bias").unwrap();
        assert!(b.data().iter().all(|&v| v == 0.0));
        let (_, w) = a.parameters().next().unwrap();
        let limit = (6.0f32 / 27.0).sqrt();
        assert!(w.data().iter().all(|v| v.abs() <= limit));
    }

    #[test]
    fn forward_shapes_and_duplicates() {
        let net: Network = build_network(&small()).unwrap();
        let mut rng = seeded_rng(1);
        let one: Vec<f32> = (0..64).map(|_| rng.random()).collect();
        let batch = Tensor::new(vec![2, 1, 4, 4, 4], [one.clone(), one].concat()).unwrap();
        let logits = net.forward(&batch).unwrap();
        assert_eq!(logits.dims(), &[2, 2]);
        assert_eq!(logits.data()[..2], logits.data()[2..]);
        let wrong = Tensor::<f32>::zeros(vec![1, 1, 4, 4, 5]).unwrap();
        assert!(net.forward(&wrong).is_err());
    }

    #[test]
    fn zero_learning_rate_leaves_parameters() {
        let mut net: Network = build_network(&small().with_learning_rate(0.0)).unwrap();
        let before = net.params.clone();
        let batch = Tensor::from_fn(vec![2, 1, 4, 4, 4], |i| (i % 7) as f32 / 7.0).unwrap();
        let l1 = net.train_step(&batch, &[0, 1]).unwrap();
        let l2 = net.train_step(&batch, &[0, 1]).unwrap();
        assert_eq!(before, net.params);
        assert_eq!(l1, l2);
        assert_eq!(net.step_count(), 2);
    }

    #[test]
    fn differences_name_fields() {
        let a = small();
        let mut b = a.clone();
        b.depth = 8;
        b.dense_units = 4;
        b.seed = 99;
        assert_eq!(a.architecture_differences(&b), vec!["depth", "dense_units"]);
    }
}
