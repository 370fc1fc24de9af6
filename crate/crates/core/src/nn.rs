//! Minimal fully-connected network with explicit forward/backward passes,
//! momentum SGD, and a binary checkpoint container.
//!
//! Deliberately small: dense layers with ReLU or identity activations, f64
//! parameters, and no stochastic layers, so training trajectories are
//! bitwise reproducible from a seed.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::numeric::LogitVector;
use crate::{Error, Result};

const CHECKPOINT_MAGIC: [u8; 8] = *b"RKDMLP\0\x01";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    ReLU,
    Identity,
}

/// One dense layer: `output_dim x input_dim` weights plus bias, followed by
/// the activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub activation: Activation,
}

/// Builds the layer chain for an MLP `input -> hidden... -> output` with
/// ReLU on hidden layers and raw logits out.
pub fn mlp_specs(input_dim: usize, hidden: &[usize], output_dim: usize) -> Vec<LayerSpec> {
    let mut dims = vec![input_dim];
    dims.extend_from_slice(hidden);
    dims.push(output_dim);
    (0..dims.len() - 1)
        .map(|i| LayerSpec {
            input_dim: dims[i],
            output_dim: dims[i + 1],
            activation: if i + 2 == dims.len() {
                Activation::Identity
            } else {
                Activation::ReLU
            },
        })
        .collect()
}

fn validate_specs(specs: &[LayerSpec]) -> Result<()> {
    if specs.is_empty() {
        return Err(Error::InvalidConfig("network needs at least one layer".into()));
    }
    for spec in specs {
        if spec.input_dim == 0 || spec.output_dim == 0 {
            return Err(Error::InvalidConfig(format!(
                "layer dims must be >= 1, got {}x{}",
                spec.input_dim, spec.output_dim
            )));
        }
    }
    for pair in specs.windows(2) {
        if pair[0].output_dim != pair[1].input_dim {
            return Err(Error::InvalidConfig(format!(
                "layer output dim {} does not chain into next input dim {}",
                pair[0].output_dim, pair[1].input_dim
            )));
        }
    }
    if specs.last().unwrap().activation != Activation::Identity {
        return Err(Error::InvalidConfig(
            "final layer must have identity activation (raw logits out)".into(),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
struct Layer {
    spec: LayerSpec,
    /// Row-major `output_dim x input_dim`.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

/// The parameters of an MLP, together with the seed they were drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    layers: Vec<Layer>,
    seed: u64,
}

/// SGD hyperparameters for one training run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "learning_rate",
                message: format!("must be positive, got {}", self.learning_rate),
            });
        }
        if !self.momentum.is_finite() || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidParameter {
                name: "momentum",
                message: format!("must lie in [0, 1), got {}", self.momentum),
            });
        }
        if !self.weight_decay.is_finite() || self.weight_decay < 0.0 {
            return Err(Error::InvalidParameter {
                name: "weight_decay",
                message: format!("must be nonnegative, got {}", self.weight_decay),
            });
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter {
                name: "batch_size",
                message: "must be at least 1".into(),
            });
        }
        Ok(())
    }
}

/// Intermediates retained by [`forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer (layer_inputs[0] is the network input).
    layer_inputs: Vec<Vec<f64>>,
    /// Pre-activation values of each layer.
    pre_activations: Vec<Vec<f64>>,
}

/// Per-parameter gradients, same shapes as the model.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

impl ParamGrads {
    pub fn zeros_like(params: &MlpParams) -> Self {
        Self {
            weights: params.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            biases: params.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    pub fn accumulate(&mut self, other: &ParamGrads) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for w in &mut self.weights {
            for v in w {
                *v *= factor;
            }
        }
        for b in &mut self.biases {
            for v in b {
                *v *= factor;
            }
        }
    }
}

/// Momentum buffers for [`sgd_step`].
#[derive(Debug, Clone)]
pub struct SgdState {
    velocity_w: Vec<Vec<f64>>,
    velocity_b: Vec<Vec<f64>>,
}

impl SgdState {
    pub fn new(params: &MlpParams) -> Self {
        Self {
            velocity_w: params.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            velocity_b: params.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }
}

/// Seeded He-style uniform initialization: weights from
/// `U(-sqrt(6/fan_in), sqrt(6/fan_in))`, biases zero.
pub fn init_mlp(specs: &[LayerSpec], seed: u64) -> Result<MlpParams> {
    validate_specs(specs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = specs
        .iter()
        .map(|&spec| {
            let limit = (6.0 / spec.input_dim as f64).sqrt();
            let weights = (0..spec.input_dim * spec.output_dim)
                .map(|_| rng.gen_range(-limit..limit))
                .collect();
            Layer {
                spec,
                weights,
                bias: vec![0.0; spec.output_dim],
            }
        })
        .collect();
    Ok(MlpParams { layers, seed })
}

impl MlpParams {
    pub fn input_dim(&self) -> usize {
        self.layers[0].spec.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().spec.output_dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Visits every parameter mutably; used by tests to probe gradients.
    pub fn for_each_param_mut<F: FnMut(&mut f64)>(&mut self, mut f: F) {
        for layer in &mut self.layers {
            for w in &mut layer.weights {
                f(w);
            }
            for b in &mut layer.bias {
                f(b);
            }
        }
    }
}

/// Affine + activation chain. Returns the raw output logits and the cache
/// needed by [`backward`].
pub fn forward(params: &MlpParams, input: &[f64]) -> Result<(LogitVector, ForwardCache)> {
    if input.len() != params.input_dim() {
        return Err(Error::ShapeMismatch {
            expected: params.input_dim(),
            got: input.len(),
        });
    }
    let mut layer_inputs = Vec::with_capacity(params.layers.len());
    let mut pre_activations = Vec::with_capacity(params.layers.len());
    let mut current = input.to_vec();
    for layer in &params.layers {
        let mut pre = vec![0.0; layer.spec.output_dim];
        for (o, pre_o) in pre.iter_mut().enumerate() {
            let row = &layer.weights[o * layer.spec.input_dim..(o + 1) * layer.spec.input_dim];
            let mut acc = layer.bias[o];
            for (w, x) in row.iter().zip(&current) {
                acc += w * x;
            }
            *pre_o = acc;
        }
        let post = match layer.spec.activation {
            Activation::ReLU => pre.iter().map(|&v| v.max(0.0)).collect(),
            Activation::Identity => pre.clone(),
        };
        layer_inputs.push(current);
        pre_activations.push(pre);
        current = post;
    }
    let logits = LogitVector::new(current)?;
    Ok((logits, ForwardCache { layer_inputs, pre_activations }))
}

/// Logits without the cache, for inference.
pub fn forward_logits(params: &MlpParams, input: &[f64]) -> Result<LogitVector> {
    forward(params, input).map(|(logits, _)| logits)
}

/// Exact parameter gradients of the scalar loss whose logit gradient is
/// `grad_logits`, by reverse-mode chain rule through the cached forward.
///
/// ReLU uses subgradient 0 at exactly 0.
pub fn backward(
    params: &MlpParams,
    cache: &ForwardCache,
    grad_logits: &[f64],
) -> Result<ParamGrads> {
    if cache.layer_inputs.len() != params.layers.len() {
        return Err(Error::InvalidConfig(
            "forward cache does not match this network".into(),
        ));
    }
    if grad_logits.len() != params.output_dim() {
        return Err(Error::ShapeMismatch {
            expected: params.output_dim(),
            got: grad_logits.len(),
        });
    }
    for (layer, input) in params.layers.iter().zip(&cache.layer_inputs) {
        if input.len() != layer.spec.input_dim {
            return Err(Error::InvalidConfig(
                "forward cache does not match this network".into(),
            ));
        }
    }

    let mut grads = ParamGrads::zeros_like(params);
    let mut delta = grad_logits.to_vec();
    for (l, layer) in params.layers.iter().enumerate().rev() {
        let pre = &cache.pre_activations[l];
        if layer.spec.activation == Activation::ReLU {
            for (d, &p) in delta.iter_mut().zip(pre) {
                if p <= 0.0 {
                    *d = 0.0;
                }
            }
        }
        let input = &cache.layer_inputs[l];
        let gw = &mut grads.weights[l];
        for (o, &d) in delta.iter().enumerate() {
            let row = &mut gw[o * layer.spec.input_dim..(o + 1) * layer.spec.input_dim];
            for (g, &x) in row.iter_mut().zip(input) {
                *g = d * x;
            }
            grads.biases[l][o] = d;
        }
        if l > 0 {
            let mut next = vec![0.0; layer.spec.input_dim];
            for (o, &d) in delta.iter().enumerate() {
                let row = &layer.weights[o * layer.spec.input_dim..(o + 1) * layer.spec.input_dim];
                for (n, &w) in next.iter_mut().zip(row) {
                    *n += d * w;
                }
            }
            delta = next;
        }
    }
    Ok(grads)
}

/// One momentum-SGD update: `v = momentum*v + (g + weight_decay*w)`,
/// `w -= learning_rate * v`.
pub fn sgd_step(
    params: &mut MlpParams,
    grads: &ParamGrads,
    cfg: &SgdConfig,
    state: &mut SgdState,
) -> Result<()> {
    cfg.validate()?;
    if grads.weights.len() != params.layers.len() {
        return Err(Error::InvalidConfig("gradient shapes do not match model".into()));
    }
    for (l, layer) in params.layers.iter_mut().enumerate() {
        if grads.weights[l].len() != layer.weights.len()
            || grads.biases[l].len() != layer.bias.len()
        {
            return Err(Error::InvalidConfig("gradient shapes do not match model".into()));
        }
        for ((w, &g), v) in layer
            .weights
            .iter_mut()
            .zip(&grads.weights[l])
            .zip(&mut state.velocity_w[l])
        {
            *v = cfg.momentum * *v + g + cfg.weight_decay * *w;
            *w -= cfg.learning_rate * *v;
        }
        for ((b, &g), v) in layer
            .bias
            .iter_mut()
            .zip(&grads.biases[l])
            .zip(&mut state.velocity_b[l])
        {
            *v = cfg.momentum * *v + g;
            *b -= cfg.learning_rate * *v;
        }
    }
    Ok(())
}

/// Serializes the model to the checkpoint container: an 8-byte magic,
/// format version, seed, layer specs, then row-major little-endian `f64`
/// parameter arrays. Round-trips bit-exactly.
pub fn save_checkpoint(params: &MlpParams, path: &Path) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(&CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&params.seed.to_le_bytes());
    buf.extend_from_slice(&(params.layers.len() as u32).to_le_bytes());
    for layer in &params.layers {
        buf.extend_from_slice(&(layer.spec.input_dim as u32).to_le_bytes());
        buf.extend_from_slice(&(layer.spec.output_dim as u32).to_le_bytes());
        buf.push(match layer.spec.activation {
            Activation::ReLU => 0,
            Activation::Identity => 1,
        });
    }
    for layer in &params.layers {
        for w in &layer.weights {
            buf.extend_from_slice(&w.to_le_bytes());
        }
        for b in &layer.bias {
            buf.extend_from_slice(&b.to_le_bytes());
        }
    }
    // Write through a temp file so a crash cannot leave a torn checkpoint.
    let tmp = path.with_extension("tmp");
    let mut file = fs::File::create(&tmp)?;
    file.write_all(&buf)?;
    file.sync_all()?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<MlpParams> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut cursor = 0usize;
    let take = |cursor: &mut usize, n: usize| -> Result<&[u8]> {
        if *cursor + n > bytes.len() {
            return Err(Error::CheckpointMismatch("file truncated".into()));
        }
        let s = &bytes[*cursor..*cursor + n];
        *cursor += n;
        Ok(s)
    };
    if take(&mut cursor, 8)? != CHECKPOINT_MAGIC {
        return Err(Error::CheckpointMismatch("bad magic header".into()));
    }
    let version = u32::from_le_bytes(take(&mut cursor, 4)?.try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::CheckpointMismatch(format!(
            "unsupported format version {version}"
        )));
    }
    let seed = u64::from_le_bytes(take(&mut cursor, 8)?.try_into().unwrap());
    let num_layers = u32::from_le_bytes(take(&mut cursor, 4)?.try_into().unwrap()) as usize;
    let mut specs = Vec::with_capacity(num_layers);
    for _ in 0..num_layers {
        let input_dim = u32::from_le_bytes(take(&mut cursor, 4)?.try_into().unwrap()) as usize;
        let output_dim = u32::from_le_bytes(take(&mut cursor, 4)?.try_into().unwrap()) as usize;
        let activation = match take(&mut cursor, 1)?[0] {
            0 => Activation::ReLU,
            1 => Activation::Identity,
            other => {
                return Err(Error::CheckpointMismatch(format!(
                    "unknown activation tag {other}"
                )))
            }
        };
        specs.push(LayerSpec { input_dim, output_dim, activation });
    }
    validate_specs(&specs).map_err(|e| Error::CheckpointMismatch(e.to_string()))?;
    let mut layers = Vec::with_capacity(num_layers);
    for spec in specs {
        let mut read_f64s = |n: usize| -> Result<Vec<f64>> {
            let mut out = Vec::with_capacity(n);
            for _ in 0..n {
                let raw = take(&mut cursor, 8)?;
                out.push(f64::from_le_bytes(raw.try_into().unwrap()));
            }
            Ok(out)
        };
        let weights = read_f64s(spec.input_dim * spec.output_dim)?;
        let bias = read_f64s(spec.output_dim)?;
        layers.push(Layer { spec, weights, bias });
    }
    if cursor != bytes.len() {
        return Err(Error::CheckpointMismatch("trailing bytes after parameters".into()));
    }
    Ok(MlpParams { layers, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn tiny_specs() -> Vec<LayerSpec> {
        mlp_specs(2, &[4], 3)
    }

    #[test]
    fn mlp_specs_shapes_chain() {
        let specs = mlp_specs(32, &[256, 256], 20);
        assert_eq!(specs.len(), 3);
        assert_eq!(specs[0].input_dim, 32);
        assert_eq!(specs[2].output_dim, 20);
        assert_eq!(specs[0].activation, Activation::ReLU);
        assert_eq!(specs[2].activation, Activation::Identity);
        assert!(validate_specs(&specs).is_ok());
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let a = init_mlp(&tiny_specs(), 42).unwrap();
        let b = init_mlp(&tiny_specs(), 42).unwrap();
        assert_eq!(a, b);
        let c = init_mlp(&tiny_specs(), 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn single_linear_layer_is_valid() {
        let specs = mlp_specs(4, &[], 2);
        assert_eq!(specs.len(), 1);
        let params = init_mlp(&specs, 1).unwrap();
        let (logits, _) = forward(&params, &[1.0, 0.0, -1.0, 2.0]).unwrap();
        assert_eq!(logits.channels(), 2);
    }

    #[test]
    fn init_weight_distribution_sanity() {
        // 100x100 layer = 1e4 weights from U(-L, L); the empirical mean must
        // fall within 3 standard errors of zero, sigma_mean = L/sqrt(3n).
        let specs = vec![LayerSpec {
            input_dim: 100,
            output_dim: 100,
            activation: Activation::Identity,
        }];
        let params = init_mlp(&specs, 7).unwrap();
        let weights = &params.layers[0].weights;
        let n = weights.len() as f64;
        let limit = (6.0 / 100.0f64).sqrt();
        let mean = weights.iter().sum::<f64>() / n;
        let sigma_mean = limit / (3.0f64).sqrt() / n.sqrt();
        assert!(
            mean.abs() <= 3.0 * sigma_mean,
            "mean {mean} beyond 3 sigma {sigma_mean}"
        );
        assert!(weights.iter().all(|w| w.abs() < limit));
    }

    #[test]
    fn forward_identity_weights_pass_input_through() {
        let specs = vec![LayerSpec {
            input_dim: 3,
            output_dim: 3,
            activation: Activation::Identity,
        }];
        let mut params = init_mlp(&specs, 0).unwrap();
        params.layers[0].weights = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        params.layers[0].bias = vec![0.0; 3];
        let (logits, _) = forward(&params, &[0.3, -0.7, 1.1]).unwrap();
        assert_eq!(logits.as_slice(), &[0.3, -0.7, 1.1]);
    }

    #[test]
    fn forward_zero_weights_give_zero_logits() {
        let mut params = init_mlp(&tiny_specs(), 3).unwrap();
        for layer in &mut params.layers {
            layer.weights.iter_mut().for_each(|w| *w = 0.0);
        }
        let (logits, _) = forward(&params, &[1.5, -2.5]).unwrap();
        assert_eq!(logits.as_slice(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn forward_matches_naive_triple_loop_oracle() {
        let params = init_mlp(&mlp_specs(3, &[5, 4], 2), 91).unwrap();
        let input = [0.25, -1.5, 0.75];
        let (logits, _) = forward(&params, &input).unwrap();

        // Independently coded evaluation of the same parameters.
        let mut acts = input.to_vec();
        for layer in &params.layers {
            let mut out = vec![0.0; layer.spec.output_dim];
            for o in 0..layer.spec.output_dim {
                let mut sum = layer.bias[o];
                for i in 0..layer.spec.input_dim {
                    sum += layer.weights[o * layer.spec.input_dim + i] * acts[i];
                }
                out[o] = if layer.spec.activation == Activation::ReLU && sum < 0.0 {
                    0.0
                } else {
                    sum
                };
            }
            acts = out;
        }
        for (a, b) in logits.as_slice().iter().zip(&acts) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
        }
    }

    #[test]
    fn forward_rejects_wrong_input_dim() {
        let params = init_mlp(&tiny_specs(), 1).unwrap();
        assert!(matches!(
            forward(&params, &[1.0, 2.0, 3.0]),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn backward_zero_logit_gradient_gives_zero_param_gradients() {
        let params = init_mlp(&tiny_specs(), 5).unwrap();
        let (_, cache) = forward(&params, &[0.5, -0.5]).unwrap();
        let grads = backward(&params, &cache, &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(grads, ParamGrads::zeros_like(&params));
    }

    #[test]
    fn backward_is_linear_in_logit_gradient() {
        let params = init_mlp(&tiny_specs(), 5).unwrap();
        let (_, cache) = forward(&params, &[0.5, -0.5]).unwrap();
        let g1 = backward(&params, &cache, &[0.1, -0.4, 0.2]).unwrap();
        let g2 = backward(&params, &cache, &[0.2, -0.8, 0.4]).unwrap();
        for (a, b) in g1.weights.iter().flatten().zip(g2.weights.iter().flatten()) {
            assert_abs_diff_eq!(2.0 * a, *b, epsilon = 1e-15);
        }
    }

    #[test]
    fn backward_rejects_mismatched_cache() {
        let a = init_mlp(&tiny_specs(), 5).unwrap();
        let b = init_mlp(&mlp_specs(3, &[4], 3), 5).unwrap();
        let (_, cache) = forward(&b, &[0.1, 0.2, 0.3]).unwrap();
        assert!(backward(&a, &cache, &[0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn full_pipeline_gradient_matches_parameter_finite_differences() {
        // Loss: cross entropy of the network output against a fixed label,
        // checked against central differences on every parameter of a 2-4-3 net.
        use crate::losses::{ce_gradient, cross_entropy_loss};
        let params = init_mlp(&tiny_specs(), 12).unwrap();
        let input = [0.8, -0.6];
        let label = 2usize;

        let (_, cache) = forward(&params, &input).unwrap();
        let (logits, _) = forward(&params, &input).unwrap();
        let grads = backward(&params, &cache, &ce_gradient(&logits, label).unwrap()).unwrap();

        let flat_analytic: Vec<f64> = grads
            .weights
            .iter()
            .zip(&grads.biases)
            .flat_map(|(w, b)| w.iter().chain(b.iter()).cloned().collect::<Vec<_>>())
            .collect();

        let h = 1e-4;
        let mut flat_numeric = Vec::new();
        let loss_at = |p: &MlpParams| -> f64 {
            let (logits, _) = forward(p, &input).unwrap();
            cross_entropy_loss(&logits, label).unwrap()
        };
        let n_params = params.parameter_count();
        for idx in 0..n_params {
            let mut plus = params.clone();
            let mut minus = params.clone();
            let mut i = 0;
            plus.for_each_param_mut(|v| {
                if i == idx {
                    *v += h;
                }
                i += 1;
            });
            i = 0;
            minus.for_each_param_mut(|v| {
                if i == idx {
                    *v -= h;
                }
                i += 1;
            });
            flat_numeric.push((loss_at(&plus) - loss_at(&minus)) / (2.0 * h));
        }

        // for_each_param_mut walks layer by layer: weights then bias, which is
        // the same order the analytic flattening uses.
        assert_eq!(flat_analytic.len(), flat_numeric.len());
        for (a, n) in flat_analytic.iter().zip(&flat_numeric) {
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-8);
            assert!(rel <= 1e-4, "analytic {a} vs numeric {n}");
        }
    }

    #[test]
    fn sgd_zero_gradient_leaves_parameters_unchanged() {
        let mut params = init_mlp(&tiny_specs(), 9).unwrap();
        let before = params.clone();
        let grads = ParamGrads::zeros_like(&params);
        let cfg = SgdConfig {
            learning_rate: 0.1,
            momentum: 0.0,
            weight_decay: 0.0,
            epochs: 1,
            batch_size: 1,
            seed: 0,
        };
        let mut state = SgdState::new(&params);
        sgd_step(&mut params, &grads, &cfg, &mut state).unwrap();
        assert_eq!(params, before);
    }

    #[test]
    fn sgd_single_step_hand_arithmetic() {
        // f(w) = w^2 at w=1 with lr 0.1: gradient 2, new w = 0.8.
        let specs = vec![LayerSpec {
            input_dim: 1,
            output_dim: 1,
            activation: Activation::Identity,
        }];
        let mut params = init_mlp(&specs, 0).unwrap();
        params.layers[0].weights[0] = 1.0;
        let mut grads = ParamGrads::zeros_like(&params);
        grads.weights[0][0] = 2.0;
        let cfg = SgdConfig {
            learning_rate: 0.1,
            momentum: 0.0,
            weight_decay: 0.0,
            epochs: 1,
            batch_size: 1,
            seed: 0,
        };
        let mut state = SgdState::new(&params);
        sgd_step(&mut params, &grads, &cfg, &mut state).unwrap();
        assert_abs_diff_eq!(params.layers[0].weights[0], 0.8, epsilon = 1e-15);
    }

    #[test]
    fn sgd_momentum_trajectory_matches_scalar_recurrence() {
        // Two steps of momentum 0.9 on f(w)=w^2 from w=1, lr 0.1:
        // v1=2, w1=0.8; v2=0.9*2+1.6=3.4, w2=0.46.
        let specs = vec![LayerSpec {
            input_dim: 1,
            output_dim: 1,
            activation: Activation::Identity,
        }];
        let mut params = init_mlp(&specs, 0).unwrap();
        params.layers[0].weights[0] = 1.0;
        let cfg = SgdConfig {
            learning_rate: 0.1,
            momentum: 0.9,
            weight_decay: 0.0,
            epochs: 1,
            batch_size: 1,
            seed: 0,
        };
        let mut state = SgdState::new(&params);
        for expected in [0.8, 0.46] {
            let mut grads = ParamGrads::zeros_like(&params);
            grads.weights[0][0] = 2.0 * params.layers[0].weights[0];
            sgd_step(&mut params, &grads, &cfg, &mut state).unwrap();
            assert_abs_diff_eq!(params.layers[0].weights[0], expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let params = init_mlp(&mlp_specs(7, &[5, 3], 4), 0xDEADBEEF).unwrap();
        save_checkpoint(&params, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(params, loaded);
        // Bit-exact: serialize both and compare bytes.
        let path2 = dir.path().join("model2.ckpt");
        save_checkpoint(&loaded, &path2).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&path2).unwrap());
    }

    #[test]
    fn checkpoint_rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.ckpt");
        fs::write(&path, b"definitely not a checkpoint").unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(Error::CheckpointMismatch(_))
        ));
    }
}
