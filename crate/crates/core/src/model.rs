//! Shared trunk plus supervised and unsupervised residual paths.
//!
//! ```text
//! x ──conv─BN─ReLU──[block × N]──maxpool 2/2──► z
//! z ──conv─BN─ReLU──[block × M]──global avg──dense──► z_sup   (C logits)
//! z ──conv─BN─ReLU──[block × K]──global avg──dense──► z_unsup (C values)
//! block(h) = ReLU(h + BN(conv(dropout(ReLU(BN(conv(h)))))))
//! ```
//!
//! Parameters live in a flat, named store; every entry belongs to exactly one
//! [`ParamGroup`]. A forward pass runs inside a [`Pass`], which binds the
//! parameters as autodiff leaves, owns the dropout streams and collects
//! batch-norm running-stat updates until [`SSResNet::commit`] applies them.

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, TensorError};
use crate::rng::{tags, RngState};
use crate::scalar::Scalar;
use crate::tensor::{conv2d, ops, Tensor};

pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPSILON: f64 = 1e-5;
pub const KERNEL_SIZE: usize = 3;
pub const POOL_WINDOW: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_channels: usize,
    /// Side length of the square input images.
    pub input_size: usize,
    pub stem_channels: usize,
    pub n_shared_blocks: usize,
    pub m_sup_blocks: usize,
    pub k_unsup_blocks: usize,
    pub path_channels: usize,
    pub num_classes: usize,
    pub dropout_rate: f64,
    pub consistency_on_probabilities: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_channels: 1,
            input_size: 32,
            stem_channels: 16,
            n_shared_blocks: 2,
            m_sup_blocks: 2,
            k_unsup_blocks: 2,
            path_channels: 32,
            num_classes: 3,
            dropout_rate: 0.1,
            consistency_on_probabilities: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |m: String| Err(ConfigError::Model(m));
        if self.num_classes < 2 {
            return fail(format!("num_classes must be >= 2, got {}", self.num_classes));
        }
        if self.input_size < 8 {
            return fail(format!("input_size must be >= 8, got {}", self.input_size));
        }
        if self.input_channels == 0 || self.stem_channels == 0 || self.path_channels == 0 {
            return fail("channel counts must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return fail(format!("dropout_rate must be in [0, 1), got {}", self.dropout_rate));
        }
        Ok(())
    }

    /// Spatial size of the shared representation `z`.
    pub fn trunk_output_size(&self) -> usize {
        (self.input_size - POOL_WINDOW) / POOL_WINDOW + 1
    }

    /// Shape of `z` for a batch of `batch` images.
    pub fn trunk_output_shape(&self, batch: usize) -> [usize; 4] {
        let s = self.trunk_output_size();
        [batch, self.stem_channels, s, s]
    }

    pub fn input_shape(&self) -> [usize; 3] {
        [self.input_channels, self.input_size, self.input_size]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParamGroup {
    Shared,
    Sup,
    Unsup,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 3] = [ParamGroup::Shared, ParamGroup::Sup, ParamGroup::Unsup];

    pub fn prefix(self) -> &'static str {
        match self {
            ParamGroup::Shared => "shared",
            ParamGroup::Sup => "sup",
            ParamGroup::Unsup => "unsup",
        }
    }
}

/// A named, trainable array.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T: Scalar> {
    pub name: String,
    pub group: ParamGroup,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

/// Batch-norm running statistics for one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BnStats<T: Scalar> {
    pub name: String,
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

#[derive(Debug, Clone, Copy)]
struct ConvLayer {
    weight: usize,
    bias: usize,
}

#[derive(Debug, Clone, Copy)]
struct NormLayer {
    gamma: usize,
    beta: usize,
    stats: usize,
}

#[derive(Debug, Clone, Copy)]
struct DenseLayer {
    weight: usize,
    bias: usize,
}

/// Two 3x3 convolutions with batch norm and an identity shortcut; channel
/// count and spatial size are preserved.
#[derive(Debug, Clone)]
pub struct ResidualBlock {
    conv1: ConvLayer,
    bn1: NormLayer,
    conv2: ConvLayer,
    bn2: NormLayer,
    pub channels: usize,
}

#[derive(Debug, Clone)]
struct Path {
    stem: ConvLayer,
    stem_bn: NormLayer,
    blocks: Vec<ResidualBlock>,
    head: Option<DenseLayer>,
}

/// Per-forward-pass state: bound parameter leaves, mode, dropout streams and
/// pending batch-norm updates.
pub struct Pass<T: Scalar> {
    leaves: Vec<Tensor<T>>,
    training: bool,
    dropout: [RngState; 3],
    bn_updates: Vec<Option<(Vec<T>, Vec<T>)>>,
}

impl<T: Scalar> Pass<T> {
    pub fn training(&self) -> bool {
        self.training
    }

    /// Leaf tensor bound to parameter `index` for this pass.
    pub fn leaf(&self, index: usize) -> &Tensor<T> {
        &self.leaves[index]
    }

    /// Gradient of every parameter after `backward`, zeros where unreachable.
    pub fn grads(&self) -> Vec<Vec<T>> {
        self.leaves.iter().map(Tensor::grad_or_zeros).collect()
    }
}

#[derive(Debug, Clone)]
pub struct SSResNet<T: Scalar> {
    config: ModelConfig,
    params: Vec<Param<T>>,
    bn: Vec<BnStats<T>>,
    shared: Path,
    sup: Path,
    unsup: Path,
}

struct Builder<'a, T: Scalar> {
    params: Vec<Param<T>>,
    bn: Vec<BnStats<T>>,
    rng: &'a RngState,
}

impl<T: Scalar> Builder<'_, T> {
    fn push(&mut self, group: ParamGroup, name: String, shape: Vec<usize>, data: Vec<T>) -> usize {
        self.params.push(Param { name, group, shape, data });
        self.params.len() - 1
    }

    // He-style normal init, std = sqrt(2 / fan_in), one substream per parameter.
    fn he(&mut self, group: ParamGroup, name: String, shape: Vec<usize>, fan_in: usize) -> usize {
        let mut r = self.rng.path(&[tags::INIT, self.params.len() as u64]);
        let std = (2.0 / fan_in as f64).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| T::from_f64_lossy(r.normal() * std)).collect();
        self.push(group, name, shape, data)
    }

    fn constant(&mut self, group: ParamGroup, name: String, len: usize, v: f64) -> usize {
        self.push(group, name, vec![len], vec![T::from_f64_lossy(v); len])
    }

    fn conv(&mut self, group: ParamGroup, name: &str, cin: usize, cout: usize) -> ConvLayer {
        let k = KERNEL_SIZE;
        let weight = self.he(group, format!("{name}.weight"), vec![cout, cin, k, k], cin * k * k);
        let bias = self.constant(group, format!("{name}.bias"), cout, 0.0);
        ConvLayer { weight, bias }
    }

    fn norm(&mut self, group: ParamGroup, name: &str, c: usize) -> NormLayer {
        let gamma = self.constant(group, format!("{name}.gamma"), c, 1.0);
        let beta = self.constant(group, format!("{name}.beta"), c, 0.0);
        self.bn.push(BnStats {
            name: name.to_string(),
            mean: vec![T::zero(); c],
            var: vec![T::one(); c],
        });
        NormLayer { gamma, beta, stats: self.bn.len() - 1 }
    }

    fn block(&mut self, group: ParamGroup, name: &str, c: usize) -> ResidualBlock {
        ResidualBlock {
            conv1: self.conv(group, &format!("{name}.conv1"), c, c),
            bn1: self.norm(group, &format!("{name}.bn1"), c),
            conv2: self.conv(group, &format!("{name}.conv2"), c, c),
            bn2: self.norm(group, &format!("{name}.bn2"), c),
            channels: c,
        }
    }

    fn path(&mut self, group: ParamGroup, cin: usize, c: usize, blocks: usize, classes: Option<usize>) -> Path {
        let p = group.prefix();
        let stem = self.conv(group, &format!("{p}.stem"), cin, c);
        let stem_bn = self.norm(group, &format!("{p}.stem_bn"), c);
        let blocks = (0..blocks).map(|i| self.block(group, &format!("{p}.block{i}"), c)).collect();
        let head = classes.map(|k| DenseLayer {
            weight: self.he(group, format!("{p}.head.weight"), vec![k, c], c),
            bias: self.constant(group, format!("{p}.head.bias"), k, 0.0),
        });
        Path { stem, stem_bn, blocks, head }
    }
}

impl<T: Scalar> SSResNet<T> {
    /// Instantiate every parameter from `rng`.
    pub fn build(config: &ModelConfig, rng: &RngState) -> Result<Self, ConfigError> {
        config.validate()?;
        let mut b = Builder { params: Vec::new(), bn: Vec::new(), rng };
        let c = config;
        let shared = b.path(ParamGroup::Shared, c.input_channels, c.stem_channels, c.n_shared_blocks, None);
        let sup = b.path(ParamGroup::Sup, c.stem_channels, c.path_channels, c.m_sup_blocks, Some(c.num_classes));
        let unsup = b.path(ParamGroup::Unsup, c.stem_channels, c.path_channels, c.k_unsup_blocks, Some(c.num_classes));
        Ok(Self { config: config.clone(), params: b.params, bn: b.bn, shared, sup, unsup })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn bn_stats(&self) -> &[BnStats<T>] {
        &self.bn
    }

    pub fn bn_stats_mut(&mut self) -> &mut [BnStats<T>] {
        &mut self.bn
    }

    pub fn param(&self, name: &str) -> Option<&Param<T>> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Param<T>> {
        self.params.iter_mut().find(|p| p.name == name)
    }

    /// Total number of scalar parameters (running statistics excluded).
    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.data.len()).sum()
    }

    pub fn group_indices(&self, group: ParamGroup) -> Vec<usize> {
        (0..self.params.len()).filter(|&i| self.params[i].group == group).collect()
    }

    pub fn shared_blocks(&self) -> &[ResidualBlock] {
        &self.shared.blocks
    }

    /// Bind the parameters for one forward pass. `dropout` seeds the three
    /// per-path dropout streams and is only consulted in training mode.
    pub fn begin_pass(&self, training: bool, dropout: &RngState) -> Pass<T> {
        let leaves = self
            .params
            .iter()
            .map(|p| {
                let t = if training { Tensor::param(p.data.clone(), &p.shape) } else { Tensor::new(p.data.clone(), &p.shape) };
                t.expect("parameter shapes are validated at build time")
            })
            .collect();
        Pass {
            leaves,
            training,
            dropout: [dropout.substream(1), dropout.substream(2), dropout.substream(3)],
            bn_updates: vec![None; self.bn.len()],
        }
    }

    /// Inference-mode pass; no dropout, running statistics used as-is.
    pub fn eval_pass(&self) -> Pass<T> {
        self.begin_pass(false, &RngState::new(0))
    }

    /// Apply the running-statistics updates recorded during a training pass.
    pub fn commit(&mut self, pass: Pass<T>) {
        for (stats, update) in self.bn.iter_mut().zip(pass.bn_updates) {
            if let Some((mean, var)) = update {
                stats.mean = mean;
                stats.var = var;
            }
        }
    }

    fn conv(&self, pass: &Pass<T>, layer: ConvLayer, x: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
        conv2d(x, pass.leaf(layer.weight), pass.leaf(layer.bias), 1, KERNEL_SIZE / 2)
    }

    fn norm(&self, pass: &mut Pass<T>, layer: NormLayer, x: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
        let stats = &self.bn[layer.stats];
        let out = ops::batch_norm(
            x,
            pass.leaf(layer.gamma),
            pass.leaf(layer.beta),
            &stats.mean,
            &stats.var,
            pass.training,
            T::from_f64_lossy(BN_MOMENTUM),
            T::from_f64_lossy(BN_EPSILON),
        )?;
        if pass.training {
            pass.bn_updates[layer.stats] = Some((out.running_mean, out.running_var));
        }
        Ok(out.output)
    }

    fn block(&self, pass: &mut Pass<T>, stream: usize, block: &ResidualBlock, x: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
        let h = self.conv(pass, block.conv1, x)?;
        let h = ops::relu(&self.norm(pass, block.bn1, &h)?);
        let training = pass.training;
        let h = ops::dropout(&h, self.config.dropout_rate, &mut pass.dropout[stream], training)?;
        let h = self.conv(pass, block.conv2, &h)?;
        let h = self.norm(pass, block.bn2, &h)?;
        Ok(ops::relu(&ops::add(x, &h)?))
    }

    fn path_body(&self, pass: &mut Pass<T>, stream: usize, path: &Path, x: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
        let mut h = ops::relu(&self.norm(pass, path.stem_bn, &self.conv(pass, path.stem, x)?)?);
        for block in &path.blocks {
            h = self.block(pass, stream, block, &h)?;
        }
        Ok(h)
    }

    fn head(&self, pass: &mut Pass<T>, stream: usize, path: &Path, z: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
        let expected = self.config.trunk_output_shape(z.shape().first().copied().unwrap_or(0));
        if z.shape() != expected {
            return Err(TensorError::shape("path_forward", format!("z has shape {:?}, expected {expected:?}", z.shape())));
        }
        let h = self.path_body(pass, stream, path, z)?;
        let pooled = ops::global_avg_pool(&h)?;
        let head = path.head.expect("paths with heads");
        ops::dense(&pooled, pass.leaf(head.weight), pass.leaf(head.bias))
    }

    /// Shared representation `z` for `x: [B, Cin, S, S]`.
    pub fn shared_forward(&self, pass: &mut Pass<T>, x: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
        let [c, s, _] = self.config.input_shape();
        match *x.shape() {
            [_, xc, xh, xw] if xc == c && xh == s && xw == s => {}
            _ => {
                return Err(TensorError::shape(
                    "shared_forward",
                    format!("input {:?} does not match [B, {c}, {s}, {s}]", x.shape()),
                ))
            }
        }
        let h = self.path_body(pass, 0, &self.shared, x)?;
        ops::max_pool2d(&h, POOL_WINDOW, POOL_WINDOW)
    }

    /// Supervised logits `z_sup: [B, C]` (pre-softmax).
    pub fn supervised_forward(&self, pass: &mut Pass<T>, z: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
        self.head(pass, 1, &self.sup, z)
    }

    /// Unsupervised projection `z_unsup: [B, C]`.
    pub fn unsupervised_forward(&self, pass: &mut Pass<T>, z: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
        self.head(pass, 2, &self.unsup, z)
    }

    /// Inference-mode supervised logits.
    pub fn predict_logits(&self, x: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
        let mut pass = self.eval_pass();
        let z = self.shared_forward(&mut pass, x)?;
        self.supervised_forward(&mut pass, &z)
    }

    /// Replace parameter and running-statistic values, e.g. from a checkpoint.
    /// Names and shapes must match this model exactly.
    pub fn load_state(&mut self, params: Vec<Param<T>>, bn: Vec<BnStats<T>>) -> Result<(), String> {
        if params.len() != self.params.len() || bn.len() != self.bn.len() {
            return Err(format!(
                "expected {} parameters and {} norm layers, found {} and {}",
                self.params.len(),
                self.bn.len(),
                params.len(),
                bn.len()
            ));
        }
        for (mine, theirs) in self.params.iter().zip(&params) {
            if mine.name != theirs.name || mine.shape != theirs.shape || mine.group != theirs.group {
                return Err(format!(
                    "parameter `{}` {:?} does not match `{}` {:?}",
                    theirs.name, theirs.shape, mine.name, mine.shape
                ));
            }
        }
        for (mine, theirs) in self.bn.iter().zip(&bn) {
            if mine.name != theirs.name || mine.mean.len() != theirs.mean.len() || mine.var.len() != theirs.var.len() {
                return Err(format!("running statistics `{}` do not match `{}`", theirs.name, mine.name));
            }
        }
        self.params = params;
        self.bn = bn;
        Ok(())
    }
}
