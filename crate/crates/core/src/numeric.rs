//! Dense feed-forward networks with explicit per-layer backward passes, flat
//! parameter storage, and an Adam optimizer.
//!
//! Parameters of every model live in a single flat vector ([`ParamSet`]).
//! Each dense layer is stored as a row-major `fan_out x fan_in` weight matrix
//! followed by its `fan_out` biases. Extra free vectors (for instance the
//! log standard deviations of a Gaussian policy) are appended as
//! [`Block::Vector`] entries.

use crate::error::{check_len, Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation output.
    #[inline]
    fn deriv_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Identity => 1.0,
        }
    }
}

/// Topology of a multilayer perceptron. Hidden layers use tanh.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub output_activation: Activation,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, output_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_dims,
            output_dim,
            output_activation: Activation::Identity,
        }
    }

    /// Two hidden layers of 256 tanh units.
    pub fn default_hidden(input_dim: usize, output_dim: usize) -> Self {
        Self::new(input_dim, vec![256, 256], output_dim)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "all layer widths must be >= 1, got {self:?}"
            )));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` for every dense layer, input to output.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 1);
        let mut prev = self.input_dim;
        for &h in &self.hidden_dims {
            dims.push((prev, h));
            prev = h;
        }
        dims.push((prev, self.output_dim));
        dims
    }

    pub fn blocks(&self) -> Vec<Block> {
        self.layer_dims()
            .into_iter()
            .map(|(fan_in, fan_out)| Block::Dense { fan_in, fan_out })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        (0..self.n_layers()).map(|l| self.layer_dim(l)).map(|(i, o)| i * o + o).sum()
    }

    fn n_layers(&self) -> usize {
        self.hidden_dims.len() + 1
    }

    #[inline]
    fn layer_dim(&self, layer: usize) -> (usize, usize) {
        let fan_in = if layer == 0 { self.input_dim } else { self.hidden_dims[layer - 1] };
        let fan_out = self.hidden_dims.get(layer).copied().unwrap_or(self.output_dim);
        (fan_in, fan_out)
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer == self.hidden_dims.len() {
            self.output_activation
        } else {
            Activation::Tanh
        }
    }
}

/// Shape metadata for one contiguous region of a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Block {
    Dense { fan_in: usize, fan_out: usize },
    Vector { len: usize },
}

impl Block {
    pub fn len(&self) -> usize {
        match *self {
            Block::Dense { fan_in, fan_out } => fan_in * fan_out + fan_out,
            Block::Vector { len } => len,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates and the step counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn zeros(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }
}

/// Flat parameter vector plus block metadata and optimizer state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    values: Vec<f64>,
    blocks: Vec<Block>,
    opt: AdamState,
}

impl ParamSet {
    pub fn zeros(blocks: Vec<Block>) -> Self {
        let n = blocks.iter().map(Block::len).sum();
        Self {
            values: vec![0.0; n],
            blocks,
            opt: AdamState::zeros(n),
        }
    }

    pub fn from_values(blocks: Vec<Block>, values: Vec<f64>) -> Result<Self> {
        let n: usize = blocks.iter().map(Block::len).sum();
        check_len("ParamSet values", n, values.len())?;
        Ok(Self {
            opt: AdamState::zeros(n),
            values,
            blocks,
        })
    }

    /// Dense weights uniform on `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, zero
    /// biases, and vector blocks filled with `vector_fill`.
    pub fn init_uniform<R: Rng + ?Sized>(blocks: Vec<Block>, vector_fill: f64, rng: &mut R) -> Self {
        let mut ps = Self::zeros(blocks);
        let mut offset = 0;
        for block in ps.blocks.clone() {
            match block {
                Block::Dense { fan_in, fan_out } => {
                    let bound = 1.0 / (fan_in as f64).sqrt();
                    for w in &mut ps.values[offset..offset + fan_in * fan_out] {
                        *w = rng.random_range(-bound..bound);
                    }
                }
                Block::Vector { len } => {
                    ps.values[offset..offset + len].fill(vector_fill);
                }
            }
            offset += block.len();
        }
        ps
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn opt_state(&self) -> &AdamState {
        &self.opt
    }

    pub fn reset_opt_state(&mut self) {
        self.opt = AdamState::zeros(self.values.len());
    }

    /// Splits the flat vector into one vector per block.
    pub fn unflatten(&self) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(self.blocks.len());
        let mut offset = 0;
        for b in &self.blocks {
            out.push(self.values[offset..offset + b.len()].to_vec());
            offset += b.len();
        }
        out
    }

    /// Inverse of [`ParamSet::unflatten`]; optimizer state starts fresh.
    pub fn flatten(blocks: Vec<Block>, parts: &[Vec<f64>]) -> Result<Self> {
        check_len("ParamSet blocks", blocks.len(), parts.len())?;
        for (b, p) in blocks.iter().zip(parts) {
            check_len("ParamSet block", b.len(), p.len())?;
        }
        let values = parts.iter().flatten().copied().collect();
        Self::from_values(blocks, values)
    }

    /// One Adam descent step along `grad`. Non-finite gradients are rejected
    /// and leave the parameters untouched.
    pub fn adam_step(&mut self, grad: &[f64], cfg: &AdamConfig) -> Result<()> {
        check_len("adam gradient", self.values.len(), grad.len())?;
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("adam gradient"));
        }
        self.opt.step += 1;
        let t = self.opt.step as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        for i in 0..self.values.len() {
            let g = grad[i];
            let m = cfg.beta1 * self.opt.m[i] + (1.0 - cfg.beta1) * g;
            let v = cfg.beta2 * self.opt.v[i] + (1.0 - cfg.beta2) * g * g;
            self.opt.m[i] = m;
            self.opt.v[i] = v;
            let m_hat = m / bc1;
            let v_hat = v / bc2;
            self.values[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
        Ok(())
    }
}

/// Free-function form of [`ParamSet::adam_step`].
pub fn adam_step(params: &mut ParamSet, grad: &[f64], cfg: &AdamConfig) -> Result<()> {
    params.adam_step(grad, cfg)
}

/// Layer outputs recorded by a forward pass; `activations[0]` is the input.
#[derive(Debug, Clone)]
pub struct Trace {
    pub activations: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.activations.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

fn check_params(spec: &MlpSpec, params: &[f64]) -> Result<()> {
    if params.len() < spec.param_count() {
        return Err(Error::Shape {
            what: "mlp parameters",
            expected: spec.param_count(),
            got: params.len(),
        });
    }
    Ok(())
}

pub fn mlp_forward_trace(spec: &MlpSpec, params: &[f64], x: &[f64]) -> Result<Trace> {
    check_len("mlp input", spec.input_dim, x.len())?;
    check_params(spec, params)?;
    let mut activations = Vec::with_capacity(spec.hidden_dims.len() + 2);
    activations.push(x.to_vec());
    let mut offset = 0;
    for layer in 0..spec.n_layers() {
        let (fan_in, fan_out) = spec.layer_dim(layer);
        let act = spec.activation(layer);
        let w = &params[offset..offset + fan_in * fan_out];
        let b = &params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
        let input = activations.last().expect("input pushed");
        let mut out = Vec::with_capacity(fan_out);
        for (row, bias) in w.chunks_exact(fan_in).zip(b) {
            let z = row.iter().zip(input).fold(*bias, |acc, (wi, xi)| acc + wi * xi);
            out.push(act.apply(z));
        }
        activations.push(out);
        offset += fan_in * fan_out + fan_out;
    }
    Ok(Trace { activations })
}

pub fn mlp_forward(spec: &MlpSpec, params: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    let mut trace = mlp_forward_trace(spec, params, x)?;
    Ok(trace.activations.pop().unwrap_or_default())
}

/// Accumulates `scale * d(upstream . output)/d params` into `grad` and
/// returns the gradient with respect to the input.
pub fn mlp_backward_into(
    spec: &MlpSpec,
    params: &[f64],
    trace: &Trace,
    upstream: &[f64],
    scale: f64,
    grad: &mut [f64],
) -> Result<Vec<f64>> {
    check_len("mlp upstream gradient", spec.output_dim, upstream.len())?;
    check_params(spec, params)?;
    if grad.len() < spec.param_count() {
        return Err(Error::Shape {
            what: "mlp gradient buffer",
            expected: spec.param_count(),
            got: grad.len(),
        });
    }
    let mut end = spec.param_count();
    let mut delta: Vec<f64> = upstream.iter().map(|u| u * scale).collect();
    for layer in (0..spec.n_layers()).rev() {
        let (fan_in, fan_out) = spec.layer_dim(layer);
        end -= fan_in * fan_out + fan_out;
        let act = spec.activation(layer);
        let out = &trace.activations[layer + 1];
        let input = &trace.activations[layer];
        for (d, a) in delta.iter_mut().zip(out) {
            *d *= act.deriv_from_output(*a);
        }
        let w_off = end;
        let b_off = w_off + fan_in * fan_out;
        let mut next = vec![0.0; fan_in];
        for (j, &d) in delta.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            let row = w_off + j * fan_in;
            let g_row = &mut grad[row..row + fan_in];
            for (g, x) in g_row.iter_mut().zip(input) {
                *g += d * x;
            }
            grad[b_off + j] += d;
            let w_row = &params[row..row + fan_in];
            for (n, w) in next.iter_mut().zip(w_row) {
                *n += d * w;
            }
        }
        delta = next;
    }
    Ok(delta)
}

/// Returns `(d(upstream . output)/d params, d(upstream . output)/d x)`.
pub fn mlp_backward(
    spec: &MlpSpec,
    params: &[f64],
    x: &[f64],
    upstream: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let trace = mlp_forward_trace(spec, params, x)?;
    let mut grad = vec![0.0; spec.param_count()];
    let dx = mlp_backward_into(spec, params, &trace, upstream, 1.0, &mut grad)?;
    Ok((grad, dx))
}

/// An MLP bundled with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub params: ParamSet,
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(spec: MlpSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let params = ParamSet::init_uniform(spec.blocks(), 0.0, rng);
        Ok(Self { spec, params })
    }

    pub fn zeros(spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        let params = ParamSet::zeros(spec.blocks());
        Ok(Self { spec, params })
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        mlp_forward(&self.spec, self.params.values(), x)
    }

    pub fn backward(&self, x: &[f64], upstream: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        mlp_backward(&self.spec, self.params.values(), x, upstream)
    }
}
