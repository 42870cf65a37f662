//! Fully connected tanh networks, the evidential head and the posterior over
//! the unknown PDE coefficient.
//!
//! Parameters live in a [`ParamStore`] (named dense matrices, stable order).
//! A forward pass binds the store onto a fresh [`Tape`] with
//! [`ParamStore::bind`] and then builds the graph from the bound nodes.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::autodiff::{Jet, Tape, Var};
use crate::error::{Error, Result};
use crate::special::{softplus, softplus_inverse};
use crate::tensor::Matrix;

/// Initial σ_κ of the coefficient posterior.
pub const INITIAL_KAPPA_SIGMA: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NetworkConfig {
    pub input_dim: usize,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub seed: u64,
}

impl NetworkConfig {
    /// Three hidden layers of width 64 on a 1D input.
    pub fn default_1d(seed: u64) -> Self {
        Self { input_dim: 1, hidden_layers: 3, hidden_width: 64, seed }
    }

    /// Two hidden layers of width 64 on a 2D input.
    pub fn default_2d(seed: u64) -> Self {
        Self { input_dim: 2, hidden_layers: 2, hidden_width: 64, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.input_dim) {
            return Err(Error::structural(format!("input_dim must be 1 or 2, got {}", self.input_dim)));
        }
        if self.hidden_layers == 0 || self.hidden_width == 0 {
            return Err(Error::structural("hidden_layers and hidden_width must be at least 1"));
        }
        Ok(())
    }
}

pub type ParamId = usize;

/// Named trainable matrices in registration order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Matrix>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, value: Matrix) -> ParamId {
        self.names.push(name.into());
        self.values.push(value);
        self.values.len() - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id]
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.values[id]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.values[id]
    }

    pub fn values(&self) -> &[Matrix] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Matrix] {
        &mut self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name)
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(Matrix::len).sum()
    }

    /// Registers every parameter on `tape`; index the result with a [`ParamId`].
    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.values.iter().enumerate().map(|(id, m)| tape.param(id, m.clone())).collect()
    }

    /// Replaces values in place; names and shapes must match.
    pub fn load(&mut self, entries: &[(String, Matrix)]) -> Result<()> {
        if entries.len() != self.values.len() {
            return Err(Error::structural(format!(
                "expected {} parameters, got {}",
                self.values.len(),
                entries.len()
            )));
        }
        for (id, (name, value)) in entries.iter().enumerate() {
            if name != &self.names[id] || value.shape() != self.values[id].shape() {
                return Err(Error::structural(format!(
                    "parameter {id} mismatch: expected `{}` {:?}, got `{name}` {:?}",
                    self.names[id],
                    self.values[id].shape(),
                    value.shape()
                )));
            }
        }
        for (id, (_, value)) in entries.iter().enumerate() {
            self.values[id] = value.clone();
        }
        Ok(())
    }
}

/// Dense tanh network: `hidden_layers` tanh layers then a linear output layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    config: NetworkConfig,
    output_dim: usize,
    layers: Vec<(ParamId, ParamId)>,
}

impl Mlp {
    /// Registers weights in `store`. Weights are drawn from N(0, 1/fan_in),
    /// biases start at zero.
    pub fn init(config: NetworkConfig, output_dim: usize, store: &mut ParamStore) -> Result<Self> {
        config.validate()?;
        if output_dim == 0 {
            return Err(Error::structural("output_dim must be at least 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut widths = Vec::with_capacity(config.hidden_layers + 2);
        widths.push(config.input_dim);
        widths.extend(core::iter::repeat(config.hidden_width).take(config.hidden_layers));
        widths.push(output_dim);

        let mut layers = Vec::with_capacity(widths.len() - 1);
        for (i, pair) in widths.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let std = 1.0 / libm::sqrt(fan_in as f64);
            let data = (0..fan_in * fan_out)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z * std
                })
                .collect();
            let w = store.push(format!("layer{i}.weight"), Matrix::from_vec(fan_in, fan_out, data)?);
            let b = store.push(format!("layer{i}.bias"), Matrix::zeros(1, fan_out));
            layers.push((w, b));
        }
        Ok(Self { config, output_dim, layers })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.config.input_dim {
            return Err(Error::structural(format!(
                "network expects {}-dimensional input, got {cols}",
                self.config.input_dim
            )));
        }
        Ok(())
    }

    /// Raw n x output_dim outputs for the n x input_dim batch `x`.
    pub fn forward(&self, tape: &mut Tape, bound: &[Var], x: Var) -> Result<Var> {
        self.check_input(tape.shape(x).1)?;
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            let z = tape.matmul(h, bound[w])?;
            h = tape.add(z, bound[b])?;
            if i < last {
                h = tape.tanh(h);
            }
        }
        Ok(h)
    }

    /// Jet of output column `output` w.r.t. the input coordinates.
    pub fn forward_jet(&self, tape: &mut Tape, bound: &[Var], x: &Jet, output: usize) -> Result<Jet> {
        self.check_input(tape.shape(x.value).1)?;
        if x.dim() != self.config.input_dim {
            return Err(Error::structural("jet dimension does not match network input"));
        }
        if output >= self.output_dim {
            return Err(Error::structural(format!("output column {output} out of range")));
        }
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            if i < last {
                h = Jet::affine(tape, &h, bound[w], bound[b])?;
                h = Jet::tanh(tape, &h)?;
            } else {
                // Only the requested output column is needed.
                let (w, b) = if self.output_dim == 1 {
                    (bound[w], bound[b])
                } else {
                    (tape.column(bound[w], output)?, tape.column(bound[b], output)?)
                };
                h = Jet::affine(tape, &h, w, b)?;
            }
        }
        Ok(h)
    }
}

/// Trainable mean and spread of the unknown PDE coefficient κ.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KappaPosterior {
    pub kappa_mean: f64,
    /// Unconstrained; σ_κ = softplus(kappa_sigma_raw).
    pub kappa_sigma_raw: f64,
}

impl Default for KappaPosterior {
    fn default() -> Self {
        Self { kappa_mean: 0.0, kappa_sigma_raw: softplus_inverse(INITIAL_KAPPA_SIGMA) }
    }
}

impl KappaPosterior {
    pub fn sigma(&self) -> f64 {
        softplus(self.kappa_sigma_raw)
    }

    pub fn variance(&self) -> f64 {
        let s = self.sigma();
        s * s
    }
}

/// The four normal-inverse-gamma hyperparameters as graph nodes (n x 1 each).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EvidentialOutput {
    pub gamma: Var,
    pub nu: Var,
    pub alpha: Var,
    pub beta: Var,
}

/// Added to ν, α − 1 and β: softplus alone rounds to 0 (and 1 + softplus to
/// exactly 1) for strongly negative raw outputs.
pub const EVIDENCE_FLOOR: f64 = 1e-6;

/// Maps n x 4 raw outputs to (γ, ν = softplus, α = 1 + softplus, β = softplus),
/// each positive part offset by [`EVIDENCE_FLOOR`].
pub fn evidential_head(tape: &mut Tape, raw: Var) -> Result<EvidentialOutput> {
    if tape.shape(raw).1 != 4 {
        return Err(Error::structural("evidential head needs exactly 4 raw outputs"));
    }
    let gamma = tape.column(raw, 0)?;
    let c1 = tape.column(raw, 1)?;
    let sp = tape.softplus(c1);
    let nu = tape.shift(sp, EVIDENCE_FLOOR);
    let c2 = tape.column(raw, 2)?;
    let sp = tape.softplus(c2);
    let alpha = tape.shift(sp, 1.0 + EVIDENCE_FLOOR);
    let c3 = tape.column(raw, 3)?;
    let sp = tape.softplus(c3);
    let beta = tape.shift(sp, EVIDENCE_FLOOR);
    Ok(EvidentialOutput { gamma, nu, alpha, beta })
}

/// NIG hyperparameters at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NigParams {
    pub gamma: f64,
    pub nu: f64,
    pub alpha: f64,
    pub beta: f64,
}

/// Prediction mean and its uncertainty split.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    /// sqrt(aleatoric + epistemic)
    pub sigma_p: f64,
    /// E[σ²] = β/(α−1)
    pub aleatoric: f64,
    /// Var[mean] = β/(ν(α−1))
    pub epistemic: f64,
}

impl Prediction {
    pub fn from_nig(p: NigParams) -> Result<Self> {
        if !(p.alpha > 1.0) || !(p.nu > 0.0) || !(p.beta > 0.0) {
            return Err(Error::numerical(format!(
                "invalid NIG parameters (nu={}, alpha={}, beta={})",
                p.nu, p.alpha, p.beta
            )));
        }
        let aleatoric = p.beta / (p.alpha - 1.0);
        let epistemic = aleatoric / p.nu;
        Ok(Self { mean: p.gamma, sigma_p: libm::sqrt(aleatoric + epistemic), aleatoric, epistemic })
    }
}

fn batch_matrix(points: &[f64], dim: usize) -> Result<Matrix> {
    if dim == 0 || points.len() % dim != 0 {
        return Err(Error::structural(format!(
            "{} coordinates do not split into {dim}-dimensional points",
            points.len()
        )));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("non-finite input coordinates"));
    }
    Matrix::from_vec(points.len() / dim, dim, points.to_vec())
}

/// Evidential PINN: tanh MLP with a 4-output NIG head plus κ̄ and σ_κ.
#[derive(Clone, Debug, PartialEq)]
pub struct EvidentialPinn {
    net: Mlp,
    kappa_mean: ParamId,
    kappa_sigma_raw: ParamId,
    store: ParamStore,
}

pub const KAPPA_MEAN_PARAM: &str = "kappa.mean";
pub const KAPPA_SIGMA_PARAM: &str = "kappa.sigma_raw";
pub const KAPPA_PARAM: &str = "kappa";

impl EvidentialPinn {
    pub fn new(config: NetworkConfig) -> Result<Self> {
        let mut store = ParamStore::new();
        let net = Mlp::init(config, 4, &mut store)?;
        let init = KappaPosterior::default();
        let kappa_mean = store.push(KAPPA_MEAN_PARAM, Matrix::scalar(init.kappa_mean));
        let kappa_sigma_raw = store.push(KAPPA_SIGMA_PARAM, Matrix::scalar(init.kappa_sigma_raw));
        Ok(Self { net, kappa_mean, kappa_sigma_raw, store })
    }

    pub fn config(&self) -> &NetworkConfig {
        self.net.config()
    }

    pub fn network(&self) -> &Mlp {
        &self.net
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn kappa_mean_id(&self) -> ParamId {
        self.kappa_mean
    }

    pub fn kappa_sigma_id(&self) -> ParamId {
        self.kappa_sigma_raw
    }

    pub fn kappa(&self) -> KappaPosterior {
        KappaPosterior {
            kappa_mean: self.store.get(self.kappa_mean).item(),
            kappa_sigma_raw: self.store.get(self.kappa_sigma_raw).item(),
        }
    }

    pub fn set_kappa(&mut self, kappa: KappaPosterior) {
        *self.store.get_mut(self.kappa_mean) = Matrix::scalar(kappa.kappa_mean);
        *self.store.get_mut(self.kappa_sigma_raw) = Matrix::scalar(kappa.kappa_sigma_raw);
    }

    /// NIG hyperparameters for the n x d batch `x`.
    pub fn forward_evidential(&self, tape: &mut Tape, bound: &[Var], x: &Matrix) -> Result<EvidentialOutput> {
        let xv = tape.constant(x.clone());
        let raw = self.net.forward(tape, bound, xv)?;
        tape.ensure_finite(raw, "network activations")?;
        evidential_head(tape, raw)
    }

    /// Jet of γ w.r.t. the input coordinates at the batch `x`.
    pub fn forward_jet(&self, tape: &mut Tape, bound: &[Var], x: &Matrix) -> Result<Jet> {
        let seed = Jet::seed_inputs(tape, x);
        let jet = self.net.forward_jet(tape, bound, &seed, 0)?;
        tape.ensure_finite(jet.value, "network activations")?;
        Ok(jet)
    }

    /// (κ̄, Var(κ)) as graph nodes.
    pub fn kappa_nodes(&self, tape: &mut Tape, bound: &[Var]) -> (Var, Var) {
        let sigma = tape.softplus(bound[self.kappa_sigma_raw]);
        let var = tape.square(sigma);
        (bound[self.kappa_mean], var)
    }

    /// NIG hyperparameters at flat coordinates (`points.len() / dim` points).
    pub fn evidential_values(&self, points: &[f64]) -> Result<Vec<NigParams>> {
        let x = batch_matrix(points, self.config().input_dim)?;
        let mut tape = Tape::new();
        let bound = self.store.bind(&mut tape);
        let out = self.forward_evidential(&mut tape, &bound, &x)?;
        let (g, n, a, b) = (tape.value(out.gamma), tape.value(out.nu), tape.value(out.alpha), tape.value(out.beta));
        Ok((0..x.rows())
            .map(|i| NigParams {
                gamma: g.get(i, 0),
                nu: n.get(i, 0),
                alpha: a.get(i, 0),
                beta: b.get(i, 0),
            })
            .collect())
    }

    /// Mean and uncertainties at flat coordinates.
    pub fn predict(&self, points: &[f64]) -> Result<Vec<Prediction>> {
        self.evidential_values(points)?.into_iter().map(Prediction::from_nig).collect()
    }
}

/// Plain PINN used as a deep-ensemble member: single output and a point κ.
#[derive(Clone, Debug, PartialEq)]
pub struct PlainPinn {
    net: Mlp,
    kappa: ParamId,
    store: ParamStore,
}

impl PlainPinn {
    pub fn new(config: NetworkConfig) -> Result<Self> {
        let mut store = ParamStore::new();
        let net = Mlp::init(config, 1, &mut store)?;
        let kappa = store.push(KAPPA_PARAM, Matrix::scalar(0.0));
        Ok(Self { net, kappa, store })
    }

    pub fn config(&self) -> &NetworkConfig {
        self.net.config()
    }

    pub fn network(&self) -> &Mlp {
        &self.net
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn kappa_id(&self) -> ParamId {
        self.kappa
    }

    pub fn kappa(&self) -> f64 {
        self.store.get(self.kappa).item()
    }

    pub fn forward(&self, tape: &mut Tape, bound: &[Var], x: &Matrix) -> Result<Var> {
        let xv = tape.constant(x.clone());
        let out = self.net.forward(tape, bound, xv)?;
        tape.ensure_finite(out, "network activations")?;
        Ok(out)
    }

    pub fn forward_jet(&self, tape: &mut Tape, bound: &[Var], x: &Matrix) -> Result<Jet> {
        let seed = Jet::seed_inputs(tape, x);
        let jet = self.net.forward_jet(tape, bound, &seed, 0)?;
        tape.ensure_finite(jet.value, "network activations")?;
        Ok(jet)
    }

    pub fn predict(&self, points: &[f64]) -> Result<Vec<f64>> {
        let x = batch_matrix(points, self.config().input_dim)?;
        let mut tape = Tape::new();
        let bound = self.store.bind(&mut tape);
        let out = self.forward(&mut tape, &bound, &x)?;
        Ok(tape.value(out).as_slice().to_vec())
    }
}

/// Human-readable parameter listing, mostly for diagnostics.
pub fn describe(store: &ParamStore) -> String {
    let mut s = String::new();
    for (name, m) in store.iter() {
        s.push_str(name);
        s.push(' ');
        s.push_str(&format!("{}x{}", m.rows(), m.cols()));
        s.push('\n');
    }
    s.trim_end().to_string()
}
