//! Adam, the full-batch evidential trainer and the deep-ensemble baseline.

use alloc::format;
use alloc::vec::Vec;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::losses::{plain_total_loss, total_loss, LossValues, LossWeights, TrainingBatch, Variant};
use crate::model::{EvidentialPinn, NetworkConfig, ParamStore, PlainPinn};
use crate::problems::{Dataset, ProblemSpec};
use crate::tensor::Matrix;

/// Training aborts once the total loss exceeds this value.
pub const DIVERGENCE_THRESHOLD: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn new(learning_rate: f64) -> Self {
        Self { learning_rate, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    config: AdamConfig,
    step: u64,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &[Matrix]) -> Self {
        let zeros = || params.iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect();
        Self { config, step: 0, first: zeros(), second: zeros() }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update. Parameters are left untouched if any gradient is non-finite.
    pub fn step(&mut self, params: &mut [Matrix], grads: &[Matrix]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.first.len() {
            return Err(Error::structural("parameter, gradient and state counts differ"));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() || p.shape() != self.first[i].shape() {
                return Err(Error::structural(format!("shape mismatch for parameter {i}")));
            }
            if !g.all_finite() {
                return Err(Error::numerical(format!("non-finite gradient for parameter {i}")));
            }
        }
        self.step += 1;
        let AdamConfig { learning_rate, beta1, beta2, epsilon } = self.config;
        let t = self.step as i32;
        let correction1 = 1.0 - libm::pow(beta1, t as f64);
        let correction2 = 1.0 - libm::pow(beta2, t as f64);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.first.iter_mut().zip(self.second.iter_mut())) {
            let p = p.as_mut_slice();
            let m = m.as_mut_slice();
            let v = v.as_mut_slice();
            for (k, &gk) in g.as_slice().iter().enumerate() {
                m[k] = beta1 * m[k] + (1.0 - beta1) * gk;
                v[k] = beta2 * v[k] + (1.0 - beta2) * gk * gk;
                let m_hat = m[k] / correction1;
                let v_hat = v[k] / correction2;
                p[k] -= learning_rate * m_hat / (libm::sqrt(v_hat) + epsilon);
            }
        }
        Ok(())
    }
}

/// Free-function form of [`Adam::step`].
pub fn adam_step(params: &mut [Matrix], grads: &[Matrix], state: &mut Adam) -> Result<()> {
    state.step(params, grads)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub weights: LossWeights,
    /// Learning-curve sampling interval; the final epoch is always logged.
    pub log_every: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(weights: LossWeights, seed: u64) -> Self {
        Self { epochs: 100_000, learning_rate: 1e-3, weights, log_every: 100, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::structural("epochs must be at least 1"));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::structural("learning_rate must be positive"));
        }
        if self.log_every == 0 {
            return Err(Error::structural("log_every must be at least 1"));
        }
        self.weights.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurveEntry {
    pub epoch: usize,
    pub total: f64,
    pub data: f64,
    pub regularizer: Option<f64>,
    pub residual: f64,
    pub kappa_mean: f64,
    pub kappa_sigma: f64,
}

/// Loss components and (κ̄, σ_κ) sampled during training.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LearningCurve {
    pub entries: Vec<CurveEntry>,
}

impl LearningCurve {
    pub fn last(&self) -> Option<&CurveEntry> {
        self.entries.last()
    }

    pub fn has_regularizer(&self) -> bool {
        self.entries.iter().any(|e| e.regularizer.is_some())
    }

    /// (max − min)/|mean| of κ̄ over entries with epoch in the last `fraction`
    /// of training.
    pub fn kappa_fluctuation(&self, fraction: f64) -> Option<f64> {
        let last_epoch = self.last()?.epoch;
        let start = last_epoch as f64 * (1.0 - fraction);
        let tail: Vec<f64> =
            self.entries.iter().filter(|e| e.epoch as f64 >= start).map(|e| e.kappa_mean).collect();
        if tail.is_empty() {
            return None;
        }
        let mean = tail.iter().sum::<f64>() / tail.len() as f64;
        let (lo, hi) = tail.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        Some((hi - lo) / mean.abs())
    }
}

/// A trained model with its curve.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome<M> {
    pub model: M,
    pub curve: LearningCurve,
}

/// Training stopped early; `last_good` holds the parameters from the last
/// epoch whose loss was finite and below [`DIVERGENCE_THRESHOLD`].
#[derive(Clone, Debug, PartialEq)]
pub struct TrainFailure<M> {
    pub error: Error,
    pub epoch: usize,
    pub last_good: M,
    pub curve: LearningCurve,
}

impl<M> core::fmt::Display for TrainFailure<M> {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "training stopped at epoch {}: {}", self.epoch, self.error)
    }
}

/// Model-specific pieces of the generic loop.
trait Trainable: Clone {
    fn store(&self) -> &ParamStore;
    fn store_mut(&mut self) -> &mut ParamStore;
    fn loss(&self, tape: &mut Tape, problem: &ProblemSpec, batch: &TrainingBatch, weights: &LossWeights)
        -> Result<(Var, LossValues)>;
    fn kappa_readout(&self) -> (f64, f64);
}

impl Trainable for EvidentialPinn {
    fn store(&self) -> &ParamStore {
        self.params()
    }
    fn store_mut(&mut self) -> &mut ParamStore {
        self.params_mut()
    }
    fn loss(
        &self,
        tape: &mut Tape,
        problem: &ProblemSpec,
        batch: &TrainingBatch,
        weights: &LossWeights,
    ) -> Result<(Var, LossValues)> {
        let bound = self.params().bind(tape);
        let terms = total_loss(tape, &bound, self, problem, batch, weights)?;
        Ok((terms.total, terms.values(tape)))
    }
    fn kappa_readout(&self) -> (f64, f64) {
        let k = self.kappa();
        (k.kappa_mean, k.sigma())
    }
}

impl Trainable for PlainPinn {
    fn store(&self) -> &ParamStore {
        self.params()
    }
    fn store_mut(&mut self) -> &mut ParamStore {
        self.params_mut()
    }
    fn loss(
        &self,
        tape: &mut Tape,
        problem: &ProblemSpec,
        batch: &TrainingBatch,
        weights: &LossWeights,
    ) -> Result<(Var, LossValues)> {
        let bound = self.params().bind(tape);
        let terms = plain_total_loss(tape, &bound, self, problem, batch, weights)?;
        Ok((terms.total, terms.values(tape)))
    }
    fn kappa_readout(&self) -> (f64, f64) {
        (self.kappa(), 0.0)
    }
}

fn train_loop<M: Trainable>(
    mut model: M,
    problem: &ProblemSpec,
    batch: &TrainingBatch,
    config: &TrainConfig,
    observer: &mut dyn FnMut(&CurveEntry),
) -> core::result::Result<TrainOutcome<M>, TrainFailure<M>> {
    let mut curve = LearningCurve::default();
    let fail = |error: Error, epoch: usize, last_good: M, curve: LearningCurve| TrainFailure {
        error,
        epoch,
        last_good,
        curve,
    };
    if let Err(e) = config.validate().and_then(|_| batch.validate()) {
        return Err(fail(e, 0, model, curve));
    }
    let mut adam = Adam::new(AdamConfig::new(config.learning_rate), model.store().values());

    for epoch in 0..=config.epochs {
        let mut tape = Tape::new();
        let (root, values) = match model.loss(&mut tape, problem, batch, &config.weights) {
            Ok(v) => v,
            Err(e) => return Err(fail(e, epoch, model, curve)),
        };
        if !(values.total.abs() <= DIVERGENCE_THRESHOLD) {
            let e = Error::numerical(format!("total loss {} diverged", values.total));
            return Err(fail(e, epoch, model, curve));
        }
        let log_now = epoch % config.log_every == 0 || epoch == config.epochs;
        if log_now {
            let (kappa_mean, kappa_sigma) = model.kappa_readout();
            let entry = CurveEntry {
                epoch,
                total: values.total,
                data: values.data,
                regularizer: values.regularizer,
                residual: values.residual,
                kappa_mean,
                kappa_sigma,
            };
            observer(&entry);
            curve.entries.push(entry);
        }
        // The loss at `epochs` is only evaluated for logging.
        if epoch == config.epochs {
            break;
        }
        let grads = match tape.backward(root) {
            Ok(g) => g,
            Err(e) => return Err(fail(e, epoch, model, curve)),
        };
        let grads: Vec<Matrix> = model
            .store()
            .values()
            .iter()
            .enumerate()
            .map(|(id, p)| grads.param(id).unwrap_or_else(|| Matrix::zeros(p.rows(), p.cols())))
            .collect();
        let mut next = model.clone();
        if let Err(e) = adam.step(next.store_mut().values_mut(), &grads) {
            return Err(fail(e, epoch, model, curve));
        }
        model = next;
    }
    Ok(TrainOutcome { model, curve })
}

/// Full-batch Adam on the evidential loss; deterministic for a fixed
/// `net_config.seed` and dataset.
pub fn train_epinn(
    problem: &ProblemSpec,
    dataset: &Dataset,
    net_config: &NetworkConfig,
    config: &TrainConfig,
) -> core::result::Result<TrainOutcome<EvidentialPinn>, TrainFailure<Option<EvidentialPinn>>> {
    train_epinn_observed(problem, dataset, net_config, config, &mut |_| {})
}

/// [`train_epinn`] with a callback for every logged curve entry.
pub fn train_epinn_observed(
    problem: &ProblemSpec,
    dataset: &Dataset,
    net_config: &NetworkConfig,
    config: &TrainConfig,
    observer: &mut dyn FnMut(&CurveEntry),
) -> core::result::Result<TrainOutcome<EvidentialPinn>, TrainFailure<Option<EvidentialPinn>>> {
    let setup = || -> Result<(EvidentialPinn, TrainingBatch)> {
        if net_config.input_dim != problem.dimension {
            return Err(Error::structural("network input_dim does not match the problem"));
        }
        Ok((EvidentialPinn::new(*net_config)?, dataset.training_batch()?))
    };
    let (model, batch) = setup().map_err(|error| TrainFailure {
        error,
        epoch: 0,
        last_good: None,
        curve: LearningCurve::default(),
    })?;
    train_loop(model, problem, &batch, config, observer).map_err(|f| TrainFailure {
        error: f.error,
        epoch: f.epoch,
        last_good: Some(f.last_good),
        curve: f.curve,
    })
}

/// One point-estimate PINN: squared-error data term plus λ_r·(L₁ + κL₂)².
pub fn train_plain_pinn(
    problem: &ProblemSpec,
    dataset: &Dataset,
    net_config: &NetworkConfig,
    config: &TrainConfig,
) -> core::result::Result<TrainOutcome<PlainPinn>, TrainFailure<Option<PlainPinn>>> {
    train_plain_pinn_observed(problem, dataset, net_config, config, &mut |_| {})
}

pub fn train_plain_pinn_observed(
    problem: &ProblemSpec,
    dataset: &Dataset,
    net_config: &NetworkConfig,
    config: &TrainConfig,
    observer: &mut dyn FnMut(&CurveEntry),
) -> core::result::Result<TrainOutcome<PlainPinn>, TrainFailure<Option<PlainPinn>>> {
    let setup = || -> Result<(PlainPinn, TrainingBatch)> {
        if net_config.input_dim != problem.dimension {
            return Err(Error::structural("network input_dim does not match the problem"));
        }
        Ok((PlainPinn::new(*net_config)?, dataset.training_batch()?))
    };
    let (model, batch) = setup().map_err(|error| TrainFailure {
        error,
        epoch: 0,
        last_good: None,
        curve: LearningCurve::default(),
    })?;
    let mut cfg = *config;
    cfg.weights.variant = Variant::PlainPinn;
    train_loop(model, problem, &batch, &cfg, observer).map_err(|f| TrainFailure {
        error: f.error,
        epoch: f.epoch,
        last_good: Some(f.last_good),
        curve: f.curve,
    })
}

/// Plain PINNs whose spread provides the uncertainty.
#[derive(Clone, Debug, PartialEq)]
pub struct DeepEnsemble {
    pub members: Vec<PlainPinn>,
}

/// Ensemble mean and population standard deviation at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnsemblePrediction {
    pub mean: f64,
    pub sigma: f64,
}

fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, libm::sqrt(var.max(0.0)))
}

impl DeepEnsemble {
    pub fn new(members: Vec<PlainPinn>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::structural("an ensemble needs at least one member"));
        }
        Ok(Self { members })
    }

    /// (κ̄, σ_κ) over member estimates.
    pub fn kappa(&self) -> (f64, f64) {
        let ks: Vec<f64> = self.members.iter().map(PlainPinn::kappa).collect();
        mean_and_std(&ks)
    }

    pub fn predict(&self, points: &[f64]) -> Result<Vec<EnsemblePrediction>> {
        let per_member: Vec<Vec<f64>> =
            self.members.iter().map(|m| m.predict(points)).collect::<Result<_>>()?;
        let n = per_member[0].len();
        Ok((0..n)
            .map(|i| {
                let vals: Vec<f64> = per_member.iter().map(|p| p[i]).collect();
                let (mean, sigma) = mean_and_std(&vals);
                EnsemblePrediction { mean, sigma }
            })
            .collect())
    }
}

/// Outcome of [`train_deep_ensemble`].
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleReport {
    pub ensemble: DeepEnsemble,
    pub seeds: Vec<u64>,
    pub curves: Vec<LearningCurve>,
    /// Members that diverged: (seed, reason).
    pub dropped: Vec<(u64, Error)>,
}

/// Fraction of members that must survive training.
pub const MIN_SURVIVOR_FRACTION: f64 = 0.8;

/// Member seeds `base, base + 1, …`.
pub fn ensemble_seeds(base: u64, n_members: usize) -> Vec<u64> {
    (0..n_members as u64).map(|i| base.wrapping_add(i)).collect()
}

fn train_member(
    problem: &ProblemSpec,
    dataset: &Dataset,
    net_config: &NetworkConfig,
    config: &TrainConfig,
    seed: u64,
) -> core::result::Result<TrainOutcome<PlainPinn>, Error> {
    let cfg = NetworkConfig { seed, ..*net_config };
    train_plain_pinn(problem, dataset, &cfg, config).map_err(|f| f.error)
}

/// Trains one plain PINN per seed and aggregates them. Members that diverge
/// are dropped; fewer than 80% survivors is an error.
///
/// With the `std` feature members train on scoped threads, at most
/// `available_parallelism` at a time.
pub fn train_deep_ensemble_with_seeds(
    problem: &ProblemSpec,
    dataset: &Dataset,
    net_config: &NetworkConfig,
    config: &TrainConfig,
    seeds: &[u64],
) -> Result<EnsembleReport> {
    if seeds.len() < 2 {
        return Err(Error::structural("a deep ensemble needs at least 2 members"));
    }
    let results = run_members(problem, dataset, net_config, config, seeds);
    let mut members = Vec::new();
    let mut curves = Vec::new();
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for (seed, r) in seeds.iter().zip(results) {
        match r {
            Ok(outcome) => {
                members.push(outcome.model);
                curves.push(outcome.curve);
                kept.push(*seed);
            }
            Err(e) => {
                #[cfg(feature = "std")]
                std::eprintln!("warning: ensemble member with seed {seed} dropped: {e}");
                dropped.push((*seed, e));
            }
        }
    }
    if (members.len() as f64) < MIN_SURVIVOR_FRACTION * seeds.len() as f64 {
        return Err(Error::numerical(format!(
            "only {} of {} ensemble members survived training",
            members.len(),
            seeds.len()
        )));
    }
    Ok(EnsembleReport { ensemble: DeepEnsemble::new(members)?, seeds: kept, curves, dropped })
}

/// [`train_deep_ensemble_with_seeds`] with distinct seeds derived from `net_config.seed`.
pub fn train_deep_ensemble(
    problem: &ProblemSpec,
    dataset: &Dataset,
    net_config: &NetworkConfig,
    config: &TrainConfig,
    n_members: usize,
) -> Result<EnsembleReport> {
    let seeds = ensemble_seeds(net_config.seed, n_members);
    train_deep_ensemble_with_seeds(problem, dataset, net_config, config, &seeds)
}

#[cfg(not(feature = "std"))]
fn run_members(
    problem: &ProblemSpec,
    dataset: &Dataset,
    net_config: &NetworkConfig,
    config: &TrainConfig,
    seeds: &[u64],
) -> Vec<core::result::Result<TrainOutcome<PlainPinn>, Error>> {
    seeds.iter().map(|&s| train_member(problem, dataset, net_config, config, s)).collect()
}

#[cfg(feature = "std")]
fn run_members(
    problem: &ProblemSpec,
    dataset: &Dataset,
    net_config: &NetworkConfig,
    config: &TrainConfig,
    seeds: &[u64],
) -> Vec<core::result::Result<TrainOutcome<PlainPinn>, Error>> {
    let workers = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).max(1);
    let mut results = Vec::with_capacity(seeds.len());
    for chunk in seeds.chunks(workers) {
        std::thread::scope(|scope| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|&s| scope.spawn(move || train_member(problem, dataset, net_config, config, s)))
                .collect();
            for h in handles {
                results.push(h.join().unwrap_or_else(|_| Err(Error::numerical("member thread panicked"))));
            }
        });
    }
    results
}
