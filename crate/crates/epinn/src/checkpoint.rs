//! Model checkpoints as JSON.
//!
//! ```json
//! {
//!   "format": "epinn-checkpoint", "version": 1,
//!   "method": "epinn", "problem": "poisson1d",
//!   "network": { "input_dim": 1, "hidden_layers": 3, "hidden_width": 64, "seed": 0 },
//!   "models": [
//!     { "seed": 0, "params": [ { "name": "layer0.weight", "rows": 1, "cols": 64, "data": [ ... ] }, ... ] }
//!   ]
//! }
//! ```
//!
//! `models` holds one entry for `epinn`, `epinn_v` and `plain_pinn` and one
//! per surviving member for `deep_ensemble`. Parameter arrays are row-major
//! plain numbers; evidential models also carry `kappa.mean` and
//! `kappa.sigma_raw` (σ_κ = softplus(sigma_raw)), plain PINNs carry `kappa`.

use std::path::Path;

use epinn_core::metrics::UncertainPredictor;
use epinn_core::model::{EvidentialPinn, NetworkConfig, ParamStore, PlainPinn};
use epinn_core::problems::ProblemKind;
use epinn_core::tensor::Matrix;
use epinn_core::training::DeepEnsemble;
use serde::{Deserialize, Serialize};

use crate::config::Method;
use crate::error::AppError;

const FORMAT: &str = "epinn-checkpoint";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkRecord {
    pub input_dim: usize,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub seed: u64,
}

impl From<NetworkConfig> for NetworkRecord {
    fn from(c: NetworkConfig) -> Self {
        Self { input_dim: c.input_dim, hidden_layers: c.hidden_layers, hidden_width: c.hidden_width, seed: c.seed }
    }
}

impl From<&NetworkRecord> for NetworkConfig {
    fn from(r: &NetworkRecord) -> Self {
        NetworkConfig { input_dim: r.input_dim, hidden_layers: r.hidden_layers, hidden_width: r.hidden_width, seed: r.seed }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamRecord {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub seed: u64,
    pub params: Vec<ParamRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub method: String,
    pub problem: String,
    pub network: NetworkRecord,
    pub models: Vec<ModelRecord>,
}

/// A model restored from (or about to be written to) a checkpoint.
#[derive(Clone, Debug, PartialEq)]
pub enum TrainedModel {
    Evidential { method: Method, model: EvidentialPinn },
    Plain(PlainPinn),
    Ensemble { ensemble: DeepEnsemble, seeds: Vec<u64> },
}

/// A single plain PINN has no spread; it reports σ = 0 everywhere.
struct PointEstimate<'a>(&'a PlainPinn);

impl UncertainPredictor for PointEstimate<'_> {
    fn input_dim(&self) -> usize {
        self.0.config().input_dim
    }

    fn predict_with_sigma(&self, points: &[f64]) -> epinn_core::Result<Vec<(f64, f64)>> {
        Ok(self.0.predict(points)?.into_iter().map(|m| (m, 0.0)).collect())
    }
}

fn store_records(store: &ParamStore) -> Vec<ParamRecord> {
    store
        .iter()
        .map(|(name, m)| ParamRecord { name: name.to_string(), rows: m.rows(), cols: m.cols(), data: m.as_slice().to_vec() })
        .collect()
}

fn load_store(store: &mut ParamStore, records: &[ParamRecord]) -> Result<(), AppError> {
    let entries = records
        .iter()
        .map(|r| {
            Matrix::from_vec(r.rows, r.cols, r.data.clone())
                .map(|m| (r.name.clone(), m))
                .map_err(|e| AppError::Data(format!("parameter {}: {e}", r.name)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    store.load(&entries).map_err(|e| AppError::Data(format!("checkpoint does not match the network: {e}")))
}

impl TrainedModel {
    pub fn method(&self) -> Method {
        match self {
            TrainedModel::Evidential { method, .. } => *method,
            TrainedModel::Plain(_) => Method::PlainPinn,
            TrainedModel::Ensemble { .. } => Method::DeepEnsemble,
        }
    }

    pub fn network(&self) -> NetworkConfig {
        match self {
            TrainedModel::Evidential { model, .. } => *model.config(),
            TrainedModel::Plain(m) => *m.config(),
            TrainedModel::Ensemble { ensemble, .. } => *ensemble.members[0].config(),
        }
    }

    /// (κ̄, σ_κ).
    pub fn kappa(&self) -> (f64, f64) {
        match self {
            TrainedModel::Evidential { model, .. } => {
                let k = model.kappa();
                (k.kappa_mean, k.sigma())
            }
            TrainedModel::Plain(m) => (m.kappa(), 0.0),
            TrainedModel::Ensemble { ensemble, .. } => ensemble.kappa(),
        }
    }

    pub fn predictor(&self) -> Box<dyn UncertainPredictor + '_> {
        match self {
            TrainedModel::Evidential { model, .. } => Box::new(model.clone()),
            TrainedModel::Plain(m) => Box::new(PointEstimate(m)),
            TrainedModel::Ensemble { ensemble, .. } => Box::new(ensemble.clone()),
        }
    }

    pub fn to_checkpoint(&self, problem: ProblemKind) -> Checkpoint {
        let models = match self {
            TrainedModel::Evidential { model, .. } => {
                vec![ModelRecord { seed: model.config().seed, params: store_records(model.params()) }]
            }
            TrainedModel::Plain(m) => vec![ModelRecord { seed: m.config().seed, params: store_records(m.params()) }],
            TrainedModel::Ensemble { ensemble, seeds } => ensemble
                .members
                .iter()
                .zip(seeds)
                .map(|(m, &seed)| ModelRecord { seed, params: store_records(m.params()) })
                .collect(),
        };
        Checkpoint {
            format: FORMAT.into(),
            version: VERSION,
            method: self.method().name().into(),
            problem: problem.name().into(),
            network: self.network().into(),
            models,
        }
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<(ProblemKind, Self), AppError> {
        if c.format != FORMAT || c.version != VERSION {
            return Err(AppError::Data(format!("unsupported checkpoint format {} v{}", c.format, c.version)));
        }
        let problem = ProblemKind::from_name(&c.problem).map_err(|e| AppError::Data(e.to_string()))?;
        let method: Method = c.method.parse().map_err(|_| AppError::Data(format!("unknown method {}", c.method)))?;
        let base = NetworkConfig::from(&c.network);
        if c.models.is_empty() {
            return Err(AppError::Data("checkpoint contains no models".into()));
        }
        let single = || {
            if c.models.len() == 1 {
                Ok(&c.models[0])
            } else {
                Err(AppError::Data(format!("{method} checkpoint must hold exactly one model")))
            }
        };
        let model = match method {
            Method::Epinn | Method::EpinnV => {
                let rec = single()?;
                let mut m = EvidentialPinn::new(NetworkConfig { seed: rec.seed, ..base })?;
                load_store(m.params_mut(), &rec.params)?;
                TrainedModel::Evidential { method, model: m }
            }
            Method::PlainPinn => {
                let rec = single()?;
                let mut m = PlainPinn::new(NetworkConfig { seed: rec.seed, ..base })?;
                load_store(m.params_mut(), &rec.params)?;
                TrainedModel::Plain(m)
            }
            Method::DeepEnsemble => {
                let mut members = Vec::with_capacity(c.models.len());
                for rec in &c.models {
                    let mut m = PlainPinn::new(NetworkConfig { seed: rec.seed, ..base })?;
                    load_store(m.params_mut(), &rec.params)?;
                    members.push(m);
                }
                TrainedModel::Ensemble {
                    ensemble: DeepEnsemble::new(members)?,
                    seeds: c.models.iter().map(|m| m.seed).collect(),
                }
            }
        };
        Ok((problem, model))
    }
}

pub fn save_checkpoint(model: &TrainedModel, problem: ProblemKind, path: &Path) -> Result<(), AppError> {
    let json = serde_json::to_string(&model.to_checkpoint(problem)).expect("checkpoint serializes");
    std::fs::write(path, json).map_err(|e| AppError::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(ProblemKind, TrainedModel), AppError> {
    let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    let c: Checkpoint =
        serde_json::from_str(&text).map_err(|e| AppError::Data(format!("{}: {e}", path.display())))?;
    TrainedModel::from_checkpoint(&c)
}
