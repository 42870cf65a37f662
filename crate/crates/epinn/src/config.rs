//! Declarative run configuration (TOML) with named presets.
//!
//! ```toml
//! problem = "poisson1d"        # or "diffreact2d"
//! method = "epinn"             # epinn | epinn_v | deep_ensemble | plain_pinn
//! preset = "table1"            # loss weights: table1 | table2 | table2_curves
//! seed = 0
//! epochs = 100000
//! learning_rate = 1e-3
//! log_every = 100
//! ensemble_members = 20
//!
//! [network]
//! hidden_layers = 3
//! hidden_width = 64
//!
//! [noise]                      # 1D bands; 2D uses `peak`
//! high = 0.2
//! low = 0.02
//! bands = [[-0.55, -0.35], [0.25, 0.45]]
//! ```
//!
//! Every key is optional. Missing values fall back to the problem's defaults
//! (the preset follows the problem: table1 for 1D, table2 for 2D).

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use epinn_core::losses::{LossWeights, Variant};
use epinn_core::model::NetworkConfig;
use epinn_core::problems::{Amplitude, DatasetCounts, NoiseModel, ProblemKind};
use epinn_core::training::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::AppError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Epinn,
    EpinnV,
    DeepEnsemble,
    PlainPinn,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Epinn => "epinn",
            Method::EpinnV => "epinn_v",
            Method::DeepEnsemble => "deep_ensemble",
            Method::PlainPinn => "plain_pinn",
        }
    }

    pub fn is_evidential(self) -> bool {
        matches!(self, Method::Epinn | Method::EpinnV)
    }
}

impl FromStr for Method {
    type Err = AppError;
    fn from_str(s: &str) -> Result<Self, AppError> {
        match s {
            "epinn" => Ok(Method::Epinn),
            "epinn_v" => Ok(Method::EpinnV),
            "deep_ensemble" => Ok(Method::DeepEnsemble),
            "plain_pinn" => Ok(Method::PlainPinn),
            other => Err(AppError::Config(format!(
                "unknown method `{other}` (expected epinn, epinn_v, deep_ensemble or plain_pinn)"
            ))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    /// (λ_d, λ_kl, λ_r) = (1, 0.01, 0.1)
    Table1,
    /// (1, 0.005, 0.05)
    Table2,
    /// (1, 0.05, 0.5): stronger regularization for the 2D problem.
    Table2Curves,
}

impl Preset {
    pub fn weights(self) -> LossWeights {
        match self {
            Preset::Table1 => LossWeights::table1(),
            Preset::Table2 => LossWeights::table2(),
            Preset::Table2Curves => LossWeights::table2_learning_curves(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::Table1 => "table1",
            Preset::Table2 => "table2",
            Preset::Table2Curves => "table2_curves",
        }
    }

    pub fn default_for(problem: ProblemKind) -> Self {
        match problem {
            ProblemKind::Poisson1d => Preset::Table1,
            ProblemKind::DiffReact2d => Preset::Table2,
        }
    }
}

impl FromStr for Preset {
    type Err = AppError;
    fn from_str(s: &str) -> Result<Self, AppError> {
        match s {
            "table1" => Ok(Preset::Table1),
            "table2" => Ok(Preset::Table2),
            "table2_curves" => Ok(Preset::Table2Curves),
            other => Err(AppError::Config(format!(
                "unknown preset `{other}` (expected table1, table2 or table2_curves)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub hidden_layers: usize,
    pub hidden_width: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub high: Option<f64>,
    pub low: Option<f64>,
    pub bands: Option<Vec<[f64; 2]>>,
    pub peak: Option<f64>,
}

/// Raw file contents; everything optional.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    problem: Option<String>,
    method: Option<String>,
    preset: Option<String>,
    seed: Option<u64>,
    epochs: Option<usize>,
    learning_rate: Option<f64>,
    log_every: Option<usize>,
    ensemble_members: Option<usize>,
    network: Option<NetworkSection>,
    noise: Option<NoiseSection>,
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub problem: Option<String>,
    pub method: Option<String>,
    pub preset: Option<String>,
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
}

/// Fully resolved configuration of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub problem: ProblemKind,
    pub method: Method,
    pub preset: Preset,
    pub seed: u64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub log_every: usize,
    pub ensemble_members: usize,
    pub network: NetworkSection,
    pub noise: NoiseSection,
}

fn parse_problem(s: &str) -> Result<ProblemKind, AppError> {
    ProblemKind::from_name(s).map_err(|_| {
        AppError::Config(format!("unknown problem `{s}` (expected poisson1d or diffreact2d)"))
    })
}

impl RunConfig {
    pub fn defaults(problem: ProblemKind) -> Self {
        let net = match problem {
            ProblemKind::Poisson1d => NetworkConfig::default_1d(0),
            ProblemKind::DiffReact2d => NetworkConfig::default_2d(0),
        };
        Self {
            problem,
            method: Method::Epinn,
            preset: Preset::default_for(problem),
            seed: 0,
            epochs: 100_000,
            learning_rate: 1e-3,
            log_every: 100,
            ensemble_members: 20,
            network: NetworkSection { hidden_layers: net.hidden_layers, hidden_width: net.hidden_width },
            noise: NoiseSection::default(),
        }
    }

    /// Reads `path` (if any), then applies `overrides`.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self, AppError> {
        let file = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| AppError::io(p, e))?;
                toml::from_str::<ConfigFile>(&text)
                    .map_err(|e| AppError::Config(format!("{}: {}", p.display(), e.message())))?
            }
            None => ConfigFile::default(),
        };
        Self::resolve(file, overrides)
    }

    pub fn from_toml_str(text: &str, overrides: &Overrides) -> Result<Self, AppError> {
        let file = toml::from_str::<ConfigFile>(text).map_err(|e| AppError::Config(e.message().to_string()))?;
        Self::resolve(file, overrides)
    }

    fn resolve(file: ConfigFile, o: &Overrides) -> Result<Self, AppError> {
        let problem = match o.problem.as_deref().or(file.problem.as_deref()) {
            Some(s) => parse_problem(s)?,
            None => ProblemKind::Poisson1d,
        };
        let mut cfg = Self::defaults(problem);
        if let Some(m) = o.method.as_deref().or(file.method.as_deref()) {
            cfg.method = m.parse()?;
        }
        if let Some(p) = o.preset.as_deref().or(file.preset.as_deref()) {
            cfg.preset = p.parse()?;
        }
        cfg.seed = o.seed.or(file.seed).unwrap_or(cfg.seed);
        cfg.epochs = o.epochs.or(file.epochs).unwrap_or(cfg.epochs);
        cfg.learning_rate = file.learning_rate.unwrap_or(cfg.learning_rate);
        cfg.log_every = file.log_every.unwrap_or(cfg.log_every);
        cfg.ensemble_members = file.ensemble_members.unwrap_or(cfg.ensemble_members);
        if let Some(n) = file.network {
            cfg.network = n;
        }
        if let Some(n) = file.noise {
            cfg.noise = n;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), AppError> {
        let bad = |msg: &str| Err(AppError::Config(msg.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.log_every == 0 {
            return bad("log_every must be at least 1");
        }
        if self.method == Method::DeepEnsemble && self.ensemble_members < 2 {
            return bad("deep_ensemble needs at least 2 members");
        }
        self.net_config().validate().map_err(|e| AppError::Config(e.to_string()))?;
        self.noise_model()?.amplitude.validate().map_err(|e| AppError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn net_config(&self) -> NetworkConfig {
        NetworkConfig {
            input_dim: self.problem.spec().dimension,
            hidden_layers: self.network.hidden_layers,
            hidden_width: self.network.hidden_width,
            seed: self.seed,
        }
    }

    pub fn weights(&self) -> LossWeights {
        let variant = match self.method {
            Method::Epinn => Variant::Epinn,
            Method::EpinnV => Variant::EpinnV,
            Method::DeepEnsemble | Method::PlainPinn => Variant::PlainPinn,
        };
        self.preset.weights().with_variant(variant)
    }

    pub fn train_config(&self) -> TrainConfig {
        let mut t = TrainConfig::new(self.weights(), self.seed);
        t.epochs = self.epochs;
        t.learning_rate = self.learning_rate;
        t.log_every = self.log_every;
        t
    }

    pub fn noise_model(&self) -> Result<NoiseModel, AppError> {
        let mut model = NoiseModel::default_for(self.problem, self.seed);
        let n = &self.noise;
        match &mut model.amplitude {
            Amplitude::Bands { high, low, intervals } => {
                if n.peak.is_some() {
                    return Err(AppError::Config("noise.peak applies to diffreact2d only".into()));
                }
                *high = n.high.unwrap_or(*high);
                *low = n.low.unwrap_or(*low);
                if let Some(b) = &n.bands {
                    *intervals = b.iter().map(|&[a, b]| (a, b)).collect();
                }
            }
            Amplitude::CosineBump { peak } => {
                if n.high.is_some() || n.low.is_some() || n.bands.is_some() {
                    return Err(AppError::Config("noise.high/low/bands apply to poisson1d only".into()));
                }
                *peak = n.peak.unwrap_or(*peak);
            }
            Amplitude::Constant(_) => {}
        }
        Ok(model)
    }

    pub fn counts(&self) -> DatasetCounts {
        DatasetCounts::default_for(self.problem)
    }

    pub fn to_toml(&self) -> String {
        let file = ConfigFile {
            problem: Some(self.problem.name().to_string()),
            method: Some(self.method.name().to_string()),
            preset: Some(self.preset.name().into()),
            seed: Some(self.seed),
            epochs: Some(self.epochs),
            learning_rate: Some(self.learning_rate),
            log_every: Some(self.log_every),
            ensemble_members: Some(self.ensemble_members),
            network: Some(self.network),
            noise: Some(self.noise.clone()),
        };
        toml::to_string(&file).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_problem() {
        let c = RunConfig::from_toml_str("problem = \"diffreact2d\"", &Overrides::default()).unwrap();
        assert_eq!(c.preset, Preset::Table2);
        assert_eq!(c.network.hidden_layers, 2);
        assert_eq!(c.weights().lambda_kl, 0.005);
        let c = RunConfig::from_toml_str("", &Overrides::default()).unwrap();
        assert_eq!((c.problem, c.preset, c.network.hidden_layers), (ProblemKind::Poisson1d, Preset::Table1, 3));
        let o = Overrides { preset: Some("table2_curves".into()), ..Default::default() };
        let c = RunConfig::from_toml_str("problem = \"diffreact2d\"", &o).unwrap();
        assert_eq!((c.weights().lambda_kl, c.weights().lambda_r), (0.05, 0.5));
        assert_eq!(RunConfig::from_toml_str(&c.to_toml(), &Overrides::default()).unwrap(), c);
    }

    #[test]
    fn overrides_win() {
        let o = Overrides { method: Some("plain_pinn".into()), epochs: Some(7), ..Default::default() };
        let c = RunConfig::from_toml_str("method = \"epinn_v\"\nepochs = 100", &o).unwrap();
        assert_eq!((c.method, c.epochs), (Method::PlainPinn, 7));
    }

    #[test]
    fn bad_values_are_config_errors() {
        for text in ["method = \"mc_dropout\"", "preset = \"table3\"", "epochs = 0", "bogus = 1", "seed = \"x\""] {
            let e = RunConfig::from_toml_str(text, &Overrides::default()).unwrap_err();
            assert_eq!(e.exit_code(), 1, "{text}");
        }
        let e = RunConfig::from_toml_str("problem = \"diffreact2d\"\n[noise]\nhigh = 0.3", &Overrides::default());
        assert!(e.is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let c = RunConfig::from_toml_str("[noise]\nbands = [[-0.5, -0.4]]", &Overrides::default()).unwrap();
        let again = RunConfig::from_toml_str(&c.to_toml(), &Overrides::default()).unwrap();
        assert_eq!(c, again);
    }
}
