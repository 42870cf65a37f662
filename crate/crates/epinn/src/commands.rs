//! The four CLI commands. Every command works inside one run directory:
//!
//! | file | written by |
//! |---|---|
//! | `config.toml` | generate, train (resolved configuration) |
//! | `dataset.csv` | generate (or train, if missing) |
//! | `checkpoint.json`, `curve.csv` | train |
//! | `checkpoint_last_good.json` | train, only when it diverges |
//! | `metrics.json`, `metrics.txt`, `*.svg` | evaluate |
//! | `manifest.json` | all of the above |

use std::path::{Path, PathBuf};

use epinn_core::metrics::{evaluate as compute_metrics, UncertainPredictor};
use epinn_core::problems::{generate_dataset, Dataset, ProblemKind, ProblemSpec};
use epinn_core::training::{
    train_deep_ensemble, train_epinn_observed, train_plain_pinn_observed, CurveEntry, LearningCurve,
};
use log::{info, warn};

use crate::checkpoint::{load_checkpoint, save_checkpoint, TrainedModel};
use crate::config::{Method, RunConfig};
use crate::dataset_io::{load_dataset, save_dataset};
use crate::error::AppError;
use crate::manifest::Manifest;
use crate::plot::{band_plot, heatmap, BandPlot};
use crate::report::{load_metrics, render_table, save_curves, save_metrics, MetricsRecord};

pub const CONFIG_FILE: &str = "config.toml";
pub const DATASET_FILE: &str = "dataset.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const LAST_GOOD_FILE: &str = "checkpoint_last_good.json";
pub const CURVE_FILE: &str = "curve.csv";
pub const METRICS_JSON: &str = "metrics.json";
pub const METRICS_TEXT: &str = "metrics.txt";

fn create_dir(dir: &Path) -> Result<(), AppError> {
    std::fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))
}

fn write(path: &Path, contents: &str) -> Result<(), AppError> {
    std::fs::write(path, contents).map_err(|e| AppError::io(path, e))
}

/// Writes `dataset.csv` and `config.toml` into `out`.
pub fn generate(cfg: &RunConfig, out: &Path) -> Result<Dataset, AppError> {
    let spec = cfg.problem.spec();
    let dataset = generate_dataset(&spec, &cfg.noise_model()?, &cfg.counts())?;
    create_dir(out)?;
    save_dataset(&dataset, &out.join(DATASET_FILE))?;
    let toml = cfg.to_toml();
    write(&out.join(CONFIG_FILE), &toml)?;
    Manifest::record(out, cfg.seed, &toml, "generate", &[DATASET_FILE, CONFIG_FILE])?;
    info!(
        "{}: {} observations, {} collocation, {} boundary, {} test points",
        out.join(DATASET_FILE).display(),
        dataset.observations.len(),
        dataset.collocation.len(),
        dataset.boundary.len(),
        dataset.test.len()
    );
    Ok(dataset)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSummary {
    pub method: Method,
    pub kappa_mean: f64,
    pub kappa_sigma: f64,
    pub epochs: usize,
}

impl std::fmt::Display for TrainSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} after {} epochs: kappa = {:.4}, sigma_kappa = {:.4}",
            self.method, self.epochs, self.kappa_mean, self.kappa_sigma
        )
    }
}

fn progress_logger(epochs: usize) -> impl FnMut(&CurveEntry) {
    let every = (epochs / 20).max(1);
    move |e: &CurveEntry| {
        if e.epoch % every == 0 || e.epoch == epochs {
            info!(
                "epoch {:>7}  loss {:+.5}  data {:+.5}  residual {:.3e}  kappa {:.4}  sigma_kappa {:.4}",
                e.epoch, e.total, e.data, e.residual, e.kappa_mean, e.kappa_sigma
            );
        }
    }
}

/// Trains `cfg.method` on `out/dataset.csv` (generated first if absent) and
/// writes the checkpoint and learning curve. On divergence the last finite
/// parameters go to `checkpoint_last_good.json` and a numerical error is
/// returned.
pub fn train(cfg: &RunConfig, out: &Path) -> Result<TrainSummary, AppError> {
    let dataset_path = out.join(DATASET_FILE);
    let dataset = if dataset_path.exists() {
        load_dataset(&dataset_path)?
    } else {
        info!("no dataset in {}, generating one", out.display());
        generate(cfg, out)?
    };
    let spec = cfg.problem.spec();
    if dataset.dimension != spec.dimension {
        return Err(AppError::Data(format!(
            "{} is {}-dimensional but {} is {}-dimensional",
            dataset_path.display(),
            dataset.dimension,
            cfg.problem.name(),
            spec.dimension
        )));
    }
    let net = cfg.net_config();
    let tc = cfg.train_config();
    let toml = cfg.to_toml();
    write(&out.join(CONFIG_FILE), &toml)?;
    let mut log = progress_logger(cfg.epochs);

    let (model, curves): (TrainedModel, Vec<(u64, LearningCurve)>) = match cfg.method {
        Method::Epinn | Method::EpinnV => match train_epinn_observed(&spec, &dataset, &net, &tc, &mut log) {
            Ok(o) => (TrainedModel::Evidential { method: cfg.method, model: o.model }, vec![(cfg.seed, o.curve)]),
            Err(f) => {
                let last = f.last_good.map(|model| TrainedModel::Evidential { method: cfg.method, model });
                return Err(diverged(cfg, out, f.error, f.epoch, last, f.curve));
            }
        },
        Method::PlainPinn => match train_plain_pinn_observed(&spec, &dataset, &net, &tc, &mut log) {
            Ok(o) => (TrainedModel::Plain(o.model), vec![(cfg.seed, o.curve)]),
            Err(f) => return Err(diverged(cfg, out, f.error, f.epoch, f.last_good.map(TrainedModel::Plain), f.curve)),
        },
        Method::DeepEnsemble => {
            info!("training {} ensemble members", cfg.ensemble_members);
            let r = train_deep_ensemble(&spec, &dataset, &net, &tc, cfg.ensemble_members)?;
            for (seed, e) in &r.dropped {
                warn!("member {seed} dropped: {e}");
            }
            let curves = r.seeds.iter().copied().zip(r.curves).collect();
            (TrainedModel::Ensemble { ensemble: r.ensemble, seeds: r.seeds }, curves)
        }
    };

    save_checkpoint(&model, cfg.problem, &out.join(CHECKPOINT_FILE))?;
    let refs: Vec<(u64, &LearningCurve)> = curves.iter().map(|(s, c)| (*s, c)).collect();
    save_curves(&refs, &out.join(CURVE_FILE))?;
    Manifest::record(out, cfg.seed, &toml, "train", &[DATASET_FILE, CONFIG_FILE, CHECKPOINT_FILE, CURVE_FILE])?;
    let (kappa_mean, kappa_sigma) = model.kappa();
    Ok(TrainSummary { method: cfg.method, kappa_mean, kappa_sigma, epochs: cfg.epochs })
}

fn diverged(
    cfg: &RunConfig,
    out: &Path,
    error: epinn_core::Error,
    epoch: usize,
    last_good: Option<TrainedModel>,
    curve: LearningCurve,
) -> AppError {
    let mut files = vec![CONFIG_FILE];
    let mut saved = String::new();
    if let Some(m) = last_good {
        match save_checkpoint(&m, cfg.problem, &out.join(LAST_GOOD_FILE)) {
            Ok(()) => {
                files.push(LAST_GOOD_FILE);
                saved = format!("; last finite parameters saved to {}", out.join(LAST_GOOD_FILE).display());
            }
            Err(e) => warn!("could not save the last good checkpoint: {e}"),
        }
    }
    if save_curves(&[(cfg.seed, &curve)], &out.join(CURVE_FILE)).is_ok() {
        files.push(CURVE_FILE);
    }
    if let Err(e) = Manifest::record(out, cfg.seed, &cfg.to_toml(), "train", &files) {
        warn!("could not update the manifest: {e}");
    }
    let msg = format!("training stopped at epoch {epoch}: {error}{saved}");
    if error.is_numerical() {
        AppError::Numerical(msg)
    } else {
        AppError::Data(msg)
    }
}

/// Sources for [`evaluate`]; unset paths default to files in the run directory.
#[derive(Clone, Debug, Default)]
pub struct EvaluateInputs {
    pub checkpoint: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
}

/// Loads a checkpoint and a dataset (never modifying either) and writes
/// metrics and plots into `out`.
pub fn evaluate(out: &Path, inputs: &EvaluateInputs) -> Result<MetricsRecord, AppError> {
    let ckpt_path = inputs.checkpoint.clone().unwrap_or_else(|| out.join(CHECKPOINT_FILE));
    let data_path = inputs.dataset.clone().unwrap_or_else(|| out.join(DATASET_FILE));
    let (problem, model) = load_checkpoint(&ckpt_path)?;
    let dataset = load_dataset(&data_path)?;
    let manifest = Manifest::load(out).ok().flatten();
    let seed = manifest.as_ref().map_or(model.network().seed, |m| m.seed);
    let predictor = model.predictor();
    let record =
        evaluate_predictor(predictor.as_ref(), model.kappa(), problem, &dataset, out, model.method().name(), seed)?;
    if let Some(m) = manifest {
        let mut files = vec![METRICS_JSON, METRICS_TEXT];
        files.extend(plot_files(problem));
        Manifest::record(out, m.seed, &m.config, "evaluate", &files)?;
    }
    Ok(record)
}

fn plot_files(problem: ProblemKind) -> Vec<&'static str> {
    match problem {
        ProblemKind::Poisson1d => vec!["prediction.svg"],
        ProblemKind::DiffReact2d => vec!["prediction.svg", "error.svg", "sigma.svg"],
    }
}

/// Metrics, text table and figures for any predictor.
pub fn evaluate_predictor(
    predictor: &dyn UncertainPredictor,
    kappa: (f64, f64),
    problem: ProblemKind,
    dataset: &Dataset,
    out: &Path,
    method: &str,
    seed: u64,
) -> Result<MetricsRecord, AppError> {
    let spec = problem.spec();
    if dataset.dimension != spec.dimension || predictor.input_dim() != spec.dimension {
        return Err(AppError::Data(format!(
            "dimension mismatch: {} needs {}-D inputs, dataset is {}-D, model takes {}-D",
            problem.name(),
            spec.dimension,
            dataset.dimension,
            predictor.input_dim()
        )));
    }
    let metrics = compute_metrics(predictor, &spec, dataset, kappa)?;
    let record = MetricsRecord::new(problem.name(), method, seed, &metrics);
    create_dir(out)?;
    save_metrics(&record, &out.join(METRICS_JSON))?;
    write(&out.join(METRICS_TEXT), &render_table(std::slice::from_ref(&record)))?;
    let test = predictor.predict_with_sigma(&dataset.test_points_flat())?;
    match problem {
        ProblemKind::Poisson1d => write(&out.join("prediction.svg"), &plot_1d(&spec, dataset, &test, method))?,
        ProblemKind::DiffReact2d => {
            for (name, svg) in plots_2d(dataset, &test, method)? {
                write(&out.join(name), &svg)?;
            }
        }
    }
    Ok(record)
}

fn plot_1d(spec: &ProblemSpec, dataset: &Dataset, test: &[(f64, f64)], method: &str) -> String {
    let mut rows: Vec<(f64, f64, f64, f64)> =
        dataset.test.iter().zip(test).map(|(t, &(m, s))| (t.x[0], m, s, t.u_exact)).collect();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let x: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let mean: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let sigma: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let exact: Vec<f64> = rows.iter().map(|r| r.3).collect();
    let obs: Vec<(f64, f64)> = dataset.observations.iter().map(|o| (o.x[0], o.u_noisy)).collect();
    band_plot(&BandPlot {
        title: &format!("{method}: prediction with 95% band"),
        x: &x,
        mean: &mean,
        sigma: &sigma,
        exact: &exact,
        training_domain: spec.train_bounds[0],
        observations: &obs,
    })
}

fn plots_2d(dataset: &Dataset, test: &[(f64, f64)], method: &str) -> Result<Vec<(&'static str, String)>, AppError> {
    let axis = |k: usize| {
        let mut v: Vec<f64> = dataset.test.iter().map(|t| t.x[k]).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    };
    let (xs, ys) = (axis(0), axis(1));
    if xs.len() * ys.len() != dataset.test.len() || xs.len() < 2 || ys.len() < 2 {
        return Err(AppError::Data("2D test points do not form a tensor grid".into()));
    }
    let index = |v: f64, axis: &[f64]| axis.binary_search_by(|a| a.total_cmp(&v)).expect("grid value");
    let mut mean = vec![0.0; test.len()];
    let mut err = vec![0.0; test.len()];
    let mut sigma = vec![0.0; test.len()];
    for (t, &(m, s)) in dataset.test.iter().zip(test) {
        let k = index(t.x[1], &ys) * xs.len() + index(t.x[0], &xs);
        mean[k] = m;
        err[k] = (m - t.u_exact).abs();
        sigma[k] = s;
    }
    Ok(vec![
        ("prediction.svg", heatmap(&format!("{method}: predicted u"), &xs, &ys, &mean)),
        ("error.svg", heatmap(&format!("{method}: |u - u_exact|"), &xs, &ys, &err)),
        ("sigma.svg", heatmap(&format!("{method}: sigma_p"), &xs, &ys, &sigma)),
    ])
}

/// Collects `metrics.json` from each run directory into one table; with
/// `out`, also writes `report.txt` and `report.json` there.
pub fn report(runs: &[PathBuf], out: Option<&Path>) -> Result<String, AppError> {
    if runs.is_empty() {
        return Err(AppError::Config("report needs at least one run directory".into()));
    }
    let records = runs.iter().map(|r| load_metrics(&r.join(METRICS_JSON))).collect::<Result<Vec<_>, _>>()?;
    let mut by_problem: Vec<(String, Vec<MetricsRecord>)> = Vec::new();
    for r in records.iter().cloned() {
        match by_problem.iter_mut().find(|(p, _)| *p == r.problem) {
            Some((_, v)) => v.push(r),
            None => by_problem.push((r.problem.clone(), vec![r])),
        }
    }
    let table = by_problem.iter().map(|(_, rs)| render_table(rs)).collect::<Vec<_>>().join("\n");
    if let Some(dir) = out {
        create_dir(dir)?;
        write(&dir.join("report.txt"), &table)?;
        let json = serde_json::to_string_pretty(&records).expect("records serialize");
        write(&dir.join("report.json"), &(json + "\n"))?;
    }
    Ok(table)
}
