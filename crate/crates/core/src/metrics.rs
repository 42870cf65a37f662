//! Uncertainty-quality metrics: empirical coverage, Spearman correlations and
//! mean errors.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::EvidentialPinn;
use crate::problems::{Dataset, ProblemSpec};
use crate::training::DeepEnsemble;

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.96;

/// Fraction of points with |mean − exact| ≤ z·σ.
pub fn ecp(predictions: &[(f64, f64)], exact: &[f64], z: f64) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::structural("coverage of an empty prediction set"));
    }
    if predictions.len() != exact.len() {
        return Err(Error::structural(format!(
            "{} predictions for {} exact values",
            predictions.len(),
            exact.len()
        )));
    }
    let hits = predictions
        .iter()
        .zip(exact)
        .filter(|(&(mean, sigma), &u)| libm::fabs(mean - u) <= z * sigma)
        .count();
    Ok(hits as f64 / predictions.len() as f64)
}

/// 1-based ranks, ties share the average of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = alloc::vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / libm::sqrt(saa * sbb)).clamp(-1.0, 1.0))
}

/// Spearman rank correlation (Pearson correlation of average ranks).
///
/// Undefined, and reported as an error, when either input is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::structural("spearman inputs differ in length"));
    }
    if a.len() < 3 {
        return Err(Error::structural("spearman needs at least 3 pairs"));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(Error::numerical("spearman input contains NaN"));
    }
    pearson(&average_ranks(a), &average_ranks(b))
        .ok_or_else(|| Error::numerical("spearman correlation undefined for a constant input"))
}

pub fn mean_abs_error(predicted: &[f64], exact: &[f64]) -> Result<f64> {
    if predicted.is_empty() || predicted.len() != exact.len() {
        return Err(Error::structural("mean error needs equal-length non-empty inputs"));
    }
    Ok(predicted.iter().zip(exact).map(|(p, e)| libm::fabs(p - e)).sum::<f64>() / predicted.len() as f64)
}

/// Mean |γ − u_e| over boundary points.
pub fn boundary_error(predicted: &[f64], exact: &[f64]) -> Result<f64> {
    if predicted.is_empty() {
        return Err(Error::structural("boundary set is empty"));
    }
    mean_abs_error(predicted, exact)
}

/// Anything that yields a mean and a predictive σ per point.
pub trait UncertainPredictor {
    fn input_dim(&self) -> usize;
    /// (mean, σ_p) at flat coordinates.
    fn predict_with_sigma(&self, points: &[f64]) -> Result<Vec<(f64, f64)>>;
}

impl UncertainPredictor for EvidentialPinn {
    fn input_dim(&self) -> usize {
        self.config().input_dim
    }

    fn predict_with_sigma(&self, points: &[f64]) -> Result<Vec<(f64, f64)>> {
        Ok(self.predict(points)?.into_iter().map(|p| (p.mean, p.sigma_p)).collect())
    }
}

impl UncertainPredictor for DeepEnsemble {
    fn input_dim(&self) -> usize {
        self.members[0].config().input_dim
    }

    fn predict_with_sigma(&self, points: &[f64]) -> Result<Vec<(f64, f64)>> {
        Ok(self.predict(points)?.into_iter().map(|p| (p.mean, p.sigma)).collect())
    }
}

/// The exact solution with a fixed σ, useful as a reference predictor.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactPredictor {
    pub problem: ProblemSpec,
    pub sigma: f64,
}

impl UncertainPredictor for ExactPredictor {
    fn input_dim(&self) -> usize {
        self.problem.dimension
    }

    fn predict_with_sigma(&self, points: &[f64]) -> Result<Vec<(f64, f64)>> {
        Ok(points.chunks(self.problem.dimension).map(|p| (self.problem.exact_solution(p), self.sigma)).collect())
    }
}

/// One column of the results tables.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub kappa_mean: f64,
    pub kappa_sigma: f64,
    /// Coverage on test points inside the training domain.
    pub ecp: f64,
    /// Coverage on every test point.
    pub ecp_extended: f64,
    /// Spearman(σ_p, |mean − exact|) on test points inside the training domain.
    pub rho_e: Option<f64>,
    /// Spearman(σ_p, |u_noisy − u_clean|) at observation points.
    pub rho_n: Option<f64>,
    pub mean_error: f64,
    /// Only for problems with boundary points.
    pub boundary_mean_error: Option<f64>,
    /// Mean σ_p on test points inside the training domain.
    pub mean_sigma_p: f64,
    /// Mean σ_p on test points outside the training domain, if any.
    pub mean_sigma_p_extrapolation: Option<f64>,
}

impl MetricsReport {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        let corr = |v: Option<f64>| v.map_or(true, |r| (-1.0..=1.0).contains(&r));
        if unit(self.ecp) && unit(self.ecp_extended) && corr(self.rho_e) && corr(self.rho_n) {
            Ok(())
        } else {
            Err(Error::numerical("metrics out of range"))
        }
    }
}

/// Computes every table metric for `predictor` on `dataset`. `kappa` is the
/// (κ̄, σ_κ) to report alongside.
pub fn evaluate<P: UncertainPredictor + ?Sized>(
    predictor: &P,
    problem: &ProblemSpec,
    dataset: &Dataset,
    kappa: (f64, f64),
) -> Result<MetricsReport> {
    if predictor.input_dim() != problem.dimension || dataset.dimension != problem.dimension {
        return Err(Error::structural(format!(
            "dimension mismatch: predictor {}, problem {}, dataset {}",
            predictor.input_dim(),
            problem.dimension,
            dataset.dimension
        )));
    }
    if dataset.test.is_empty() || dataset.observations.is_empty() {
        return Err(Error::structural("dataset needs test points and observations"));
    }
    let test_pred = predictor.predict_with_sigma(&dataset.test_points_flat())?;
    let exact: Vec<f64> = dataset.test.iter().map(|t| t.u_exact).collect();
    let inside: Vec<bool> = dataset.test.iter().map(|t| problem.in_training_domain(&t.x)).collect();

    let pick = |keep: bool| -> (Vec<(f64, f64)>, Vec<f64>) {
        test_pred
            .iter()
            .zip(&exact)
            .zip(&inside)
            .filter(|(_, &i)| i == keep)
            .map(|((&p, &e), _)| (p, e))
            .unzip()
    };
    let (in_pred, in_exact) = pick(true);
    let (out_pred, _) = pick(false);

    let ecp_in = ecp(&in_pred, &in_exact, Z_95)?;
    let ecp_all = ecp(&test_pred, &exact, Z_95)?;
    let in_means: Vec<f64> = in_pred.iter().map(|p| p.0).collect();
    let in_sigmas: Vec<f64> = in_pred.iter().map(|p| p.1).collect();
    let errors: Vec<f64> = in_means.iter().zip(&in_exact).map(|(m, e)| libm::fabs(m - e)).collect();
    let rho_e = spearman(&in_sigmas, &errors).ok();
    let mean_error = mean_abs_error(&in_means, &in_exact)?;
    let mean_sigma_p = in_sigmas.iter().sum::<f64>() / in_sigmas.len() as f64;
    let mean_sigma_p_extrapolation = if out_pred.is_empty() {
        None
    } else {
        Some(out_pred.iter().map(|p| p.1).sum::<f64>() / out_pred.len() as f64)
    };

    let obs_pred = predictor.predict_with_sigma(&dataset.observation_points_flat())?;
    let obs_sigma: Vec<f64> = obs_pred.iter().map(|p| p.1).collect();
    let noise: Vec<f64> = dataset.observations.iter().map(|o| libm::fabs(o.noise())).collect();
    let rho_n = spearman(&obs_sigma, &noise).ok();

    let boundary_mean_error = if dataset.boundary.is_empty() {
        None
    } else {
        let pred = predictor.predict_with_sigma(&dataset.boundary_points_flat())?;
        let means: Vec<f64> = pred.iter().map(|p| p.0).collect();
        let values: Vec<f64> = dataset.boundary.iter().map(|b| b.value).collect();
        Some(boundary_error(&means, &values)?)
    };

    let report = MetricsReport {
        kappa_mean: kappa.0,
        kappa_sigma: kappa.1,
        ecp: ecp_in,
        ecp_extended: ecp_all,
        rho_e,
        rho_n,
        mean_error,
        boundary_mean_error,
        mean_sigma_p,
        mean_sigma_p_extrapolation,
    };
    report.validate()?;
    Ok(report)
}
