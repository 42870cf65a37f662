//! Learning-curve CSVs, metrics JSON and the plain-text results table.

use std::io::Write;
use std::path::Path;

use epinn_core::metrics::MetricsReport;
use epinn_core::training::LearningCurve;
use serde::{Deserialize, Serialize};

use crate::error::AppError;

/// Writes `epoch,total,data[,regularizer],residual,kappa_mean,kappa_sigma`.
/// With several curves (ensemble members) a leading `member` column is added.
/// The regularizer column appears only if some entry carries one.
pub fn write_curves<W: Write>(curves: &[(u64, &LearningCurve)], out: W) -> Result<(), AppError> {
    let with_reg = curves.iter().any(|(_, c)| c.has_regularizer());
    let with_member = curves.len() > 1;
    let err = |e: csv::Error| AppError::Data(format!("writing curve CSV: {e}"));
    let mut w = csv::Writer::from_writer(out);
    let mut header = Vec::new();
    if with_member {
        header.push("member");
    }
    header.extend(["epoch", "total", "data"]);
    if with_reg {
        header.push("regularizer");
    }
    header.extend(["residual", "kappa_mean", "kappa_sigma"]);
    w.write_record(&header).map_err(err)?;
    for (seed, curve) in curves {
        for e in &curve.entries {
            let mut rec = Vec::with_capacity(header.len());
            if with_member {
                rec.push(seed.to_string());
            }
            rec.extend([e.epoch.to_string(), e.total.to_string(), e.data.to_string()]);
            if with_reg {
                rec.push(e.regularizer.map(|r| r.to_string()).unwrap_or_default());
            }
            rec.extend([e.residual.to_string(), e.kappa_mean.to_string(), e.kappa_sigma.to_string()]);
            w.write_record(&rec).map_err(err)?;
        }
    }
    w.flush().map_err(|e| AppError::Data(format!("writing curve CSV: {e}")))
}

pub fn save_curves(curves: &[(u64, &LearningCurve)], path: &Path) -> Result<(), AppError> {
    let f = std::fs::File::create(path).map_err(|e| AppError::io(path, e))?;
    write_curves(curves, std::io::BufWriter::new(f))
}

/// One evaluated run: identification plus every table column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub problem: String,
    pub method: String,
    pub seed: u64,
    pub kappa_mean: f64,
    pub kappa_sigma: f64,
    pub ecp: f64,
    pub ecp_extended: f64,
    pub rho_e: Option<f64>,
    pub rho_n: Option<f64>,
    pub mean_error: f64,
    pub boundary_mean_error: Option<f64>,
    pub mean_sigma_p: f64,
    pub mean_sigma_p_extrapolation: Option<f64>,
}

impl MetricsRecord {
    pub fn new(problem: &str, method: &str, seed: u64, m: &MetricsReport) -> Self {
        Self {
            problem: problem.into(),
            method: method.into(),
            seed,
            kappa_mean: m.kappa_mean,
            kappa_sigma: m.kappa_sigma,
            ecp: m.ecp,
            ecp_extended: m.ecp_extended,
            rho_e: m.rho_e,
            rho_n: m.rho_n,
            mean_error: m.mean_error,
            boundary_mean_error: m.boundary_mean_error,
            mean_sigma_p: m.mean_sigma_p,
            mean_sigma_p_extrapolation: m.mean_sigma_p_extrapolation,
        }
    }
}

pub fn save_metrics(record: &MetricsRecord, path: &Path) -> Result<(), AppError> {
    let json = serde_json::to_string_pretty(record).expect("metrics serialize");
    std::fs::write(path, json + "\n").map_err(|e| AppError::io(path, e))
}

pub fn load_metrics(path: &Path) -> Result<MetricsRecord, AppError> {
    let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| AppError::Data(format!("{}: {e}", path.display())))
}

fn cell(v: Option<f64>, digits: usize) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x:.digits$}"),
        Some(x) => x.to_string(),
        None => "-".into(),
    }
}

/// Rows are metrics, columns are runs.
pub fn render_table(records: &[MetricsRecord]) -> String {
    type Getter = fn(&MetricsRecord) -> Option<f64>;
    let rows: [(&str, Getter, usize); 10] = [
        ("kappa", |r| Some(r.kappa_mean), 4),
        ("sigma_kappa", |r| Some(r.kappa_sigma), 4),
        ("ECP", |r| Some(r.ecp), 3),
        ("ECP (all test points)", |r| Some(r.ecp_extended), 3),
        ("rho_e", |r| r.rho_e, 3),
        ("rho_n", |r| r.rho_n, 3),
        ("mean |u - u_exact|", |r| Some(r.mean_error), 5),
        ("boundary error", |r| r.boundary_mean_error, 5),
        ("mean sigma_p", |r| Some(r.mean_sigma_p), 5),
        ("mean sigma_p (extrap.)", |r| r.mean_sigma_p_extrapolation, 5),
    ];
    let headers: Vec<String> = records.iter().map(|r| format!("{} s{}", r.method, r.seed)).collect();
    let mut body: Vec<(&str, Vec<String>)> = Vec::new();
    for (name, get, digits) in rows {
        let cells: Vec<String> = records.iter().map(|r| cell(get(r), digits)).collect();
        if cells.iter().all(|c| c == "-") {
            continue;
        }
        body.push((name, cells));
    }
    let label_w = body.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max("metric".len());
    let col_w: Vec<usize> = (0..records.len())
        .map(|j| body.iter().map(|(_, c)| c[j].len()).chain([headers[j].len()]).max().unwrap_or(0))
        .collect();

    let mut out = String::new();
    let mut problems: Vec<&str> = records.iter().map(|r| r.problem.as_str()).collect();
    problems.dedup();
    out.push_str(&format!("problem: {}\n", problems.join(", ")));
    out.push_str(&format!("{:<label_w$}", "metric"));
    for (h, w) in headers.iter().zip(&col_w) {
        out.push_str(&format!("  {h:>w$}"));
    }
    out.push('\n');
    out.push_str(&"-".repeat(label_w + col_w.iter().map(|w| w + 2).sum::<usize>()));
    out.push('\n');
    for (name, cells) in body {
        out.push_str(&format!("{name:<label_w$}"));
        for (c, w) in cells.iter().zip(&col_w) {
            out.push_str(&format!("  {c:>w$}"));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use epinn_core::training::CurveEntry;

    fn entry(epoch: usize, reg: Option<f64>) -> CurveEntry {
        CurveEntry { epoch, total: 1.5, data: 1.0, regularizer: reg, residual: 0.5, kappa_mean: 0.7, kappa_sigma: 0.1 }
    }

    #[test]
    fn regularizer_column_follows_the_curve() {
        let with = LearningCurve { entries: vec![entry(1, Some(0.25))] };
        let without = LearningCurve { entries: vec![entry(1, None), entry(2, None)] };
        let mut buf = Vec::new();
        write_curves(&[(0, &with)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("epoch,total,data,regularizer,residual,kappa_mean,kappa_sigma\n1,1.5,1,0.25,"));
        let mut buf = Vec::new();
        write_curves(&[(3, &without), (4, &without)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("member,epoch,total,data,residual,kappa_mean,kappa_sigma\n3,1,"));
        assert_eq!(text.lines().count(), 5);
    }

    #[test]
    fn table_skips_empty_rows() {
        let r = MetricsRecord {
            problem: "poisson1d".into(),
            method: "epinn".into(),
            seed: 0,
            kappa_mean: 0.71,
            kappa_sigma: 0.01,
            ecp: 0.96,
            ecp_extended: 0.8,
            rho_e: Some(0.4),
            rho_n: None,
            mean_error: 0.01,
            boundary_mean_error: None,
            mean_sigma_p: 0.05,
            mean_sigma_p_extrapolation: Some(0.2),
        };
        let t = render_table(&[r.clone(), r]);
        assert!(t.contains("kappa") && t.contains("0.7100") && t.contains("0.960"));
        assert!(!t.contains("rho_n") && !t.contains("boundary"));
    }
}
