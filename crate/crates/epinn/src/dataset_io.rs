//! Dataset CSV: `x[,y],u_noisy,u_clean,amplitude,role` with one row per point
//! and `role` one of `obs`, `colloc`, `boundary`, `test`.
//!
//! Collocation rows leave the three value columns empty. Boundary rows carry
//! the Dirichlet value in both value columns and amplitude 0; test rows carry
//! the exact solution in both. Floats are written in shortest round-trip form,
//! so a reload is bit-identical.

use std::io::{Read, Write};
use std::path::Path;

use epinn_core::problems::{BoundaryPoint, Dataset, Observation, TestPoint};

use crate::error::AppError;

const COORD_NAMES: [&str; 2] = ["x", "y"];

fn num(v: f64) -> String {
    v.to_string()
}

pub fn write_dataset<W: Write>(dataset: &Dataset, out: W) -> Result<(), AppError> {
    let d = dataset.dimension;
    if d == 0 || d > COORD_NAMES.len() {
        return Err(AppError::Data(format!("cannot export a {d}-dimensional dataset")));
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = COORD_NAMES[..d].to_vec();
    header.extend(["u_noisy", "u_clean", "amplitude", "role"]);
    let csv_err = |e: csv::Error| AppError::Data(format!("writing dataset CSV: {e}"));
    w.write_record(&header).map_err(csv_err)?;
    let mut row = |x: &[f64], values: [Option<f64>; 3], role: &str| {
        let mut rec: Vec<String> = x.iter().copied().map(num).collect();
        rec.extend(values.iter().map(|v| v.map(num).unwrap_or_default()));
        rec.push(role.to_string());
        w.write_record(&rec).map_err(csv_err)
    };
    for o in &dataset.observations {
        row(&o.x, [Some(o.u_noisy), Some(o.u_clean), Some(o.amplitude)], "obs")?;
    }
    for c in &dataset.collocation {
        row(c, [None, None, None], "colloc")?;
    }
    for b in &dataset.boundary {
        row(&b.x, [Some(b.value), Some(b.value), Some(0.0)], "boundary")?;
    }
    for t in &dataset.test {
        row(&t.x, [Some(t.u_exact), Some(t.u_exact), Some(0.0)], "test")?;
    }
    w.flush().map_err(|e| AppError::Data(format!("writing dataset CSV: {e}")))?;
    Ok(())
}

pub fn read_dataset<R: Read>(input: R) -> Result<Dataset, AppError> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(|e| AppError::Data(format!("dataset header: {e}")))?.clone();
    let names: Vec<&str> = header.iter().collect();
    let d = names.iter().position(|&n| n == "u_noisy").unwrap_or(0);
    let expected: Vec<&str> = COORD_NAMES[..d.min(2)].iter().copied().chain(["u_noisy", "u_clean", "amplitude", "role"]).collect();
    if d == 0 || d > 2 || names != expected {
        return Err(AppError::Data(format!("unexpected dataset columns {names:?}")));
    }
    let mut ds = Dataset { dimension: d, observations: vec![], collocation: vec![], boundary: vec![], test: vec![] };
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| AppError::Data(format!("dataset row {}: {e}", line + 2)))?;
        let field = |i: usize| -> Result<Option<f64>, AppError> {
            let s = rec.get(i).unwrap_or("").trim();
            if s.is_empty() {
                return Ok(None);
            }
            s.parse::<f64>()
                .map(Some)
                .map_err(|_| AppError::Data(format!("dataset row {}: `{s}` is not a number", line + 2)))
        };
        let need = |i: usize| -> Result<f64, AppError> {
            field(i)?.ok_or_else(|| AppError::Data(format!("dataset row {}: missing column {}", line + 2, names[i])))
        };
        let x: Vec<f64> = (0..d).map(need).collect::<Result<_, _>>()?;
        match rec.get(d + 3).unwrap_or("") {
            "obs" => ds.observations.push(Observation {
                x,
                u_noisy: need(d)?,
                u_clean: need(d + 1)?,
                amplitude: need(d + 2)?,
            }),
            "colloc" => ds.collocation.push(x),
            "boundary" => ds.boundary.push(BoundaryPoint { x, value: need(d)? }),
            "test" => ds.test.push(TestPoint { x, u_exact: need(d + 1)? }),
            other => return Err(AppError::Data(format!("dataset row {}: unknown role `{other}`", line + 2))),
        }
    }
    if ds.observations.is_empty() || ds.collocation.is_empty() || ds.test.is_empty() {
        return Err(AppError::Data("dataset needs obs, colloc and test rows".into()));
    }
    Ok(ds)
}

pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<(), AppError> {
    let f = std::fs::File::create(path).map_err(|e| AppError::io(path, e))?;
    write_dataset(dataset, std::io::BufWriter::new(f))
}

pub fn load_dataset(path: &Path) -> Result<Dataset, AppError> {
    let f = std::fs::File::open(path).map_err(|e| AppError::io(path, e))?;
    read_dataset(std::io::BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use epinn_core::problems::{generate_dataset, DatasetCounts, NoiseModel, ProblemKind};

    #[test]
    fn round_trip_is_exact() {
        for kind in [ProblemKind::Poisson1d, ProblemKind::DiffReact2d] {
            let spec = kind.spec();
            let ds = generate_dataset(&spec, &NoiseModel::default_for(kind, 1), &DatasetCounts::default_for(kind))
                .unwrap();
            let mut buf = Vec::new();
            write_dataset(&ds, &mut buf).unwrap();
            assert_eq!(read_dataset(buf.as_slice()).unwrap(), ds);
        }
    }

    #[test]
    fn rejects_bad_rows() {
        assert!(read_dataset("x,u_noisy,u_clean,amplitude,role\n0.1,1,1,0.2,obs\n0.2,,,,weird\n".as_bytes()).is_err());
        assert!(read_dataset("a,b\n1,2\n".as_bytes()).is_err());
        assert!(read_dataset("x,u_noisy,u_clean,amplitude,role\n0.1,abc,1,0.2,obs\n".as_bytes()).is_err());
    }
}
