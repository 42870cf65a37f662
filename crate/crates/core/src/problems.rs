//! Benchmark inverse problems and their datasets.
//!
//! Both problems have the separable residual L = L₁ + κL₂ with λ = 0.01:
//!
//! - `poisson1d`: 0.01·u'' + κ·tanh(u) = f(x), u = sin³(6x), κ = 0.7.
//! - `diffreact2d`: 0.01·∇²u + κ·u² = f(x, y), u = sin(πx)sin(πy), κ = 1.
//!
//! Random draws use ChaCha8 seeded from a `u64` (`rand_chacha`), uniform
//! coordinates come from `rand::distributions::Open01` and Gaussian noise
//! from `rand_distr::StandardNormal` (ziggurat). The draw order is fixed:
//! observation coordinates, then per-observation noise, then random
//! collocation points.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::distributions::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::autodiff::{Jet, Tape, Var};
use crate::error::{Error, Result};
use crate::losses::TrainingBatch;
use crate::tensor::Matrix;

/// Diffusion coefficient λ shared by both benchmarks.
pub const LAMBDA: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ProblemKind {
    Poisson1d,
    DiffReact2d,
}

impl ProblemKind {
    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::Poisson1d => "poisson1d",
            ProblemKind::DiffReact2d => "diffreact2d",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "poisson1d" => Ok(ProblemKind::Poisson1d),
            "diffreact2d" => Ok(ProblemKind::DiffReact2d),
            other => Err(Error::structural(format!("unknown problem `{other}`"))),
        }
    }

    pub fn spec(self) -> ProblemSpec {
        match self {
            ProblemKind::Poisson1d => make_problem_1d(),
            ProblemKind::DiffReact2d => make_problem_2d(),
        }
    }
}

/// One benchmark instance.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    pub dimension: usize,
    pub lambda_coeff: f64,
    pub kappa_true: f64,
    /// Per-axis training domain (open interval).
    pub train_bounds: Vec<(f64, f64)>,
    /// Per-axis test domain; extends past the training domain in 1D.
    pub test_bounds: Vec<(f64, f64)>,
}

pub fn make_problem_1d() -> ProblemSpec {
    ProblemSpec {
        kind: ProblemKind::Poisson1d,
        dimension: 1,
        lambda_coeff: LAMBDA,
        kappa_true: 0.7,
        train_bounds: vec![(-0.8, 0.7)],
        test_bounds: vec![(-0.8, 1.2)],
    }
}

pub fn make_problem_2d() -> ProblemSpec {
    ProblemSpec {
        kind: ProblemKind::DiffReact2d,
        dimension: 2,
        lambda_coeff: LAMBDA,
        kappa_true: 1.0,
        train_bounds: vec![(-1.0, 1.0), (-1.0, 1.0)],
        test_bounds: vec![(-1.0, 1.0), (-1.0, 1.0)],
    }
}

/// Exact solution together with its gradient and diagonal second derivatives.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactDerivatives {
    pub value: f64,
    pub grad: Vec<f64>,
    pub diag2: Vec<f64>,
}

impl ProblemSpec {
    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    fn check_point(&self, x: &[f64]) {
        debug_assert_eq!(x.len(), self.dimension, "point dimension");
    }

    pub fn exact_solution(&self, x: &[f64]) -> f64 {
        self.check_point(x);
        match self.kind {
            ProblemKind::Poisson1d => libm::pow(libm::sin(6.0 * x[0]), 3.0),
            ProblemKind::DiffReact2d => libm::sin(PI * x[0]) * libm::sin(PI * x[1]),
        }
    }

    /// Analytic derivatives of the exact solution.
    pub fn exact_derivatives(&self, x: &[f64]) -> ExactDerivatives {
        self.check_point(x);
        match self.kind {
            ProblemKind::Poisson1d => {
                let s = libm::sin(6.0 * x[0]);
                let c = libm::cos(6.0 * x[0]);
                ExactDerivatives {
                    value: s * s * s,
                    grad: vec![18.0 * s * s * c],
                    diag2: vec![108.0 * (2.0 * s * c * c - s * s * s)],
                }
            }
            ProblemKind::DiffReact2d => {
                let (sx, cx) = (libm::sin(PI * x[0]), libm::cos(PI * x[0]));
                let (sy, cy) = (libm::sin(PI * x[1]), libm::cos(PI * x[1]));
                let u = sx * sy;
                ExactDerivatives {
                    value: u,
                    grad: vec![PI * cx * sy, PI * sx * cy],
                    diag2: vec![-PI * PI * u, -PI * PI * u],
                }
            }
        }
    }

    /// Source term f.
    pub fn source(&self, x: &[f64]) -> f64 {
        self.check_point(x);
        match self.kind {
            ProblemKind::Poisson1d => {
                let s = libm::sin(6.0 * x[0]);
                let c = libm::cos(6.0 * x[0]);
                1.08 * (2.0 * s * c * c - s * s * s) + 0.7 * libm::tanh(s * s * s)
            }
            ProblemKind::DiffReact2d => {
                let u = libm::sin(PI * x[0]) * libm::sin(PI * x[1]);
                -0.02 * PI * PI * u + u * u
            }
        }
    }

    /// (L₁, L₂) from a value, its diagonal second derivatives and the point.
    pub fn residual_pieces(&self, u: f64, diag2: &[f64], x: &[f64]) -> (f64, f64) {
        let lap: f64 = diag2.iter().sum();
        let l1 = self.lambda_coeff * lap - self.source(x);
        let l2 = match self.kind {
            ProblemKind::Poisson1d => libm::tanh(u),
            ProblemKind::DiffReact2d => u * u,
        };
        (l1, l2)
    }

    /// (L₁, L₂) of the exact solution, from symbolic derivatives.
    pub fn analytic_residual(&self, x: &[f64]) -> (f64, f64) {
        let d = self.exact_derivatives(x);
        self.residual_pieces(d.value, &d.diag2, x)
    }

    /// (L₁, L₂) as graph nodes for the jet of γ at the m x d points `coords`.
    pub fn residual_terms(&self, tape: &mut Tape, gamma: &Jet, coords: &Matrix) -> Result<(Var, Var)> {
        if gamma.dim() != self.dimension || coords.cols() != self.dimension {
            return Err(Error::structural(format!(
                "{} needs {}-dimensional jets and points",
                self.name(),
                self.dimension
            )));
        }
        if tape.shape(gamma.value) != (coords.rows(), 1) {
            return Err(Error::structural("residual jet must be an m x 1 column matching coords"));
        }
        let source: Vec<f64> = (0..coords.rows())
            .map(|r| {
                let p: Vec<f64> = (0..self.dimension).map(|c| coords.get(r, c)).collect();
                self.source(&p)
            })
            .collect();
        let source = tape.constant(Matrix::column(&source));
        let lap = gamma.laplacian(tape)?;
        let diffusion = tape.scale(lap, self.lambda_coeff);
        let l1 = tape.sub(diffusion, source)?;
        let l2 = match self.kind {
            ProblemKind::Poisson1d => tape.tanh(gamma.value),
            ProblemKind::DiffReact2d => tape.square(gamma.value),
        };
        Ok((l1, l2))
    }

    /// Whether `x` lies in the closed training domain.
    pub fn in_training_domain(&self, x: &[f64]) -> bool {
        x.iter().zip(&self.train_bounds).all(|(&v, &(lo, hi))| v >= lo && v <= hi)
    }
}

/// Spatial profile of the noise standard deviation.
#[derive(Clone, Debug, PartialEq)]
pub enum Amplitude {
    /// `high` inside any of the closed `intervals`, `low` elsewhere (1D).
    Bands { high: f64, low: f64, intervals: Vec<(f64, f64)> },
    /// `peak·cos(πx/2)cos(πy/2)·exp(−(x² + y²))` (2D).
    CosineBump { peak: f64 },
    Constant(f64),
}

impl Amplitude {
    /// Two high-noise bands at [−0.55, −0.35] and [0.25, 0.45], amplitude 0.2
    /// inside and 0.02 outside. The band placement is a chosen default.
    pub fn default_1d() -> Self {
        Amplitude::Bands { high: 0.2, low: 0.02, intervals: vec![(-0.55, -0.35), (0.25, 0.45)] }
    }

    pub fn default_2d() -> Self {
        Amplitude::CosineBump { peak: 0.1 }
    }

    pub fn at(&self, x: &[f64]) -> f64 {
        match self {
            Amplitude::Bands { high, low, intervals } => {
                if intervals.iter().any(|&(a, b)| x[0] >= a && x[0] <= b) {
                    *high
                } else {
                    *low
                }
            }
            Amplitude::CosineBump { peak } => {
                let (px, py) = (x[0], x.get(1).copied().unwrap_or(0.0));
                let v = peak
                    * libm::cos(PI * px / 2.0)
                    * libm::cos(PI * py / 2.0)
                    * libm::exp(-(px * px + py * py));
                // cos(±π/2) is ~6e-17, not 0
                if v.abs() < 1e-15 {
                    0.0
                } else {
                    v
                }
            }
            Amplitude::Constant(a) => *a,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            Amplitude::Bands { high, low, intervals } => {
                *high >= 0.0 && *low >= 0.0 && intervals.iter().all(|(a, b)| a <= b)
            }
            Amplitude::CosineBump { peak } => *peak >= 0.0,
            Amplitude::Constant(a) => *a >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::structural("noise amplitudes must be non-negative and intervals ordered"))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseModel {
    pub amplitude: Amplitude,
    pub seed: u64,
}

impl NoiseModel {
    pub fn default_for(kind: ProblemKind, seed: u64) -> Self {
        let amplitude = match kind {
            ProblemKind::Poisson1d => Amplitude::default_1d(),
            ProblemKind::DiffReact2d => Amplitude::default_2d(),
        };
        Self { amplitude, seed }
    }
}

/// Point counts for [`generate_dataset`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DatasetCounts {
    pub observations: usize,
    pub collocation: usize,
    /// Points per side of the square (2D only).
    pub boundary_per_side: usize,
    /// Test points per axis on a regular grid over the test domain.
    pub test_per_axis: usize,
}

impl DatasetCounts {
    pub fn default_for(kind: ProblemKind) -> Self {
        match kind {
            ProblemKind::Poisson1d => {
                Self { observations: 200, collocation: 500, boundary_per_side: 0, test_per_axis: 401 }
            }
            ProblemKind::DiffReact2d => {
                Self { observations: 200, collocation: 500, boundary_per_side: 50, test_per_axis: 41 }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub x: Vec<f64>,
    pub u_noisy: f64,
    pub u_clean: f64,
    pub amplitude: f64,
}

impl Observation {
    /// The recorded noise draw (u_noisy − u_clean).
    pub fn noise(&self) -> f64 {
        self.u_noisy - self.u_clean
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryPoint {
    pub x: Vec<f64>,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TestPoint {
    pub x: Vec<f64>,
    pub u_exact: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub dimension: usize,
    pub observations: Vec<Observation>,
    pub collocation: Vec<Vec<f64>>,
    pub boundary: Vec<BoundaryPoint>,
    pub test: Vec<TestPoint>,
}

fn flatten<'a>(points: impl Iterator<Item = &'a [f64]>, dim: usize) -> Result<Matrix> {
    let data: Vec<f64> = points.flat_map(|p| p.iter().copied()).collect();
    Matrix::from_vec(data.len() / dim, dim, data)
}

impl Dataset {
    /// Observations followed by boundary points (soft Dirichlet constraints),
    /// plus the collocation points.
    pub fn training_batch(&self) -> Result<TrainingBatch> {
        let d = self.dimension;
        let obs_x = flatten(
            self.observations.iter().map(|o| o.x.as_slice()).chain(self.boundary.iter().map(|b| b.x.as_slice())),
            d,
        )?;
        let obs_u: Vec<f64> = self
            .observations
            .iter()
            .map(|o| o.u_noisy)
            .chain(self.boundary.iter().map(|b| b.value))
            .collect();
        let colloc_x = flatten(self.collocation.iter().map(Vec::as_slice), d)?;
        let batch = TrainingBatch { obs_x, obs_u: Matrix::column(&obs_u), colloc_x };
        batch.validate()?;
        Ok(batch)
    }

    pub fn test_points_flat(&self) -> Vec<f64> {
        self.test.iter().flat_map(|t| t.x.iter().copied()).collect()
    }

    pub fn observation_points_flat(&self) -> Vec<f64> {
        self.observations.iter().flat_map(|o| o.x.iter().copied()).collect()
    }

    pub fn boundary_points_flat(&self) -> Vec<f64> {
        self.boundary.iter().flat_map(|b| b.x.iter().copied()).collect()
    }
}

fn uniform_in(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    let u: f64 = rng.sample(Open01);
    lo + (hi - lo) * u
}

fn regular_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Builds observation, collocation, boundary and test sets.
///
/// 1D: random observations and cell-centred regular collocation points inside
/// the training interval; test grid over the extended interval.
/// 2D: random observations and collocation points in the open square,
/// `boundary_per_side` points on each edge with value 0.
pub fn generate_dataset(spec: &ProblemSpec, noise: &NoiseModel, counts: &DatasetCounts) -> Result<Dataset> {
    if counts.observations == 0 || counts.collocation == 0 || counts.test_per_axis == 0 {
        return Err(Error::structural("dataset counts must be positive"));
    }
    if spec.dimension == 2 && counts.boundary_per_side == 0 {
        return Err(Error::structural("2D problems need boundary points"));
    }
    if spec.train_bounds.len() != spec.dimension
        || spec.train_bounds.iter().chain(&spec.test_bounds).any(|&(lo, hi)| !(lo < hi))
    {
        return Err(Error::structural("invalid problem domain"));
    }
    noise.amplitude.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let d = spec.dimension;

    let obs_x: Vec<Vec<f64>> = (0..counts.observations)
        .map(|_| spec.train_bounds.iter().map(|&(lo, hi)| uniform_in(&mut rng, lo, hi)).collect())
        .collect();
    let observations = obs_x
        .into_iter()
        .map(|x| {
            let u_clean = spec.exact_solution(&x);
            let amplitude = noise.amplitude.at(&x);
            let z: f64 = rng.sample(StandardNormal);
            Observation { u_noisy: u_clean + amplitude * z, u_clean, amplitude, x }
        })
        .collect();

    let collocation: Vec<Vec<f64>> = if d == 1 {
        let (lo, hi) = spec.train_bounds[0];
        let h = (hi - lo) / counts.collocation as f64;
        (0..counts.collocation).map(|i| vec![lo + (i as f64 + 0.5) * h]).collect()
    } else {
        (0..counts.collocation)
            .map(|_| spec.train_bounds.iter().map(|&(lo, hi)| uniform_in(&mut rng, lo, hi)).collect())
            .collect()
    };

    let mut boundary = Vec::new();
    if d == 2 {
        let (xl, xh) = spec.train_bounds[0];
        let (yl, yh) = spec.train_bounds[1];
        let n = counts.boundary_per_side;
        let along = |lo: f64, hi: f64, j: usize| lo + (hi - lo) * (j as f64 + 0.5) / n as f64;
        for j in 0..n {
            boundary.push(vec![xl, along(yl, yh, j)]);
        }
        for j in 0..n {
            boundary.push(vec![xh, along(yl, yh, j)]);
        }
        for j in 0..n {
            boundary.push(vec![along(xl, xh, j), yl]);
        }
        for j in 0..n {
            boundary.push(vec![along(xl, xh, j), yh]);
        }
    }
    let boundary = boundary
        .into_iter()
        .map(|x| {
            // sin(±π) is ~1e-16; the Dirichlet value is exactly zero.
            BoundaryPoint { x, value: 0.0 }
        })
        .collect();

    let axes: Vec<Vec<f64>> =
        spec.test_bounds.iter().map(|&(lo, hi)| regular_grid(lo, hi, counts.test_per_axis)).collect();
    let test = match d {
        1 => axes[0].iter().map(|&x| vec![x]).collect::<Vec<_>>(),
        _ => axes[1].iter().flat_map(|&y| axes[0].iter().map(move |&x| vec![x, y])).collect(),
    }
    .into_iter()
    .map(|x| TestPoint { u_exact: spec.exact_solution(&x), x })
    .collect();

    Ok(Dataset { dimension: d, observations, collocation, boundary, test })
}
