//! Measurements shared by the oracle/gradient suites and the acceptance
//! runner. Each returns the worst error it saw; callers decide the bound.
#![allow(dead_code)]

use epinn_core::autodiff::{Jet, Tape};
use epinn_core::losses::{
    compute_pde_residual, edl_nll, kl_divergence_term, plain_total_loss, total_loss, LossWeights, TrainingBatch,
    Variant,
};
use epinn_core::model::{EvidentialOutput, EvidentialPinn, Mlp, NetworkConfig, ParamStore, PlainPinn};
use epinn_core::problems::{generate_dataset, DatasetCounts, NoiseModel, ProblemKind, ProblemSpec};
use epinn_core::tensor::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::f64::consts::PI;

pub fn nig_output(tape: &mut Tape, gamma: f64, nu: f64, alpha: f64, beta: f64) -> EvidentialOutput {
    EvidentialOutput {
        gamma: tape.scalar(gamma),
        nu: tape.scalar(nu),
        alpha: tape.scalar(alpha),
        beta: tape.scalar(beta),
    }
}

pub fn nll_value(err: f64, nu: f64, alpha: f64, beta: f64) -> f64 {
    let mut tape = Tape::new();
    let out = nig_output(&mut tape, 0.0, nu, alpha, beta);
    let u = tape.scalar(err);
    let nll = edl_nll(&mut tape, u, &out).unwrap();
    tape.scalar_value(nll)
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean) * (x - mean) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
}

/// p(u) = ∫∫ N(u | μ, σ²) N(μ | γ, σ²/ν) IG(σ² | α, β) dμ dσ², by nested
/// Simpson rules (σ² on a log scale, μ around the product's peak).
pub fn marginal_likelihood(u: f64, gamma: f64, nu: f64, alpha: f64, beta: f64) -> f64 {
    let ln_norm = alpha * beta.ln() - libm::lgamma(alpha);
    let lb = beta.ln();
    let outer = |s: f64| {
        let var = s.exp();
        let ig = (ln_norm - (alpha + 1.0) * s - beta / var).exp();
        let centre = (u + nu * gamma) / (1.0 + nu);
        let half = 12.0 * (var / (1.0 + nu)).sqrt();
        let inner = simpson(
            |mu| normal_pdf(u, mu, var) * normal_pdf(mu, gamma, var / nu),
            centre - half,
            centre + half,
            200,
        );
        // dσ² = σ² ds
        inner * ig * var
    };
    simpson(outer, lb - 8.0, lb + 45.0 / alpha + 8.0, 4000)
}

pub fn student_t_nll(err: f64, nu: f64, alpha: f64, beta: f64) -> f64 {
    // St(err; 0, β(1+ν)/(να), 2α)
    let dof = 2.0 * alpha;
    let scale2 = beta * (1.0 + nu) / (nu * alpha);
    let ln_pdf = libm::lgamma((dof + 1.0) / 2.0)
        - libm::lgamma(dof / 2.0)
        - 0.5 * (PI * dof * scale2).ln()
        - (dof + 1.0) / 2.0 * (1.0 + err * err / (dof * scale2)).ln();
    -ln_pdf
}

/// (ν, α, error, β) grid of 25 settings; includes (1, 1.5, 1, 1).
pub fn nll_settings() -> Vec<(f64, f64, f64, f64)> {
    let nus = [0.1, 0.5, 1.0, 3.0, 10.0];
    let alphas = [1.1, 1.5, 2.0, 4.0, 8.0];
    let errs = [0.2, 1.0, -0.5, 2.0, 0.05];
    let betas = [0.3, 0.05, 1.0, 2.0, 0.5];
    let mut out = Vec::new();
    for (i, &nu) in nus.iter().enumerate() {
        for (j, &alpha) in alphas.iter().enumerate() {
            out.push((nu, alpha, errs[j], betas[i]));
        }
    }
    out
}

/// Relative error of exp(−NLL) against the quadrature likelihood, per setting.
pub fn nll_vs_quadrature() -> Vec<f64> {
    nll_settings()
        .into_iter()
        .map(|(nu, alpha, err, beta)| {
            let p = marginal_likelihood(err, 0.0, nu, alpha, beta);
            ((-nll_value(err, nu, alpha, beta)).exp() - p).abs() / p
        })
        .collect()
}

/// Largest |KL| at α = 1, β = β_r.
pub fn kl_zero_point() -> f64 {
    [0.1, 1.0, 3.7]
        .into_iter()
        .map(|beta_r| {
            let mut tape = Tape::new();
            let out = nig_output(&mut tape, 0.2, 0.8, 1.0, beta_r);
            let kl = kl_divergence_term(&mut tape, &out, beta_r).unwrap();
            tape.scalar_value(kl).abs()
        })
        .fold(0.0, f64::max)
}

pub fn g_values(l1: &[f64], l2: &[f64], mean: f64, var: f64) -> Vec<f64> {
    let mut tape = Tape::new();
    let a = tape.constant(Matrix::column(l1));
    let b = tape.constant(Matrix::column(l2));
    let m = tape.scalar(mean);
    let v = tape.scalar(var);
    let g = compute_pde_residual(&mut tape, a, b, m, v).unwrap();
    tape.value(g).as_slice().to_vec()
}

/// Worst relative gap between G and Monte-Carlo averages of (L₁ + κL₂)² with
/// κ drawn from a Gaussian and from a uniform law of the same mean/variance.
pub fn g_vs_monte_carlo(samples: usize) -> f64 {
    let cases = [(0.3, 0.5, 0.7, 0.2), (-0.35, 0.5, 0.7, 0.05), (1.2, -0.4, 1.0, 0.5), (0.0, 1.0, 0.0, 1.0)];
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for &(l1, l2, mean, sigma) in &cases {
        let g = g_values(&[l1], &[l2], mean, sigma * sigma)[0];
        let mut gauss = 0.0;
        let mut uniform = 0.0;
        let half_width = sigma * 3f64.sqrt();
        for _ in 0..samples {
            let z: f64 = rng.sample(StandardNormal);
            let k = mean + sigma * z;
            gauss += (l1 + k * l2) * (l1 + k * l2);
            let k = mean + rng.gen_range(-half_width..half_width);
            uniform += (l1 + k * l2) * (l1 + k * l2);
        }
        let (gauss, uniform) = (gauss / samples as f64, uniform / samples as f64);
        worst = worst.max((g - gauss).abs() / g).max((g - uniform).abs() / g);
    }
    worst
}

/// With Var(κ) = 0 and κ̄ = κ_true, worst |G − (L₁ + κL₂)²| in units of
/// ε·(L₁² + (κL₂)²), over `n` random points of each benchmark and the jets
/// of a random network.
pub fn reduction(n: usize) -> f64 {
    let mut worst = 0.0f64;
    for kind in [ProblemKind::Poisson1d, ProblemKind::DiffReact2d] {
        let spec = kind.spec();
        let dim = spec.dimension;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let pts: Vec<f64> =
            (0..n).flat_map(|_| spec.train_bounds.clone()).map(|(lo, hi)| rng.gen_range(lo..hi)).collect();
        let x = Matrix::from_vec(n, dim, pts).unwrap();
        let mut store = ParamStore::new();
        let cfg = NetworkConfig { input_dim: dim, hidden_layers: 2, hidden_width: 16, seed: 5 };
        let mlp = Mlp::init(cfg, 1, &mut store).unwrap();
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        let seed = Jet::seed_inputs(&mut tape, &x);
        let jet = mlp.forward_jet(&mut tape, &bound, &seed, 0).unwrap();
        let (l1, l2) = spec.residual_terms(&mut tape, &jet, &x).unwrap();
        let kappa = tape.scalar(spec.kappa_true);
        let zero = tape.scalar(0.0);
        let g = compute_pde_residual(&mut tape, l1, l2, kappa, zero).unwrap();
        let (l1, l2, g) = (tape.value(l1), tape.value(l2), tape.value(g));
        for i in 0..n {
            let (a, b) = (l1.as_slice()[i], l2.as_slice()[i]);
            let direct = (a + spec.kappa_true * b) * (a + spec.kappa_true * b);
            let scale = a * a + (spec.kappa_true * b) * (spec.kappa_true * b);
            worst = worst.max((g.as_slice()[i] - direct).abs() / (f64::EPSILON * scale));
        }
    }
    worst
}

fn small_batch(kind: ProblemKind, seed: u64) -> (ProblemSpec, TrainingBatch) {
    let spec = kind.spec();
    let counts = DatasetCounts { observations: 12, collocation: 10, boundary_per_side: 2, test_per_axis: 3 };
    let ds = generate_dataset(&spec, &NoiseModel::default_for(kind, seed), &counts).unwrap();
    (spec, ds.training_batch().unwrap())
}

fn net(kind: ProblemKind, seed: u64) -> NetworkConfig {
    let dim = if kind == ProblemKind::Poisson1d { 1 } else { 2 };
    NetworkConfig { input_dim: dim, hidden_layers: 2, hidden_width: 12, seed }
}

pub const MAX_GRAD_REL: f64 = 1e-4;

/// Relative error with a small absolute floor so vanishing components do
/// not divide by zero.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-5)
}

/// Outcome of a gradient check: how many scalars were compared and the
/// worst relative error, with the parameter it occurred at.
#[derive(Debug)]
pub struct GradCheck {
    pub checked: usize,
    pub worst: f64,
    pub worst_at: String,
}

/// Compares every scalar of `store` (or, above 400, every tensor plus a
/// random sample up to 200) against central differences of `loss`.
pub fn check_store<F>(store: &mut ParamStore, analytic: &[Matrix], loss: F, rng: &mut ChaCha8Rng) -> GradCheck
where
    F: Fn(&ParamStore) -> f64,
{
    let mut coords: Vec<(usize, usize)> = Vec::new();
    for (id, m) in store.values().iter().enumerate() {
        coords.extend((0..m.len()).map(|k| (id, k)));
    }
    if coords.len() > 400 {
        // keep every tensor represented, then sample the rest
        let mut picked: Vec<(usize, usize)> = (0..store.len()).map(|id| (id, 0)).collect();
        while picked.len() < 200 {
            picked.push(coords[rng.gen_range(0..coords.len())]);
        }
        coords = picked;
    }
    let mut out = GradCheck { checked: coords.len(), worst: 0.0, worst_at: String::new() };
    for &(id, k) in &coords {
        let x0 = store.get(id).as_slice()[k];
        let h = 1e-5 * x0.abs().max(1.0);
        store.get_mut(id).as_mut_slice()[k] = x0 + h;
        let up = loss(store);
        store.get_mut(id).as_mut_slice()[k] = x0 - h;
        let down = loss(store);
        store.get_mut(id).as_mut_slice()[k] = x0;
        let fd = (up - down) / (2.0 * h);
        let e = rel_err(analytic[id].as_slice()[k], fd);
        if e > out.worst {
            out.worst = e;
            out.worst_at = format!("{}[{k}]", store.name(id));
        }
    }
    out
}

fn evidential_check(model: EvidentialPinn, spec: &ProblemSpec, batch: &TrainingBatch, w: &LossWeights, seed: u64) -> GradCheck {
    let mut tape = Tape::new();
    let bound = model.params().bind(&mut tape);
    let terms = total_loss(&mut tape, &bound, &model, spec, batch, w).unwrap();
    let grads = tape.backward(terms.total).unwrap();
    let analytic: Vec<Matrix> =
        (0..model.params().len()).map(|id| grads.param(id).expect("every parameter reaches the loss")).collect();
    let loss = |store: &ParamStore| {
        let mut m = model.clone();
        *m.params_mut() = store.clone();
        let mut tape = Tape::new();
        let bound = m.params().bind(&mut tape);
        let t = total_loss(&mut tape, &bound, &m, spec, batch, w).unwrap();
        tape.scalar_value(t.total)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = model.params().clone();
    check_store(&mut store, &analytic, loss, &mut rng)
}

/// Evidential loss on a small network, with κ moved off its initial zero so
/// the cross term is exercised.
pub fn epinn_gradients(kind: ProblemKind, weights: LossWeights, seed: u64) -> GradCheck {
    let (spec, batch) = small_batch(kind, seed);
    let mut model = EvidentialPinn::new(net(kind, seed)).unwrap();
    let mid = model.kappa_mean_id();
    *model.params_mut().get_mut(mid) = Matrix::scalar(0.4);
    evidential_check(model, &spec, &batch, &weights, seed)
}

/// The full 3 × 64 network: a random sample of its ~8.5k parameters.
pub fn default_width_gradients(seed: u64) -> GradCheck {
    let (spec, batch) = small_batch(ProblemKind::Poisson1d, seed);
    let model = EvidentialPinn::new(NetworkConfig::default_1d(seed)).unwrap();
    evidential_check(model, &spec, &batch, &LossWeights::table1(), seed)
}

pub fn plain_pinn_gradients(kind: ProblemKind, seed: u64) -> GradCheck {
    let (spec, batch) = small_batch(kind, seed);
    let weights = LossWeights::table1().with_variant(Variant::PlainPinn);
    let mut model = PlainPinn::new(net(kind, seed)).unwrap();
    let kid = model.kappa_id();
    *model.params_mut().get_mut(kid) = Matrix::scalar(0.3);
    let mut tape = Tape::new();
    let bound = model.params().bind(&mut tape);
    let t = plain_total_loss(&mut tape, &bound, &model, &spec, &batch, &weights).unwrap();
    let g = tape.backward(t.total).unwrap();
    let analytic: Vec<Matrix> = (0..model.params().len()).map(|id| g.param(id).unwrap()).collect();
    let loss = |store: &ParamStore| {
        let mut m = model.clone();
        *m.params_mut() = store.clone();
        let mut tape = Tape::new();
        let bound = m.params().bind(&mut tape);
        let t = plain_total_loss(&mut tape, &bound, &m, &spec, &batch, &weights).unwrap();
        tape.scalar_value(t.total)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = model.params().clone();
    check_store(&mut store, &analytic, loss, &mut rng)
}

/// d/dw Σ u_xx through the jet, against differences of the jet itself.
pub fn curvature_gradients() -> GradCheck {
    let mut store = ParamStore::new();
    let cfg = NetworkConfig { input_dim: 1, hidden_layers: 2, hidden_width: 10, seed: 21 };
    let mlp = Mlp::init(cfg, 1, &mut store).unwrap();
    let x = Matrix::column(&[-0.6, -0.1, 0.2, 0.55]);
    let curvature = |s: &ParamStore| {
        let mut tape = Tape::new();
        let bound = s.bind(&mut tape);
        let seed = Jet::seed_inputs(&mut tape, &x);
        let jet = mlp.forward_jet(&mut tape, &bound, &seed, 0).unwrap();
        let total = tape.sum(jet.diag2[0]);
        (tape.scalar_value(total), tape.backward(total).unwrap())
    };
    let (_, grads) = curvature(&store);
    // the output bias does not reach u_xx at all
    let analytic: Vec<Matrix> = (0..store.len())
        .map(|id| grads.param(id).unwrap_or_else(|| Matrix::zeros(store.get(id).rows(), store.get(id).cols())))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut work = store.clone();
    check_store(&mut work, &analytic, |s| curvature(s).0, &mut rng)
}

/// Every loss-gradient case: (label, result).
pub fn all_loss_gradients() -> Vec<(&'static str, GradCheck)> {
    vec![
        ("epinn poisson1d", epinn_gradients(ProblemKind::Poisson1d, LossWeights::table1(), 3)),
        ("epinn_v poisson1d", epinn_gradients(ProblemKind::Poisson1d, LossWeights::table1().with_variant(Variant::EpinnV), 4)),
        ("epinn diffreact2d", epinn_gradients(ProblemKind::DiffReact2d, LossWeights::table2(), 5)),
        ("plain poisson1d", plain_pinn_gradients(ProblemKind::Poisson1d, 6)),
        ("plain diffreact2d", plain_pinn_gradients(ProblemKind::DiffReact2d, 6)),
        ("epinn 3x64", default_width_gradients(7)),
        ("u_xx in weights", curvature_gradients()),
    ]
}

fn mlp_values(mlp: &Mlp, store: &ParamStore, x: &Matrix) -> Vec<f64> {
    let mut tape = Tape::new();
    let bound = store.bind(&mut tape);
    let xv = tape.constant(x.clone());
    let y = mlp.forward(&mut tape, &bound, xv).unwrap();
    tape.value(y).as_slice().to_vec()
}

/// Jet first and second input derivatives of random 3 × 16 MLPs (1 and 2
/// inputs) against central differences. Returns the worst
/// |jet − fd| / max(|jet|, 1) for (gradient, second derivative), and whether
/// the jet value equals the plain forward pass bit for bit.
pub fn jet_vs_fd() -> (f64, f64, bool) {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut worst_g, mut worst_c, mut same_value) = (0.0f64, 0.0f64, true);
    for dim in [1usize, 2] {
        let mut store = ParamStore::new();
        let cfg = NetworkConfig { input_dim: dim, hidden_layers: 3, hidden_width: 16, seed: 11 + dim as u64 };
        let mlp = Mlp::init(cfg, 1, &mut store).unwrap();
        // non-zero biases so the activations are not odd functions of x
        for m in store.values_mut() {
            for v in m.as_mut_slice() {
                *v += rng.gen_range(-0.3..0.3);
            }
        }
        let n = 25;
        let pts: Vec<f64> = (0..n * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = Matrix::from_vec(n, dim, pts.clone()).unwrap();
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        let seed = Jet::seed_inputs(&mut tape, &x);
        let jet = mlp.forward_jet(&mut tape, &bound, &seed, 0).unwrap();
        let value = mlp_values(&mlp, &store, &x);
        same_value &= tape.value(jet.value).as_slice() == value.as_slice();

        let h1 = 1e-6;
        let h2 = 1e-4;
        for i in 0..dim {
            let shifted = |delta: f64| {
                let mut p = pts.clone();
                for r in 0..n {
                    p[r * dim + i] += delta;
                }
                mlp_values(&mlp, &store, &Matrix::from_vec(n, dim, p).unwrap())
            };
            let (u1, d1) = (shifted(h1), shifted(-h1));
            let (u2, d2) = (shifted(h2), shifted(-h2));
            for r in 0..n {
                let fd1 = (u1[r] - d1[r]) / (2.0 * h1);
                let fd2 = (u2[r] - 2.0 * value[r] + d2[r]) / (h2 * h2);
                let g = tape.value(jet.grad[i]).as_slice()[r];
                let c = tape.value(jet.diag2[i]).as_slice()[r];
                worst_g = worst_g.max((g - fd1).abs() / g.abs().max(1.0));
                worst_c = worst_c.max((c - fd2).abs() / c.abs().max(1.0));
            }
        }
    }
    (worst_g, worst_c, same_value)
}
