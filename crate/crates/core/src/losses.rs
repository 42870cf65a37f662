//! Loss terms of the evidential PINN objective.
//!
//! Every term is evaluated per point on n x 1 nodes and reduced with a mean
//! in [`total_loss`].

use alloc::format;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::model::{EvidentialOutput, EvidentialPinn, PlainPinn};
use crate::problems::ProblemSpec;
use crate::special::EULER_GAMMA;
use crate::tensor::Matrix;

/// Which regularizer / model family the loss is built for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    /// |u − γ|(2ν + α) times the inverse-gamma KL term.
    Epinn,
    /// |u − γ|(2ν + α) alone.
    EpinnV,
    /// Point-estimate PINN: squared-error data term, no regularizer.
    PlainPinn,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Epinn => "epinn",
            Variant::EpinnV => "epinn_v",
            Variant::PlainPinn => "plain_pinn",
        }
    }

    pub fn has_regularizer(self) -> bool {
        !matches!(self, Variant::PlainPinn)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub lambda_d: f64,
    pub lambda_kl: f64,
    pub lambda_r: f64,
    /// Scale of the weakly informative reference inverse-gamma prior.
    pub beta_r: f64,
    pub variant: Variant,
}

impl LossWeights {
    /// 1D benchmark weights: (1, 0.01, 0.1).
    pub fn table1() -> Self {
        Self { lambda_d: 1.0, lambda_kl: 0.01, lambda_r: 0.1, beta_r: 1.0, variant: Variant::Epinn }
    }

    /// Default 2D benchmark weights: (1, 0.005, 0.05).
    pub fn table2() -> Self {
        Self { lambda_d: 1.0, lambda_kl: 0.005, lambda_r: 0.05, beta_r: 1.0, variant: Variant::Epinn }
    }

    /// Stronger alternative 2D weights: (1, 0.05, 0.5).
    pub fn table2_learning_curves() -> Self {
        Self { lambda_d: 1.0, lambda_kl: 0.05, lambda_r: 0.5, beta_r: 1.0, variant: Variant::Epinn }
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.lambda_d, self.lambda_kl, self.lambda_r, self.beta_r];
        if all.iter().any(|w| !w.is_finite()) {
            return Err(Error::structural("loss weights must be finite"));
        }
        if self.lambda_d < 0.0 || self.lambda_kl < 0.0 || self.lambda_r < 0.0 {
            return Err(Error::structural("loss weights must be non-negative"));
        }
        if self.beta_r <= 0.0 {
            return Err(Error::structural("beta_r must be positive"));
        }
        Ok(())
    }
}

/// Negative log marginal likelihood of `u_obs` under the NIG evidential output:
///
/// (α + ½)·ln((u − γ)²ν + Ω) + ln(√(π/ν)·Γ(α) / (Ω^α·Γ(α + ½))), Ω = 2β(1 + ν).
pub fn edl_nll(tape: &mut Tape, u_obs: Var, out: &EvidentialOutput) -> Result<Var> {
    let one_plus_nu = tape.shift(out.nu, 1.0);
    let beta_term = tape.mul(out.beta, one_plus_nu)?;
    let omega = tape.scale(beta_term, 2.0);

    let err = tape.sub(u_obs, out.gamma)?;
    let err2 = tape.square(err);
    let spread = tape.mul(err2, out.nu)?;
    let inner = tape.add(spread, omega)?;
    let log_inner = tape.ln(inner);
    let alpha_half = tape.shift(out.alpha, 0.5);
    let main = tape.mul(alpha_half, log_inner)?;

    // ½ ln π − ½ ln ν
    let ln_nu = tape.ln(out.nu);
    let half_ln_nu = tape.scale(ln_nu, -0.5);
    let ln_sqrt_pi_over_nu = tape.shift(half_ln_nu, 0.5 * libm::log(core::f64::consts::PI));
    let lg_alpha = tape.ln_gamma(out.alpha);
    let ln_omega = tape.ln(omega);
    let alpha_ln_omega = tape.mul(out.alpha, ln_omega)?;
    let lg_alpha_half = tape.ln_gamma(alpha_half);

    let a = tape.add(ln_sqrt_pi_over_nu, lg_alpha)?;
    let b = tape.sub(a, alpha_ln_omega)?;
    let norm = tape.sub(b, lg_alpha_half)?;
    let nll = tape.add(main, norm)?;
    tape.ensure_finite(nll, "evidential NLL")?;
    Ok(nll)
}

/// KL term between the output's inverse-gamma factor and the reference
/// IG(1, β_r); independent of ν:
///
/// ln(β_r^α Γ(α) / β^α) + γ_e(α − 1) + (β − β_r)/β_r.
pub fn kl_divergence_term(tape: &mut Tape, out: &EvidentialOutput, beta_r: f64) -> Result<Var> {
    if !(beta_r > 0.0) || !beta_r.is_finite() {
        return Err(Error::structural(format!("beta_r must be positive and finite, got {beta_r}")));
    }
    let lg_alpha = tape.ln_gamma(out.alpha);
    let ln_beta = tape.ln(out.beta);
    let ln_beta_ratio = tape.shift(ln_beta, -libm::log(beta_r));
    // α ln β_r − α ln β = −α ln(β/β_r)
    let scaled = tape.mul(out.alpha, ln_beta_ratio)?;
    let log_part = tape.sub(lg_alpha, scaled)?;
    let euler = tape.shift(out.alpha, -1.0);
    let euler = tape.scale(euler, EULER_GAMMA);
    let rel = tape.scale(out.beta, 1.0 / beta_r);
    let rel = tape.shift(rel, -1.0);
    let s = tape.add(log_part, euler)?;
    let kl = tape.add(s, rel)?;
    tape.ensure_finite(kl, "KL term")?;
    Ok(kl)
}

/// Evidence regularizer |u − γ|(2ν + α), multiplied by the KL term for
/// [`Variant::Epinn`].
pub fn regularizer(tape: &mut Tape, u_obs: Var, out: &EvidentialOutput, weights: &LossWeights) -> Result<Var> {
    let err = tape.sub(u_obs, out.gamma)?;
    let abs_err = tape.abs(err);
    let two_nu = tape.scale(out.nu, 2.0);
    let evidence = tape.add(two_nu, out.alpha)?;
    let base = tape.mul(abs_err, evidence)?;
    match weights.variant {
        Variant::EpinnV => Ok(base),
        Variant::Epinn => {
            let kl = kl_divergence_term(tape, out, weights.beta_r)?;
            tape.mul(base, kl)
        }
        Variant::PlainPinn => Err(Error::structural("plain PINN has no evidential regularizer")),
    }
}

/// Residual squared and averaged over κ with mean `kappa_mean` and variance
/// `kappa_var`: L₁² + L₂²(Var(κ) + κ̄²) + 2κ̄L₁L₂.
pub fn compute_pde_residual(tape: &mut Tape, l1: Var, l2: Var, kappa_mean: Var, kappa_var: Var) -> Result<Var> {
    let l1_sq = tape.square(l1);
    let l2_sq = tape.square(l2);
    let mean_sq = tape.square(kappa_mean);
    let second_moment = tape.add(kappa_var, mean_sq)?;
    let quad = tape.mul(l2_sq, second_moment)?;
    let cross = tape.mul(l1, l2)?;
    let cross = tape.mul(cross, kappa_mean)?;
    let cross = tape.scale(cross, 2.0);
    let s = tape.add(l1_sq, quad)?;
    tape.add(s, cross)
}

/// Inputs of one full-batch loss evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingBatch {
    /// n x d observation coordinates (boundary points included).
    pub obs_x: Matrix,
    /// n x 1 observed values.
    pub obs_u: Matrix,
    /// m x d collocation coordinates.
    pub colloc_x: Matrix,
}

impl TrainingBatch {
    pub fn validate(&self) -> Result<()> {
        if self.obs_x.rows() == 0 || self.colloc_x.rows() == 0 {
            return Err(Error::structural("observation and collocation batches must be non-empty"));
        }
        if self.obs_u.shape() != (self.obs_x.rows(), 1) {
            return Err(Error::structural("obs_u must be an n x 1 column matching obs_x"));
        }
        if self.obs_x.cols() != self.colloc_x.cols() {
            return Err(Error::structural("observation and collocation dimensions differ"));
        }
        Ok(())
    }
}

/// Loss nodes of one evaluation; `regularizer` is absent for plain PINNs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LossTerms {
    pub total: Var,
    pub data: Var,
    pub regularizer: Option<Var>,
    pub residual: Var,
}

/// Scalar readout of [`LossTerms`], unweighted components.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossValues {
    pub total: f64,
    pub data: f64,
    pub regularizer: Option<f64>,
    pub residual: f64,
}

impl LossTerms {
    pub fn values(&self, tape: &Tape) -> LossValues {
        LossValues {
            total: tape.scalar_value(self.total),
            data: tape.scalar_value(self.data),
            regularizer: self.regularizer.map(|r| tape.scalar_value(r)),
            residual: tape.scalar_value(self.residual),
        }
    }
}

fn weighted_sum(tape: &mut Tape, terms: &[(f64, Var)]) -> Result<Var> {
    let mut acc: Option<Var> = None;
    for &(w, v) in terms {
        let scaled = tape.scale(v, w);
        acc = Some(match acc {
            Some(a) => tape.add(a, scaled)?,
            None => scaled,
        });
    }
    acc.ok_or_else(|| Error::structural("no loss terms"))
}

/// λ_d·mean(NLL) + λ_kl·mean(regularizer) + λ_r·mean(G) for an evidential model.
pub fn total_loss(
    tape: &mut Tape,
    bound: &[Var],
    model: &EvidentialPinn,
    problem: &ProblemSpec,
    batch: &TrainingBatch,
    weights: &LossWeights,
) -> Result<LossTerms> {
    batch.validate()?;
    weights.validate()?;
    if weights.variant == Variant::PlainPinn {
        return Err(Error::structural("plain_pinn loss needs a PlainPinn model"));
    }
    let out = model.forward_evidential(tape, bound, &batch.obs_x)?;
    let u_obs = tape.constant(batch.obs_u.clone());
    let nll = edl_nll(tape, u_obs, &out)?;
    let data = tape.mean(nll)?;
    let reg = regularizer(tape, u_obs, &out, weights)?;
    let reg = tape.mean(reg)?;

    let jet = model.forward_jet(tape, bound, &batch.colloc_x)?;
    let (l1, l2) = problem.residual_terms(tape, &jet, &batch.colloc_x)?;
    let (kappa_mean, kappa_var) = model.kappa_nodes(tape, bound);
    let g = compute_pde_residual(tape, l1, l2, kappa_mean, kappa_var)?;
    let residual = tape.mean(g)?;

    let total = weighted_sum(
        tape,
        &[(weights.lambda_d, data), (weights.lambda_kl, reg), (weights.lambda_r, residual)],
    )?;
    tape.ensure_finite(total, "total loss")?;
    Ok(LossTerms { total, data, regularizer: Some(reg), residual })
}

/// λ_d·mean((u − û)²) + λ_r·mean((L₁ + κL₂)²) for a point-estimate PINN.
pub fn plain_total_loss(
    tape: &mut Tape,
    bound: &[Var],
    model: &PlainPinn,
    problem: &ProblemSpec,
    batch: &TrainingBatch,
    weights: &LossWeights,
) -> Result<LossTerms> {
    batch.validate()?;
    weights.validate()?;
    let pred = model.forward(tape, bound, &batch.obs_x)?;
    let u_obs = tape.constant(batch.obs_u.clone());
    let err = tape.sub(u_obs, pred)?;
    let sq = tape.square(err);
    let data = tape.mean(sq)?;

    let jet = model.forward_jet(tape, bound, &batch.colloc_x)?;
    let (l1, l2) = problem.residual_terms(tape, &jet, &batch.colloc_x)?;
    let kappa = bound[model.kappa_id()];
    let zero = tape.scalar(0.0);
    let g = compute_pde_residual(tape, l1, l2, kappa, zero)?;
    let residual = tape.mean(g)?;

    let total = weighted_sum(tape, &[(weights.lambda_d, data), (weights.lambda_r, residual)])?;
    tape.ensure_finite(total, "total loss")?;
    Ok(LossTerms { total, data, regularizer: None, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::ln_gamma;

    fn output(tape: &mut Tape, gamma: f64, nu: f64, alpha: f64, beta: f64) -> EvidentialOutput {
        EvidentialOutput {
            gamma: tape.scalar(gamma),
            nu: tape.scalar(nu),
            alpha: tape.scalar(alpha),
            beta: tape.scalar(beta),
        }
    }

    #[test]
    fn nll_at_exact_fit_drops_residual_term() {
        let mut tape = Tape::new();
        let (nu, alpha, beta) = (0.8, 1.7, 0.4);
        let out = output(&mut tape, 0.3, nu, alpha, beta);
        let u = tape.scalar(0.3);
        let nll = edl_nll(&mut tape, u, &out).unwrap();
        let got = tape.scalar_value(nll);
        let omega: f64 = 2.0 * beta * (1.0 + nu);
        let expected = (alpha + 0.5) * omega.ln()
            + ((core::f64::consts::PI / nu).sqrt() * ln_gamma(alpha).exp()
                / (omega.powf(alpha) * ln_gamma(alpha + 0.5).exp()))
            .ln();
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn nll_nondecreasing_in_error() {
        let mut prev = f64::NEG_INFINITY;
        for i in 0..20 {
            let mut tape = Tape::new();
            let out = output(&mut tape, 0.0, 1.3, 2.1, 0.6);
            let u = tape.scalar(0.1 * i as f64);
            let nll = edl_nll(&mut tape, u, &out).unwrap();
            let v = tape.scalar_value(nll);
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn kl_examples() {
        let cases = [
            (1.0, 1.0, 1.0, 0.0),
            (1.0, 2.0, 1.0, 1.0 - core::f64::consts::LN_2),
            (2.0, 1.0, 1.0, EULER_GAMMA),
        ];
        for (alpha, beta, beta_r, expected) in cases {
            let mut tape = Tape::new();
            let out = output(&mut tape, 0.0, 1.0, alpha, beta);
            let kl = kl_divergence_term(&mut tape, &out, beta_r).unwrap();
            assert!((tape.scalar_value(kl) - expected).abs() < 1e-12, "{alpha} {beta}");
        }
        let mut tape = Tape::new();
        let out = output(&mut tape, 0.0, 1.0, 2.0, 1.0);
        assert!(kl_divergence_term(&mut tape, &out, 0.0).is_err());
    }

    #[test]
    fn kl_does_not_depend_on_nu() {
        let mut vals = alloc::vec::Vec::new();
        for nu in [0.1, 1.0, 17.0] {
            let mut tape = Tape::new();
            let out = output(&mut tape, 0.0, nu, 1.8, 0.3);
            let kl = kl_divergence_term(&mut tape, &out, 1.0).unwrap();
            vals.push(tape.scalar_value(kl));
        }
        assert_eq!(vals[0], vals[1]);
        assert_eq!(vals[1], vals[2]);
    }

    #[test]
    fn regularizer_examples() {
        let w = LossWeights::table1();
        let wv = w.with_variant(Variant::EpinnV);
        // exact fit
        for weights in [w, wv] {
            let mut tape = Tape::new();
            let out = output(&mut tape, 0.2, 1.0, 2.0, 0.7);
            let u = tape.scalar(0.2);
            let r = regularizer(&mut tape, u, &out, &weights).unwrap();
            assert_eq!(tape.scalar_value(r), 0.0);
        }
        // α = 1, β = β_r zeroes the KL factor
        let mut tape = Tape::new();
        let out = output(&mut tape, 0.0, 3.0, 1.0, 1.0);
        let u = tape.scalar(5.0);
        let r = regularizer(&mut tape, u, &out, &w).unwrap();
        assert_eq!(tape.scalar_value(r), 0.0);
        // EPINN_V: 0.5 * (2 + 2) = 2
        let mut tape = Tape::new();
        let out = output(&mut tape, 0.0, 1.0, 2.0, 0.3);
        let u = tape.scalar(0.5);
        let r = regularizer(&mut tape, u, &out, &wv).unwrap();
        assert_eq!(tape.scalar_value(r), 2.0);
        let plain = w.with_variant(Variant::PlainPinn);
        assert!(regularizer(&mut tape, u, &out, &plain).is_err());
    }

    #[test]
    fn regularizer_variants_differ_by_kl_factor() {
        let w = LossWeights::table1();
        let mut tape = Tape::new();
        let out = output(&mut tape, 0.1, 0.9, 1.4, 0.35);
        let u = tape.scalar(-0.6);
        let full = regularizer(&mut tape, u, &out, &w).unwrap();
        let base = regularizer(&mut tape, u, &out, &w.with_variant(Variant::EpinnV)).unwrap();
        let kl = kl_divergence_term(&mut tape, &out, w.beta_r).unwrap();
        assert_eq!(tape.scalar_value(full), tape.scalar_value(base) * tape.scalar_value(kl));
    }

    #[test]
    fn residual_reduces_to_plain_square() {
        let mut tape = Tape::new();
        let l1 = tape.scalar(0.3);
        let l2 = tape.scalar(-1.1);
        let k = tape.scalar(0.7);
        let zero = tape.scalar(0.0);
        let g = compute_pde_residual(&mut tape, l1, l2, k, zero).unwrap();
        let expected = (0.3f64 - 0.7 * 1.1).powi(2);
        assert!((tape.scalar_value(g) - expected).abs() < 1e-15);
    }

    #[test]
    fn residual_hand_example() {
        let mut tape = Tape::new();
        let l1 = tape.scalar(1.0);
        let l2 = tape.scalar(2.0);
        let k = tape.scalar(0.5);
        let var = tape.scalar(0.25);
        let g = compute_pde_residual(&mut tape, l1, l2, k, var).unwrap();
        assert!((tape.scalar_value(g) - 5.0).abs() < 1e-15);
    }

    #[test]
    fn weight_validation() {
        let mut w = LossWeights::table1();
        assert!(w.validate().is_ok());
        w.beta_r = 0.0;
        assert!(w.validate().is_err());
        let mut w = LossWeights::table2();
        w.lambda_kl = -1.0;
        assert!(w.validate().is_err());
        assert_eq!(LossWeights::table2_learning_curves().lambda_r, 0.5);
    }
}
