//! Collision kernels `b(cos θ)` on `θ ∈ (0, π/2]` and their angular moments.
//!
//! Every kernel is handled through its angular weight `w(θ) = b(cos θ) sin θ`, which is
//! what all sphere integrals reduce to. The moments
//!
//! ```text
//! ‖b‖₁ = 2π ∫ w                     γ_α = 2π ∫ w [cos^α(θ/2) + sin^α(θ/2)]
//! μ_α  = 2π ∫ w sin^α(θ/2)          λ_α = 2π ∫ w [cos^α(θ/2) + sin^α(θ/2) − 1]
//! ```
//!
//! are evaluated on a mesh graded towards `θ = 0` and refined until they settle or are
//! flagged divergent.

use crate::error::{Error, Result};
use crate::quadrature::{grading_for_exponent, refine, Estimate, GaussLegendre, GradedRule, RefinePolicy};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

/// Singularity exponent of the physical Maxwellian kernel, `b(cos θ) sin θ ~ θ^{-3/2}`.
pub const MAXWELLIAN_EXPONENT: f64 = 1.5;

#[derive(Debug, Clone, PartialEq)]
pub enum KernelFamily {
    /// `b ≡ c`.
    Constant(f64),
    /// `b(cos θ) sin θ = κ θ^{-ν}` exactly.
    MaxwellianSingular(f64),
    /// Tabulated `(θ, b)` pairs, linear in between; power-law continuation `θ^{-ν}` below
    /// the first entry.
    Custom(Vec<(f64, f64)>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    pub n: u32,
    pub cap: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelModel {
    pub family: KernelFamily,
    /// `ν` with `b(cos θ) sin θ ~ θ^{-ν}` as `θ → 0⁺`; negative for kernels vanishing at 0.
    pub singularity_exponent: f64,
    pub truncation: Option<Truncation>,
}

impl KernelModel {
    pub fn constant(c: f64) -> Self {
        Self {
            family: KernelFamily::Constant(c),
            singularity_exponent: -1.0,
            truncation: None,
        }
    }

    /// The canonical non-cutoff Maxwellian kernel `b(cos θ) = κ θ^{-3/2} / sin θ`.
    pub fn maxwellian(kappa: f64) -> Self {
        Self {
            family: KernelFamily::MaxwellianSingular(kappa),
            singularity_exponent: MAXWELLIAN_EXPONENT,
            truncation: None,
        }
    }

    pub fn custom(mut table: Vec<(f64, f64)>, singularity_exponent: f64) -> Result<Self> {
        table.sort_by(|a, b| a.0.total_cmp(&b.0));
        if table.is_empty() {
            return Err(Error::config("kernel.table", "tabulated kernel needs at least one entry"));
        }
        for &(theta, b) in &table {
            if !(theta > 0.0 && theta <= FRAC_PI_2) {
                return Err(Error::config("kernel.table", format!("angle {theta} outside (0, π/2]")));
            }
            if !(b >= 0.0) {
                return Err(Error::config("kernel.table", format!("negative kernel value {b}")));
            }
        }
        Ok(Self {
            family: KernelFamily::Custom(table),
            singularity_exponent,
            truncation: None,
        })
    }

    /// Lower end of the support: `1/n` when truncated, otherwise `0`.
    pub fn lower_angle(&self) -> f64 {
        self.truncation.map_or(0.0, |t| 1.0 / t.n as f64)
    }

    /// Whether `‖b‖₁` is finite.
    pub fn is_cutoff(&self) -> bool {
        self.truncation.is_some() || self.singularity_exponent < 1.0
    }

    /// Whether the kernel vanishes identically.
    pub fn is_zero(&self) -> bool {
        match &self.family {
            KernelFamily::Constant(c) => *c == 0.0,
            KernelFamily::MaxwellianSingular(k) => *k == 0.0,
            KernelFamily::Custom(t) => t.iter().all(|&(_, b)| b == 0.0),
        }
    }

    fn raw_b(&self, theta: f64) -> f64 {
        match &self.family {
            KernelFamily::Constant(c) => *c,
            KernelFamily::MaxwellianSingular(kappa) => kappa * theta.powf(-self.singularity_exponent) / theta.sin(),
            KernelFamily::Custom(table) => {
                let (t0, b0) = table[0];
                if theta <= t0 {
                    return b0 * t0.sin() * (theta / t0).powf(-self.singularity_exponent) / theta.sin();
                }
                let i = table.partition_point(|&(t, _)| t < theta);
                if i >= table.len() {
                    return table[table.len() - 1].1;
                }
                let (ta, ba) = table[i - 1];
                let (tb, bb) = table[i];
                ba + (bb - ba) * (theta - ta) / (tb - ta)
            }
        }
    }

    /// `b(cos θ)` for `θ ∈ (0, π/2]`, honouring truncation and cap.
    pub fn eval_b(&self, theta: f64) -> Result<f64> {
        if !(theta > 0.0 && theta <= FRAC_PI_2) {
            return Err(Error::Domain {
                what: "theta",
                value: theta,
                domain: "(0, π/2]",
            });
        }
        Ok(self.b_unchecked(theta))
    }

    fn b_unchecked(&self, theta: f64) -> f64 {
        if theta > FRAC_PI_2 {
            return 0.0;
        }
        match self.truncation {
            Some(t) if theta < 1.0 / t.n as f64 => 0.0,
            Some(t) if t.cap => self.raw_b(theta).min(t.n as f64),
            _ => self.raw_b(theta),
        }
    }

    /// Angular weight `w(θ) = b(cos θ) sin θ`. For the singular family the product is
    /// formed without dividing by `sin θ`.
    pub fn angular_weight(&self, theta: f64) -> f64 {
        if theta <= 0.0 || theta > FRAC_PI_2 {
            return 0.0;
        }
        match (&self.family, self.truncation) {
            (KernelFamily::MaxwellianSingular(kappa), None) => kappa * theta.powf(-self.singularity_exponent),
            (KernelFamily::MaxwellianSingular(kappa), Some(t)) if !t.cap => {
                if theta < 1.0 / t.n as f64 {
                    0.0
                } else {
                    kappa * theta.powf(-self.singularity_exponent)
                }
            }
            _ => self.b_unchecked(theta) * theta.sin(),
        }
    }

    /// `b_n = b · χ_[1/n, π/2]`, optionally capped at `n`.
    pub fn truncate(&self, n: u32, cap: bool) -> Self {
        assert!(n >= 1, "truncation index must be positive");
        Self {
            truncation: Some(Truncation { n, cap }),
            ..self.clone()
        }
    }

    pub fn untruncated(&self) -> Self {
        Self {
            truncation: None,
            ..self.clone()
        }
    }
}

/// Angular factor multiplying `w(θ)` in a moment integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AngularFactor {
    One,
    SinPow(f64),
    CosPlusSin(f64),
    /// `cos^α(θ/2) + sin^α(θ/2) − 1`, evaluated without cancellation.
    StabilityBracket(f64),
}

impl AngularFactor {
    pub fn eval(self, theta: f64) -> f64 {
        let s = (0.5 * theta).sin();
        match self {
            AngularFactor::One => 1.0,
            AngularFactor::SinPow(a) => s.powf(a),
            AngularFactor::CosPlusSin(a) => (0.5 * theta).cos().powf(a) + s.powf(a),
            AngularFactor::StabilityBracket(a) => cos_pow_minus_one(s, a) + s.powf(a),
        }
    }

    /// Leading power of the factor as `θ → 0`.
    fn exponent(self) -> f64 {
        match self {
            AngularFactor::One | AngularFactor::CosPlusSin(_) => 0.0,
            AngularFactor::SinPow(a) => a,
            AngularFactor::StabilityBracket(a) => a.min(2.0),
        }
    }
}

/// `cos^a(θ/2) − 1` given `s = sin(θ/2)`, accurate for small `s`.
pub fn cos_pow_minus_one(s: f64, a: f64) -> f64 {
    (0.5 * a * (-s * s).ln_1p()).exp_m1()
}

/// Settings for the moment integrals.
#[derive(Debug, Clone, Copy)]
pub struct MomentQuadrature {
    pub gauss_order: usize,
    pub policy: RefinePolicy,
}

impl Default for MomentQuadrature {
    fn default() -> Self {
        Self {
            gauss_order: 12,
            policy: RefinePolicy::default(),
        }
    }
}

impl MomentQuadrature {
    /// `2π ∫ w(θ) F(θ) dθ` over the kernel support with refinement.
    pub fn moment(&self, model: &KernelModel, factor: AngularFactor) -> Estimate {
        self.moment_with_levels(model, factor).0
    }

    pub fn moment_with_levels(&self, model: &KernelModel, factor: AngularFactor) -> (Estimate, Vec<f64>) {
        if model.is_zero() {
            return (
                Estimate::Finite {
                    value: 0.0,
                    error: 0.0,
                    converged: true,
                },
                vec![0.0],
            );
        }
        let lo = model.lower_angle();
        let grading = if lo > 0.0 {
            2.0
        } else {
            grading_for_exponent(factor.exponent() - model.singularity_exponent, 1.0)
        };
        let gl = GaussLegendre::new(self.gauss_order);
        refine(&self.policy, |panels| {
            let rule = GradedRule::new(lo, FRAC_PI_2, panels, grading, &gl);
            2.0 * PI * rule.integrate(|theta| model.angular_weight(theta) * factor.eval(theta))
        })
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 2.0 {
        Ok(())
    } else {
        Err(Error::Domain {
            what: "alpha",
            value: alpha,
            domain: "(0, 2]",
        })
    }
}

pub fn l1_norm(model: &KernelModel) -> Estimate {
    MomentQuadrature::default().moment(model, AngularFactor::One)
}

pub fn moment_mu_alpha(model: &KernelModel, alpha: f64) -> Result<Estimate> {
    check_alpha(alpha)?;
    Ok(MomentQuadrature::default().moment(model, AngularFactor::SinPow(alpha)))
}

pub fn moment_gamma_alpha(model: &KernelModel, alpha: f64) -> Result<Estimate> {
    check_alpha(alpha)?;
    Ok(MomentQuadrature::default().moment(model, AngularFactor::CosPlusSin(alpha)))
}

pub fn moment_lambda_alpha(model: &KernelModel, alpha: f64) -> Result<Estimate> {
    check_alpha(alpha)?;
    Ok(MomentQuadrature::default().moment(model, AngularFactor::StabilityBracket(alpha)))
}

/// `λ_α, γ_α, μ_α, ‖b‖₁` for one kernel and index.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentConstants {
    pub alpha: f64,
    pub lambda_alpha: Estimate,
    pub gamma_alpha: Estimate,
    pub mu_alpha: Estimate,
    pub b_l1: Estimate,
}

impl MomentConstants {
    pub fn compute(model: &KernelModel, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        let q = MomentQuadrature::default();
        Ok(Self {
            alpha,
            lambda_alpha: q.moment(model, AngularFactor::StabilityBracket(alpha)),
            gamma_alpha: q.moment(model, AngularFactor::CosPlusSin(alpha)),
            mu_alpha: q.moment(model, AngularFactor::SinPow(alpha)),
            b_l1: q.moment(model, AngularFactor::One),
        })
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "alpha": self.alpha,
            "lambda_alpha": estimate_json(&self.lambda_alpha),
            "gamma_alpha": estimate_json(&self.gamma_alpha),
            "mu_alpha": estimate_json(&self.mu_alpha),
            "b_l1": estimate_json(&self.b_l1),
        })
    }
}

/// Finite estimates serialize as numbers, divergent ones as the string `"divergent"`.
pub fn estimate_json(e: &Estimate) -> serde_json::Value {
    match e {
        Estimate::Finite { value, .. } => serde_json::json!(value),
        Estimate::Divergent { .. } => serde_json::json!("divergent"),
    }
}

/// JSON form of a kernel used by run configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub family: String,
    #[serde(default = "one")]
    pub kappa_or_c: f64,
    #[serde(default)]
    pub singularity_exponent: Option<f64>,
    #[serde(default)]
    pub truncation: Option<Truncation>,
    #[serde(default)]
    pub table: Option<Vec<(f64, f64)>>,
}

fn one() -> f64 {
    1.0
}

impl KernelSpec {
    pub fn to_model(&self) -> Result<KernelModel> {
        if !(self.kappa_or_c >= 0.0) {
            return Err(Error::config("kernel.kappa_or_c", "must be nonnegative"));
        }
        let mut model = match self.family.as_str() {
            "constant" => KernelModel::constant(self.kappa_or_c),
            "maxwellian_singular" => {
                let mut m = KernelModel::maxwellian(self.kappa_or_c);
                if let Some(nu) = self.singularity_exponent {
                    m.singularity_exponent = nu;
                }
                m
            }
            "custom" => {
                let table = self
                    .table
                    .clone()
                    .ok_or_else(|| Error::config("kernel.table", "required for the custom family"))?;
                KernelModel::custom(table, self.singularity_exponent.unwrap_or(0.0))?
            }
            other => {
                return Err(Error::config(
                    "kernel.family",
                    format!("unknown family `{other}` (expected constant, maxwellian_singular or custom)"),
                ))
            }
        };
        if let Some(t) = self.truncation {
            if t.n == 0 {
                return Err(Error::config("kernel.truncation.n", "must be positive"));
            }
            model = model.truncate(t.n, t.cap);
        }
        Ok(model)
    }

    pub fn from_model(model: &KernelModel) -> Self {
        let (family, k, table) = match &model.family {
            KernelFamily::Constant(c) => ("constant", *c, None),
            KernelFamily::MaxwellianSingular(k) => ("maxwellian_singular", *k, None),
            KernelFamily::Custom(t) => ("custom", 1.0, Some(t.clone())),
        };
        Self {
            family: family.to_string(),
            kappa_or_c: k,
            singularity_exponent: Some(model.singularity_exponent),
            truncation: model.truncation,
            table,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn value(e: &Estimate) -> f64 {
        e.finite().unwrap_or_else(|| panic!("expected finite, got {e:?}"))
    }

    #[test]
    fn eval_b_examples() {
        let c = KernelModel::constant(1.0);
        assert_eq!(c.eval_b(PI / 4.0).unwrap(), 1.0);
        let m = KernelModel::maxwellian(1.0);
        let t = m.truncate(10, false);
        assert_eq!(t.eval_b(0.05).unwrap(), 0.0);
        let theta: f64 = 1e-4;
        let lim = m.eval_b(theta).unwrap() * theta.sin() * theta.powf(1.5);
        assert!((lim - 1.0).abs() < 0.01);
        assert!(c.eval_b(0.0).is_err());
        assert!(c.eval_b(2.0).is_err());
    }

    #[test]
    fn singular_family_matches_its_asymptotics() {
        let m = KernelModel::maxwellian(2.5);
        for k in 1..=8 {
            let theta = 10f64.powi(-k);
            let r = theta.powf(1.5) * m.eval_b(theta).unwrap() * theta.sin();
            assert!((r - 2.5).abs() < 1e-12 * 2.5);
        }
    }

    #[test]
    fn truncation_is_an_indicator() {
        let m = KernelModel::maxwellian(1.0);
        let b2 = m.truncate(2, false);
        assert_eq!(b2.eval_b(0.4).unwrap(), 0.0);
        assert_eq!(b2.eval_b(0.49).unwrap(), 0.0);
        assert_eq!(b2.eval_b(0.5).unwrap(), m.eval_b(0.5).unwrap());
        assert_eq!(b2.eval_b(0.51).unwrap(), m.eval_b(0.51).unwrap());
        for n in [3, 7, 50] {
            let bn = m.truncate(n, false);
            for k in 0..40 {
                let theta = 1.0 / n as f64 + k as f64 * 0.03;
                if theta <= FRAC_PI_2 {
                    assert_eq!(bn.eval_b(theta).unwrap(), m.eval_b(theta).unwrap());
                }
            }
        }
        let capped = m.truncate(4, true);
        assert!(capped.eval_b(0.3).unwrap() <= 4.0);
    }

    #[test]
    fn truncated_norms_increase_with_n() {
        let m = KernelModel::maxwellian(1.0);
        let norms: Vec<f64> = [4, 8, 16].iter().map(|&n| value(&l1_norm(&m.truncate(n, false)))).collect();
        assert!(norms[0] < norms[1] && norms[1] < norms[2], "{norms:?}");
        // closed form 2π·2(√n − (π/2)^{-1/2})
        for (n, v) in [4.0f64, 8.0, 16.0].iter().zip(&norms) {
            let want = 4.0 * PI * (n.sqrt() - FRAC_PI_2.powf(-0.5));
            assert!((v - want).abs() < 1e-10 * want, "{v} vs {want}");
        }
    }

    #[test]
    fn constant_kernel_norm_is_two_pi() {
        assert!((value(&l1_norm(&KernelModel::constant(1.0))) - 2.0 * PI).abs() < 1e-13);
    }

    #[test]
    fn mu_two_of_constant_kernel_matches_antiderivative() {
        // ∫_0^{π/2} sinθ (1 − cosθ)/2 dθ = [−cosθ/2 + cos²θ/4]_0^{π/2} = 1/4
        let mu = value(&moment_mu_alpha(&KernelModel::constant(1.0), 2.0).unwrap());
        assert!((mu - 2.0 * PI * 0.25).abs() < 1e-13);
    }

    #[test]
    fn singular_mu_threshold() {
        let m = KernelModel::maxwellian(1.0);
        assert!(moment_mu_alpha(&m, 0.4).unwrap().is_divergent());
        assert!(moment_mu_alpha(&m, 0.6).unwrap().finite().is_some());
        assert!(l1_norm(&m).is_divergent());
        assert!(moment_gamma_alpha(&m, 1.0).unwrap().is_divergent());
    }

    #[test]
    fn lambda_two_vanishes() {
        for m in [KernelModel::constant(1.0), KernelModel::maxwellian(1.0), KernelModel::maxwellian(1.0).truncate(8, false)] {
            let l = value(&moment_lambda_alpha(&m, 2.0).unwrap());
            assert!(l.abs() < 1e-12, "{l}");
        }
    }

    #[test]
    fn alpha_domain_is_checked() {
        let m = KernelModel::constant(1.0);
        assert!(moment_mu_alpha(&m, 0.0).is_err());
        assert!(moment_lambda_alpha(&m, 2.5).is_err());
    }

    #[test]
    fn kernel_spec_round_trips() {
        let spec: KernelSpec = serde_json::from_str(
            r#"{"family":"maxwellian_singular","kappa_or_c":1.0,"singularity_exponent":1.5,"truncation":{"n":8,"cap":false}}"#,
        )
        .unwrap();
        let model = spec.to_model().unwrap();
        assert_eq!(model.truncation, Some(Truncation { n: 8, cap: false }));
        assert_eq!(KernelSpec::from_model(&model).to_model().unwrap(), model);
        let bad = KernelSpec {
            family: "debye".into(),
            ..spec
        };
        assert!(matches!(bad.to_model(), Err(Error::Config { path, .. }) if path == "kernel.family"));
    }

    #[test]
    fn custom_table_interpolates_and_continues_as_power_law() {
        let m = KernelModel::custom(vec![(0.5, 2.0), (1.0, 1.0)], 0.0).unwrap();
        assert!((m.eval_b(0.75).unwrap() - 1.5).abs() < 1e-15);
        assert_eq!(m.eval_b(1.4).unwrap(), 1.0);
        // ν = 0: b sinθ constant below the table
        let t = 0.1;
        assert!((m.eval_b(t).unwrap() * t.sin() - 2.0 * 0.5f64.sin()).abs() < 1e-14);
    }
}
