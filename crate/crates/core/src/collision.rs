//! The Boltzmann–Bobylev operator
//!
//! ```text
//! ℬ(φ)(ξ) = ∫_{S²} b(ξ·σ/|ξ|) [φ(ξ⁺)φ(ξ⁻) − φ(ξ)] dσ,    ξ± = (ξ ± |ξ|σ)/2
//! ```
//!
//! and its gain part `𝒢`. For isotropic `φ` the azimuthal integral is trivial and
//! `ℬ(φ)(r) = 2π ∫₀^{π/2} w(θ) [φ(r cos(θ/2)) φ(r sin(θ/2)) − φ(r)] dθ`.
//!
//! In split mode the bracket is evaluated on the envelope-scaled values `g` of
//! [`RadialCharFn`] as
//!
//! ```text
//! [g(rs) − 1] g(rc) D + [g(rc) − g(r)] D + g(r)(D − 1),    D = e^{−ρ r^p (c^p + s^p − 1)}
//! ```
//!
//! so each term is computed from a small difference rather than by cancellation, and the
//! result comes out multiplied by `e^{ρ r^p}`.

use crate::charfun::{InequalityReport, RadialCharFn};
use crate::error::{Error, Result};
use crate::kernels::{l1_norm, moment_mu_alpha, AngularFactor, KernelModel, MomentQuadrature};
use crate::quadrature::{grading_for_exponent, Estimate, GaussLegendre, GradedRule};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CancellationMode {
    Direct,
    Split,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureSpec {
    pub panels: usize,
    /// Mesh `θ_k = lo + (π/2 − lo)(k/K)^m`; chosen from the integrand when absent.
    pub grading: Option<f64>,
    pub gauss_order: usize,
    pub tol: f64,
    pub cancellation_mode: CancellationMode,
    pub max_doublings: usize,
    /// Trapezoid points on the azimuthal circle (general path only).
    pub omega_points: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            panels: 16,
            grading: None,
            gauss_order: 10,
            tol: 1e-11,
            cancellation_mode: CancellationMode::Split,
            max_doublings: 7,
            omega_points: 32,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.panels < 4 {
            return Err(Error::config("quadrature.panels", "must be at least 4"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::config("quadrature.tol", "must be positive"));
        }
        if let Some(m) = self.grading {
            if !(m >= 1.0) {
                return Err(Error::config("quadrature.grading", "must be at least 1"));
            }
        }
        if self.gauss_order < 2 || self.omega_points < 4 {
            return Err(Error::config("quadrature", "gauss_order ≥ 2 and omega_points ≥ 4 required"));
        }
        Ok(())
    }
}

/// Power of `θ` with which the bracket vanishes at `θ = 0` for this `φ`.
pub fn bracket_exponent(phi: &RadialCharFn) -> f64 {
    phi.small_r_terms().iter().map(|t| t.1).fold(2.0, f64::min)
}

#[derive(Debug, Clone, Copy)]
struct ThetaNode {
    /// `2π w(θ)` times the quadrature weight.
    weight: f64,
    sin_half: f64,
    ln_sin: f64,
    ln_cos: f64,
}

/// Fixed θ-quadrature for one kernel, reusable across radii and time steps.
#[derive(Debug, Clone)]
pub struct CollisionRule {
    nodes: Vec<ThetaNode>,
    l1: f64,
    pub panels: usize,
    pub grading: f64,
    pub mode: CancellationMode,
}

impl CollisionRule {
    pub fn new(model: &KernelModel, spec: &QuadratureSpec, panels: usize, bracket_exponent: f64) -> Self {
        let lo = model.lower_angle();
        let grading = spec.grading.unwrap_or_else(|| {
            if lo > 0.0 {
                if model.singularity_exponent > 0.0 {
                    3.0
                } else {
                    1.0
                }
            } else {
                grading_for_exponent(bracket_exponent - model.singularity_exponent, 1.0)
            }
        });
        let gl = GaussLegendre::new(spec.gauss_order);
        let rule = GradedRule::new(lo, FRAC_PI_2, panels, grading, &gl);
        let nodes: Vec<ThetaNode> = rule
            .points()
            .iter()
            .map(|n| {
                let s = (0.5 * n.x).sin();
                ThetaNode {
                    weight: 2.0 * PI * model.angular_weight(n.x) * n.weight,
                    sin_half: s,
                    ln_sin: s.ln(),
                    ln_cos: 0.5 * (-s * s).ln_1p(),
                }
            })
            .filter(|n| n.weight != 0.0)
            .collect();
        let l1 = nodes.iter().map(|n| n.weight).sum();
        Self {
            nodes,
            l1,
            panels,
            grading,
            mode: spec.cancellation_mode,
        }
    }

    /// `‖b‖₁` as integrated by this rule.
    pub fn l1(&self) -> f64 {
        self.l1
    }

    /// `c^p + s^p − 1` per node.
    fn kappa(&self, p: f64) -> Vec<f64> {
        self.nodes
            .iter()
            .map(|n| (p * n.ln_cos).exp_m1() + (p * n.ln_sin).exp())
            .collect()
    }

    fn scaled_bobylev_at(&self, phi: &RadialCharFn, u: f64, kappa: &[f64]) -> f64 {
        let env = phi.envelope();
        let e = env.exponent_at(u.exp());
        match self.mode {
            CancellationMode::Split => {
                let g = phi.scaled_at_log(u);
                self.nodes
                    .iter()
                    .zip(kappa)
                    .map(|(n, &k)| {
                        let gs_m1 = -phi.one_minus_scaled_log(u + n.ln_sin);
                        let dc = phi.scaled_delta_log(u, n.ln_cos);
                        let dm1 = (-e * k).exp_m1();
                        let d = 1.0 + dm1;
                        n.weight * (gs_m1 * (g + dc) * d + dc * d + g * dm1)
                    })
                    .sum()
            }
            CancellationMode::Direct => {
                let r = u.exp();
                let sum: f64 = self
                    .nodes
                    .iter()
                    .map(|n| {
                        let c = n.ln_cos.exp();
                        n.weight * (phi.eval_unchecked(r * c) * phi.eval_unchecked(r * n.sin_half) - phi.eval_unchecked(r))
                    })
                    .sum();
                sum * e.exp()
            }
        }
    }

    fn scaled_gain_at(&self, phi: &RadialCharFn, u: f64, kappa: &[f64]) -> f64 {
        let e = phi.envelope().exponent_at(u.exp());
        let g = phi.scaled_at_log(u);
        self.nodes
            .iter()
            .zip(kappa)
            .map(|(n, &k)| {
                let gc = g + phi.scaled_delta_log(u, n.ln_cos);
                let gs = phi.scaled_at_log(u + n.ln_sin);
                n.weight * gc * gs * (-e * k).exp()
            })
            .sum()
    }

    /// `ℬ(φ)(r)`.
    pub fn bobylev(&self, phi: &RadialCharFn, r: f64) -> f64 {
        let kappa = self.kappa(phi.envelope().p);
        self.scaled_bobylev_at(phi, r.ln(), &kappa) * phi.envelope().factor(r)
    }

    /// `𝒢(φ)(r)`.
    pub fn gain(&self, phi: &RadialCharFn, r: f64) -> f64 {
        if r == 0.0 {
            return self.l1;
        }
        let kappa = self.kappa(phi.envelope().p);
        self.scaled_gain_at(phi, r.ln(), &kappa) * phi.envelope().factor(r)
    }

    /// `e^{ρ r_i^p} ℬ(φ)(r_i)` at every grid node, where `(p, ρ)` is the envelope of `φ`.
    pub fn scaled_bobylev_nodes(&self, phi: &RadialCharFn) -> Vec<f64> {
        let kappa = self.kappa(phi.envelope().p);
        phi.grid()
            .log_nodes()
            .par_iter()
            .map(|&u| self.scaled_bobylev_at(phi, u, &kappa))
            .collect()
    }

    /// Diagonal loss rate `Σ 2π w [1 − D g(r s)]` at every grid node, so that
    /// `e^{ρ r^p} ℬ(φ) = Σ 2π w D g(rs)[g(rc) − g(r)] − rate·g(r)`. Nonnegative when `|g| ≤ 1`.
    pub fn loss_rate_nodes(&self, phi: &RadialCharFn) -> Vec<f64> {
        let env = phi.envelope();
        let kappa = self.kappa(env.p);
        phi.grid()
            .log_nodes()
            .par_iter()
            .map(|&u| {
                let e = env.exponent_at(u.exp());
                self.nodes
                    .iter()
                    .zip(&kappa)
                    .map(|(n, &k)| {
                        let dm1 = (-e * k).exp_m1();
                        n.weight * (-dm1 + (1.0 + dm1) * phi.one_minus_scaled_log(u + n.ln_sin))
                    })
                    .sum()
            })
            .collect()
    }

    /// `e^{ρ r_i^p} 𝒢(φ)(r_i)` at every grid node.
    pub fn scaled_gain_nodes(&self, phi: &RadialCharFn) -> Vec<f64> {
        let kappa = self.kappa(phi.envelope().p);
        phi.grid()
            .log_nodes()
            .par_iter()
            .map(|&u| self.scaled_gain_at(phi, u, &kappa))
            .collect()
    }
}

fn refine_value(spec: &QuadratureSpec, what: &str, mut level: impl FnMut(usize) -> f64) -> Result<f64> {
    let policy = crate::quadrature::RefinePolicy {
        initial_panels: spec.panels,
        max_doublings: spec.max_doublings,
        tol: spec.tol,
        ..Default::default()
    };
    match crate::quadrature::refine(&policy, &mut level).0 {
        Estimate::Finite { value, .. } => Ok(value),
        Estimate::Divergent { partial, growth } => Err(Error::Divergent {
            what: what.to_string(),
            partial,
            growth,
        }),
    }
}

/// `ℬ(φ)(r)` with mesh refinement until successive values agree to `spec.tol`.
pub fn bobylev_isotropic(phi: &RadialCharFn, model: &KernelModel, r: f64, spec: &QuadratureSpec) -> Result<f64> {
    spec.validate()?;
    if !(r > 0.0) {
        return Err(Error::Domain {
            what: "r",
            value: r,
            domain: "(0, r_max]",
        });
    }
    phi.eval(r)?;
    let beta = bracket_exponent(phi);
    refine_value(spec, "collision integral", |panels| CollisionRule::new(model, spec, panels, beta).bobylev(phi, r))
}

/// `𝒢(φ)(r)` for a cutoff kernel; `𝒢(φ)(0) = ‖b‖₁`.
pub fn gain_isotropic(phi: &RadialCharFn, model: &KernelModel, r: f64, spec: &QuadratureSpec) -> Result<f64> {
    spec.validate()?;
    if !model.is_cutoff() {
        return Err(Error::NonCutoff);
    }
    if r == 0.0 {
        return l1_norm(model).finite().ok_or(Error::NonCutoff);
    }
    phi.eval(r)?;
    let beta = bracket_exponent(phi);
    refine_value(spec, "gain integral", |panels| CollisionRule::new(model, spec, panels, beta).gain(phi, r))
}

/// Orthonormal `e1, e2` spanning the plane orthogonal to the unit vector `n`.
fn frame(n: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    let k = (0..3).min_by(|&a, &b| n[a].abs().total_cmp(&n[b].abs())).unwrap();
    let mut h = [0.0; 3];
    h[k] = 1.0;
    let d = h[0] * n[0] + h[1] * n[1] + h[2] * n[2];
    let mut e1 = [h[0] - d * n[0], h[1] - d * n[1], h[2] - d * n[2]];
    let l = (e1[0] * e1[0] + e1[1] * e1[1] + e1[2] * e1[2]).sqrt();
    e1.iter_mut().for_each(|x| *x /= l);
    let e2 = [
        n[1] * e1[2] - n[2] * e1[1],
        n[2] * e1[0] - n[0] * e1[2],
        n[0] * e1[1] - n[1] * e1[0],
    ];
    (e1, e2)
}

/// Post-collisional frequencies `ξ⁺, ξ⁻` for polar angle `θ` and azimuth `ω`.
pub fn post_collisional(xi: [f64; 3], theta: f64, omega: f64) -> ([f64; 3], [f64; 3]) {
    let norm = (xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]).sqrt();
    let n = [xi[0] / norm, xi[1] / norm, xi[2] / norm];
    let (e1, e2) = frame(n);
    let (ct, st) = (theta.cos(), theta.sin());
    let (co, so) = (omega.cos(), omega.sin());
    let mut plus = [0.0; 3];
    let mut minus = [0.0; 3];
    for k in 0..3 {
        let sigma = ct * n[k] + st * (co * e1[k] + so * e2[k]);
        plus[k] = 0.5 * (xi[k] + norm * sigma);
        minus[k] = 0.5 * (xi[k] - norm * sigma);
    }
    (plus, minus)
}

/// `∫₀^{2π} [φ(ξ⁺)φ(ξ⁻) − φ(ξ)] dω` at polar angle `θ` by the periodic trapezoid rule.
pub fn circle_integral<F>(phi: &F, xi: [f64; 3], theta: f64, omega_points: usize, mode: CancellationMode) -> Complex64
where
    F: Fn([f64; 3]) -> Complex64 + ?Sized,
{
    let phi0 = phi(xi);
    let h = 2.0 * PI / omega_points as f64;
    let mut acc = Complex64::new(0.0, 0.0);
    for j in 0..omega_points {
        let (p, m) = post_collisional(xi, theta, j as f64 * h);
        let (fp, fm) = (phi(p), phi(m));
        acc += match mode {
            CancellationMode::Split => (fm - 1.0) * fp + (fp - phi0),
            CancellationMode::Direct => fp * fm - phi0,
        };
    }
    acc * h
}

/// `ℬ(φ)(ξ)` for a general characteristic function given as a callable, by a graded
/// Gauss rule in `θ` and the trapezoid rule in `ω`.
///
/// The callable's rounding error does not vanish as `θ → 0`, so the default mesh is only
/// mildly graded (`m = 2`); steeper meshes amplify it through the kernel singularity.
pub fn bobylev_general<F>(phi: &F, model: &KernelModel, xi: [f64; 3], spec: &QuadratureSpec) -> Result<Complex64>
where
    F: Fn([f64; 3]) -> Complex64 + Sync + ?Sized,
{
    spec.validate()?;
    if xi.iter().all(|&x| x == 0.0) {
        return Err(Error::Domain {
            what: "|xi|",
            value: 0.0,
            domain: "(0, ∞)",
        });
    }
    let lo = model.lower_angle();
    let grading = spec.grading.unwrap_or(if lo > 0.0 { 1.0 } else { 2.0 });
    let gl = GaussLegendre::new(spec.gauss_order);
    let level = |panels: usize| -> Complex64 {
        let rule = GradedRule::new(lo, FRAC_PI_2, panels, grading, &gl);
        rule.points()
            .par_iter()
            .map(|n| {
                let w = model.angular_weight(n.x) * n.weight;
                if w == 0.0 {
                    Complex64::new(0.0, 0.0)
                } else {
                    circle_integral(phi, xi, n.x, spec.omega_points, spec.cancellation_mode) * w
                }
            })
            .collect::<Vec<_>>()
            .into_iter()
            .sum()
    };
    let mut panels = spec.panels;
    let mut prev = level(panels);
    let mut last_inc: Option<f64> = None;
    let mut streak = 0;
    for _ in 0..spec.max_doublings {
        panels *= 2;
        let v = level(panels);
        let d = (v - prev).norm();
        if let Some(p) = last_inc {
            streak = if p > 0.0 && d >= 1.5 * p { streak + 1 } else { 0 };
        }
        if streak >= 3 {
            return Err(Error::Divergent {
                what: "collision integral".into(),
                partial: v.norm(),
                growth: d / last_inc.unwrap_or(1.0),
            });
        }
        if d <= spec.tol * v.norm().max(1.0) {
            return Ok(v);
        }
        last_inc = Some(d);
        prev = v;
    }
    Ok(prev)
}

/// `|ℬ(φ)(r)| ≤ 5 μ_α ‖φ − 1‖_α r^α` at each sample radius.
pub fn verify_operator_bound(
    phi: &RadialCharFn,
    model: &KernelModel,
    alpha: f64,
    r_samples: &[f64],
    spec: &QuadratureSpec,
) -> Result<Vec<InequalityReport>> {
    let mu = match moment_mu_alpha(model, alpha)? {
        Estimate::Finite { value, .. } => value,
        Estimate::Divergent { partial, growth } => {
            return Err(Error::Divergent {
                what: format!("mu_{alpha}"),
                partial,
                growth,
            })
        }
    };
    let norm = phi.kalpha_norm(alpha);
    r_samples
        .iter()
        .map(|&r| {
            let lhs = bobylev_isotropic(phi, model, r, spec)?.abs();
            let rhs = 5.0 * mu * norm * r.powf(alpha);
            Ok(InequalityReport::new("operator_bound", format!("r={r}"), lhs, rhs, spec.tol))
        })
        .collect()
}

/// `|ℬ(φ)(r) − ℬ_n(φ)(r)| ≤ 5 ‖φ − 1‖_α r^α · 2π ∫₀^{1/n} w sin^α(θ/2) dθ`.
pub fn truncation_remainder_bound(phi: &RadialCharFn, model: &KernelModel, alpha: f64, n: u32, r: f64) -> f64 {
    let q = MomentQuadrature::default();
    let full = q.moment(&model.untruncated(), AngularFactor::SinPow(alpha));
    let kept = q.moment(&model.truncate(n, false), AngularFactor::SinPow(alpha));
    match (full.finite(), kept.finite()) {
        (Some(a), Some(b)) => 5.0 * phi.kalpha_norm(alpha) * r.powf(alpha) * (a - b).max(0.0),
        _ => f64::INFINITY,
    }
}

/// Circle-integral bound `|∫_{S¹} […] dω| ≤ 10π ‖φ − 1‖_α |ξ|^α sin^α(θ/2)` at the given
/// polar angles.
pub fn check_circle_bound<F>(
    phi: &F,
    kalpha_norm: f64,
    alpha: f64,
    xi: [f64; 3],
    thetas: &[f64],
    spec: &QuadratureSpec,
) -> Vec<InequalityReport>
where
    F: Fn([f64; 3]) -> Complex64 + ?Sized,
{
    let r = (xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]).sqrt();
    thetas
        .iter()
        .map(|&theta| {
            let lhs = circle_integral(phi, xi, theta, spec.omega_points, spec.cancellation_mode).norm();
            let rhs = 10.0 * PI * kalpha_norm * r.powf(alpha) * (0.5 * theta).sin().powf(alpha);
            InequalityReport::new("circle_bound", format!("theta={theta}"), lhs, rhs, 1e-13)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charfun::RadialGrid;
    use std::sync::Arc;

    fn grid() -> Arc<RadialGrid> {
        Arc::new(RadialGrid::log_spaced(1e-4, 100.0, 200).unwrap())
    }

    fn kernels() -> Vec<KernelModel> {
        vec![
            KernelModel::constant(1.0),
            KernelModel::maxwellian(1.0),
            KernelModel::maxwellian(1.0).truncate(8, false),
        ]
    }

    #[test]
    fn gaussian_is_annihilated() {
        let phi = RadialCharFn::gaussian(grid(), 0.5).unwrap();
        let spec = QuadratureSpec::default();
        for model in kernels() {
            for r in [1e-3, 0.1, 1.0, 7.0, 100.0] {
                let b = bobylev_isotropic(&phi, &model, r, &spec).unwrap();
                assert!(b.abs() < 1e-12, "{model:?} r={r}: {b}");
            }
        }
        let one = RadialCharFn::one(grid());
        assert_eq!(bobylev_isotropic(&one, &KernelModel::maxwellian(1.0), 1.0, &spec).unwrap(), 0.0);
    }

    #[test]
    fn gain_identity_for_cutoff_kernels() {
        let phi = RadialCharFn::levy(grid(), 1.0, 1.0).unwrap();
        let spec = QuadratureSpec::default();
        for model in [KernelModel::constant(1.0), KernelModel::maxwellian(1.0).truncate(8, false)] {
            let rule = CollisionRule::new(&model, &spec, 64, 1.0);
            for r in [0.01, 0.5, 3.0] {
                let lhs = rule.bobylev(&phi, r);
                let rhs = rule.gain(&phi, r) - rule.l1() * phi.eval(r).unwrap();
                assert!((lhs - rhs).abs() < 1e-12, "{lhs} vs {rhs}");
            }
            let l1 = l1_norm(&model).finite().unwrap();
            assert!((gain_isotropic(&phi, &model, 0.0, &spec).unwrap() - l1).abs() < 1e-12);
            assert!((rule.l1() - l1).abs() < 1e-10 * l1);
            let one = RadialCharFn::one(grid());
            assert!((gain_isotropic(&one, &model, 2.0, &spec).unwrap() - l1).abs() < 1e-10);
        }
        assert!(matches!(
            gain_isotropic(&phi, &KernelModel::maxwellian(1.0), 1.0, &spec),
            Err(Error::NonCutoff)
        ));
    }

    #[test]
    fn split_and_direct_agree() {
        let phi = RadialCharFn::from_fn(grid(), 1.0, |r| 0.3 * (-r).exp() + 0.7 * (-r * r).exp()).unwrap();
        let model = KernelModel::maxwellian(1.0).truncate(16, false);
        let split = QuadratureSpec::default();
        let direct = QuadratureSpec {
            cancellation_mode: CancellationMode::Direct,
            ..split
        };
        for r in [0.05, 1.0, 10.0] {
            let a = bobylev_isotropic(&phi, &model, r, &split).unwrap();
            let b = bobylev_isotropic(&phi, &model, r, &direct).unwrap();
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn isotropic_matches_general_path() {
        let phi = RadialCharFn::levy(grid(), 1.0, 1.0).unwrap();
        let f = |x: [f64; 3]| Complex64::new((-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()).exp(), 0.0);
        let spec = QuadratureSpec {
            omega_points: 8,
            ..Default::default()
        };
        for model in [KernelModel::constant(1.0), KernelModel::maxwellian(1.0)] {
            let iso = bobylev_isotropic(&phi, &model, 1.0, &spec).unwrap();
            let gen = bobylev_general(&f, &model, [0.6, 0.0, 0.8], &spec).unwrap();
            assert!((iso - gen.re).abs() < 1e-8 && gen.im.abs() < 1e-14, "{iso} vs {gen}");
        }
    }

    #[test]
    fn general_path_is_rotation_invariant() {
        // anisotropic Gaussian e^{−ξᵀAξ/2}
        let a = [[1.0, 0.3, 0.0], [0.3, 0.5, 0.1], [0.0, 0.1, 2.0]];
        let rot = {
            let (c, s) = (0.6f64, 0.8f64);
            [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
        };
        let apply = |m: &[[f64; 3]; 3], x: [f64; 3]| {
            let mut y = [0.0; 3];
            for i in 0..3 {
                for j in 0..3 {
                    y[i] += m[i][j] * x[j];
                }
            }
            y
        };
        let quad = |x: [f64; 3]| {
            let ax = apply(&a, x);
            (-(x[0] * ax[0] + x[1] * ax[1] + x[2] * ax[2]) / 2.0).exp()
        };
        let f = |x: [f64; 3]| Complex64::new(quad(x), 0.0);
        let rt = [[rot[0][0], rot[1][0], rot[2][0]], [rot[0][1], rot[1][1], rot[2][1]], [rot[0][2], rot[1][2], rot[2][2]]];
        let g = |x: [f64; 3]| Complex64::new(quad(apply(&rt, x)), 0.0);
        let spec = QuadratureSpec {
            omega_points: 48,
            ..Default::default()
        };
        let model = KernelModel::maxwellian(1.0);
        let xi = [0.7, -0.2, 1.1];
        let v1 = bobylev_general(&f, &model, xi, &spec).unwrap();
        let v2 = bobylev_general(&g, &model, apply(&rot, xi), &spec).unwrap();
        assert!((v1 - v2).norm() < 1e-10, "{v1} vs {v2}");
        assert!(v1.norm() > 1e-3);
    }

    #[test]
    fn gaussian_annihilated_on_general_path() {
        let f = |x: [f64; 3]| Complex64::new((-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) / 2.0).exp(), 0.0);
        let v = bobylev_general(&f, &KernelModel::maxwellian(1.0), [0.3, 1.0, -2.0], &QuadratureSpec::default()).unwrap();
        assert!(v.norm() < QuadratureSpec::default().tol, "{v}");
    }

    #[test]
    fn operator_bound_examples() {
        let spec = QuadratureSpec::default();
        let model = KernelModel::maxwellian(1.0);
        let radii: Vec<f64> = (-4..=4).map(|k| 2f64.powi(k)).collect();
        let phi = RadialCharFn::levy(grid(), 1.0, 1.0).unwrap();
        let reps = verify_operator_bound(&phi, &model, 1.0, &radii, &spec).unwrap();
        assert!(reps.iter().all(|r| r.pass));
        let gauss = RadialCharFn::levy(grid(), 2.0, 1.0).unwrap();
        let reps = verify_operator_bound(&gauss, &model, 2.0, &radii, &spec).unwrap();
        assert!(reps.iter().all(|r| r.pass && r.margin > 0.0));
        assert!(verify_operator_bound(&phi, &model, 0.4, &radii, &spec).is_err());
    }

    #[test]
    fn singular_kernel_with_rough_phi_is_divergent() {
        // 1 − φ ~ r^{0.4}: μ_{0.4} = ∞ for the singular kernel
        let phi = RadialCharFn::levy(grid(), 0.4, 1.0).unwrap();
        let spec = QuadratureSpec {
            grading: Some(6.0),
            max_doublings: 9,
            ..Default::default()
        };
        let r = bobylev_isotropic(&phi, &KernelModel::maxwellian(1.0), 1.0, &spec);
        assert!(matches!(r, Err(Error::Divergent { .. })), "{r:?}");
    }

    #[test]
    fn truncation_consistency() {
        let phi = RadialCharFn::levy(grid(), 1.0, 1.0).unwrap();
        let spec = QuadratureSpec::default();
        let b = KernelModel::maxwellian(1.0);
        let full = bobylev_isotropic(&phi, &b, 1.0, &spec).unwrap();
        let mut prev = f64::INFINITY;
        for n in [4, 8, 16, 32] {
            let bn = bobylev_isotropic(&phi, &b.truncate(n, false), 1.0, &spec).unwrap();
            let diff = (full - bn).abs();
            assert!(diff <= truncation_remainder_bound(&phi, &b, 1.0, n, 1.0));
            assert!(diff < prev);
            prev = diff;
        }
    }

    #[test]
    fn circle_bound_holds() {
        let f = |x: [f64; 3]| Complex64::new((-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()).exp(), 0.0);
        let thetas = [1e-3, 0.01, 0.3, 1.0, 1.5];
        let reps = check_circle_bound(&f, 1.0, 1.0, [0.0, 2.0, 0.0], &thetas, &QuadratureSpec::default());
        assert!(reps.iter().all(|r| r.pass), "{reps:?}");
    }
}
