//! The symmetric stable family `W_p(r, t) = e^{−r^p t}` and its densities on `ℝ³`.

use crate::charfun::{envelope_tail_bound, inverse_radial_truncated, log_log_slope, Envelope};
use crate::error::{Error, Result};
use crate::quadrature::{geometric_breaks, FilonSine, GaussLegendre};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use statrs::function::gamma::{gamma, ln_gamma};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevyParams {
    pub p: f64,
    pub t: f64,
    pub delta_p: f64,
}

impl LevyParams {
    pub fn new(p: f64, t: f64) -> Result<Self> {
        if !(p > 0.0 && p <= 2.0) {
            return Err(Error::Domain {
                what: "p",
                value: p,
                domain: "(0, 2]",
            });
        }
        if !(t > 0.0) {
            return Err(Error::Domain {
                what: "t",
                value: t,
                domain: "(0, ∞)",
            });
        }
        Ok(Self { p, t, delta_p: 1.0 })
    }

    fn at_unit_time(&self) -> Self {
        Self { t: 1.0, ..*self }
    }
}

pub fn w_p(r: f64, params: &LevyParams) -> f64 {
    if r == 0.0 {
        1.0
    } else {
        (-r.powf(params.p) * params.t).exp()
    }
}

/// Radius beyond which `e^{−r^p}` and its inversion tail are negligible.
fn cutoff_radius(p: f64, tol: f64) -> f64 {
    let env = Envelope { p, rate: 1.0 };
    let mut r = 36.85f64.powf(1.0 / p);
    while envelope_tail_bound(env, r, 0.0, 1.0) > tol {
        r *= 1.1;
    }
    r
}

/// Evaluator for `f_p(·, 1)` that reuses its panel layout across calls.
#[derive(Debug, Clone)]
pub struct DensityEvaluator {
    p: f64,
    breaks: Vec<f64>,
    filon: FilonSine,
}

impl DensityEvaluator {
    pub fn new(p: f64) -> Result<Self> {
        LevyParams::new(p, 1.0)?;
        let r_cut = cutoff_radius(p, 1e-15);
        Ok(Self {
            p,
            breaks: geometric_breaks(1e-12, r_cut, 16),
            filon: FilonSine::new(),
        })
    }

    /// `f_p(v, 1) = (1/2π²) ∫₀^∞ e^{−r^p} r² sinc(r v) dr`.
    pub fn unit_time(&self, v: f64) -> f64 {
        let p = self.p;
        inverse_radial_truncated(&self.filon, &self.breaks, v.abs(), |r| (-r.powf(p)).exp())
    }

    /// `f_p(v, t) = t^{−3/p} f_p(t^{−1/p} v, 1)`.
    pub fn at(&self, v: f64, t: f64) -> f64 {
        let s = t.powf(-1.0 / self.p);
        s.powi(3) * self.unit_time(s * v)
    }
}

pub fn f_p_density(v: f64, params: &LevyParams) -> Result<f64> {
    Ok(DensityEvaluator::new(params.p)?.at(v, params.t))
}

/// `lim_{|v|→∞} |v|^{3+p} f_p(v, t) = p 2^{p−1} t π^{−5/2} sin(pπ/2) Γ((3+p)/2) Γ(p/2)`.
pub fn tail_constant(params: &LevyParams) -> f64 {
    let p = params.p;
    p * 2f64.powf(p - 1.0) * params.t / PI.powf(2.5) * (0.5 * p * PI).sin() * gamma(0.5 * (3.0 + p)) * gamma(0.5 * p)
}

/// Leading tail constant fitted from the density itself: least squares of `v^{3+p} f_p(v, t)`
/// against `1, v^{−p}, v^{−2p}` on five log-spaced radii in `[v₀, 4v₀]`, constant term
/// returned. The raw value at `v₀` carries a relative `O(v₀^{−p})` correction.
pub fn fit_tail_constant(eval: &DensityEvaluator, v0: f64, t: f64) -> f64 {
    const POINTS: usize = 5;
    const TERMS: usize = 3;
    let p = eval.p;
    let vs: Vec<f64> = (0..POINTS).map(|j| v0 * 4f64.powf(j as f64 / (POINTS - 1) as f64)).collect();
    let a = DMatrix::from_fn(POINTS, TERMS, |i, m| vs[i].powf(-(m as f64) * p));
    let y = DVector::from_iterator(POINTS, vs.iter().map(|&v| v.powf(3.0 + p) * eval.at(v, t)));
    a.svd(true, true).solve(&y, 1e-14).map_or(f64::NAN, |c| c[0])
}

/// Coefficient `a_k` of `v^{−3−kp}` in the large-`v` expansion of `f_p(v, t)`.
pub fn tail_coefficient(k: u32, params: &LevyParams) -> f64 {
    let kp = k as f64 * params.p;
    let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
    let s = (0.5 * kp * PI).sin();
    if s == 0.0 {
        return 0.0;
    }
    let log_mag = ln_gamma(kp + 2.0) - ln_gamma(k as f64 + 1.0) + k as f64 * params.t.ln();
    sign * s * log_mag.exp() / (2.0 * PI * PI)
}

/// Sum of the first `terms` terms of the large-`v` expansion.
pub fn tail_series(v: f64, params: &LevyParams, terms: u32) -> f64 {
    (1..=terms)
        .map(|k| tail_coefficient(k, params) * v.powf(-3.0 - k as f64 * params.p))
        .sum()
}

const TAIL_TERMS: u32 = 6;

/// Growth of a truncated moment that has no finite limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DivergenceDiagnostic {
    /// `value(R) ≈ a + slope·ln R`.
    Logarithmic { slope: f64, expected_slope: f64 },
    /// `value(R) ≈ a + c·R^exponent`.
    Power { exponent: f64, expected_exponent: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FractionalMoment {
    pub alpha: f64,
    pub radius: f64,
    /// `4π ∫₀^R v^{2+α} f_p dv`.
    pub truncated: f64,
    /// Tail beyond `R` from the large-`v` expansion; zero when the moment diverges.
    pub tail_correction: f64,
    pub value: f64,
    pub divergence: Option<DivergenceDiagnostic>,
}

fn moment_breaks(radius: f64, scale: f64) -> Vec<f64> {
    let mut b = vec![0.0];
    let mut x = 0.25 * scale;
    while x < radius {
        b.push(x);
        x *= 1.5;
    }
    b.push(radius);
    b
}

/// `4π ∫₀^R v^{2+α} f_p(v, t) dv` by Gauss–Legendre over geometric panels.
pub fn truncated_moment(eval: &DensityEvaluator, alpha: f64, params: &LevyParams, radius: f64) -> f64 {
    let gl = GaussLegendre::new(16);
    let scale = params.t.powf(1.0 / params.p);
    let breaks = moment_breaks(radius, scale);
    let mut total = 0.0;
    for w in breaks.windows(2) {
        total += gl.integrate(w[0], w[1], |v| v.powf(2.0 + alpha) * eval.at(v, params.t));
    }
    4.0 * PI * total
}

/// `4π ∫_R^∞ v^{2+α} f_p dv` from the expansion, when every retained term converges.
fn moment_tail(alpha: f64, params: &LevyParams, radius: f64) -> Option<f64> {
    let mut sum = 0.0;
    for k in 1..=TAIL_TERMS {
        let a = tail_coefficient(k, params);
        if a == 0.0 {
            continue;
        }
        let e = k as f64 * params.p - alpha;
        if e <= 0.0 {
            return None;
        }
        sum += a * radius.powf(-e) / e;
    }
    Some(4.0 * PI * sum)
}

/// Fractional moment `∫|v|^α f_p dv`. Convergent moments get the tail beyond `R` added
/// from the large-`v` expansion; divergent ones (`α ≥ p < 2`) report the truncated value
/// and a fitted growth law over `R/8, R/4, R/2, R`.
pub fn fractional_moment(alpha: f64, params: &LevyParams, radius: f64) -> Result<FractionalMoment> {
    if !(0.0..=2.0).contains(&alpha) {
        return Err(Error::Domain {
            what: "alpha",
            value: alpha,
            domain: "[0, 2]",
        });
    }
    let eval = DensityEvaluator::new(params.p)?;
    let truncated = truncated_moment(&eval, alpha, params, radius);
    if let Some(tail) = moment_tail(alpha, params, radius) {
        return Ok(FractionalMoment {
            alpha,
            radius,
            truncated,
            tail_correction: tail,
            value: truncated + tail,
            divergence: None,
        });
    }
    let radii: Vec<f64> = [8.0, 4.0, 2.0, 1.0].iter().map(|d| radius / d).collect();
    let mut values: Vec<f64> = radii[..3]
        .iter()
        .map(|&r| truncated_moment(&eval, alpha, params, r))
        .collect();
    values.push(truncated);
    let c = 4.0 * PI * tail_constant(params);
    let divergence = if (alpha - params.p).abs() < 1e-12 {
        let logs: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
        let n = logs.len() as f64;
        let (mx, my) = (logs.iter().sum::<f64>() / n, values.iter().sum::<f64>() / n);
        let sxy: f64 = logs.iter().zip(&values).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = logs.iter().map(|x| (x - mx).powi(2)).sum();
        DivergenceDiagnostic::Logarithmic {
            slope: sxy / sxx,
            expected_slope: c,
        }
    } else {
        let inc: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
        DivergenceDiagnostic::Power {
            exponent: log_log_slope(&radii[..3], &inc).unwrap_or(f64::NAN),
            expected_exponent: alpha - params.p,
        }
    };
    Ok(FractionalMoment {
        alpha,
        radius,
        truncated,
        tail_correction: 0.0,
        value: truncated,
        divergence: Some(divergence),
    })
}

/// `4π ∫₀^∞ e^{−r^p} r² dr` by quadrature.
pub fn wp_l1_norm(params: &LevyParams) -> f64 {
    let p = params.p;
    let r_cut = cutoff_radius(p, 1e-18);
    let breaks = geometric_breaks(1e-14, r_cut, 8);
    let gl = GaussLegendre::new(20);
    let t = params.t;
    let sum: f64 = breaks
        .windows(2)
        .map(|w| gl.integrate(w[0], w[1], |r| (-r.powf(p) * t).exp() * r * r))
        .sum();
    4.0 * PI * sum
}

/// `(4π/p) Γ(3/p) t^{−3/p}`.
pub fn wp_l1_norm_closed_form(params: &LevyParams) -> f64 {
    4.0 * PI / params.p * gamma(3.0 / params.p) * params.t.powf(-3.0 / params.p)
}

/// `max` over a log grid on `[r_min, r_max]` of `(1 − e^{−δ r^p t})/r^α`.
pub fn norm_sup_on_grid(p: f64, delta_t: f64, alpha: f64, r_min: f64, r_max: f64, nodes: usize) -> f64 {
    let (a, b) = (r_min.ln(), r_max.ln());
    (0..nodes)
        .map(|i| {
            let r = (a + (b - a) * i as f64 / (nodes - 1) as f64).exp();
            -(-delta_t * r.powf(p)).exp_m1() / r.powf(alpha)
        })
        .fold(0.0, f64::max)
}

/// Mass `4π ∫ v² f_p dv`, tail included.
pub fn total_mass(params: &LevyParams, radius: f64) -> Result<f64> {
    Ok(fractional_moment(0.0, &params.at_unit_time(), radius)?.value)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp(p: f64, t: f64) -> LevyParams {
        LevyParams::new(p, t).unwrap()
    }

    #[test]
    fn w_p_examples() {
        assert_eq!(w_p(0.0, &lp(1.3, 2.0)), 1.0);
        assert!((w_p(1.0, &lp(2.0, 1.0)) - (-1f64).exp()).abs() < 1e-16);
        let (l, r) = (1.7, 0.4);
        let a = w_p(l * r, &lp(1.5, 0.9));
        let b = w_p(r, &lp(1.5, 0.9 * l.powf(1.5)));
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn gaussian_density() {
        for v in [0.0, 0.3, 1.0, 2.5, 6.0] {
            let f = f_p_density(v, &lp(2.0, 1.0)).unwrap();
            let want = (4.0 * PI).powf(-1.5) * (-v * v / 4.0).exp();
            assert!((f - want).abs() < 1e-12, "v={v}: {f} vs {want}");
        }
    }

    #[test]
    fn cauchy_density_is_one_over_pi_squared() {
        let e = DensityEvaluator::new(1.0).unwrap();
        for v in [0.0f64, 1.0, 3.0, 20.0] {
            let want = 1.0 / (PI * PI * (1.0 + v * v).powi(2));
            assert!((e.unit_time(v) - want).abs() < 1e-12 * want.max(1e-3), "v={v}");
        }
    }

    #[test]
    fn self_similarity() {
        let e = DensityEvaluator::new(1.5).unwrap();
        let (t, v) = (2.0f64, 0.7);
        let direct = f_p_density(v, &lp(1.5, t)).unwrap();
        assert!((direct - t.powf(-2.0) * e.unit_time(t.powf(-1.0 / 1.5) * v)).abs() < 1e-15);
    }

    #[test]
    fn tail_constant_examples() {
        assert!((tail_constant(&lp(1.0, 1.0)) - 1.0 / (PI * PI)).abs() < 1e-15);
        assert!(tail_constant(&lp(2.0, 1.0)).abs() < 1e-15);
        assert!((tail_constant(&lp(0.7, 2.0)) - 2.0 * tail_constant(&lp(0.7, 1.0))).abs() < 1e-15);
        for p in [0.3, 0.5, 1.0, 1.5, 1.9] {
            let params = lp(p, 1.0);
            assert!((tail_coefficient(1, &params) - tail_constant(&params)).abs() < 1e-13 * tail_constant(&params));
        }
    }

    #[test]
    fn fitted_tail_constant() {
        for p in [0.5, 1.0, 1.5] {
            for t in [1.0, 2.0] {
                let c = tail_constant(&lp(p, t));
                let fit = fit_tail_constant(&DensityEvaluator::new(p).unwrap(), 50.0, t);
                // At t = 2, p = 0.5 the window starts at an effective radius of only 12.5.
                assert!((fit - c).abs() < 1e-3 * c, "p={p} t={t}: {fit} vs {c}");
            }
        }
    }

    #[test]
    fn tail_expansion_matches_density() {
        for p in [0.5, 1.0, 1.5] {
            let e = DensityEvaluator::new(p).unwrap();
            let v: f64 = 50.0;
            let f = e.unit_time(v);
            let s = tail_series(v, &lp(p, 1.0), 6);
            assert!((f - s).abs() < 1e-6 * f, "p={p}: {f} vs {s}");
        }
    }

    #[test]
    fn l1_norms() {
        for p in [0.5, 1.0, 1.5, 2.0] {
            let params = lp(p, 1.0);
            let (q, c) = (wp_l1_norm(&params), wp_l1_norm_closed_form(&params));
            assert!((q - c).abs() < 1e-10 * c, "p={p}: {q} vs {c}");
        }
        assert!((wp_l1_norm_closed_form(&lp(2.0, 1.0)) - PI.powf(1.5)).abs() < 1e-12);
        assert!((wp_l1_norm_closed_form(&lp(1.0, 1.0)) - 8.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn mass_and_moments_of_cauchy() {
        let params = lp(1.0, 1.0);
        let m = fractional_moment(0.0, &params, 100.0).unwrap();
        assert!((m.value - 1.0).abs() < 1e-8, "{m:?}");
        let a = fractional_moment(0.5, &params, 100.0).unwrap();
        let b = fractional_moment(0.5, &params, 200.0).unwrap();
        assert!((a.value - b.value).abs() < 1e-6 * b.value);
        // closed form: 4π/π² ∫ v^{2.5}/(1+v²)² dv = (4/π)·B(7/4, 1/4)/2
        let want = 2.0 / PI * gamma(1.75) * gamma(0.25) / gamma(2.0);
        assert!((b.value - want).abs() < 1e-7, "{} vs {want}", b.value);
        let log = fractional_moment(1.0, &params, 200.0).unwrap();
        match log.divergence {
            Some(DivergenceDiagnostic::Logarithmic { slope, expected_slope }) => {
                assert!((slope / expected_slope - 1.0).abs() < 0.05, "{slope} vs {expected_slope}");
                assert!((expected_slope - 4.0 / PI).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn norm_sup_identities() {
        let s = norm_sup_on_grid(1.0, 1.0, 1.0, 1e-6, 10.0, 200);
        assert!((s - 1.0).abs() < 1e-4);
        assert!(norm_sup_on_grid(1.0, 1.0, 0.5, 1e-6, 10.0, 200) <= 1.0);
        let a = norm_sup_on_grid(1.0, 1.0, 1.5, 1e-5, 10.0, 200);
        let b = norm_sup_on_grid(1.0, 1.0, 1.5, 1e-6, 10.0, 200);
        assert!(((b / a).log10() - 0.5).abs() < 0.025);
    }
}
