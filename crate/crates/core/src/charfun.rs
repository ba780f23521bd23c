//! Isotropic characteristic functions sampled on a radial grid.
//!
//! A [`RadialCharFn`] stores `g(r) = φ(r)·e^{ρ r^p}` for an envelope `(p, ρ)` and
//! interpolates `g` with a monotone cubic (PCHIP) in `ln r`. For the stable family
//! `e^{−r^p t}` the envelope carries the whole function and `g ≡ 1`, so presets are exact at
//! every radius. Below the smallest node `g` follows the anchor `1 − c·r^a − c₂·r^b`, which
//! passes through the first node, is fitted to the next two and gives `φ(0) = 1`.

use crate::error::{Error, Result};
use crate::quadrature::{cap_panels, FilonSine, GaussLegendre};
use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, gamma_ur};
use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

/// Strictly increasing positive radii.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    nodes: Vec<f64>,
    log_nodes: Vec<f64>,
}

impl RadialGrid {
    pub fn new(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::config("grid", "needs at least two nodes"));
        }
        if !(nodes[0] > 0.0) || !nodes.iter().all(|r| r.is_finite()) {
            return Err(Error::config("grid", "nodes must be positive and finite"));
        }
        if nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("grid", "nodes must be strictly increasing"));
        }
        let log_nodes = nodes.iter().map(|r| r.ln()).collect();
        Ok(Self { nodes, log_nodes })
    }

    pub fn log_spaced(r_min: f64, r_max: f64, n: usize) -> Result<Self> {
        Self::layout(r_min, r_max, n, 0)
    }

    /// `n_log` log-spaced nodes on `[r_min, r_max]` merged with `n_linear` equally spaced
    /// nodes on the first decade `[r_min, 10 r_min]`.
    pub fn layout(r_min: f64, r_max: f64, n_log: usize, n_linear: usize) -> Result<Self> {
        if !(r_min > 0.0 && r_max > r_min) {
            return Err(Error::config("grid", format!("need 0 < r_min < r_max, got [{r_min}, {r_max}]")));
        }
        if n_log < 2 {
            return Err(Error::config("grid.n_log", "needs at least two nodes"));
        }
        let (a, b) = (r_min.ln(), r_max.ln());
        let mut nodes: Vec<f64> = (0..n_log)
            .map(|i| (a + (b - a) * i as f64 / (n_log - 1) as f64).exp())
            .collect();
        nodes[0] = r_min;
        nodes[n_log - 1] = r_max;
        let lin_end = (10.0 * r_min).min(r_max);
        for k in 1..n_linear {
            nodes.push(r_min + (lin_end - r_min) * k as f64 / n_linear as f64);
        }
        nodes.sort_by(f64::total_cmp);
        nodes.dedup_by(|x, y| (*x - *y).abs() <= 1e-12 * *y);
        Self::new(nodes)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn log_nodes(&self) -> &[f64] {
        &self.log_nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn r_min(&self) -> f64 {
        self.nodes[0]
    }

    pub fn r_max(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }
}

impl Default for RadialGrid {
    fn default() -> Self {
        GridSpec::default().build().expect("default grid is valid")
    }
}

/// Grid layout as written in run configurations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub r_min: f64,
    pub r_max: f64,
    pub n_log: usize,
    #[serde(default)]
    pub n_linear: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            r_min: 1e-4,
            r_max: 1e2,
            n_log: 256,
            n_linear: 32,
        }
    }
}

impl GridSpec {
    pub fn build(&self) -> Result<RadialGrid> {
        RadialGrid::layout(self.r_min, self.r_max, self.n_log, self.n_linear)
    }
}

/// `φ = g·e^{−rate·r^p}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Envelope {
    pub p: f64,
    pub rate: f64,
}

impl Envelope {
    pub const NONE: Envelope = Envelope { p: 2.0, rate: 0.0 };

    pub fn exponent_at(&self, r: f64) -> f64 {
        if self.rate == 0.0 {
            0.0
        } else {
            self.rate * r.powf(self.p)
        }
    }

    pub fn factor(&self, r: f64) -> f64 {
        (-self.exponent_at(r)).exp()
    }
}

/// `g(r) ≈ 1 − coeff·r^exponent − coeff2·r^exponent2` below the first node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    pub exponent: f64,
    pub coeff: f64,
    pub exponent2: f64,
    pub coeff2: f64,
}

impl Anchor {
    /// Exact at the first node; the second coefficient is the least-squares fit to the next
    /// two nodes when they lie within a factor 2 of the first.
    fn fit(r: &[f64], g: &[f64], a: f64, p: f64) -> Self {
        let b = if p > a + 1e-12 { (2.0 * a).min(p) } else { 2.0 * a };
        let (x0, y0) = (r[0], 1.0 - g[0]);
        let (mut sqe, mut sqq) = (0.0, 0.0);
        for i in 1..r.len().min(3) {
            if r[i] > 2.0 * x0 {
                break;
            }
            let s = (r[i] / x0).powf(a);
            let q = r[i].powf(b) - x0.powf(b) * s;
            sqe += q * ((1.0 - g[i]) - y0 * s);
            sqq += q * q;
        }
        let coeff2 = if sqq > 0.0 { sqe / sqq } else { 0.0 };
        Self {
            exponent: a,
            coeff: (y0 - coeff2 * x0.powf(b)) / x0.powf(a),
            exponent2: b,
            coeff2,
        }
    }

    /// `1 − g(e^u)`.
    fn one_minus(&self, u: f64) -> f64 {
        self.coeff * (self.exponent * u).exp() + self.coeff2 * (self.exponent2 * u).exp()
    }

    /// `g(e^{u+du}) − g(e^u)`.
    fn delta(&self, u: f64, du: f64) -> f64 {
        -self.coeff * (self.exponent * u).exp() * (self.exponent * du).exp_m1()
            - self.coeff2 * (self.exponent2 * u).exp() * (self.exponent2 * du).exp_m1()
    }
}

#[derive(Debug, Clone)]
pub struct RadialCharFn {
    grid: Arc<RadialGrid>,
    scaled: Vec<f64>,
    slopes: Vec<f64>,
    envelope: Envelope,
    anchor: Anchor,
}

/// Cubic `a0 + a1 t + a2 t² + a3 t³` on one interval, `t ∈ [0, 1]`.
#[derive(Debug, Clone, Copy)]
struct Segment {
    a: [f64; 4],
    t: f64,
    k: usize,
    h: f64,
}

impl Segment {
    fn value(&self) -> f64 {
        let [a0, a1, a2, a3] = self.a;
        a0 + self.t * (a1 + self.t * (a2 + self.t * a3))
    }

    /// `P(t + dt) − P(t)` without cancellation.
    fn delta(&self, dt: f64) -> f64 {
        let [_, a1, a2, a3] = self.a;
        let (t1, t2) = (self.t, self.t + dt);
        dt * (a1 + a2 * (t1 + t2) + a3 * (t1 * t1 + t1 * t2 + t2 * t2))
    }
}

impl RadialCharFn {
    /// Builds from envelope-scaled node values `g_i`.
    pub fn from_scaled(grid: Arc<RadialGrid>, scaled: Vec<f64>, envelope: Envelope, anchor_exponent: f64) -> Result<Self> {
        if scaled.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        if !(anchor_exponent > 0.0) {
            return Err(Error::Domain {
                what: "anchor exponent",
                value: anchor_exponent,
                domain: "(0, ∞)",
            });
        }
        if !(envelope.p > 0.0 && envelope.rate >= 0.0) {
            return Err(Error::Domain {
                what: "envelope rate",
                value: envelope.rate,
                domain: "[0, ∞)",
            });
        }
        let anchor = Anchor::fit(grid.nodes(), &scaled, anchor_exponent, envelope.p);
        let slopes = pchip_slopes(grid.log_nodes(), &scaled);
        Ok(Self {
            grid,
            scaled,
            slopes,
            envelope,
            anchor,
        })
    }

    pub fn from_values(grid: Arc<RadialGrid>, values: Vec<f64>, anchor_exponent: f64) -> Result<Self> {
        Self::from_scaled(grid, values, Envelope::NONE, anchor_exponent)
    }

    pub fn from_fn(grid: Arc<RadialGrid>, anchor_exponent: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.nodes().iter().map(|&r| f(r)).collect();
        Self::from_values(grid, values, anchor_exponent)
    }

    /// `e^{−r^p t}`.
    pub fn levy(grid: Arc<RadialGrid>, p: f64, t: f64) -> Result<Self> {
        check_index(p)?;
        if !(t > 0.0) {
            return Err(Error::Domain {
                what: "t",
                value: t,
                domain: "(0, ∞)",
            });
        }
        let n = grid.len();
        Self::from_scaled(grid, vec![1.0; n], Envelope { p, rate: t }, p)
    }

    /// `e^{−c r²}`.
    pub fn gaussian(grid: Arc<RadialGrid>, c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::Domain {
                what: "gaussian c",
                value: c,
                domain: "(0, ∞)",
            });
        }
        let n = grid.len();
        Self::from_scaled(grid, vec![1.0; n], Envelope { p: 2.0, rate: c }, 2.0)
    }

    /// Characteristic function of the point mass at the origin.
    pub fn one(grid: Arc<RadialGrid>) -> Self {
        let n = grid.len();
        Self::from_scaled(grid, vec![1.0; n], Envelope::NONE, 2.0).expect("valid")
    }

    /// Convex combination `Σ w_k e^{−r^{p_k} t_k}`.
    pub fn mixture(grid: Arc<RadialGrid>, members: &[(f64, f64, f64)]) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::config("initial.mixture", "needs at least one member"));
        }
        let total: f64 = members.iter().map(|m| m.0).sum();
        if members.iter().any(|m| m.0 < 0.0) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::config("initial.mixture", "weights must be nonnegative and sum to 1"));
        }
        for &(_, p, t) in members {
            check_index(p)?;
            if !(t > 0.0) {
                return Err(Error::config("initial.mixture", "times must be positive"));
            }
        }
        let exponent = members
            .iter()
            .filter(|m| m.0 > 0.0)
            .map(|m| m.1)
            .fold(f64::INFINITY, f64::min);
        let values = grid
            .nodes()
            .iter()
            .map(|&r| members.iter().map(|&(w, p, t)| w * (-r.powf(p) * t).exp()).sum())
            .collect();
        Self::from_values(grid, values, exponent)
    }

    /// Same function on the same grid, re-expressed against another envelope.
    pub fn with_envelope(&self, envelope: Envelope, anchor_exponent: f64) -> Result<Self> {
        let scaled = self
            .grid
            .nodes()
            .iter()
            .zip(&self.scaled)
            .map(|(&r, &g)| g * (envelope.exponent_at(r) - self.envelope.exponent_at(r)).exp())
            .collect();
        Self::from_scaled(self.grid.clone(), scaled, envelope, anchor_exponent)
    }

    pub fn with_scaled(&self, scaled: Vec<f64>, envelope: Envelope) -> Result<Self> {
        Self::from_scaled(self.grid.clone(), scaled, envelope, self.anchor.exponent)
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn envelope(&self) -> Envelope {
        self.envelope
    }

    pub fn anchor(&self) -> Anchor {
        self.anchor
    }

    pub fn scaled(&self) -> &[f64] {
        &self.scaled
    }

    /// `φ(r_i)` at the grid nodes.
    pub fn values(&self) -> Vec<f64> {
        self.grid
            .nodes()
            .iter()
            .zip(&self.scaled)
            .map(|(&r, &g)| g * self.envelope.factor(r))
            .collect()
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || self.grid == other.grid
    }

    fn segment(&self, u: f64) -> Segment {
        let un = self.grid.log_nodes();
        let k = un.partition_point(|&x| x < u).saturating_sub(1).min(un.len() - 2);
        let h = un[k + 1] - un[k];
        let (g0, g1) = (self.scaled[k], self.scaled[k + 1]);
        let (d0, d1) = (self.slopes[k] * h, self.slopes[k + 1] * h);
        Segment {
            a: [g0, d0, 3.0 * (g1 - g0) - 2.0 * d0 - d1, 2.0 * (g0 - g1) + d0 + d1],
            t: (u - un[k]) / h,
            k,
            h,
        }
    }

    /// `g` at `r = e^u`; the anchor below the grid, the last value beyond it.
    pub fn scaled_at_log(&self, u: f64) -> f64 {
        let un = self.grid.log_nodes();
        if u < un[0] {
            return 1.0 - self.anchor.one_minus(u);
        }
        if u >= un[un.len() - 1] {
            return self.scaled[self.scaled.len() - 1];
        }
        self.segment(u).value()
    }

    pub fn scaled_at(&self, r: f64) -> f64 {
        if r <= 0.0 {
            1.0
        } else {
            self.scaled_at_log(r.ln())
        }
    }

    /// `1 − g(e^u)`, exact in the anchor region.
    pub fn one_minus_scaled_log(&self, u: f64) -> f64 {
        if u < self.grid.log_nodes()[0] {
            self.anchor.one_minus(u)
        } else {
            1.0 - self.scaled_at_log(u)
        }
    }

    /// `g(e^{u+du}) − g(e^u)` for `du ≤ 0`, accurate when `|du|` is small.
    pub fn scaled_delta_log(&self, u: f64, du: f64) -> f64 {
        let un = self.grid.log_nodes();
        let anchor_delta = |u: f64, du: f64| self.anchor.delta(u, du);
        if u < un[0] {
            return anchor_delta(u, du);
        }
        let (mut u, mut du) = (u.min(un[un.len() - 1]), du);
        let mut acc = 0.0;
        loop {
            let seg = self.segment(u);
            let dt = du / seg.h;
            if seg.t + dt >= 0.0 {
                return acc + seg.delta(dt);
            }
            acc += seg.delta(-seg.t);
            du += seg.t * seg.h;
            u = un[seg.k];
            if seg.k == 0 {
                return acc + anchor_delta(u, du);
            }
        }
    }

    /// `φ(r)`; radii beyond the grid are rejected.
    pub fn eval(&self, r: f64) -> Result<f64> {
        let r_max = self.grid.r_max();
        if r > r_max * (1.0 + 1e-12) {
            return Err(Error::OutOfRange { r, r_max });
        }
        Ok(self.eval_unchecked(r))
    }

    pub(crate) fn eval_unchecked(&self, r: f64) -> f64 {
        if r <= 0.0 {
            1.0
        } else {
            self.scaled_at(r) * self.envelope.factor(r)
        }
    }

    /// `1 − φ(r)` without cancellation for small `r`.
    pub fn one_minus(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        let g = self.scaled_at(r);
        let e = -self.envelope.exponent_at(r);
        self.one_minus_scaled_log(r.ln()) - g * e.exp_m1()
    }

    /// Leading small-`r` terms `(coefficient, power)` of `1 − φ(r)`.
    pub fn small_r_terms(&self) -> Vec<(f64, f64)> {
        let mut terms = Vec::new();
        if self.envelope.rate != 0.0 {
            terms.push((self.envelope.rate, self.envelope.p));
        }
        if self.anchor.coeff != 0.0 {
            terms.push((self.anchor.coeff, self.anchor.exponent));
        }
        if self.anchor.coeff2 != 0.0 {
            terms.push((self.anchor.coeff2, self.anchor.exponent2));
        }
        terms
    }

    /// Power of `|φ − 1|` fitted by least squares on the three smallest nodes.
    pub fn local_exponent(&self) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .grid
            .nodes()
            .iter()
            .take(3)
            .map(|&r| (r.ln(), self.one_minus(r).abs()))
            .filter(|&(_, y)| y > 0.0)
            .map(|(x, y)| (x, y.ln()))
            .collect();
        slope(&pts)
    }

    /// Grid supremum of `|φ − 1|/r^α` together with its small-`r` limit.
    pub fn kalpha_report(&self, alpha: f64) -> SupReport {
        let grid_sup = self
            .grid
            .nodes()
            .iter()
            .map(|&r| self.one_minus(r).abs() / r.powf(alpha))
            .fold(0.0, f64::max);
        let extrapolated = limit_at_origin(&self.small_r_terms(), &[], alpha);
        SupReport { grid_sup, extrapolated }
    }

    /// `‖φ − 1‖_α`, approximated by the larger of the grid supremum and the limit `r → 0⁺`.
    pub fn kalpha_norm(&self, alpha: f64) -> f64 {
        self.kalpha_report(alpha).value()
    }

    pub fn d_alpha_report(&self, other: &Self, alpha: f64) -> Result<SupReport> {
        if !self.same_grid(other) {
            return Err(Error::GridMismatch);
        }
        let grid_sup = self
            .grid
            .nodes()
            .iter()
            .map(|&r| (other.one_minus(r) - self.one_minus(r)).abs() / r.powf(alpha))
            .fold(0.0, f64::max);
        let extrapolated = limit_at_origin(&self.small_r_terms(), &other.small_r_terms(), alpha);
        Ok(SupReport { grid_sup, extrapolated })
    }

    /// `d_α(φ, ψ) = sup |φ − ψ|/r^α`.
    pub fn d_alpha(&self, other: &Self, alpha: f64) -> Result<f64> {
        Ok(self.d_alpha_report(other, alpha)?.value())
    }
}

fn check_index(p: f64) -> Result<()> {
    if p > 0.0 && p <= 2.0 {
        Ok(())
    } else {
        Err(Error::Domain {
            what: "p",
            value: p,
            domain: "(0, 2]",
        })
    }
}

/// Node slopes `dg/du` from five-point Lagrange stencils, passed through the Hyman filter
/// so each interval stays monotone and within its end values.
fn pchip_slopes(u: &[f64], g: &[f64]) -> Vec<f64> {
    let n = u.len();
    let del: Vec<f64> = (0..n - 1).map(|k| (g[k + 1] - g[k]) / (u[k + 1] - u[k])).collect();
    let width = n.min(5);
    (0..n)
        .map(|j| {
            let start = j.saturating_sub(width / 2).min(n - width);
            let d = stencil_derivative(&u[start..start + width], &g[start..start + width], j - start);
            let (left, right) = (j.checked_sub(1).map(|k| del[k]), del.get(j).copied());
            match (left, right) {
                (Some(l), Some(r)) if l * r <= 0.0 => 0.0,
                (Some(l), Some(r)) => clamp_slope(d, l.abs().min(r.abs()), l.signum()),
                (Some(e), None) | (None, Some(e)) => {
                    if e == 0.0 {
                        0.0
                    } else {
                        clamp_slope(d, e.abs(), e.signum())
                    }
                }
                (None, None) => 0.0,
            }
        })
        .collect()
}

fn clamp_slope(d: f64, bound: f64, sign: f64) -> f64 {
    if d * sign <= 0.0 {
        0.0
    } else {
        sign * (d.abs().min(3.0 * bound))
    }
}

/// Derivative at `x[j]` of the polynomial through all `(x_i, y_i)`.
fn stencil_derivative(x: &[f64], y: &[f64], j: usize) -> f64 {
    let mut d = 0.0;
    for i in 0..x.len() {
        let li = if i == j {
            (0..x.len()).filter(|&m| m != j).map(|m| 1.0 / (x[j] - x[m])).sum::<f64>()
        } else {
            let mut p = 1.0 / (x[i] - x[j]);
            for m in 0..x.len() {
                if m != i && m != j {
                    p *= (x[j] - x[m]) / (x[i] - x[m]);
                }
            }
            p
        };
        d += y[i] * li;
    }
    d
}

/// `lim_{r→0} |Σ_a c r^a − Σ_b c r^b| / r^α` for two power expansions of `1 − φ`.
fn limit_at_origin(a_terms: &[(f64, f64)], b_terms: &[(f64, f64)], alpha: f64) -> f64 {
    let mut powers: Vec<f64> = a_terms.iter().chain(b_terms).map(|t| t.1).collect();
    powers.sort_by(f64::total_cmp);
    powers.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
    let coeff = |terms: &[(f64, f64)], a: f64| -> f64 {
        terms.iter().filter(|t| (t.1 - a).abs() <= 1e-12).map(|t| t.0).sum()
    };
    for a in powers {
        let c = coeff(a_terms, a) - coeff(b_terms, a);
        if c == 0.0 {
            continue;
        }
        return if (a - alpha).abs() <= 1e-12 {
            c.abs()
        } else if a < alpha {
            f64::INFINITY
        } else {
            0.0
        };
    }
    0.0
}

fn slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    slope(&pts)
}

/// Grid supremum and small-radius limit of a ratio; the reported value is their maximum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SupReport {
    pub grid_sup: f64,
    pub extrapolated: f64,
}

impl SupReport {
    pub fn value(&self) -> f64 {
        self.grid_sup.max(self.extrapolated)
    }
}

/// One evaluated inequality `lhs ≤ rhs`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityReport {
    pub check_name: String,
    pub location: String,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub tol: f64,
    pub pass: bool,
}

impl InequalityReport {
    pub fn new(check_name: impl Into<String>, location: impl Into<String>, lhs: f64, rhs: f64, tol: f64) -> Self {
        let margin = rhs - lhs;
        Self {
            check_name: check_name.into(),
            location: location.into(),
            lhs,
            rhs,
            margin,
            tol,
            pass: margin >= -tol && !lhs.is_nan(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PsdReport {
    pub size: usize,
    pub min_eigenvalue: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Smallest eigenvalue of `[φ(|x_i − x_j|)]`. A negative value beyond `tol` proves `φ` is
/// not positive definite; a pass is only evidence.
pub fn psd_check(phi: &RadialCharFn, points: &[[f64; 3]], tol: f64) -> Result<PsdReport> {
    if points.len() > 64 {
        return Err(Error::Domain {
            what: "number of points",
            value: points.len() as f64,
            domain: "[1, 64]",
        });
    }
    let n = points.len();
    let mut m = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = 1.0;
        for j in 0..i {
            let d = (0..3).map(|k| (points[i][k] - points[j][k]).powi(2)).sum::<f64>().sqrt();
            let v = phi.eval(d)?;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    let min_eigenvalue = if n == 0 {
        0.0
    } else {
        SymmetricEigen::new(m).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    };
    Ok(PsdReport {
        size: n,
        min_eigenvalue,
        tol,
        pass: min_eigenvalue >= -tol,
    })
}

/// Evaluates the three pointwise estimates on collinear pairs `ξ = r e`, `η = s e`:
/// the Hölder bound `|φ(ξ)−φ(η)|² ≤ 2‖φ−1‖_α|ξ−η|^α`, the bound
/// `|φ(ξ)−φ(η)| ≤ ‖φ−1‖_α(2√(|ξ|^α|ξ−η|^α) + |ξ−η|^α)` and the midpoint bound
/// `|φ(ξ)+φ(η)−2φ((ξ+η)/2)| ≤ 2‖φ−1‖_α|(ξ−η)/2|^α`.
pub fn check_pointwise_bounds(phi: &RadialCharFn, alpha: f64, samples: &[(f64, f64)], tol: f64) -> Result<Vec<InequalityReport>> {
    let norm = phi.kalpha_norm(alpha);
    let mut out = Vec::with_capacity(3 * samples.len());
    for &(r, s) in samples {
        let (a, b) = (phi.eval(r)?, phi.eval(s)?);
        let mid = phi.eval(0.5 * (r + s))?;
        let d = (r - s).abs();
        let loc = format!("({r}, {s})");
        let diff = (phi.one_minus(s) - phi.one_minus(r)).abs();
        out.push(InequalityReport::new("holder", loc.clone(), diff * diff, 2.0 * norm * d.powf(alpha), tol));
        out.push(InequalityReport::new(
            "morimoto",
            loc.clone(),
            diff,
            norm * (2.0 * (r.powf(alpha) * d.powf(alpha)).sqrt() + d.powf(alpha)),
            tol,
        ));
        out.push(InequalityReport::new(
            "midpoint",
            loc,
            (a + b - 2.0 * mid).abs(),
            2.0 * norm * (0.5 * d).powf(alpha),
            tol,
        ));
    }
    Ok(out)
}

/// `(1/2π²) ∫₀^R A(r) r sinc(v r) dr` with `A = φ·r`, i.e. the radial inverse transform of
/// `φ` truncated at `R`. Panels are the given breaks refined to length `≤ π/(4v)`.
pub fn inverse_radial_truncated(filon: &FilonSine, breaks: &[f64], v: f64, phi: impl Fn(f64) -> f64) -> f64 {
    let c = 1.0 / (2.0 * PI * PI);
    if v == 0.0 {
        let gl = GaussLegendre::new(12);
        let sum: f64 = breaks.windows(2).map(|w| gl.integrate(w[0], w[1], |r| phi(r) * r * r)).sum();
        return c * sum;
    }
    let h = PI / (4.0 * v);
    let fine = cap_panels(breaks, h);
    c / v * filon.integrate(&fine, v, |r| phi(r) * r)
}

/// Bound on the inverse-transform integrand beyond `R`, assuming `|φ| ≤ e^{−ρ r^p}` there.
pub fn envelope_tail_bound(envelope: Envelope, big_r: f64, v: f64, scale: f64) -> f64 {
    let c = scale / (2.0 * PI * PI);
    if envelope.rate == 0.0 {
        return c * big_r.powi(3);
    }
    let upper = |k: f64| {
        let a = (k + 1.0) / envelope.p;
        let x = envelope.rate * big_r.powf(envelope.p);
        gamma(a) * gamma_ur(a, x) / (envelope.p * envelope.rate.powf(a))
    };
    let plain = upper(2.0);
    if v > 0.0 {
        c * plain.min(upper(1.0) / v)
    } else {
        c * plain
    }
}

/// Density `f(v)` whose radial characteristic function is `φ`, for each `v` in `v_nodes`.
pub fn radial_inverse_fourier(phi: &RadialCharFn, v_nodes: &[f64], tol: f64) -> Result<Vec<f64>> {
    let grid = phi.grid();
    let big_r = grid.r_max();
    let g_max = phi.scaled().iter().rev().take(8).fold(0.0f64, |m, g| m.max(g.abs())).max(1e-300);
    let tail_scale = if phi.envelope().rate == 0.0 {
        phi.values()[grid.len() - 1].abs()
    } else {
        g_max
    };
    let mut breaks = vec![0.0];
    breaks.extend_from_slice(grid.nodes());
    let filon = FilonSine::new();
    v_nodes
        .par_iter()
        .map(|&v| {
            let bound = envelope_tail_bound(phi.envelope(), big_r, v.abs(), tail_scale);
            if bound > tol {
                return Err(Error::TailNotNegligible { bound, tol });
            }
            Ok(inverse_radial_truncated(&filon, &breaks, v.abs(), |r| phi.eval_unchecked(r)))
        })
        .collect()
}

/// `(r, φ(r))` rows.
pub fn write_phi_csv<W: Write>(out: W, phi: &RadialCharFn) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["r", "phi"])?;
    for (r, v) in phi.grid().nodes().iter().zip(phi.values()) {
        w.write_record([fmt(*r), fmt(v)])?;
    }
    w.flush()?;
    Ok(())
}

/// `(v, f(v))` rows.
pub fn write_density_csv<W: Write>(out: W, v: &[f64], f: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["v", "f"])?;
    for (a, b) in v.iter().zip(f) {
        w.write_record([fmt(*a), fmt(*b)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_reports_csv<W: Write>(out: W, reports: &[InequalityReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["check_name", "location", "lhs", "rhs", "margin", "pass"])?;
    for r in reports {
        w.write_record([
            r.check_name.clone(),
            r.location.clone(),
            fmt(r.lhs),
            fmt(r.rhs),
            fmt(r.margin),
            r.pass.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Round-trip exact float formatting for CSV cells.
pub fn fmt(x: f64) -> String {
    format!("{x:e}")
}
