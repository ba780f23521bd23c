//! Quadrature building blocks.
//!
//! * [`GaussLegendre`] nodes and weights (Newton iteration on the Legendre recurrence).
//! * [`GradedRule`], a composite Gauss–Legendre rule on `[lo, hi]` under the substitution
//!   `x = lo + (hi - lo) s^m`. With `m` large enough the algebraic endpoint singularity
//!   `(x - lo)^e`, `e > -1`, becomes a bounded integrand in `s`.
//! * [`refine`], which doubles the panel count until the sequence settles or is flagged
//!   divergent.
//! * [`FilonSine`], a Filon-type rule for `∫ A(r) sin(ω r) dr` that integrates a
//!   degree-5 interpolant of the amplitude against the sine exactly.

use num_complex::Complex64;
use std::f64::consts::PI;

#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre order must be positive");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Quadrature point on a graded mesh.
#[derive(Debug, Clone, Copy)]
pub struct Node {
    pub x: f64,
    pub weight: f64,
}

/// Composite Gauss–Legendre rule on `[lo, hi]` with mesh `x_k = lo + (hi - lo)(k/K)^m`.
#[derive(Debug, Clone)]
pub struct GradedRule {
    pub lo: f64,
    pub hi: f64,
    pub panels: usize,
    pub grading: f64,
    points: Vec<Node>,
}

impl GradedRule {
    pub fn new(lo: f64, hi: f64, panels: usize, grading: f64, gl: &GaussLegendre) -> Self {
        assert!(panels >= 1 && grading >= 1.0 && hi > lo);
        let len = hi - lo;
        let ds = 1.0 / panels as f64;
        let mut points = Vec::with_capacity(panels * gl.order());
        for k in 0..panels {
            let s0 = k as f64 * ds;
            for (t, w) in gl.nodes().iter().zip(gl.weights()) {
                let s = s0 + 0.5 * ds * (t + 1.0);
                let x = lo + len * s.powf(grading);
                let jac = len * grading * s.powf(grading - 1.0);
                points.push(Node {
                    x,
                    weight: 0.5 * ds * w * jac,
                });
            }
        }
        Self {
            lo,
            hi,
            panels,
            grading,
            points,
        }
    }

    pub fn points(&self) -> &[Node] {
        &self.points
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.points.iter().map(|p| p.weight * f(p.x)).sum()
    }
}

/// Grading exponent that makes `(x - lo)^e` bounded (and, for `target = 2`, `C¹`) after
/// the substitution `x = lo + L s^m`. Falls back to a steep mesh for `e <= -1`, where the
/// integral diverges and refinement has to expose the growth.
pub fn grading_for_exponent(e: f64, floor: f64) -> f64 {
    let gap = e + 1.0;
    let m = if gap > 0.0 {
        (2.0 / gap).ceil()
    } else if gap < 0.0 {
        (1.0 / -gap).ceil().max(6.0)
    } else {
        12.0
    };
    m.clamp(floor.max(1.0), 40.0)
}

/// Outcome of a refinement sequence.
#[derive(Debug, Clone, PartialEq)]
pub enum Estimate {
    Finite {
        value: f64,
        error: f64,
        converged: bool,
    },
    Divergent {
        partial: f64,
        growth: f64,
    },
}

impl Estimate {
    pub fn finite(&self) -> Option<f64> {
        match self {
            Estimate::Finite { value, .. } => Some(*value),
            Estimate::Divergent { .. } => None,
        }
    }

    pub fn is_divergent(&self) -> bool {
        matches!(self, Estimate::Divergent { .. })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RefinePolicy {
    pub initial_panels: usize,
    pub max_doublings: usize,
    pub tol: f64,
    /// Growth factor of successive increments that counts towards divergence.
    pub growth: f64,
    /// Number of consecutive growing increments that flags divergence.
    pub growth_streak: usize,
}

impl Default for RefinePolicy {
    fn default() -> Self {
        Self {
            initial_panels: 8,
            max_doublings: 9,
            tol: 1e-13,
            growth: 1.5,
            growth_streak: 3,
        }
    }
}

/// Evaluates `level(panels)` for `panels = K0, 2K0, 4K0, ...` until the increments drop
/// below `tol * max(1, |I|)` or `growth_streak` consecutive increments grow by at least
/// `growth` each.
pub fn refine<F: FnMut(usize) -> f64>(policy: &RefinePolicy, mut level: F) -> (Estimate, Vec<f64>) {
    let mut values = vec![level(policy.initial_panels)];
    let mut increments: Vec<f64> = Vec::new();
    let mut streak = 0;
    let mut panels = policy.initial_panels;
    for _ in 0..policy.max_doublings {
        panels *= 2;
        let v = level(panels);
        let d = (v - values[values.len() - 1]).abs();
        values.push(v);
        if !v.is_finite() {
            return (
                Estimate::Divergent {
                    partial: v,
                    growth: f64::INFINITY,
                },
                values,
            );
        }
        if let Some(&prev) = increments.last() {
            if prev > 0.0 && d >= policy.growth * prev {
                streak += 1;
            } else {
                streak = 0;
            }
        }
        increments.push(d);
        if streak >= policy.growth_streak {
            let n = increments.len();
            return (
                Estimate::Divergent {
                    partial: v,
                    growth: increments[n - 1] / increments[n - 2],
                },
                values,
            );
        }
        if d <= policy.tol * v.abs().max(1.0) {
            return (
                Estimate::Finite {
                    value: v,
                    error: d,
                    converged: true,
                },
                values,
            );
        }
    }
    let value = *values.last().unwrap();
    let error = increments.last().copied().unwrap_or(f64::INFINITY);
    let n = increments.len();
    // increments that never shrank: treat as divergence rather than slow convergence
    if n >= 2 && increments[n - 1] >= increments[n - 2] && increments[n - 1] > 1e-6 * value.abs().max(1.0) {
        return (
            Estimate::Divergent {
                partial: value,
                growth: increments[n - 1] / increments[n - 2],
            },
            values,
        );
    }
    (
        Estimate::Finite {
            value,
            error,
            converged: false,
        },
        values,
    )
}

/// Filon-type rule for `∫_a^b A(r) sin(ω r) dr`.
///
/// On each panel the amplitude is interpolated at six Gauss–Legendre points and the
/// resulting quintic is integrated against `e^{iωr}` exactly. Moments
/// `∫_{-1}^{1} x^k e^{iλx} dx` come from the closed-form recurrence when `λ` is large and
/// from a 24-point Gauss rule otherwise.
#[derive(Debug, Clone)]
pub struct FilonSine {
    gl: GaussLegendre,
    moment_rule: GaussLegendre,
    /// Row `k` holds the monomial coefficient `c_k` as a combination of node values.
    to_monomial: Vec<[f64; FILON_POINTS]>,
}

const FILON_POINTS: usize = 6;

impl Default for FilonSine {
    fn default() -> Self {
        Self::new()
    }
}

impl FilonSine {
    pub fn new() -> Self {
        let gl = GaussLegendre::new(FILON_POINTS);
        let n = FILON_POINTS;
        let mut v = nalgebra::DMatrix::<f64>::zeros(n, n);
        for (i, x) in gl.nodes().iter().enumerate() {
            for k in 0..n {
                v[(i, k)] = x.powi(k as i32);
            }
        }
        let inv = v.try_inverse().expect("Vandermonde matrix on Gauss nodes is invertible");
        let to_monomial = (0..n)
            .map(|k| {
                let mut row = [0.0; FILON_POINTS];
                for (i, r) in row.iter_mut().enumerate() {
                    *r = inv[(k, i)];
                }
                row
            })
            .collect();
        Self {
            gl,
            moment_rule: GaussLegendre::new(24),
            to_monomial,
        }
    }

    fn moments(&self, lambda: f64) -> [Complex64; FILON_POINTS] {
        let mut m = [Complex64::new(0.0, 0.0); FILON_POINTS];
        if lambda.abs() >= 8.0 {
            let i = Complex64::new(0.0, 1.0);
            let ep = Complex64::from_polar(1.0, lambda);
            let em = Complex64::from_polar(1.0, -lambda);
            m[0] = Complex64::new(2.0 * lambda.sin() / lambda, 0.0);
            for k in 1..FILON_POINTS {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                let boundary = (ep - em * sign) / (i * lambda);
                m[k] = boundary - m[k - 1] * (k as f64) / (i * lambda);
            }
        } else {
            for (x, w) in self.moment_rule.nodes().iter().zip(self.moment_rule.weights()) {
                let e = Complex64::from_polar(*w, lambda * x);
                let mut xp = 1.0;
                for mk in m.iter_mut() {
                    *mk += e * xp;
                    xp *= x;
                }
            }
        }
        m
    }

    /// Weights `W_i` such that `∫_a^b P(r) sin(ω r) dr = Σ W_i A(r_i)` on a panel of the
    /// given half-width centered at the origin; the phase of the center is applied by the
    /// caller.
    fn panel_weights(&self, half: f64, omega: f64) -> [Complex64; FILON_POINTS] {
        let m = self.moments(omega * half);
        let mut w = [Complex64::new(0.0, 0.0); FILON_POINTS];
        for (k, row) in self.to_monomial.iter().enumerate() {
            for (i, c) in row.iter().enumerate() {
                w[i] += m[k] * (*c * half);
            }
        }
        w
    }

    /// `∫ A(r) sin(ω r) dr` over consecutive panels given by `breaks`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, breaks: &[f64], omega: f64, mut amp: F) -> f64 {
        let mut total = 0.0;
        let mut cached: Option<(f64, [Complex64; FILON_POINTS])> = None;
        for pair in breaks.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if b <= a {
                continue;
            }
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            let weights = match cached {
                Some((h, w)) if (h - half).abs() <= 1e-15 * half => w,
                _ => {
                    let w = self.panel_weights(half, omega);
                    cached = Some((half, w));
                    w
                }
            };
            let mut acc = Complex64::new(0.0, 0.0);
            for (x, w) in self.gl.nodes().iter().zip(weights.iter()) {
                acc += w * amp(mid + half * x);
            }
            total += (Complex64::from_polar(1.0, omega * mid) * acc).im;
        }
        total
    }
}

/// Geometric breakpoints `lo, lo*q, ...` from `start` up to `end`, prefixed by `0`.
pub fn geometric_breaks(start: f64, end: f64, per_decade: usize) -> Vec<f64> {
    let mut out = vec![0.0];
    let q = 10f64.powf(1.0 / per_decade as f64);
    let mut x = start;
    while x < end {
        out.push(x);
        x *= q;
    }
    out.push(end);
    out
}

/// Subdivides every interval of `breaks` so no panel is longer than `h`.
pub fn cap_panels(breaks: &[f64], h: f64) -> Vec<f64> {
    let mut out = vec![breaks[0]];
    for pair in breaks.windows(2) {
        let n = ((pair[1] - pair[0]) / h).ceil().max(1.0) as usize;
        for k in 1..=n {
            out.push(pair[0] + (pair[1] - pair[0]) * k as f64 / n as f64);
        }
    }
    out
}

/// Uniform breakpoints on `[a, b]` with spacing at most `h`.
pub fn uniform_breaks(a: f64, b: f64, h: f64) -> Vec<f64> {
    let n = ((b - a) / h).ceil().max(1.0) as usize;
    (0..=n).map(|k| a + (b - a) * k as f64 / n as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let gl = GaussLegendre::new(8);
        let exact = 2.0 / 15.0; // ∫_{-1}^{1} x^14 dx
        assert!((gl.integrate(-1.0, 1.0, |x| x.powi(14)) - exact).abs() < 1e-15);
        assert!((gl.weights().iter().sum::<f64>() - 2.0).abs() < 1e-14);
        let gl = GaussLegendre::new(7);
        assert_eq!(gl.nodes()[3], 0.0);
        assert!((gl.integrate(0.0, PI, f64::sin) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn graded_rule_handles_inverse_sqrt() {
        let gl = GaussLegendre::new(10);
        let rule = GradedRule::new(0.0, 1.0, 8, grading_for_exponent(-0.5, 1.0), &gl);
        assert!((rule.integrate(|x| x.powf(-0.5)) - 2.0).abs() < 1e-13);
    }

    #[test]
    fn refine_flags_divergence_and_convergence() {
        let gl = GaussLegendre::new(10);
        let policy = RefinePolicy::default();
        let m = grading_for_exponent(-1.1, 1.0);
        let (est, _) = refine(&policy, |k| GradedRule::new(0.0, 1.0, k, m, &gl).integrate(|x| x.powf(-1.1)));
        assert!(est.is_divergent(), "{est:?}");
        let m = grading_for_exponent(-0.9, 1.0);
        let (est, _) = refine(&policy, |k| GradedRule::new(0.0, 1.0, k, m, &gl).integrate(|x| x.powf(-0.9)));
        let v = est.finite().unwrap();
        assert!((v - 10.0).abs() < 1e-9, "{v}");
    }

    #[test]
    fn filon_matches_closed_form() {
        // ∫_0^∞ r e^{-r} sin(v r) dr = 2v / (1 + v^2)^2
        let filon = FilonSine::new();
        for &v in &[0.3, 2.0, 17.0, 50.0] {
            let h = (PI / (4.0 * v)).min(0.25);
            let mut breaks = cap_panels(&geometric_breaks(1e-6, 1.0, 8), h);
            let tail = uniform_breaks(1.0, 40.0, h);
            breaks.extend_from_slice(&tail[1..]);
            let got = filon.integrate(&breaks, v, |r| r * (-r).exp());
            let want = 2.0 * v / (1.0 + v * v).powi(2);
            assert!((got - want).abs() < 1e-12, "v={v}: {got} vs {want}");
        }
    }

    #[test]
    fn filon_large_phase_branch_is_exact_on_quintics() {
        let filon = FilonSine::new();
        let omega = 40.0;
        let breaks = [0.0, 1.0, 2.0];
        let got = filon.integrate(&breaks, omega, |r| r.powi(5) - r);
        let fine = GaussLegendre::new(200);
        let want = fine.integrate(0.0, 2.0, |r| (r.powi(5) - r) * (omega * r).sin());
        assert!((got - want).abs() < 1e-11, "{got} vs {want}");
    }
}
