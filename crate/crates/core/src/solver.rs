//! Time integration of `∂_t φ = ℬ(φ) − δ_p r^p φ` for isotropic characteristic functions.
//!
//! States are stored envelope-scaled, `φ = g·e^{−R(t) r^p}` with `R(t) = ρ₀ + δ_p t`, so the
//! diffusion is carried exactly by the envelope and only the collision term is discretized:
//!
//! ```text
//! ∂_t g = e^{R r^p} ℬ(φ) = F(g) − L g
//! ```
//!
//! With the `gamma2` linear part (bounded cutoff kernels) `L = ‖b‖₁` and `F` is the scaled gain
//! term. With the `loss_rate` linear part (non-cutoff kernels and their truncations) `L` is the
//! diagonal loss rate, frozen over a step, and `F = e^{R r^p}ℬ + L g`; the gain and loss then
//! no longer cancel inside `F`, which keeps the error independent of `‖b_n‖₁`. Both
//! are advanced with exponential integrators (first order: `exp_euler`, second order
//! Runge–Kutta: `exp_heun`). A Picard mode iterates the integral operator
//!
//! ```text
//! 𝒜(φ)(t) = e^{−(γ₂+δ_p r^p)t} φ₀ + ∫₀ᵗ e^{−(γ₂+δ_p r^p)(t−τ)} 𝒢(φ)(τ) dτ
//! ```
//!
//! on contraction windows and glues the windows together.

use crate::charfun::{log_log_slope, psd_check, Envelope, InequalityReport, PsdReport, RadialCharFn};
use crate::collision::{CollisionRule, QuadratureSpec};
use crate::error::{Error, Result};
use crate::kernels::{moment_gamma_alpha, moment_lambda_alpha, moment_mu_alpha, KernelModel};
use crate::levy::norm_sup_on_grid;
use crate::quadrature::Estimate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::LN_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    ExpEuler,
    ExpHeun,
    Picard,
}

/// Which part of the collision term the exponential integrator treats exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LinearPart {
    /// `gamma2` for kernels with `ν < 1`, `loss_rate` otherwise.
    #[default]
    Auto,
    Gamma2,
    LossRate,
}

/// Every tolerance used by the solver and its verification experiments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Slack in `e^{δ_p r^p t}|φ| ≤ 1` and `|φ| ≤ 1`.
    pub growth: f64,
    /// Picard iteration stops once `ρ_T` between sweeps falls below this.
    pub picard: f64,
    /// Allowed excess of a sweep ratio over `2(1 − e^{−γ₂T₀})`.
    pub contraction: f64,
    /// Relative slack in the stability inequality.
    pub stability: f64,
    /// Absolute slack for the norm envelope, time modulus and continuity checks.
    pub envelope: f64,
    pub psd: f64,
    /// `|ℬ(e^{−r²/2})|` at the fixed point.
    pub gaussian: f64,
    pub lambda2: f64,
    /// `|γ₂ − ‖b‖₁|` for cutoff kernels.
    pub gamma2: f64,
    /// Pointwise agreement of `f₂` with the heat kernel.
    pub density: f64,
    /// Relative agreement of `‖W_p‖₁` and of the total mass with their closed forms.
    pub mass: f64,
    /// Relative agreement of the fitted Lévy tail constant.
    pub tail: f64,
    /// Relative agreement of a measured log-log slope.
    pub slope: f64,
    /// `|t − sup (1 − e^{−r^p t})/r^p|`.
    pub norm_identity: f64,
    /// Relative gap `|λ_α − λ_{n,α}|/λ_α` allowed for the finest truncation.
    pub exponent_gap: f64,
    /// Picard fixed point against time stepping, sup norm.
    pub picard_vs_stepping: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            growth: 1e-6,
            picard: 1e-10,
            contraction: 0.05,
            stability: 1e-4,
            envelope: 1e-9,
            psd: 1e-8,
            gaussian: 1e-8,
            lambda2: 1e-12,
            gamma2: 1e-10,
            density: 1e-6,
            mass: 1e-8,
            tail: 0.02,
            slope: 0.05,
            norm_identity: 1e-4,
            exponent_gap: 0.1,
            picard_vs_stepping: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaptivePolicy {
    pub enabled: bool,
    pub grow_after: usize,
    pub grow_factor: f64,
    pub max_halvings: u32,
}

impl Default for AdaptivePolicy {
    fn default() -> Self {
        Self {
            enabled: true,
            grow_after: 10,
            grow_factor: 1.2,
            max_halvings: 24,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PicardSpec {
    /// Window length `T₀`; defaults to `window_fraction · ln2/γ₂`.
    pub window: Option<f64>,
    pub window_fraction: f64,
    /// Time nodes per window for the product trapezoid rule.
    pub time_nodes: usize,
    pub max_sweeps: usize,
}

impl Default for PicardSpec {
    fn default() -> Self {
        Self {
            window: None,
            window_fraction: 0.9,
            time_nodes: 64,
            max_sweeps: 80,
        }
    }
}

/// Parameters of one run. The radial grid is the one carried by the initial datum.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub p: f64,
    pub delta_p: f64,
    /// Index of the space `𝒦^α` used for norms; well-posed runs need `α ≤ p`.
    pub alpha: f64,
    pub kernel: KernelModel,
    /// Initial (and maximal) step.
    pub dt: f64,
    pub scheme: Scheme,
    pub linear_part: LinearPart,
    pub t_final: f64,
    /// Times at which frames are recorded; `t_final` alone when empty.
    pub output_times: Vec<f64>,
    pub truncation_sequence: Vec<u32>,
    pub quadrature: QuadratureSpec,
    pub adaptive: AdaptivePolicy,
    pub picard: PicardSpec,
    pub tolerances: Tolerances,
}

impl SolverConfig {
    pub fn new(p: f64, delta_p: f64, alpha: f64, kernel: KernelModel) -> Self {
        Self {
            p,
            delta_p,
            alpha,
            kernel,
            dt: 0.01,
            scheme: Scheme::ExpHeun,
            linear_part: LinearPart::Auto,
            t_final: 1.0,
            output_times: Vec::new(),
            truncation_sequence: Vec::new(),
            quadrature: QuadratureSpec::default(),
            adaptive: AdaptivePolicy::default(),
            picard: PicardSpec::default(),
            tolerances: Tolerances::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p <= 2.0) {
            return Err(Error::config("p", "must lie in (0, 2]"));
        }
        if !(self.delta_p >= 0.0 && self.delta_p.is_finite()) {
            return Err(Error::config("delta_p", "must be a nonnegative number"));
        }
        if !(self.alpha > 0.0 && self.alpha <= 2.0) {
            return Err(Error::config("alpha", "must lie in (0, 2]"));
        }
        if self.alpha > self.p + 1e-12 {
            return Err(Error::config("alpha", "must not exceed p"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config("dt", "must be positive"));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(Error::config("T_final", "must be positive"));
        }
        let mut last = 0.0;
        for &t in &self.output_times {
            if !(t > last && t <= self.t_final * (1.0 + 1e-12)) {
                return Err(Error::config("outputs", "times must increase within (0, T_final]"));
            }
            last = t;
        }
        if self.truncation_sequence.windows(2).any(|w| w[0] >= w[1]) || self.truncation_sequence.contains(&0) {
            return Err(Error::config("truncation_sequence", "must be positive and strictly increasing"));
        }
        if !(self.adaptive.grow_factor >= 1.0) || self.adaptive.grow_after == 0 {
            return Err(Error::config("adaptive", "grow_factor ≥ 1 and grow_after ≥ 1 required"));
        }
        if self.picard.time_nodes < 2 || !(self.picard.window_fraction > 0.0 && self.picard.window_fraction < 1.0) {
            return Err(Error::config("picard", "time_nodes ≥ 2 and window_fraction in (0, 1) required"));
        }
        self.quadrature.validate()?;
        let needs_gamma2 = self.scheme == Scheme::Picard || self.linear_part == LinearPart::Gamma2;
        if needs_gamma2 && !self.kernel.is_cutoff() {
            return Err(Error::NonCutoff);
        }
        Ok(())
    }

    /// Output times with `t_final` appended when missing.
    pub fn outputs(&self) -> Vec<f64> {
        let mut out = self.output_times.clone();
        if out.last().is_none_or(|&t| (t - self.t_final).abs() > 1e-12 * self.t_final) {
            out.push(self.t_final);
        }
        out
    }
}

/// `n` equally spaced times ending at `t_final`.
pub fn uniform_outputs(t_final: f64, n: usize) -> Vec<f64> {
    (1..=n).map(|k| t_final * k as f64 / n as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepRecord {
    /// Time at the end of the step.
    pub t: f64,
    pub dt: f64,
    pub halvings: u32,
    /// `max_r e^{δ_p r^p t}|φ| − 1`.
    pub growth_margin: f64,
    /// `max_r |φ| − 1`.
    pub char_margin: f64,
    /// `‖φ(t) − 1‖_α`.
    pub kalpha: f64,
}

#[derive(Debug, Clone)]
pub struct EvolutionState {
    pub t: f64,
    pub phi: RadialCharFn,
    pub history: Vec<StepRecord>,
}

#[derive(Debug, Clone)]
pub struct Frame {
    pub t: f64,
    pub phi: RadialCharFn,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRecord {
    pub window: usize,
    pub sweep: usize,
    /// `ρ_{T₀}` between this sweep and the previous one.
    pub distance: f64,
    pub ratio: Option<f64>,
    pub bound: f64,
}

#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub frames: Vec<Frame>,
    pub steps: Vec<StepRecord>,
    pub sweeps: Vec<SweepRecord>,
}

impl Trajectory {
    pub fn last(&self) -> &Frame {
        self.frames.last().expect("trajectory has the initial frame")
    }

    /// Frame recorded at `t`, if any.
    pub fn at(&self, t: f64) -> Option<&Frame> {
        self.frames.iter().find(|f| (f.t - t).abs() <= 1e-12 * t.abs().max(1.0))
    }
}

/// `(1 − e^{−z})/z`.
fn phi1(z: f64) -> f64 {
    if z.abs() < 1e-12 {
        1.0 - 0.5 * z
    } else {
        -(-z).exp_m1() / z
    }
}

/// `(z − 1 + e^{−z})/z²`.
fn phi2(z: f64) -> f64 {
    if z.abs() < 1e-2 {
        0.5 - z / 6.0 + z * z / 24.0 - z * z * z / 120.0 + z * z * z * z / 720.0
    } else {
        (z + (-z).exp_m1()) / (z * z)
    }
}

fn finite(e: Estimate, what: String) -> Result<f64> {
    match e {
        Estimate::Finite { value, .. } => Ok(value),
        Estimate::Divergent { partial, growth } => Err(Error::Divergent { what, partial, growth }),
    }
}

/// A configured run: the θ-quadrature, the base envelope and the recast initial datum.
#[derive(Debug, Clone)]
pub struct Solver {
    config: SolverConfig,
    rule: CollisionRule,
    base: Envelope,
    phi0: RadialCharFn,
}

impl Solver {
    pub fn new(config: SolverConfig, phi0: &RadialCharFn) -> Result<Self> {
        config.validate()?;
        let env = phi0.envelope();
        let base = if env.rate > 0.0 && (env.p - config.p).abs() < 1e-14 {
            Envelope { p: config.p, rate: env.rate }
        } else {
            Envelope { p: config.p, rate: 0.0 }
        };
        let a0 = phi0.anchor().exponent;
        let diffusive = config.delta_p > 0.0 || base.rate > 0.0;
        let anchor = if diffusive { a0.min(config.p) } else { a0 };
        let phi0 = phi0.with_envelope(base, anchor)?;
        let bracket = if diffusive { anchor.min(config.p) } else { anchor }.min(2.0);
        let rule = CollisionRule::new(&config.kernel, &config.quadrature, config.quadrature.panels, bracket);
        Ok(Self {
            config,
            rule,
            base,
            phi0,
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn rule(&self) -> &CollisionRule {
        &self.rule
    }

    /// The initial datum as stored by the solver.
    pub fn initial(&self) -> &RadialCharFn {
        &self.phi0
    }

    /// `γ₂ = ‖b‖₁` as integrated by the θ-rule, for cutoff kernels.
    pub fn gamma2(&self) -> Option<f64> {
        self.config.kernel.is_cutoff().then(|| self.rule.l1())
    }

    /// Picard window `T₀ < ln2/γ₂`.
    pub fn contraction_window(&self) -> Result<f64> {
        let g2 = self.gamma2().ok_or(Error::NonCutoff)?;
        let limit = if g2 > 0.0 { LN_2 / g2 } else { f64::INFINITY };
        match self.config.picard.window {
            Some(w) if w > 0.0 && w < limit => Ok(w),
            Some(_) => Err(Error::config("picard.window", "must lie in (0, ln2/γ₂)")),
            None if limit.is_finite() => Ok(self.config.picard.window_fraction * limit),
            None => Ok(self.config.t_final),
        }
    }

    pub fn initial_state(&self) -> EvolutionState {
        EvolutionState {
            t: 0.0,
            phi: self.phi0.clone(),
            history: Vec::new(),
        }
    }

    fn envelope_at(&self, t: f64) -> Envelope {
        Envelope {
            p: self.config.p,
            rate: self.base.rate + self.config.delta_p * t,
        }
    }

    fn uses_gamma2(&self) -> bool {
        match self.config.linear_part {
            LinearPart::Gamma2 => true,
            LinearPart::LossRate => false,
            LinearPart::Auto => self.config.kernel.singularity_exponent < 1.0,
        }
    }

    /// `(F, L)` at the current state.
    fn forcing(&self, phi: &RadialCharFn) -> (Vec<f64>, Vec<f64>) {
        if self.uses_gamma2() {
            (self.rule.scaled_gain_nodes(phi), vec![self.rule.l1(); phi.scaled().len()])
        } else {
            let lin = self.rule.loss_rate_nodes(phi);
            (self.forcing_with(phi, &lin), lin)
        }
    }

    fn forcing_with(&self, phi: &RadialCharFn, lin: &[f64]) -> Vec<f64> {
        if self.uses_gamma2() {
            return self.rule.scaled_gain_nodes(phi);
        }
        self.rule
            .scaled_bobylev_nodes(phi)
            .into_iter()
            .zip(lin)
            .zip(phi.scaled())
            .map(|((b, l), g)| b + l * g)
            .collect()
    }

    /// One unchecked step of length `dt` with the configured scheme.
    pub fn advance(&self, phi: &RadialCharFn, dt: f64) -> Result<RadialCharFn> {
        let env1 = Envelope {
            p: self.config.p,
            rate: phi.envelope().rate + self.config.delta_p * dt,
        };
        let g = phi.scaled();
        let (f0, lin) = self.forcing(phi);
        let coef: Vec<(f64, f64, f64)> = lin
            .iter()
            .map(|&l| {
                let z = l * dt;
                ((-z).exp(), dt * phi1(z), dt * phi2(z))
            })
            .collect();
        let pred: Vec<f64> = (0..g.len()).map(|i| coef[i].0 * g[i] + coef[i].1 * f0[i]).collect();
        match self.config.scheme {
            Scheme::ExpEuler => phi.with_scaled(pred, env1),
            Scheme::ExpHeun | Scheme::Picard => {
                let f1 = self.forcing_with(&phi.with_scaled(pred, env1)?, &lin);
                let next = (0..g.len())
                    .map(|i| {
                        let (e, a, b) = coef[i];
                        e * g[i] + (a - b) * f0[i] + b * f1[i]
                    })
                    .collect();
                phi.with_scaled(next, env1)
            }
        }
    }

    /// `(max e^{δ_p r^p t}|φ| − 1, max |φ| − 1)` over the nodes.
    pub fn margins(&self, phi: &RadialCharFn, t: f64) -> (f64, f64) {
        let env = phi.envelope();
        let drift = Envelope {
            p: env.p,
            rate: (env.rate - self.config.delta_p * t).max(0.0),
        };
        let mut growth = f64::NEG_INFINITY;
        let mut char_sup = f64::NEG_INFINITY;
        for (&r, &g) in phi.grid().nodes().iter().zip(phi.scaled()) {
            growth = growth.max(g.abs() * drift.factor(r));
            char_sup = char_sup.max(g.abs() * env.factor(r));
        }
        let anchor_ok = phi.anchor().coeff.is_finite() && phi.anchor().coeff2.is_finite();
        if !anchor_ok {
            return (f64::NAN, f64::NAN);
        }
        (growth - 1.0, char_sup - 1.0)
    }

    /// Advances by `dt`, halving on a violated invariant. The returned state may have moved
    /// by less than `dt`; the accepted step length is in its last history record.
    pub fn step(&self, mut state: EvolutionState, dt: f64) -> Result<EvolutionState> {
        let tol = self.config.tolerances.growth;
        let max_halvings = if self.config.adaptive.enabled {
            self.config.adaptive.max_halvings
        } else {
            0
        };
        let mut h = dt;
        let mut reason = String::new();
        for halvings in 0..=max_halvings {
            let next = self.advance(&state.phi, h)?;
            let t = state.t + h;
            let (growth, char_sup) = self.margins(&next, t);
            if growth <= tol && char_sup <= tol {
                state.history.push(StepRecord {
                    t,
                    dt: h,
                    halvings,
                    growth_margin: growth,
                    char_margin: char_sup,
                    kalpha: next.kalpha_norm(self.config.alpha),
                });
                state.t = t;
                state.phi = next;
                return Ok(state);
            }
            reason = format!("growth margin {growth:.3e}, |φ| margin {char_sup:.3e}");
            h *= 0.5;
        }
        Err(Error::StepRejected {
            t: state.t,
            halvings: max_halvings,
            reason,
        })
    }

    /// Steps to every output time, adapting `dt` when enabled.
    pub fn evolve(&self) -> Result<Trajectory> {
        if self.config.scheme == Scheme::Picard {
            return self.picard_solve();
        }
        let dt_max = self.config.dt;
        let mut dt = dt_max;
        let mut clean = 0;
        let mut state = self.initial_state();
        let mut traj = Trajectory {
            frames: vec![Frame {
                t: 0.0,
                phi: self.phi0.clone(),
            }],
            ..Default::default()
        };
        for target in self.config.outputs() {
            while target - state.t > 1e-13 * target.max(1.0) {
                let remaining = target - state.t;
                let h = dt.min(remaining);
                let last_piece = h >= remaining;
                state = self.step(state, h)?;
                let rec = *state.history.last().expect("step recorded");
                if last_piece && rec.halvings == 0 {
                    state.t = target;
                }
                if rec.halvings > 0 {
                    dt = rec.dt;
                    clean = 0;
                } else if !last_piece {
                    clean += 1;
                    if self.config.adaptive.enabled && clean >= self.config.adaptive.grow_after {
                        dt = (dt * self.config.adaptive.grow_factor).min(dt_max);
                        clean = 0;
                    }
                }
            }
            state.t = target;
            traj.frames.push(Frame {
                t: target,
                phi: state.phi.clone(),
            });
        }
        traj.steps = state.history;
        Ok(traj)
    }

    /// Picard iteration of `𝒜` on successive windows of length `T₀`. Each window starts from
    /// the constant-in-`g` iterate and uses the product trapezoid rule in time; frames are
    /// the time nodes of all windows.
    pub fn picard_solve(&self) -> Result<Trajectory> {
        let g2 = self.gamma2().ok_or(Error::NonCutoff)?;
        let window = self.contraction_window()?;
        let tol = self.config.tolerances;
        let m = self.config.picard.time_nodes;
        let mut traj = Trajectory {
            frames: vec![Frame {
                t: 0.0,
                phi: self.phi0.clone(),
            }],
            ..Default::default()
        };
        let mut start = self.phi0.clone();
        let mut t0 = 0.0;
        let mut w = 0;
        while self.config.t_final - t0 > 1e-13 * self.config.t_final.max(1.0) {
            let len = window.min(self.config.t_final - t0);
            let h = len / m as f64;
            let envs: Vec<Envelope> = (0..=m).map(|j| self.envelope_at(t0 + j as f64 * h)).collect();
            let z = g2 * h;
            let (e, a, b) = ((-z).exp(), h * phi1(z), h * phi2(z));
            let bound = 2.0 * (1.0 - (-g2 * len).exp());
            let mut cur: Vec<RadialCharFn> = envs
                .iter()
                .map(|&env| start.with_scaled(start.scaled().to_vec(), env))
                .collect::<Result<_>>()?;
            let gain0 = self.rule.scaled_gain_nodes(&cur[0]);
            let mut prev_distance: Option<f64> = None;
            let mut converged = false;
            for sweep in 1..=self.config.picard.max_sweeps {
                let mut gains: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
                gains.push(gain0.clone());
                gains.extend(cur[1..].par_iter().map(|phi| self.rule.scaled_gain_nodes(phi)).collect::<Vec<_>>());
                let mut next = Vec::with_capacity(m + 1);
                next.push(cur[0].clone());
                let mut g = cur[0].scaled().to_vec();
                for j in 0..m {
                    for i in 0..g.len() {
                        g[i] = e * g[i] + (a - b) * gains[j][i] + b * gains[j + 1][i];
                    }
                    next.push(cur[0].with_scaled(g.clone(), envs[j + 1])?);
                }
                let mut distance = 0.0_f64;
                for (x, y) in next.iter().zip(&cur) {
                    distance = distance.max(x.d_alpha(y, self.config.alpha)?);
                }
                let ratio = prev_distance.map(|d| distance / d);
                traj.sweeps.push(SweepRecord {
                    window: w,
                    sweep,
                    distance,
                    ratio,
                    bound,
                });
                if let (Some(r), Some(d)) = (ratio, prev_distance) {
                    if d > 1e3 * tol.picard && r > bound + tol.contraction {
                        return Err(Error::ContractionViolated { ratio: r, bound });
                    }
                }
                cur = next;
                if distance < tol.picard {
                    converged = true;
                    break;
                }
                prev_distance = Some(distance);
            }
            if !converged {
                let last = traj.sweeps.last().map_or(f64::NAN, |s| s.distance);
                return Err(Error::Divergent {
                    what: format!("Picard iteration on window {w}"),
                    partial: last,
                    growth: traj.sweeps.last().and_then(|s| s.ratio).unwrap_or(f64::NAN),
                });
            }
            for (j, phi) in cur.iter().enumerate().skip(1) {
                let t = t0 + j as f64 * h;
                let (growth_margin, char_margin) = self.margins(phi, t);
                traj.steps.push(StepRecord {
                    t,
                    dt: h,
                    halvings: 0,
                    growth_margin,
                    char_margin,
                    kalpha: phi.kalpha_norm(self.config.alpha),
                });
                traj.frames.push(Frame { t, phi: phi.clone() });
            }
            start = cur.pop().expect("window has nodes");
            t0 += len;
            w += 1;
        }
        Ok(traj)
    }

    /// `μ_α` of the run's kernel.
    pub fn mu_alpha(&self) -> Result<f64> {
        let a = self.config.alpha;
        finite(moment_mu_alpha(&self.config.kernel, a)?, format!("mu_{a}"))
    }

    /// Per-frame and per-step report bundle: growth margin, norm envelope, time modulus,
    /// positive-definiteness spot checks and, for cutoff kernels, continuity of `ℬ` in time.
    pub fn diagnostics(&self, traj: &Trajectory, seed: u64) -> Result<Diagnostics> {
        let cfg = &self.config;
        let (p, a, d) = (cfg.p, cfg.alpha, cfg.delta_p);
        let tol = cfg.tolerances;
        let mu = self.mu_alpha()?;
        let norm0 = self.phi0.kalpha_norm(a);
        let envelope = |t: f64| (5.0 * mu * t).exp() * (norm0 + (d * t).powf(a / p));
        let mut rows = Vec::with_capacity(traj.frames.len());
        let mut reports = Vec::new();
        for f in &traj.frames {
            let (growth, _) = self.margins(&f.phi, f.t);
            let kalpha = f.phi.kalpha_norm(a);
            let env = envelope(f.t);
            rows.push(DiagnosticsRow {
                t: f.t,
                growth_margin: growth,
                kalpha,
                envelope: env,
                envelope_ratio: kalpha / env,
            });
            let loc = format!("t={}", f.t);
            reports.push(InequalityReport::new("max_growth", loc.clone(), 1.0 + growth, 1.0, tol.growth));
            reports.push(InequalityReport::new("norm_envelope", loc, kalpha, env, tol.envelope));
        }
        for s in &traj.steps {
            reports.push(InequalityReport::new(
                "norm_envelope_step",
                format!("t={}", s.t),
                s.kalpha,
                envelope(s.t),
                tol.envelope,
            ));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = traj.frames.len();
        if n >= 2 {
            let big_t = traj.last().t;
            let c_t = 10.0 * mu * (5.0 * mu * big_t).exp() * (norm0 + (d * big_t).powf(a / p));
            for _ in 0..MODULUS_PAIRS {
                let i = rng.random_range(0..n);
                let mut j = rng.random_range(0..n - 1);
                if j >= i {
                    j += 1;
                }
                let (fs, ft) = (&traj.frames[i.min(j)], &traj.frames[i.max(j)]);
                let lhs = ft.phi.d_alpha(&fs.phi, a)?;
                let gap = (ft.t - fs.t).powf(a / p);
                let rhs = gap * (d.powf(a / p) + c_t * big_t.powf(1.0 - a / p));
                reports.push(InequalityReport::new(
                    "time_modulus",
                    format!("s={},t={}", fs.t, ft.t),
                    lhs,
                    rhs,
                    tol.envelope,
                ));
            }
        }

        let last = &traj.last().phi;
        let psd = (0..PSD_SETS)
            .map(|_| {
                let pts: Vec<[f64; 3]> = (0..PSD_POINTS)
                    .map(|_| {
                        [
                            rng.random_range(-PSD_HALF_WIDTH..PSD_HALF_WIDTH),
                            rng.random_range(-PSD_HALF_WIDTH..PSD_HALF_WIDTH),
                            rng.random_range(-PSD_HALF_WIDTH..PSD_HALF_WIDTH),
                        ]
                    })
                    .collect();
                psd_check(last, &pts, tol.psd)
            })
            .collect::<Result<Vec<_>>>()?;

        if let Some(g2) = self.gamma2() {
            let ga = finite(moment_gamma_alpha(&cfg.kernel, a)?, format!("gamma_{a}"))?;
            let nodes = last.grid().nodes();
            let collision = |phi: &RadialCharFn| -> Vec<f64> {
                let env = phi.envelope();
                self.rule
                    .scaled_bobylev_nodes(phi)
                    .into_iter()
                    .zip(nodes)
                    .map(|(b, &r)| b * env.factor(r))
                    .collect()
            };
            let values: Vec<Vec<f64>> = traj.frames.iter().map(|f| collision(&f.phi)).collect();
            for k in 1..n {
                let lhs = nodes
                    .iter()
                    .enumerate()
                    .map(|(i, &r)| (values[k][i] - values[k - 1][i]).abs() / r.powf(a))
                    .fold(0.0, f64::max);
                let rhs = (ga + g2) * traj.frames[k].phi.d_alpha(&traj.frames[k - 1].phi, a)?;
                reports.push(InequalityReport::new(
                    "collision_continuity",
                    format!("t={}", traj.frames[k].t),
                    lhs,
                    rhs,
                    tol.envelope,
                ));
            }
        }
        Ok(Diagnostics { rows, reports, psd })
    }
}

const MODULUS_PAIRS: usize = 50;
const PSD_SETS: usize = 8;
const PSD_POINTS: usize = 6;
const PSD_HALF_WIDTH: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiagnosticsRow {
    pub t: f64,
    pub growth_margin: f64,
    pub kalpha: f64,
    /// `e^{5μ_α t}[‖φ₀ − 1‖_α + (δ_p t)^{α/p}]`.
    pub envelope: f64,
    pub envelope_ratio: f64,
}

#[derive(Debug, Clone)]
pub struct Diagnostics {
    pub rows: Vec<DiagnosticsRow>,
    pub reports: Vec<InequalityReport>,
    pub psd: Vec<PsdReport>,
}

impl Diagnostics {
    pub fn pass(&self) -> bool {
        self.reports.iter().all(|r| r.pass) && self.psd.iter().all(|r| r.pass)
    }

    pub fn failures(&self) -> Vec<&InequalityReport> {
        self.reports.iter().filter(|r| !r.pass).collect()
    }
}

/// `φ` re-expressed against the base envelope, i.e. `e^{δ_p r^p t}φ(r, t)`.
fn undo_diffusion(solver: &Solver, phi: &RadialCharFn) -> Result<RadialCharFn> {
    phi.with_scaled(phi.scaled().to_vec(), solver.base)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityRow {
    pub t: f64,
    /// `sup_r e^{δ_p r^p t}|φ − ψ|/r^α`.
    pub lhs: f64,
    pub lhs_grid: f64,
    pub lhs_limit: f64,
    /// `e^{λ_α t} d_α(φ₀, ψ₀)`.
    pub rhs: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilitySeries {
    pub lambda_alpha: f64,
    pub d0: f64,
    pub rows: Vec<StabilityRow>,
}

impl StabilitySeries {
    pub fn pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn reports(&self, tol: f64) -> Vec<InequalityReport> {
        self.rows
            .iter()
            .map(|r| InequalityReport::new("stability", format!("t={}", r.t), r.lhs, r.rhs * (1.0 + tol), 0.0))
            .collect()
    }
}

/// Evolves both data and compares `sup_r e^{δ_p r^p t}|φ − ψ|/r^α` with `e^{λ_α t}d_α(φ₀, ψ₀)`.
pub fn stability_experiment(config: &SolverConfig, phi0: &RadialCharFn, psi0: &RadialCharFn) -> Result<StabilitySeries> {
    if !phi0.same_grid(psi0) {
        return Err(Error::GridMismatch);
    }
    let a = config.alpha;
    let lambda = finite(moment_lambda_alpha(&config.kernel, a)?, format!("lambda_{a}"))?;
    let sa = Solver::new(config.clone(), phi0)?;
    let sb = Solver::new(config.clone(), psi0)?;
    let (ta, tb) = rayon::join(|| sa.evolve(), || sb.evolve());
    let (ta, tb) = (ta?, tb?);
    let mut rows = Vec::with_capacity(ta.frames.len());
    let mut d0 = f64::NAN;
    for (fa, fb) in ta.frames.iter().zip(&tb.frames) {
        let rep = undo_diffusion(&sa, &fa.phi)?.d_alpha_report(&undo_diffusion(&sb, &fb.phi)?, a)?;
        if fa.t == 0.0 {
            d0 = rep.value();
        }
        let rhs = (lambda * fa.t).exp() * d0;
        let lhs = rep.value();
        rows.push(StabilityRow {
            t: fa.t,
            lhs,
            lhs_grid: rep.grid_sup,
            lhs_limit: rep.extrapolated,
            rhs,
            pass: lhs <= rhs * (1.0 + config.tolerances.stability),
        });
    }
    Ok(StabilitySeries {
        lambda_alpha: lambda,
        d0,
        rows,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct NonexistenceProbe {
    pub r_min: Vec<f64>,
    pub sup: Vec<f64>,
    pub slope: Option<f64>,
    /// `−(α − p)` when `α > p`, otherwise `0`.
    pub expected_slope: f64,
}

/// Grid suprema of `(1 − e^{−δ_p r^p t})/r^α` over `[r_min, r_max]` for shrinking `r_min`.
pub fn nonexistence_probe(
    p: f64,
    alpha: f64,
    delta_p: f64,
    t: f64,
    r_min_sequence: &[f64],
    r_max: f64,
    nodes_per_decade: usize,
) -> Result<NonexistenceProbe> {
    if !(p > 0.0 && p <= 2.0) {
        return Err(Error::config("p", "must lie in (0, 2]"));
    }
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(Error::config("alpha", "must lie in (0, 2]"));
    }
    if !(delta_p > 0.0 && t > 0.0) {
        return Err(Error::config("delta_p", "delta_p and t must be positive"));
    }
    let sup: Vec<f64> = r_min_sequence
        .iter()
        .map(|&r0| {
            let decades = (r_max / r0).log10().ceil().max(1.0) as usize;
            norm_sup_on_grid(p, delta_p * t, alpha, r0, r_max, decades * nodes_per_decade + 1)
        })
        .collect();
    Ok(NonexistenceProbe {
        slope: log_log_slope(r_min_sequence, &sup),
        r_min: r_min_sequence.to_vec(),
        sup,
        expected_slope: if alpha > p { p - alpha } else { 0.0 },
    })
}

#[derive(Debug, Clone)]
pub struct ContinuationMember {
    pub n: u32,
    /// `γ_{n,α} − ‖b_n‖₁`.
    pub exponent: f64,
    pub trajectory: Trajectory,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CauchyRow {
    pub n_coarse: u32,
    pub n_fine: u32,
    /// `max_{r,t} |φ_{n_fine} − φ_{n_coarse}|` over the output frames.
    pub sup_diff: f64,
    /// Previous difference divided by this one.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Continuation {
    pub members: Vec<ContinuationMember>,
    pub table: Vec<CauchyRow>,
    pub lambda_alpha: f64,
    /// Richardson-extrapolated node values `φ(r_i, T_final)` from the last two members.
    pub limit: Option<Vec<f64>>,
}

impl Continuation {
    /// Differences strictly decrease along the table.
    pub fn is_cauchy(&self) -> bool {
        self.table.windows(2).all(|w| w[1].sup_diff < w[0].sup_diff)
    }

    pub fn exponents_increase(&self) -> bool {
        self.members.windows(2).all(|w| w[1].exponent > w[0].exponent)
    }

    /// `|λ_α − λ_{n,α}|/λ_α` for the finest member.
    pub fn exponent_gap(&self) -> Option<f64> {
        self.members.last().map(|m| (self.lambda_alpha - m.exponent).abs() / self.lambda_alpha.abs())
    }
}

/// Member kernel for truncation index `n`; an already truncated kernel keeps the narrower support.
fn member_kernel(kernel: &KernelModel, n: u32) -> KernelModel {
    match kernel.truncation {
        Some(t) if t.n <= n => kernel.clone(),
        Some(t) => kernel.truncate(n, t.cap),
        None => kernel.truncate(n, false),
    }
}

/// Solves with each `b_n` of the truncation sequence and tabulates successive differences.
pub fn cutoff_continuation(config: &SolverConfig, phi0: &RadialCharFn) -> Result<Continuation> {
    if config.truncation_sequence.len() < 2 {
        return Err(Error::config("truncation_sequence", "needs at least two members"));
    }
    let a = config.alpha;
    let lambda_alpha = finite(moment_lambda_alpha(&config.kernel, a)?, format!("lambda_{a}"))?;
    let members = config
        .truncation_sequence
        .par_iter()
        .map(|&n| {
            let kernel = member_kernel(&config.kernel, n);
            let exponent = finite(moment_lambda_alpha(&kernel, a)?, format!("lambda_{a} of b_{n}"))?;
            let cfg = SolverConfig {
                kernel,
                scheme: if config.scheme == Scheme::Picard {
                    Scheme::ExpHeun
                } else {
                    config.scheme
                },
                ..config.clone()
            };
            let trajectory = Solver::new(cfg, phi0)?.evolve()?;
            Ok(ContinuationMember { n, exponent, trajectory })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut table: Vec<CauchyRow> = Vec::with_capacity(members.len() - 1);
    for w in members.windows(2) {
        let sup_diff = sup_difference(&w[0].trajectory, &w[1].trajectory);
        let ratio = table.last().map(|r| r.sup_diff / sup_diff);
        table.push(CauchyRow {
            n_coarse: w[0].n,
            n_fine: w[1].n,
            sup_diff,
            ratio,
        });
    }
    let limit = richardson(&members, &table);
    Ok(Continuation {
        members,
        table,
        lambda_alpha,
        limit,
    })
}

/// `max_{frames, nodes} |φ_a − φ_b|`.
pub fn sup_difference(a: &Trajectory, b: &Trajectory) -> f64 {
    a.frames
        .iter()
        .zip(&b.frames)
        .flat_map(|(fa, fb)| {
            let (va, vb) = (fa.phi.values(), fb.phi.values());
            va.into_iter().zip(vb).map(|(x, y)| (x - y).abs()).collect::<Vec<_>>()
        })
        .fold(0.0, f64::max)
}

fn richardson(members: &[ContinuationMember], table: &[CauchyRow]) -> Option<Vec<f64>> {
    let q = table.last()?.ratio?;
    if !(q > 1.0) {
        return None;
    }
    let fine = members[members.len() - 1].trajectory.last().phi.values();
    let coarse = members[members.len() - 2].trajectory.last().phi.values();
    Some(fine.iter().zip(&coarse).map(|(f, c)| f + (f - c) / (q - 1.0)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charfun::RadialGrid;
    use std::sync::Arc;

    fn grid() -> Arc<RadialGrid> {
        Arc::new(RadialGrid::layout(1e-4, 1e2, 96, 8).unwrap())
    }

    fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn etd_weights() {
        for z in [1e-8, 1e-3, 0.5, 3.0] {
            assert!((phi1(z) - (1.0 - (-z).exp()) / z).abs() < 1e-8);
            let direct = (z - 1.0 + (-z).exp()) / (z * z);
            if z > 1e-3 {
                assert!((phi2(z) - direct).abs() < 1e-12);
            }
        }
        assert!((phi2(0.00999) - phi2(0.01001)).abs() < 1e-5);
    }

    #[test]
    fn gaussian_is_fixed() {
        let g = grid();
        let phi0 = RadialCharFn::gaussian(g, 0.5).unwrap();
        for kernel in [KernelModel::constant(1.0), KernelModel::maxwellian(1.0)] {
            let cfg = SolverConfig {
                t_final: 0.05,
                ..SolverConfig::new(2.0, 0.0, 1.0, kernel)
            };
            let solver = Solver::new(cfg, &phi0).unwrap();
            let traj = solver.evolve().unwrap();
            assert!(max_abs_diff(&traj.last().phi.values(), &phi0.values()) < 1e-8);
        }
    }

    #[test]
    fn one_stays_one() {
        let phi0 = RadialCharFn::one(grid());
        let cfg = SolverConfig {
            t_final: 0.1,
            ..SolverConfig::new(2.0, 0.0, 1.0, KernelModel::constant(1.0))
        };
        let traj = Solver::new(cfg, &phi0).unwrap().evolve().unwrap();
        assert!(traj.last().phi.values().iter().all(|v| (v - 1.0).abs() < 1e-14));
    }

    #[test]
    fn pure_diffusion_is_exact() {
        let g = grid();
        let phi0 = RadialCharFn::levy(g.clone(), 1.0, 1.0).unwrap();
        for scheme in [Scheme::ExpEuler, Scheme::ExpHeun] {
            let cfg = SolverConfig {
                scheme,
                t_final: 0.7,
                output_times: vec![0.3, 0.7],
                ..SolverConfig::new(1.0, 1.0, 1.0, KernelModel::constant(0.0))
            };
            let traj = Solver::new(cfg, &phi0).unwrap().evolve().unwrap();
            for f in &traj.frames {
                let exact: Vec<f64> = g.nodes().iter().map(|&r| (-r * (1.0 + f.t)).exp()).collect();
                assert!(max_abs_diff(&f.phi.values(), &exact) < 1e-10);
            }
        }
    }

    #[test]
    fn mismatched_envelope_is_recast() {
        let g = grid();
        let phi0 = RadialCharFn::levy(g.clone(), 1.0, 1.0).unwrap();
        let cfg = SolverConfig {
            t_final: 0.5,
            ..SolverConfig::new(2.0, 1.0, 1.0, KernelModel::constant(0.0))
        };
        let traj = Solver::new(cfg, &phi0).unwrap().evolve().unwrap();
        let exact: Vec<f64> = g.nodes().iter().map(|&r| (-r - 0.5 * r * r).exp()).collect();
        assert!(max_abs_diff(&traj.last().phi.values(), &exact) < 1e-10);
    }

    #[test]
    fn max_growth_holds_with_collisions() {
        let phi0 = RadialCharFn::levy(grid(), 1.0, 1.0).unwrap();
        let cfg = SolverConfig {
            t_final: 0.5,
            output_times: uniform_outputs(0.5, 5),
            ..SolverConfig::new(2.0, 1.0, 1.0, KernelModel::constant(1.0))
        };
        let traj = Solver::new(cfg, &phi0).unwrap().evolve().unwrap();
        assert!(traj.steps.iter().all(|s| s.growth_margin <= 1e-6 && s.char_margin <= 1e-6));
    }

    #[test]
    fn picard_gaussian_converges_at_once() {
        let phi0 = RadialCharFn::gaussian(grid(), 0.5).unwrap();
        let cfg = SolverConfig {
            scheme: Scheme::Picard,
            ..SolverConfig::new(2.0, 0.0, 1.0, KernelModel::constant(1.0))
        };
        let solver = Solver::new(cfg, &phi0).unwrap();
        let t0 = solver.contraction_window().unwrap();
        let cfg = SolverConfig {
            t_final: t0,
            ..solver.config().clone()
        };
        let traj = Solver::new(cfg, &phi0).unwrap().picard_solve().unwrap();
        assert_eq!(traj.sweeps.len(), 1);
    }

    #[test]
    fn picard_requires_cutoff() {
        let phi0 = RadialCharFn::levy(grid(), 1.0, 1.0).unwrap();
        let cfg = SolverConfig {
            scheme: Scheme::Picard,
            ..SolverConfig::new(1.0, 1.0, 1.0, KernelModel::maxwellian(1.0))
        };
        assert!(matches!(Solver::new(cfg, &phi0), Err(Error::NonCutoff)));
    }

    #[test]
    fn config_rejects_alpha_above_p() {
        let cfg = SolverConfig::new(1.0, 1.0, 1.5, KernelModel::constant(1.0));
        assert!(matches!(cfg.validate(), Err(Error::Config { path, .. }) if path == "alpha"));
    }

    #[test]
    fn cutoff_member_keeps_narrower_support() {
        let k = KernelModel::maxwellian(1.0).truncate(4, false);
        assert_eq!(member_kernel(&k, 8), k);
        assert_eq!(member_kernel(&k, 2).truncation.unwrap().n, 2);
    }

    #[test]
    fn nonexistence_slope() {
        let seq: Vec<f64> = (1..=6).map(|k| 10f64.powi(-k)).collect();
        let probe = nonexistence_probe(1.0, 1.5, 1.0, 1.0, &seq, 10.0, 16).unwrap();
        let s = probe.slope.unwrap();
        assert!((s + 0.5).abs() <= 0.05 * 0.5, "slope {s}");
        let flat = nonexistence_probe(1.0, 1.0, 1.0, 1.0, &seq, 10.0, 16).unwrap();
        assert!((flat.sup.last().unwrap() - 1.0).abs() < 1e-4);
        assert!(flat.sup.windows(2).all(|w| w[1] >= w[0] && w[1] <= 1.0));
    }
}
