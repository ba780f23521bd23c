//! Configuration-driven experiments writing CSV and JSON artifacts.
//!
//! One JSON document configures every command; each command reads the shared physical
//! parameters plus its own section and ignores the rest. Every CSV gets a
//! `<name>.csv.json` sidecar holding the command, seed and full configuration that
//! produced it. Each run also writes `reports.csv` with every evaluated check and
//! `failures.json` listing the failed ones.

use crate::charfun::{fmt, write_density_csv, write_reports_csv, GridSpec, InequalityReport, RadialCharFn, RadialGrid};
use crate::collision::{bobylev_isotropic, verify_operator_bound, QuadratureSpec};
use crate::error::{Error, Result};
use crate::kernels::{moment_gamma_alpha, moment_lambda_alpha, KernelModel, KernelSpec, MomentConstants};
use crate::levy::{
    fit_tail_constant, tail_constant, total_mass, wp_l1_norm, wp_l1_norm_closed_form, DensityEvaluator, LevyParams,
    norm_sup_on_grid,
};
use crate::quadrature::Estimate;
use crate::solver::{
    cutoff_continuation, nonexistence_probe, stability_experiment, sup_difference, uniform_outputs, AdaptivePolicy,
    LinearPart, PicardSpec, Scheme, Solver, SolverConfig, Tolerances, Trajectory,
};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::f64::consts::{LN_2, PI};
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

/// Environment variable that overrides `--out`.
pub const OUT_DIR_ENV: &str = "BOBYLEV_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Constants,
    Levy,
    Collide,
    Evolve,
    Stability,
    Continuation,
    Nonexist,
    VerifyAll,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Constants => "constants",
            Command::Levy => "levy",
            Command::Collide => "collide",
            Command::Evolve => "evolve",
            Command::Stability => "stability",
            Command::Continuation => "continuation",
            Command::Nonexist => "nonexist",
            Command::VerifyAll => "verify-all",
        }
    }
}

/// Initial datum presets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum Initial {
    /// `e^{−r^p t}`; `p` defaults to the run's `p`.
    #[serde(alias = "levy")]
    WP {
        #[serde(default)]
        p: Option<f64>,
        t: f64,
    },
    /// `e^{−c r²}`.
    Gaussian { c: f64 },
    Mixture { members: Vec<MixtureMember> },
    /// Two-column CSV `r,phi`; its radii replace the configured grid.
    File {
        path: PathBuf,
        #[serde(default)]
        anchor_exponent: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureMember {
    pub weight: f64,
    pub p: f64,
    pub t: f64,
}

impl Default for Initial {
    fn default() -> Self {
        Initial::WP { p: None, t: 1.0 }
    }
}

impl Initial {
    fn build(&self, grid: &Arc<RadialGrid>, p: f64, path: &str) -> Result<RadialCharFn> {
        let wrap = |e: Error| match e {
            Error::Domain { what, domain, .. } => Error::config(path, format!("{what} must lie in {domain}")),
            Error::Config { path: sub, message } => {
                Error::config(format!("{path}.{}", sub.rsplit('.').next().unwrap_or(&sub)), message)
            }
            other => other,
        };
        match self {
            Initial::WP { p: q, t } => RadialCharFn::levy(grid.clone(), q.unwrap_or(p), *t).map_err(wrap),
            Initial::Gaussian { c } => RadialCharFn::gaussian(grid.clone(), *c).map_err(wrap),
            Initial::Mixture { members } => {
                let m: Vec<_> = members.iter().map(|m| (m.weight, m.p, m.t)).collect();
                RadialCharFn::mixture(grid.clone(), &m).map_err(wrap)
            }
            Initial::File { path: file, anchor_exponent } => {
                let (nodes, values) = read_phi_csv(file, path)?;
                if nodes != grid.nodes() {
                    return Err(Error::config(path, "file radii differ from the run grid"));
                }
                RadialCharFn::from_values(grid.clone(), values, anchor_exponent.unwrap_or(p)).map_err(wrap)
            }
        }
    }
}

fn read_phi_csv(file: &Path, path: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut reader =
        csv::Reader::from_path(file).map_err(|e| Error::config(format!("{path}.path"), e.to_string()))?;
    let mut nodes = Vec::new();
    let mut values = Vec::new();
    for (i, rec) in reader.deserialize::<(f64, f64)>().enumerate() {
        let (r, v) = rec.map_err(|e| Error::config(format!("{path}.path"), format!("row {}: {e}", i + 1)))?;
        nodes.push(r);
        values.push(v);
    }
    Ok((nodes, values))
}

/// Output times: explicit `times` or `count` uniform times ending at `T_final`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    #[serde(default)]
    pub times: Option<Vec<f64>>,
    #[serde(default)]
    pub count: Option<usize>,
}

impl Default for Outputs {
    fn default() -> Self {
        Self {
            times: None,
            count: Some(10),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConstantsSection {
    pub alphas: Vec<f64>,
}

impl Default for ConstantsSection {
    fn default() -> Self {
        Self {
            alphas: vec![0.5, 1.0, 1.5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LevySection {
    pub p: Vec<f64>,
    pub t: f64,
    /// Density CSV on `v_nodes` equally spaced points of `[0, v_max]`.
    pub v_max: f64,
    pub v_nodes: usize,
    /// Start of the radius window on which the tail constant of `|v|^{3+p} f_p` is fitted.
    pub tail_v: f64,
    /// Radius beyond which the mass integral switches to the tail series.
    pub mass_radius: f64,
}

impl Default for LevySection {
    fn default() -> Self {
        Self {
            p: vec![0.5, 1.0, 1.5, 2.0],
            t: 1.0,
            v_max: 10.0,
            v_nodes: 20,
            tail_v: 50.0,
            mass_radius: 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CollideSection {
    /// Indices for the operator bound.
    pub alphas: Vec<f64>,
    /// Radii for the operator bound; dyadic `2^{−4} … 2^4` by default.
    pub r_samples: Vec<f64>,
    /// Log-spaced radii of the `(r, ℬ(φ))` table.
    pub table_nodes: usize,
    pub table_r_min: f64,
    pub table_r_max: f64,
}

impl Default for CollideSection {
    fn default() -> Self {
        Self {
            alphas: vec![0.8, 1.0],
            r_samples: (-4..=4).map(|k| 2f64.powi(k)).collect(),
            table_nodes: 32,
            table_r_min: 1e-3,
            table_r_max: 1e2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NonexistSection {
    pub p: f64,
    pub alpha: f64,
    pub delta_p: f64,
    pub t: f64,
    pub r_min: Vec<f64>,
    pub r_max: f64,
    pub nodes_per_decade: usize,
    /// Exponents `p` for which `sup (1 − e^{−r^p t})/r^p` is compared with `t`.
    pub identity_p: Vec<f64>,
    pub identity_r_min: f64,
}

impl Default for NonexistSection {
    fn default() -> Self {
        Self {
            p: 1.0,
            alpha: 1.5,
            delta_p: 1.0,
            t: 1.0,
            r_min: vec![1e-2, 1e-3, 1e-4, 1e-5, 1e-6],
            r_max: 10.0,
            nodes_per_decade: 50,
            identity_p: vec![1.0, 1.5, 2.0],
            identity_r_min: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilitySection {
    /// Also evolve `φ₀` against itself and require a zero difference.
    pub uniqueness: bool,
}

impl Default for StabilitySection {
    fn default() -> Self {
        Self { uniqueness: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContinuationSection {
    /// Also step the untruncated kernel directly and compare.
    pub direct: bool,
}

impl Default for ContinuationSection {
    fn default() -> Self {
        Self { direct: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolveSection {
    /// For the Picard scheme, rerun the first window with `exp_heun` on the same time
    /// nodes and compare at its end.
    pub compare_stepping: bool,
}

impl Default for EvolveSection {
    fn default() -> Self {
        Self { compare_stepping: true }
    }
}

/// The whole run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Params {
    pub p: f64,
    pub delta_p: f64,
    pub alpha: f64,
    pub kernel: KernelSpec,
    pub grid: GridSpec,
    pub scheme: Scheme,
    pub linear_part: LinearPart,
    pub dt: f64,
    #[serde(rename = "T_final")]
    pub t_final: f64,
    pub initial: Initial,
    /// Second datum for `stability`; `W_p(·, 1.2)` when absent.
    pub psi: Option<Initial>,
    pub outputs: Outputs,
    pub truncation_sequence: Vec<u32>,
    pub quadrature: QuadratureSpec,
    pub adaptive: AdaptivePolicy,
    pub picard: PicardSpec,
    pub tolerances: Tolerances,
    pub constants: ConstantsSection,
    pub levy: LevySection,
    pub collide: CollideSection,
    pub evolve: EvolveSection,
    pub stability: StabilitySection,
    pub continuation: ContinuationSection,
    pub nonexist: NonexistSection,
    pub seed: u64,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            p: 1.0,
            delta_p: 1.0,
            alpha: 1.0,
            kernel: KernelSpec::from_model(&KernelModel::constant(1.0)),
            grid: GridSpec::default(),
            scheme: Scheme::ExpHeun,
            linear_part: LinearPart::Auto,
            dt: 0.01,
            t_final: 1.0,
            initial: Initial::default(),
            psi: None,
            outputs: Outputs::default(),
            truncation_sequence: vec![4, 8, 16, 32],
            quadrature: QuadratureSpec::default(),
            adaptive: AdaptivePolicy::default(),
            picard: PicardSpec::default(),
            tolerances: Tolerances::default(),
            constants: ConstantsSection::default(),
            levy: LevySection::default(),
            collide: CollideSection::default(),
            evolve: EvolveSection::default(),
            stability: StabilitySection::default(),
            continuation: ContinuationSection::default(),
            nonexist: NonexistSection::default(),
            seed: 0,
        }
    }
}

fn in_index_range(x: f64) -> bool {
    x > 0.0 && x <= 2.0
}

impl Params {
    /// Parses JSON, reporting the path of the offending field.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let params: Params = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(if path == "." { String::from("<root>") } else { path }, e.inner().to_string())
        })?;
        params.validate()?;
        Ok(params)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::config("--config", format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Range checks that do not depend on the command.
    pub fn validate(&self) -> Result<()> {
        if !in_index_range(self.p) {
            return Err(Error::config("p", "must lie in (0, 2]"));
        }
        if !in_index_range(self.alpha) {
            return Err(Error::config("alpha", "must lie in (0, 2]"));
        }
        if !(self.delta_p >= 0.0 && self.delta_p.is_finite()) {
            return Err(Error::config("delta_p", "must be a nonnegative number"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config("dt", "must be positive"));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(Error::config("T_final", "must be positive"));
        }
        match (&self.outputs.times, self.outputs.count) {
            (Some(_), Some(_)) => return Err(Error::config("outputs", "give either times or count")),
            (None, Some(0)) => return Err(Error::config("outputs.count", "must be positive")),
            _ => {}
        }
        if let Some(i) = self.constants.alphas.iter().position(|a| !in_index_range(*a)) {
            return Err(Error::config(format!("constants.alphas[{i}]"), "must lie in (0, 2]"));
        }
        if let Some(i) = self.levy.p.iter().position(|a| !in_index_range(*a)) {
            return Err(Error::config(format!("levy.p[{i}]"), "must lie in (0, 2]"));
        }
        if !(self.levy.t > 0.0 && self.levy.v_max > 0.0 && self.levy.tail_v > 0.0 && self.levy.mass_radius > 0.0) {
            return Err(Error::config("levy", "t, v_max, tail_v and mass_radius must be positive"));
        }
        if self.levy.v_nodes < 2 {
            return Err(Error::config("levy.v_nodes", "must be at least 2"));
        }
        if let Some(i) = self.collide.alphas.iter().position(|a| !in_index_range(*a)) {
            return Err(Error::config(format!("collide.alphas[{i}]"), "must lie in (0, 2]"));
        }
        if self.collide.r_samples.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::config("collide.r_samples", "radii must be positive"));
        }
        let c = &self.collide;
        if c.table_nodes < 2 || !(c.table_r_min > 0.0 && c.table_r_max > c.table_r_min) {
            return Err(Error::config("collide", "need table_nodes ≥ 2 and 0 < table_r_min < table_r_max"));
        }
        let n = &self.nonexist;
        if !in_index_range(n.p) {
            return Err(Error::config("nonexist.p", "must lie in (0, 2]"));
        }
        if !in_index_range(n.alpha) {
            return Err(Error::config("nonexist.alpha", "must lie in (0, 2]"));
        }
        if n.r_min.len() < 2 || n.r_min.iter().any(|r| !(*r > 0.0 && *r < n.r_max)) {
            return Err(Error::config("nonexist.r_min", "need at least two radii in (0, r_max)"));
        }
        if !(n.identity_r_min > 0.0 && n.identity_r_min < n.r_max) || n.nodes_per_decade == 0 {
            return Err(Error::config("nonexist", "identity_r_min must lie in (0, r_max), nodes_per_decade ≥ 1"));
        }
        if let Some(i) = n.identity_p.iter().position(|a| !in_index_range(*a)) {
            return Err(Error::config(format!("nonexist.identity_p[{i}]"), "must lie in (0, 2]"));
        }
        self.kernel.to_model()?;
        self.grid.build().map_err(|e| Error::config("grid", e.to_string()))?;
        self.quadrature.validate()
    }

    pub fn kernel_model(&self) -> Result<KernelModel> {
        self.kernel.to_model()
    }

    /// Radial grid: the configured layout, or the radii of a file datum.
    pub fn radial_grid(&self) -> Result<Arc<RadialGrid>> {
        if let Initial::File { path, .. } = &self.initial {
            let (nodes, _) = read_phi_csv(path, "initial")?;
            return RadialGrid::new(nodes)
                .map(Arc::new)
                .map_err(|e| Error::config("initial.path", e.to_string()));
        }
        self.grid.build().map(Arc::new).map_err(|e| Error::config("grid", e.to_string()))
    }

    pub fn initial_datum(&self, grid: &Arc<RadialGrid>) -> Result<RadialCharFn> {
        self.initial.build(grid, self.p, "initial")
    }

    pub fn psi_datum(&self, grid: &Arc<RadialGrid>) -> Result<RadialCharFn> {
        match &self.psi {
            Some(psi) => psi.build(grid, self.p, "psi"),
            None => RadialCharFn::levy(grid.clone(), self.p, 1.2),
        }
    }

    pub fn output_times(&self) -> Vec<f64> {
        match (&self.outputs.times, self.outputs.count) {
            (Some(t), _) => t.clone(),
            (None, n) => uniform_outputs(self.t_final, n.unwrap_or(1)),
        }
    }

    pub fn solver_config(&self) -> Result<SolverConfig> {
        let cfg = SolverConfig {
            dt: self.dt,
            scheme: self.scheme,
            linear_part: self.linear_part,
            t_final: self.t_final,
            output_times: self.output_times(),
            truncation_sequence: self.truncation_sequence.clone(),
            quadrature: self.quadrature,
            adaptive: self.adaptive,
            picard: self.picard,
            tolerances: self.tolerances,
            ..SolverConfig::new(self.p, self.delta_p, self.alpha, self.kernel_model()?)
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Result of a run: every evaluated check.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub reports: Vec<InequalityReport>,
}

impl Outcome {
    pub fn pass(&self) -> bool {
        self.reports.iter().all(|r| r.pass)
    }

    pub fn failures(&self) -> Vec<&InequalityReport> {
        self.reports.iter().filter(|r| !r.pass).collect()
    }
}

/// Process exit status for a finished run: 0 pass, 1 failed check, 2 configuration error,
/// 3 numerical divergence.
pub fn exit_code(result: &Result<Outcome>) -> i32 {
    match result {
        Ok(o) if o.pass() => 0,
        Ok(_) => 1,
        Err(e) => error_code(e),
    }
}

pub fn error_code(e: &Error) -> i32 {
    match e {
        Error::ContractionViolated { .. } => 1,
        Error::Divergent { .. } | Error::StepRejected { .. } | Error::Quadrature { .. } | Error::TailNotNegligible { .. } => 3,
        _ => 2,
    }
}

/// Output directory: `BOBYLEV_OUT` when set, otherwise `out`.
pub fn resolve_out_dir(out: &Path) -> PathBuf {
    match std::env::var_os(OUT_DIR_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => out.to_path_buf(),
    }
}

/// Writes artifacts into one directory, each CSV with its provenance sidecar.
struct Sink {
    dir: PathBuf,
    provenance: Value,
}

impl Sink {
    fn new(dir: &Path, command: Command, params: &Params) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            provenance: json!({
                "command": command.name(),
                "seed": params.seed,
                "config": serde_json::to_value(params)?,
            }),
        })
    }

    fn csv(&self, name: &str, write: impl FnOnce(BufWriter<File>) -> Result<()>) -> Result<()> {
        write(BufWriter::new(File::create(self.dir.join(name))?))?;
        let mut sidecar = self.provenance.clone();
        sidecar["artifact"] = json!(name);
        self.json(&format!("{name}.json"), &sidecar)
    }

    fn rows(&self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
        self.csv(name, |out| {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(header)?;
            for row in rows {
                w.write_record(&row)?;
            }
            w.flush()?;
            Ok(())
        })
    }

    fn json(&self, name: &str, value: &Value) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(self.dir.join(name), text)?;
        Ok(())
    }

    fn finish(&self, outcome: &Outcome) -> Result<()> {
        self.csv("reports.csv", |out| write_reports_csv(out, &outcome.reports))?;
        let failures: Vec<&InequalityReport> = outcome.failures();
        self.json("failures.json", &serde_json::to_value(failures)?)
    }
}

/// Runs one command and writes its artifacts into `out`.
pub fn run(command: Command, params: &Params, out: &Path) -> Result<Outcome> {
    let sink = Sink::new(out, command, params)?;
    let reports = match command {
        Command::Constants => constants(params, &sink)?,
        Command::Levy => levy(params, &sink)?,
        Command::Collide => collide(params, &sink)?,
        Command::Evolve => evolve(params, &sink)?,
        Command::Stability => stability(params, &sink)?,
        Command::Continuation => continuation(params, &sink)?,
        Command::Nonexist => nonexist(params, &sink)?,
        Command::VerifyAll => verify_all(params, &sink)?,
    };
    let outcome = Outcome { reports };
    sink.finish(&outcome)?;
    Ok(outcome)
}

fn constants(params: &Params, sink: &Sink) -> Result<Vec<InequalityReport>> {
    let model = params.kernel_model()?;
    let tol = params.tolerances;
    let mut reports = Vec::new();
    let lambda2 = moment_lambda_alpha(&model, 2.0)?;
    if let Some(l2) = lambda2.finite() {
        reports.push(InequalityReport::new("lambda_2_zero", "alpha=2", l2.abs(), 0.0, tol.lambda2));
    }
    let gamma2 = moment_gamma_alpha(&model, 2.0)?.finite();
    let mut rows = Vec::new();
    let mut entries = Vec::new();
    for &a in &params.constants.alphas {
        let c = MomentConstants::compute(&model, a)?;
        let loc = format!("alpha={a}");
        // sin^α(θ/2) w(θ) ~ θ^{α−ν} near 0.
        let expect_finite = model.is_cutoff() || a > model.singularity_exponent - 1.0;
        let flagged_finite = c.mu_alpha.finite().is_some();
        reports.push(InequalityReport::new(
            "mu_alpha_divergence_flag",
            format!("{loc},expected={}", if expect_finite { "finite" } else { "divergent" }),
            f64::from(u8::from(flagged_finite != expect_finite)),
            0.0,
            0.0,
        ));
        if let (Some(g2), Some(ga), Some(b1)) = (gamma2, c.gamma_alpha.finite(), c.b_l1.finite()) {
            reports.push(InequalityReport::new("gamma_2_equals_b_l1", loc.clone(), (g2 - b1).abs(), 0.0, tol.gamma2));
            reports.push(InequalityReport::new("gamma_2_le_gamma_alpha", loc.clone(), g2, ga, tol.gamma2));
            reports.push(InequalityReport::new("gamma_alpha_le_2gamma_2", loc.clone(), ga, 2.0 * g2, tol.gamma2));
        }
        for (name, e) in [
            ("lambda_alpha", &c.lambda_alpha),
            ("gamma_alpha", &c.gamma_alpha),
            ("mu_alpha", &c.mu_alpha),
            ("b_l1", &c.b_l1),
        ] {
            let (value, status) = match e {
                Estimate::Finite { value, .. } => (fmt(*value), "finite"),
                Estimate::Divergent { partial, .. } => (fmt(*partial), "divergent"),
            };
            rows.push(vec![fmt(a), name.to_string(), value, status.to_string()]);
        }
        entries.push(c.to_json());
    }
    sink.rows("constants.csv", &["alpha", "quantity", "value", "status"], rows)?;
    sink.json(
        "constants.json",
        &json!({
            "kernel": params.kernel,
            "lambda_2": crate::kernels::estimate_json(&lambda2),
            "gamma_2": gamma2,
            "by_alpha": entries,
        }),
    )?;
    Ok(reports)
}

fn levy(params: &Params, sink: &Sink) -> Result<Vec<InequalityReport>> {
    let sec = &params.levy;
    let tol = params.tolerances;
    let t = sec.t;
    let v: Vec<f64> = (0..sec.v_nodes)
        .map(|i| sec.v_max * i as f64 / (sec.v_nodes - 1) as f64)
        .collect();
    let mut reports = Vec::new();
    let mut summary = serde_json::Map::new();
    for &p in &sec.p {
        let lp = LevyParams::new(p, t)?;
        let eval = DensityEvaluator::new(p)?;
        let f: Vec<f64> = v.iter().map(|&x| eval.at(x, t)).collect();
        sink.csv(&format!("levy_p{p}.csv"), |out| write_density_csv(out, &v, &f))?;
        let loc = format!("p={p}");

        let mass = total_mass(&lp, sec.mass_radius)?;
        reports.push(InequalityReport::new("mass", loc.clone(), (mass - 1.0).abs(), 0.0, tol.mass));
        let l1 = wp_l1_norm(&lp);
        let l1_closed = wp_l1_norm_closed_form(&lp);
        reports.push(InequalityReport::new(
            "wp_l1_norm",
            loc.clone(),
            (l1 - l1_closed).abs() / l1_closed,
            0.0,
            tol.mass,
        ));

        let closed = tail_constant(&lp);
        let fit = if p < 2.0 {
            let fit = fit_tail_constant(&eval, sec.tail_v, t);
            reports.push(InequalityReport::new(
                "tail_constant",
                format!("{loc},v={}", sec.tail_v),
                (fit - closed).abs() / closed,
                0.0,
                tol.tail,
            ));
            if p == 1.0 {
                let inv_pi2 = t / (PI * PI);
                reports.push(InequalityReport::new(
                    "tail_constant_inverse_pi_squared",
                    format!("{loc},v={}", sec.tail_v),
                    (fit - inv_pi2).abs() / inv_pi2,
                    0.0,
                    tol.tail,
                ));
            }
            Some(fit)
        } else {
            let heat = |x: f64| (4.0 * PI * t).powf(-1.5) * (-x * x / (4.0 * t)).exp();
            let err = v.iter().zip(&f).map(|(&x, &y)| (y - heat(x)).abs()).fold(0.0, f64::max);
            reports.push(InequalityReport::new("heat_kernel", loc.clone(), err, 0.0, tol.density));
            None
        };
        summary.insert(
            format!("p={p}"),
            json!({
                "mass": mass,
                "tail_constant_fit": fit,
                "closed_form_constant": closed,
                "wp_l1_norm": l1,
                "wp_l1_norm_closed_form": l1_closed,
            }),
        );
    }
    sink.json("levy.json", &Value::Object(summary))?;
    Ok(reports)
}

fn collide(params: &Params, sink: &Sink) -> Result<Vec<InequalityReport>> {
    let model = params.kernel_model()?;
    let grid = params.radial_grid()?;
    let phi = params.initial_datum(&grid)?;
    let sec = &params.collide;
    let spec = &params.quadrature;
    let (a, b) = (sec.table_r_min.ln(), sec.table_r_max.min(grid.r_max()).ln());
    let radii: Vec<f64> = (0..sec.table_nodes)
        .map(|i| (a + (b - a) * i as f64 / (sec.table_nodes - 1) as f64).exp())
        .collect();
    let values = radii
        .iter()
        .map(|&r| bobylev_isotropic(&phi, &model, r, spec))
        .collect::<Result<Vec<_>>>()?;
    sink.rows(
        "collide.csv",
        &["r", "bobylev"],
        radii.iter().zip(&values).map(|(r, v)| vec![fmt(*r), fmt(*v)]),
    )?;

    let mut reports = Vec::new();
    if matches!(params.initial, Initial::Gaussian { .. }) {
        for (r, v) in radii.iter().zip(&values) {
            reports.push(InequalityReport::new(
                "gaussian_fixed_point",
                format!("r={r}"),
                v.abs(),
                0.0,
                params.tolerances.gaussian,
            ));
        }
    }
    for &alpha in &sec.alphas {
        let mut rep = verify_operator_bound(&phi, &model, alpha, &sec.r_samples, spec)?;
        for r in &mut rep {
            r.location = format!("alpha={alpha},{}", r.location);
        }
        reports.extend(rep);
    }
    Ok(reports)
}

fn margin_reports(name: &str, traj: &Trajectory, tol: f64) -> Vec<InequalityReport> {
    traj.steps
        .iter()
        .map(|s| InequalityReport::new(name, format!("t={}", s.t), 1.0 + s.growth_margin, 1.0, tol))
        .collect()
}

fn trajectory_rows(traj: &Trajectory) -> impl Iterator<Item = Vec<String>> + '_ {
    traj.frames.iter().flat_map(|f| {
        let t = fmt(f.t);
        f.phi
            .grid()
            .nodes()
            .iter()
            .zip(f.phi.values())
            .map(move |(r, v)| vec![t.clone(), fmt(*r), fmt(v)])
            .collect::<Vec<_>>()
    })
}

fn evolve(params: &Params, sink: &Sink) -> Result<Vec<InequalityReport>> {
    let cfg = params.solver_config()?;
    let grid = params.radial_grid()?;
    let phi0 = params.initial_datum(&grid)?;
    let solver = Solver::new(cfg.clone(), &phi0)?;
    let traj = match cfg.scheme {
        Scheme::Picard => solver.picard_solve()?,
        _ => solver.evolve()?,
    };
    let diag = solver.diagnostics(&traj, params.seed)?;

    sink.rows("trajectory.csv", &["t", "r", "phi"], trajectory_rows(&traj))?;
    sink.rows(
        "diagnostics.csv",
        &["t", "growth_margin", "kalpha", "envelope", "envelope_ratio"],
        diag.rows.iter().map(|d| {
            vec![fmt(d.t), fmt(d.growth_margin), fmt(d.kalpha), fmt(d.envelope), fmt(d.envelope_ratio)]
        }),
    )?;
    sink.rows(
        "steps.csv",
        &["t", "dt", "halvings", "growth_margin", "char_margin", "kalpha"],
        traj.steps.iter().map(|s| {
            vec![
                fmt(s.t),
                fmt(s.dt),
                s.halvings.to_string(),
                fmt(s.growth_margin),
                fmt(s.char_margin),
                fmt(s.kalpha),
            ]
        }),
    )?;

    let mut reports = diag.reports.clone();
    for (i, p) in diag.psd.iter().enumerate() {
        reports.push(InequalityReport::new("psd", format!("set={i},size={}", p.size), -p.min_eigenvalue, 0.0, p.tol));
    }
    let mut extra = serde_json::Map::new();
    if cfg.scheme == Scheme::Picard {
        sink.rows(
            "sweeps.csv",
            &["window", "sweep", "distance", "ratio", "bound"],
            traj.sweeps.iter().map(|s| {
                vec![
                    s.window.to_string(),
                    s.sweep.to_string(),
                    fmt(s.distance),
                    s.ratio.map(fmt).unwrap_or_default(),
                    fmt(s.bound),
                ]
            }),
        )?;
        for s in &traj.sweeps {
            if let Some(r) = s.ratio {
                reports.push(InequalityReport::new(
                    "picard_contraction",
                    format!("window={},sweep={}", s.window, s.sweep),
                    r,
                    s.bound,
                    params.tolerances.contraction,
                ));
            }
        }
        if params.evolve.compare_stepping {
            let t0 = solver.contraction_window()?.min(cfg.t_final);
            let heun = SolverConfig {
                scheme: Scheme::ExpHeun,
                dt: t0 / cfg.picard.time_nodes as f64,
                t_final: t0,
                output_times: vec![t0],
                adaptive: AdaptivePolicy {
                    enabled: false,
                    ..cfg.adaptive
                },
                ..cfg.clone()
            };
            let stepped = Solver::new(heun, &phi0)?.evolve()?;
            let picard_at = traj
                .frames
                .iter()
                .min_by(|a, b| (a.t - t0).abs().total_cmp(&(b.t - t0).abs()))
                .expect("trajectory has frames");
            let diff = picard_at
                .phi
                .values()
                .iter()
                .zip(stepped.last().phi.values())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            reports.push(InequalityReport::new(
                "picard_vs_exp_heun",
                format!("t={t0}"),
                diff,
                0.0,
                params.tolerances.picard_vs_stepping,
            ));
            extra.insert("picard_vs_exp_heun".into(), json!(diff));
            extra.insert("window".into(), json!(t0));
        }
    }

    let last = diag.rows.last().expect("trajectory has frames");
    let (growth, char_margin) = solver.margins(&traj.last().phi, traj.last().t);
    let mut flags = serde_json::Map::new();
    for r in &reports {
        let entry = flags.entry(r.check_name.clone()).or_insert(json!(true));
        *entry = json!(entry.as_bool().unwrap_or(true) && r.pass);
    }
    let mut summary = json!({
        "final_margins": {
            "t": last.t,
            "growth": growth,
            "characteristic": char_margin,
        },
        "envelope_ratios": diag.rows.iter().map(|d| d.envelope_ratio).collect::<Vec<_>>(),
        "accepted_steps": traj.steps.len(),
        "pass_flags": flags,
    });
    if !extra.is_empty() {
        summary["picard"] = Value::Object(extra);
    }
    sink.json("summary.json", &summary)?;
    Ok(reports)
}

fn stability(params: &Params, sink: &Sink) -> Result<Vec<InequalityReport>> {
    let cfg = params.solver_config()?;
    let grid = params.radial_grid()?;
    let phi0 = params.initial_datum(&grid)?;
    let psi0 = params.psi_datum(&grid)?;
    let series = stability_experiment(&cfg, &phi0, &psi0)?;
    sink.rows(
        "stability.csv",
        &["t", "lhs", "lhs_grid", "lhs_limit", "rhs", "pass"],
        series.rows.iter().map(|r| {
            vec![fmt(r.t), fmt(r.lhs), fmt(r.lhs_grid), fmt(r.lhs_limit), fmt(r.rhs), r.pass.to_string()]
        }),
    )?;
    let mut reports = series.reports(cfg.tolerances.stability);
    let mut summary = json!({
        "lambda_alpha": series.lambda_alpha,
        "d0": series.d0,
        "pass": series.pass(),
        "max_ratio": series.rows.iter().filter(|r| r.rhs > 0.0).map(|r| r.lhs / r.rhs).fold(0.0, f64::max),
    });
    if params.stability.uniqueness {
        let same = stability_experiment(&cfg, &phi0, &phi0)?;
        let worst = same.rows.iter().map(|r| r.lhs).fold(0.0, f64::max);
        reports.push(InequalityReport::new("uniqueness", "identical data", worst, 0.0, 0.0));
        summary["uniqueness_max_difference"] = json!(worst);
    }
    sink.json("summary.json", &summary)?;
    Ok(reports)
}

fn continuation(params: &Params, sink: &Sink) -> Result<Vec<InequalityReport>> {
    let cfg = params.solver_config()?;
    let grid = params.radial_grid()?;
    let phi0 = params.initial_datum(&grid)?;
    let tol = cfg.tolerances;
    let direct = if params.continuation.direct && !cfg.kernel.is_cutoff() {
        let direct_cfg = SolverConfig {
            scheme: Scheme::ExpHeun,
            ..cfg.clone()
        };
        Some(Solver::new(direct_cfg, &phi0)?)
    } else {
        None
    };
    let (cont, direct) = rayon::join(
        || cutoff_continuation(&cfg, &phi0),
        || direct.as_ref().map(|s| s.evolve()).transpose(),
    );
    let (cont, direct) = (cont?, direct?);

    let mut reports = Vec::new();
    for w in cont.table.windows(2) {
        reports.push(InequalityReport::new(
            "cauchy_decrease",
            format!("n={}->{}", w[1].n_coarse, w[1].n_fine),
            w[1].sup_diff,
            w[0].sup_diff,
            0.0,
        ));
    }
    for w in cont.members.windows(2) {
        reports.push(InequalityReport::new(
            "exponent_increase",
            format!("n={}->{}", w[0].n, w[1].n),
            w[0].exponent,
            w[1].exponent,
            0.0,
        ));
    }
    if let Some(last) = cont.members.last() {
        reports.push(InequalityReport::new(
            "exponent_below_lambda",
            format!("n={}", last.n),
            last.exponent,
            cont.lambda_alpha,
            0.0,
        ));
    }
    if let Some(gap) = cont.exponent_gap() {
        reports.push(InequalityReport::new("exponent_gap", "finest", gap, tol.exponent_gap, 0.0));
    }
    for m in &cont.members {
        let mut rep = margin_reports("max_growth", &m.trajectory, tol.growth);
        for r in &mut rep {
            r.location = format!("n={},{}", m.n, r.location);
        }
        reports.extend(rep);
    }

    sink.rows(
        "cauchy.csv",
        &["n_coarse", "n_fine", "sup_diff", "ratio"],
        cont.table.iter().map(|r| {
            vec![r.n_coarse.to_string(), r.n_fine.to_string(), fmt(r.sup_diff), r.ratio.map(fmt).unwrap_or_default()]
        }),
    )?;
    sink.rows(
        "exponents.csv",
        &["n", "exponent", "lambda_alpha", "relative_gap"],
        cont.members.iter().map(|m| {
            vec![
                m.n.to_string(),
                fmt(m.exponent),
                fmt(cont.lambda_alpha),
                fmt((cont.lambda_alpha - m.exponent).abs() / cont.lambda_alpha.abs()),
            ]
        }),
    )?;
    let nodes = grid.nodes();
    let finest = &cont.members.last().expect("at least two members").trajectory;
    let mut columns: Vec<(&str, Vec<f64>)> = vec![("finest", finest.last().phi.values())];
    if let Some(limit) = &cont.limit {
        columns.push(("limit", limit.clone()));
    }
    let mut summary = json!({
        "lambda_alpha": cont.lambda_alpha,
        "exponent_gap": cont.exponent_gap(),
        "is_cauchy": cont.is_cauchy(),
        "exponents_increase": cont.exponents_increase(),
    });
    if let Some(d) = &direct {
        reports.extend(margin_reports("max_growth_direct", d, tol.growth));
        let dv = d.last().phi.values();
        let sup = |v: &[f64]| v.iter().zip(&dv).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let finest_gap = sup(&columns[0].1);
        summary["direct_vs_finest"] = json!(finest_gap);
        summary["direct_vs_finest_trajectory"] = json!(sup_difference(finest, d));
        if let Some(limit) = &cont.limit {
            let limit_gap = sup(limit);
            summary["direct_vs_limit"] = json!(limit_gap);
            reports.push(InequalityReport::new("limit_toward_direct", "T_final", limit_gap, finest_gap, 0.0));
        }
        columns.push(("direct", dv));
    }
    let header: Vec<&str> = std::iter::once("r").chain(columns.iter().map(|c| c.0)).collect();
    sink.rows(
        "final.csv",
        &header,
        nodes.iter().enumerate().map(|(i, r)| {
            std::iter::once(fmt(*r)).chain(columns.iter().map(|c| fmt(c.1[i]))).collect()
        }),
    )?;
    sink.json("summary.json", &summary)?;
    Ok(reports)
}

fn nonexist(params: &Params, sink: &Sink) -> Result<Vec<InequalityReport>> {
    let sec = &params.nonexist;
    let tol = params.tolerances;
    let probe = nonexistence_probe(
        sec.p,
        sec.alpha,
        sec.delta_p,
        sec.t,
        &sec.r_min,
        sec.r_max,
        sec.nodes_per_decade,
    )?;
    sink.rows(
        "nonexist.csv",
        &["r_min", "sup"],
        probe.r_min.iter().zip(&probe.sup).map(|(r, s)| vec![fmt(*r), fmt(*s)]),
    )?;
    let mut reports = Vec::new();
    let slope = probe.slope.unwrap_or(f64::NAN);
    if sec.alpha > sec.p {
        reports.push(InequalityReport::new(
            "blowup_slope",
            format!("p={},alpha={}", sec.p, sec.alpha),
            (slope - probe.expected_slope).abs() / probe.expected_slope.abs(),
            0.0,
            tol.slope,
        ));
    }
    let decades = (sec.r_max / sec.identity_r_min).log10().ceil().max(1.0) as usize;
    let mut identity = Vec::new();
    for &p in &sec.identity_p {
        let sup = norm_sup_on_grid(p, sec.t, p, sec.identity_r_min, sec.r_max, decades * sec.nodes_per_decade + 1);
        reports.push(InequalityReport::new(
            "norm_identity",
            format!("p={p},r_min={}", sec.identity_r_min),
            (sup - sec.t).abs(),
            0.0,
            tol.norm_identity,
        ));
        identity.push(json!({"p": p, "sup": sup, "t": sec.t}));
    }
    sink.json(
        "nonexist.json",
        &json!({
            "slope": probe.slope,
            "expected_slope": probe.expected_slope,
            "norm_identity": identity,
        }),
    )?;
    Ok(reports)
}

/// Built-in suite run by `verify-all`: name, command and configuration of each member.
/// The tolerances and seed of `base` apply to every member.
pub fn default_suite(base: &Params) -> Vec<(&'static str, Command, Params)> {
    let common = Params {
        tolerances: base.tolerances,
        seed: base.seed,
        ..Params::default()
    };
    let constant = common.kernel.clone();
    let singular = KernelSpec::from_model(&KernelModel::maxwellian(1.0));
    let gaussian = Initial::Gaussian { c: 0.5 };
    let w = |p: f64| Initial::WP { p: Some(p), t: 1.0 };
    let picard_window = 0.9 * LN_2 / (2.0 * PI);
    let small_grid = GridSpec {
        n_log: 128,
        n_linear: 16,
        ..GridSpec::default()
    };
    vec![
        ("constants_cutoff", Command::Constants, common.clone()),
        (
            "constants_singular",
            Command::Constants,
            Params {
                kernel: singular.clone(),
                constants: ConstantsSection {
                    alphas: vec![0.4, 0.6, 1.0, 1.5],
                },
                ..common.clone()
            },
        ),
        ("levy", Command::Levy, common.clone()),
        ("nonexist", Command::Nonexist, common.clone()),
        (
            "collide_gaussian_cutoff",
            Command::Collide,
            Params {
                initial: gaussian.clone(),
                ..common.clone()
            },
        ),
        (
            "collide_gaussian_singular",
            Command::Collide,
            Params {
                kernel: singular.clone(),
                initial: gaussian.clone(),
                ..common.clone()
            },
        ),
        (
            "collide_w1_singular",
            Command::Collide,
            Params {
                kernel: singular.clone(),
                initial: w(1.0),
                ..common.clone()
            },
        ),
        (
            "collide_w1.5_singular",
            Command::Collide,
            Params {
                kernel: singular.clone(),
                initial: w(1.5),
                ..common.clone()
            },
        ),
        ("evolve_p1", Command::Evolve, common.clone()),
        (
            "evolve_p2",
            Command::Evolve,
            Params {
                p: 2.0,
                initial: w(1.0),
                ..common.clone()
            },
        ),
        (
            "picard",
            Command::Evolve,
            Params {
                scheme: Scheme::Picard,
                grid: small_grid,
                t_final: picard_window,
                outputs: Outputs {
                    times: None,
                    count: Some(1),
                },
                picard: PicardSpec {
                    time_nodes: 128,
                    ..PicardSpec::default()
                },
                ..common.clone()
            },
        ),
        (
            "stability_cutoff",
            Command::Stability,
            Params {
                kernel: constant,
                grid: GridSpec {
                    r_min: 1e-6,
                    ..GridSpec::default()
                },
                t_final: 2.0,
                outputs: Outputs {
                    times: None,
                    count: Some(20),
                },
                ..common.clone()
            },
        ),
        (
            "stability_singular",
            Command::Stability,
            Params {
                kernel: singular.clone(),
                grid: GridSpec {
                    r_min: 1e-10,
                    ..GridSpec::default()
                },
                t_final: 2.0,
                outputs: Outputs {
                    times: None,
                    count: Some(20),
                },
                ..common.clone()
            },
        ),
        (
            "continuation",
            Command::Continuation,
            Params {
                kernel: singular,
                p: 2.0,
                alpha: 1.5,
                initial: w(1.5),
                t_final: 0.5,
                outputs: Outputs {
                    times: None,
                    count: Some(5),
                },
                ..common
            },
        ),
    ]
}

fn verify_all(params: &Params, sink: &Sink) -> Result<Vec<InequalityReport>> {
    let mut reports = Vec::new();
    let mut status = serde_json::Map::new();
    for (name, command, member) in default_suite(params) {
        let outcome = run(command, &member, &sink.dir.join(name))?;
        status.insert(
            name.to_string(),
            json!({
                "command": command.name(),
                "pass": outcome.pass(),
                "checks": outcome.reports.len(),
                "failures": outcome.failures().len(),
            }),
        );
        reports.extend(outcome.reports.into_iter().map(|mut r| {
            r.location = format!("{name}:{}", r.location);
            r
        }));
    }
    sink.json("suite.json", &Value::Object(status))?;
    Ok(reports)
}
