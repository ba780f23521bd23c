//! Acceptance gate: one pass/fail line per criterion.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines.

use bobylev::charfun::{GridSpec, RadialCharFn, RadialGrid};
use bobylev::collision::{bobylev_isotropic, verify_operator_bound, CancellationMode, QuadratureSpec};
use bobylev::kernels::{moment_gamma_alpha, moment_lambda_alpha, moment_mu_alpha, KernelModel};
use bobylev::levy::{
    fit_tail_constant, norm_sup_on_grid, wp_l1_norm, wp_l1_norm_closed_form, DensityEvaluator, LevyParams,
};
use bobylev::solver::{
    cutoff_continuation, nonexistence_probe, stability_experiment, uniform_outputs, AdaptivePolicy, PicardSpec,
    Scheme, Solver, SolverConfig, Trajectory,
};
use bobylev::Result;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::f64::consts::{LN_2, PI};
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

struct Line {
    pass: bool,
    detail: String,
}

fn line(pass: bool, detail: impl Into<String>) -> Result<Line> {
    Ok(Line {
        pass,
        detail: detail.into(),
    })
}

fn grid(r_min: f64) -> Arc<RadialGrid> {
    Arc::new(GridSpec { r_min, ..GridSpec::default() }.build().unwrap())
}

fn finite(e: bobylev::quadrature::Estimate) -> f64 {
    e.finite().expect("finite moment")
}

fn log_nodes(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| (a.ln() + (b / a).ln() * i as f64 / (n - 1) as f64).exp())
        .collect()
}

fn max_growth(traj: &Trajectory) -> f64 {
    traj.steps.iter().map(|s| s.growth_margin).fold(f64::NEG_INFINITY, f64::max)
}

fn gaussian_fixed_point() -> Result<Line> {
    let phi = RadialCharFn::gaussian(grid(1e-4), 0.5)?;
    let spec = QuadratureSpec {
        cancellation_mode: CancellationMode::Split,
        ..QuadratureSpec::default()
    };
    let mut worst = 0.0_f64;
    for model in [KernelModel::constant(1.0), KernelModel::maxwellian(1.0)] {
        for r in log_nodes(1e-3, 1e2, 32) {
            worst = worst.max(bobylev_isotropic(&phi, &model, r, &spec)?.abs());
        }
    }
    line(worst <= 1e-8, format!("max |B(gaussian)| = {worst:.2e} (tol 1e-8)"))
}

fn moment_identities() -> Result<Line> {
    let constant = KernelModel::constant(1.0);
    let singular = KernelModel::maxwellian(1.0);
    let cutoffs = [constant.clone(), singular.truncate(8, false), singular.truncate(8, true)];
    let mut ok = true;
    let mut l2 = 0.0_f64;
    for m in cutoffs.iter().chain([&singular]) {
        l2 = l2.max(finite(moment_lambda_alpha(m, 2.0)?).abs());
    }
    ok &= l2 <= 1e-12;
    let mut g2_err = 0.0_f64;
    for m in &cutoffs {
        let g2 = finite(moment_gamma_alpha(m, 2.0)?);
        let b1 = finite(bobylev::kernels::l1_norm(m));
        g2_err = g2_err.max((g2 - b1).abs());
        for a in [0.5, 1.0, 1.5] {
            let ga = finite(moment_gamma_alpha(m, a)?);
            ok &= g2 <= ga && ga <= 2.0 * g2;
        }
    }
    ok &= g2_err <= 1e-10;
    // Closed forms for b ≡ 1: ‖b‖₁ = 2π, λ₁ = 2π/3.
    let b1 = finite(bobylev::kernels::l1_norm(&constant));
    let l1 = finite(moment_lambda_alpha(&constant, 1.0)?);
    ok &= (b1 - 2.0 * PI).abs() <= 1e-12 && (l1 - 2.0 * PI / 3.0).abs() <= 1e-12;
    let mu04 = moment_mu_alpha(&singular, 0.4)?;
    let mu06 = moment_mu_alpha(&singular, 0.6)?;
    ok &= mu04.finite().is_none() && mu06.finite().is_some();
    line(
        ok,
        format!(
            "|lambda_2| = {l2:.1e}, |gamma_2 - |b|_1| = {g2_err:.1e}, mu_0.4 divergent = {}, mu_0.6 = {:.4}",
            mu04.finite().is_none(),
            mu06.finite().unwrap_or(f64::NAN)
        ),
    )
}

fn levy_closed_forms() -> Result<Line> {
    let heat = DensityEvaluator::new(2.0)?;
    let gauss_err = (0..20)
        .map(|i| {
            let v = 0.5 * i as f64;
            (heat.at(v, 1.0) - (4.0 * PI).powf(-1.5) * (-v * v / 4.0).exp()).abs()
        })
        .fold(0.0, f64::max);
    let mut l1_err = 0.0_f64;
    for p in [1.0, 1.5, 2.0] {
        let lp = LevyParams::new(p, 1.0)?;
        l1_err = l1_err.max((wp_l1_norm(&lp) - wp_l1_norm_closed_form(&lp)).abs());
    }
    let mut tail_err = 0.0_f64;
    let mut inv_pi2 = f64::NAN;
    for p in [0.5, 1.0, 1.5] {
        let fit = fit_tail_constant(&DensityEvaluator::new(p)?, 50.0, 1.0);
        let closed = bobylev::levy::tail_constant(&LevyParams::new(p, 1.0)?);
        tail_err = tail_err.max((fit - closed).abs() / closed);
        if p == 1.0 {
            inv_pi2 = (fit * PI * PI - 1.0).abs();
        }
    }
    line(
        gauss_err <= 1e-6 && l1_err <= 1e-8 && tail_err <= 0.02 && inv_pi2 <= 0.02,
        format!(
            "f_2 err {gauss_err:.1e}, |W_p|_1 err {l1_err:.1e}, tail rel err {tail_err:.1e}, p=1 vs 1/pi^2 {inv_pi2:.1e}"
        ),
    )
}

fn norm_identities() -> Result<Line> {
    let mut id_err = 0.0_f64;
    for p in [1.0, 1.5, 2.0] {
        id_err = id_err.max((norm_sup_on_grid(p, 1.0, p, 1e-6, 10.0, 351) - 1.0).abs());
    }
    let mut slope_err = 0.0_f64;
    for (p, a) in [(1.0, 1.5), (1.0, 2.0), (1.5, 2.0)] {
        let probe = nonexistence_probe(p, a, 1.0, 1.0, &[1e-2, 1e-3, 1e-4, 1e-5, 1e-6], 10.0, 50)?;
        let s = probe.slope.unwrap_or(f64::NAN);
        slope_err = slope_err.max((s - probe.expected_slope).abs() / probe.expected_slope.abs());
    }
    line(
        id_err <= 1e-4 && slope_err <= 0.05,
        format!("|sup - t| = {id_err:.1e}, slope rel err {slope_err:.1e}"),
    )
}

fn operator_bound() -> Result<Line> {
    let g = grid(1e-4);
    let model = KernelModel::maxwellian(1.0);
    let spec = QuadratureSpec::default();
    let radii: Vec<f64> = (-4..=4).map(|k| 2f64.powi(k)).collect();
    let data = [
        RadialCharFn::levy(g.clone(), 1.0, 1.0)?,
        RadialCharFn::levy(g.clone(), 1.5, 1.0)?,
        RadialCharFn::gaussian(g, 0.5)?,
    ];
    let mut checks = 0;
    let mut violations = 0;
    let mut worst = 0.0_f64;
    for phi in &data {
        for a in [0.8, 1.0] {
            for r in verify_operator_bound(phi, &model, a, &radii, &spec)? {
                checks += 1;
                violations += usize::from(!r.pass);
                worst = worst.max(r.lhs / r.rhs);
            }
        }
    }
    line(violations == 0, format!("{checks} checks, {violations} violations, max lhs/rhs {worst:.3}"))
}

fn heun(p: f64, kernel: KernelModel) -> SolverConfig {
    SolverConfig {
        t_final: 1.0,
        output_times: uniform_outputs(1.0, 10),
        ..SolverConfig::new(p, 1.0, 1.0, kernel)
    }
}

/// Runs shared by the max-growth and norm-envelope criteria.
struct GrowthRuns {
    cutoff: Vec<(Solver, Trajectory)>,
    singular_direct: Vec<(Solver, Trajectory)>,
    singular_members: Vec<(f64, u32, Trajectory)>,
}

fn growth_runs() -> Result<GrowthRuns> {
    let g = grid(1e-4);
    let phi0 = RadialCharFn::levy(g, 1.0, 1.0)?;
    let mut runs = GrowthRuns {
        cutoff: Vec::new(),
        singular_direct: Vec::new(),
        singular_members: Vec::new(),
    };
    for p in [1.0, 2.0] {
        let s = Solver::new(heun(p, KernelModel::constant(1.0)), &phi0)?;
        let t = s.evolve()?;
        runs.cutoff.push((s, t));
        let cfg = SolverConfig {
            truncation_sequence: vec![4, 8, 16, 32],
            ..heun(p, KernelModel::maxwellian(1.0))
        };
        for m in cutoff_continuation(&cfg, &phi0)?.members {
            runs.singular_members.push((p, m.n, m.trajectory));
        }
        let s = Solver::new(cfg, &phi0)?;
        let t = s.evolve()?;
        runs.singular_direct.push((s, t));
    }
    Ok(runs)
}

fn max_growth_estimate(runs: &GrowthRuns) -> Result<Line> {
    let cutoff = runs.cutoff.iter().map(|r| max_growth(&r.1)).fold(f64::NEG_INFINITY, f64::max);
    let members = runs
        .singular_members
        .iter()
        .map(|m| max_growth(&m.2))
        .fold(f64::NEG_INFINITY, f64::max);
    let direct = runs
        .singular_direct
        .iter()
        .map(|r| max_growth(&r.1))
        .fold(f64::NEG_INFINITY, f64::max);
    let worst = cutoff.max(members).max(direct);
    line(
        worst <= 1e-6,
        format!(
            "max (e^(d r^p t)|phi| - 1): cutoff {cutoff:.1e}, b_n members {members:.1e}, direct singular {direct:.1e}"
        ),
    )
}

fn stability() -> Result<Line> {
    let mut ok = true;
    let mut detail = Vec::new();
    for (name, kernel, r_min) in [
        ("cutoff", KernelModel::constant(1.0), 1e-6),
        ("singular", KernelModel::maxwellian(1.0), 1e-10),
    ] {
        let g = grid(r_min);
        let phi0 = RadialCharFn::levy(g.clone(), 1.0, 1.0)?;
        let psi0 = RadialCharFn::levy(g, 1.0, 1.2)?;
        let cfg = SolverConfig {
            t_final: 2.0,
            output_times: uniform_outputs(2.0, 20),
            ..SolverConfig::new(1.0, 1.0, 1.0, kernel)
        };
        let series = stability_experiment(&cfg, &phi0, &psi0)?;
        let ratio = series
            .rows
            .iter()
            .filter(|r| r.rhs > 0.0)
            .map(|r| r.lhs / r.rhs)
            .fold(0.0, f64::max);
        let same = stability_experiment(&cfg, &phi0, &phi0)?;
        let zero = same.rows.iter().all(|r| r.lhs == 0.0);
        ok &= series.pass() && series.rows.len() == 21 && zero;
        detail.push(format!("{name}: max lhs/rhs {ratio:.6}, identical data zero = {zero}"));
    }
    line(ok, detail.join("; "))
}

fn picard_contraction() -> Result<Line> {
    let phi0 = RadialCharFn::levy(grid(1e-4), 1.0, 1.0)?;
    let t0 = 0.9 * LN_2 / (2.0 * PI);
    let nodes = 128;
    let cfg = SolverConfig {
        scheme: Scheme::Picard,
        t_final: t0,
        picard: PicardSpec {
            time_nodes: nodes,
            ..PicardSpec::default()
        },
        ..SolverConfig::new(1.0, 1.0, 1.0, KernelModel::constant(1.0))
    };
    let solver = Solver::new(cfg.clone(), &phi0)?;
    let window = solver.contraction_window()?;
    let traj = solver.picard_solve()?;
    let bound = traj.sweeps[0].bound;
    let worst = traj.sweeps.iter().filter_map(|s| s.ratio).fold(0.0, f64::max);
    let stepped = Solver::new(
        SolverConfig {
            scheme: Scheme::ExpHeun,
            dt: window / nodes as f64,
            adaptive: AdaptivePolicy {
                enabled: false,
                ..AdaptivePolicy::default()
            },
            ..cfg
        },
        &phi0,
    )?
    .evolve()?;
    let diff = traj
        .last()
        .phi
        .values()
        .iter()
        .zip(stepped.last().phi.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    line(
        (window - t0).abs() < 1e-9 * t0 && worst <= bound + 0.05 && diff <= 1e-6,
        format!(
            "{} sweeps, max ratio {worst:.3} vs bound {bound:.3} + 0.05, |picard - exp_heun| = {diff:.1e}",
            traj.sweeps.len()
        ),
    )
}

fn continuation() -> Result<Line> {
    let g = grid(1e-4);
    let phi0 = RadialCharFn::levy(g, 1.5, 1.0)?;
    let cfg = SolverConfig {
        t_final: 0.5,
        output_times: uniform_outputs(0.5, 5),
        truncation_sequence: vec![4, 8, 16, 32],
        ..SolverConfig::new(2.0, 1.0, 1.5, KernelModel::maxwellian(1.0))
    };
    let c = cutoff_continuation(&cfg, &phi0)?;
    let gap = c.exponent_gap().unwrap_or(f64::NAN);
    let diffs: Vec<String> = c.table.iter().map(|r| format!("{:.2e}", r.sup_diff)).collect();
    line(
        c.is_cauchy() && c.exponents_increase() && gap <= 0.1,
        format!(
            "alpha = 1.5, p = 2: differences [{}], exponents increasing = {}, gap {:.1}%",
            diffs.join(", "),
            c.exponents_increase(),
            100.0 * gap
        ),
    )
}

fn exponent_gap_at_alpha_one() -> Result<String> {
    let full = finite(moment_lambda_alpha(&KernelModel::maxwellian(1.0), 1.0)?);
    let n32 = finite(moment_lambda_alpha(&KernelModel::maxwellian(1.0).truncate(32, false), 1.0)?);
    Ok(format!(
        "alpha = 1: lambda = {full:.4}, lambda_32 = {n32:.4}, gap {:.1}%",
        100.0 * (full - n32) / full
    ))
}

fn norm_envelope(runs: &GrowthRuns) -> Result<Line> {
    let mut checks = 0;
    let mut failures = 0;
    let mut modulus = 0;
    for (solver, traj) in runs.cutoff.iter().chain(&runs.singular_direct) {
        let d = solver.diagnostics(traj, 11)?;
        for r in &d.reports {
            if r.check_name.starts_with("norm_envelope") || r.check_name == "time_modulus" {
                checks += 1;
                failures += usize::from(!r.pass);
                modulus += usize::from(r.check_name == "time_modulus");
            }
        }
    }
    line(
        failures == 0 && modulus == 50 * (runs.cutoff.len() + runs.singular_direct.len()),
        format!("{checks} envelope and time-modulus checks ({modulus} modulus pairs), {failures} violations"),
    )
}

fn scheme_orders() -> Result<Line> {
    let phi0 = RadialCharFn::levy(grid(1e-4), 1.0, 1.0)?;
    let mut ok = true;
    let mut detail = Vec::new();
    for (scheme, lo, hi) in [(Scheme::ExpEuler, 0.8, 1.2), (Scheme::ExpHeun, 1.6, 2.4)] {
        let finals = [0.04, 0.02, 0.01, 0.005]
            .iter()
            .map(|&dt| {
                let cfg = SolverConfig {
                    scheme,
                    dt,
                    t_final: 0.5,
                    adaptive: AdaptivePolicy {
                        enabled: false,
                        ..AdaptivePolicy::default()
                    },
                    ..SolverConfig::new(1.0, 1.0, 1.0, KernelModel::constant(1.0))
                };
                Ok(Solver::new(cfg, &phi0)?.evolve()?.last().phi.values())
            })
            .collect::<Result<Vec<_>>>()?;
        let diffs: Vec<f64> = finals
            .windows(2)
            .map(|w| w[0].iter().zip(&w[1]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .collect();
        let orders: Vec<f64> = diffs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
        ok &= orders.iter().all(|o| (lo..=hi).contains(o));
        detail.push(format!("{scheme:?} orders {orders:.2?}"));
    }
    line(ok, detail.join(", "))
}

fn hash_tree(dir: &Path) -> BTreeMap<String, String> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, String>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let digest = Sha256::digest(std::fs::read(&path).unwrap());
                let name = path.strip_prefix(root).unwrap().display().to_string();
                out.insert(name, format!("{digest:x}"));
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

fn determinism() -> Result<Line> {
    let tmp = tempfile::tempdir()?;
    let mut hashes = Vec::new();
    for run in ["a", "b"] {
        let out = tmp.path().join(run);
        let status = Command::new(env!("CARGO_BIN_EXE_bobylev"))
            .args(["verify-all", "--seed", "2024", "--out"])
            .arg(&out)
            .env_remove(bobylev::cli::OUT_DIR_ENV)
            .output()?;
        if !status.status.success() {
            return line(
                false,
                format!("verify-all exited with {:?}: {}", status.status.code(), String::from_utf8_lossy(&status.stdout)),
            );
        }
        hashes.push(hash_tree(&out));
    }
    line(
        !hashes[0].is_empty() && hashes[0] == hashes[1],
        format!("verify-all exit 0 twice, {} artifact files hash-identical = {}", hashes[0].len(), hashes[0] == hashes[1]),
    )
}

// Runs without the libtest harness so the criterion lines always reach stdout.
fn main() {
    let mut results: Vec<(u32, Result<Line>, f64)> = Vec::new();
    let mut timed = |n: u32, f: &dyn Fn() -> Result<Line>| {
        let start = Instant::now();
        let r = f();
        results.push((n, r, start.elapsed().as_secs_f64()));
    };
    timed(1, &gaussian_fixed_point);
    timed(2, &moment_identities);
    timed(3, &levy_closed_forms);
    timed(4, &norm_identities);
    timed(5, &operator_bound);
    let start = Instant::now();
    let runs = growth_runs();
    let shared = start.elapsed().as_secs_f64();
    match &runs {
        Ok(runs) => {
            timed(6, &|| max_growth_estimate(runs));
            timed(7, &stability);
            timed(8, &picard_contraction);
            timed(9, &continuation);
            timed(10, &|| norm_envelope(runs));
        }
        Err(e) => {
            let msg = e.to_string();
            timed(6, &|| line(false, format!("runs failed: {msg}")));
            timed(7, &stability);
            timed(8, &picard_contraction);
            timed(9, &continuation);
            timed(10, &|| line(false, format!("runs failed: {msg}")));
        }
    }
    timed(11, &scheme_orders);
    timed(12, &determinism);

    println!();
    let mut all = true;
    for (n, r, secs) in &results {
        let (pass, detail) = match r {
            Ok(l) => (l.pass, l.detail.clone()),
            Err(e) => (false, format!("error: {e}")),
        };
        all &= pass;
        println!("criterion {n:>2}: {} | {detail} | {secs:.1} s", if pass { "PASS" } else { "FAIL" });
        if *n == 6 {
            println!("              (shared evolutions for 6 and 10: {shared:.1} s)");
        }
        if *n == 9 {
            match exponent_gap_at_alpha_one() {
                Ok(s) => println!("criterion  9: info | {s}"),
                Err(e) => println!("criterion  9: info | error: {e}"),
            }
        }
    }
    if !all {
        eprintln!("acceptance criteria failed");
        std::process::exit(1);
    }
}
