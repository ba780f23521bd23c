//! Picard iteration on one contraction window, compared with exponential Heun stepping.

use bobylev::charfun::{GridSpec, RadialCharFn};
use bobylev::kernels::KernelModel;
use bobylev::solver::{AdaptivePolicy, PicardSpec, Scheme, Solver, SolverConfig};
use std::sync::Arc;

fn main() -> bobylev::Result<()> {
    let grid = Arc::new(GridSpec { n_log: 128, n_linear: 16, ..GridSpec::default() }.build()?);
    let phi0 = RadialCharFn::levy(grid, 1.0, 1.0)?;
    let base = SolverConfig::new(1.0, 1.0, 1.0, KernelModel::constant(1.0));
    let window = Solver::new(SolverConfig { scheme: Scheme::Picard, ..base.clone() }, &phi0)?.contraction_window()?;
    let nodes = 64;
    let picard = SolverConfig {
        scheme: Scheme::Picard,
        t_final: window,
        picard: PicardSpec { time_nodes: nodes, ..PicardSpec::default() },
        ..base.clone()
    };
    let traj = Solver::new(picard.clone(), &phi0)?.picard_solve()?;
    println!("window T0 = {window:.6}");
    for s in &traj.sweeps {
        let ratio = s.ratio.map_or(String::from("-"), |r| format!("{r:.4}"));
        println!("sweep {:>2}: distance {:.3e}, ratio {ratio}, bound {:.4}", s.sweep, s.distance, s.bound);
    }
    let stepped = Solver::new(
        SolverConfig {
            scheme: Scheme::ExpHeun,
            dt: window / nodes as f64,
            adaptive: AdaptivePolicy { enabled: false, ..AdaptivePolicy::default() },
            ..picard
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
    println!("sup |picard - exp_heun| at T0 = {diff:.2e}");
    Ok(())
}
