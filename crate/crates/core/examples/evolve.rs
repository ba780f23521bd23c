//! Evolves `e^{−r}` under the constant kernel with unit diffusion and prints the diagnostics.

use bobylev::charfun::{GridSpec, RadialCharFn};
use bobylev::kernels::KernelModel;
use bobylev::solver::{uniform_outputs, Solver, SolverConfig};
use std::sync::Arc;

fn main() -> bobylev::Result<()> {
    let grid = Arc::new(GridSpec::default().build()?);
    let phi0 = RadialCharFn::levy(grid, 1.0, 1.0)?;
    let config = SolverConfig {
        t_final: 1.0,
        output_times: uniform_outputs(1.0, 5),
        ..SolverConfig::new(1.0, 1.0, 1.0, KernelModel::constant(1.0))
    };
    let solver = Solver::new(config, &phi0)?;
    let traj = solver.evolve()?;
    let diag = solver.diagnostics(&traj, 0)?;
    println!("{:>5} {:>14} {:>10} {:>10} {:>8}", "t", "growth margin", "|phi-1|_1", "envelope", "phi(1)");
    for (row, frame) in diag.rows.iter().zip(&traj.frames) {
        println!(
            "{:>5.2} {:>14.3e} {:>10.6} {:>10.4} {:>8.5}",
            row.t,
            row.growth_margin,
            row.kalpha,
            row.envelope,
            frame.phi.eval(1.0)?
        );
    }
    println!("{} steps, {} checks, all pass: {}", traj.steps.len(), diag.reports.len(), diag.pass());
    Ok(())
}
