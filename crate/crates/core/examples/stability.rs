//! Growth of the weighted distance between two solutions against `e^{λ_1 t} d_1(φ₀, ψ₀)`.

use bobylev::charfun::{GridSpec, RadialCharFn};
use bobylev::kernels::KernelModel;
use bobylev::solver::{stability_experiment, uniform_outputs, SolverConfig};
use std::sync::Arc;

fn main() -> bobylev::Result<()> {
    let grid = Arc::new(GridSpec { r_min: 1e-6, ..GridSpec::default() }.build()?);
    let phi0 = RadialCharFn::levy(grid.clone(), 1.0, 1.0)?;
    let psi0 = RadialCharFn::levy(grid, 1.0, 1.2)?;
    let config = SolverConfig {
        t_final: 2.0,
        output_times: uniform_outputs(2.0, 10),
        ..SolverConfig::new(1.0, 1.0, 1.0, KernelModel::constant(1.0))
    };
    let series = stability_experiment(&config, &phi0, &psi0)?;
    println!("lambda_1 = {:.6}, d_1(phi0, psi0) = {:.6}", series.lambda_alpha, series.d0);
    for r in &series.rows {
        println!("t = {:.1}: lhs {:.6e}  rhs {:.6e}  pass {}", r.t, r.lhs, r.rhs, r.pass);
    }
    Ok(())
}
