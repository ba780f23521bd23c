//! Truncated kernels `b_n` approaching the singular kernel: Cauchy table, exponents and the
//! extrapolated limit against direct stepping.

use bobylev::charfun::{GridSpec, RadialCharFn};
use bobylev::kernels::KernelModel;
use bobylev::solver::{cutoff_continuation, uniform_outputs, Solver, SolverConfig};
use std::sync::Arc;

fn main() -> bobylev::Result<()> {
    let grid = Arc::new(GridSpec::default().build()?);
    let phi0 = RadialCharFn::levy(grid, 1.5, 1.0)?;
    let config = SolverConfig {
        t_final: 0.5,
        output_times: uniform_outputs(0.5, 5),
        truncation_sequence: vec![4, 8, 16, 32],
        ..SolverConfig::new(2.0, 1.0, 1.5, KernelModel::maxwellian(1.0))
    };
    let cont = cutoff_continuation(&config, &phi0)?;
    for m in &cont.members {
        println!("n = {:>2}: exponent {:.5} (lambda {:.5})", m.n, m.exponent, cont.lambda_alpha);
    }
    for row in &cont.table {
        let ratio = row.ratio.map_or(String::new(), |r| format!(", ratio {r:.2}"));
        println!("n = {:>2} -> {:>2}: sup diff {:.3e}{ratio}", row.n_coarse, row.n_fine, row.sup_diff);
    }
    let direct = Solver::new(config, &phi0)?.evolve()?.last().phi.values();
    let sup = |v: &[f64]| v.iter().zip(&direct).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let finest = cont.members.last().expect("members").trajectory.last().phi.values();
    println!("direct vs n = 32: {:.2e}", sup(&finest));
    if let Some(limit) = &cont.limit {
        println!("direct vs extrapolated limit: {:.2e}", sup(limit));
    }
    Ok(())
}
