//! The isotropic collision operator on a few data, with the `5 μ_α ‖φ − 1‖_α r^α` bound.

use bobylev::charfun::{GridSpec, RadialCharFn};
use bobylev::collision::{bobylev_isotropic, verify_operator_bound, QuadratureSpec};
use bobylev::kernels::KernelModel;
use std::sync::Arc;

fn main() -> bobylev::Result<()> {
    let grid = Arc::new(GridSpec::default().build()?);
    let spec = QuadratureSpec::default();
    let data = [
        ("W_1", RadialCharFn::levy(grid.clone(), 1.0, 1.0)?),
        ("W_1.5", RadialCharFn::levy(grid.clone(), 1.5, 1.0)?),
        ("gaussian", RadialCharFn::gaussian(grid.clone(), 0.5)?),
    ];
    for (kname, kernel) in [("b = 1", KernelModel::constant(1.0)), ("singular", KernelModel::maxwellian(1.0))] {
        println!("{kname}");
        for (name, phi) in &data {
            let values: Vec<String> = [0.1, 1.0, 10.0]
                .iter()
                .map(|&r| bobylev_isotropic(phi, &kernel, r, &spec).map(|b| format!("{b:>12.4e}")))
                .collect::<bobylev::Result<_>>()?;
            let bound = verify_operator_bound(phi, &kernel, 1.0, &[0.25, 1.0, 4.0], &spec)?;
            let worst = bound.iter().map(|r| r.lhs / r.rhs).fold(0.0, f64::max);
            println!("  {name:<9} B at r = 0.1, 1, 10: {}   max lhs/rhs of bound {worst:.3}", values.join(" "));
        }
    }
    Ok(())
}
