//! Angular moments of the constant kernel, the singular Maxwellian kernel and its truncations.

use bobylev::kernels::{KernelModel, MomentConstants};
use bobylev::quadrature::Estimate;

fn show(e: &Estimate) -> String {
    match e {
        Estimate::Finite { value, .. } => format!("{value:>12.6}"),
        Estimate::Divergent { .. } => format!("{:>12}", "divergent"),
    }
}

fn main() -> bobylev::Result<()> {
    let singular = KernelModel::maxwellian(1.0);
    let kernels = [
        ("b = 1", KernelModel::constant(1.0)),
        ("singular", singular.clone()),
        ("b_8", singular.truncate(8, false)),
        ("b_32", singular.truncate(32, false)),
        ("b_32 capped", singular.truncate(32, true)),
    ];
    println!("{:<12} {:>5} {:>12} {:>12} {:>12} {:>12}", "kernel", "alpha", "lambda", "gamma", "mu", "|b|_1");
    for (name, k) in &kernels {
        for alpha in [0.4, 0.6, 1.0, 1.5, 2.0] {
            let c = MomentConstants::compute(k, alpha)?;
            println!(
                "{name:<12} {alpha:>5} {} {} {} {}",
                show(&c.lambda_alpha),
                show(&c.gamma_alpha),
                show(&c.mu_alpha),
                show(&c.b_l1)
            );
        }
    }
    Ok(())
}
