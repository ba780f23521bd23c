//! `sup (1 − e^{−r^p t})/r^α` over shrinking grids: bounded for `α ≤ p`, growing like
//! `r_min^{p−α}` otherwise.

use bobylev::solver::nonexistence_probe;

fn main() -> bobylev::Result<()> {
    let r_min = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6];
    for (p, alpha) in [(1.0, 1.0), (1.0, 1.5), (1.0, 2.0), (1.5, 2.0)] {
        let probe = nonexistence_probe(p, alpha, 1.0, 1.0, &r_min, 10.0, 50)?;
        let sups: Vec<String> = probe.sup.iter().map(|s| format!("{s:.3e}")).collect();
        println!(
            "p = {p}, alpha = {alpha}: sups [{}], slope {:.4} (expected {:.4})",
            sups.join(", "),
            probe.slope.unwrap_or(f64::NAN),
            probe.expected_slope
        );
    }
    Ok(())
}
