//! Radial densities of the symmetric stable laws, their L¹ norms and power-law tails.

use bobylev::levy::{
    fit_tail_constant, tail_constant, total_mass, wp_l1_norm, wp_l1_norm_closed_form, DensityEvaluator, LevyParams,
};

fn main() -> bobylev::Result<()> {
    for p in [0.5, 1.0, 1.5, 2.0] {
        let params = LevyParams::new(p, 1.0)?;
        let eval = DensityEvaluator::new(p)?;
        println!("p = {p}");
        println!("  mass                {:.10}", total_mass(&params, 50.0)?);
        println!("  |W_p|_1             {:.12} (closed form {:.12})", wp_l1_norm(&params), wp_l1_norm_closed_form(&params));
        if p < 2.0 {
            let raw = 50f64.powf(3.0 + p) * eval.at(50.0, 1.0);
            println!(
                "  tail constant       fit {:.6e}, raw at v = 50 {:.6e}, closed form {:.6e}",
                fit_tail_constant(&eval, 50.0, 1.0),
                raw,
                tail_constant(&params)
            );
        }
        for v in [0.0, 0.5, 1.0, 2.0, 5.0] {
            println!("  f({v:>3}) = {:.8e}", eval.at(v, 1.0));
        }
    }
    Ok(())
}
