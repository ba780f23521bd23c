//! Drives the `evolve` command from a JSON configuration, as the binary does.

use bobylev::cli::{run, Command, Params};

fn main() -> bobylev::Result<()> {
    let params = Params::from_json(
        r#"{
            "p": 2, "delta_p": 0.5, "alpha": 1,
            "kernel": {"family": "maxwellian_singular", "kappa_or_c": 1, "truncation": {"n": 16, "cap": false}},
            "initial": {"preset": "mixture", "members": [
                {"weight": 0.5, "p": 1, "t": 1},
                {"weight": 0.5, "p": 2, "t": 0.5}
            ]},
            "T_final": 0.5,
            "outputs": {"count": 5},
            "seed": 42
        }"#,
    )?;
    let out = std::env::temp_dir().join("bobylev-run-config");
    let outcome = run(Command::Evolve, &params, &out)?;
    println!("{} checks, {} failed, artifacts in {}", outcome.reports.len(), outcome.failures().len(), out.display());
    for entry in std::fs::read_dir(&out)? {
        println!("  {}", entry?.file_name().to_string_lossy());
    }
    Ok(())
}
