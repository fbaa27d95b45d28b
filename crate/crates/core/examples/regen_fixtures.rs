//! Rewrites the files under `fixtures/`.
//!
//! Run with `cargo run --release -p riskbo --example regen_fixtures`.

use std::path::Path;

use riskbo::bench::fixtures::{self, OracleRow};
use riskbo::bench::{compute_oracle, make_problem, ProblemName, ZMode, ORACLE_GRID};
use riskbo::env::{make_discrete_grid, WeightRule};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let grid1 = make_discrete_grid(1, 100, WeightRule::GaussianBump)?;
    std::fs::write(dir.join(fixtures::ATOMS_1D_FILE), fixtures::render_atoms(&grid1))?;
    let grid2 = make_discrete_grid(2, 8, WeightRule::GaussianBump)?;
    std::fs::write(dir.join(fixtures::ATOMS_2D_FILE), fixtures::render_atoms(&grid2))?;

    let mut rows = Vec::new();
    for problem in ProblemName::ALL {
        for z_mode in [ZMode::Discrete, ZMode::Continuous] {
            let alpha = 0.1;
            let p = make_problem(problem, z_mode, alpha)?;
            let best = compute_oracle(&p, ORACLE_GRID);
            eprintln!("{problem} {}: {:.9} at {:?}", z_mode.as_str(), best.value, best.x);
            rows.push(OracleRow { problem, z_mode, alpha, best });
        }
    }
    std::fs::write(dir.join(fixtures::ORACLE_FILE), fixtures::render_oracle(&rows))?;
    Ok(())
}
