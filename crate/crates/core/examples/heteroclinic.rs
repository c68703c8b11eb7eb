//! Minimize the quartic energy from the ramp and compare with tanh.
use std::sync::Arc;

use planelike::analysis::zero_level_median;
use planelike::energy::{energy_total, Functional};
use planelike::grid::{make_grid, resolution_for, CellSpec};
use planelike::heis::{build_integer_base, parse_rational};
use planelike::potential::{ModulationSpec, PotentialSpec};
use planelike::solver::{init_ramp, minimize, SolveConfig};

fn main() -> planelike::Result<()> {
    let omega = vec![parse_rational("1")?, parse_rational("0")?];
    let spec = CellSpec::new(build_integer_base(&omega)?, 1, 10.0, 12.0, 0.1)?;
    let res = resolution_for(&spec, 8, 1.0 / 32.0, 16);
    let grid = Arc::new(make_grid(spec, res)?);
    let f = Functional::new(PotentialSpec::quartic(ModulationSpec::constant(1.0)));

    let ramp = init_ramp(grid.clone());
    let cfg = SolveConfig {
        tol: 1e-8,
        ..SolveConfig::default()
    };
    let sol = minimize(&ramp, &f, &cfg)?;
    let c = zero_level_median(&sol.field).unwrap_or(0.0);
    let worst = (0..grid.len())
        .map(|k| (sol.field.values()[k] - (grid.a_of(grid.column_of(k)) - c).tanh()).abs())
        .fold(0.0, f64::max);
    let section = grid.transverse_area() * grid.vertical_period();
    println!("iterations {} residual {:.2e}", sol.iterations, sol.residual);
    println!("sup |u - tanh(a - c)| = {worst:.2e} with c = {c:.2e}");
    println!(
        "energy per section: minimizer {:.6} (8/3 = {:.6}), ramp {:.6} (8 + 4/15 = {:.6})",
        sol.energy.total / section,
        8.0 / 3.0,
        energy_total(&ramp, &f).total / section,
        8.0 + 4.0 / 15.0
    );
    for row in sol.trace.iter().step_by((sol.trace.len() / 8).max(1)) {
        println!(
            "  iter {:>5} total {:.10} step {:.3e}",
            row.iteration, row.total, row.step
        );
    }
    Ok(())
}
