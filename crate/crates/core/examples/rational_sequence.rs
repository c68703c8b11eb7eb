//! Minimizers for rational approximations of an irrational direction.
use std::sync::Arc;

use planelike::energy::Functional;
use planelike::grid::{make_grid, resolution_for, CellSpec, Grid};
use planelike::heis::IntegerBase;
use planelike::io::pipeline::{sequence_window, transverse_resolution};
use planelike::potential::{ModulationSpec, PotentialSpec};
use planelike::solver::{rational_sequence_solve, SolveConfig};

fn main() -> planelike::Result<()> {
    let f = Functional::new(PotentialSpec::quartic(ModulationSpec::cosine(1.5, 0.5, 2)));
    let build = |base: &IntegerBase| -> planelike::Result<Arc<Grid>> {
        let spec = CellSpec::new(base.clone(), 1, 10.0, 12.0, 0.1)?;
        let ns = transverse_resolution(base, 1, 64);
        let res = resolution_for(&spec, ns, 1.0 / 16.0, 8);
        Ok(Arc::new(make_grid(spec, res)?))
    };
    let golden = (5f64.sqrt() - 1.0) / 2.0;
    let window = sequence_window(1, 2.0);
    let rep = rational_sequence_solve(
        &[1.0, golden],
        &[2, 5, 13],
        &f,
        &SolveConfig::default(),
        &build,
        &window,
        2,
    )?;
    for m in &rep.members {
        let omega: Vec<String> = m.omega.iter().map(|q| q.to_string()).collect();
        let r = m.bundle.field.grid().resolution();
        println!(
            "q = {:>2}: omega = ({}) grid {}x{}x{} energy {:.6} iterations {}",
            m.q,
            omega.join(", "),
            r.ns,
            r.na,
            r.nt,
            m.bundle.energy.total,
            m.bundle.iterations
        );
    }
    println!(
        "window sup differences {:.4?}, decreasing: {}",
        rep.window_diffs, rep.decreasing
    );
    Ok(())
}
