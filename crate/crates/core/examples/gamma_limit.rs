//! Sharp-interface scaling: the transition layer thins like 1/N.
use std::sync::Arc;

use planelike::grid::{make_grid, resolution_for, CellSpec};
use planelike::heis::{build_integer_base, parse_rational};
use planelike::potential::ModulationSpec;
use planelike::solver::{gamma_sequence_solve, SolveConfig};

fn main() -> planelike::Result<()> {
    let omega = vec![parse_rational("1")?, parse_rational("0")?];
    let spec = CellSpec::new(build_integer_base(&omega)?, 1, 10.0, 12.0, 0.1)?;
    let res = resolution_for(&spec, 16, 1.0 / 32.0, 16);
    let grid = Arc::new(make_grid(spec, res)?);
    for (label, alpha) in [
        ("alpha = 1", ModulationSpec::constant(1.0)),
        ("alpha = 1.5 + 0.5 cos cos", ModulationSpec::cosine(1.5, 0.5, 2)),
    ] {
        println!("{label}");
        let ms = gamma_sequence_solve(&alpha, &[1, 2, 4, 8], grid.clone(), &SolveConfig::default())?;
        let mut prev: Option<f64> = None;
        for m in &ms {
            let t = m.interface.thickness;
            let ratio = prev.map(|p| format!("{:.3}", t / p)).unwrap_or_default();
            println!(
                "  N = {:>2}: thickness {t:.4} {ratio:>6} confinement {:.4} energy {:.5}",
                m.big_n, m.interface.confinement, m.bundle.energy.total
            );
            prev = Some(t);
        }
    }
    Ok(())
}
