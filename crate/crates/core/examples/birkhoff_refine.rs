//! Plane-like minimizer for a modulated potential along omega = (1, 2):
//! refine to a Birkhoff fixed point and audit the ordering.
use std::sync::Arc;

use planelike::analysis::{birkhoff_audit, slab_width, strip_scan};
use planelike::energy::Functional;
use planelike::grid::{make_grid, resolution_for, translate_field, CellSpec};
use planelike::heis::{build_integer_base, parse_rational};
use planelike::io::pipeline::transverse_resolution;
use planelike::potential::{ModulationSpec, PotentialSpec};
use planelike::solver::{birkhoff_generators, birkhoff_refine, init_ramp, minimize, SolveConfig};

fn main() -> planelike::Result<()> {
    let omega = vec![parse_rational("1")?, parse_rational("2")?];
    let base = build_integer_base(&omega)?;
    let spec = CellSpec::new(base.clone(), 1, 10.0, 14.0, 0.1)?;
    let ns = transverse_resolution(&base, 1, 20);
    let res = resolution_for(&spec, ns, 1.0 / 32.0, 16);
    let grid = Arc::new(make_grid(spec, res)?);
    let f = Functional::new(PotentialSpec::quartic(ModulationSpec::cosine(1.5, 0.5, 2)));
    let cfg = SolveConfig::default();

    let b = minimize(&init_ramp(grid), &f, &cfg)?;
    let gens = birkhoff_generators(&b.field, 2);
    let r = birkhoff_refine(&b, &f, &cfg, &gens)?;
    println!(
        "energy {:.8} -> {:.8} after {} passes",
        b.energy.total, r.energy.total, r.refinement_passes
    );

    let audit = birkhoff_audit(&r.field, 2)?;
    for row in &audit.rows {
        println!("  k = {:?}: worst violation {:.2e}", row.k.0, row.worst_violation);
    }
    for k in base.transverse() {
        let d = translate_field(&r.field, k)?.sup_diff(&r.field)?;
        println!("  |T_k u - u| for k = {:?} (orthogonal to omega): {d:.2e}", k.0);
    }
    for theta in [0.5, 0.9] {
        let s = slab_width(&r.field, theta, 8.0);
        println!("slab width at {theta}: {:.4}", s.width);
    }
    let strips = strip_scan(&r.field, 0.1, 10.0);
    println!("{} clean strips, first {:?}", strips.len(), strips.first());
    Ok(())
}
