//! Density estimates around an interface point: log-log slopes of phase
//! volumes, band volume and energy in Koranyi balls, plus the rescaled
//! level-set distance.
use std::sync::Arc;

use planelike::analysis::{clean_ball_search, density_profile, epsilon_rescale_distance, zero_level_median};
use planelike::energy::Functional;
use planelike::grid::{make_grid, CellSpec, Resolution};
use planelike::heis::{build_integer_base, parse_rational};
use planelike::io::config::default_radii;
use planelike::potential::{ModulationSpec, PotentialSpec};
use planelike::solver::{birkhoff_generators, birkhoff_refine, init_ramp, minimize, SolveConfig};

fn main() -> planelike::Result<()> {
    let omega = vec![parse_rational("1")?, parse_rational("0")?];
    let spec = CellSpec::new(build_integer_base(&omega)?, 1, 10.0, 18.0, 0.1)?;
    let grid = Arc::new(make_grid(spec, Resolution::new(64, 128, 32))?);
    let f = Functional::new(PotentialSpec::quartic(ModulationSpec::cosine(1.5, 0.5, 2)));
    let cfg = SolveConfig::default();

    let b = minimize(&init_ramp(grid.clone()), &f, &cfg)?;
    let b = birkhoff_refine(&b, &f, &cfg, &birkhoff_generators(&b.field, 2))?;
    let c = zero_level_median(&b.field).unwrap_or(0.0);
    let center = grid.point_at(&[0.0], c, 0.0);
    let d = density_profile(&b.field, &f, &center, &default_radii(), 0.0, 0.9)?;

    println!(
        "{:>8} {:>12} {:>12} {:>12} {:>12}",
        "r", "energy", "vol u>=0", "vol u<=0", "band"
    );
    for k in 0..d.radii.len() {
        println!(
            "{:>8.3} {:>12.4} {:>12.4} {:>12.4} {:>12.4}",
            d.radii[k], d.ball_energies[k], d.suplevel_volumes[k], d.sublevel_volumes[k], d.band_volumes[k]
        );
    }
    for (name, fit) in [
        ("u >= 0", d.suplevel_fit),
        ("u <= 0", d.sublevel_fit),
        ("band", d.band_fit),
        ("energy", d.energy_fit),
    ] {
        println!("exponent {name:<7} {:.3} +- {:.3}", fit.exponent, fit.half_width);
    }

    let dist = epsilon_rescale_distance(&b.field, &[1.0, 0.5, 0.25], 0.9, 4.0)?;
    println!("rescaled level-set distance for eps = 1, 1/2, 1/4: {dist:.4?}");
    let ball = clean_ball_search(&b.field, 0.1, 10.0, 1.0)?;
    println!("largest clean ball found: radius {:.3}", ball.radius);
    Ok(())
}
