//! Structural checks of the three well shapes.
use planelike::heis::GroupPoint;
use planelike::potential::{structural_check, ModulationSpec, PotentialSpec};

fn main() {
    let us: Vec<f64> = (-100..=100).map(|k| k as f64 / 100.0).collect();
    let xis: Vec<GroupPoint> = (0..16)
        .map(|k| {
            let s = k as f64 / 16.0;
            GroupPoint::new(vec![s, 0.37 * s], 0.0)
        })
        .collect();
    let q = ModulationSpec::cosine(1.5, 0.5, 2);
    for spec in [
        PotentialSpec::quartic(q.clone()),
        PotentialSpec::power_d(1.5, q.clone()),
        PotentialSpec::indicator(q),
    ] {
        let r = structural_check(&spec, &us, &xis);
        println!(
            "{:<10} pass {} growth {:.4} sup {:.4} modulation inf {:.4} deriv {:?}",
            spec.kind.name(),
            r.pass,
            r.growth_const,
            r.sup,
            r.modulation_inf,
            r.deriv_consts
        );
        for (theta, g) in &r.gamma {
            println!("    inf over |u| <= {theta}: {g:.4}");
        }
        for f in &r.failures {
            println!("    failed: {f}");
        }
    }
}
