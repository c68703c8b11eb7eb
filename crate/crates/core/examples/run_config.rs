//! Parse a run configuration, execute it and reload the saved field.
//!
//! cargo run --release --example run_config -- configs/analyze_small.cfg out/example
use std::path::PathBuf;

use planelike::io::{load_config, load_field, run_pipeline};

fn main() -> planelike::Result<()> {
    let mut args = std::env::args().skip(1);
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let cfg_path = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| root.join("configs/analyze_small.cfg"));
    let out = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("planelike-example"));

    let cfg = load_config(&cfg_path)?;
    println!(
        "{} run, omega = {:?}, M = {}, L = {}",
        cfg.mode.name(),
        cfg.omega_f64(),
        cfg.cell.m,
        cfg.cell.l
    );
    let outcome = run_pipeline(&cfg, &out, true)?;
    for c in &outcome.checks {
        println!(
            "  {:<24} {:>12.4e} {:<16} {}",
            c.name,
            c.value,
            c.threshold,
            if c.pass { "ok" } else { "FAIL" }
        );
    }
    for a in &outcome.artifacts {
        println!("  wrote {}", a.display());
    }
    let dump = out.join("field.hgpf");
    if dump.exists() {
        let u = load_field(&dump)?;
        let r = u.grid().resolution();
        println!("reloaded field on a {}x{}x{} grid", r.ns, r.na, r.nt);
    }
    Ok(())
}
