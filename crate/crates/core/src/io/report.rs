//! CSV reports. Floats are written with 17 significant digits so that they
//! read back to the same `f64`.

use std::path::Path;

use crate::analysis::{BirkhoffAudit, DensityReport, SlabReport};
use crate::error::Result;
use crate::solver::{GammaMember, SequenceReport, TraceRow};

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn writer(path: &Path, header: &[&str]) -> Result<csv::Writer<std::fs::File>> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    Ok(w)
}

pub fn write_trace(path: impl AsRef<Path>, trace: &[TraceRow]) -> Result<()> {
    let mut w = writer(
        path.as_ref(),
        &["iteration", "dirichlet", "potential", "total", "step"],
    )?;
    for r in trace {
        w.write_record([
            r.iteration.to_string(),
            fmt_f64(r.dirichlet),
            fmt_f64(r.potential),
            fmt_f64(r.total),
            fmt_f64(r.step),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_density(path: impl AsRef<Path>, d: &DensityReport) -> Result<()> {
    let mut w = writer(
        path.as_ref(),
        &["r", "energy", "vol_plus", "vol_minus", "vol_band"],
    )?;
    for k in 0..d.radii.len() {
        w.write_record([
            fmt_f64(d.radii[k]),
            fmt_f64(d.ball_energies[k]),
            fmt_f64(d.suplevel_volumes[k]),
            fmt_f64(d.sublevel_volumes[k]),
            fmt_f64(d.band_volumes[k]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_slab(path: impl AsRef<Path>, rows: &[SlabReport]) -> Result<()> {
    let mut w = writer(path.as_ref(), &["theta", "width", "pass"])?;
    for r in rows {
        w.write_record([fmt_f64(r.theta), fmt_f64(r.width), r.pass.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_birkhoff(path: impl AsRef<Path>, audit: &BirkhoffAudit) -> Result<()> {
    let mut w = writer(path.as_ref(), &["k", "worst_violation"])?;
    for r in &audit.rows {
        let k = r.k.0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ");
        w.write_record([k, fmt_f64(r.worst_violation)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_interfaces(path: impl AsRef<Path>, members: &[GammaMember]) -> Result<()> {
    let mut w = writer(
        path.as_ref(),
        &[
            "n",
            "thickness",
            "confinement",
            "energy",
            "iterations",
            "converged",
        ],
    )?;
    for m in members {
        w.write_record([
            m.big_n.to_string(),
            fmt_f64(m.interface.thickness),
            fmt_f64(m.interface.confinement),
            fmt_f64(m.bundle.energy.total),
            m.bundle.iterations.to_string(),
            m.bundle.converged.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sequence(path: impl AsRef<Path>, rep: &SequenceReport) -> Result<()> {
    let mut w = writer(
        path.as_ref(),
        &["q", "omega", "energy", "iterations", "converged", "window_diff"],
    )?;
    for (k, m) in rep.members.iter().enumerate() {
        let omega = m
            .omega
            .iter()
            .map(|q| q.to_string())
            .collect::<Vec<_>>()
            .join(" ");
        let diff = if k == 0 {
            String::new()
        } else {
            fmt_f64(rep.window_diffs[k - 1])
        };
        w.write_record([
            m.q.to_string(),
            omega,
            fmt_f64(m.bundle.energy.total),
            m.bundle.iterations.to_string(),
            m.bundle.converged.to_string(),
            diff,
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One named pass/fail assertion of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: String,
    pub pass: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, value: f64, threshold: impl Into<String>, pass: bool) -> Self {
        Check {
            name: name.into(),
            value,
            threshold: threshold.into(),
            pass,
        }
    }
}

pub fn write_checks(path: impl AsRef<Path>, checks: &[Check]) -> Result<()> {
    let mut w = writer(path.as_ref(), &["check", "value", "threshold", "pass"])?;
    for c in checks {
        w.write_record([
            c.name.clone(),
            fmt_f64(c.value),
            c.threshold.clone(),
            c.pass.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_roundtrip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
        }
    }

    #[test]
    fn trace_csv() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("trace.csv");
        let rows = [TraceRow {
            iteration: 3,
            dirichlet: 0.5,
            potential: 0.25,
            total: 0.75,
            step: 1e-3,
        }];
        write_trace(&p, &rows).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("iteration,dirichlet,potential,total,step"));
        assert!(lines.next().unwrap().starts_with("3,5.0000000000000000e-1,"));
    }
}
