//! solve -> refine -> analyze -> report, driven by a [`RunConfig`].

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use num_integer::Integer;

use crate::analysis::{
    birkhoff_audit, clean_ball_search, density_profile, epsilon_rescale_distance, slab_width, strip_scan,
    zero_level_median,
};
use crate::energy::{energy_total, Functional};
use crate::error::Result;
use crate::grid::{make_grid, resolution_for, CellSpec, Field, Grid};
use crate::heis::{build_integer_base, GroupContext, GroupPoint, IntegerBase};
use crate::io::config::{Mode, RunConfig};
use crate::io::field_io::{dump_field, load_field, load_field_onto};
use crate::io::report::{self, Check};
use crate::potential::PotentialKind;
use crate::solver::{
    birkhoff_generators, birkhoff_refine, enlarge_check, gamma_sequence_solve, init_ramp, minimize,
    project_constraints, rational_sequence_solve, MinimizerBundle,
};

/// Tolerance for the Birkhoff ordering of a refined minimizer.
pub const BIRKHOFF_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct Outcome {
    pub mode: Mode,
    pub checks: Vec<Check>,
    pub artifacts: Vec<PathBuf>,
}

impl Outcome {
    pub fn success(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

pub fn build_base(cfg: &RunConfig) -> Result<IntegerBase> {
    build_integer_base(&cfg.omega)
}

/// Transverse resolution rounded up so that lattice translations land on
/// nodes, when that stays affordable.
pub fn transverse_resolution(base: &IntegerBase, p: u32, ns: usize) -> usize {
    let l = base
        .transverse()
        .iter()
        .map(|k| k.dot(&k.0) as usize * p as usize)
        .fold(2usize, |a, b| a.lcm(&b));
    let rounded = ns.div_ceil(l) * l;
    if rounded <= (4 * ns).max(1024) {
        rounded
    } else {
        ns
    }
}

pub fn build_grid(cfg: &RunConfig, base: &IntegerBase) -> Result<Arc<Grid>> {
    let spec = CellSpec::new(base.clone(), cfg.cell.p, cfg.cell.m, cfg.cell.l, cfg.cell.delta)?;
    let ns = transverse_resolution(base, cfg.cell.p, cfg.grid.ns);
    let res = resolution_for(&spec, ns, cfg.grid.da, cfg.grid.nt);
    Ok(Arc::new(make_grid(spec, res)?))
}

struct Run<'a> {
    cfg: &'a RunConfig,
    out: &'a Path,
    deterministic: bool,
    checks: Vec<Check>,
    artifacts: Vec<PathBuf>,
    timings: Vec<(String, f64)>,
}

impl Run<'_> {
    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.out.join(name);
        self.artifacts.push(p.clone());
        p
    }

    fn check(&mut self, name: &str, value: f64, threshold: impl Into<String>, pass: bool) {
        self.checks.push(Check::new(name, value, threshold, pass));
    }

    fn timed<T>(&mut self, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let t = Instant::now();
        let v = f()?;
        self.timings.push((stage.to_string(), t.elapsed().as_secs_f64()));
        Ok(v)
    }

    fn functional(&self) -> Functional {
        Functional::new(self.cfg.potential.clone())
    }

    fn start(&self, grid: Arc<Grid>) -> Result<Field> {
        match &self.cfg.restart {
            Some(p) => Ok(project_constraints(&load_field_onto(p, grid)?)),
            None => Ok(init_ramp(grid)),
        }
    }

    fn solve(&mut self) -> Result<MinimizerBundle> {
        let base = build_base(self.cfg)?;
        let grid = build_grid(self.cfg, &base)?;
        let start = self.start(grid)?;
        let f = self.functional();
        let b = self.timed("solve", || minimize(&start, &f, &self.cfg.solver))?;
        let ramp = energy_total(&init_ramp(start.grid().clone()), &f).total;
        self.check(
            "converged",
            b.residual,
            format!("< {:e}", self.cfg.solver.tol),
            b.converged,
        );
        self.check(
            "energy_below_ramp",
            b.energy.total,
            format!("<= {}", report::fmt_f64(ramp)),
            b.energy.total <= ramp,
        );
        Ok(b)
    }

    fn refine(&mut self, b: &MinimizerBundle) -> Result<MinimizerBundle> {
        let f = self.functional();
        let gens = birkhoff_generators(&b.field, self.cfg.analysis.kmax);
        let r = self.timed("refine", || birkhoff_refine(b, &f, &self.cfg.solver, &gens))?;
        self.check(
            "refined_converged",
            r.residual,
            format!("< {:e}", self.cfg.solver.tol),
            r.converged,
        );
        Ok(r)
    }

    fn write_bundle(&mut self, b: &MinimizerBundle) -> Result<()> {
        let p = self.path("field.hgpf");
        dump_field(&b.field, &p)?;
        let p = self.path("trace.csv");
        report::write_trace(&p, &b.trace)
    }

    fn analyze(&mut self, field: &Field) -> Result<()> {
        let cfg = self.cfg;
        let a = &cfg.analysis;
        let f = self.functional();
        let g = field.grid().clone();

        let audit = self.timed("birkhoff", || birkhoff_audit(field, a.kmax))?;
        report::write_birkhoff(self.path("birkhoff.csv"), &audit)?;
        self.check(
            "birkhoff",
            audit.worst_violation,
            format!("<= {BIRKHOFF_TOL:e}"),
            audit.worst_violation <= BIRKHOFF_TOL,
        );

        let levels = [0.5, a.theta, 1.0 - cfg.cell.delta];
        let slabs: Vec<_> = levels.iter().map(|&t| slab_width(field, t, a.m0_bound)).collect();
        report::write_slab(self.path("slab.csv"), &slabs)?;
        let worst = slabs.iter().map(|s| s.width).fold(0.0, f64::max);
        self.check(
            "slab",
            worst,
            format!("<= {}", a.m0_bound),
            slabs.iter().all(|s| s.pass),
        );

        let c = zero_level_median(field).unwrap_or(0.0);
        let s0 = vec![0.0; g.nt_dirs()];
        let center = g.point_at(&s0, c, 0.0);
        let d = self.timed("density", || {
            density_profile(field, &f, &center, &a.radii, 0.0, a.theta0)
        })?;
        report::write_density(self.path("density.csv"), &d)?;
        let q = GroupContext::new(cfg.n)?.hom_dim() as f64;
        for (name, fit, lo, hi) in [
            ("exponent_vol_plus", d.suplevel_fit, q - 0.4, q + 0.2),
            ("exponent_vol_minus", d.sublevel_fit, q - 0.4, q + 0.2),
            ("exponent_vol_band", d.band_fit, q - 1.4, q - 0.6),
            ("exponent_energy", d.energy_fit, q - 1.4, q - 0.6),
        ] {
            let e = fit.exponent;
            self.check(name, e, format!("[{lo}, {hi}]"), e >= lo && e <= hi);
        }

        let eps = epsilon_rescale_distance(field, &a.epsilons, a.theta, a.window)?;
        let mono = eps.windows(2).all(|w| w[1] <= 1.1 * w[0]);
        self.check(
            "epsilon_nonincreasing",
            *eps.last().unwrap_or(&0.0),
            "within 10%",
            mono,
        );

        let ball = self.timed("clean_ball", || {
            clean_ball_search(field, cfg.cell.delta, cfg.cell.m, a.r0)
        })?;
        self.check("clean_ball", ball.radius, format!(">= {}", a.r0), ball.pass);
        let strips = strip_scan(field, cfg.cell.delta, cfg.cell.m);
        self.check("strip_found", strips.len() as f64, ">= 1", !strips.is_empty());
        Ok(())
    }

    fn heteroclinic_match(&mut self, field: &Field) {
        let p = &self.cfg.potential;
        if p.kind != PotentialKind::Quartic || !p.modulation.is_constant() {
            return;
        }
        let g = field.grid();
        let c = zero_level_median(field).unwrap_or(0.0);
        let k = p.modulation.mean.sqrt();
        let worst = field
            .values()
            .iter()
            .enumerate()
            .map(|(idx, v)| (v - (k * (g.a_of(g.column_of(idx)) - c)).tanh()).abs())
            .fold(0.0, f64::max);
        self.check("tanh_match", worst, "<= 5e-2", worst <= 5e-2);
    }

    fn finish(mut self) -> Result<Outcome> {
        report::write_checks(self.path("checks.csv"), &self.checks.clone())?;
        if !self.deterministic {
            let p = self.path("timings.csv");
            let mut w = csv::Writer::from_path(p)?;
            w.write_record(["stage", "seconds"])?;
            for (s, t) in &self.timings {
                w.write_record([s.clone(), report::fmt_f64(*t)])?;
            }
            w.flush()?;
        }
        Ok(Outcome {
            mode: self.cfg.mode,
            checks: self.checks,
            artifacts: self.artifacts,
        })
    }
}

/// Runs the configured mode, writing artifacts into `out`. With
/// `deterministic` no wall-clock data is written, so identical inputs give
/// byte-identical outputs.
pub fn run_pipeline(cfg: &RunConfig, out: &Path, deterministic: bool) -> Result<Outcome> {
    std::fs::create_dir_all(out)?;
    let mut run = Run {
        cfg,
        out,
        deterministic,
        checks: Vec::new(),
        artifacts: Vec::new(),
        timings: Vec::new(),
    };
    match cfg.mode {
        Mode::Solve => {
            let b = run.solve()?;
            run.write_bundle(&b)?;
        }
        Mode::Refine => {
            let b = run.solve()?;
            let r = run.refine(&b)?;
            run.write_bundle(&r)?;
        }
        Mode::Analyze => {
            let field = match &cfg.analysis.input {
                Some(p) => load_field(p)?,
                None => {
                    let b = run.solve()?;
                    let r = run.refine(&b)?;
                    run.write_bundle(&r)?;
                    r.field
                }
            };
            run.analyze(&field)?;
        }
        Mode::Verify => {
            let b = run.solve()?;
            let r = run.refine(&b)?;
            run.write_bundle(&r)?;
            run.heteroclinic_match(&r.field);
            run.analyze(&r.field)?;
            let a_extra = cfg.analysis.a_extra.unwrap_or(cfg.cell.m);
            let f = run.functional();
            let e = run.timed("enlarge", || enlarge_check(&r, &f, &cfg.solver, a_extra))?;
            run.check("enlarge", e.sup_diff, "<= 1e-3", e.pass || e.sup_diff <= 1e-3);
        }
        Mode::Sequence => {
            let f = run.functional();
            let target = cfg.omega_f64();
            let build = |base: &IntegerBase| build_grid(cfg, base);
            let window = sequence_window(cfg.n, cfg.analysis.window.min(2.0));
            let rep = run.timed("sequence", || {
                rational_sequence_solve(
                    &target,
                    &cfg.denominators,
                    &f,
                    &cfg.solver,
                    &build,
                    &window,
                    cfg.analysis.kmax,
                )
            })?;
            report::write_sequence(run.path("sequence.csv"), &rep)?;
            let last = rep.window_diffs.last().copied().unwrap_or(0.0);
            run.check(
                "window_diffs_decreasing",
                last,
                "strictly decreasing",
                rep.decreasing,
            );
            for m in &rep.members {
                let q = m.q;
                run.check(
                    &format!("q{q}_converged"),
                    m.bundle.residual,
                    "converged",
                    m.bundle.converged,
                );
                let audit = birkhoff_audit(&m.bundle.field, cfg.analysis.kmax)?;
                run.check(
                    &format!("q{q}_birkhoff"),
                    audit.worst_violation,
                    format!("<= {BIRKHOFF_TOL:e}"),
                    audit.worst_violation <= BIRKHOFF_TOL,
                );
                let s = slab_width(&m.bundle.field, 1.0 - cfg.cell.delta, cfg.analysis.m0_bound);
                run.check(
                    &format!("q{q}_slab"),
                    s.width,
                    format!("<= {}", s.m0_bound),
                    s.pass,
                );
            }
        }
        Mode::Gamma => {
            let base = build_base(cfg)?;
            let grid = build_grid(cfg, &base)?;
            let alpha = cfg.potential.modulation.clone();
            let ms = run.timed("gamma", || {
                gamma_sequence_solve(&alpha, &cfg.gamma_ns, grid, &cfg.solver)
            })?;
            report::write_interfaces(run.path("interfaces.csv"), &ms)?;
            for w in ms.windows(2) {
                let doublings = (w[1].big_n as f64 / w[0].big_n as f64).log2();
                let ratio = (w[1].interface.thickness / w[0].interface.thickness).powf(1.0 / doublings);
                let name = format!("thickness_ratio_{}_{}", w[0].big_n, w[1].big_n);
                run.check(&name, ratio, "[0.35, 0.65]", (0.35..=0.65).contains(&ratio));
            }
            let conf = ms.iter().map(|m| m.interface.confinement).fold(0.0, f64::max);
            run.check(
                "confinement",
                conf,
                format!("<= {}", cfg.analysis.m0_bound),
                conf <= cfg.analysis.m0_bound,
            );
            for m in &ms {
                run.check(
                    &format!("n{}_converged", m.big_n),
                    m.bundle.residual,
                    "converged",
                    m.bundle.converged,
                );
            }
        }
    }
    run.finish()
}

/// Grid of sample points `|x_k|, |y_k| <= half` with a few heights.
pub fn sequence_window(n: usize, half: f64) -> Vec<GroupPoint> {
    let steps: usize = if n == 1 { 16 } else { 4 };
    let dim = 2 * n;
    let per = steps + 1;
    let mut out = Vec::new();
    for code in 0..per.pow(dim as u32) {
        let mut c = code;
        let z: Vec<f64> = (0..dim)
            .map(|_| {
                let v = -half + 2.0 * half * (c % per) as f64 / steps as f64;
                c /= per;
                v
            })
            .collect();
        for t in [-0.5, 0.0, 0.5] {
            out.push(GroupPoint::new(z.clone(), t));
        }
    }
    out
}
