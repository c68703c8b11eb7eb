//! Constrained minimization on the slab class and the drivers built on it.
//!
//! Admissible fields satisfy `|u| <= 1`, `u >= 1 - delta` for `a >= M` and
//! `u <= -1 + delta` for `a <= -M`. The box is enforced by exact projection.

use std::sync::Arc;

use rayon::prelude::*;

use crate::energy::{EnergyBreakdown, EnergyModel, Functional};
use crate::error::{Error, Result};
use crate::grid::{translate_field, translation_commensurate, vertical_shift, Field, Grid};
use crate::heis::{build_integer_base, GroupPoint, IntegerBase, LatticeVector};
use crate::potential::{ModulationSpec, PotentialKind, PotentialSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct SolveConfig {
    pub max_iters: usize,
    /// Bound on `|u - P(u - grad E(u))|_inf` at convergence.
    pub tol: f64,
    pub seed: u64,
    /// Obstacle formulation: descend on the Dirichlet term only.
    pub d0_mode: bool,
    /// Use momentum (restarted whenever the energy would increase).
    pub accelerated: bool,
    pub max_refine_passes: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            max_iters: 50_000,
            tol: 1e-7,
            seed: 0,
            d0_mode: false,
            accelerated: true,
            max_refine_passes: 8,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument("tol must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub dirichlet: f64,
    pub potential: f64,
    pub total: f64,
    /// Sup norm of the accepted update.
    pub step: f64,
}

#[derive(Debug, Clone)]
pub struct MinimizerBundle {
    pub field: Field,
    pub energy: EnergyBreakdown,
    pub iterations: usize,
    pub converged: bool,
    pub refinement_passes: usize,
    /// Final stationarity residual.
    pub residual: f64,
    pub trace: Vec<TraceRow>,
}

/// Slab constraint; defaults to the cell spec of the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constraint {
    pub m: f64,
    pub delta: f64,
}

impl Constraint {
    pub fn of(grid: &Grid) -> Self {
        Constraint {
            m: grid.spec().m,
            delta: grid.spec().delta,
        }
    }

    fn column_bounds(&self, grid: &Grid) -> (Vec<f64>, Vec<f64>) {
        let na = grid.resolution().na;
        let mut lo = vec![-1.0; na];
        let mut hi = vec![1.0; na];
        for i in 0..na {
            let a = grid.a_of(i);
            if a >= self.m {
                lo[i] = 1.0 - self.delta;
            }
            if a <= -self.m {
                hi[i] = -1.0 + self.delta;
            }
        }
        (lo, hi)
    }
}

struct Projector {
    lo: Vec<f64>,
    hi: Vec<f64>,
    nt: usize,
    na: usize,
}

impl Projector {
    fn new(grid: &Grid, c: Constraint) -> Self {
        let (lo, hi) = c.column_bounds(grid);
        let r = grid.resolution();
        Projector {
            lo,
            hi,
            nt: r.nt,
            na: r.na,
        }
    }

    #[inline]
    fn clamp(&self, idx: usize, v: f64) -> f64 {
        let i = (idx / self.nt) % self.na;
        v.clamp(self.lo[i], self.hi[i])
    }

    fn apply(&self, u: &mut [f64]) {
        u.par_iter_mut()
            .enumerate()
            .for_each(|(k, v)| *v = self.clamp(k, *v));
    }
}

/// `clamp(4 a, -1, 1)` with `a = omega_hat . z`.
pub fn init_ramp(grid: Arc<Grid>) -> Field {
    Field::from_coords(grid, |_, a, _| (4.0 * a).clamp(-1.0, 1.0))
}

pub fn project_constraints(field: &Field) -> Field {
    project_with(field, Constraint::of(field.grid()))
}

pub fn project_with(field: &Field, c: Constraint) -> Field {
    let mut out = field.clone();
    Projector::new(field.grid(), c).apply(out.values_mut());
    out
}

fn check_same(u: &Field, v: &Field) -> Result<()> {
    let (a, b) = (u.grid(), v.grid());
    if Arc::ptr_eq(a, b) || (a.spec() == b.spec() && a.resolution() == b.resolution()) {
        Ok(())
    } else {
        Err(Error::GridMismatch)
    }
}

pub fn min_combine(u: &Field, v: &Field) -> Result<Field> {
    check_same(u, v)?;
    let vals = u
        .values()
        .iter()
        .zip(v.values())
        .map(|(a, b)| a.min(*b))
        .collect();
    Field::new(u.grid().clone(), vals)
}

pub fn max_combine(u: &Field, v: &Field) -> Result<Field> {
    check_same(u, v)?;
    let vals = u
        .values()
        .iter()
        .zip(v.values())
        .map(|(a, b)| a.max(*b))
        .collect();
    Field::new(u.grid().clone(), vals)
}

fn objective(model: &EnergyModel, u: &[f64], dirichlet_only: bool) -> (f64, EnergyBreakdown) {
    let e = model.energy(u);
    let obj = if dirichlet_only { e.dirichlet } else { e.total };
    (obj, e)
}

fn residual(proj: &Projector, u: &[f64], g: &[f64]) -> f64 {
    u.par_iter()
        .zip(g.par_iter())
        .enumerate()
        .map(|(k, (x, gx))| (x - proj.clamp(k, x - gx)).abs())
        .reduce(|| 0.0, f64::max)
}

/// Energy comparisons are only meaningful up to summation error.
fn roundoff(f: f64) -> f64 {
    1e-13 * f.abs().max(1.0)
}

/// Projected gradient descent from a feasible start.
pub fn minimize(start: &Field, functional: &Functional, cfg: &SolveConfig) -> Result<MinimizerBundle> {
    minimize_with(start, functional, cfg, Constraint::of(start.grid()))
}

/// [`minimize`] with an explicit slab constraint.
pub fn minimize_with(
    start: &Field,
    functional: &Functional,
    cfg: &SolveConfig,
    constraint: Constraint,
) -> Result<MinimizerBundle> {
    cfg.validate()?;
    functional.potential.validate()?;
    let d0 = cfg.d0_mode || !functional.potential.has_derivative();
    if functional.potential.kind == PotentialKind::Indicator && !cfg.d0_mode {
        return Err(Error::NoDerivative("indicator"));
    }
    let full = start.grid().clone();
    if full.resolution().nt > 1 && start.is_tau_uniform() {
        let collapsed = full.collapsed();
        let mut b = descend(&start.collapse(collapsed), functional, cfg, constraint, d0)?;
        b.field = b.field.broadcast(full);
        return Ok(b);
    }
    descend(start, functional, cfg, constraint, d0)
}

fn descend(
    start: &Field,
    functional: &Functional,
    cfg: &SolveConfig,
    constraint: Constraint,
    dirichlet_only: bool,
) -> Result<MinimizerBundle> {
    let grid = start.grid().clone();
    let model = EnergyModel::new(grid.clone(), functional.clone());
    let proj = Projector::new(&grid, constraint);
    let w = grid.weight();
    let len = grid.len();
    let include_pot = !dirichlet_only;

    let mut x = start.values().to_vec();
    proj.apply(&mut x);
    let mut gx = vec![0.0; len];
    model.gradient(&x, &mut gx, include_pot);
    let (mut fx, mut ex) = objective(&model, &x, dirichlet_only);
    let mut res = residual(&proj, &x, &gx);
    let mut trace = vec![TraceRow {
        iteration: 0,
        dirichlet: ex.dirichlet,
        potential: ex.potential,
        total: ex.total,
        step: 0.0,
    }];

    let mut eta = 1.0 / model.lipschitz_estimate(include_pot);
    let mut x_prev = x.clone();
    let mut momentum = 1.0f64;
    let mut y = vec![0.0; len];
    let mut gy = vec![0.0; len];
    let mut cand = vec![0.0; len];
    let mut iters = 0;
    let mut converged = res < cfg.tol;
    let mut gx_fresh = true;

    while !converged && iters < cfg.max_iters {
        iters += 1;
        let next_m = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        let beta = if cfg.accelerated {
            (momentum - 1.0) / next_m
        } else {
            0.0
        };
        let use_y = beta > 0.0;
        let (fy, gyref): (f64, &[f64]) = if use_y {
            y.par_iter_mut().enumerate().for_each(|(k, v)| {
                *v = proj.clamp(k, x[k] + beta * (x[k] - x_prev[k]));
            });
            model.gradient(&y, &mut gy, include_pot);
            (objective(&model, &y, dirichlet_only).0, &gy)
        } else {
            if !gx_fresh {
                model.gradient(&x, &mut gx, include_pot);
                gx_fresh = true;
            }
            y.copy_from_slice(&x);
            (fx, &gx)
        };

        // backtracking on the quadratic upper model
        let mut accepted = None;
        for _ in 0..60 {
            cand.par_iter_mut()
                .enumerate()
                .for_each(|(k, v)| *v = proj.clamp(k, y[k] - eta * gyref[k]));
            // fixed chunking keeps the sums independent of the thread count
            let parts: Vec<(f64, f64)> = cand
                .par_chunks(4096)
                .zip(y.par_chunks(4096))
                .zip(gyref.par_chunks(4096))
                .map(|((c, yv), g)| {
                    c.iter().zip(yv).zip(g).fold((0.0, 0.0), |acc, ((c, yv), g)| {
                        let d = c - yv;
                        (acc.0 + g * d, acc.1 + d * d)
                    })
                })
                .collect();
            let (lin, sq) = parts.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
            let (fc, ec) = objective(&model, &cand, dirichlet_only);
            if fc <= fy + w * lin + w * sq / (2.0 * eta) + roundoff(fy) {
                accepted = Some((fc, ec));
                break;
            }
            eta *= 0.5;
        }
        let Some((fc, ec)) = accepted else {
            break;
        };
        if fc > fx + roundoff(fx) {
            // momentum overshoot: restart from x
            momentum = 1.0;
            if !use_y {
                break;
            }
            continue;
        }
        let step = cand
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        std::mem::swap(&mut x_prev, &mut x);
        x.copy_from_slice(&cand);
        fx = fc;
        ex = ec;
        momentum = if cfg.accelerated { next_m } else { 1.0 };
        // the stationarity check costs a gradient; under momentum it is
        // only evaluated periodically
        gx_fresh = !use_y || iters % 8 == 0;
        if gx_fresh {
            model.gradient(&x, &mut gx, include_pot);
            res = residual(&proj, &x, &gx);
            converged = res < cfg.tol;
        }
        trace.push(TraceRow {
            iteration: iters,
            dirichlet: ex.dirichlet,
            potential: ex.potential,
            total: ex.total,
            step,
        });
    }
    if !gx_fresh {
        model.gradient(&x, &mut gx, include_pot);
        res = residual(&proj, &x, &gx);
        converged = res < cfg.tol;
    }

    Ok(MinimizerBundle {
        field: Field::new(grid, x)?,
        energy: ex,
        iterations: iters,
        converged,
        refinement_passes: 0,
        residual: res,
        trace,
    })
}

/// All lattice vectors with `|k|_inf <= kmax`, `omega . k >= 0`, `k != 0`
/// that act exactly on `field`.
pub fn birkhoff_generators(field: &Field, kmax: i64) -> Vec<LatticeVector> {
    let base = &field.grid().spec().base;
    let dim = 2 * base.n();
    let omega = base.omega_primitive();
    let mut out = Vec::new();
    let mut k = vec![-kmax; dim];
    loop {
        if k.iter().any(|&v| v != 0) {
            let dot: i64 = k.iter().zip(&omega).map(|(a, b)| a * b).sum();
            let lv = LatticeVector(k.clone());
            if dot >= 0 && translation_commensurate(field, &lv) {
                out.push(lv);
            }
        }
        let mut d = 0;
        loop {
            if d == dim {
                return out;
            }
            k[d] += 1;
            if k[d] > kmax {
                k[d] = -kmax;
                d += 1;
            } else {
                break;
            }
        }
    }
}

/// Largest violation of `T_k u >= u` over the generators and of
/// `u(z, t + 2j) == u` over vertical shifts.
pub fn birkhoff_violation(field: &Field, generators: &[LatticeVector]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for k in generators {
        let tk = translate_field(field, k)?;
        for (a, b) in tk.values().iter().zip(field.values()) {
            worst = worst.max(b - a);
        }
    }
    for tk in vertical_shifts(field)? {
        worst = worst.max(tk.sup_diff(field)?);
    }
    Ok(worst)
}

fn vertical_shifts(field: &Field) -> Result<Vec<Field>> {
    let g = field.grid();
    let half = (g.vertical_period() / 2.0).round() as i64;
    let mut out = Vec::new();
    if g.resolution().nt == 1 {
        return Ok(out);
    }
    for j in 1..half {
        match vertical_shift(field, j) {
            Ok(f) => out.push(f),
            Err(Error::VerticalShift { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Min-refinement over translates and vertical shifts, re-minimizing after
/// each sweep, until the refined field is a Birkhoff fixed point.
pub fn birkhoff_refine(
    bundle: &MinimizerBundle,
    functional: &Functional,
    cfg: &SolveConfig,
    generators: &[LatticeVector],
) -> Result<MinimizerBundle> {
    let base = &bundle.field.grid().spec().base;
    let omega = base.omega_primitive();
    for k in generators {
        let dot: i64 = k.0.iter().zip(&omega).map(|(a, b)| a * b).sum();
        if dot < 0 {
            return Err(Error::InvalidArgument(format!(
                "generator {:?} points against omega",
                k.0
            )));
        }
        if !translation_commensurate(&bundle.field, k) {
            return Err(Error::IncommensurateTranslation {
                k: k.0.clone(),
                reason: "not commensurate with the grid".into(),
            });
        }
    }
    let mut current = bundle.clone();
    let mut passes = 0;
    while passes < cfg.max_refine_passes {
        let viol = birkhoff_violation(&current.field, generators)?;
        if viol <= cfg.tol {
            break;
        }
        passes += 1;
        let mut u = current.field.clone();
        for k in generators {
            u = min_combine(&u, &translate_field(&u, k)?)?;
        }
        for v in vertical_shifts(&u)? {
            u = min_combine(&u, &v)?;
        }
        let u = project_constraints(&u);
        let next = minimize(&u, functional, cfg)?;
        if next.energy.total > current.energy.total + 1e-12 * current.energy.total.abs().max(1.0) {
            break;
        }
        let mut trace = current.trace.clone();
        let offset = trace.last().map(|r| r.iteration).unwrap_or(0);
        trace.extend(next.trace.iter().skip(1).map(|r| TraceRow {
            iteration: r.iteration + offset,
            ..*r
        }));
        current = MinimizerBundle {
            iterations: current.iterations + next.iterations,
            trace,
            ..next
        };
    }
    current.refinement_passes = passes;
    Ok(current)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnlargeReport {
    pub m: f64,
    pub m_enlarged: f64,
    pub sup_diff: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Re-solves with slab half-width `M + a_extra` from the same start and
/// compares with the original solve.
pub fn enlarge_check(
    bundle: &MinimizerBundle,
    functional: &Functional,
    cfg: &SolveConfig,
    a_extra: f64,
) -> Result<EnlargeReport> {
    let grid = bundle.field.grid().clone();
    let c = Constraint::of(&grid);
    let m2 = c.m + a_extra;
    if !(a_extra >= 0.0) || m2 >= grid.half_extent() {
        return Err(Error::ExtentTooSmall {
            needed: m2,
            extent: grid.half_extent(),
        });
    }
    let threshold = 10.0 * cfg.tol;
    if a_extra == 0.0 {
        return Ok(EnlargeReport {
            m: c.m,
            m_enlarged: m2,
            sup_diff: 0.0,
            threshold,
            pass: true,
        });
    }
    let start = init_ramp(grid.clone());
    let base = minimize_with(&start, functional, cfg, c)?;
    let wide = minimize_with(
        &start,
        functional,
        cfg,
        Constraint {
            m: m2,
            delta: c.delta,
        },
    )?;
    let sup_diff = base.field.sup_diff(&wide.field)?;
    Ok(EnlargeReport {
        m: c.m,
        m_enlarged: m2,
        sup_diff,
        threshold,
        pass: sup_diff <= threshold,
    })
}

/// Builds a grid for a given integer base; used by the sequence drivers.
pub type GridBuilder<'a> = dyn Fn(&IntegerBase) -> Result<Arc<Grid>> + Sync + 'a;

/// Continued-fraction convergents of `x` with denominator at most `qmax`;
/// the last one is the best.
pub fn convergent(x: f64, qmax: u64) -> (i64, u64) {
    let (mut h0, mut h1) = (0i64, 1i64);
    let (mut k0, mut k1) = (1u64, 0u64);
    let mut r = x;
    for _ in 0..64 {
        let a = r.floor();
        let h2 = a as i64 * h1 + h0;
        let k2 = a as u64 * k1 + k0;
        if k2 > qmax {
            break;
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        let frac = r - a;
        if frac.abs() < 1e-12 {
            break;
        }
        r = 1.0 / frac;
    }
    (h1, k1)
}

/// Rational approximation of a real direction with denominators capped at `q`.
pub fn rational_approximation(omega: &[f64], q: u64) -> Result<Vec<num_rational::BigRational>> {
    use num_bigint::BigInt;
    if omega.iter().all(|v| *v == 0.0) {
        return Err(Error::ZeroOmega);
    }
    omega
        .iter()
        .map(|&v| {
            if !v.is_finite() {
                return Err(Error::NotRational(v.to_string()));
            }
            let sign = if v < 0.0 { -1 } else { 1 };
            let (h, k) = convergent(v.abs(), q);
            Ok(num_rational::BigRational::new(
                BigInt::from(sign * h),
                BigInt::from(k),
            ))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct SequenceMember {
    pub q: u64,
    pub omega: Vec<num_rational::BigRational>,
    pub bundle: MinimizerBundle,
}

#[derive(Debug, Clone)]
pub struct SequenceReport {
    pub members: Vec<SequenceMember>,
    /// Sup differences on the window between consecutive members.
    pub window_diffs: Vec<f64>,
    pub decreasing: bool,
}

/// Solves (and refines) for rational approximations of `omega_target` and
/// compares consecutive solutions on `window` (a list of sample points).
pub fn rational_sequence_solve(
    omega_target: &[f64],
    denominators: &[u64],
    functional: &Functional,
    cfg: &SolveConfig,
    build: &GridBuilder<'_>,
    window: &[GroupPoint],
    kmax: i64,
) -> Result<SequenceReport> {
    let mut members: Vec<SequenceMember> = Vec::new();
    for &q in denominators {
        let omega = rational_approximation(omega_target, q)?;
        if let Some(prev) = members.last() {
            if prev.omega == omega {
                members.push(SequenceMember {
                    q,
                    omega,
                    bundle: prev.bundle.clone(),
                });
                continue;
            }
        }
        let base = build_integer_base(&omega)?;
        let grid = build(&base)?;
        let start = init_ramp(grid);
        let b = minimize(&start, functional, cfg)?;
        let gens = birkhoff_generators(&b.field, kmax);
        let b = birkhoff_refine(&b, functional, cfg, &gens)?;
        members.push(SequenceMember { q, omega, bundle: b });
    }
    let samples: Vec<Vec<f64>> = members
        .iter()
        .map(|m| window.iter().map(|xi| m.bundle.field.sample(xi)).collect())
        .collect();
    let window_diffs: Vec<f64> = samples
        .windows(2)
        .map(|w| {
            w[0].iter()
                .zip(&w[1])
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let decreasing = window_diffs.windows(2).all(|w| w[1] < w[0]);
    Ok(SequenceReport {
        members,
        window_diffs,
        decreasing,
    })
}

#[derive(Debug, Clone)]
pub struct GammaMember {
    pub big_n: u32,
    pub bundle: MinimizerBundle,
    pub interface: crate::analysis::InterfaceReport,
}

/// Solves `(1/N) |grad_H u|^2 + N alpha^2 (1 - u^2)^2` for each `N` on the
/// grid produced by `grid`.
pub fn gamma_sequence_solve(
    alpha: &ModulationSpec,
    ns: &[u32],
    grid: Arc<Grid>,
    cfg: &SolveConfig,
) -> Result<Vec<GammaMember>> {
    if ns.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("Ns must be increasing".into()));
    }
    let mut q = alpha.clone();
    q.squared = true;
    let spec = PotentialSpec::quartic(q);
    let mut out = Vec::new();
    for &n in ns {
        let functional = Functional::scaled(spec.clone(), n as f64);
        let start = init_ramp(grid.clone());
        let b = minimize(&start, &functional, cfg)?;
        let interface = crate::analysis::interface_extract(&b.field);
        out.push(GammaMember {
            big_n: n,
            bundle: b,
            interface,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::energy_total;
    use crate::grid::{make_grid, CellSpec, Resolution};
    use crate::heis::parse_rational;
    use proptest::prelude::*;

    fn grid(omega: &[&str], l: f64, res: Resolution) -> Arc<Grid> {
        let q: Vec<_> = omega.iter().map(|s| parse_rational(s).unwrap()).collect();
        let spec = CellSpec::new(build_integer_base(&q).unwrap(), 1, 10.0, l, 0.1).unwrap();
        Arc::new(make_grid(spec, res).unwrap())
    }

    fn quartic() -> Functional {
        Functional::new(PotentialSpec::quartic(ModulationSpec::constant(1.0)))
    }

    #[test]
    fn ramp_examples() {
        let g = grid(&["1", "0"], 12.0, Resolution::new(8, 96, 8));
        let r = init_ramp(g.clone());
        for idx in 0..g.len() {
            let a = g.a_of(g.column_of(idx));
            let v = r.values()[idx];
            if a == 0.0 {
                assert_eq!(v, 0.0);
            }
            if a >= 0.25 {
                assert_eq!(v, 1.0);
            }
            if a.abs() < 0.25 {
                assert!(v.abs() < 1.0);
            }
        }
    }

    #[test]
    fn projection_examples() {
        let g = grid(&["1", "0"], 12.0, Resolution::new(8, 96, 8));
        let r = init_ramp(g.clone());
        assert_eq!(project_constraints(&r), r);
        let z = Field::constant(g.clone(), 0.0);
        let p = project_constraints(&z);
        for idx in 0..g.len() {
            let a = g.a_of(g.column_of(idx));
            let v = p.values()[idx];
            if a >= 10.0 {
                assert_eq!(v, 0.9);
            } else if a <= -10.0 {
                assert_eq!(v, -0.9);
            } else {
                assert_eq!(v, 0.0);
            }
        }
        assert_eq!(project_constraints(&p), p);
    }

    #[test]
    fn combine_examples() {
        let g = grid(&["1", "0"], 12.0, Resolution::new(8, 96, 8));
        let r = init_ramp(g.clone());
        assert_eq!(min_combine(&r, &r).unwrap(), r);
        let m = min_combine(&r, &Field::constant(g.clone(), -1.0)).unwrap();
        assert!(m.values().iter().all(|&v| v == -1.0));
        assert_ne!(project_constraints(&m), m);
        let other = grid(&["1", "0"], 12.0, Resolution::new(8, 96, 16));
        assert!(matches!(
            min_combine(&r, &Field::constant(other, 0.0)),
            Err(Error::GridMismatch)
        ));
    }

    #[test]
    fn minimize_heteroclinic_small() {
        let g = grid(&["1", "0"], 12.0, Resolution::new(8, 192, 8));
        let start = init_ramp(g.clone());
        let cfg = SolveConfig {
            tol: 1e-8,
            ..SolveConfig::default()
        };
        let b = minimize(&start, &quartic(), &cfg).unwrap();
        assert!(b.converged, "residual {}", b.residual);
        // monotone trace
        for w in b.trace.windows(2) {
            assert!(w[1].total <= w[0].total * (1.0 + 1e-13));
        }
        assert!(b.energy.total <= energy_total(&start, &quartic()).total);
        // symmetric start, Q = 1: minimizer is close to tanh(a)
        let worst = (0..g.len())
            .map(|k| (b.field.values()[k] - g.a_of(g.column_of(k)).tanh()).abs())
            .fold(0.0, f64::max);
        assert!(worst < 5e-2, "{worst}");
        // restart at the minimizer: fixed point
        let again = minimize(&b.field, &quartic(), &cfg).unwrap();
        assert!(again.iterations <= 1);
        assert!(again.field.sup_diff(&b.field).unwrap() < 1e-12);
        assert_eq!(project_constraints(&b.field), b.field);
    }

    #[test]
    fn indicator_obstacle_mode() {
        let g = grid(&["1", "0"], 12.0, Resolution::new(8, 96, 8));
        let f = Functional::new(PotentialSpec::indicator(ModulationSpec::constant(1.0)));
        let start = init_ramp(g.clone());
        assert!(minimize(&start, &f, &SolveConfig::default()).is_err());
        let cfg = SolveConfig {
            d0_mode: true,
            max_iters: 200,
            ..SolveConfig::default()
        };
        let b = minimize(&start, &f, &cfg).unwrap();
        assert!(b.field.values().iter().all(|v| v.abs() <= 1.0));
        assert!(b.energy.dirichlet <= energy_total(&start, &f).dirichlet);
    }

    #[test]
    fn generators_and_refine_fixed_point() {
        let g = grid(&["1", "0"], 12.0, Resolution::new(8, 96, 8));
        let tanh = Field::from_coords(g.clone(), |_, a, _| a.tanh());
        let gens = birkhoff_generators(&tanh, 2);
        assert!(gens.iter().any(|k| k.0 == vec![0, 1]));
        assert!(gens.iter().any(|k| k.0 == vec![0, -1]));
        assert!(gens.iter().all(|k| k.0[0] >= 0));
        assert!(birkhoff_violation(&tanh, &gens).unwrap() == 0.0);
        let b = MinimizerBundle {
            energy: energy_total(&tanh, &quartic()),
            field: tanh.clone(),
            iterations: 0,
            converged: true,
            refinement_passes: 0,
            residual: 0.0,
            trace: vec![],
        };
        let r = birkhoff_refine(&b, &quartic(), &SolveConfig::default(), &gens).unwrap();
        assert_eq!(r.refinement_passes, 0);
        assert_eq!(r.field, tanh);
        let bad = vec![LatticeVector(vec![-1, 0])];
        assert!(birkhoff_refine(&b, &quartic(), &SolveConfig::default(), &bad).is_err());
    }

    #[test]
    fn convergents() {
        assert_eq!(convergent(0.618034, 2), (1, 2));
        assert_eq!(convergent(0.618034, 5), (3, 5));
        assert_eq!(convergent(0.618034, 13), (8, 13));
        assert_eq!(convergent(0.5, 13), (1, 2));
        assert_eq!(convergent(1.0, 13), (1, 1));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn projection_idempotent_and_combine_feasible(seed in 0u64..500) {
            use rand::{Rng, SeedableRng};
            let g = grid(&["1", "1"], 11.0, Resolution::new(8, 16, 8));
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let u = Field::new(g.clone(), (0..g.len()).map(|_| rng.gen_range(-1.5..1.5)).collect()).unwrap();
            let v = Field::new(g.clone(), (0..g.len()).map(|_| rng.gen_range(-1.5..1.5)).collect()).unwrap();
            let pu = project_constraints(&u);
            prop_assert_eq!(project_constraints(&pu), pu.clone());
            let pv = project_constraints(&v);
            let lo = min_combine(&pu, &pv).unwrap();
            let hi = max_combine(&pu, &pv).unwrap();
            prop_assert_eq!(project_constraints(&lo), lo);
            prop_assert_eq!(project_constraints(&hi), hi);
        }
    }
}
