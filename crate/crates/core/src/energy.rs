//! Discrete horizontal Dirichlet energy and its first variation.
//!
//! In the cell frame `{k^j / |k^j|, omega_hat}` the horizontal derivatives are
//! `W_j u = U_{s_j} / (p |k^j|) + kappa_j U_tau` and `W_a u = U_a`, with
//! `kappa_j = 2 Im(conj(k_hat^j) z_perp) - 4 a Im(conj(omega_hat) k_hat^j)`.
//!
//! The energy density averages the squared forward- and backward-difference
//! gradients, which is second order and has no odd/even decoupling.
//! [`horizontal_gradient`] reports the centered gradient.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid, Site, PAD_MINUS, PAD_PLUS};
use crate::heis::{group_mul, koranyi_gauge, symplectic, GroupContext, GroupPoint, KoranyiBall};
use crate::potential::PotentialSpec;

/// How reads beyond the slab ends are valued.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PadMode {
    /// Differences across the slab ends are dropped (natural boundary).
    Free,
    /// `-1` below `-L`, `+1` above `L`.
    Phase,
    /// Zero on both sides (linear operator; used for adjoint checks).
    Zero,
}

/// `dirichlet_weight |grad_H u|^2 + potential_weight F(xi, u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Functional {
    pub potential: PotentialSpec,
    pub dirichlet_weight: f64,
    pub potential_weight: f64,
    pub pad: PadMode,
}

impl Functional {
    pub fn new(potential: PotentialSpec) -> Self {
        Functional {
            potential,
            dirichlet_weight: 1.0,
            potential_weight: 1.0,
            pad: PadMode::Free,
        }
    }

    /// `(1/N) |grad_H u|^2 + N F`.
    pub fn scaled(potential: PotentialSpec, big_n: f64) -> Self {
        Functional {
            potential,
            dirichlet_weight: 1.0 / big_n,
            potential_weight: big_n,
            pad: PadMode::Free,
        }
    }

    pub fn with_pad(mut self, pad: PadMode) -> Self {
        self.pad = pad;
        self
    }
}

impl From<PotentialSpec> for Functional {
    fn from(p: PotentialSpec) -> Self {
        Functional::new(p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyBreakdown {
    pub dirichlet: f64,
    pub potential: f64,
    pub total: f64,
    pub region: Option<KoranyiBall>,
}

impl EnergyBreakdown {
    fn new(dirichlet: f64, potential: f64, region: Option<KoranyiBall>) -> Self {
        EnergyBreakdown {
            dirichlet,
            potential,
            total: dirichlet + potential,
            region,
        }
    }
}

const BLOCK: usize = 4096;

fn pairwise(xs: &[f64]) -> f64 {
    if xs.len() <= 64 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise(&xs[..mid]) + pairwise(&xs[mid..])
}

/// Sum with a summation tree that depends only on the length.
pub fn deterministic_sum(xs: &[f64]) -> f64 {
    if xs.len() <= BLOCK {
        return pairwise(xs);
    }
    let partial: Vec<f64> = xs.par_chunks(BLOCK).map(pairwise).collect();
    pairwise(&partial)
}

/// Precomputed stencil coefficients for one grid and functional.
#[derive(Debug, Clone)]
pub struct EnergyModel {
    grid: Arc<Grid>,
    functional: Functional,
    /// Modulation per `(s, a)` column.
    q: Vec<f64>,
    /// `kappa_j / dtau` per column, `t` entries each.
    kappa: Vec<f64>,
    /// `1 / (ds p |k^j|)`.
    inv_s: Vec<f64>,
    inv_a: f64,
}

impl EnergyModel {
    pub fn new(grid: Arc<Grid>, functional: Functional) -> Self {
        let t = grid.nt_dirs();
        let nt = grid.resolution().nt;
        let cols = grid.len() / nt;
        let khat: Vec<Vec<f64>> = grid
            .transverse_vectors()
            .iter()
            .zip(grid.transverse_norms())
            .map(|(k, n)| k.iter().map(|v| v / n).collect())
            .collect();
        let w = grid.omega_hat().to_vec();
        let mut q = vec![0.0; cols];
        let mut kappa = vec![0.0; cols * t];
        for c in 0..cols {
            let (m, i, _) = grid.unflatten(c * nt);
            let s: Vec<f64> = m.iter().map(|&v| grid.s_of(v)).collect();
            let a = grid.a_of(i);
            let zp = grid.z_perp(&s);
            let mut z = zp.clone();
            for (zi, wi) in z.iter_mut().zip(&w) {
                *zi += a * wi;
            }
            q[c] = functional.potential.modulation.value(&z);
            for j in 0..t {
                let kap = 2.0 * symplectic(&khat[j], &zp) - 4.0 * a * symplectic(&w, &khat[j]);
                kappa[c * t + j] = kap / grid.dtau();
            }
        }
        let p = grid.spec().p as f64;
        let inv_s = grid
            .transverse_norms()
            .iter()
            .map(|k| 1.0 / (grid.ds() * p * k))
            .collect();
        let inv_a = 1.0 / grid.da();
        EnergyModel {
            grid,
            functional,
            q,
            kappa,
            inv_s,
            inv_a,
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn functional(&self) -> &Functional {
        &self.functional
    }

    /// Upper bound for the Lipschitz constant of the nodewise gradient.
    pub fn lipschitz_estimate(&self, include_potential: bool) -> f64 {
        let t = self.grid.nt_dirs();
        let nt = self.grid.resolution().nt;
        let mut kmax = vec![0.0f64; t];
        if nt > 1 {
            for c in self.kappa.chunks(t) {
                for (k, v) in kmax.iter_mut().zip(c) {
                    *k = k.max(v.abs());
                }
            }
        }
        let mut lip: f64 = (0..t)
            .map(|j| (2.0 * self.inv_s[j] + 2.0 * kmax[j]).powi(2))
            .sum::<f64>()
            + 4.0 * self.inv_a * self.inv_a;
        lip *= 2.0 * self.functional.dirichlet_weight;
        if include_potential {
            let qmax = self.q.iter().fold(0.0f64, |a, &b| a.max(b));
            lip += self.functional.potential_weight * qmax * 12.0;
        }
        lip
    }

    /// Modulation value at node `idx`.
    #[inline]
    pub fn modulation_at(&self, idx: usize) -> f64 {
        self.q[idx / self.grid.resolution().nt]
    }

    #[inline]
    fn read(&self, u: &[f64], nb: u32, x: f64) -> f64 {
        match nb {
            PAD_MINUS => match self.functional.pad {
                PadMode::Free => x,
                PadMode::Phase => -1.0,
                PadMode::Zero => 0.0,
            },
            PAD_PLUS => match self.functional.pad {
                PadMode::Free => x,
                PadMode::Phase => 1.0,
                PadMode::Zero => 0.0,
            },
            k => u[k as usize],
        }
    }

    /// One-sided gradients at `idx`: forward into `fw`, backward into `bw`
    /// (frame components `j = 0..2n-1`, then `a`).
    #[inline]
    fn one_sided(&self, u: &[f64], idx: usize, fw: &mut [f64], bw: &mut [f64]) {
        let g = &*self.grid;
        let t = g.nt_dirs();
        let nb = g.neighbors(idx);
        let c = idx / g.resolution().nt;
        let x = u[idx];
        let dtp = u[nb[2 * t + 2] as usize] - x;
        let dtm = x - u[nb[2 * t + 3] as usize];
        for j in 0..t {
            let kap = self.kappa[c * t + j];
            fw[j] = (u[nb[2 * j] as usize] - x) * self.inv_s[j] + kap * dtp;
            bw[j] = (x - u[nb[2 * j + 1] as usize]) * self.inv_s[j] + kap * dtm;
        }
        fw[t] = (self.read(u, nb[2 * t], x) - x) * self.inv_a;
        bw[t] = (x - self.read(u, nb[2 * t + 1], x)) * self.inv_a;
    }

    #[inline]
    fn density_pair(&self, u: &[f64], idx: usize, fw: &mut [f64], bw: &mut [f64]) -> (f64, f64) {
        self.one_sided(u, idx, fw, bw);
        let sq: f64 = fw.iter().chain(bw.iter()).map(|v| v * v).sum();
        (
            self.functional.dirichlet_weight * 0.5 * sq,
            self.functional.potential_weight
                * self.modulation_at(idx)
                * self.functional.potential.well(u[idx]),
        )
    }

    /// Per-node Dirichlet and potential densities (not weighted).
    pub fn densities(&self, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let dim = self.grid.nt_dirs() + 1;
        let pairs: Vec<(f64, f64)> = (0..u.len())
            .into_par_iter()
            .map_init(
                || (vec![0.0; dim], vec![0.0; dim]),
                |(fw, bw), idx| self.density_pair(u, idx, fw, bw),
            )
            .collect();
        pairs.into_iter().unzip()
    }

    /// Same summation tree as [`deterministic_sum`] over [`densities`],
    /// without materializing them.
    pub fn energy(&self, u: &[f64]) -> EnergyBreakdown {
        let dim = self.grid.nt_dirs() + 1;
        let w = self.grid.weight();
        let blocks = u.len().div_ceil(BLOCK).max(1);
        let partial: Vec<(f64, f64)> = (0..blocks)
            .into_par_iter()
            .map_init(
                || (vec![0.0; dim], vec![0.0; dim], vec![0.0; BLOCK], vec![0.0; BLOCK]),
                |(fw, bw, d, p), b| {
                    let lo = b * BLOCK;
                    let hi = (lo + BLOCK).min(u.len());
                    for idx in lo..hi {
                        let (x, y) = self.density_pair(u, idx, fw, bw);
                        d[idx - lo] = x;
                        p[idx - lo] = y;
                    }
                    (pairwise(&d[..hi - lo]), pairwise(&p[..hi - lo]))
                },
            )
            .collect();
        let (d, p): (Vec<f64>, Vec<f64>) = partial.into_iter().unzip();
        if u.len() <= BLOCK {
            return EnergyBreakdown::new(w * d[0], w * p[0], None);
        }
        EnergyBreakdown::new(w * pairwise(&d), w * pairwise(&p), None)
    }

    /// `sum over nodes of count * w * density` for a ball multiplicity map.
    pub fn energy_weighted(&self, u: &[f64], counts: &[u32], region: Option<KoranyiBall>) -> EnergyBreakdown {
        let (d, p) = self.densities(u);
        let w = self.grid.weight();
        let dc: Vec<f64> = d.iter().zip(counts).map(|(v, &c)| v * c as f64).collect();
        let pc: Vec<f64> = p.iter().zip(counts).map(|(v, &c)| v * c as f64).collect();
        EnergyBreakdown::new(w * deterministic_sum(&dc), w * deterministic_sum(&pc), region)
    }

    /// `sum_x (G+^T G+ + G-^T G-) u / 2` at every node (the negative discrete
    /// Kohn Laplacian when pads are zero).
    pub fn dirichlet_operator(&self, u: &[f64], out: &mut [f64]) {
        let g = &*self.grid;
        let t = g.nt_dirs();
        let dim = t + 1;
        let len = u.len();
        let mut fw = vec![0.0; len * dim];
        let mut bw = vec![0.0; len * dim];
        fw.par_chunks_mut(dim)
            .zip(bw.par_chunks_mut(dim))
            .enumerate()
            .for_each(|(idx, (f, b))| self.one_sided(u, idx, f, b));
        let nt = g.resolution().nt;
        let free = self.functional.pad == PadMode::Free;
        out.par_iter_mut().enumerate().for_each(|(m, o)| {
            let nb = g.neighbors(m);
            let c = m / nt;
            let mut acc = 0.0;
            let node = |k: u32| -> Option<usize> {
                if k == PAD_MINUS || k == PAD_PLUS {
                    None
                } else {
                    Some(k as usize)
                }
            };
            // forward part: G+^T y
            for j in 0..t {
                let mut v = -fw[m * dim + j];
                if let Some(k) = node(nb[2 * j + 1]) {
                    v += fw[k * dim + j];
                }
                acc += self.inv_s[j] * v;
                let mut w = -self.kappa[c * t + j] * fw[m * dim + j];
                if let Some(k) = node(nb[2 * t + 3]) {
                    w += self.kappa[(k / nt) * t + j] * fw[k * dim + j];
                }
                acc += w;
            }
            let mut v = 0.0;
            if !(free && node(nb[2 * t]).is_none()) {
                v -= fw[m * dim + t];
            }
            if let Some(k) = node(nb[2 * t + 1]) {
                v += fw[k * dim + t];
            }
            acc += self.inv_a * v;
            // backward part: G-^T y
            for j in 0..t {
                let mut v = bw[m * dim + j];
                if let Some(k) = node(nb[2 * j]) {
                    v -= bw[k * dim + j];
                }
                acc += self.inv_s[j] * v;
                let mut w = self.kappa[c * t + j] * bw[m * dim + j];
                if let Some(k) = node(nb[2 * t + 2]) {
                    w -= self.kappa[(k / nt) * t + j] * bw[k * dim + j];
                }
                acc += w;
            }
            let mut v = 0.0;
            if !(free && node(nb[2 * t + 1]).is_none()) {
                v += bw[m * dim + t];
            }
            if let Some(k) = node(nb[2 * t]) {
                v -= bw[k * dim + t];
            }
            acc += self.inv_a * v;
            *o = 0.5 * acc;
        });
    }

    /// Nodewise first variation divided by the node weight. With
    /// `include_potential = false` only the Dirichlet part is returned.
    pub fn gradient(&self, u: &[f64], out: &mut [f64], include_potential: bool) {
        self.dirichlet_operator(u, out);
        let dw = 2.0 * self.functional.dirichlet_weight;
        let pw = self.functional.potential_weight;
        let pot = &self.functional.potential;
        out.par_iter_mut().enumerate().for_each(|(k, o)| {
            *o *= dw;
            if include_potential {
                *o += pw * self.modulation_at(k) * pot.well_deriv(u[k]);
            }
        });
    }
}

/// Centered horizontal gradient `(X_1 u .. X_n u, Y_1 u .. Y_n u)` at a node.
pub fn horizontal_gradient(field: &Field, idx: usize) -> Vec<f64> {
    let g = &**field.grid();
    let t = g.nt_dirs();
    let nb = g.neighbors(idx);
    let u = field.values();
    let read = |k: u32| match k {
        PAD_MINUS => -1.0,
        PAD_PLUS => 1.0,
        k => u[k as usize],
    };
    let (m, i, _) = g.unflatten(idx);
    let s: Vec<f64> = m.iter().map(|&v| g.s_of(v)).collect();
    let ut = (read(nb[2 * t + 2]) - read(nb[2 * t + 3])) / (2.0 * g.dtau());
    let us: Vec<f64> = (0..t)
        .map(|j| (read(nb[2 * j]) - read(nb[2 * j + 1])) / (2.0 * g.ds()))
        .collect();
    let ua = (read(nb[2 * t]) - read(nb[2 * t + 1])) / (2.0 * g.da());
    frame_to_xy(g, &s, g.a_of(i), &us, ua, ut)
}

/// Centered horizontal gradient of a function given on extended cell
/// coordinates, evaluated at a node (no periodicity is assumed).
pub fn horizontal_gradient_fn(grid: &Grid, idx: usize, f: impl Fn(&GroupPoint) -> f64) -> Vec<f64> {
    let (m, i, l) = grid.unflatten(idx);
    let s: Vec<f64> = m.iter().map(|&v| grid.s_of(v)).collect();
    let a = grid.a_of(i);
    let tau = grid.tau_of(l);
    let eval = |s: &[f64], a: f64, tau: f64| f(&grid.point_at(s, a, tau));
    let (ds, da, dt) = (grid.ds(), grid.da(), grid.dtau());
    let us: Vec<f64> = (0..s.len())
        .map(|j| {
            let mut sp = s.clone();
            let mut sm = s.clone();
            sp[j] += ds;
            sm[j] -= ds;
            (eval(&sp, a, tau) - eval(&sm, a, tau)) / (2.0 * ds)
        })
        .collect();
    let ua = (eval(&s, a + da, tau) - eval(&s, a - da, tau)) / (2.0 * da);
    let ut = (eval(&s, a, tau + dt) - eval(&s, a, tau - dt)) / (2.0 * dt);
    frame_to_xy(grid, &s, a, &us, ua, ut)
}

fn frame_to_xy(g: &Grid, s: &[f64], a: f64, us: &[f64], ua: f64, ut: f64) -> Vec<f64> {
    let p = g.spec().p as f64;
    let w = g.omega_hat();
    let zp = g.z_perp(s);
    let mut out: Vec<f64> = w.iter().map(|wi| ua * wi).collect();
    for (j, (k, kn)) in g
        .transverse_vectors()
        .iter()
        .zip(g.transverse_norms())
        .enumerate()
    {
        let khat: Vec<f64> = k.iter().map(|v| v / kn).collect();
        let kappa = 2.0 * symplectic(&khat, &zp) - 4.0 * a * symplectic(w, &khat);
        let gj = us[j] / (p * kn) + kappa * ut;
        for (o, kh) in out.iter_mut().zip(&khat) {
            *o += gj * kh;
        }
    }
    out
}

pub fn energy_total(field: &Field, functional: &Functional) -> EnergyBreakdown {
    EnergyModel::new(field.grid().clone(), functional.clone()).energy(field.values())
}

/// Number of periodic images of every node inside a Koranyi ball.
///
/// The ball may extend past the transverse and vertical periods; each image
/// `(K, 0) o (z, t + m P)` is counted. Fails when the ball leaves `|a| <= L`.
pub fn ball_counts(grid: &Grid, ball: &KoranyiBall) -> Result<Vec<u32>> {
    let r = ball.radius;
    let zc = &ball.center.z;
    if zc.len() != 2 * grid.n() {
        return Err(Error::Dimension {
            expected: 2 * grid.n(),
            got: zc.len(),
        });
    }
    let w = grid.omega_hat();
    let ac: f64 = zc.iter().zip(w).map(|(x, y)| x * y).sum();
    let ext = grid.half_extent();
    if ac - r < -ext || ac + r > ext {
        return Err(Error::BallOverflow {
            radius: r,
            center_a: ac,
            lo: -ext,
            hi: ext,
        });
    }
    let res = grid.resolution();
    let nt = res.nt;
    let t = grid.nt_dirs();
    let p = grid.spec().p as f64;
    let period = grid.vertical_period();
    let kvec = grid.transverse_vectors();
    let knorm = grid.transverse_norms();
    let zc_perp: Vec<f64> = zc.iter().zip(w).map(|(x, y)| x - ac * y).collect();
    let r4 = r.powi(4);
    let cols = grid.len() / nt;

    let mut counts = vec![0u32; grid.len()];
    counts.par_chunks_mut(nt).enumerate().for_each(|(c, out)| {
        let (m, i, _) = grid.unflatten(c * nt);
        let a = grid.a_of(i);
        let da2 = (a - ac).powi(2);
        if da2 > r * r {
            return;
        }
        let s: Vec<f64> = m.iter().map(|&v| grid.s_of(v)).collect();
        let zp = grid.z_perp(&s);
        let mut z = zp.clone();
        for (zi, wi) in z.iter_mut().zip(w) {
            *zi += a * wi;
        }
        let zeta = grid.zeta(&z);
        // offsets along each k_hat^j
        let e: Vec<f64> = (0..t)
            .map(|j| {
                zp.iter()
                    .zip(&zc_perp)
                    .zip(&kvec[j])
                    .map(|((x, y), k)| (x - y) * k)
                    .sum::<f64>()
                    / knorm[j]
            })
            .collect();
        let mut lvec = vec![0i64; t];
        visit_images(
            0,
            t,
            &e,
            knorm,
            p,
            r * r - da2,
            &mut lvec,
            &mut |lv: &[i64], rest: f64| {
                let dz2 = r * r - rest;
                let mut big_k = vec![0.0; z.len()];
                for (j, &lj) in lv.iter().enumerate() {
                    for (bk, kv) in big_k.iter_mut().zip(&kvec[j]) {
                        *bk += lj as f64 * p * kv;
                    }
                }
                let zk: Vec<f64> = z.iter().zip(&big_k).map(|(x, y)| x + y).collect();
                let t0 = zeta + 2.0 * symplectic(&big_k, &z) - ball.center.t - 2.0 * symplectic(zc, &zk);
                let dz4 = dz2 * dz2;
                if dz4 > r4 {
                    return;
                }
                let rr = (r4 - dz4).sqrt();
                for (l, o) in out.iter_mut().enumerate() {
                    let tt = grid.tau_of(l) + t0;
                    let hi = ((rr - tt) / period).floor();
                    let lo = ((-rr - tt) / period).ceil();
                    if hi >= lo {
                        *o += (hi - lo) as u32 + 1;
                    }
                }
            },
        );
    });
    debug_assert_eq!(cols * nt, counts.len());
    Ok(counts)
}

#[allow(clippy::too_many_arguments)]
fn visit_images(
    j: usize,
    t: usize,
    e: &[f64],
    knorm: &[f64],
    p: f64,
    budget: f64,
    lvec: &mut [i64],
    f: &mut dyn FnMut(&[i64], f64),
) {
    if j == t {
        return;
    }
    let step = p * knorm[j];
    let rad = budget.max(0.0).sqrt();
    let lo = ((-rad - e[j]) / step).ceil() as i64;
    let hi = ((rad - e[j]) / step).floor() as i64;
    for lj in lo..=hi {
        let d = e[j] + lj as f64 * step;
        let rest = budget - d * d;
        if rest < 0.0 {
            continue;
        }
        lvec[j] = lj;
        if j + 1 == t {
            f(lvec, rest);
        } else {
            visit_images(j + 1, t, e, knorm, p, rest, lvec, f);
        }
    }
}

pub fn energy_in_ball(field: &Field, functional: &Functional, ball: &KoranyiBall) -> Result<EnergyBreakdown> {
    let counts = ball_counts(field.grid(), ball)?;
    let model = EnergyModel::new(field.grid().clone(), functional.clone());
    Ok(model.energy_weighted(field.values(), &counts, Some(ball.clone())))
}

pub fn el_gradient(field: &Field, functional: &Functional) -> Result<Field> {
    if !functional.potential.has_derivative() {
        return Err(Error::NoDerivative(functional.potential.kind.name()));
    }
    let model = EnergyModel::new(field.grid().clone(), functional.clone());
    let mut out = vec![0.0; field.values().len()];
    model.gradient(field.values(), &mut out, true);
    Field::new(field.grid().clone(), out)
}

/// Discrete Kohn Laplacian `-(G+^T G+ + G-^T G-) u / 2`.
pub fn kohn_apply(field: &Field, pad: PadMode) -> Field {
    let functional = Functional::new(PotentialSpec::quartic(
        crate::potential::ModulationSpec::constant(1.0),
    ))
    .with_pad(pad);
    let model = EnergyModel::new(field.grid().clone(), functional);
    let mut out = vec![0.0; field.values().len()];
    model.dirichlet_operator(field.values(), &mut out);
    for v in out.iter_mut() {
        *v = -*v;
    }
    Field::new(field.grid().clone(), out).expect("same grid")
}

/// A radial profile `v(rho)` with its first two derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RadialProfile {
    Power(f64),
    Constant(f64),
}

impl RadialProfile {
    fn eval(&self, rho: f64) -> (f64, f64, f64) {
        match *self {
            RadialProfile::Power(e) => (
                rho.powf(e),
                e * rho.powf(e - 1.0),
                e * (e - 1.0) * rho.powf(e - 2.0),
            ),
            RadialProfile::Constant(c) => (c, 0.0, 0.0),
        }
    }
}

/// `(analytic, finite difference)` values of the Kohn Laplacian of
/// `v(|xi|)` at `xi`, the latter from second differences along the integral
/// curves `lambda -> (lambda e_k, 0) o xi` of `X_k` and `Y_k`.
pub fn kohn_laplacian_radial_check(v: RadialProfile, xi: &GroupPoint, h: f64) -> Result<(f64, f64)> {
    let rho = koranyi_gauge(xi);
    if rho == 0.0 {
        return Err(Error::InvalidArgument(
            "radial formula is singular at rho = 0".into(),
        ));
    }
    let ctx = GroupContext::new(xi.n())?;
    let q = ctx.hom_dim() as f64;
    let z2: f64 = xi.z.iter().map(|x| x * x).sum();
    let (_, d1, d2) = v.eval(rho);
    let analytic = z2 / (rho * rho) * (d2 + (q - 1.0) / rho * d1);
    let f = |p: &GroupPoint| v.eval(koranyi_gauge(p)).0;
    let f0 = f(xi);
    let mut fd = 0.0;
    for k in 0..xi.z.len() {
        let mut e = vec![0.0; xi.z.len()];
        e[k] = h;
        let plus = group_mul(&GroupPoint::new(e.clone(), 0.0), xi)?;
        e[k] = -h;
        let minus = group_mul(&GroupPoint::new(e, 0.0), xi)?;
        fd += (f(&plus) - 2.0 * f0 + f(&minus)) / (h * h);
    }
    Ok((analytic, fd))
}

/// Node index of the `(s, a, tau)` site nearest to a physical point.
pub fn nearest_node(grid: &Grid, xi: &GroupPoint) -> Option<usize> {
    let (s, a, tau) = grid.coords_of(xi);
    let res = grid.resolution();
    let m: Vec<i64> = s
        .iter()
        .map(|sj| (sj * res.ns as f64).round() as i64 + (res.ns / 2) as i64)
        .collect();
    let i = (a / grid.da()).round() as i64 + (res.na / 2) as i64;
    let l = ((tau + grid.vertical_period() / 2.0) / grid.dtau()).round() as i64;
    match grid.canonical(&m, i, l) {
        Site::Node(k) => Some(k),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, CellSpec, Resolution};
    use crate::heis::{build_integer_base, parse_rational};
    use crate::potential::ModulationSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(omega: &[&str], l: f64, res: Resolution) -> Arc<Grid> {
        let q: Vec<_> = omega.iter().map(|s| parse_rational(s).unwrap()).collect();
        let spec = CellSpec::new(build_integer_base(&q).unwrap(), 1, 10.0, l, 0.1).unwrap();
        Arc::new(make_grid(spec, res).unwrap())
    }

    fn quartic() -> Functional {
        Functional::new(PotentialSpec::quartic(ModulationSpec::constant(1.0)))
    }

    fn random_field(g: &Arc<Grid>, seed: u64) -> Field {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = (0..g.len()).map(|_| rng.gen_range(-0.9..0.9)).collect();
        Field::new(g.clone(), v).unwrap()
    }

    #[test]
    fn constant_field_has_zero_gradient() {
        let g = grid(&["1", "0"], 11.0, Resolution::new(8, 16, 8));
        let f = Field::constant(g.clone(), 0.3);
        for idx in [0, 100, 700] {
            // interior columns only; pads differ from 0.3
            let (_, i, _) = g.unflatten(idx);
            if i > 0 && i < 15 {
                assert!(horizontal_gradient(&f, idx).iter().all(|v| v.abs() < 1e-14));
            }
        }
        let one = Field::constant(g, 1.0);
        assert_eq!(energy_total(&one, &quartic()).total, 0.0);
    }

    #[test]
    fn linear_and_vertical_gradients() {
        let g = grid(&["1", "0"], 12.0, Resolution::new(8, 48, 8));
        let f = Field::from_fn(g.clone(), |xi| xi.z[0] / 20.0);
        let idx = g.flatten(&[3], 20, 2);
        let gr = horizontal_gradient(&f, idx);
        assert!((gr[0] - 0.05).abs() < 1e-12 && gr[1].abs() < 1e-12);
        // u = t at ((1, 0), 0): a = 1 is column 26 with da = 1/2, s = 0 is m = 4
        let idx = g.flatten(&[4], 26, 4);
        let xi = g.point(idx);
        assert!((xi.z[0] - 1.0).abs() < 1e-12 && xi.z[1].abs() < 1e-12 && xi.t.abs() < 1e-12);
        let gr = horizontal_gradient_fn(&g, idx, |p| p.t);
        assert!(gr[0].abs() < 1e-12, "{gr:?}");
        assert!((gr[1] + 2.0).abs() < 1e-12, "{gr:?}");
    }

    #[test]
    fn el_gradient_examples() {
        let g = grid(&["1", "0"], 11.0, Resolution::new(8, 16, 8));
        let mut f = Field::constant(g.clone(), 0.0);
        let q = quartic().with_pad(PadMode::Zero);
        let e = el_gradient(&f, &q).unwrap();
        assert!(e.values().iter().all(|v| *v == 0.0));
        f.values_mut()[3] = 0.5;
        let ind = Functional::new(PotentialSpec::indicator(ModulationSpec::constant(1.0)));
        assert!(el_gradient(&f, &ind).is_err());
    }

    #[test]
    fn directional_derivative() {
        for (omega, res) in [
            (["1", "0"], Resolution::new(8, 16, 8)),
            (["1", "2"], Resolution::new(8, 16, 8)),
        ] {
            let g = grid(&omega, 11.0, res);
            let func = Functional::new(PotentialSpec::quartic(ModulationSpec::cosine(1.5, 0.5, 2)));
            let model = EnergyModel::new(g.clone(), func);
            for seed in 0..5 {
                let u = random_field(&g, seed);
                let v = random_field(&g, seed + 100);
                let h = 1e-5;
                let up: Vec<f64> = u
                    .values()
                    .iter()
                    .zip(v.values())
                    .map(|(a, b)| a + h * b)
                    .collect();
                let um: Vec<f64> = u
                    .values()
                    .iter()
                    .zip(v.values())
                    .map(|(a, b)| a - h * b)
                    .collect();
                let fd = (model.energy(&up).total - model.energy(&um).total) / (2.0 * h);
                let mut grad = vec![0.0; g.len()];
                model.gradient(u.values(), &mut grad, true);
                let an: f64 = g.weight() * grad.iter().zip(v.values()).map(|(a, b)| a * b).sum::<f64>();
                assert!((fd - an).abs() < 1e-4 * an.abs().max(1.0), "{fd} vs {an}");
            }
        }
    }

    #[test]
    fn adjoint_consistency() {
        for pad in [PadMode::Zero, PadMode::Free] {
            adjoint_case(pad);
        }
    }

    fn adjoint_case(pad: PadMode) {
        let g = grid(&["1", "1"], 11.0, Resolution::new(8, 16, 16));
        let func = quartic().with_pad(pad);
        let model = EnergyModel::new(g.clone(), func.clone());
        let u = random_field(&g, 1);
        let w = random_field(&g, 2);
        // <grad u, grad w> by polarization of the quadratic Dirichlet form
        let quad = |x: &[f64]| {
            let (d, _) = model.densities(x);
            deterministic_sum(&d)
        };
        let sum: Vec<f64> = u.values().iter().zip(w.values()).map(|(a, b)| a + b).collect();
        let dif: Vec<f64> = u.values().iter().zip(w.values()).map(|(a, b)| a - b).collect();
        let inner = (quad(&sum) - quad(&dif)) / 4.0;
        let lap = kohn_apply(&u, pad);
        let rhs: f64 = -lap
            .values()
            .iter()
            .zip(w.values())
            .map(|(a, b)| a * b)
            .sum::<f64>();
        assert!(
            (inner - rhs).abs() < 1e-10 * inner.abs().max(1.0),
            "{inner} vs {rhs}"
        );
    }

    #[test]
    fn radial_examples() {
        let xi = GroupPoint::new(vec![1.0, 0.0], 0.0);
        let (a, f) = kohn_laplacian_radial_check(RadialProfile::Power(4.0), &xi, 1e-3).unwrap();
        assert!((a - 24.0).abs() < 1e-12);
        assert!((f - 24.0).abs() < 1e-4);
        let (a, f) = kohn_laplacian_radial_check(RadialProfile::Power(2.0), &xi, 1e-3).unwrap();
        assert!((a - 8.0).abs() < 1e-12);
        assert!((f - 8.0).abs() < 1e-3);
        let (a, f) = kohn_laplacian_radial_check(RadialProfile::Constant(3.0), &xi, 1e-2).unwrap();
        assert_eq!((a, f), (0.0, 0.0));
        assert!(kohn_laplacian_radial_check(RadialProfile::Power(2.0), &GroupPoint::origin(1), 0.1).is_err());
    }

    #[test]
    fn ball_examples() {
        let g = grid(&["1", "0"], 11.0, Resolution::new(8, 16, 8));
        let one = Field::constant(g.clone(), 1.0);
        let tiny = KoranyiBall::new(GroupPoint::new(vec![0.01, 0.013], 0.0), 1e-3).unwrap();
        let e = energy_in_ball(&one, &quartic(), &tiny).unwrap();
        assert_eq!(e.total, 0.0);
        let big = KoranyiBall::new(GroupPoint::origin(1), 10.0).unwrap();
        assert_eq!(energy_in_ball(&one, &quartic(), &big).unwrap().total, 0.0);
        let over = KoranyiBall::new(GroupPoint::origin(1), 20.0).unwrap();
        assert!(matches!(
            energy_in_ball(&one, &quartic(), &over),
            Err(Error::BallOverflow { .. })
        ));
    }

    #[test]
    fn ball_counts_match_brute_force() {
        let g = grid(&["1", "2"], 11.0, Resolution::new(8, 16, 8));
        let ball = KoranyiBall::new(GroupPoint::new(vec![0.2, -0.1], 0.3), 2.3).unwrap();
        let counts = ball_counts(&g, &ball).unwrap();
        let p = g.vertical_period();
        let k = &g.transverse_vectors()[0];
        for idx in (0..g.len()).step_by(7) {
            let xi = g.point(idx);
            let mut n = 0;
            for lj in -6i64..=6 {
                let kk: Vec<f64> = k.iter().map(|v| lj as f64 * v).collect();
                let img = group_mul(&GroupPoint::new(kk, 0.0), &xi).unwrap();
                for m in -40i64..=40 {
                    let shifted = GroupPoint::new(img.z.clone(), img.t + m as f64 * p);
                    if ball.contains(&shifted).unwrap() {
                        n += 1;
                    }
                }
            }
            assert_eq!(counts[idx], n, "node {idx}");
        }
    }

    #[test]
    fn tau_collapse_is_exact() {
        let g = grid(&["1", "1"], 11.0, Resolution::new(8, 16, 16));
        let f = Field::from_coords(g.clone(), |s, a, _| (0.3 * a + (6.28 * s[0]).sin() * 0.2).tanh());
        let c = Arc::new(g.collapse_tau());
        let fc = f.collapse(c.clone());
        let func = Functional::new(PotentialSpec::quartic(ModulationSpec::cosine(1.5, 0.5, 2)));
        let e_full = energy_total(&f, &func);
        let e_c = energy_total(&fc, &func);
        assert!((e_full.total - e_c.total).abs() < 1e-10 * e_full.total);
        let gf = el_gradient(&f, &func).unwrap();
        let gc = el_gradient(&fc, &func).unwrap().broadcast(g.clone());
        assert!(gf.sup_diff(&gc).unwrap() < 1e-10);
    }

    proptest::proptest! {
        #![proptest_config(proptest::test_runner::Config::with_cases(24))]
        #[test]
        fn submodular_and_nonnegative(seed in 0u64..1000, shift in -0.5f64..0.5) {
            let g = grid(&["1", "1"], 11.0, Resolution::new(8, 16, 8));
            let func = Functional::new(PotentialSpec::quartic(ModulationSpec::cosine(1.5, 0.5, 2)));
            let u = random_field(&g, seed);
            let v = random_field(&g, seed + 7);
            let e = |x: &[f64]| EnergyModel::new(g.clone(), func.clone()).energy(x).total;
            let lo: Vec<f64> = u.values().iter().zip(v.values()).map(|(a, b)| a.min(*b)).collect();
            let hi: Vec<f64> = u.values().iter().zip(v.values()).map(|(a, b)| a.max(*b)).collect();
            let (eu, ev) = (e(u.values()), e(v.values()));
            proptest::prop_assert!(eu >= 0.0 && ev >= 0.0);
            proptest::prop_assert!(e(&lo) + e(&hi) <= (eu + ev) * (1.0 + 1e-12));
            // ordered pair: min and max just swap the roles
            let w: Vec<f64> = u.values().iter().map(|a| a + shift.abs()).collect();
            let lo: Vec<f64> = u.values().iter().zip(&w).map(|(a, b)| a.min(*b)).collect();
            let hi: Vec<f64> = u.values().iter().zip(&w).map(|(a, b)| a.max(*b)).collect();
            let lhs = e(&lo) + e(&hi);
            let rhs = eu + e(&w);
            proptest::prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1.0));
        }
    }
}
