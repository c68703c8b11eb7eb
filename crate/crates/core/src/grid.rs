//! Twisted-periodic discretization of the fundamental cell.
//!
//! A node `(m_1..m_{2n-1}, i, l)` sits at
//! `z = sum_j s_j p k^j + a omega_hat`, `t = tau + zeta(z)` with
//! `s_j = (m_j - N_s/2) / N_s`, `a = (i - N_a/2) da`, `tau = -p Theta + l dtau`
//! and `zeta(z) = 2 a Im(conj(omega_hat) z)`. Values are stored with the
//! transverse indices slowest and `l` fastest.
//!
//! Crossing the transverse boundary along `k^j` shifts `l` by an integer that
//! is affine in `i` and in the other transverse indices; `da` is snapped so
//! that this count is exact.

use std::sync::{Arc, OnceLock};

use num_integer::Integer;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::heis::{symplectic, GroupPoint, IntegerBase, LatticeVector};

/// Sentinel neighbor entries for reads past `a = -L` and `a = +L`.
pub const PAD_MINUS: u32 = u32::MAX - 1;
pub const PAD_PLUS: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct CellSpec {
    pub base: IntegerBase,
    pub p: u32,
    /// Slab half-width of the constraint.
    pub m: f64,
    /// Requested computational half-extent along `omega_hat`.
    pub l: f64,
    pub delta: f64,
}

impl CellSpec {
    pub fn new(base: IntegerBase, p: u32, m: f64, l: f64, delta: f64) -> Result<Self> {
        let spec = CellSpec { base, p, m, l, delta };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::InvalidArgument("p must be positive".into()));
        }
        if !(self.m >= 10.0) {
            return Err(Error::InvalidArgument(format!(
                "M must be at least 10, got {}",
                self.m
            )));
        }
        if !(self.l > self.m) || !self.l.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "L = {} must exceed M = {}",
                self.l, self.m
            )));
        }
        if !(self.delta > 0.0 && self.delta < 0.5) {
            return Err(Error::InvalidArgument("delta must lie in (0, 1/2)".into()));
        }
        Ok(())
    }

    pub fn with_m(&self, m: f64) -> Result<CellSpec> {
        CellSpec::new(self.base.clone(), self.p, m, self.l, self.delta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Resolution {
    pub ns: usize,
    pub na: usize,
    pub nt: usize,
}

impl Resolution {
    pub fn new(ns: usize, na: usize, nt: usize) -> Self {
        Resolution { ns, na, nt }
    }
}

/// Where a lattice coordinate lands after reduction into the cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Site {
    Node(usize),
    PadMinus,
    PadPlus,
}

#[derive(Debug)]
pub struct Grid {
    spec: CellSpec,
    res: Resolution,
    n: usize,
    /// Transverse vectors `k^j` as floats.
    kvec: Vec<Vec<f64>>,
    knorm: Vec<f64>,
    omega_hat: Vec<f64>,
    da: f64,
    dt: f64,
    /// Twist slope per unit of `i`, per transverse direction.
    alpha: Vec<i64>,
    /// Twist slope per unit of `m_i` for a wrap along `j`: `beta[j][i]`.
    beta: Vec<Vec<i64>>,
    weight: f64,
    neighbors: Vec<u32>,
    collapsed: OnceLock<Arc<Grid>>,
}

impl Grid {
    pub fn spec(&self) -> &CellSpec {
        &self.spec
    }

    pub fn resolution(&self) -> Resolution {
        self.res
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of transverse directions, `2n - 1`.
    pub fn nt_dirs(&self) -> usize {
        2 * self.n - 1
    }

    /// Number of neighbor directions per node.
    pub fn ndir(&self) -> usize {
        2 * (2 * self.n + 1)
    }

    pub fn len(&self) -> usize {
        self.res.ns.pow(self.nt_dirs() as u32) * self.res.na * self.res.nt
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn da(&self) -> f64 {
        self.da
    }

    pub fn ds(&self) -> f64 {
        1.0 / self.res.ns as f64
    }

    pub fn dtau(&self) -> f64 {
        self.dt
    }

    /// Effective half-extent `N_a da / 2` after snapping.
    pub fn half_extent(&self) -> f64 {
        self.res.na as f64 * self.da / 2.0
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn omega_hat(&self) -> &[f64] {
        &self.omega_hat
    }

    pub fn transverse_vectors(&self) -> &[Vec<f64>] {
        &self.kvec
    }

    pub fn transverse_norms(&self) -> &[f64] {
        &self.knorm
    }

    /// Vertical period `2 p Theta`.
    pub fn vertical_period(&self) -> f64 {
        2.0 * self.spec.p as f64 * self.spec.base.theta() as f64
    }

    /// `prod_j p |k^j|`.
    pub fn transverse_area(&self) -> f64 {
        let p = self.spec.p as f64;
        self.knorm.iter().map(|k| p * k).product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.transverse_area() * 2.0 * self.half_extent() * self.vertical_period()
    }

    pub fn twist_alpha(&self) -> &[i64] {
        &self.alpha
    }

    #[inline]
    pub fn neighbors(&self, idx: usize) -> &[u32] {
        let d = self.ndir();
        &self.neighbors[idx * d..(idx + 1) * d]
    }

    pub fn neighbor_table(&self) -> &[u32] {
        &self.neighbors
    }

    pub fn a_of(&self, i: usize) -> f64 {
        (i as f64 - (self.res.na / 2) as f64) * self.da
    }

    pub fn s_of(&self, m: usize) -> f64 {
        (m as f64 - (self.res.ns / 2) as f64) / self.res.ns as f64
    }

    pub fn tau_of(&self, l: usize) -> f64 {
        -self.vertical_period() / 2.0 + l as f64 * self.dt
    }

    /// Splits a flat index into `(m, i, l)`.
    pub fn unflatten(&self, mut idx: usize) -> (Vec<usize>, usize, usize) {
        let l = idx % self.res.nt;
        idx /= self.res.nt;
        let i = idx % self.res.na;
        idx /= self.res.na;
        let mut m = vec![0; self.nt_dirs()];
        for j in (0..self.nt_dirs()).rev() {
            m[j] = idx % self.res.ns;
            idx /= self.res.ns;
        }
        (m, i, l)
    }

    pub fn flatten(&self, m: &[usize], i: usize, l: usize) -> usize {
        let mut idx = 0;
        for &mj in m {
            idx = idx * self.res.ns + mj;
        }
        (idx * self.res.na + i) * self.res.nt + l
    }

    /// Index of the `a`-column `i` of a flat node index.
    #[inline]
    pub fn column_of(&self, idx: usize) -> usize {
        (idx / self.res.nt) % self.res.na
    }

    /// Transverse part `sum_j s_j p k^j`.
    pub fn z_perp(&self, s: &[f64]) -> Vec<f64> {
        let p = self.spec.p as f64;
        let mut z = vec![0.0; 2 * self.n];
        for (sj, k) in s.iter().zip(&self.kvec) {
            for (zi, ki) in z.iter_mut().zip(k) {
                *zi += sj * p * ki;
            }
        }
        z
    }

    /// Physical point of extended (possibly out-of-cell) coordinates.
    pub fn point_at(&self, s: &[f64], a: f64, tau: f64) -> GroupPoint {
        let mut z = self.z_perp(s);
        for (zi, w) in z.iter_mut().zip(&self.omega_hat) {
            *zi += a * w;
        }
        let t = tau + self.zeta(&z);
        GroupPoint { z, t }
    }

    /// Shear `zeta(z) = 2 (omega_hat . z) Im(conj(omega_hat) z)`.
    pub fn zeta(&self, z: &[f64]) -> f64 {
        let a: f64 = z.iter().zip(&self.omega_hat).map(|(x, w)| x * w).sum();
        2.0 * a * symplectic(&self.omega_hat, z)
    }

    pub fn point(&self, idx: usize) -> GroupPoint {
        let (m, i, l) = self.unflatten(idx);
        let s: Vec<f64> = m.iter().map(|&mj| self.s_of(mj)).collect();
        self.point_at(&s, self.a_of(i), self.tau_of(l))
    }

    /// Cell coordinates `(s, a, tau)` of a physical point (no reduction).
    pub fn coords_of(&self, xi: &GroupPoint) -> (Vec<f64>, f64, f64) {
        let p = self.spec.p as f64;
        let s = self
            .kvec
            .iter()
            .zip(&self.knorm)
            .map(|(k, kn)| xi.z.iter().zip(k).map(|(x, y)| x * y).sum::<f64>() / (p * kn * kn))
            .collect();
        let a = xi.z.iter().zip(&self.omega_hat).map(|(x, y)| x * y).sum();
        (s, a, xi.t - self.zeta(&xi.z))
    }

    /// Twist count (in units of `dtau`) for a wrap along `k^j`, evaluated at
    /// integer coordinates.
    #[inline]
    fn shift(&self, j: usize, m: &[i64], i: i64) -> i64 {
        let half_a = (self.res.na / 2) as i64;
        let half_s = (self.res.ns / 2) as i64;
        let mut v = self.alpha[j] * (i - half_a);
        for (q, &mq) in m.iter().enumerate() {
            if q != j {
                v -= self.beta[j][q] * (mq - half_s);
            }
        }
        v
    }

    /// Reduces integer lattice coordinates into the cell.
    pub fn canonical(&self, m: &[i64], i: i64, l: i64) -> Site {
        if i < 0 {
            return Site::PadMinus;
        }
        if i >= self.res.na as i64 {
            return Site::PadPlus;
        }
        let ns = self.res.ns as i64;
        let mut m = m.to_vec();
        let mut l = l;
        for j in 0..m.len() {
            let wraps = m[j].div_euclid(ns);
            if wraps != 0 {
                m[j] -= wraps * ns;
                l += wraps * self.shift(j, &m, i);
            }
        }
        let l = l.rem_euclid(self.res.nt as i64) as usize;
        let mu: Vec<usize> = m.iter().map(|&v| v as usize).collect();
        Site::Node(self.flatten(&mu, i as usize, l))
    }

    /// The node one transverse step from `idx` along `k^j`; the landing node
    /// represents `(+-p k^j, 0)` acting on the unwrapped neighbor.
    pub fn wrap_index(&self, idx: usize, j: usize, dir: i32) -> usize {
        let d = if dir >= 0 { 2 * j } else { 2 * j + 1 };
        self.neighbors(idx)[d] as usize
    }

    /// Shared collapsed copy of this grid (see [`Grid::collapse_tau`]).
    pub fn collapsed(&self) -> Arc<Grid> {
        self.collapsed
            .get_or_init(|| Arc::new(self.collapse_tau()))
            .clone()
    }

    /// Builds a grid with the same geometry but a single vertical node.
    /// Only valid for fields that do not depend on `tau`.
    pub fn collapse_tau(&self) -> Grid {
        let res = Resolution::new(self.res.ns, self.res.na, 1);
        let mut g = Grid {
            spec: self.spec.clone(),
            res,
            n: self.n,
            kvec: self.kvec.clone(),
            knorm: self.knorm.clone(),
            omega_hat: self.omega_hat.clone(),
            da: self.da,
            dt: self.vertical_period(),
            alpha: self.alpha.clone(),
            beta: self.beta.clone(),
            weight: self.weight * self.res.nt as f64,
            neighbors: Vec::new(),
            collapsed: OnceLock::new(),
        };
        g.neighbors = g.build_neighbors();
        g
    }

    fn build_neighbors(&self) -> Vec<u32> {
        let nd = self.ndir();
        let t = self.nt_dirs();
        let mut out = vec![0u32; self.len() * nd];
        let code = |s: Site| match s {
            Site::Node(k) => k as u32,
            Site::PadMinus => PAD_MINUS,
            Site::PadPlus => PAD_PLUS,
        };
        for idx in 0..self.len() {
            let (m, i, l) = self.unflatten(idx);
            let mi: Vec<i64> = m.iter().map(|&v| v as i64).collect();
            let (i, l) = (i as i64, l as i64);
            let row = &mut out[idx * nd..(idx + 1) * nd];
            let mut mm = mi.clone();
            for j in 0..t {
                mm[j] = mi[j] + 1;
                row[2 * j] = code(self.canonical(&mm, i, l));
                mm[j] = mi[j] - 1;
                row[2 * j + 1] = code(self.canonical(&mm, i, l));
                mm[j] = mi[j];
            }
            row[2 * t] = code(self.canonical(&mi, i + 1, l));
            row[2 * t + 1] = code(self.canonical(&mi, i - 1, l));
            row[2 * t + 2] = code(self.canonical(&mi, i, l + 1));
            row[2 * t + 3] = code(self.canonical(&mi, i, l - 1));
        }
        out
    }
}

fn is_int(x: f64) -> Option<i64> {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * (1.0 + x.abs()) {
        Some(r as i64)
    } else {
        None
    }
}

/// Smallest `da` keeping every transverse twist integral, if any twist exists.
pub fn commensurate_unit(spec: &CellSpec, nt: usize) -> Option<f64> {
    let base = &spec.base;
    let pairings = base.theta_pairings();
    let last = 2 * base.n() - 1;
    let g = (0..last).fold(0i64, |acc, j| acc.gcd(&pairings[last][j].abs()));
    if g == 0 {
        return None;
    }
    let dt = 2.0 * (spec.p as i64 * base.theta()) as f64 / nt as f64;
    Some(base.along().norm() * dt / (4.0 * spec.p as f64 * g as f64))
}

/// Resolution with `da` rounded to a commensurate spacing and `N_a`
/// chosen so that `N_a da` covers `[-L, L]`.
pub fn resolution_for(spec: &CellSpec, ns: usize, da: f64, nt: usize) -> Resolution {
    let da = match commensurate_unit(spec, nt) {
        Some(unit) => (da / unit).round().max(1.0) * unit,
        None => da,
    };
    let half = (spec.l / da).round() as usize;
    Resolution::new(ns, 2 * half.max(4), nt)
}

/// Builds the grid, snapping `da` to the nearest commensurate spacing.
pub fn make_grid(spec: CellSpec, res: Resolution) -> Result<Grid> {
    spec.validate()?;
    if res.ns < 8 || res.na < 8 || res.nt < 8 {
        return Err(Error::InvalidArgument(format!(
            "resolutions must be at least 8 per axis, got {res:?}"
        )));
    }
    if res.ns % 2 != 0 || res.na % 2 != 0 {
        return Err(Error::InvalidArgument("N_s and N_a must be even".into()));
    }
    let base = &spec.base;
    let n = base.n();
    let dim = 2 * n;
    let p = spec.p as i64;
    let theta = base.theta();
    let kvec: Vec<Vec<f64>> = base.transverse().iter().map(LatticeVector::as_f64).collect();
    let knorm: Vec<f64> = base.transverse().iter().map(LatticeVector::norm).collect();
    let omega_hat = base.omega_hat();
    let along_norm = base.along().norm();
    let pairings = base.theta_pairings();
    let last = dim - 1;

    let dt = 2.0 * (p * theta) as f64 / res.nt as f64;

    // twist counts: alpha_j = 4 p Theta_{2n,j} da / (|k^{2n}| dtau)
    let da_req = 2.0 * spec.l / res.na as f64;
    let da = match commensurate_unit(&spec, res.nt) {
        None => da_req,
        Some(unit) => {
            let da = (da_req / unit).round().max(1.0) * unit;
            if ((da - da_req) / da_req).abs() > 0.05 {
                return Err(Error::Incommensurable(format!(
                    "spacing {da_req} cannot be snapped to a multiple of {unit} within 5%"
                )));
            }
            da
        }
    };
    let alpha: Vec<i64> = (0..last)
        .map(|j| {
            let v = 4.0 * (p * pairings[last][j]) as f64 * da / (along_norm * dt);
            is_int(v).ok_or_else(|| {
                Error::Incommensurable(format!("twist slope {v} along k^{} is not integral", j + 1))
            })
        })
        .collect::<Result<_>>()?;
    // beta_ji = p Theta_ji N_tau / (N_s Theta)
    let mut beta = vec![vec![0i64; last]; last];
    for j in 0..last {
        for i in 0..last {
            if i == j {
                continue;
            }
            let num = p * pairings[j][i] * res.nt as i64;
            let den = res.ns as i64 * theta;
            if num % den != 0 {
                return Err(Error::Incommensurable(format!(
                    "transverse twist {}/{} between k^{} and k^{} is not integral; \
                     choose N_tau as a multiple of N_s",
                    num,
                    den,
                    j + 1,
                    i + 1
                )));
            }
            beta[j][i] = num / den;
        }
    }

    let half_extent = res.na as f64 * da / 2.0;
    if half_extent <= spec.m {
        return Err(Error::ExtentTooSmall {
            needed: spec.m,
            extent: half_extent,
        });
    }
    let area: f64 = knorm.iter().map(|k| spec.p as f64 * k).product();
    let weight = area / (res.ns.pow(last as u32) as f64) * da * dt;

    let mut grid = Grid {
        spec,
        res,
        n,
        kvec,
        knorm,
        omega_hat,
        da,
        dt,
        alpha,
        beta,
        weight,
        neighbors: Vec::new(),
        collapsed: OnceLock::new(),
    };
    grid.neighbors = grid.build_neighbors();
    Ok(grid)
}

/// Scalar values on the nodes of a grid.
#[derive(Debug, Clone)]
pub struct Field {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl PartialEq for Field {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) && self.values == other.values
    }
}

impl Field {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Field> {
        if values.len() != grid.len() {
            return Err(Error::Dimension {
                expected: grid.len(),
                got: values.len(),
            });
        }
        Ok(Field { grid, values })
    }

    pub fn constant(grid: Arc<Grid>, v: f64) -> Field {
        let values = vec![v; grid.len()];
        Field { grid, values }
    }

    /// Samples `f(xi)` at every node.
    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(&GroupPoint) -> f64) -> Field {
        let values = (0..grid.len()).map(|k| f(&grid.point(k))).collect();
        Field { grid, values }
    }

    /// Samples `f(s, a, tau)` in cell coordinates.
    pub fn from_coords(grid: Arc<Grid>, f: impl Fn(&[f64], f64, f64) -> f64) -> Field {
        let values = (0..grid.len())
            .map(|k| {
                let (m, i, l) = grid.unflatten(k);
                let s: Vec<f64> = m.iter().map(|&v| grid.s_of(v)).collect();
                f(&s, grid.a_of(i), grid.tau_of(l))
            })
            .collect();
        Field { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn same_grid(&self, other: &Field) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid)
    }

    /// Value at a site, with `-1` / `+1` beyond the slab ends.
    #[inline]
    pub fn at(&self, site: Site) -> f64 {
        match site {
            Site::Node(k) => self.values[k],
            Site::PadMinus => -1.0,
            Site::PadPlus => 1.0,
        }
    }

    pub fn sup_diff(&self, other: &Field) -> Result<f64> {
        if self.values.len() != other.values.len() {
            return Err(Error::GridMismatch);
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub fn is_tau_uniform(&self) -> bool {
        let nt = self.grid.res.nt;
        self.values.chunks(nt).all(|c| c.iter().all(|&v| v == c[0]))
    }

    /// Restricts a `tau`-uniform field to the collapsed grid.
    pub fn collapse(&self, collapsed: Arc<Grid>) -> Field {
        let nt = self.grid.res.nt;
        let values = self.values.iter().step_by(nt).copied().collect();
        Field {
            grid: collapsed,
            values,
        }
    }

    /// Broadcasts a collapsed field back along `tau`.
    pub fn broadcast(&self, full: Arc<Grid>) -> Field {
        let nt = full.res.nt;
        let mut values = Vec::with_capacity(full.len());
        for &v in &self.values {
            values.extend(std::iter::repeat(v).take(nt));
        }
        Field { grid: full, values }
    }

    /// Multilinear interpolation at an arbitrary physical point, using the
    /// periodic structure to reduce it into the cell.
    pub fn sample(&self, xi: &GroupPoint) -> f64 {
        let g = &*self.grid;
        let (s, a, tau) = g.coords_of(xi);
        let ns = g.res.ns as f64;
        let mut base = Vec::with_capacity(s.len() + 2);
        let mut frac = Vec::with_capacity(s.len() + 2);
        let mut push = |x: f64| {
            let f = x.floor();
            base.push(f as i64);
            frac.push(x - f);
        };
        for sj in &s {
            push(sj * ns + (g.res.ns / 2) as f64);
        }
        push(a / g.da + (g.res.na / 2) as f64);
        push((tau + g.vertical_period() / 2.0) / g.dt);
        let dims = base.len();
        let t = dims - 2;
        let mut total = 0.0;
        let mut m = vec![0i64; t];
        for corner in 0..(1usize << dims) {
            let mut w = 1.0;
            let mut pos = [0i64; 2];
            for d in 0..dims {
                let bit = ((corner >> d) & 1) as i64;
                w *= if bit == 1 { frac[d] } else { 1.0 - frac[d] };
                if d < t {
                    m[d] = base[d] + bit;
                } else {
                    pos[d - t] = base[d] + bit;
                }
            }
            if w == 0.0 {
                continue;
            }
            total += w * self.at(g.canonical(&m, pos[0], pos[1]));
        }
        total
    }
}

/// `u(z, t + 2j)` re-indexed exactly.
pub fn vertical_shift(field: &Field, j: i64) -> Result<Field> {
    let g = &*field.grid;
    if g.res.nt == 1 {
        return Ok(field.clone());
    }
    let steps = 2.0 * j as f64 / g.dt;
    let k = is_int(steps).ok_or(Error::VerticalShift {
        shift: 2.0 * j as f64,
        spacing: g.dt,
    })?;
    let nt = g.res.nt as i64;
    let mut values = vec![0.0; field.values.len()];
    for (dst, src) in values.chunks_mut(g.res.nt).zip(field.values.chunks(g.res.nt)) {
        for (l, v) in dst.iter_mut().enumerate() {
            *v = src[(l as i64 + k).rem_euclid(nt) as usize];
        }
    }
    Ok(Field {
        grid: field.grid.clone(),
        values,
    })
}

/// Integer index offsets realizing a lattice translation on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TranslationPlan {
    pub ds: Vec<i64>,
    pub di: i64,
    /// `tau` shift in steps: `a_coef (i - N_a/2) + sum_j s_coef[j] (m_j - N_s/2) + constant`.
    pub a_coef: i64,
    pub s_coef: Vec<i64>,
    pub constant: i64,
}

/// Decomposes `(k, 0)` acting on the cell into index offsets.
///
/// On a grid with a single vertical node the `tau` offsets are irrelevant
/// and set to zero.
pub fn translation_plan(grid: &Grid, k: &LatticeVector) -> Result<TranslationPlan> {
    plan_inner(grid, k, grid.res.nt == 1)
}

fn plan_inner(grid: &Grid, k: &LatticeVector, ignore_tau: bool) -> Result<TranslationPlan> {
    let dim = 2 * grid.n;
    if k.0.len() != dim {
        return Err(Error::Dimension {
            expected: dim,
            got: k.0.len(),
        });
    }
    let kf = k.as_f64();
    let p = grid.spec.p as f64;
    let ns = grid.res.ns as f64;
    let fail = |reason: String| Error::IncommensurateTranslation {
        k: k.0.clone(),
        reason,
    };
    let t = grid.nt_dirs();
    let mut c = vec![0.0; t];
    let mut ds = vec![0i64; t];
    for j in 0..t {
        let kj = &grid.kvec[j];
        c[j] = kf.iter().zip(kj).map(|(x, y)| x * y).sum::<f64>() / (p * grid.knorm[j].powi(2));
        ds[j] = is_int(c[j] * ns)
            .ok_or_else(|| fail(format!("transverse remainder {} of a node step", c[j] * ns)))?;
    }
    let b: f64 = kf.iter().zip(&grid.omega_hat).map(|(x, y)| x * y).sum();
    let di = is_int(b / grid.da)
        .ok_or_else(|| fail(format!("slab offset {} is not a multiple of {}", b, grid.da)))?;
    if ignore_tau {
        return Ok(TranslationPlan {
            ds,
            di,
            a_coef: 0,
            s_coef: vec![0; t],
            constant: 0,
        });
    }
    let k_perp = grid.z_perp(&c);
    let sw = symplectic(&grid.omega_hat, &k_perp);
    let a_coef_f = -4.0 * grid.da * sw / grid.dt;
    let a_coef =
        is_int(a_coef_f).ok_or_else(|| fail(format!("twist slope {a_coef_f} per column is not integral")))?;
    let mut s_coef = vec![0i64; t];
    for j in 0..t {
        let v = 2.0 * p * symplectic(&k_perp, &grid.kvec[j]) / (ns * grid.dt);
        s_coef[j] = is_int(v)
            .ok_or_else(|| fail(format!("transverse twist {v} along k^{} is not integral", j + 1)))?;
    }
    let const_f = -2.0 * b * sw / grid.dt;
    let constant =
        is_int(const_f).ok_or_else(|| fail(format!("vertical offset {const_f} is not integral")))?;
    Ok(TranslationPlan {
        ds,
        di,
        a_coef,
        s_coef,
        constant,
    })
}

/// Whether `translate_field` can act on this field exactly.
pub fn translation_commensurate(field: &Field, k: &LatticeVector) -> bool {
    let g = &*field.grid;
    translation_plan(g, k).is_ok() || (plan_inner(g, k, true).is_ok() && field.is_tau_uniform())
}

/// `T_k u (xi) = u((k, 0) o xi)`, with pad values beyond the slab ends.
///
/// For fields that do not depend on `tau` only the transverse and slab
/// offsets need to be commensurate.
pub fn translate_field(field: &Field, k: &LatticeVector) -> Result<Field> {
    let g = &*field.grid;
    let plan = match translation_plan(g, k) {
        Ok(p) => p,
        Err(e) => match plan_inner(g, k, true) {
            Ok(p) if field.is_tau_uniform() => p,
            _ => return Err(e),
        },
    };
    if plan.ds.iter().all(|&v| v == 0) && plan.di == 0 && plan.constant == 0 && plan.a_coef == 0 {
        return Ok(field.clone());
    }
    if g.res.nt > 1 && field.is_tau_uniform() {
        let collapsed = g.collapsed();
        return Ok(translate_field(&field.collapse(collapsed), k)?.broadcast(field.grid.clone()));
    }
    let half_a = (g.res.na / 2) as i64;
    let half_s = (g.res.ns / 2) as i64;
    let nt = g.res.nt;
    let mut values = vec![0.0; g.len()];
    values.par_chunks_mut(nt).enumerate().for_each(|(col, out)| {
        let (mu, i, _) = g.unflatten(col * nt);
        let i = i as i64;
        let mut shift = plan.a_coef * (i - half_a) + plan.constant;
        let mut m = vec![0i64; mu.len()];
        for j in 0..m.len() {
            shift += plan.s_coef[j] * (mu[j] as i64 - half_s);
            m[j] = mu[j] as i64 + plan.ds[j];
        }
        for (l, v) in out.iter_mut().enumerate() {
            *v = field.at(g.canonical(&m, i + plan.di, l as i64 + shift));
        }
    });
    Ok(Field {
        grid: field.grid.clone(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heis::{group_mul, parse_rational};
    use proptest::prelude::*;

    fn base(omega: &[&str]) -> IntegerBase {
        let q: Vec<_> = omega.iter().map(|s| parse_rational(s).unwrap()).collect();
        crate::heis::build_integer_base(&q).unwrap()
    }

    fn grid(omega: &[&str], p: u32, l: f64, res: Resolution) -> Arc<Grid> {
        let spec = CellSpec::new(base(omega), p, 10.0, l, 0.1).unwrap();
        Arc::new(make_grid(spec, res).unwrap())
    }

    fn small() -> Arc<Grid> {
        grid(&["1", "0"], 1, 11.0, Resolution::new(8, 16, 8))
    }

    /// Reduces `t` modulo the vertical period relative to `reference`.
    fn same_mod_period(a: &GroupPoint, b: &GroupPoint, period: f64) -> bool {
        let zs = a.z.iter().zip(&b.z).all(|(x, y)| (x - y).abs() < 1e-10);
        let r = (a.t - b.t) / period;
        zs && (r - r.round()).abs() * period < 1e-10
    }

    #[test]
    fn node_count_and_shear() {
        let g = small();
        assert_eq!(g.len(), 1024);
        for idx in [0, 17, 333, 1023] {
            let (m, i, l) = g.unflatten(idx);
            assert_eq!(g.flatten(&m, i, l), idx);
            let xi = g.point(idx);
            let tau = g.tau_of(l);
            // zeta = 2 z1 z2 Theta_21 for omega = (1, 0)
            assert!((xi.t - tau - 2.0 * xi.z[0] * xi.z[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn weights_sum_to_cell_volume() {
        for g in [
            small(),
            grid(&["1", "2"], 2, 12.0, Resolution::new(8, 20, 16)),
            grid(&["1", "0", "0", "0"], 1, 11.0, Resolution::new(8, 8, 16)),
        ] {
            let total = g.weight() * g.len() as f64;
            let expect = g.transverse_area() * 2.0 * g.half_extent() * g.vertical_period();
            assert!((total - expect).abs() < 1e-10 * expect);
        }
    }

    #[test]
    fn snapping_rules() {
        let g = small();
        assert_eq!(g.da(), 22.0 / 16.0);
        let spec = CellSpec::new(base(&["1", "0"]), 1, 10.0, 10.2, 0.1).unwrap();
        assert!(matches!(
            make_grid(spec.clone(), Resolution::new(8, 16, 8)),
            Err(Error::ExtentTooSmall { .. })
        ));
        assert!(make_grid(spec.clone(), Resolution::new(8, 16, 4)).is_err());
        assert!(make_grid(spec, Resolution::new(7, 16, 8)).is_err());
    }

    #[test]
    fn wrap_at_boundary_shifts_tau_by_twist() {
        let g = small();
        // alpha = 4 da / dtau = 4 * (22/16) / (1/4) = 22
        assert_eq!(g.twist_alpha(), &[22]);
        let i = 9; // a = da
        let idx = g.flatten(&[7], i, 3);
        let nb = g.wrap_index(idx, 0, 1);
        let (m, i2, l2) = g.unflatten(nb);
        assert_eq!((m[0], i2), (0, i));
        assert_eq!(l2, (3 + 22) % 8);
        // a = 0 column: pure transverse wrap
        let idx = g.flatten(&[7], 8, 5);
        assert_eq!(g.unflatten(g.wrap_index(idx, 0, 1)), (vec![0], 8, 5));
    }

    #[test]
    fn wrap_unwrap_identity() {
        for g in [
            small(),
            grid(&["1", "2"], 1, 11.0, Resolution::new(8, 16, 8)),
            grid(&["1", "0", "0", "0"], 1, 11.0, Resolution::new(8, 8, 16)),
        ] {
            for idx in 0..g.len() {
                for j in 0..g.nt_dirs() {
                    let f = g.wrap_index(idx, j, 1);
                    assert_eq!(g.wrap_index(f, j, -1), idx);
                }
            }
        }
    }

    #[test]
    fn group_action_fidelity() {
        for g in [
            small(),
            grid(&["1", "2"], 2, 12.0, Resolution::new(8, 20, 16)),
            grid(&["2", "3"], 1, 11.0, Resolution::new(8, 16, 8)),
            grid(&["1", "0", "0", "0"], 1, 11.0, Resolution::new(8, 8, 16)),
            grid(&["1", "1", "0", "1"], 1, 11.0, Resolution::new(8, 8, 16)),
        ] {
            let p = g.spec().p as f64;
            let step = 97.min(g.len() / 7).max(1);
            for idx in (0..g.len()).step_by(step) {
                let (m, i, l) = g.unflatten(idx);
                for j in 0..g.nt_dirs() {
                    for dir in [1i32, -1] {
                        let landed = g.wrap_index(idx, j, dir);
                        let mut s: Vec<f64> = m.iter().map(|&v| g.s_of(v)).collect();
                        s[j] += dir as f64 / g.resolution().ns as f64;
                        let ext = g.point_at(&s, g.a_of(i), g.tau_of(l));
                        let crossed = s[j] >= 0.5 || s[j] < -0.5;
                        let mut rep = g.point(landed);
                        if crossed {
                            let kk: Vec<f64> = g.transverse_vectors()[j]
                                .iter()
                                .map(|v| dir as f64 * p * v)
                                .collect();
                            rep = group_mul(&GroupPoint::new(kk, 0.0), &rep).unwrap();
                        }
                        assert!(
                            same_mod_period(&ext, &rep, g.vertical_period()),
                            "{ext:?} vs {rep:?}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn vertical_shift_examples() {
        let g = small();
        let f = Field::from_coords(g.clone(), |s, a, t| (s[0] + 0.3 * a + t).sin());
        assert_eq!(vertical_shift(&f, 0).unwrap(), f);
        // full period 2 p Theta = 2
        assert_eq!(vertical_shift(&f, 1).unwrap(), f);
        let g3 = grid(&["1", "0"], 1, 11.0, Resolution::new(8, 16, 9));
        let f3 = Field::constant(g3, 0.0);
        assert!(vertical_shift(&f3, 0).is_ok());
        let g2 = grid(&["1", "0"], 2, 11.0, Resolution::new(8, 16, 8));
        let f2 = Field::from_coords(g2, |_, _, t| t);
        let sh = vertical_shift(&f2, 1).unwrap();
        assert_ne!(sh.values(), f2.values());
        assert_eq!(vertical_shift(&sh, 1).unwrap().values(), f2.values());
    }

    #[test]
    fn translate_identity_and_periodic() {
        let g = small();
        let f = Field::from_coords(g.clone(), |s, a, t| {
            (2.0 * std::f64::consts::PI * s[0]).cos() * a.tanh() + 0.1 * (std::f64::consts::PI * t).sin()
        });
        assert_eq!(translate_field(&f, &LatticeVector(vec![0, 0])).unwrap(), f);
        // k = k^1 (perpendicular) on a field built from the periodic function itself
        let h = Field::from_fn(g.clone(), |xi| {
            (2.0 * std::f64::consts::PI * xi.z[1]).cos() * xi.z[0].tanh()
        });
        let th = translate_field(&h, &LatticeVector(vec![0, 1])).unwrap();
        assert!(th.sup_diff(&h).unwrap() < 1e-12);
    }

    #[test]
    fn translate_ramp_along_omega() {
        let g = grid(&["1", "0"], 1, 12.0, Resolution::new(8, 48, 8));
        assert_eq!(g.da(), 0.5);
        let ramp = Field::from_coords(g.clone(), |_, a, _| (4.0 * a).clamp(-1.0, 1.0));
        let moved = translate_field(&ramp, &LatticeVector(vec![1, 0])).unwrap();
        let expect = Field::from_coords(g.clone(), |_, a, _| (4.0 * (a + 1.0)).clamp(-1.0, 1.0));
        assert!(moved.sup_diff(&expect).unwrap() < 1e-15);
        let bad = grid(&["1", "0"], 1, 11.0, Resolution::new(8, 16, 8));
        let e = translate_field(&Field::constant(bad, 0.0), &LatticeVector(vec![1, 0]));
        assert!(matches!(e, Err(Error::IncommensurateTranslation { .. })));
    }

    #[test]
    fn translate_matches_physical_action() {
        // sample a smooth periodic function at the translated points
        let g = grid(&["1", "1"], 1, 11.0, Resolution::new(8, 16, 16));
        let h = |xi: &GroupPoint| {
            let pi2 = 2.0 * std::f64::consts::PI;
            (pi2 * xi.z[0]).cos() + 0.5 * (pi2 * xi.z[1]).sin() + (0.2 * (xi.z[0] + xi.z[1])).tanh()
        };
        let f = Field::from_fn(g.clone(), h);
        let k = LatticeVector(vec![1, -1]);
        let tf = translate_field(&f, &k).unwrap();
        for idx in 0..g.len() {
            let xi = g.point(idx);
            let moved = group_mul(&GroupPoint::new(k.as_f64(), 0.0), &xi).unwrap();
            assert!((tf.values()[idx] - h(&moved)).abs() < 1e-9);
        }
    }

    #[test]
    fn sample_reproduces_nodes() {
        let g = grid(&["1", "2"], 1, 11.0, Resolution::new(8, 16, 8));
        let f = Field::from_coords(g.clone(), |s, a, t| s[0] * 0.5 + a * 0.01 + t * 0.1);
        for idx in (0..g.len()).step_by(37) {
            let v = f.sample(&g.point(idx));
            assert!((v - f.values()[idx]).abs() < 1e-9);
        }
    }

    #[test]
    fn collapse_roundtrip() {
        let g = small();
        let f = Field::from_coords(g.clone(), |s, a, _| s[0] + a);
        assert!(f.is_tau_uniform());
        let c = Arc::new(g.collapse_tau());
        let back = f.collapse(c.clone()).broadcast(g.clone());
        assert_eq!(back, f);
        assert!((c.weight() * c.len() as f64 - g.weight() * g.len() as f64).abs() < 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn perpendicular_translation_is_bijection(
            kk in -2i64..3, ns_half in 4usize..7, seed in 0u64..1000,
        ) {
            let g = grid(&["1", "0"], 1, 11.0, Resolution::new(2 * ns_half, 16, 8));
            let vals: Vec<f64> = (0..g.len()).map(|i| ((i as u64 * 2654435761 + seed) % 1000) as f64).collect();
            let f = Field::new(g.clone(), vals).unwrap();
            let k = LatticeVector(vec![0, kk]);
            let tf = translate_field(&f, &k).unwrap();
            let mut a = f.values().to_vec();
            let mut b = tf.values().to_vec();
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            prop_assert_eq!(a, b);
            let back = translate_field(&tf, &LatticeVector(vec![0, -kk])).unwrap();
            prop_assert_eq!(back.values(), f.values());
        }
    }
}
