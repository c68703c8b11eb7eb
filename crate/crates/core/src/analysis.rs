//! Diagnostics on computed fields: level sets, slab confinement, density
//! exponents, rescaled level sets, Birkhoff audits, clean balls and strips.

use rayon::prelude::*;

use crate::energy::{ball_counts, EnergyModel, Functional};
use crate::error::{Error, Result};
use crate::grid::{translate_field, translation_commensurate, Field, Grid};
use crate::heis::{GroupPoint, KoranyiBall, LatticeVector};

/// Nodes with `|u| <= theta`.
pub fn level_set(field: &Field, theta: f64) -> Vec<usize> {
    field
        .values()
        .iter()
        .enumerate()
        .filter(|(_, v)| v.abs() <= theta)
        .map(|(k, _)| k)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlabReport {
    pub theta: f64,
    pub width: f64,
    pub m0_bound: f64,
    pub pass: bool,
}

pub fn slab_width(field: &Field, theta: f64, m0_bound: f64) -> SlabReport {
    let g = field.grid();
    let width = level_set(field, theta)
        .into_iter()
        .map(|k| g.a_of(g.column_of(k)).abs())
        .fold(0.0, f64::max);
    SlabReport {
        theta,
        width,
        m0_bound,
        pass: width <= m0_bound,
    }
}

/// Least-squares slope of `log y` against `log x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerFit {
    pub exponent: f64,
    /// Two standard errors of the slope.
    pub half_width: f64,
    pub prefactor: f64,
}

pub fn fit_power_law(xs: &[f64], ys: &[f64]) -> PowerFit {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    let n = pts.len() as f64;
    if pts.len() < 2 || pts.len() < xs.len() {
        return PowerFit {
            exponent: f64::NAN,
            half_width: f64::NAN,
            prefactor: f64::NAN,
        };
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let half_width = if pts.len() > 2 {
        let rss: f64 = pts.iter().map(|p| (p.1 - icpt - slope * p.0).powi(2)).sum();
        2.0 * (rss / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    PowerFit {
        exponent: slope,
        half_width,
        prefactor: icpt.exp(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityReport {
    pub center: GroupPoint,
    pub radii: Vec<f64>,
    pub ball_energies: Vec<f64>,
    /// Volume of `B_r ∩ {u <= -theta}`.
    pub sublevel_volumes: Vec<f64>,
    /// Volume of `B_r ∩ {u >= theta}`.
    pub suplevel_volumes: Vec<f64>,
    /// Volume of `B_r ∩ {|u| <= theta0}`.
    pub band_volumes: Vec<f64>,
    pub ball_volumes: Vec<f64>,
    pub energy_fit: PowerFit,
    pub sublevel_fit: PowerFit,
    pub suplevel_fit: PowerFit,
    pub band_fit: PowerFit,
}

/// Ball energies and phase volumes around an interface point.
pub fn density_profile(
    field: &Field,
    functional: &Functional,
    center: &GroupPoint,
    radii: &[f64],
    theta: f64,
    theta0: f64,
) -> Result<DensityReport> {
    let value = field.sample(center);
    if value.abs() > theta0 {
        return Err(Error::OffInterface { value, theta0 });
    }
    density_profile_unchecked(field, functional, center, radii, theta, theta0)
}

/// [`density_profile`] without the interface check on the center.
pub fn density_profile_unchecked(
    field: &Field,
    functional: &Functional,
    center: &GroupPoint,
    radii: &[f64],
    theta: f64,
    theta0: f64,
) -> Result<DensityReport> {
    let g = field.grid();
    let model = EnergyModel::new(g.clone(), functional.clone());
    let w = g.weight();
    let u = field.values();
    let mut energies = Vec::new();
    let (mut sub, mut sup, mut band, mut vol) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for &r in radii {
        let ball = KoranyiBall::new(center.clone(), r)?;
        let counts = ball_counts(g, &ball)?;
        energies.push(model.energy_weighted(u, &counts, Some(ball)).total);
        let tally = |pred: &(dyn Fn(f64) -> bool + Sync)| -> f64 {
            w * counts
                .par_iter()
                .zip(u.par_iter())
                .filter(|(_, v)| pred(**v))
                .map(|(c, _)| *c as f64)
                .sum::<f64>()
        };
        sub.push(tally(&|v| v <= -theta));
        sup.push(tally(&|v| v >= theta));
        band.push(tally(&|v| v.abs() <= theta0));
        vol.push(tally(&|_| true));
    }
    Ok(DensityReport {
        center: center.clone(),
        radii: radii.to_vec(),
        energy_fit: fit_power_law(radii, &energies),
        sublevel_fit: fit_power_law(radii, &sub),
        suplevel_fit: fit_power_law(radii, &sup),
        band_fit: fit_power_law(radii, &band),
        ball_energies: energies,
        sublevel_volumes: sub,
        suplevel_volumes: sup,
        band_volumes: band,
        ball_volumes: vol,
    })
}

/// Visits every line along `a`: `(first node index, stride)`.
fn a_lines(g: &Grid) -> impl Iterator<Item = usize> + '_ {
    let r = g.resolution();
    let lines = g.len() / r.na;
    (0..lines).map(move |q| {
        let (outer, l) = (q / r.nt, q % r.nt);
        outer * r.na * r.nt + l
    })
}

/// Interpolated positions along one `a`-line where `u` crosses `level`.
fn crossings(g: &Grid, u: &[f64], start: usize, level: f64) -> Vec<f64> {
    let r = g.resolution();
    let mut out = Vec::new();
    for i in 0..r.na - 1 {
        let (v0, v1) = (u[start + i * r.nt] - level, u[start + (i + 1) * r.nt] - level);
        if v0 == 0.0 {
            out.push(g.a_of(i));
        } else if v0 * v1 < 0.0 {
            out.push(g.a_of(i) + g.da() * v0 / (v0 - v1));
        }
    }
    out
}

/// Median `a`-position of the zero level set.
pub fn zero_level_median(field: &Field) -> Option<f64> {
    let g = field.grid();
    let mut all: Vec<f64> = a_lines(g)
        .flat_map(|s| crossings(g, field.values(), s, 0.0))
        .collect();
    if all.is_empty() {
        return None;
    }
    all.sort_by(f64::total_cmp);
    Some(all[all.len() / 2])
}

/// Width of the level band of the rescaled field `u(z/eps, t/eps^2)` around
/// its plane `omega_hat . z = eps c*`, inside the window `|omega_hat . z| <= window`.
pub fn epsilon_rescale_distance(
    field: &Field,
    epsilons: &[f64],
    theta: f64,
    window: f64,
) -> Result<Vec<f64>> {
    let g = field.grid();
    let c = zero_level_median(field).unwrap_or(0.0);
    let band = level_set(field, theta);
    let mut out = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(Error::InvalidArgument(format!("epsilon {eps} outside (0, 1]")));
        }
        let reach = window / eps;
        if reach > g.half_extent() {
            return Err(Error::WindowOverflow { eps });
        }
        let d = band
            .iter()
            .map(|&k| g.a_of(g.column_of(k)))
            .filter(|a| a.abs() <= reach)
            .map(|a| eps * (a - c).abs())
            .fold(0.0, f64::max);
        out.push(d);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BirkhoffRow {
    pub k: LatticeVector,
    /// Largest amount by which the ordering `T_k u >= u` (or `T_k u == u`
    /// when `omega . k == 0`) fails.
    pub worst_violation: f64,
    pub worst_node: Option<usize>,
    /// `T_k {u < 0}` lies inside `{u < 0}`.
    pub sublevel_inclusion: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BirkhoffAudit {
    pub rows: Vec<BirkhoffRow>,
    pub worst_violation: f64,
    pub skipped: Vec<LatticeVector>,
}

pub fn birkhoff_audit(field: &Field, kmax: i64) -> Result<BirkhoffAudit> {
    if kmax < 1 {
        return Err(Error::InvalidArgument("kmax must be at least 1".into()));
    }
    let base = &field.grid().spec().base;
    let dim = 2 * base.n();
    let omega = base.omega_primitive();
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    let side = (2 * kmax + 1) as usize;
    for code in 0..side.pow(dim as u32) {
        let mut c = code;
        let k: Vec<i64> = (0..dim)
            .map(|_| {
                let v = (c % side) as i64 - kmax;
                c /= side;
                v
            })
            .collect();
        if k.iter().all(|&v| v == 0) {
            continue;
        }
        let lv = LatticeVector(k);
        if !translation_commensurate(field, &lv) {
            skipped.push(lv);
            continue;
        }
        let dot: i64 = lv.0.iter().zip(&omega).map(|(a, b)| a * b).sum();
        let tk = translate_field(field, &lv)?;
        let mut worst = 0.0;
        let mut at = None;
        let mut inclusion = true;
        for (idx, (t, u)) in tk.values().iter().zip(field.values()).enumerate() {
            let v = match dot.signum() {
                1 => u - t,
                -1 => t - u,
                _ => (t - u).abs(),
            };
            if v > worst {
                worst = v;
                at = Some(idx);
            }
            let (hi, lo) = if dot >= 0 { (t, u) } else { (u, t) };
            if *hi < 0.0 && *lo >= 0.0 {
                inclusion = false;
            }
        }
        rows.push(BirkhoffRow {
            k: lv,
            worst_violation: worst,
            worst_node: at,
            sublevel_inclusion: inclusion,
        });
    }
    let worst = rows.iter().map(|r| r.worst_violation).fold(0.0, f64::max);
    Ok(BirkhoffAudit {
        rows,
        worst_violation: worst,
        skipped,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CleanBall {
    pub ball: Option<KoranyiBall>,
    pub radius: f64,
    pub r0: f64,
    pub pass: bool,
}

/// Largest Koranyi ball, on the ladder `r_min 2^(j/4)`, inside
/// `{|u| > 1 - delta} ∩ {|a| <= a_window}`. Centers are nodes, subsampled to
/// at most four positions per transverse and vertical axis.
pub fn clean_ball_search(field: &Field, delta: f64, a_window: f64, r0: f64) -> Result<CleanBall> {
    let g = field.grid();
    let r = g.resolution();
    let u = field.values();
    let r_min = g.da().max(1e-3);
    let ladder: Vec<f64> = (0..)
        .map(|j| r_min * 2f64.powf(j as f64 / 4.0))
        .take_while(|&x| x <= a_window)
        .collect();
    let sub = |n: usize| -> Vec<usize> {
        (0..4)
            .map(|q| q * n / 4)
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect()
    };
    let (sidx, lidx) = (sub(r.ns), sub(r.nt));
    let mut centers = Vec::new();
    let dirs = g.nt_dirs();
    let combos = sidx.len().pow(dirs as u32);
    for i in 0..r.na {
        if g.a_of(i).abs() >= a_window {
            continue;
        }
        for c in 0..combos {
            let mut cc = c;
            let m: Vec<usize> = (0..dirs)
                .map(|_| {
                    let v = sidx[cc % sidx.len()];
                    cc /= sidx.len();
                    v
                })
                .collect();
            for &l in &lidx {
                let idx = g.flatten(&m, i, l);
                if u[idx].abs() > 1.0 - delta {
                    centers.push(idx);
                }
            }
        }
    }
    let clean = |idx: usize, rad: f64| -> Result<bool> {
        let a = g.a_of(g.column_of(idx));
        if a.abs() + rad > a_window {
            return Ok(false);
        }
        let ball = KoranyiBall::new(g.point(idx), rad)?;
        let counts = ball_counts(g, &ball)?;
        let sign = u[idx].signum();
        Ok(counts
            .iter()
            .zip(u)
            .all(|(c, v)| *c == 0 || (v.abs() > 1.0 - delta && v.signum() == sign)))
    };
    let mut best: Option<(f64, usize)> = None;
    for &idx in &centers {
        // ladder index search, skipping radii no better than the current best
        let mut lo = match best {
            Some((rb, _)) => ladder.iter().position(|&x| x > rb).unwrap_or(ladder.len()),
            None => 0,
        };
        if lo >= ladder.len() || !clean(idx, ladder[lo])? {
            continue;
        }
        let mut hi = ladder.len();
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if clean(idx, ladder[mid])? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        best = Some((ladder[lo], idx));
    }
    Ok(match best {
        Some((rad, idx)) => CleanBall {
            ball: Some(KoranyiBall::new(g.point(idx), rad)?),
            radius: rad,
            r0,
            pass: rad >= r0,
        },
        None => CleanBall {
            ball: None,
            radius: 0.0,
            r0,
            pass: false,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Strip {
    pub lambda: f64,
    /// `+1` or `-1`.
    pub phase: i8,
}

/// Positions `lambda` in `[-m/4, m/4]` such that the strip
/// `lambda - 1 <= a <= lambda + 1` lies in a single pure phase.
pub fn strip_scan(field: &Field, delta: f64, m: f64) -> Vec<Strip> {
    let g = field.grid();
    let r = g.resolution();
    let u = field.values();
    // per column: Some(phase) when every node is pure and of one sign
    let cols: Vec<Option<i8>> = (0..r.na)
        .map(|i| {
            let mut phase = None;
            for k in (0..g.len()).filter(|k| g.column_of(*k) == i) {
                let v = u[k];
                if v.abs() <= 1.0 - delta {
                    return None;
                }
                let s = if v > 0.0 { 1 } else { -1 };
                match phase {
                    None => phase = Some(s),
                    Some(p) if p != s => return None,
                    _ => {}
                }
            }
            phase
        })
        .collect();
    let mut out = Vec::new();
    for i in 0..r.na {
        let lambda = g.a_of(i);
        if lambda.abs() > m / 4.0 + 1e-12 {
            continue;
        }
        let mut phase = None;
        let mut ok = true;
        for (j, c) in cols.iter().enumerate() {
            let a = g.a_of(j);
            if a < lambda - 1.0 - 1e-12 || a > lambda + 1.0 + 1e-12 {
                continue;
            }
            match (c, phase) {
                (None, _) => ok = false,
                (Some(p), None) => phase = Some(*p),
                (Some(p), Some(q)) if *p != q => ok = false,
                _ => {}
            }
            if !ok {
                break;
            }
        }
        if let (true, Some(phase)) = (ok, phase) {
            out.push(Strip { lambda, phase });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceReport {
    pub nodes: Vec<usize>,
    /// Largest distance along `omega_hat` between the `-0.9` and `+0.9`
    /// crossings on any line through the band.
    pub thickness: f64,
    /// Largest `|a|` reached by the band.
    pub confinement: f64,
}

pub const INTERFACE_LEVEL: f64 = 0.9;

pub fn interface_extract(field: &Field) -> InterfaceReport {
    let g = field.grid();
    let u = field.values();
    let nodes = level_set(field, INTERFACE_LEVEL);
    let r = g.resolution();
    let mut thickness: f64 = 0.0;
    let mut confinement: f64 = 0.0;
    for start in a_lines(g) {
        let in_band = (0..r.na).any(|i| u[start + i * r.nt].abs() <= INTERFACE_LEVEL);
        if !in_band {
            continue;
        }
        let lo = crossings(g, u, start, -INTERFACE_LEVEL);
        let hi = crossings(g, u, start, INTERFACE_LEVEL);
        let all = lo.iter().chain(&hi);
        let (amin, amax) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| {
            (a.min(x), b.max(x))
        });
        if amin.is_finite() {
            thickness = thickness.max(amax - amin);
            confinement = confinement.max(amin.abs()).max(amax.abs());
        }
    }
    for &k in &nodes {
        confinement = confinement.max(g.a_of(g.column_of(k)).abs());
    }
    InterfaceReport {
        nodes,
        thickness,
        confinement,
    }
}
