//! Double-well potentials `F(xi, u) = Q(z) W(u)` with a periodic modulation `Q`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::heis::GroupPoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PotentialKind {
    /// `(1 - u^2)^2`
    Quartic,
    /// `(1 - u^2)^d` for `d` in `(0, 2]`
    PowerD,
    /// `1` on `(-1, 1)`, `0` at `u = +-1`
    Indicator,
}

impl PotentialKind {
    pub fn name(self) -> &'static str {
        match self {
            PotentialKind::Quartic => "quartic",
            PotentialKind::PowerD => "power_d",
            PotentialKind::Indicator => "indicator",
        }
    }

    pub fn parse(s: &str) -> Option<PotentialKind> {
        match s {
            "quartic" => Some(PotentialKind::Quartic),
            "power_d" => Some(PotentialKind::PowerD),
            "indicator" => Some(PotentialKind::Indicator),
            _ => None,
        }
    }
}

/// `Q(z) = mean + amplitude * prod_j cos(2 pi f_j z_j)`, optionally squared.
#[derive(Debug, Clone, PartialEq)]
pub struct ModulationSpec {
    pub amplitude: f64,
    pub mean: f64,
    pub frequency: Vec<u32>,
    /// Use the square of the expression above (`Q = alpha^2`).
    pub squared: bool,
}

impl ModulationSpec {
    pub fn constant(value: f64) -> Self {
        ModulationSpec {
            amplitude: 0.0,
            mean: value,
            frequency: Vec::new(),
            squared: false,
        }
    }

    /// Modulation with frequency one in every coordinate.
    pub fn cosine(mean: f64, amplitude: f64, dim: usize) -> Self {
        ModulationSpec {
            amplitude,
            mean,
            frequency: vec![1; dim],
            squared: false,
        }
    }

    pub fn value(&self, z: &[f64]) -> f64 {
        let mut prod = 1.0;
        if self.amplitude != 0.0 {
            for (f, x) in self.frequency.iter().zip(z) {
                prod *= (2.0 * PI * (*f as f64) * x).cos();
            }
        }
        let base = self.mean + self.amplitude * prod;
        if self.squared {
            base * base
        } else {
            base
        }
    }

    pub fn lower_bound(&self) -> f64 {
        let lo = self.mean - self.amplitude.abs();
        if self.squared {
            if lo > 0.0 {
                lo * lo
            } else {
                0.0
            }
        } else {
            lo
        }
    }

    pub fn upper_bound(&self) -> f64 {
        let hi = self.mean + self.amplitude.abs();
        if self.squared {
            hi.powi(2).max(self.lower_bound())
        } else {
            hi
        }
    }

    pub fn is_constant(&self) -> bool {
        self.amplitude == 0.0 || self.frequency.iter().all(|&f| f == 0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSpec {
    pub kind: PotentialKind,
    pub d: f64,
    pub modulation: ModulationSpec,
    pub ell: f64,
}

impl PotentialSpec {
    pub fn quartic(modulation: ModulationSpec) -> Self {
        PotentialSpec {
            kind: PotentialKind::Quartic,
            d: 2.0,
            modulation,
            ell: 0.5,
        }
    }

    pub fn power_d(d: f64, modulation: ModulationSpec) -> Self {
        PotentialSpec {
            kind: PotentialKind::PowerD,
            d,
            modulation,
            ell: 0.5,
        }
    }

    pub fn indicator(modulation: ModulationSpec) -> Self {
        PotentialSpec {
            kind: PotentialKind::Indicator,
            d: 0.0,
            modulation,
            ell: 0.5,
        }
    }

    /// Checks the field ranges; does not check the modulation lower bound
    /// (that is reported by [`structural_check`]).
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        match self.kind {
            PotentialKind::Quartic if self.d != 2.0 => return bad("quartic kind needs d = 2".into()),
            PotentialKind::Indicator if self.d != 0.0 => return bad("indicator kind needs d = 0".into()),
            PotentialKind::PowerD if !(self.d > 0.0 && self.d <= 2.0) => {
                return bad(format!("power_d exponent must lie in (0, 2], got {}", self.d))
            }
            _ => {}
        }
        if !(self.ell > 0.0 && self.ell < 1.0) {
            return bad(format!("ell must lie in (0, 1), got {}", self.ell));
        }
        let m = &self.modulation;
        if !(m.amplitude >= 0.0) || !m.mean.is_finite() || !m.amplitude.is_finite() {
            return bad("modulation amplitude must be finite and nonnegative".into());
        }
        if m.amplitude > 0.0 && m.frequency.iter().any(|&f| f == 0) {
            return bad("modulation frequencies must be positive".into());
        }
        Ok(())
    }

    pub fn has_derivative(&self) -> bool {
        self.kind != PotentialKind::Indicator
    }

    /// Unmodulated well `W(u)`; callers guarantee `|u| <= 1`.
    #[inline]
    pub fn well(&self, u: f64) -> f64 {
        let s = (1.0 - u * u).max(0.0);
        match self.kind {
            PotentialKind::Quartic => s * s,
            PotentialKind::PowerD => s.powf(self.d),
            PotentialKind::Indicator => {
                if u.abs() < 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// `W'(u)`; zero at the wells and for the indicator kind.
    #[inline]
    pub fn well_deriv(&self, u: f64) -> f64 {
        let s = 1.0 - u * u;
        match self.kind {
            PotentialKind::Quartic => -4.0 * u * s,
            PotentialKind::PowerD => {
                if s <= 0.0 {
                    0.0
                } else {
                    -2.0 * self.d * u * s.powf(self.d - 1.0)
                }
            }
            PotentialKind::Indicator => 0.0,
        }
    }
}

pub fn potential_eval(spec: &PotentialSpec, xi: &GroupPoint, u: f64) -> Result<f64> {
    if !(u.abs() <= 1.0) {
        return Err(Error::OutOfRange(u));
    }
    Ok(spec.modulation.value(&xi.z) * spec.well(u))
}

pub fn potential_deriv(spec: &PotentialSpec, xi: &GroupPoint, u: f64) -> Result<f64> {
    if !spec.has_derivative() {
        return Err(Error::NoDerivative(spec.kind.name()));
    }
    if !(u.abs() < 1.0) {
        return Err(Error::OutOfRange(u));
    }
    Ok(spec.modulation.value(&xi.z) * spec.well_deriv(u))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructuralReport {
    pub pass: bool,
    /// Human-readable witnesses of each failed check.
    pub failures: Vec<String>,
    /// `(theta, inf_{|u| <= theta} F)`.
    pub gamma: Vec<(f64, f64)>,
    /// Measured infimum of `F / (1 - |u|)^d` over `ell < |u| < 1`.
    pub growth_const: f64,
    /// Measured infima of `F_u(-1+s) / s^(d-1)` and `-F_u(1-s) / s^(d-1)`
    /// for `s < ell`; `None` for the indicator kind.
    pub deriv_consts: Option<(f64, f64)>,
    pub sup: f64,
    pub modulation_inf: f64,
}

/// Samples the structural assumptions on the given `u` and `xi` sets.
///
/// The values `+-1`, `0`, `0.5`, `0.9` are always added to the `u` samples.
pub fn structural_check(spec: &PotentialSpec, us: &[f64], xis: &[GroupPoint]) -> StructuralReport {
    let mut failures = Vec::new();
    if let Err(e) = spec.validate() {
        failures.push(e.to_string());
    }
    let mut samples: Vec<f64> = us.iter().copied().filter(|u| u.abs() <= 1.0).collect();
    samples.extend_from_slice(&[-1.0, 1.0, 0.0, 0.5, -0.5, 0.9, -0.9]);
    let origin = GroupPoint::origin(spec.modulation.frequency.len().max(2) / 2);
    let points: Vec<GroupPoint> = if xis.is_empty() {
        vec![origin]
    } else {
        xis.to_vec()
    };

    let mut sup: f64 = 0.0;
    let mut modulation_inf = f64::INFINITY;
    let thetas = [0.0, 0.5, 0.9];
    let mut gamma = [f64::INFINITY; 3];
    let mut growth = f64::INFINITY;
    let mut d_lo = f64::INFINITY;
    let mut d_hi = f64::INFINITY;

    for xi in &points {
        let q = spec.modulation.value(&xi.z);
        modulation_inf = modulation_inf.min(q);
        for &u in &samples {
            let f = q * spec.well(u);
            if !(f >= 0.0) {
                failures.push(format!("negative value F = {f} at u = {u}, z = {:?}", xi.z));
            }
            if !f.is_finite() {
                failures.push(format!("unbounded value at u = {u}"));
            }
            sup = sup.max(f);
            let at_well = u.abs() == 1.0;
            if at_well && f != 0.0 {
                failures.push(format!("F({u}) = {f} is not zero at a well"));
            }
            if !at_well && f <= 0.0 {
                failures.push(format!("F vanishes at u = {u} away from the wells"));
            }
            for (g, th) in gamma.iter_mut().zip(thetas) {
                if u.abs() <= th {
                    *g = g.min(f);
                }
            }
            let a = u.abs();
            if a > spec.ell && a < 1.0 {
                growth = growth.min(f / (1.0 - a).powf(spec.d));
            }
            if spec.has_derivative() && a < 1.0 && 1.0 - a < spec.ell {
                let s = 1.0 - a;
                let scale = s.powf(spec.d - 1.0);
                let fu_minus = q * spec.well_deriv(-1.0 + s);
                let fu_plus = q * spec.well_deriv(1.0 - s);
                d_lo = d_lo.min(fu_minus / scale);
                d_hi = d_hi.min(-fu_plus / scale);
            }
        }
        for j in 0..xi.z.len() {
            for shift in [-2.0, 1.0, 3.0] {
                let mut z = xi.z.clone();
                z[j] += shift;
                let diff = (spec.modulation.value(&z) - q).abs();
                if diff > 1e-12 * (1.0 + q.abs()) {
                    failures.push(format!(
                        "modulation not periodic: shift {shift} along z{j} changes Q by {diff}"
                    ));
                }
            }
        }
    }

    if !(modulation_inf > 0.0) || spec.modulation.lower_bound() <= 0.0 {
        failures.push(format!(
            "modulation is not bounded below by a positive constant (inf = {})",
            spec.modulation.lower_bound().min(modulation_inf)
        ));
    }
    for (g, th) in gamma.iter().zip(thetas) {
        if !(*g > 0.0) {
            failures.push(format!("gamma({th}) = {g} is not positive"));
        }
    }
    if growth.is_finite() && !(growth > 0.0) {
        failures.push(format!("growth constant {growth} is not positive"));
    }
    let deriv_consts = if spec.has_derivative() {
        if d_lo.is_finite() && !(d_lo > 0.0) || d_hi.is_finite() && !(d_hi > 0.0) {
            failures.push(format!(
                "F_u sign condition fails near the wells: ({d_lo}, {d_hi})"
            ));
        }
        Some((d_lo, d_hi))
    } else {
        None
    };

    StructuralReport {
        pass: failures.is_empty(),
        failures,
        gamma: thetas.iter().copied().zip(gamma).collect(),
        growth_const: growth,
        deriv_consts,
        sup,
        modulation_inf,
    }
}
