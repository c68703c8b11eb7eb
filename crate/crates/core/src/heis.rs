//! Heisenberg group algebra and Koranyi geometry.
//!
//! Points are `(z, t)` with `z = (x_1..x_n, y_1..y_n)` identified with
//! `x_k + i y_k`. The group law is
//! `(z, t) o (z', t') = (z + z', t + t' + 2 Im(conj(z) z'))`.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Dimension data of `H^n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupContext {
    n: usize,
}

impl GroupContext {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("n must be positive".into()));
        }
        Ok(GroupContext { n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Homogeneous dimension `Q = 2(n + 1)`.
    pub fn hom_dim(&self) -> usize {
        2 * (self.n + 1)
    }

    pub fn origin(&self) -> GroupPoint {
        GroupPoint::origin(self.n)
    }

    pub fn point(&self, z: Vec<f64>, t: f64) -> Result<GroupPoint> {
        check_len(&z, 2 * self.n)?;
        Ok(GroupPoint { z, t })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupPoint {
    pub z: Vec<f64>,
    pub t: f64,
}

impl GroupPoint {
    pub fn new(z: Vec<f64>, t: f64) -> Self {
        GroupPoint { z, t }
    }

    pub fn origin(n: usize) -> Self {
        GroupPoint {
            z: vec![0.0; 2 * n],
            t: 0.0,
        }
    }

    /// Half of the length of `z`.
    pub fn n(&self) -> usize {
        self.z.len() / 2
    }

    /// Homogeneous dilation `(lambda z, lambda^2 t)`.
    pub fn dilate(&self, lambda: f64) -> GroupPoint {
        GroupPoint {
            z: self.z.iter().map(|v| lambda * v).collect(),
            t: lambda * lambda * self.t,
        }
    }
}

fn check_len(v: &[f64], expected: usize) -> Result<()> {
    if v.len() != expected {
        return Err(Error::Dimension {
            expected,
            got: v.len(),
        });
    }
    Ok(())
}

/// `Im(conj(a) b)` under the complex identification of `R^{2n}`.
///
/// Both slices must have the same even length; the layout is `(x.., y..)`.
pub fn symplectic(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len() / 2;
    (0..n).map(|k| a[k] * b[n + k] - a[n + k] * b[k]).sum()
}

fn symplectic_int(a: &[i64], b: &[i64]) -> Option<i64> {
    let n = a.len() / 2;
    let mut acc: i64 = 0;
    for k in 0..n {
        let p = a[k].checked_mul(b[n + k])?;
        let q = a[n + k].checked_mul(b[k])?;
        acc = acc.checked_add(p.checked_sub(q)?)?;
    }
    Some(acc)
}

pub fn group_mul(a: &GroupPoint, b: &GroupPoint) -> Result<GroupPoint> {
    check_len(&b.z, a.z.len())?;
    if a.z.len() % 2 != 0 {
        return Err(Error::InvalidArgument("odd horizontal dimension".into()));
    }
    let z = a.z.iter().zip(&b.z).map(|(x, y)| x + y).collect();
    let t = a.t + b.t + 2.0 * symplectic(&a.z, &b.z);
    Ok(GroupPoint { z, t })
}

pub fn group_inv(a: &GroupPoint) -> GroupPoint {
    GroupPoint {
        z: a.z.iter().map(|v| -v).collect(),
        t: -a.t,
    }
}

/// `(K_l, 0) o ... o (K_1, 0) o xi` in closed form.
pub fn iterated_action(ks: &[Vec<f64>], xi: &GroupPoint) -> Result<GroupPoint> {
    let dim = xi.z.len();
    for k in ks {
        check_len(k, dim)?;
    }
    let mut z = xi.z.clone();
    let mut twist = 0.0;
    let mut partial = vec![0.0; dim];
    for k in ks {
        twist += symplectic(k, &xi.z) + symplectic(k, &partial);
        for (p, v) in partial.iter_mut().zip(k) {
            *p += v;
        }
    }
    for (zi, p) in z.iter_mut().zip(&partial) {
        *zi += p;
    }
    Ok(GroupPoint {
        z,
        t: xi.t + 2.0 * twist,
    })
}

/// Koranyi gauge `(|z|^4 + t^2)^{1/4}`.
pub fn koranyi_gauge(xi: &GroupPoint) -> f64 {
    let r2: f64 = xi.z.iter().map(|v| v * v).sum();
    (r2 * r2 + xi.t * xi.t).sqrt().sqrt()
}

/// Gauge of `a^{-1} o b`.
pub fn koranyi_dist(a: &GroupPoint, b: &GroupPoint) -> Result<f64> {
    let rel = group_mul(&group_inv(a), b)?;
    Ok(koranyi_gauge(&rel))
}

#[derive(Debug, Clone, PartialEq)]
pub struct KoranyiBall {
    pub center: GroupPoint,
    pub radius: f64,
}

impl KoranyiBall {
    pub fn new(center: GroupPoint, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "ball radius must be positive, got {radius}"
            )));
        }
        Ok(KoranyiBall { center, radius })
    }

    pub fn contains(&self, xi: &GroupPoint) -> Result<bool> {
        Ok(koranyi_dist(&self.center, xi)? <= self.radius)
    }
}

/// Monte Carlo estimate of the Lebesgue measure of a Koranyi ball.
///
/// Lebesgue measure is invariant under the group action, so samples are
/// drawn around the origin in the box `[-r, r]^{2n} x [-r^2, r^2]`.
pub fn ball_volume_estimate(ball: &KoranyiBall, samples: usize, seed: u64) -> Result<f64> {
    if samples < 10_000 {
        return Err(Error::InvalidArgument(format!(
            "at least 10^4 samples required, got {samples}"
        )));
    }
    let r = ball.radius;
    let dim = ball.center.z.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = vec![0.0; dim];
    let mut hits = 0usize;
    for _ in 0..samples {
        for v in z.iter_mut() {
            *v = rng.gen_range(-r..r);
        }
        let t = rng.gen_range(-r * r..r * r);
        let r2: f64 = z.iter().map(|v| v * v).sum();
        if r2 * r2 + t * t <= r.powi(4) {
            hits += 1;
        }
    }
    let box_vol = (2.0 * r).powi(dim as i32) * 2.0 * r * r;
    Ok(box_vol * hits as f64 / samples as f64)
}

/// Integer vector of `Z^{2n}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LatticeVector(pub Vec<i64>);

impl LatticeVector {
    pub fn as_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&v| v as f64).collect()
    }

    pub fn norm(&self) -> f64 {
        self.0
            .iter()
            .map(|&v| (v as f64) * (v as f64))
            .sum::<f64>()
            .sqrt()
    }

    pub fn dot(&self, other: &[i64]) -> i64 {
        self.0.iter().zip(other).map(|(a, b)| a * b).sum()
    }
}

/// `Im(conj(ki) kj)`.
pub fn theta_pairing(ki: &LatticeVector, kj: &LatticeVector) -> Result<i64> {
    if ki.0.len() != kj.0.len() {
        return Err(Error::Dimension {
            expected: ki.0.len(),
            got: kj.0.len(),
        });
    }
    if ki.0.len() % 2 != 0 {
        return Err(Error::InvalidArgument("odd horizontal dimension".into()));
    }
    symplectic_int(&ki.0, &kj.0).ok_or(Error::Overflow)
}

/// Parses `p/q`, an integer, or a finite decimal into an exact rational.
pub fn parse_rational(text: &str) -> Result<BigRational> {
    let s = text.trim();
    let bad = || Error::NotRational(text.to_string());
    if let Some((num, den)) = s.split_once('/') {
        let num: BigInt = num.trim().parse().map_err(|_| bad())?;
        let den: BigInt = den.trim().parse().map_err(|_| bad())?;
        if den.is_zero() {
            return Err(bad());
        }
        return Ok(BigRational::new(num, den));
    }
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    if body.is_empty() || !body.chars().all(|c| c.is_ascii_digit() || c == '.') {
        return Err(bad());
    }
    let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
    if frac_part.contains('.') || (int_part.is_empty() && frac_part.is_empty()) {
        return Err(bad());
    }
    let digits = format!("{int_part}{frac_part}");
    let num: BigInt = digits.parse().map_err(|_| bad())?;
    let den = num_traits::pow(BigInt::from(10), frac_part.len());
    let value = BigRational::new(num, den);
    Ok(if neg { -value } else { value })
}

/// Lattice base adapted to a rational direction `omega`.
///
/// `k[0..2n-1]` span the integer directions orthogonal to `omega`, and
/// `k[2n-1]` is a positive integer multiple of `omega`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegerBase {
    omega: Vec<BigRational>,
    k: Vec<LatticeVector>,
    theta_pairings: Vec<Vec<i64>>,
    theta: i64,
}

impl IntegerBase {
    pub fn n(&self) -> usize {
        self.omega.len() / 2
    }

    pub fn omega(&self) -> &[BigRational] {
        &self.omega
    }

    pub fn omega_f64(&self) -> Vec<f64> {
        self.omega
            .iter()
            .map(|q| q.to_f64().unwrap_or(f64::NAN))
            .collect()
    }

    /// Unit vector along `omega`.
    pub fn omega_hat(&self) -> Vec<f64> {
        let w = self.k[self.k.len() - 1].as_f64();
        let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        w.into_iter().map(|v| v / norm).collect()
    }

    /// The primitive integer vector along `omega`, used for lattice arithmetic.
    pub fn omega_primitive(&self) -> Vec<i64> {
        let last = &self.k[self.k.len() - 1].0;
        let g = last.iter().fold(0i64, |acc, &v| acc.gcd(&v));
        last.iter().map(|v| v / g).collect()
    }

    pub fn vectors(&self) -> &[LatticeVector] {
        &self.k
    }

    /// Transverse vectors `k^1 .. k^{2n-1}`.
    pub fn transverse(&self) -> &[LatticeVector] {
        &self.k[..self.k.len() - 1]
    }

    pub fn along(&self) -> &LatticeVector {
        &self.k[self.k.len() - 1]
    }

    /// Antisymmetric matrix `Theta_ij = Im(conj(k^i) k^j)`.
    pub fn theta_pairings(&self) -> &[Vec<i64>] {
        &self.theta_pairings
    }

    /// Vertical half-period `Theta`.
    pub fn theta(&self) -> i64 {
        self.theta
    }

    /// Rebuilds the base for an integer direction.
    pub fn from_integers(omega: &[i64]) -> Result<IntegerBase> {
        let q: Vec<BigRational> = omega
            .iter()
            .map(|&v| BigRational::from_integer(BigInt::from(v)))
            .collect();
        build_integer_base(&q)
    }
}

fn dot_q(a: &[BigRational], b: &[BigRational]) -> BigRational {
    a.iter()
        .zip(b)
        .fold(BigRational::zero(), |acc, (x, y)| acc + x * y)
}

/// Smallest positive integer multiple of a rational vector, then divided by the
/// gcd of its entries when `primitive` is set.
fn clear_denominators(v: &[BigRational], primitive: bool) -> Result<Vec<i64>> {
    let lcm = v.iter().fold(BigInt::one(), |acc, q| acc.lcm(q.denom()));
    let mut ints: Vec<BigInt> = v
        .iter()
        .map(|q| (q * BigRational::from_integer(lcm.clone())).to_integer())
        .collect();
    if primitive {
        let g = ints.iter().fold(BigInt::zero(), |acc, x| acc.gcd(x));
        if !g.is_zero() {
            for x in ints.iter_mut() {
                *x = &*x / &g;
            }
        }
    }
    ints.iter().map(|x| x.to_i64().ok_or(Error::Overflow)).collect()
}

/// Builds an integer base for a nonzero rational `omega` of even length.
///
/// Gram-Schmidt over the rationals, seeded with the coordinate vectors in
/// index order; each transverse vector is scaled to its primitive integer
/// multiple. For `n = 1` the transverse vector is oriented so that
/// `Theta_{21} > 0` and `Theta = 1`. For `n >= 2` the first transverse pair
/// with a nonzero pairing is ordered to make it positive, and `Theta` is the
/// gcd of the nonzero transverse pairings.
pub fn build_integer_base(omega: &[BigRational]) -> Result<IntegerBase> {
    let dim = omega.len();
    if dim == 0 || dim % 2 != 0 {
        return Err(Error::InvalidArgument(
            "omega must have positive even length".into(),
        ));
    }
    if omega.iter().all(|q| q.is_zero()) {
        return Err(Error::ZeroOmega);
    }
    let n = dim / 2;

    let mut ortho: Vec<Vec<BigRational>> = vec![omega.to_vec()];
    for e in 0..dim {
        if ortho.len() == dim {
            break;
        }
        let mut v: Vec<BigRational> = (0..dim)
            .map(|i| {
                if i == e {
                    BigRational::one()
                } else {
                    BigRational::zero()
                }
            })
            .collect();
        for b in &ortho {
            let coef = dot_q(&v, b) / dot_q(b, b);
            for (vi, bi) in v.iter_mut().zip(b) {
                *vi = &*vi - &coef * bi;
            }
        }
        if v.iter().any(|q| !q.is_zero()) {
            ortho.push(v);
        }
    }

    let mut k: Vec<LatticeVector> = ortho[1..]
        .iter()
        .map(|v| clear_denominators(v, true).map(LatticeVector))
        .collect::<Result<_>>()?;
    k.push(LatticeVector(clear_denominators(omega, false)?));

    let last = dim - 1;
    if n == 1 {
        if theta_pairing(&k[last], &k[0])? < 0 {
            k[0] = LatticeVector(k[0].0.iter().map(|v| -v).collect());
        }
    } else {
        let mut fixed = false;
        'outer: for i in 0..last {
            for j in (i + 1)..last {
                let p = theta_pairing(&k[i], &k[j])?;
                if p != 0 {
                    if p < 0 {
                        k.swap(i, j);
                    }
                    fixed = true;
                    break 'outer;
                }
            }
        }
        if !fixed {
            return Err(Error::InvalidArgument(
                "no transverse pair with nonzero pairing".into(),
            ));
        }
    }

    let mut pairings = vec![vec![0i64; dim]; dim];
    for i in 0..dim {
        for j in 0..dim {
            pairings[i][j] = theta_pairing(&k[i], &k[j])?;
        }
    }
    let theta = if n == 1 {
        1
    } else {
        let mut g = 0i64;
        for i in 0..last {
            for j in 0..last {
                g = g.gcd(&pairings[i][j].abs());
            }
        }
        g
    };

    Ok(IntegerBase {
        omega: omega.to_vec(),
        k,
        theta_pairings: pairings,
        theta,
    })
}
