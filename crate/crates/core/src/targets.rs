//! Riemannian targets in extrinsic and intrinsic form.
//!
//! Extrinsic targets are submanifolds of `ℝ^K` described by the closest-point
//! projection `P` and its derivatives. Intrinsic targets are a single chart with a
//! metric and its Christoffel symbols.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub use crate::fields::MAX_COMPONENTS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Curvature {
    Negative,
    Zero,
    Positive,
    Mixed,
}

impl Curvature {
    pub fn is_nonpositive(self) -> bool {
        matches!(self, Curvature::Negative | Curvature::Zero)
    }
}

/// Target described by an embedding `N ⊂ ℝ^K` and its nearest-point projection.
pub trait EmbeddedTarget<T: Real>: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;
    fn ambient_dim(&self) -> usize;
    fn tube_radius(&self) -> T;
    fn curvature(&self) -> Curvature;

    /// `P(p)`; meaningful inside the tube.
    fn project(&self, p: &[T], out: &mut [T]);

    /// `P^a_b(p) v^b`
    fn dp(&self, p: &[T], v: &[T], out: &mut [T]);

    /// `P^a_{bc}(p) u^b v^c`, without the tube check.
    fn hess_contract_unchecked(&self, p: &[T], u: &[T], v: &[T], out: &mut [T]);

    /// Geodesic distance between points of `N`.
    fn distance(&self, p: &[T], q: &[T]) -> T;

    /// Constant-speed geodesic from `p` (`s = 0`) to `q` (`s = 1`).
    fn geodesic_interp(&self, p: &[T], q: &[T], s: T, out: &mut [T]);

    /// `|ρ(p)| = |p − P(p)|`
    fn rho_norm(&self, p: &[T]) -> T {
        let mut q = vec![T::zero(); p.len()];
        self.project(p, &mut q);
        p.iter().zip(&q).fold(T::zero(), |s, (&a, &b)| s + (a - b) * (a - b)).sqrt()
    }

    fn check_tube(&self, p: &[T]) -> Result<()> {
        let d = self.rho_norm(p);
        let r = self.tube_radius();
        if d > r || !d.is_finite() {
            return Err(Error::OutsideTube { dist: d.to_f64_lossy(), radius: r.to_f64_lossy() });
        }
        Ok(())
    }

    fn hess_contract(&self, p: &[T], u: &[T], v: &[T], out: &mut [T]) -> Result<()> {
        self.check_tube(p)?;
        self.hess_contract_unchecked(p, u, v, out);
        Ok(())
    }
}

/// Target described by one chart with metric `h_ij` and Christoffel symbols.
pub trait ChartTarget<T: Real>: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn curvature(&self) -> Curvature;

    /// Largest admissible chart norm, `None` when the chart is global.
    fn guard(&self) -> Option<T>;

    /// Row-major `h_ij(f)`.
    fn metric(&self, f: &[T], out: &mut [T]);

    /// `Γ^k_ij(f) u^i v^j`, without the guard check.
    fn christoffel_contract_unchecked(&self, f: &[T], u: &[T], v: &[T], out: &mut [T]);

    fn distance(&self, p: &[T], q: &[T]) -> T;
    fn geodesic_interp(&self, p: &[T], q: &[T], s: T, out: &mut [T]);

    fn check_guard(&self, f: &[T]) -> Result<()> {
        if let Some(g) = self.guard() {
            let r = norm(f);
            if r > g || !r.is_finite() {
                return Err(Error::OutsideGuard { norm: r.to_f64_lossy(), guard: g.to_f64_lossy() });
            }
        }
        Ok(())
    }

    fn christoffel_contract(&self, f: &[T], u: &[T], v: &[T], out: &mut [T]) -> Result<()> {
        self.check_guard(f)?;
        self.christoffel_contract_unchecked(f, u, v, out);
        Ok(())
    }
}

/// Extrinsic or intrinsic target handle used by the flow.
#[derive(Debug, Clone)]
pub enum Target<T: Real> {
    Embedded(Arc<dyn EmbeddedTarget<T>>),
    Chart(Arc<dyn ChartTarget<T>>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Extrinsic,
    Intrinsic,
}

impl<T: Real> Target<T> {
    /// Builds a target from its configuration name.
    ///
    /// Names: `sphere`, `clifford`, `euclidean` (with `k`), `poincare`, `flat_torus`.
    pub fn by_name(name: &str, k: Option<usize>) -> Result<Self> {
        Ok(match name {
            "sphere" | "sphere2" => Target::Embedded(Arc::new(Sphere2)),
            "clifford" | "clifford_torus" => Target::Embedded(Arc::new(CliffordTorus)),
            "euclidean" => Target::Embedded(Arc::new(EuclideanK::new(k.unwrap_or(3))?)),
            "poincare" | "poincare_disk" => Target::Chart(Arc::new(PoincareDisk::default())),
            "flat_torus" | "flat_torus_chart" => Target::Chart(Arc::new(FlatTorusChart)),
            other => return Err(Error::InvalidArgument(format!("unknown target '{other}'"))),
        })
    }

    pub fn mode(&self) -> Mode {
        match self {
            Target::Embedded(_) => Mode::Extrinsic,
            Target::Chart(_) => Mode::Intrinsic,
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Target::Embedded(t) => t.name(),
            Target::Chart(t) => t.name(),
        }
    }

    /// Number of components a map into this target carries.
    pub fn components(&self) -> usize {
        match self {
            Target::Embedded(t) => t.ambient_dim(),
            Target::Chart(t) => t.dim(),
        }
    }

    pub fn curvature(&self) -> Curvature {
        match self {
            Target::Embedded(t) => t.curvature(),
            Target::Chart(t) => t.curvature(),
        }
    }

    pub fn distance(&self, p: &[T], q: &[T]) -> T {
        match self {
            Target::Embedded(t) => t.distance(p, q),
            Target::Chart(t) => t.distance(p, q),
        }
    }

    pub fn geodesic_interp(&self, p: &[T], q: &[T], s: T, out: &mut [T]) {
        match self {
            Target::Embedded(t) => t.geodesic_interp(p, q, s, out),
            Target::Chart(t) => t.geodesic_interp(p, q, s, out),
        }
    }

    pub fn embedded(&self) -> Option<&dyn EmbeddedTarget<T>> {
        match self {
            Target::Embedded(t) => Some(t.as_ref()),
            Target::Chart(_) => None,
        }
    }

    pub fn chart(&self) -> Option<&dyn ChartTarget<T>> {
        match self {
            Target::Chart(t) => Some(t.as_ref()),
            Target::Embedded(_) => None,
        }
    }
}

#[inline]
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| s + x * y)
}

#[inline]
fn norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// Wraps an angle difference to `(−π, π]`.
pub fn wrap_angle<T: Real>(d: T) -> T {
    let two_pi = T::TAU();
    let mut w = d - two_pi * (d / two_pi).round();
    if w <= -T::PI() {
        w = w + two_pi;
    }
    if w > T::PI() {
        w = w - two_pi;
    }
    w
}

// Radial projection p ↦ R p/|p| onto a round sphere of radius R in any dimension.

fn radial_dp<T: Real>(radius: T, p: &[T], v: &[T], out: &mut [T]) {
    let r = norm(p);
    let pv = dot(p, v);
    for a in 0..p.len() {
        out[a] = radius * (v[a] / r - p[a] * pv / (r * r * r));
    }
}

fn radial_hess<T: Real>(radius: T, p: &[T], u: &[T], v: &[T], out: &mut [T]) {
    let r = norm(p);
    let r3 = r * r * r;
    let r5 = r3 * r * r;
    let (pu, pv, uv) = (dot(p, u), dot(p, v), dot(u, v));
    let three = T::lit(3.0);
    for a in 0..p.len() {
        out[a] = radius * (-(u[a] * pv + v[a] * pu + p[a] * uv) / r3 + three * p[a] * pu * pv / r5);
    }
}

/// Unit sphere `S² ⊂ ℝ³`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sphere2;

impl Sphere2 {
    /// Deterministic unit vector orthogonal to `p`, used for antipodal pairs.
    fn reference_normal<T: Real>(p: &[T]) -> [T; 3] {
        let axis = if p[0].abs() < T::lit(1e-9) && p[1].abs() < T::lit(1e-9) {
            [T::one(), T::zero(), T::zero()]
        } else {
            [T::zero(), T::zero(), T::one()]
        };
        let c = dot(p, &axis);
        let mut w = [axis[0] - c * p[0], axis[1] - c * p[1], axis[2] - c * p[2]];
        let n = norm(&w);
        for x in &mut w {
            *x = *x / n;
        }
        w
    }
}

impl<T: Real> EmbeddedTarget<T> for Sphere2 {
    fn name(&self) -> &str {
        "sphere"
    }
    fn ambient_dim(&self) -> usize {
        3
    }
    fn tube_radius(&self) -> T {
        T::lit(0.5)
    }
    fn curvature(&self) -> Curvature {
        Curvature::Positive
    }

    fn project(&self, p: &[T], out: &mut [T]) {
        let r = norm(p);
        for a in 0..3 {
            out[a] = p[a] / r;
        }
    }

    fn rho_norm(&self, p: &[T]) -> T {
        (norm(p) - T::one()).abs()
    }

    fn dp(&self, p: &[T], v: &[T], out: &mut [T]) {
        radial_dp(T::one(), p, v, out)
    }

    fn hess_contract_unchecked(&self, p: &[T], u: &[T], v: &[T], out: &mut [T]) {
        radial_hess(T::one(), p, u, v, out)
    }

    fn distance(&self, p: &[T], q: &[T]) -> T {
        let c = [p[1] * q[2] - p[2] * q[1], p[2] * q[0] - p[0] * q[2], p[0] * q[1] - p[1] * q[0]];
        norm(&c).atan2(dot(p, q))
    }

    fn geodesic_interp(&self, p: &[T], q: &[T], s: T, out: &mut [T]) {
        let theta = self.distance(p, q);
        let w: [T; 3] = if theta < T::lit(1e-12) {
            for a in 0..3 {
                out[a] = p[a];
            }
            return;
        } else if T::PI() - theta < T::lit(1e-12) {
            Self::reference_normal(p)
        } else {
            let c = theta.cos();
            let mut w = [q[0] - c * p[0], q[1] - c * p[1], q[2] - c * p[2]];
            let n = norm(&w);
            for x in &mut w {
                *x = *x / n;
            }
            w
        };
        let (sn, cs) = (s * theta).sin_cos();
        for a in 0..3 {
            out[a] = cs * p[a] + sn * w[a];
        }
    }
}

/// Clifford torus `{(a, b) : |a| = |b| = 1/√2} ⊂ ℝ⁴`, intrinsically flat.
#[derive(Debug, Clone, Copy, Default)]
pub struct CliffordTorus;

impl CliffordTorus {
    pub fn radius<T: Real>() -> T {
        T::FRAC_1_SQRT_2()
    }

    /// Angles `(θ1, θ2)` of a point, in `(−π, π]`.
    pub fn angles<T: Real>(p: &[T]) -> [T; 2] {
        [p[1].atan2(p[0]), p[3].atan2(p[2])]
    }

    /// The torus point with angles `(θ1, θ2)`.
    pub fn point<T: Real>(theta: [T; 2]) -> [T; 4] {
        let r = Self::radius::<T>();
        let (s1, c1) = theta[0].sin_cos();
        let (s2, c2) = theta[1].sin_cos();
        [r * c1, r * s1, r * c2, r * s2]
    }

    /// Shortest-representative angle increments from `p` to `q`.
    pub fn angle_delta<T: Real>(p: &[T], q: &[T]) -> [T; 2] {
        let (a, b) = (Self::angles(p), Self::angles(q));
        [wrap_angle(b[0] - a[0]), wrap_angle(b[1] - a[1])]
    }
}

impl<T: Real> EmbeddedTarget<T> for CliffordTorus {
    fn name(&self) -> &str {
        "clifford"
    }
    fn ambient_dim(&self) -> usize {
        4
    }
    fn tube_radius(&self) -> T {
        T::lit(0.25)
    }
    fn curvature(&self) -> Curvature {
        Curvature::Zero
    }

    fn project(&self, p: &[T], out: &mut [T]) {
        let r = Self::radius::<T>();
        for blk in [0, 2] {
            let n = norm(&p[blk..blk + 2]);
            out[blk] = r * p[blk] / n;
            out[blk + 1] = r * p[blk + 1] / n;
        }
    }

    fn rho_norm(&self, p: &[T]) -> T {
        let r = Self::radius::<T>();
        let da = norm(&p[0..2]) - r;
        let db = norm(&p[2..4]) - r;
        (da * da + db * db).sqrt()
    }

    fn dp(&self, p: &[T], v: &[T], out: &mut [T]) {
        let r = Self::radius::<T>();
        radial_dp(r, &p[0..2], &v[0..2], &mut out[0..2]);
        radial_dp(r, &p[2..4], &v[2..4], &mut out[2..4]);
    }

    fn hess_contract_unchecked(&self, p: &[T], u: &[T], v: &[T], out: &mut [T]) {
        let r = Self::radius::<T>();
        radial_hess(r, &p[0..2], &u[0..2], &v[0..2], &mut out[0..2]);
        radial_hess(r, &p[2..4], &u[2..4], &v[2..4], &mut out[2..4]);
    }

    fn distance(&self, p: &[T], q: &[T]) -> T {
        let d = Self::angle_delta(p, q);
        Self::radius::<T>() * (d[0] * d[0] + d[1] * d[1]).sqrt()
    }

    fn geodesic_interp(&self, p: &[T], q: &[T], s: T, out: &mut [T]) {
        let a = Self::angles(p);
        let d = Self::angle_delta(p, q);
        out.copy_from_slice(&Self::point([a[0] + s * d[0], a[1] + s * d[1]]));
    }
}

/// `ℝ^K` itself; the projection is the identity.
#[derive(Debug, Clone, Copy)]
pub struct EuclideanK {
    k: usize,
}

impl EuclideanK {
    pub fn new(k: usize) -> Result<Self> {
        if k == 0 || k > MAX_COMPONENTS {
            return Err(Error::InvalidArgument(format!("euclidean target needs 1 <= k <= {MAX_COMPONENTS}")));
        }
        Ok(EuclideanK { k })
    }
}

impl<T: Real> EmbeddedTarget<T> for EuclideanK {
    fn name(&self) -> &str {
        "euclidean"
    }
    fn ambient_dim(&self) -> usize {
        self.k
    }
    fn tube_radius(&self) -> T {
        T::infinity()
    }
    fn curvature(&self) -> Curvature {
        Curvature::Zero
    }
    fn project(&self, p: &[T], out: &mut [T]) {
        out.copy_from_slice(p);
    }
    fn rho_norm(&self, _p: &[T]) -> T {
        T::zero()
    }
    fn dp(&self, _p: &[T], v: &[T], out: &mut [T]) {
        out.copy_from_slice(v);
    }
    fn hess_contract_unchecked(&self, _p: &[T], _u: &[T], _v: &[T], out: &mut [T]) {
        out.iter_mut().for_each(|o| *o = T::zero());
    }
    fn distance(&self, p: &[T], q: &[T]) -> T {
        p.iter().zip(q).fold(T::zero(), |s, (&a, &b)| s + (a - b) * (a - b)).sqrt()
    }
    fn geodesic_interp(&self, p: &[T], q: &[T], s: T, out: &mut [T]) {
        for a in 0..p.len() {
            out[a] = p[a] + s * (q[a] - p[a]);
        }
    }
}

/// Poincaré disk with `h_ij = 4 δ_ij / (1 − |f|²)²` (curvature −1).
#[derive(Debug, Clone, Copy)]
pub struct PoincareDisk {
    pub guard: f64,
}

impl Default for PoincareDisk {
    fn default() -> Self {
        PoincareDisk { guard: 0.9 }
    }
}

fn mobius<T: Real>(p: Complex<T>, z: Complex<T>) -> Complex<T> {
    (z - p) / (Complex::new(T::one(), T::zero()) - p.conj() * z)
}

fn mobius_inv<T: Real>(p: Complex<T>, z: Complex<T>) -> Complex<T> {
    (z + p) / (Complex::new(T::one(), T::zero()) + p.conj() * z)
}

impl<T: Real> ChartTarget<T> for PoincareDisk {
    fn name(&self) -> &str {
        "poincare"
    }
    fn dim(&self) -> usize {
        2
    }
    fn curvature(&self) -> Curvature {
        Curvature::Negative
    }
    fn guard(&self) -> Option<T> {
        Some(T::lit(self.guard))
    }

    fn metric(&self, f: &[T], out: &mut [T]) {
        let w = T::one() - dot(f, f);
        let c = T::lit(4.0) / (w * w);
        out.copy_from_slice(&[c, T::zero(), T::zero(), c]);
    }

    fn christoffel_contract_unchecked(&self, f: &[T], u: &[T], v: &[T], out: &mut [T]) {
        // Γ^k_ij u^i v^j = 2 [(f·v) u_k + (f·u) v_k − (u·v) f_k] / (1 − |f|²)
        let w = T::one() - dot(f, f);
        let (fu, fv, uv) = (dot(f, u), dot(f, v), dot(u, v));
        let two = T::lit(2.0);
        for k in 0..2 {
            out[k] = two * (fv * u[k] + fu * v[k] - uv * f[k]) / w;
        }
    }

    fn distance(&self, p: &[T], q: &[T]) -> T {
        let d2 = (p[0] - q[0]) * (p[0] - q[0]) + (p[1] - q[1]) * (p[1] - q[1]);
        let den = (T::one() - dot(p, p)) * (T::one() - dot(q, q));
        (T::one() + T::lit(2.0) * d2 / den).acosh()
    }

    fn geodesic_interp(&self, p: &[T], q: &[T], s: T, out: &mut [T]) {
        let pc = Complex::new(p[0], p[1]);
        let w = mobius(pc, Complex::new(q[0], q[1]));
        let r = w.norm();
        let z = if r == T::zero() {
            Complex::new(T::zero(), T::zero())
        } else {
            // hyperbolic arclength from 0 to radius ρ is 2 atanh ρ
            w * ((s * r.atanh()).tanh() / r)
        };
        let z = mobius_inv(pc, z);
        out[0] = z.re;
        out[1] = z.im;
    }
}

/// Angle chart `(θ1, θ2)` of the Clifford torus lifted to its universal cover, with
/// the induced flat metric `½ δ_ij`. Only trivial-class maps are single valued here.
#[derive(Debug, Clone, Copy, Default)]
pub struct FlatTorusChart;

impl<T: Real> ChartTarget<T> for FlatTorusChart {
    fn name(&self) -> &str {
        "flat_torus"
    }
    fn dim(&self) -> usize {
        2
    }
    fn curvature(&self) -> Curvature {
        Curvature::Zero
    }
    fn guard(&self) -> Option<T> {
        None
    }
    fn metric(&self, _f: &[T], out: &mut [T]) {
        let h = T::lit(0.5);
        out.copy_from_slice(&[h, T::zero(), T::zero(), h]);
    }
    fn christoffel_contract_unchecked(&self, _f: &[T], _u: &[T], _v: &[T], out: &mut [T]) {
        out.iter_mut().for_each(|o| *o = T::zero());
    }
    fn distance(&self, p: &[T], q: &[T]) -> T {
        let d = [q[0] - p[0], q[1] - p[1]];
        T::FRAC_1_SQRT_2() * norm(&d)
    }
    fn geodesic_interp(&self, p: &[T], q: &[T], s: T, out: &mut [T]) {
        for a in 0..2 {
            out[a] = p[a] + s * (q[a] - p[a]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn euclidean_hessian_vanishes() {
        let e = EuclideanK::new(3).unwrap();
        let mut out = [1.0; 3];
        EmbeddedTarget::<f64>::hess_contract(&e, &[5.0, -2.0, 1.0], &[1.0, 2.0, 3.0], &[0.5, 0.1, 0.0], &mut out)
            .unwrap();
        assert_eq!(out, [0.0; 3]);
    }

    #[test]
    fn sphere_tangent_hessian_is_normal() {
        // for tangent u at p on the sphere, P_bc u u = −|u|² p
        let p = [0.0, 0.6, 0.8];
        let u = [1.0, 0.8, -0.6];
        let mut out = [0.0; 3];
        EmbeddedTarget::<f64>::hess_contract(&Sphere2, &p, &u, &u, &mut out).unwrap();
        let uu = 1.0 + 0.64 + 0.36;
        for a in 0..3 {
            assert!((out[a] + uu * p[a]).abs() < 1e-14);
        }
    }

    #[test]
    fn tube_violations_are_reported() {
        let mut out = [0.0; 3];
        let r = EmbeddedTarget::<f64>::hess_contract(&Sphere2, &[0.0, 0.0, 1.7], &[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0], &mut out);
        assert!(matches!(r, Err(Error::OutsideTube { .. })));
        let mut o2 = [0.0; 2];
        let r = ChartTarget::<f64>::christoffel_contract(&PoincareDisk::default(), &[0.95, 0.0], &[1.0, 0.0], &[0.0, 1.0], &mut o2);
        assert!(matches!(r, Err(Error::OutsideGuard { .. })));
    }

    #[test]
    fn clifford_hessian_respects_blocks() {
        let p = [0.5, 0.3, -0.2, 0.7];
        let u = [1.0, 0.0, 0.0, 0.0];
        let v = [0.0, 0.0, 1.0, 0.0];
        let mut out = [9.0; 4];
        EmbeddedTarget::<f64>::hess_contract(&CliffordTorus, &p, &u, &v, &mut out).unwrap();
        assert_eq!(out, [0.0; 4]);
    }

    #[test]
    fn poincare_christoffel_basics() {
        let d = PoincareDisk::default();
        let mut out = [1.0; 2];
        ChartTarget::<f64>::christoffel_contract(&d, &[0.0, 0.0], &[0.3, 0.1], &[-0.2, 0.5], &mut out).unwrap();
        assert_eq!(out, [0.0, 0.0]);
        let f = [0.3, 0.4];
        ChartTarget::<f64>::christoffel_contract(&d, &f, &f, &f, &mut out).unwrap();
        // radial input gives a radial result
        assert!((out[0] * f[1] - out[1] * f[0]).abs() < 1e-15);
    }

    #[test]
    fn clifford_half_turn_distance() {
        let p = CliffordTorus::point([0.4, -1.0]);
        let q = CliffordTorus::point([0.4 + PI, -1.0]);
        let d: f64 = EmbeddedTarget::distance(&CliffordTorus, &p, &q);
        assert!((d - PI / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn wrap_ties_go_positive() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn poincare_distance_from_origin() {
        let d = PoincareDisk::default();
        for r in [0.1, 0.5, 0.85] {
            let got: f64 = d.distance(&[0.0, 0.0], &[r, 0.0]);
            assert!((got - ((1.0 + r) / (1.0 - r)).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn sphere_antipodes_use_reference_axis() {
        let p = [1.0, 0.0, 0.0];
        let q = [-1.0, 0.0, 0.0];
        let mut mid = [0.0; 3];
        EmbeddedTarget::<f64>::geodesic_interp(&Sphere2, &p, &q, 0.5, &mut mid);
        assert!((mid[2] - 1.0).abs() < 1e-12);
        let p = [0.0, 0.0, 1.0];
        EmbeddedTarget::<f64>::geodesic_interp(&Sphere2, &p, &[0.0, 0.0, -1.0], 0.5, &mut mid);
        assert!((mid[0] - 1.0).abs() < 1e-12);
    }

    fn targets() -> Vec<Target<f64>> {
        ["sphere", "clifford", "euclidean", "poincare", "flat_torus"]
            .iter()
            .map(|n| Target::by_name(n, Some(3)).unwrap())
            .collect()
    }

    fn on_target(t: &Target<f64>, a: f64, b: f64, c: f64) -> Vec<f64> {
        match t.name() {
            "sphere" => {
                let v = [a.cos() * b.sin(), a.sin() * b.sin(), b.cos()];
                v.to_vec()
            }
            "clifford" => CliffordTorus::point([a, b]).to_vec(),
            "euclidean" => vec![a, b, c],
            "poincare" => {
                let r = 0.85 * (c.abs() / 4.0).min(1.0);
                vec![r * a.cos(), r * a.sin()]
            }
            _ => vec![a, b],
        }
    }

    proptest! {
        #[test]
        fn interp_endpoints_and_symmetric_distance(
            a1 in -3.0f64..3.0, b1 in 0.1f64..3.0, c1 in -4.0f64..4.0,
            a2 in -3.0f64..3.0, b2 in 0.1f64..3.0, c2 in -4.0f64..4.0,
        ) {
            for t in targets() {
                let p = on_target(&t, a1, b1, c1);
                let q = on_target(&t, a2, b2, c2);
                let mut out = vec![0.0; p.len()];
                t.geodesic_interp(&p, &q, 0.0, &mut out);
                prop_assert!(t.distance(&out, &p) < 1e-7);
                t.geodesic_interp(&p, &q, 1.0, &mut out);
                prop_assert!(t.distance(&out, &q) < 1e-7, "{} {:?} {:?}", t.name(), out, q);
                prop_assert!((t.distance(&p, &q) - t.distance(&q, &p)).abs() < 1e-9);
                prop_assert!(t.distance(&p, &p) < 1e-7);
            }
        }

        #[test]
        fn triangle_inequality(
            a in proptest::array::uniform3(-3.0f64..3.0),
            b in proptest::array::uniform3(0.1f64..3.0),
            c in proptest::array::uniform3(-4.0f64..4.0),
        ) {
            for t in targets() {
                let p: Vec<_> = (0..3).map(|i| on_target(&t, a[i], b[i], c[i])).collect();
                let d01 = t.distance(&p[0], &p[1]);
                let d12 = t.distance(&p[1], &p[2]);
                let d02 = t.distance(&p[0], &p[2]);
                prop_assert!(d02 <= d01 + d12 + 1e-9, "{}", t.name());
            }
        }

        #[test]
        fn projection_is_idempotent(v in proptest::array::uniform4(-1.0f64..1.0)) {
            let mut q = [0.0; 4];
            let mut qq = [0.0; 4];
            let p = [v[0] + 0.7, v[1] * 0.2, v[2] * 0.2, v[3] + 0.7];
            EmbeddedTarget::<f64>::project(&CliffordTorus, &p, &mut q);
            EmbeddedTarget::<f64>::project(&CliffordTorus, &q, &mut qq);
            for a in 0..4 { prop_assert!((q[a] - qq[a]).abs() < 1e-12); }
            prop_assert!(EmbeddedTarget::<f64>::rho_norm(&CliffordTorus, &q) < 1e-12);
            let s = [v[0] + 1.5, v[1], v[2]];
            let mut r = [0.0; 3];
            let mut rr = [0.0; 3];
            EmbeddedTarget::<f64>::project(&Sphere2, &s, &mut r);
            EmbeddedTarget::<f64>::project(&Sphere2, &r, &mut rr);
            for a in 0..3 { prop_assert!((r[a] - rr[a]).abs() < 1e-12); }
        }
    }
}
