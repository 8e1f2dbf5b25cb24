//! Smooth lattice-invariant functions with genuine z-dependence.
//!
//! Plain Fourier modes in `z` are not functions on the quotient, because the `y`
//! seam shifts `z` by `x`. The theta-type sums
//!
//! `F_n(x, y, z) = Σ_m ψ(y + m/n) · exp(2πi (n z + m x))`, `ψ(s) = exp(−π n s²)`,
//!
//! are invariant under all three deck transformations for every integer `n ≥ 1`,
//! and their frame derivatives are available in closed form.

use crate::fields::{Grid, ScalarField};
use crate::scalar::Real;

/// Terms kept on each side of the dominant index; the Gaussian tail beyond is < 1e−30.
const TAIL: i64 = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaMode {
    pub n: u32,
    /// Phase offset `φ` applied as `exp(2πi (n z + m x) + i φ)`.
    pub phase: f64,
}

/// Value and frame derivatives `(F, XF, YF, TF)` of the real part at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaJet {
    pub value: f64,
    pub dx: f64,
    pub dy: f64,
    pub dt: f64,
}

impl ThetaMode {
    pub fn new(n: u32) -> Self {
        assert!(n >= 1, "theta mode needs n >= 1");
        ThetaMode { n, phase: 0.0 }
    }

    pub fn with_phase(mut self, phase: f64) -> Self {
        self.phase = phase;
        self
    }

    /// Real part of `F_n` and its `X`, `Y`, `T` derivatives.
    pub fn jet(&self, x: f64, y: f64, z: f64) -> ThetaJet {
        let n = self.n as f64;
        let two_pi = std::f64::consts::TAU;
        let a = std::f64::consts::PI * n;
        // the dominant m is the one making y + m/n closest to 0
        let centre = (-y * n).round() as i64;
        let mut out = ThetaJet { value: 0.0, dx: 0.0, dy: 0.0, dt: 0.0 };
        for m in centre - TAIL * self.n as i64..=centre + TAIL * self.n as i64 {
            let s = y + m as f64 / n;
            let psi = (-a * s * s).exp();
            let dpsi = -2.0 * a * s * psi;
            let arg = two_pi * (n * z + m as f64 * x) + self.phase;
            let (sin, cos) = arg.sin_cos();
            out.value += psi * cos;
            // X e^{i arg} = 2πi (m + n y) e^{i arg} and m + n y = n s
            out.dx -= psi * two_pi * n * s * sin;
            out.dy += dpsi * cos;
            out.dt -= psi * two_pi * n * sin;
        }
        out
    }

    pub fn value(&self, x: f64, y: f64, z: f64) -> f64 {
        self.jet(x, y, z).value
    }

    /// Samples the real part on a grid.
    pub fn sample<T: Real>(&self, grid: Grid) -> ScalarField<T> {
        ScalarField::from_fn(grid, |x: T, y: T, z: T| {
            T::lit(self.value(x.to_f64_lossy(), y.to_f64_lossy(), z.to_f64_lossy()))
        })
    }

    /// Samples one component of the jet on a grid.
    pub fn sample_with<T: Real>(&self, grid: Grid, pick: impl Fn(ThetaJet) -> f64 + Sync) -> ScalarField<T> {
        ScalarField::from_fn(grid, |x: T, y: T, z: T| {
            T::lit(pick(self.jet(x.to_f64_lossy(), y.to_f64_lossy(), z.to_f64_lossy())))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crgeom::Deck;
    use rand::{Rng, SeedableRng};

    #[test]
    fn invariant_under_deck_transformations() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for n in 1..=3 {
            let f = ThetaMode::new(n).with_phase(0.4);
            for _ in 0..200 {
                let p = [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()];
                for d in Deck::ALL {
                    let q = d.apply(p);
                    let (a, b) = (f.jet(p[0], p[1], p[2]), f.jet(q[0], q[1], q[2]));
                    assert!((a.value - b.value).abs() < 1e-12);
                    // X, Y, T are themselves invariant, so the derivatives must be too
                    assert!((a.dx - b.dx).abs() < 1e-10);
                    assert!((a.dy - b.dy).abs() < 1e-10);
                    assert!((a.dt - b.dt).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let f = ThetaMode::new(2).with_phase(1.1);
        let e = 1e-5;
        for &(x, y, z) in &[(0.1, 0.2, 0.3), (0.7, 0.9, 0.05), (0.5, 0.0, 0.5)] {
            let j = f.jet(x, y, z);
            let fx = (f.value(x + e, y, z) - f.value(x - e, y, z)) / (2.0 * e);
            let fy = (f.value(x, y + e, z) - f.value(x, y - e, z)) / (2.0 * e);
            let fz = (f.value(x, y, z + e) - f.value(x, y, z - e)) / (2.0 * e);
            assert!((j.dx - (fx + y * fz)).abs() < 1e-6, "{} vs {}", j.dx, fx + y * fz);
            assert!((j.dy - fy).abs() < 1e-6);
            assert!((j.dt - fz).abs() < 1e-6);
        }
    }
}
