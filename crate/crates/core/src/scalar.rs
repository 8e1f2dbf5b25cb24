//! Scalar abstraction shared by every numerical module.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Real scalar the simulator is generic over (`f32` or `f64`).
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Converts an `f64` literal. Panics only if the value is not representable at all.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal not representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("integer not representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

const LEAF: usize = 256;

/// Pairwise sum with Neumaier-compensated leaves.
///
/// The reduction tree depends only on `xs.len()`, so the result is bit-identical
/// no matter how many threads the caller uses.
pub fn pairwise_sum<T: Real>(xs: &[T]) -> T {
    if xs.len() <= LEAF {
        return neumaier(xs);
    }
    let mid = xs.len() / 2;
    let (a, b) = xs.split_at(mid);
    if xs.len() >= 1 << 16 {
        let (sa, sb) = rayon::join(|| pairwise_sum(a), || pairwise_sum(b));
        sa + sb
    } else {
        pairwise_sum(a) + pairwise_sum(b)
    }
}

fn neumaier<T: Real>(xs: &[T]) -> T {
    let mut sum = T::zero();
    let mut comp = T::zero();
    for &x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp = comp + ((sum - t) + x);
        } else {
            comp = comp + ((x - t) + sum);
        }
        sum = t;
    }
    sum + comp
}

/// Least-squares slope of `ys` against `xs`.
pub fn linear_fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    sxy / sxx
}

/// Slope of `log y` against `log x`; the usual convergence-order / scaling-exponent fit.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    linear_fit_slope(&lx, &ly)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pairwise_sum_of_ones_is_exact() {
        let xs = vec![1.0f64; 100_003];
        assert_eq!(pairwise_sum(&xs), 100_003.0);
    }

    #[test]
    fn compensation_recovers_cancellation() {
        let xs = [1.0e16f64, 1.0, -1.0e16, 1.0];
        assert_eq!(pairwise_sum(&xs), 2.0);
    }

    #[test]
    fn slope_of_power_law() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-2.0)).collect();
        assert!((log_log_slope(&xs, &ys) + 2.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn pairwise_sum_matches_naive(xs in proptest::collection::vec(-1.0e3f64..1.0e3, 0..5000)) {
            let naive: f64 = xs.iter().sum();
            let scale: f64 = xs.iter().map(|x| x.abs()).sum::<f64>().max(1.0);
            prop_assert!((pairwise_sum(&xs) - naive).abs() <= 1e-12 * scale);
        }
    }
}
