//! Anisotropic distance function and quasi-homogeneous dilations.
//!
//! For a weight vector `a >= 1` the distance `|x|_a` is the unique `t > 0` with
//! `sum_j x_j^2 / t^(2 a_j) = 1` (and `|0|_a = 0`). It satisfies
//! `|t^a x|_a = t |x|_a`, the triangle inequality, and
//! `max_j |x_j|^(1/a_j) <= |x|_a <= sum_j |x_j|^(1/a_j)`.

use serde::Serialize;

use crate::error::{Error, Result};

/// Relative residual at which the root solver stops.
pub const RESIDUAL_TOLERANCE: f64 = 1e-13;
/// Iteration cap for the safeguarded Newton solver.
pub const MAX_ITERATIONS: usize = 100;

/// Weight vector `a = (a_1, ..., a_n)` with every entry at least one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnisotropyVector {
    weights: Vec<f64>,
    min: f64,
    sum: f64,
}

impl AnisotropyVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Domain("anisotropy vector must have at least one entry".into()));
        }
        if let Some(bad) = weights.iter().find(|w| !w.is_finite() || **w < 1.0) {
            return Err(Error::Domain(format!(
                "anisotropy weights must be finite and >= 1, got {bad}"
            )));
        }
        let min = weights.iter().copied().fold(f64::INFINITY, f64::min);
        let sum = weights.iter().sum();
        Ok(Self { weights, min, sum })
    }

    pub fn isotropic(n: usize) -> Self {
        Self::new(vec![1.0; n]).expect("unit weights are valid")
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Smallest weight.
    pub fn min(&self) -> f64 {
        self.min
    }

    /// Sum of the weights, `|a|`.
    pub fn sum(&self) -> f64 {
        self.sum
    }

    pub fn is_isotropic(&self) -> bool {
        self.weights.iter().all(|&w| w == 1.0)
    }

    /// The vector `lambda * a`; requires the result to stay `>= 1`.
    pub fn scaled(&self, lambda: f64) -> Result<Self> {
        Self::new(self.weights.iter().map(|w| w * lambda).collect())
    }

    /// `(1, a_1, ..., a_n)`, the weight vector used for the inhomogeneous bracket.
    pub fn with_leading_unit(&self) -> Self {
        let mut w = Vec::with_capacity(self.dim() + 1);
        w.push(1.0);
        w.extend_from_slice(&self.weights);
        Self::new(w).expect("prepending 1 keeps weights valid")
    }

    /// Anisotropic distance of `x`. Rejects non-finite coordinates and dimension mismatch.
    pub fn distance(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        Ok(self.distance_unchecked(x))
    }

    /// Distance together with the residual `sum_j x_j^2/t^(2a_j) - 1`.
    pub fn distance_with_residual(&self, x: &[f64]) -> Result<(f64, f64)> {
        let t = self.distance(x)?;
        Ok((t, self.residual(x, t)))
    }

    /// `sum_j x_j^2 / t^(2 a_j) - 1`; zero at `t = |x|_a` for `x != 0`.
    pub fn residual(&self, x: &[f64], t: f64) -> f64 {
        if t == 0.0 {
            return if x.iter().all(|&v| v == 0.0) { 0.0 } else { f64::INFINITY };
        }
        x.iter()
            .zip(&self.weights)
            .map(|(&xi, &a)| (xi.abs().powf(1.0 / a) / t).powf(2.0 * a))
            .sum::<f64>()
            - 1.0
    }

    /// Quasi-homogeneous dilation `t^a x`.
    pub fn dilate(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::Domain(format!("dilation parameter must be positive, got {t}")));
        }
        self.check_point(x)?;
        Ok(x.iter().zip(&self.weights).map(|(&xi, &a)| t.powf(a) * xi).collect())
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Domain(format!(
                "point has {} coordinates, anisotropy has {}",
                x.len(),
                self.dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("point coordinates must be finite".into()));
        }
        Ok(())
    }

    /// Distance without input validation. Hot path for lattice sweeps.
    pub fn distance_unchecked(&self, x: &[f64]) -> f64 {
        if self.is_isotropic() {
            return euclidean(x);
        }
        // b_j = |x_j|^(1/a_j) is the single-axis distance; the root lies in [max b, sum b].
        let mut bases = [0.0f64; 8];
        let mut heap = Vec::new();
        let b: &mut [f64] = if x.len() <= bases.len() {
            &mut bases[..x.len()]
        } else {
            heap.resize(x.len(), 0.0);
            &mut heap
        };
        let mut lo: f64 = 0.0;
        let mut hi = 0.0;
        let mut nonzero = 0;
        for ((bj, &xj), &a) in b.iter_mut().zip(x).zip(&self.weights) {
            *bj = if a == 1.0 { xj.abs() } else { xj.abs().powf(1.0 / a) };
            if *bj > 0.0 {
                nonzero += 1;
            }
            lo = lo.max(*bj);
            hi += *bj;
        }
        if nonzero == 0 {
            return 0.0;
        }
        if nonzero == 1 {
            return lo;
        }
        solve_radius(b, &self.weights, lo, hi)
    }
}

fn euclidean(x: &[f64]) -> f64 {
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    let s: f64 = x.iter().map(|v| (v / scale) * (v / scale)).sum();
    scale * s.sqrt()
}

/// phi(t) = sum (b_j/t)^(2a_j) - 1 together with t*phi'(t) = -2 sum a_j (b_j/t)^(2a_j).
#[inline]
fn phi(b: &[f64], a: &[f64], t: f64) -> (f64, f64) {
    let mut value = -1.0;
    let mut weighted = 0.0;
    for (&bj, &aj) in b.iter().zip(a) {
        if bj == 0.0 {
            continue;
        }
        let r = bj / t;
        let term = if aj == 1.0 { r * r } else { r.powf(2.0 * aj) };
        value += term;
        weighted += aj * term;
    }
    (value, -2.0 * weighted)
}

/// Safeguarded Newton iteration on the strictly decreasing function phi over [lo, hi].
fn solve_radius(b: &[f64], a: &[f64], mut lo: f64, mut hi: f64) -> f64 {
    let mut t = lo;
    for _ in 0..MAX_ITERATIONS {
        let (f, t_dphi) = phi(b, a, t);
        if f.abs() <= RESIDUAL_TOLERANCE {
            // One polishing step; quadratic convergence takes it to rounding level.
            let next = t - f * t / t_dphi;
            return if next >= lo && next <= hi { next } else { t };
        }
        if f > 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let newton = t - f * t / t_dphi;
        t = if newton > lo && newton < hi && newton.is_finite() {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    t
}

/// Argument carrier for the distance function: a finite point of `R^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnisoPoint(Vec<f64>);

impl AnisoPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("point coordinates must be finite".into()));
        }
        Ok(Self(coords))
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.0
    }
}

pub fn aniso_distance(a: &AnisotropyVector, x: &AnisoPoint) -> Result<f64> {
    a.distance(x.coords())
}

pub fn aniso_dilate(a: &AnisotropyVector, t: f64, x: &AnisoPoint) -> Result<AnisoPoint> {
    a.dilate(t, x.coords()).map(AnisoPoint)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn a21() -> AnisotropyVector {
        AnisotropyVector::new(vec![2.0, 1.0]).unwrap()
    }

    /// Closed form for a = (2, 1): |xi| = 2^(-1/2) (xi_2^2 + (xi_2^4 + 4 xi_1^2)^(1/2))^(1/2).
    fn closed_form_21(x: &[f64]) -> f64 {
        let (x1, x2) = (x[0], x[1]);
        (0.5 * (x2 * x2 + (x2.powi(4) + 4.0 * x1 * x1).sqrt())).sqrt()
    }

    fn bisection(a: &AnisotropyVector, x: &[f64]) -> f64 {
        let mut lo = 1e-300;
        let mut hi = 1e300f64.min(x.iter().zip(a.weights()).map(|(v, w)| v.abs().powf(1.0 / w)).sum::<f64>() * 2.0 + 1.0);
        for _ in 0..2000 {
            let mid = 0.5 * (lo + hi);
            let f: f64 = x.iter().zip(a.weights()).map(|(v, w)| v * v / mid.powf(2.0 * w)).sum();
            if f > 1.0 { lo = mid } else { hi = mid }
            if hi - lo < 1e-16 * hi { break; }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn isotropic_reduces_to_euclidean() {
        let a = AnisotropyVector::isotropic(2);
        assert_eq!(a.distance(&[3.0, 4.0]).unwrap(), 5.0);
    }

    #[test]
    fn golden_values_for_weights_two_one() {
        let a = a21();
        assert!((a.distance(&[2.0, 0.0]).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        let expected = ((1.0 + 5f64.sqrt()) / 2.0).sqrt();
        let got = a.distance(&[1.0, 1.0]).unwrap();
        assert!((got - expected).abs() < 1e-14);
        assert!((got - 1.2720196).abs() < 1e-7);
        assert!((got - bisection(&a, &[1.0, 1.0])).abs() < 1e-13);
    }

    #[test]
    fn zero_has_zero_distance() {
        assert_eq!(a21().distance(&[0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn residual_is_tiny() {
        let a = AnisotropyVector::new(vec![1.5, 3.0, 1.0]).unwrap();
        let x = [0.3, -7.0, 2.5];
        let (_, r) = a.distance_with_residual(&x).unwrap();
        assert!(r.abs() <= 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(AnisotropyVector::new(vec![0.5, 1.0]).is_err());
        assert!(AnisotropyVector::new(vec![]).is_err());
        assert!(a21().distance(&[f64::NAN, 1.0]).is_err());
        assert!(a21().distance(&[1.0]).is_err());
        assert!(a21().dilate(0.0, &[1.0, 1.0]).is_err());
        assert!(a21().dilate(-1.0, &[1.0, 1.0]).is_err());
        assert!(AnisoPoint::new(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn dilation_examples() {
        let a = a21();
        assert_eq!(a.dilate(2.0, &[1.0, 1.0]).unwrap(), vec![4.0, 2.0]);
        assert_eq!(a.dilate(1.0, &[0.3, -0.7]).unwrap(), vec![0.3, -0.7]);
        let x = AnisoPoint::new(vec![1.0, 1.0]).unwrap();
        let y = aniso_dilate(&a, 3.0, &x).unwrap();
        let expected = 3.0 * ((1.0 + 5f64.sqrt()) / 2.0).sqrt();
        assert!((aniso_distance(&a, &y).unwrap() - expected).abs() < 1e-13);
    }

    #[test]
    fn closed_form_grid() {
        let a = a21();
        for i in 0..=100 {
            for j in 0..=100 {
                let x = [-10.0 + 0.2 * i as f64, -10.0 + 0.2 * j as f64];
                let d = a.distance(&x).unwrap();
                assert!((d - closed_form_21(&x)).abs() <= 1e-10, "{x:?}");
            }
        }
    }

    #[test]
    fn many_axes_use_heap_buffer() {
        let a = AnisotropyVector::new((0..10).map(|i| 1.0 + i as f64 * 0.25).collect()).unwrap();
        let x: Vec<f64> = (0..10).map(|i| (i as f64 - 4.5) * 0.7).collect();
        let (_, r) = a.distance_with_residual(&x).unwrap();
        assert!(r.abs() < 1e-12);
    }

    fn weights() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(1.0f64..4.0, 1..5)
    }

    proptest! {
        #[test]
        fn quasi_homogeneity(w in weights(), seed in prop::collection::vec(-50.0f64..50.0, 5), t in 1e-3f64..1e3) {
            let a = AnisotropyVector::new(w.clone()).unwrap();
            let x = &seed[..w.len()];
            let d = a.distance(x).unwrap();
            let dt = a.distance(&a.dilate(t, x).unwrap()).unwrap();
            prop_assert!((dt - t * d).abs() <= 1e-9 * t * d + 1e-300);
        }

        #[test]
        fn triangle_inequality(w in weights(), xs in prop::collection::vec(-50.0f64..50.0, 5), ys in prop::collection::vec(-50.0f64..50.0, 5)) {
            let a = AnisotropyVector::new(w.clone()).unwrap();
            let n = w.len();
            let s: Vec<f64> = xs[..n].iter().zip(&ys[..n]).map(|(p, q)| p + q).collect();
            let lhs = a.distance(&s).unwrap();
            let rhs = a.distance(&xs[..n]).unwrap() + a.distance(&ys[..n]).unwrap();
            prop_assert!(lhs <= rhs + 1e-10);
        }

        #[test]
        fn sandwich(w in weights(), xs in prop::collection::vec(-50.0f64..50.0, 5)) {
            let a = AnisotropyVector::new(w.clone()).unwrap();
            let x = &xs[..w.len()];
            let d = a.distance(x).unwrap();
            let lower = x.iter().zip(&w).map(|(v, aj)| v.abs().powf(1.0 / aj)).fold(0.0, f64::max);
            let upper: f64 = x.iter().zip(&w).map(|(v, aj)| v.abs().powf(1.0 / aj)).sum();
            prop_assert!(lower <= d + 1e-10 && d <= upper + 1e-10);
        }
    }
}
