//! Fourier multipliers `lambda(D) u = F^{-1}(lambda u^)` and the standard lift symbols.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use serde::Serialize;

use crate::anisotropy::AnisotropyVector;
use crate::error::{Error, Result};
use crate::grid::{GridFunction, GridSpec, SpectralFunction};

type Evaluator = Arc<dyn Fn(&[f64]) -> Complex64 + Send + Sync>;

/// What a symbol is, for reporting.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SymbolKind {
    LambdaR { r: f64 },
    XiT { t: f64 },
    AxisPower { k: usize, mu: f64 },
    Custom { name: String },
}

/// A closed-form frequency function.
#[derive(Clone)]
pub struct MultiplierSymbol {
    kind: SymbolKind,
    eval: Evaluator,
}

impl fmt::Debug for MultiplierSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MultiplierSymbol").field("kind", &self.kind).finish()
    }
}

impl MultiplierSymbol {
    pub fn custom(name: &str, f: impl Fn(&[f64]) -> Complex64 + Send + Sync + 'static) -> Self {
        Self { kind: SymbolKind::Custom { name: name.into() }, eval: Arc::new(f) }
    }

    pub fn constant(c: f64) -> Self {
        Self::custom("constant", move |_| Complex64::new(c, 0.0))
    }

    pub fn kind(&self) -> &SymbolKind {
        &self.kind
    }

    #[inline]
    pub fn eval(&self, xi: &[f64]) -> Complex64 {
        (self.eval)(xi)
    }

    /// `1 / lambda`, the exact inverse multiplier.
    pub fn reciprocal(&self) -> Self {
        let inner = self.eval.clone();
        Self::custom("reciprocal", move |xi| 1.0 / inner(xi))
    }

    /// Pointwise product `lambda * mu`.
    pub fn product(&self, other: &MultiplierSymbol) -> Self {
        let (f, g) = (self.eval.clone(), other.eval.clone());
        Self::custom("product", move |xi| f(xi) * g(xi))
    }

    /// Symbol values on the lattice; refuses non-finite entries.
    pub fn tabulate(&self, spec: &GridSpec) -> Result<Vec<Complex64>> {
        let values = spec.map_frequencies(|xi| self.eval(xi));
        if let Some(flat) = values.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Domain(format!(
                "symbol is not finite at lattice frequency {:?}",
                spec.frequency_point(flat)
            )));
        }
        Ok(values)
    }
}

/// `lambda_r(xi) = sum_k (1 + xi_k^2)^{r / (2 a_k)}`.
pub fn lambda_r(a: &AnisotropyVector, r: f64) -> MultiplierSymbol {
    let exps: Vec<f64> = a.weights().iter().map(|ak| r / (2.0 * ak)).collect();
    MultiplierSymbol {
        kind: SymbolKind::LambdaR { r },
        eval: Arc::new(move |xi| {
            Complex64::new(xi.iter().zip(&exps).map(|(x, e)| (1.0 + x * x).powf(*e)).sum(), 0.0)
        }),
    }
}

/// `<xi>_a = |(1, xi)|_{(1, a)}`.
pub fn bracket(a1: &AnisotropyVector, xi: &[f64]) -> f64 {
    let mut ext = Vec::with_capacity(xi.len() + 1);
    ext.push(1.0);
    ext.extend_from_slice(xi);
    a1.distance_unchecked(&ext)
}

/// `<xi>_a^t`.
pub fn xi_symbol(a: &AnisotropyVector, t: f64) -> MultiplierSymbol {
    let a1 = a.with_leading_unit();
    MultiplierSymbol {
        kind: SymbolKind::XiT { t },
        eval: Arc::new(move |xi| {
            if t == 0.0 {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(bracket(&a1, xi).powf(t), 0.0)
            }
        }),
    }
}

/// `(1 + xi_k^2)^mu` with `k` counted from 1.
pub fn axis_power_symbol(n: usize, k: usize, mu: f64) -> Result<MultiplierSymbol> {
    if k == 0 || k > n {
        return Err(Error::Usage(format!("axis {k} outside 1..={n}")));
    }
    Ok(MultiplierSymbol {
        kind: SymbolKind::AxisPower { k, mu },
        eval: Arc::new(move |xi| Complex64::new((1.0 + xi[k - 1] * xi[k - 1]).powf(mu), 0.0)),
    })
}

/// `D^alpha = (-i d)^alpha` as a symbol, i.e. `xi^alpha`.
pub fn derivative_symbol(alpha: &[usize]) -> MultiplierSymbol {
    let alpha = alpha.to_vec();
    MultiplierSymbol::custom("derivative", move |xi| {
        Complex64::new(xi.iter().zip(&alpha).map(|(x, &m)| x.powi(m as i32)).product(), 0.0)
    })
}

pub fn apply_multiplier(sym: &MultiplierSymbol, u: &SpectralFunction) -> Result<GridFunction> {
    Ok(u.multiplied(&sym.tabulate(u.spec())?).to_grid())
}

/// Spectral image `lambda u^` without returning to the grid.
pub fn multiply_spectrum(sym: &MultiplierSymbol, u: &SpectralFunction) -> Result<SpectralFunction> {
    Ok(u.multiplied(&sym.tabulate(u.spec())?))
}

/// Applies `Lambda_r` and then its exact inverse (reciprocal symbol).
pub fn lift_roundtrip(a: &AnisotropyVector, r: f64, u: &SpectralFunction) -> Result<GridFunction> {
    let lam = lambda_r(a, r);
    let forward = multiply_spectrum(&lam, u)?;
    apply_multiplier(&lam.reciprocal(), &forward)
}

/// Deterministic sample of the corona `1/4 <= |xi|_a <= 4`: `radial` geometric radii
/// times `angular` Gaussian directions pushed onto the anisotropic sphere.
pub fn corona_samples(a: &AnisotropyVector, radial: usize, angular: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let dirs: Vec<Vec<f64>> = (0..angular)
        .map(|_| loop {
            let w: Vec<f64> = (0..a.dim()).map(|_| StandardNormal.sample(&mut rng)).collect();
            if w.iter().any(|v: &f64| v.abs() > 1e-3) {
                break w;
            }
        })
        .collect();
    let mut out = Vec::with_capacity(radial * angular);
    for i in 0..radial {
        let rho = 0.25 * 16f64.powf(i as f64 / (radial.max(2) - 1) as f64);
        for w in &dirs {
            let t = rho / a.distance_unchecked(w);
            out.push(a.dilate(t, w).expect("finite dilation"));
        }
    }
    out
}

/// Central-difference estimate of `|D^alpha f(x)|` with one Richardson step.
pub fn fd_derivative(f: &dyn Fn(&[f64]) -> Complex64, x: &[f64], alpha: &[usize]) -> f64 {
    let order: usize = alpha.iter().sum();
    if order == 0 {
        return f(x).norm();
    }
    let h = f64::EPSILON.powf(1.0 / (order as f64 + 4.0));
    let d1 = central_difference(f, x, alpha, h);
    let d2 = central_difference(f, x, alpha, h / 2.0);
    ((4.0 * d2 - d1) / 3.0).norm()
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Tensor product of the order-`m` central differences `sum_k (-1)^k C(m,k) f(x + (m/2 - k) h)`.
fn central_difference(f: &dyn Fn(&[f64]) -> Complex64, x: &[f64], alpha: &[usize], h: f64) -> Complex64 {
    let mut stencil: Vec<(Vec<f64>, f64)> = vec![(x.to_vec(), 1.0)];
    for (axis, &m) in alpha.iter().enumerate() {
        if m == 0 {
            continue;
        }
        let mut next = Vec::with_capacity(stencil.len() * (m + 1));
        for (p, w) in &stencil {
            for k in 0..=m {
                let mut q = p.clone();
                q[axis] += (m as f64 / 2.0 - k as f64) * h;
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                next.push((q, w * sign * binomial(m, k) / h.powi(m as i32)));
            }
        }
        stencil = next;
    }
    stencil.iter().map(|(p, w)| f(p) * *w).sum()
}

/// Sampled `C_alpha(lambda) = sup 2^{-j(r - a.alpha)} |D^alpha lambda(2^{ja} xi)|` over
/// `j <= max_level` and the corona `1/4 <= |xi|_a <= 4`.
pub fn symbol_seminorm(
    sym: &MultiplierSymbol,
    a: &AnisotropyVector,
    r: f64,
    alpha: &[usize],
    max_level: usize,
) -> Result<f64> {
    if alpha.len() != a.dim() {
        return Err(Error::Usage("multi-index dimension differs from the anisotropy".into()));
    }
    let samples = corona_samples(a, 10, 100, 0x5eed);
    let per_level: Vec<f64> = (0..=max_level)
        .into_par_iter()
        .map(|j| level_seminorm(sym, a, r, alpha, j, &samples))
        .collect();
    Ok(per_level.into_iter().fold(0.0, f64::max))
}

/// Contribution of a single level `j` to [`symbol_seminorm`].
pub fn level_seminorm(
    sym: &MultiplierSymbol,
    a: &AnisotropyVector,
    r: f64,
    alpha: &[usize],
    j: usize,
    samples: &[Vec<f64>],
) -> f64 {
    // D^alpha_xi [lambda(2^{ja} xi)] = 2^{j a.alpha} (D^alpha lambda)(2^{ja} xi), so the
    // weighted derivative is that of mu_j(xi) = 2^{-jr} lambda(2^{ja} xi) at unit scale.
    let scale = 2f64.powi(j as i32);
    let weight = 2f64.powf(-(j as f64) * r);
    let mu = |xi: &[f64]| {
        let d = a.dilate(scale, xi).expect("finite dilation");
        sym.eval(&d) * weight
    };
    samples.iter().map(|xi| fd_derivative(&mu, xi, alpha)).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use std::f64::consts::PI;

    fn spec2() -> GridSpec {
        GridSpec::uniform(2, 32, 2.0 * PI).unwrap()
    }

    fn random_spectrum(spec: &GridSpec, seed: u64) -> SpectralFunction {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        let modes: Vec<(Vec<i64>, Complex64)> = (0..12)
            .map(|_| {
                (
                    vec![rng.random_range(-8..8), rng.random_range(-8..8)],
                    Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5),
                )
            })
            .collect();
        SpectralFunction::from_modes(spec.clone(), &modes).unwrap()
    }

    fn a21() -> AnisotropyVector {
        AnisotropyVector::new(vec![2.0, 1.0]).unwrap()
    }

    #[test]
    fn constant_symbol_is_identity() {
        let u = random_spectrum(&spec2(), 1);
        let v = apply_multiplier(&MultiplierSymbol::constant(1.0), &u).unwrap();
        assert!(v.max_diff(&u.to_grid()).unwrap() <= 1e-12);
    }

    #[test]
    fn plane_waves_are_eigenfunctions() {
        let spec = spec2();
        let a = a21();
        let k = vec![3i64, -2];
        let xi: Vec<f64> = k.iter().map(|&v| v as f64).collect();
        let wave = SpectralFunction::from_modes(spec.clone(), &[(k, Complex64::new(1.0, 0.0))]).unwrap();
        for sym in [lambda_r(&a, 2.5), xi_symbol(&a, 1.3), axis_power_symbol(2, 1, 1.0).unwrap()] {
            let got = apply_multiplier(&sym, &wave).unwrap();
            let expect = wave.to_grid().scaled(sym.eval(&xi));
            assert!(got.max_diff(&expect).unwrap() <= 1e-12 * sym.eval(&xi).norm());
        }
        // (1 - d_1^2) e^{i 3 x_1} = (1 + 9) e^{i 3 x_1}
        assert!((axis_power_symbol(2, 1, 1.0).unwrap().eval(&xi).re - 10.0).abs() < 1e-15);
    }

    #[test]
    fn lambda_r_at_origin_counts_axes() {
        let a = AnisotropyVector::new(vec![2.0, 1.0, 3.0]).unwrap();
        assert_eq!(lambda_r(&a, 2.5).eval(&[0.0; 3]).re, 3.0);
        assert_eq!(lambda_r(&a, 0.0).eval(&[4.0, -1.0, 2.0]).re, 3.0);
    }

    #[test]
    fn bracket_values() {
        let a1 = AnisotropyVector::isotropic(1);
        for x in [0.0, 0.5, -3.0, 10.0] {
            assert!((xi_symbol(&a1, 1.0).eval(&[x]).re - (1.0 + x * x).sqrt()).abs() < 1e-13);
        }
        assert_eq!(xi_symbol(&a21(), 0.0).eval(&[5.0, 7.0]).re, 1.0);
        // Bisection oracle in 3-D: 1/t^2 + 1/t^4 + 1/t^2 = 1.
        let g = |t: f64| 1.0 / (t * t) + 1.0 / t.powi(4) + 1.0 / (t * t) - 1.0;
        let (mut lo, mut hi) = (1.0, 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 { lo = mid } else { hi = mid }
        }
        let got = xi_symbol(&a21(), 1.0).eval(&[1.0, 1.0]).re;
        assert!((got - 0.5 * (lo + hi)).abs() < 1e-12);
        assert!((got - (1.0 + 2f64.sqrt()).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn lift_roundtrips() {
        let spec = spec2();
        let a = a21();
        for seed in 0..5 {
            let u = random_spectrum(&spec, seed);
            let back = lift_roundtrip(&a, 2.5, &u).unwrap();
            assert!(back.max_diff(&u.to_grid()).unwrap() <= 1e-10);
            let back0 = lift_roundtrip(&a, 0.0, &u).unwrap();
            assert!(back0.max_diff(&u.to_grid()).unwrap() <= 1e-12);
            let down = multiply_spectrum(&axis_power_symbol(2, 2, -1.0).unwrap(), &u).unwrap();
            let up = apply_multiplier(&axis_power_symbol(2, 2, 1.0).unwrap(), &down).unwrap();
            assert!(up.max_diff(&u.to_grid()).unwrap() <= 1e-11);
        }
    }

    #[test]
    fn multipliers_compose() {
        let spec = spec2();
        let a = a21();
        let u = random_spectrum(&spec, 7);
        let (l, m) = (lambda_r(&a, 1.5), xi_symbol(&a, -0.7));
        let two_step = apply_multiplier(&l, &multiply_spectrum(&m, &u).unwrap()).unwrap();
        let one_step = apply_multiplier(&l.product(&m), &u).unwrap();
        assert!(two_step.max_diff(&one_step).unwrap() <= 1e-12 * one_step.max_abs().max(1.0));
    }

    #[test]
    fn non_finite_symbol_is_refused() {
        let u = random_spectrum(&spec2(), 2);
        let bad = MultiplierSymbol::custom("pole", |xi| Complex64::new(1.0 / xi[0], 0.0));
        assert!(matches!(apply_multiplier(&bad, &u), Err(Error::Domain(_))));
        assert!(axis_power_symbol(2, 3, 1.0).is_err());
    }

    #[test]
    fn corona_samples_lie_in_corona() {
        let a = AnisotropyVector::new(vec![2.0, 1.0, 1.5]).unwrap();
        let s = corona_samples(&a, 10, 100, 1);
        assert_eq!(s.len(), 1000);
        for xi in &s {
            let r = a.distance(xi).unwrap();
            assert!((0.25 - 1e-12..=4.0 + 1e-12).contains(&r));
        }
    }

    #[test]
    fn finite_differences_of_polynomials() {
        let f = |x: &[f64]| Complex64::new(x[0].powi(3) * x[1] + 2.0 * x[1] * x[1], 0.0);
        let x = [0.7, -1.2];
        assert!((fd_derivative(&f, &x, &[1, 0]) - (3.0 * 0.49 * 1.2)).abs() < 1e-7);
        assert!((fd_derivative(&f, &x, &[2, 1]) - 6.0 * 0.7).abs() < 1e-6);
        assert!((fd_derivative(&f, &x, &[0, 2]) - 4.0).abs() < 1e-6);
    }

    #[test]
    fn seminorm_examples() {
        let a = a21();
        let one = MultiplierSymbol::constant(1.0);
        assert!((symbol_seminorm(&one, &a, 0.0, &[0, 0], 6).unwrap() - 1.0).abs() < 1e-15);
        // lambda_r, alpha = 0: per-level sups finite and non-increasing after j = 3.
        let lam = lambda_r(&a, 2.0);
        let samples = corona_samples(&a, 10, 100, 0x5eed);
        let levels: Vec<f64> = (0..10).map(|j| level_seminorm(&lam, &a, 2.0, &[0, 0], j, &samples)).collect();
        for w in levels[3..].windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
        // Direct scan oracle for <xi>^t: 2^{-jt} <2^{ja} xi>^t <= <xi>^t bound on the corona.
        let t = 1.5;
        let c = symbol_seminorm(&xi_symbol(&a, t), &a, t, &[0, 0], 12).unwrap();
        let a1 = a.with_leading_unit();
        let bound = samples.iter().map(|xi| bracket(&a1, xi).powf(t)).fold(0.0, f64::max);
        assert!(c.is_finite() && c <= bound * (1.0 + 1e-12));
        // Higher derivatives stay bounded in j.
        for alpha in [[1usize, 0], [0, 2], [2, 1]] {
            let lo = symbol_seminorm(&lam, &a, 2.0, &alpha, 4).unwrap();
            let hi = symbol_seminorm(&lam, &a, 2.0, &alpha, 10).unwrap();
            assert!(hi.is_finite() && hi <= 2.0 * lo + 1.0);
        }
    }
}
