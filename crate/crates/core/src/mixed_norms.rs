//! Iterated mixed Lebesgue norms `L_p` and `L_p(l_q)` on lattice data.
//!
//! Integration is innermost in `x_1` (axis 0), then `x_2`, and so on. Each integral is a
//! Riemann sum with uniform weight `L_j / N_j`, which on the torus coincides with the
//! periodic trapezoidal rule. An infinite exponent takes the lattice maximum.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{GridFunction, GridSpec};
use crate::numeric::CompensatedSum;

/// Integral exponents `p = (p_1, ..., p_n)` and sum exponent `q`, each in `(0, inf]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntegrabilityVector {
    p: Vec<f64>,
    q: f64,
}

impl IntegrabilityVector {
    pub fn new(p: Vec<f64>, q: f64) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::Domain("integrability vector needs at least one exponent".into()));
        }
        if let Some(bad) = p.iter().chain(std::iter::once(&q)).find(|v| !(**v > 0.0) || v.is_nan()) {
            return Err(Error::Domain(format!("exponents must lie in (0, inf], got {bad}")));
        }
        Ok(Self { p, q })
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn dim(&self) -> usize {
        self.p.len()
    }

    /// `d = min(1, p_1, ..., p_n, q)`.
    pub fn d(&self) -> f64 {
        self.p.iter().copied().fold(self.q.min(1.0), f64::min)
    }

    pub fn all_finite(&self) -> bool {
        self.p.iter().all(|p| p.is_finite())
    }

    /// `min(p_1, ..., p_n, q)`.
    pub fn min_exponent(&self) -> f64 {
        self.p.iter().copied().fold(self.q, f64::min)
    }
}

/// Iterated norm of nonnegative lattice values, axis 0 innermost.
pub fn lp_vec_norm_values(spec: &GridSpec, values: &[f64], p: &[f64]) -> f64 {
    debug_assert_eq!(values.len(), spec.len());
    debug_assert_eq!(p.len(), spec.dim());
    let mut current: Vec<f64> = values.to_vec();
    for (axis, &pj) in p.iter().enumerate() {
        let n = spec.points()[axis];
        let h = spec.spacing(axis);
        current = current.chunks_exact(n).map(|line| line_norm(line, pj, h)).collect();
        // The reduced array keeps the remaining axes in order, next axis fastest.
    }
    current[0]
}

fn line_norm(line: &[f64], p: f64, h: f64) -> f64 {
    if p.is_infinite() {
        return line.iter().copied().fold(0.0, f64::max);
    }
    let mut acc = CompensatedSum::new();
    if p == 1.0 {
        for &v in line {
            acc.add(v);
        }
        return acc.value() * h;
    }
    if p == 2.0 {
        for &v in line {
            acc.add(v * v);
        }
        return (acc.value() * h).sqrt();
    }
    for &v in line {
        if v > 0.0 {
            acc.add(v.powf(p));
        }
    }
    (acc.value() * h).powf(1.0 / p)
}

/// `|| u | L_p ||` with the iterated integration order fixed to axis 0 innermost.
pub fn lp_vec_norm(u: &GridFunction, pq: &IntegrabilityVector) -> Result<f64> {
    if pq.dim() != u.spec().dim() {
        return Err(Error::Usage(format!(
            "integrability vector has {} exponents for a {}-dimensional grid",
            pq.dim(),
            u.spec().dim()
        )));
    }
    Ok(lp_vec_norm_values(u.spec(), &u.magnitudes(), pq.p()))
}

/// Pointwise `(sum_k |w_k v_k(x)|^q)^{1/q}` over nonnegative lattice arrays.
pub fn lq_aggregate(levels: &[Vec<f64>], weights: &[f64], q: f64) -> Vec<f64> {
    let len = levels.first().map_or(0, Vec::len);
    let mut out = vec![0.0f64; len];
    if q.is_infinite() {
        for (level, &w) in levels.iter().zip(weights) {
            let w = w.abs();
            for (o, &v) in out.iter_mut().zip(level) {
                *o = o.max(w * v);
            }
        }
        return out;
    }
    let mut acc = vec![CompensatedSum::new(); len];
    for (level, &w) in levels.iter().zip(weights) {
        let w = w.abs();
        for (a, &v) in acc.iter_mut().zip(level) {
            let t = w * v;
            if t > 0.0 {
                a.add(if q == 2.0 { t * t } else if q == 1.0 { t } else { t.powf(q) });
            }
        }
    }
    for (o, a) in out.iter_mut().zip(&acc) {
        let s = a.value();
        *o = if q == 1.0 { s } else if q == 2.0 { s.sqrt() } else { s.powf(1.0 / q) };
    }
    out
}

/// `|| (sum_k |w_k u_k|^q)^{1/q} | L_p ||`.
pub fn lp_lq_norm(us: &[GridFunction], weights: &[f64], pq: &IntegrabilityVector) -> Result<f64> {
    let first = us.first().ok_or_else(|| Error::Usage("empty sequence".into()))?;
    if us.len() != weights.len() {
        return Err(Error::Usage(format!(
            "{} functions but {} weights",
            us.len(),
            weights.len()
        )));
    }
    if let Some(w) = weights.iter().find(|w| !w.is_finite()) {
        return Err(Error::Usage(format!("weights must be finite, got {w}")));
    }
    if us.iter().any(|u| u.spec() != first.spec()) {
        return Err(Error::Usage("all sequence members must share one grid".into()));
    }
    if pq.dim() != first.spec().dim() {
        return Err(Error::Usage("integrability vector dimension differs from the grid".into()));
    }
    let levels: Vec<Vec<f64>> = us.iter().map(GridFunction::magnitudes).collect();
    let g = lq_aggregate(&levels, weights, pq.q());
    Ok(lp_vec_norm_values(first.spec(), &g, pq.p()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_xoshiro::Xoshiro256PlusPlus;

    fn random_fn(spec: &GridSpec, rng: &mut Xoshiro256PlusPlus) -> GridFunction {
        let s = (0..spec.len())
            .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        GridFunction::new(spec.clone(), s).unwrap()
    }

    #[test]
    fn unit_box_indicator_has_norm_one() {
        let spec = GridSpec::new(vec![8, 16], vec![1.0, 1.0]).unwrap();
        let u = GridFunction::from_fn(spec, |_| Complex64::new(1.0, 0.0)).unwrap();
        for p in [[1.0, 1.0], [0.5, 3.0], [2.0, f64::INFINITY], [f64::INFINITY, 0.7]] {
            let pq = IntegrabilityVector::new(p.to_vec(), 1.0).unwrap();
            assert!((lp_vec_norm(&u, &pq).unwrap() - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn separable_function_factorises() {
        let spec = GridSpec::new(vec![32, 24], vec![2.0, 3.0]).unwrap();
        let f = |x: f64| 1.0 + 0.5 * (3.0 * x).sin();
        let g = |y: f64| (y - 1.5).abs() + 0.2;
        let u = GridFunction::from_fn(spec.clone(), |x| Complex64::new(f(x[0]) * g(x[1]), 0.0)).unwrap();
        let (p1, p2) = (1.5, 3.0);
        let pq = IntegrabilityVector::new(vec![p1, p2], 2.0).unwrap();
        let nf = ((0..32).map(|i| f(i as f64 * spec.spacing(0)).powf(p1)).sum::<f64>() * spec.spacing(0)).powf(1.0 / p1);
        let ng = ((0..24).map(|i| g(i as f64 * spec.spacing(1)).powf(p2)).sum::<f64>() * spec.spacing(1)).powf(1.0 / p2);
        let got = lp_vec_norm(&u, &pq).unwrap();
        assert!((got - nf * ng).abs() <= 1e-10 * got);
    }

    /// Nested adaptive Simpson quadrature of |G(x1,x2)|^p1 over the inner axis.
    fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
            let (flm, frm) = (f(lm), f(rm));
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                return left + right + (left + right - whole) / 15.0;
            }
            rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
        let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
        rec(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, 40)
    }

    #[test]
    fn gaussian_bump_matches_nested_quadrature() {
        let (l1, l2) = (8.0, 8.0);
        let bump = |x1: f64, x2: f64| (-((x1 - 4.0) / 0.9).powi(2) - ((x2 - 4.0) / 0.6).powi(2)).exp();
        let spec = GridSpec::new(vec![64, 64], vec![l1, l2]).unwrap();
        let u = GridFunction::from_fn(spec, |x| Complex64::new(bump(x[0], x[1]), 0.0)).unwrap();
        let pq = IntegrabilityVector::new(vec![1.0, 2.0], 1.0).unwrap();
        let got = lp_vec_norm(&u, &pq).unwrap();
        let inner = |x2: f64| adaptive_simpson(&|x1| bump(x1, x2), 0.0, l1, 1e-13);
        let outer = adaptive_simpson(&|x2| inner(x2).powi(2), 0.0, l2, 1e-13).sqrt();
        assert!((got - outer).abs() <= 1e-6 * outer, "{got} vs {outer}");
    }

    #[test]
    fn single_element_sequence_is_plain_norm() {
        let spec = GridSpec::new(vec![8, 8], vec![1.0, 1.0]).unwrap();
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(1);
        let u = random_fn(&spec, &mut rng);
        let pq = IntegrabilityVector::new(vec![1.5, 0.8], 3.0).unwrap();
        let a = lp_lq_norm(std::slice::from_ref(&u), &[1.0], &pq).unwrap();
        let b = lp_vec_norm(&u, &pq).unwrap();
        assert!((a - b).abs() <= 1e-14 * b);
    }

    #[test]
    fn disjoint_indicators_add_volumes() {
        let spec = GridSpec::new(vec![8, 8], vec![1.0, 1.0]).unwrap();
        let ind = |cond: fn(&[f64]) -> bool| {
            GridFunction::from_fn(spec.clone(), |x| Complex64::new(if cond(x) { 1.0 } else { 0.0 }, 0.0)).unwrap()
        };
        let u = ind(|x| x[0] < 0.25);
        let v = ind(|x| x[0] >= 0.5 && x[1] < 0.5);
        let pq = IntegrabilityVector::new(vec![1.0, 1.0], 1.0).unwrap();
        let got = lp_lq_norm(&[u, v], &[1.0, 1.0], &pq).unwrap();
        assert!((got - (0.25 + 0.25)).abs() < 1e-14);
    }

    #[test]
    fn three_functions_match_naive_loop() {
        let spec = GridSpec::new(vec![8, 10], vec![1.0, 2.0]).unwrap();
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(5);
        let us: Vec<GridFunction> = (0..3).map(|_| random_fn(&spec, &mut rng)).collect();
        let w = [1.0, 2.0, 0.5];
        let pq = IntegrabilityVector::new(vec![2.0, 2.0], 2.0).unwrap();
        let got = lp_lq_norm(&us, &w, &pq).unwrap();
        let (h1, h2) = (spec.spacing(0), spec.spacing(1));
        let mut outer = 0.0;
        for i2 in 0..10 {
            let mut inner = 0.0;
            for i1 in 0..8 {
                let flat = i1 + 8 * i2;
                let g: f64 = (0..3).map(|k| (w[k] * us[k].samples()[flat].norm()).powi(2)).sum::<f64>();
                inner += g * h1;
            }
            outer += inner * h2;
        }
        assert!((got - outer.sqrt()).abs() <= 1e-12 * got);
    }

    #[test]
    fn rejects_mismatched_inputs() {
        let a = GridFunction::zeros(GridSpec::uniform(1, 8, 1.0).unwrap());
        let b = GridFunction::zeros(GridSpec::uniform(1, 10, 1.0).unwrap());
        let pq = IntegrabilityVector::new(vec![2.0], 2.0).unwrap();
        assert!(matches!(lp_lq_norm(&[a.clone(), b], &[1.0, 1.0], &pq), Err(Error::Usage(_))));
        assert!(lp_lq_norm(&[a.clone()], &[f64::NAN], &pq).is_err());
        assert!(lp_lq_norm(&[a], &[1.0, 2.0], &pq).is_err());
        assert!(IntegrabilityVector::new(vec![0.0], 1.0).is_err());
        assert!(IntegrabilityVector::new(vec![1.0], -1.0).is_err());
    }

    #[test]
    fn d_is_min_with_one() {
        assert_eq!(IntegrabilityVector::new(vec![2.0, 0.5], 3.0).unwrap().d(), 0.5);
        assert_eq!(IntegrabilityVector::new(vec![2.0, 4.0], f64::INFINITY).unwrap().d(), 1.0);
    }

    fn exponent() -> impl Strategy<Value = f64> {
        prop::sample::select(vec![0.5, 1.0, 2.0, f64::INFINITY])
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn d_power_subadditivity(p1 in exponent(), p2 in exponent(), q in exponent(), seed in any::<u64>()) {
            let spec = GridSpec::new(vec![8, 8], vec![1.0, 2.0]).unwrap();
            let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
            let us: Vec<GridFunction> = (0..3).map(|_| random_fn(&spec, &mut rng)).collect();
            let vs: Vec<GridFunction> = (0..3).map(|_| random_fn(&spec, &mut rng)).collect();
            let sum: Vec<GridFunction> = us.iter().zip(&vs).map(|(a, b)| a.add(b).unwrap()).collect();
            let w = [1.0, 2.0, 4.0];
            let pq = IntegrabilityVector::new(vec![p1, p2], q).unwrap();
            let d = pq.d();
            let lhs = lp_lq_norm(&sum, &w, &pq).unwrap().powf(d);
            let rhs = lp_lq_norm(&us, &w, &pq).unwrap().powf(d) + lp_lq_norm(&vs, &w, &pq).unwrap().powf(d);
            prop_assert!(lhs <= rhs + 1e-9);
        }

        #[test]
        fn homogeneity_and_monotonicity(p1 in exponent(), p2 in exponent(), c in -5.0f64..5.0, seed in any::<u64>()) {
            let spec = GridSpec::new(vec![8, 8], vec![1.0, 1.0]).unwrap();
            let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
            let u = random_fn(&spec, &mut rng);
            let pq = IntegrabilityVector::new(vec![p1, p2], 1.0).unwrap();
            let base = lp_vec_norm(&u, &pq).unwrap();
            let scaled = lp_vec_norm(&u.scaled(Complex64::new(c, 0.0)), &pq).unwrap();
            prop_assert!((scaled - c.abs() * base).abs() <= 1e-12 * c.abs() * base + 1e-300);
            let bigger: Vec<Complex64> = u.samples().iter().map(|z| z * (1.0 + rng.random::<f64>())).collect();
            let v = GridFunction::new(spec, bigger).unwrap();
            prop_assert!(base <= lp_vec_norm(&v, &pq).unwrap() + 1e-12);
        }
    }
}
