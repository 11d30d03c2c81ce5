//! Truncated multivariate Taylor polynomials (order 4) for exact derivatives of closed-form maps.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

pub const JET_ORDER: usize = 4;

/// Monomial layout and product table for `n` variables.
#[derive(Debug)]
pub struct JetSpace {
    pub n: usize,
    pub monomials: Vec<Vec<usize>>,
    products: Vec<(usize, usize, usize)>,
    index: HashMap<Vec<usize>, usize>,
}

impl JetSpace {
    fn build(n: usize) -> Self {
        let mut monomials = Vec::new();
        for order in 0..=JET_ORDER {
            monomials.extend(crate::spaces::multi_indices_of_order(n, order));
        }
        let index: HashMap<Vec<usize>, usize> = monomials.iter().cloned().enumerate().map(|(i, m)| (m, i)).collect();
        let mut products = Vec::new();
        for (i, a) in monomials.iter().enumerate() {
            for (j, b) in monomials.iter().enumerate() {
                if a.iter().sum::<usize>() + b.iter().sum::<usize>() <= JET_ORDER {
                    let c: Vec<usize> = a.iter().zip(b).map(|(x, y)| x + y).collect();
                    products.push((i, j, index[&c]));
                }
            }
        }
        Self { n, monomials, products, index }
    }

    pub fn get(n: usize) -> Arc<JetSpace> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<JetSpace>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("jet cache");
        guard.entry(n).or_insert_with(|| Arc::new(JetSpace::build(n))).clone()
    }

    pub fn index_of(&self, alpha: &[usize]) -> Option<usize> {
        self.index.get(alpha).copied()
    }
}

/// `sum_alpha c_alpha (x - x0)^alpha` with `c_alpha = D^alpha f(x0) / alpha!`.
#[derive(Debug, Clone)]
pub struct Jet {
    space: Arc<JetSpace>,
    coeffs: Vec<f64>,
}

/// Scalar functions the maps are built from.
#[derive(Debug, Clone, Copy)]
pub enum Unary {
    Sin,
    Cos,
    Exp,
    /// `exp(1 - 1/(1 - s))` on `s < 1`, zero for `s >= 1`.
    Bump,
}

impl Unary {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            Unary::Sin => x.sin(),
            Unary::Cos => x.cos(),
            Unary::Exp => x.exp(),
            Unary::Bump => {
                if x >= 1.0 {
                    0.0
                } else {
                    (1.0 - 1.0 / (1.0 - x)).exp()
                }
            }
        }
    }

    /// `f^{(k)}(x)` for `k = 0..=4`.
    pub fn derivatives(self, x: f64) -> [f64; JET_ORDER + 1] {
        match self {
            Unary::Sin => [x.sin(), x.cos(), -x.sin(), -x.cos(), x.sin()],
            Unary::Cos => [x.cos(), -x.sin(), -x.cos(), x.sin(), x.cos()],
            Unary::Exp => [x.exp(); JET_ORDER + 1],
            Unary::Bump => {
                if x >= 1.0 {
                    return [0.0; JET_ORDER + 1];
                }
                // h(s) = 1 - 1/(1-s), h^{(k)} = -k!/(1-s)^{k+1}; bump = exp(h).
                let w = 1.0 / (1.0 - x);
                let mut h = [0.0; JET_ORDER + 1];
                h[0] = 1.0 - w;
                let mut fact = 1.0;
                for (k, hk) in h.iter_mut().enumerate().skip(1) {
                    fact *= k as f64;
                    *hk = -fact * w.powi(k as i32 + 1);
                }
                let s = Jet::univariate(x, &h);
                let e = s.apply(Unary::Exp);
                let mut out = [0.0; JET_ORDER + 1];
                let mut fact = 1.0;
                for (k, o) in out.iter_mut().enumerate() {
                    if k > 0 {
                        fact *= k as f64;
                    }
                    *o = e.coeffs[k] * fact;
                }
                out
            }
        }
    }
}

impl Jet {
    pub fn constant(space: &Arc<JetSpace>, c: f64) -> Self {
        let mut coeffs = vec![0.0; space.monomials.len()];
        coeffs[0] = c;
        Self { space: space.clone(), coeffs }
    }

    /// The coordinate function `x_i` expanded at `x0_i`.
    pub fn variable(space: &Arc<JetSpace>, i: usize, x0: f64) -> Self {
        let mut j = Self::constant(space, x0);
        let mut e = vec![0; space.n];
        e[i] = 1;
        j.coeffs[space.index_of(&e).expect("first-order monomial")] = 1.0;
        j
    }

    /// One-variable jet from derivatives `d[k] = f^{(k)}(x0)`.
    fn univariate(x0: f64, d: &[f64; JET_ORDER + 1]) -> Self {
        let space = JetSpace::get(1);
        let mut fact = 1.0;
        let coeffs = (0..=JET_ORDER)
            .map(|k| {
                if k > 0 {
                    fact *= k as f64;
                }
                d[k] / fact
            })
            .collect();
        let _ = x0;
        Self { space, coeffs }
    }

    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    /// `D^alpha f(x0)`.
    pub fn derivative(&self, alpha: &[usize]) -> f64 {
        let fact: f64 = alpha.iter().map(|&a| (1..=a).map(|v| v as f64).product::<f64>()).product();
        self.space.index_of(alpha).map_or(0.0, |i| self.coeffs[i] * fact)
    }

    pub fn gradient(&self) -> Vec<f64> {
        (0..self.space.n)
            .map(|i| {
                let mut e = vec![0; self.space.n];
                e[i] = 1;
                self.derivative(&e)
            })
            .collect()
    }

    pub fn space(&self) -> &Arc<JetSpace> {
        &self.space
    }

    pub fn add(&self, o: &Jet) -> Jet {
        Jet { space: self.space.clone(), coeffs: self.coeffs.iter().zip(&o.coeffs).map(|(a, b)| a + b).collect() }
    }

    pub fn sub(&self, o: &Jet) -> Jet {
        Jet { space: self.space.clone(), coeffs: self.coeffs.iter().zip(&o.coeffs).map(|(a, b)| a - b).collect() }
    }

    pub fn scale(&self, c: f64) -> Jet {
        Jet { space: self.space.clone(), coeffs: self.coeffs.iter().map(|a| a * c).collect() }
    }

    pub fn mul(&self, o: &Jet) -> Jet {
        let mut coeffs = vec![0.0; self.coeffs.len()];
        for &(i, j, k) in &self.space.products {
            coeffs[k] += self.coeffs[i] * o.coeffs[j];
        }
        Jet { space: self.space.clone(), coeffs }
    }

    /// `f(self)` by Taylor composition.
    pub fn apply(&self, f: Unary) -> Jet {
        let d = f.derivatives(self.value());
        let mut delta = self.clone();
        delta.coeffs[0] = 0.0;
        let mut out = Jet::constant(&self.space, d[0]);
        let mut power = Jet::constant(&self.space, 1.0);
        let mut fact = 1.0;
        for (k, dk) in d.iter().enumerate().skip(1) {
            power = power.mul(&delta);
            fact *= k as f64;
            out = out.add(&power.scale(dk / fact));
        }
        out
    }
}

/// Arithmetic shared by plain values and jets, so each map is written once.
pub trait MapScalar: Clone {
    fn lift(&self, c: f64) -> Self;
    fn plus(&self, o: &Self) -> Self;
    fn minus(&self, o: &Self) -> Self;
    fn times(&self, o: &Self) -> Self;
    fn scaled(&self, c: f64) -> Self;
    fn map(&self, f: Unary) -> Self;
}

impl MapScalar for f64 {
    fn lift(&self, c: f64) -> Self {
        c
    }
    fn plus(&self, o: &Self) -> Self {
        self + o
    }
    fn minus(&self, o: &Self) -> Self {
        self - o
    }
    fn times(&self, o: &Self) -> Self {
        self * o
    }
    fn scaled(&self, c: f64) -> Self {
        self * c
    }
    fn map(&self, f: Unary) -> Self {
        f.eval(*self)
    }
}

impl MapScalar for Jet {
    fn lift(&self, c: f64) -> Self {
        Jet::constant(&self.space, c)
    }
    fn plus(&self, o: &Self) -> Self {
        self.add(o)
    }
    fn minus(&self, o: &Self) -> Self {
        self.sub(o)
    }
    fn times(&self, o: &Self) -> Self {
        self.mul(o)
    }
    fn scaled(&self, c: f64) -> Self {
        self.scale(c)
    }
    fn map(&self, f: Unary) -> Self {
        self.apply(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_and_composition_match_closed_forms() {
        let sp = JetSpace::get(2);
        let x = Jet::variable(&sp, 0, 0.3);
        let y = Jet::variable(&sp, 1, -0.7);
        // f = sin(x y)
        let f = x.mul(&y).apply(Unary::Sin);
        let (a, b) = (0.3f64, -0.7f64);
        let c = (a * b).cos();
        let s = (a * b).sin();
        assert!((f.value() - s).abs() < 1e-15);
        assert!((f.derivative(&[1, 0]) - b * c).abs() < 1e-15);
        assert!((f.derivative(&[1, 1]) - (c - a * b * s)).abs() < 1e-14);
        assert!((f.derivative(&[2, 2]) - (-2.0 * s - 4.0 * a * b * c + a * a * b * b * s)).abs() < 1e-13);
        assert!((f.derivative(&[4, 0]) - b.powi(4) * s).abs() < 1e-14);
        assert_eq!(f.derivative(&[3, 2]), 0.0);
    }

    #[test]
    fn bump_derivatives_match_finite_differences() {
        for &s in &[0.0, 0.2, 0.5, 0.8] {
            let d = Unary::Bump.derivatives(s);
            for k in 0..JET_ORDER {
                let h = 1e-5;
                let fd = (Unary::Bump.derivatives(s + h)[k] - Unary::Bump.derivatives(s - h)[k]) / (2.0 * h);
                assert!((fd - d[k + 1]).abs() <= 1e-5 * d[k + 1].abs().max(1.0), "s={s} k={k}");
            }
        }
        assert_eq!(Unary::Bump.derivatives(1.2), [0.0; 5]);
        assert_eq!(Unary::Bump.eval(0.0), 1.0);
    }
}
