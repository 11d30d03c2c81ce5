//! Multivariate higher-order chain rule:
//! `D^gamma (g o f)(x0) = sum_alpha D^alpha g(f(x0)) sum gamma! prod_{j,beta} (D^beta f_j(x0))^{n_beta} / (n_beta! (beta!)^{n_beta})`
//! where the inner sum runs over multisets `{(j, beta)}` with `sum n_beta beta = gamma` and
//! `alpha_j = sum_beta n_{(j, beta)}`.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::jet::{Jet, JetSpace, MapScalar, Unary, JET_ORDER};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct MultiIndex(pub Vec<usize>);

impl MultiIndex {
    pub fn new(entries: Vec<usize>) -> Self {
        Self(entries)
    }

    pub fn order(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn factorial(&self) -> BigInt {
        self.0.iter().map(|&k| factorial(k)).product()
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|v| v.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

pub fn factorial(k: usize) -> BigInt {
    (1..=k).fold(BigInt::one(), |acc, v| acc * BigInt::from(v))
}

/// One `(j, beta, n_beta)` factor: `(D^beta f_j)^{n_beta}`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Factor {
    pub component: usize,
    pub beta: MultiIndex,
    pub power: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionTerm {
    pub alpha: MultiIndex,
    pub factors: Vec<Factor>,
    /// `gamma! / prod(n_beta! (beta!)^{n_beta})`.
    pub coefficient: BigRational,
}

impl PartitionTerm {
    /// Polynomial degree in the derivatives of `f`.
    pub fn degree(&self) -> usize {
        self.factors.iter().map(|f| f.power).sum()
    }

    /// Re-checks the splitting and sum constraints.
    pub fn satisfies_constraints(&self, gamma: &MultiIndex) -> bool {
        let m = self.alpha.dim();
        let n = gamma.dim();
        let split = (0..m).all(|j| {
            self.alpha.0[j] == self.factors.iter().filter(|f| f.component == j).map(|f| f.power).sum::<usize>()
        });
        let mut total = vec![0; n];
        for f in &self.factors {
            for (t, b) in total.iter_mut().zip(&f.beta.0) {
                *t += f.power * b;
            }
        }
        let ranges = self.factors.iter().all(|f| (1..=gamma.order()).contains(&f.beta.order()) && f.power >= 1);
        split && total == gamma.0 && ranges && self.coefficient > BigRational::zero()
    }
}

impl fmt::Display for PartitionTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} * D^{}g", self.coefficient, self.alpha)?;
        for fac in &self.factors {
            write!(f, " * (D^{}f_{})", fac.beta, fac.component + 1)?;
            if fac.power > 1 {
                write!(f, "^{}", fac.power)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainRuleExpansion {
    pub gamma: MultiIndex,
    pub n: usize,
    pub m: usize,
    pub terms: Vec<PartitionTerm>,
}

/// Candidate parts `(j, beta)` with `1 <= |beta|` and `beta <= gamma`, in canonical order.
fn parts(gamma: &MultiIndex, m: usize) -> Vec<(usize, Vec<usize>)> {
    let mut betas = vec![vec![]];
    for &g in &gamma.0 {
        betas = betas
            .into_iter()
            .flat_map(|b: Vec<usize>| {
                (0..=g).map(move |v| {
                    let mut c = b.clone();
                    c.push(v);
                    c
                })
            })
            .collect();
    }
    betas.retain(|b| b.iter().sum::<usize>() >= 1);
    betas.sort_by(|a, b| (a.iter().sum::<usize>(), a).cmp(&(b.iter().sum::<usize>(), b)));
    (0..m).flat_map(|j| betas.iter().map(move |b| (j, b.clone()))).collect()
}

/// Chooses a multiplicity for each part in turn; branches that overshoot `gamma` are cut.
fn distribute(
    parts: &[(usize, Vec<usize>)],
    start: usize,
    remaining: &mut Vec<usize>,
    chosen: &mut Vec<(usize, usize)>,
    out: &mut Vec<Vec<(usize, usize)>>,
) {
    if remaining.iter().all(|&r| r == 0) {
        out.push(chosen.clone());
        return;
    }
    for p in start..parts.len() {
        let beta = &parts[p].1;
        let max_k = beta
            .iter()
            .zip(remaining.iter())
            .filter(|(&b, _)| b > 0)
            .map(|(&b, &r)| r / b)
            .min()
            .unwrap_or(0);
        for k in 1..=max_k {
            for (r, &b) in remaining.iter_mut().zip(beta) {
                *r -= k * b;
            }
            chosen.push((p, k));
            distribute(parts, p + 1, remaining, chosen, out);
            chosen.pop();
            for (r, &b) in remaining.iter_mut().zip(beta) {
                *r += k * b;
            }
        }
    }
}

pub fn enumerate_terms(gamma: &MultiIndex, n: usize, m: usize) -> Result<ChainRuleExpansion> {
    if gamma.dim() != n {
        return Err(Error::Domain(format!("gamma has {} entries, expected n = {n}", gamma.dim())));
    }
    if m == 0 {
        return Err(Error::Domain("intermediate dimension m must be positive".into()));
    }
    if gamma.order() == 0 {
        return Err(Error::Domain("the chain rule expansion needs |gamma| >= 1".into()));
    }
    let parts = parts(gamma, m);
    let mut raw = Vec::new();
    distribute(&parts, 0, &mut gamma.0.clone(), &mut Vec::new(), &mut raw);
    let gfact = BigRational::from_integer(gamma.factorial());
    let mut terms: Vec<PartitionTerm> = raw
        .into_iter()
        .map(|choice| {
            let mut alpha = vec![0; m];
            let mut denom = BigInt::one();
            let factors: Vec<Factor> = choice
                .into_iter()
                .map(|(p, k)| {
                    let (j, beta) = &parts[p];
                    let beta = MultiIndex(beta.clone());
                    alpha[*j] += k;
                    denom *= factorial(k) * num_traits::pow(beta.factorial(), k);
                    Factor { component: *j, beta, power: k }
                })
                .collect();
            PartitionTerm {
                alpha: MultiIndex(alpha),
                factors,
                coefficient: &gfact / BigRational::from_integer(denom),
            }
        })
        .collect();
    terms.sort_by(|a, b| a.alpha.cmp(&b.alpha).then_with(|| a.factors.cmp(&b.factors)));
    debug_assert!(terms.iter().all(|t| t.degree() == t.alpha.order() && t.satisfies_constraints(gamma)));
    Ok(ChainRuleExpansion { gamma: gamma.clone(), n, m, terms })
}

pub fn term_count(gamma: &MultiIndex, n: usize, m: usize) -> Result<usize> {
    Ok(enumerate_terms(gamma, n, m)?.terms.len())
}

/// Number type the expansion can be evaluated in.
pub trait ChainValue: Clone {
    fn from_rational(r: &BigRational) -> Self;
    fn unit() -> Self;
    fn nothing() -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn add(&self, o: &Self) -> Self;
}

impl ChainValue for f64 {
    fn from_rational(r: &BigRational) -> Self {
        r.to_f64().unwrap_or(f64::NAN)
    }
    fn unit() -> Self {
        1.0
    }
    fn nothing() -> Self {
        0.0
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
}

impl ChainValue for BigRational {
    fn from_rational(r: &BigRational) -> Self {
        r.clone()
    }
    fn unit() -> Self {
        One::one()
    }
    fn nothing() -> Self {
        Zero::zero()
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
}

/// Sums the expansion. `f_derivs(j, beta)` is `D^beta f_j(x0)`, `g_derivs(alpha)` is
/// `D^alpha g(f(x0))`; `None` means the oracle cannot supply it.
pub fn evaluate<T: ChainValue>(
    exp: &ChainRuleExpansion,
    f_derivs: &dyn Fn(usize, &[usize]) -> Option<T>,
    g_derivs: &dyn Fn(&[usize]) -> Option<T>,
) -> Result<T> {
    let mut total = T::nothing();
    for term in &exp.terms {
        let mut v = g_derivs(&term.alpha.0)
            .ok_or_else(|| Error::MissingDerivative(format!("D^{} g", term.alpha)))?
            .mul(&T::from_rational(&term.coefficient));
        for fac in &term.factors {
            let d = f_derivs(fac.component, &fac.beta.0).ok_or_else(|| {
                Error::MissingDerivative(format!("D^{} f_{} (j = {}, beta = {})", fac.beta, fac.component + 1, fac.component + 1, fac.beta))
            })?;
            for _ in 0..fac.power {
                v = v.mul(&d);
            }
        }
        total = total.add(&v);
    }
    Ok(total)
}

pub type SuitePair = (usize, usize, Box<dyn Fn(&[Jet]) -> Vec<Jet> + Send + Sync>, Box<dyn Fn(&[Jet]) -> Jet + Send + Sync>);

/// Ten fixed smooth pairs used by the verification suite `(f: R^n -> R^m, g: R^m -> R)`.
pub fn suite() -> Vec<SuitePair> {
    fn poly<T: MapScalar>(x: &[T], c: &[f64]) -> T {
        // c0 + c1 x1 + c2 x1 x_last + c3 x_last^2 + c4 x1^3
        let l = x.len() - 1;
        let mut v = x[0].lift(c[0]);
        v = v.plus(&x[0].scaled(c[1]));
        v = v.plus(&x[0].times(&x[l]).scaled(c[2]));
        v = v.plus(&x[l].times(&x[l]).scaled(c[3]));
        v.plus(&x[0].times(&x[0]).times(&x[0]).scaled(c[4]))
    }
    let mut out: Vec<SuitePair> = Vec::new();
    for (idx, &(n, m)) in [(1, 1), (1, 2), (2, 1), (2, 2), (2, 3), (3, 1), (3, 2), (3, 3), (1, 3), (2, 2)].iter().enumerate() {
        let s = idx as f64 * 0.1;
        let f = move |x: &[Jet]| -> Vec<Jet> {
            (0..m)
                .map(|j| {
                    let c = [0.1 * j as f64, 1.0 - s, 0.5 + s, -0.3, 0.2 * (j as f64 + 1.0)];
                    let p = poly(x, &c);
                    if (j + idx) % 2 == 0 { p } else { p.scaled(0.5).map(Unary::Sin) }
                })
                .collect()
        };
        let g = move |y: &[Jet]| -> Jet {
            let p = poly(y, &[0.3, 0.7, -0.4 + s, 0.25, 0.1]);
            if idx % 3 == 0 { p.scaled(0.3).map(Unary::Exp) } else { p.times(&y[0].map(Unary::Cos)) }
        };
        out.push((n, m, Box::new(f), Box::new(g)));
    }
    out
}

fn eval_f64(f: &dyn Fn(&[Jet]) -> Vec<Jet>, g: &dyn Fn(&[Jet]) -> Jet, x: &[f64]) -> f64 {
    let sp = JetSpace::get(x.len());
    let vars: Vec<Jet> = x.iter().enumerate().map(|(i, &v)| Jet::variable(&sp, i, v)).collect();
    let y: Vec<f64> = f(&vars).iter().map(Jet::value).collect();
    let sy = JetSpace::get(y.len());
    g(&y.iter().enumerate().map(|(i, &v)| Jet::variable(&sy, i, v)).collect::<Vec<_>>()).value()
}

/// Tensor central difference with step `h`.
pub fn central_difference(f: &dyn Fn(&[f64]) -> f64, x: &[f64], gamma: &[usize], h: f64) -> f64 {
    let mut stencil: Vec<(Vec<f64>, f64)> = vec![(x.to_vec(), 1.0)];
    for (axis, &k) in gamma.iter().enumerate() {
        for _ in 0..k {
            stencil = stencil
                .into_iter()
                .flat_map(|(p, w)| {
                    let mut a = p.clone();
                    let mut b = p;
                    a[axis] += h / 2.0;
                    b[axis] -= h / 2.0;
                    [(a, w / h), (b, -w / h)]
                })
                .collect();
        }
    }
    stencil.iter().map(|(p, w)| w * f(p)).sum()
}

pub const FD_STEP: f64 = 1e-2;
pub const FD_RELATIVE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct VerificationRow {
    pub pair: usize,
    pub n: usize,
    pub m: usize,
    pub gamma: Vec<usize>,
    pub expansion: f64,
    pub finite_difference: f64,
    pub relative_error: f64,
    pub passed: bool,
}

/// Expansion against finite differences for every `1 <= |gamma| <= 4` over the fixed suite.
pub fn verification_rows() -> Vec<VerificationRow> {
    let mut rows = Vec::new();
    for (pair, (n, m, f, g)) in suite().into_iter().enumerate() {
        let x0: Vec<f64> = (0..n).map(|i| 0.3 - 0.2 * i as f64).collect();
        let sp = JetSpace::get(n);
        let fj = f(&x0.iter().enumerate().map(|(i, &v)| Jet::variable(&sp, i, v)).collect::<Vec<_>>());
        let y0: Vec<f64> = fj.iter().map(Jet::value).collect();
        let sy = JetSpace::get(m);
        let gj = g(&y0.iter().enumerate().map(|(i, &v)| Jet::variable(&sy, i, v)).collect::<Vec<_>>());
        let comp = |x: &[f64]| eval_f64(&*f, &*g, x);
        for order in 1..=JET_ORDER {
            for gamma in crate::spaces::multi_indices_of_order(n, order) {
                let e = enumerate_terms(&MultiIndex(gamma.clone()), n, m).expect("valid gamma");
                let ours = evaluate(&e, &|j, b| Some(fj[j].derivative(b)), &|a| Some(gj.derivative(a))).expect("jets supply all orders");
                let h = FD_STEP;
                // Two Richardson levels over h, 2h, 4h remove the h^2 and h^4 terms.
                let d: Vec<f64> = [h, 2.0 * h, 4.0 * h].iter().map(|&s| central_difference(&comp, &x0, &gamma, s)).collect();
                let r1 = (4.0 * d[0] - d[1]) / 3.0;
                let r2 = (4.0 * d[1] - d[2]) / 3.0;
                let fd = (16.0 * r1 - r2) / 15.0;
                let relative_error = (fd - ours).abs() / ours.abs().max(1.0);
                rows.push(VerificationRow {
                    pair,
                    n,
                    m,
                    gamma,
                    expansion: ours,
                    finite_difference: fd,
                    relative_error,
                    passed: relative_error <= FD_RELATIVE_TOLERANCE,
                });
            }
        }
    }
    rows
}
