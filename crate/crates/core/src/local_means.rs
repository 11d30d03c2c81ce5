//! Local means `k_j * f`, Peetre-Fefferman-Stein maximal functions and the experiments
//! comparing them with the Littlewood-Paley quasi-norm.
//!
//! The base kernel is the tensor bump `k^0(x) = prod_i g(x_i)` with
//! `g(t) = phi(t / rho) / (rho int phi)`, `phi(t) = exp(-1 / (1 - t^2))` and
//! `rho = radius / sqrt(n)`, so `supp k^0` is a cube inside the ball of the given radius.
//! `k = Delta^N k^0 = sum_{|beta| = N} N!/beta! prod_i g^{(2 beta_i)}(x_i)` is evaluated from
//! closed-form derivatives, which keeps its support exact. Fourier transforms, moments and
//! Tauberian constants are computed on the continuum kernel by 1-D quadrature.

use rayon::prelude::*;
use serde::Serialize;

use crate::anisotropy::AnisotropyVector;
use crate::error::{Error, Result};
use crate::grid::{GridFunction, GridSpec, SpectralFunction};
use crate::littlewood_paley::DecompositionSystem;
use crate::mixed_norms::{lp_vec_norm_values, lq_aggregate};
use crate::multipliers::corona_samples;
use crate::numeric::{compensated_sum, RatioStats};
use crate::spaces::SpaceParams;

/// Trapezoidal nodes on `[-rho, rho]`; exponentially accurate for the flat bump.
const QUADRATURE_INTERVALS: usize = 2048;
pub const MOMENT_TOLERANCE: f64 = 1e-8;
pub const SPECTRAL_IDENTITY_TOLERANCE: f64 = 1e-10;
/// Samples at or below this are outside the numerical support.
pub const SUPPORT_FLOOR: f64 = 1e-14;
const MAX_LEVELS: usize = 200;

/// Integer coefficients of `P_m` with `phi^{(m)}(t) = P_m(t) phi(t) / (1 - t^2)^{2m}`.
fn derivative_polynomials(max_order: usize) -> Vec<Vec<f64>> {
    let mut polys = vec![vec![1.0]];
    for m in 0..max_order {
        let p = &polys[m];
        let deg = p.len() + 3;
        let mut next = vec![0.0; deg];
        // P' (1 - t^2)^2 = P' (1 - 2t^2 + t^4)
        for (k, &c) in p.iter().enumerate().skip(1) {
            let d = c * k as f64;
            next[k - 1] += d;
            next[k + 1] -= 2.0 * d;
            next[k + 3] += d;
        }
        // 4 m t P (1 - t^2) - 2 t P
        for (k, &c) in p.iter().enumerate() {
            next[k + 1] += (4.0 * m as f64 - 2.0) * c;
            next[k + 3] -= 4.0 * m as f64 * c;
        }
        while next.len() > 1 && *next.last().unwrap() == 0.0 {
            next.pop();
        }
        polys.push(next);
    }
    polys
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// Even `P_m(t)` rewritten in `s = 1 - t^2`; conditioning is far better near `|t| = 1`,
/// where `phi^{(m)}` peaks.
fn s_basis(p: &[f64]) -> Vec<f64> {
    let even: Vec<f64> = p.iter().step_by(2).copied().collect();
    let mut out = vec![0.0; even.len()];
    for (k, &c) in even.iter().enumerate() {
        // (1 - s)^k
        let mut binom = 1.0;
        for i in 0..=k {
            out[i] += if i % 2 == 0 { c * binom } else { -c * binom };
            binom = binom * (k - i) as f64 / (i + 1) as f64;
        }
    }
    out
}

/// Double-double value `hi + lo`.
#[derive(Clone, Copy)]
struct Dd(f64, f64);

fn two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    let bb = s - a;
    Dd(s, (a - (s - bb)) + (b - bb))
}

impl Dd {
    fn add(self, o: Dd) -> Dd {
        let s = two_sum(self.0, o.0);
        let lo = s.1 + self.1 + o.1;
        let hi = s.0 + lo;
        Dd(hi, lo - (hi - s.0))
    }

    fn mul(self, o: Dd) -> Dd {
        let p = self.0 * o.0;
        let e = self.0.mul_add(o.0, -p) + (self.0 * o.1 + self.1 * o.0);
        let hi = p + e;
        Dd(hi, e - (hi - p))
    }

    fn recip(self) -> Dd {
        let q = 1.0 / self.0;
        let r = (-q).mul_add(self.0, 1.0) - q * self.1;
        Dd(q, r / self.0)
    }
}

/// `phi^{(m)}(t)` on `(-1, 1)`, zero elsewhere. Even orders use the `s` basis in
/// double-double arithmetic, so the samples are accurate to a few ulps and exactly even.
fn bump_derivative(polys: &[Vec<f64>], m: usize, t: f64) -> f64 {
    let t = t.abs().min(1.0).copysign(t);
    if t.abs() >= 1.0 {
        return 0.0;
    }
    if m % 2 == 1 {
        let s = (1.0 - t) * (1.0 + t);
        return horner(&polys[m], t) * (-1.0 / s).exp() / s.powi(2 * m as i32);
    }
    let (u, v) = (1.0 - t.abs(), 1.0 + t.abs());
    let p = u * v;
    let s = Dd(p, u.mul_add(v, -p));
    let coeffs = s_basis(&polys[m]);
    let poly = coeffs.iter().rev().fold(Dd(0.0, 0.0), |acc, &c| acc.mul(s).add(Dd(c, 0.0)));
    let inv = s.recip();
    let mut scale = Dd(1.0, 0.0);
    for _ in 0..2 * m {
        scale = scale.mul(inv);
    }
    let value = poly.mul(scale);
    (value.0 + value.1) * (-inv.0).exp() * (1.0 - inv.1)
}

/// The normalised 1-D profile `g` with derivatives up to order `2N`.
#[derive(Debug, Clone)]
pub struct BumpProfile1d {
    rho: f64,
    integral: f64,
    polys: Vec<Vec<f64>>,
    nodes: Vec<f64>,
    /// `values[m][i] = g^{(m)}(nodes[i]) * weight`.
    weighted: Vec<Vec<f64>>,
}

impl BumpProfile1d {
    pub fn new(rho: f64, max_order: usize) -> Self {
        let polys = derivative_polynomials(max_order);
        let m = QUADRATURE_INTERVALS;
        let unit_nodes: Vec<f64> = (1..m).map(|i| -1.0 + 2.0 * i as f64 / m as f64).collect();
        let integral =
            compensated_sum(unit_nodes.iter().map(|&t| bump_derivative(&polys, 0, t))) * 2.0 / m as f64;
        let w = 2.0 * rho / m as f64;
        let scale = |k: usize| rho.powi(k as i32 + 1) * integral;
        let weighted = (0..=max_order)
            .map(|k| unit_nodes.iter().map(|&t| bump_derivative(&polys, k, t) / scale(k) * w).collect())
            .collect();
        let me = Self { rho, integral, polys, nodes: unit_nodes.iter().map(|t| t * rho).collect(), weighted };
        me
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// `int_{-1}^{1} exp(-1 / (1 - t^2)) dt`.
    pub fn bump_integral(&self) -> f64 {
        self.integral
    }

    /// `g^{(m)}(t) = phi^{(m)}(t / rho) / (rho^{m+1} int phi)`.
    pub fn eval(&self, m: usize, t: f64) -> f64 {
        bump_derivative(&self.polys, m, t / self.rho) / (self.rho.powi(m as i32 + 1) * self.integral)
    }

    /// `int g^{(m)}(t) e^{-i w t} dt` for even `m` (real since the integrand is even).
    pub fn fourier(&self, m: usize, w: f64) -> f64 {
        compensated_sum(self.nodes.iter().zip(&self.weighted[m]).map(|(&t, &v)| v * (w * t).cos()))
    }

    /// `int t^a g^{(m)}(t) dt`.
    pub fn moment(&self, a: usize, m: usize) -> f64 {
        compensated_sum(self.nodes.iter().zip(&self.weighted[m]).map(|(&t, &v)| v * t.powi(a as i32)))
    }
}

/// Multi-indices `beta` with `|beta| = N` and their multinomial weights `N!/beta!`.
fn laplacian_terms(n: usize, order: usize) -> Vec<(Vec<usize>, f64)> {
    crate::spaces::multi_indices_of_order(n, order)
        .into_iter()
        .map(|b| {
            let fact = |k: usize| (1..=k).map(|v| v as f64).product::<f64>();
            let w = fact(order) / b.iter().map(|&k| fact(k)).product::<f64>();
            (b, w)
        })
        .collect()
}

/// Certified Tauberian pair: `|k0^| >= delta` on `|xi|_a < 2 eps` and `|k^| >= delta` on
/// `eps/2 < |xi|_a < 2 eps`, both on a deterministic sample.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Tauberian {
    pub epsilon: f64,
    pub delta: f64,
}

/// Local-means kernels with certificates.
#[derive(Debug, Clone)]
pub struct KernelPair {
    pub dim: usize,
    pub laplacian_power: usize,
    pub radius: f64,
    pub support_radius: f64,
    pub moment_order: usize,
    pub profile: BumpProfile1d,
    /// Samples on the certification grid, centred at the origin.
    pub k0: GridFunction,
    pub k: GridFunction,
    pub max_moment_residual: f64,
    pub spectral_identity_residual: f64,
    pub tauberian: Tauberian,
    terms: Vec<(Vec<usize>, f64)>,
}

impl KernelPair {
    /// Continuum `k0^(xi) = k^0^(xi)`.
    pub fn k0_hat(&self, xi: &[f64]) -> f64 {
        xi.iter().map(|&w| self.profile.fourier(0, w)).product()
    }

    /// Continuum `k^(xi)` from the transforms of the derivative factors.
    pub fn k_hat(&self, xi: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(b, w)| w * b.iter().zip(xi).map(|(&bi, &x)| self.profile.fourier(2 * bi, x)).product::<f64>())
            .sum()
    }

    /// Value of `k` at a point.
    pub fn k_at(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(b, w)| w * b.iter().zip(x).map(|(&bi, &t)| self.profile.eval(2 * bi, t)).product::<f64>())
            .sum()
    }

    pub fn k0_at(&self, x: &[f64]) -> f64 {
        x.iter().map(|&t| self.profile.eval(0, t)).product()
    }

    /// `int x^alpha k(x) dx`.
    pub fn moment(&self, alpha: &[usize]) -> f64 {
        self.terms
            .iter()
            .map(|(b, w)| w * b.iter().zip(alpha).map(|(&bi, &ai)| self.profile.moment(ai, 2 * bi)).product::<f64>())
            .sum()
    }

    pub fn k0_integral(&self) -> f64 {
        self.profile.moment(0, 0).powi(self.dim as i32)
    }
}

/// Default certification grid: `[-2, 2)^n` with 64 points per axis.
pub fn certification_grid(dim: usize) -> GridSpec {
    GridSpec::uniform(dim, 64, 4.0).expect("valid grid")
}

pub fn build_kernels(dim: usize, laplacian_power: usize, radius: f64) -> Result<KernelPair> {
    build_kernels_on(laplacian_power, radius, &certification_grid(dim))
}

/// Builds and certifies the kernels, sampling them on `spec` (origin at index 0).
pub fn build_kernels_on(laplacian_power: usize, radius: f64, spec: &GridSpec) -> Result<KernelPair> {
    let dim = spec.dim();
    if laplacian_power == 0 {
        return Err(Error::Domain("the Laplacian power N must be at least 1".into()));
    }
    if !(radius > 0.0 && radius <= 1.0) {
        return Err(Error::Domain(format!("kernel radius must lie in (0, 1], got {radius}")));
    }
    let rho = radius / (dim as f64).sqrt();
    for j in 0..dim {
        let across = 2.0 * rho / spec.spacing(j);
        if across < 16.0 {
            return Err(Error::Configuration(format!(
                "resolution too low: {across:.1} samples across the kernel support on axis {} (need 16)",
                j + 1
            )));
        }
        if 2.0 * radius >= spec.box_lengths()[j] {
            return Err(Error::Configuration("certification box must exceed the kernel diameter".into()));
        }
    }
    let profile = BumpProfile1d::new(rho, 2 * laplacian_power);
    let terms = laplacian_terms(dim, laplacian_power);
    let mut kp = KernelPair {
        dim,
        laplacian_power,
        radius,
        support_radius: radius,
        moment_order: 2 * laplacian_power - 1,
        profile,
        k0: GridFunction::zeros(spec.clone()),
        k: GridFunction::zeros(spec.clone()),
        max_moment_residual: 0.0,
        spectral_identity_residual: 0.0,
        tauberian: Tauberian { epsilon: 0.0, delta: 0.0 },
        terms,
    };
    let centred = |spec: &GridSpec, flat: usize| {
        let mut idx = vec![0; spec.dim()];
        spec.unravel(flat, &mut idx);
        idx.iter().enumerate().map(|(j, &i)| spec.centered_coordinate(j, i)).collect::<Vec<f64>>()
    };
    let k0: Vec<f64> = (0..spec.len()).map(|f| kp.k0_at(&centred(spec, f))).collect();
    let k: Vec<f64> = (0..spec.len()).map(|f| kp.k_at(&centred(spec, f))).collect();
    kp.k0 = GridFunction::from_real(spec.clone(), &k0)?;
    kp.k = GridFunction::from_real(spec.clone(), &k)?;

    // Support: samples outside the radius must vanish.
    for flat in 0..spec.len() {
        let x = centred(spec, flat);
        if x.iter().map(|v| v * v).sum::<f64>().sqrt() > radius && (k0[flat].abs() > SUPPORT_FLOOR || k[flat].abs() > SUPPORT_FLOOR) {
            return Err(Error::Precondition(format!("kernel sample nonzero outside radius {radius} at {x:?}")));
        }
    }

    if kp.k0_integral().abs() < 1e-3 {
        return Err(Error::Precondition("kernel integral vanishes".into()));
    }

    let mut worst: f64 = 0.0;
    for order in 0..=kp.moment_order {
        for alpha in crate::spaces::multi_indices_of_order(dim, order) {
            worst = worst.max(kp.moment(&alpha).abs());
        }
    }
    kp.max_moment_residual = worst;
    if worst > MOMENT_TOLERANCE {
        return Err(Error::Precondition(format!(
            "moment residual {worst:.3e} exceeds {MOMENT_TOLERANCE:e} for |alpha| <= {}",
            kp.moment_order
        )));
    }

    kp.spectral_identity_residual = spectral_identity_residual(&kp, spec, 100);
    if kp.spectral_identity_residual > SPECTRAL_IDENTITY_TOLERANCE {
        return Err(Error::Precondition(format!(
            "spectral identity residual {:.3e} exceeds {SPECTRAL_IDENTITY_TOLERANCE:e}",
            kp.spectral_identity_residual
        )));
    }

    kp.tauberian = certify_tauberian(&kp, &AnisotropyVector::isotropic(dim))?;
    Ok(kp)
}

/// `max |k^ - (-|xi|^2)^N k0^| / max |(-|xi|^2)^N k0^|` over `count` lattice frequencies
/// (every `len/count`-th one in storage order). Pointwise relative errors are meaningless where
/// `k^` is tiny compared with `||k||_1`, so the gap is measured against the sup.
pub fn spectral_identity_residual(kp: &KernelPair, spec: &GridSpec, count: usize) -> f64 {
    let step = (spec.len() / count).max(1);
    let (mut gap, mut scale) = (0.0f64, 0.0f64);
    for flat in (0..spec.len()).step_by(step).take(count) {
        let xi = spec.frequency_point(flat);
        let r2: f64 = xi.iter().map(|v| v * v).sum();
        let rhs = (-r2).powi(kp.laplacian_power as i32) * kp.k0_hat(&xi);
        gap = gap.max((kp.k_hat(&xi) - rhs).abs());
        scale = scale.max(rhs.abs());
    }
    gap / scale
}

/// Searches `eps in {1, 1/2, 1/4, ...}` for the largest one with a positive sampled floor.
pub fn certify_tauberian(kp: &KernelPair, a: &AnisotropyVector) -> Result<Tauberian> {
    let dirs = corona_samples(a, 1, 200, 0x7a0b);
    let mut eps = 1.0;
    for _ in 0..8 {
        let mut ball = kp.k0_hat(&vec![0.0; a.dim()]).abs();
        let mut corona = f64::INFINITY;
        for i in 0..40 {
            let r = 2.0 * eps * (i as f64 + 0.5) / 40.0;
            for d in dirs.iter().chain(axis_directions(a).iter()) {
                // d lies on the sphere |.|_a = 1/4; rescale to radius r.
                let xi = a.dilate(4.0 * r, d).expect("finite");
                ball = ball.min(kp.k0_hat(&xi).abs());
                if r > eps / 2.0 {
                    corona = corona.min(kp.k_hat(&xi).abs());
                }
            }
        }
        let delta = ball.min(corona);
        if delta > 1e-6 {
            return Ok(Tauberian { epsilon: eps, delta });
        }
        eps /= 2.0;
    }
    Err(Error::Precondition("no Tauberian pair found for the kernels".into()))
}

fn axis_directions(a: &AnisotropyVector) -> Vec<Vec<f64>> {
    (0..a.dim())
        .flat_map(|j| {
            [1.0, -1.0].into_iter().map(move |s| {
                let mut v = vec![0.0; a.dim()];
                v[j] = s * 0.25f64.powf(a.weights()[j]);
                v
            })
        })
        .collect()
}

/// Kernel symbols tabulated on a lattice for a fixed anisotropy and smoothness.
#[derive(Debug, Clone)]
pub struct LocalMeansSystem {
    kernels: KernelPair,
    partition: DecompositionSystem,
    s: f64,
    /// `symbols[0] = k0^`, `symbols[j] = k^(2^{-ja} xi)`.
    symbols: Vec<Vec<f64>>,
}

impl LocalMeansSystem {
    /// Tabulates `k0^` and `k^(2^{-ja} .)` for `j = 1, 2, ...` until `2^{js} |k^(2^{-ja} xi)|`
    /// is negligible on the lattice (at most 200 levels).
    pub fn new(kernels: &KernelPair, partition: &DecompositionSystem, s: f64) -> Result<Self> {
        let spec = partition.spec();
        let a = partition.anisotropy();
        if kernels.dim != spec.dim() {
            return Err(Error::Usage("kernel and grid dimensions differ".into()));
        }
        let n_pow = kernels.laplacian_power;
        let freqs = spec.axis_frequencies();
        // k^(eta) = (-|eta|^2)^N prod g^(eta_i), certified at construction; the factored form
        // keeps the decay near eta = 0 that direct quadrature of k loses to rounding.
        let level = |j: usize| -> Vec<f64> {
            let tables: Vec<Vec<(f64, f64)>> = freqs
                .iter()
                .enumerate()
                .map(|(i, f)| {
                    let sc = 2f64.powf(-(j as f64) * a.weights()[i]);
                    f.iter().map(|&w| (sc * w, kernels.profile.fourier(0, sc * w))).collect()
                })
                .collect();
            let mut idx = vec![0usize; spec.dim()];
            (0..spec.len())
                .map(|flat| {
                    spec.unravel(flat, &mut idx);
                    let (mut r2, mut v) = (0.0, 1.0);
                    for (i, &k) in idx.iter().enumerate() {
                        let (eta, g) = tables[i][k];
                        r2 += eta * eta;
                        v *= g;
                    }
                    if j == 0 {
                        v
                    } else {
                        (-r2).powi(n_pow as i32) * v
                    }
                })
                .collect()
        };
        let mut symbols = vec![level(0)];
        let mut peak: f64 = 0.0;
        for j in 1..MAX_LEVELS {
            let sym = level(j);
            let sup = sym.iter().fold(0.0f64, |m, v| m.max(v.abs())) * 2f64.powf(j as f64 * s);
            peak = peak.max(sup);
            symbols.push(sym);
            if j > partition.max_level() && sup <= 1e-17 * peak {
                break;
            }
        }
        Ok(Self { kernels: kernels.clone(), partition: partition.clone(), s, symbols })
    }

    pub fn kernels(&self) -> &KernelPair {
        &self.kernels
    }

    pub fn partition(&self) -> &DecompositionSystem {
        &self.partition
    }

    pub fn levels(&self) -> usize {
        self.symbols.len()
    }

    pub fn smoothness(&self) -> f64 {
        self.s
    }

    pub fn symbol(&self, j: usize) -> &[f64] {
        &self.symbols[j]
    }

    /// `k_j * u` for every tabulated level (`k_0 * u` first).
    pub fn convolutions(&self, u: &SpectralFunction) -> Vec<GridFunction> {
        self.symbols.par_iter().map(|s| u.multiplied_real(s).to_grid()).collect()
    }

    fn check(&self, u: &SpectralFunction, params: &SpaceParams) -> Result<()> {
        if u.spec() != self.partition.spec() {
            return Err(Error::Usage("function and kernel system live on different grids".into()));
        }
        if &params.a != self.partition.anisotropy() {
            return Err(Error::Usage("kernel system was built for a different anisotropy".into()));
        }
        if (params.s - self.s).abs() > 0.0 {
            return Err(Error::Usage("kernel system was built for a different smoothness".into()));
        }
        let bound = 2.0 * self.kernels.laplacian_power as f64 * params.a.min();
        if params.s >= bound {
            return Err(Error::Precondition(format!(
                "local means need s < 2 N min(a) = {bound}, got s = {}",
                params.s
            )));
        }
        if !params.pq.all_finite() {
            return Err(Error::Domain("local means characterise F for finite p only".into()));
        }
        self.partition.certify_tail(u)?;
        Ok(())
    }
}

/// `|| k_0 * u | L_p || + || {2^{sj} k_j * u}_{j>=1} | L_p(l_q) ||`.
pub fn local_means_norm(u: &SpectralFunction, params: &SpaceParams, lms: &LocalMeansSystem) -> Result<f64> {
    lms.check(u, params)?;
    let conv = lms.convolutions(u);
    let spec = u.spec();
    let mags: Vec<Vec<f64>> = conv.iter().map(GridFunction::magnitudes).collect();
    let first = lp_vec_norm_values(spec, &mags[0], params.pq.p());
    let weights: Vec<f64> = (1..mags.len()).map(|j| 2f64.powf(j as f64 * params.s)).collect();
    let g = lq_aggregate(&mags[1..], &weights, params.pq.q());
    Ok(first + lp_vec_norm_values(spec, &g, params.pq.p()))
}

/// Peetre exponents `r_l`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaximalParams {
    pub r: Vec<f64>,
}

impl MaximalParams {
    pub fn new(r: Vec<f64>) -> Result<Self> {
        if r.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Domain("Peetre exponents must be positive and finite".into()));
        }
        Ok(Self { r })
    }

    /// `r_l = 2 / min(q, p_1..p_n)`, which satisfies `1/r_l < min(q, p)`.
    pub fn default_for(params: &SpaceParams) -> Self {
        let m = params.pq.min_exponent();
        Self { r: vec![2.0 / m; params.a.dim()] }
    }

    pub fn check_inverse_condition(&self, params: &SpaceParams) -> Result<()> {
        let m = params.pq.min_exponent();
        if let Some(r) = self.r.iter().find(|&&r| 1.0 / r >= m) {
            return Err(Error::Precondition(format!(
                "maximal inequality needs 1/r_l < min(q, p_1..p_n) = {m}, got r_l = {r}"
            )));
        }
        Ok(())
    }
}

/// `x -> max_y v(y) / prod_l (1 + 2^{j a_l} |x_l - y_l|)^{r_l}` over lattice `y`, with periodic
/// distances. The weight is a product, so the maximum is taken one axis at a time.
pub fn peetre_maximal_values(spec: &GridSpec, values: &[f64], j: usize, a: &AnisotropyVector, r: &[f64]) -> Vec<f64> {
    let mut cur = values.to_vec();
    let mut stride = 1;
    for axis in 0..spec.dim() {
        let n = spec.points()[axis];
        let scale = 2f64.powf(j as f64 * a.weights()[axis]);
        let weights: Vec<f64> = (0..n)
            .map(|d| (1.0 + scale * spec.periodic_distance(axis, 0, d)).powf(-r[axis]))
            .collect();
        let block = stride * n;
        let src = cur.clone();
        cur.par_chunks_mut(block).enumerate().for_each(|(b, out)| {
            let base = &src[b * block..(b + 1) * block];
            let mut line = vec![0.0; n];
            for inner in 0..stride {
                for (k, v) in line.iter_mut().enumerate() {
                    *v = base[inner + k * stride];
                }
                for x in 0..n {
                    let mut m: f64 = 0.0;
                    for (y, &v) in line.iter().enumerate() {
                        let d = if x >= y { x - y } else { y - x };
                        m = m.max(v * weights[d]);
                    }
                    out[inner + x * stride] = m;
                }
            }
        });
        stride = block;
    }
    cur
}

/// `psi_j^* u` for a block symbol `psi_j^` given on the lattice.
pub fn peetre_maximal(
    u: &SpectralFunction,
    j: usize,
    symbol: &[f64],
    mp: &MaximalParams,
    a: &AnisotropyVector,
) -> Result<GridFunction> {
    if symbol.len() != u.spec().len() || mp.r.len() != u.spec().dim() || a.dim() != u.spec().dim() {
        return Err(Error::Usage("symbol, exponents and grid disagree in size".into()));
    }
    let block = u.multiplied_real(symbol).to_grid();
    let m = peetre_maximal_values(u.spec(), &block.magnitudes(), j, a, &mp.r);
    GridFunction::from_real(u.spec().clone(), &m)
}

/// Small dense matrix helpers for the finite parameter family.
pub type Matrix = Vec<Vec<f64>>;

pub fn determinant(m: &Matrix) -> f64 {
    let n = m.len();
    let mut a = m.clone();
    let mut det = 1.0;
    for c in 0..n {
        let p = (c..n).max_by(|&i, &k| a[i][c].abs().total_cmp(&a[k][c].abs())).unwrap();
        if a[p][c] == 0.0 {
            return 0.0;
        }
        if p != c {
            a.swap(p, c);
            det = -det;
        }
        det *= a[c][c];
        for i in c + 1..n {
            let f = a[i][c] / a[c][c];
            for k in c..n {
                a[i][k] -= f * a[c][k];
            }
        }
    }
    det
}

pub fn inverse(m: &Matrix) -> Result<Matrix> {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|k| if k == i { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &k| a[i][c].abs().total_cmp(&a[k][c].abs())).unwrap();
        if a[p][c].abs() < 1e-300 {
            return Err(Error::Domain("singular matrix".into()));
        }
        a.swap(p, c);
        let piv = a[c][c];
        for v in a[c].iter_mut() {
            *v /= piv;
        }
        for i in 0..n {
            if i != c {
                let f = a[i][c];
                if f != 0.0 {
                    for k in 0..2 * n {
                        a[i][k] -= f * a[c][k];
                    }
                }
            }
        }
    }
    Ok(a.into_iter().map(|r| r[n..].to_vec()).collect())
}

/// Eight deterministic `(n-1) x (n-1)` matrices with `|det| >= 1/2` and entries in `[-2, 2]`.
pub fn theta_family(m: usize) -> Vec<Matrix> {
    if m == 0 {
        return vec![Vec::new()];
    }
    let eye = |s: f64| -> Matrix { (0..m).map(|i| (0..m).map(|k| if i == k { s } else { 0.0 }).collect()).collect() };
    if m == 1 {
        return [1.0, -1.0, 0.5, -0.5, 2.0, -2.0, 0.75, 1.5].iter().map(|&v| vec![vec![v]]).collect();
    }
    let rot = |t: f64| {
        let mut r = eye(1.0);
        r[0][0] = t.cos();
        r[0][1] = -t.sin();
        r[1][0] = t.sin();
        r[1][1] = t.cos();
        r
    };
    let mut shear_up = eye(1.0);
    shear_up[0][1] = 1.0;
    let mut shear_down = eye(1.0);
    shear_down[1][0] = -1.0;
    let mut stretch = eye(1.0);
    stretch[0][0] = 2.0;
    let mut squeeze = eye(1.0);
    squeeze[0][0] = 0.5;
    vec![
        eye(1.0),
        eye(-1.0),
        rot(std::f64::consts::FRAC_PI_4),
        rot(std::f64::consts::FRAC_PI_2),
        shear_up,
        shear_down,
        stretch,
        squeeze,
    ]
}

/// Symbol of `psi_{theta,j}` where `psi_theta(y) = psi(A y', y_n)` and `psi` is the
/// Littlewood-Paley generator: `|det A|^{-1} Phi((A^{-T} eta', eta_n))`, `eta = 2^{-ja} xi`.
pub fn transformed_partition_symbol(sys: &DecompositionSystem, matrix: &Matrix, j: usize) -> Result<Vec<f64>> {
    let spec = sys.spec();
    let a = sys.anisotropy();
    let n = spec.dim();
    let inv_t: Matrix = {
        let inv = inverse(matrix)?;
        (0..inv.len()).map(|i| (0..inv.len()).map(|k| inv[k][i]).collect()).collect()
    };
    let jac = determinant(matrix).abs();
    let profile = *sys.profile();
    let mut out = Vec::with_capacity(spec.len());
    let mut eta = vec![0.0; n];
    spec.for_each_frequency(|_, xi| {
        let scaled: Vec<f64> = xi.iter().zip(a.weights()).map(|(x, w)| x * 2f64.powf(-(j as f64) * w)).collect();
        for i in 0..n - 1 {
            eta[i] = (0..n - 1).map(|k| inv_t[i][k] * scaled[k]).sum();
        }
        eta[n - 1] = scaled[n - 1];
        let r = a.distance_unchecked(&eta);
        let v = if j == 0 { profile.eval(r) } else { profile.eval(r) - profile.eval(2.0 * r) };
        out.push(v / jac);
    });
    Ok(out)
}

fn mixed_lq(spec: &GridSpec, levels: &[Vec<f64>], s: f64, params: &SpaceParams) -> f64 {
    let weights: Vec<f64> = (0..levels.len()).map(|j| 2f64.powf(j as f64 * s)).collect();
    let g = lq_aggregate(levels, &weights, params.pq.q());
    lp_vec_norm_values(spec, &g, params.pq.p())
}

/// Per-function sides of the two maximal inequalities.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MaximalSides {
    /// `|| {2^{sj} sup_theta psi_{theta,j}^* f} ||`
    pub theta_maximal: f64,
    /// `|| {2^{sj} k_j^* f} ||`
    pub kernel_maximal: f64,
    /// `|| {2^{sj} k_j * f} ||`
    pub kernel_convolution: f64,
    /// Smallest `k_j^* f - |k_j * f|` over all lattice points and levels.
    pub domination_margin: f64,
}

/// Ratio bands of the two maximal inequalities.
#[derive(Debug, Clone, Serialize)]
pub struct MaximalReport {
    /// `theta_maximal / kernel_maximal`.
    pub theta_vs_kernel: RatioStats,
    /// `kernel_maximal / kernel_convolution`.
    pub maximal_vs_convolution: RatioStats,
    pub sides: Vec<MaximalSides>,
    pub domination_holds: bool,
}

pub fn maximal_sides(
    u: &SpectralFunction,
    params: &SpaceParams,
    mp: &MaximalParams,
    lms: &LocalMeansSystem,
    thetas: &[Matrix],
) -> Result<MaximalSides> {
    let sys = lms.partition();
    let spec = u.spec();
    let a = &params.a;
    lms.check(u, params)?;
    // Left side of the parameter-dependent inequality: levels until the symbols vanish.
    let mut theta_levels = Vec::new();
    for j in 0.. {
        let mut best = vec![0.0; spec.len()];
        let mut any = false;
        for m in thetas {
            let sym = transformed_partition_symbol(sys, m, j)?;
            if sym.iter().any(|v| v.abs() > 0.0) {
                any = true;
                let block = u.multiplied_real(&sym).to_grid();
                let pm = peetre_maximal_values(spec, &block.magnitudes(), j, a, &mp.r);
                for (b, v) in best.iter_mut().zip(pm) {
                    *b = f64::max(*b, v);
                }
            }
        }
        if !any && j > sys.max_level() {
            break;
        }
        theta_levels.push(best);
        if j > MAX_LEVELS {
            break;
        }
    }
    let conv = lms.convolutions(u);
    let mags: Vec<Vec<f64>> = conv.iter().map(GridFunction::magnitudes).collect();
    let maxes: Vec<Vec<f64>> = mags
        .par_iter()
        .enumerate()
        .map(|(j, m)| peetre_maximal_values(spec, m, j, a, &mp.r))
        .collect();
    let margin = mags
        .iter()
        .zip(&maxes)
        .flat_map(|(m, x)| m.iter().zip(x).map(|(a, b)| b - a))
        .fold(f64::INFINITY, f64::min);
    Ok(MaximalSides {
        theta_maximal: mixed_lq(spec, &theta_levels, params.s, params),
        kernel_maximal: mixed_lq(spec, &maxes, params.s, params),
        kernel_convolution: mixed_lq(spec, &mags, params.s, params),
        domination_margin: margin,
    })
}

/// Runs both maximal inequalities over a family and reports the ratio bands.
pub fn maximal_inequality_experiment(
    family: &[SpectralFunction],
    params: &SpaceParams,
    mp: &MaximalParams,
    lms: &LocalMeansSystem,
) -> Result<MaximalReport> {
    mp.check_inverse_condition(params)?;
    if mp.r.len() != params.a.dim() {
        return Err(Error::Usage("one Peetre exponent per axis is required".into()));
    }
    let thetas = theta_family(params.a.dim() - 1);
    let sides: Vec<MaximalSides> =
        family.par_iter().map(|u| maximal_sides(u, params, mp, lms, &thetas)).collect::<Result<_>>()?;
    Ok(MaximalReport {
        theta_vs_kernel: RatioStats::from_pairs(sides.iter().map(|s| (s.theta_maximal, s.kernel_maximal))),
        maximal_vs_convolution: RatioStats::from_pairs(sides.iter().map(|s| (s.kernel_maximal, s.kernel_convolution))),
        domination_holds: sides.iter().all(|s| s.domination_margin >= 0.0),
        sides,
    })
}

/// Axis-aligned open box `prod (lo_j, hi_j)` inside the period cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl SubBox {
    /// Distance from `x` to the complement; zero outside.
    pub fn depth(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(&v, (&l, &h))| (v - l).min(h - v))
            .fold(f64::INFINITY, f64::min)
            .max(0.0)
    }
}

fn numerical_support(u: &GridFunction) -> Vec<usize> {
    let floor = SUPPORT_FLOOR * u.max_abs();
    u.samples().iter().enumerate().filter(|(_, z)| z.norm() > floor).map(|(i, _)| i).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct InfimumReport {
    pub base_norm: f64,
    pub gaps: Vec<f64>,
    pub min_gap: f64,
    pub support_margin: f64,
    pub all_strict: bool,
}

/// Checks that every perturbation supported off `U` strictly increases the local-means norm
/// of `f`, whose support keeps a margin `> 2r` from the complement of `U`.
pub fn attained_infimum_experiment(
    f: &GridFunction,
    u_box: &SubBox,
    perturbations: &[GridFunction],
    params: &SpaceParams,
    lms: &LocalMeansSystem,
) -> Result<InfimumReport> {
    let spec = f.spec();
    let r = lms.kernels().support_radius;
    let margin = numerical_support(f)
        .into_iter()
        .map(|flat| u_box.depth(&spec.point(flat)))
        .fold(f64::INFINITY, f64::min);
    if margin <= 2.0 * r {
        return Err(Error::Precondition(format!(
            "support of f must keep distance > 2r = {} from the complement of U, got {margin}",
            2.0 * r
        )));
    }
    for (i, g) in perturbations.iter().enumerate() {
        if g.spec() != spec {
            return Err(Error::Usage("perturbation lives on a different grid".into()));
        }
        if g.max_abs() == 0.0 {
            return Err(Error::Precondition(format!("perturbation {i} vanishes identically")));
        }
        if numerical_support(g).into_iter().any(|flat| u_box.depth(&spec.point(flat)) > 0.0) {
            return Err(Error::Precondition(format!("perturbation {i} is not supported outside U")));
        }
    }
    let base = local_means_norm(&f.to_spectral(), params, lms)?;
    let gaps: Vec<f64> = perturbations
        .par_iter()
        .map(|g| Ok(local_means_norm(&f.add(g)?.to_spectral(), params, lms)? - base))
        .collect::<Result<_>>()?;
    let min_gap = gaps.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(InfimumReport { base_norm: base, all_strict: gaps.iter().all(|&g| g > 0.0), min_gap, gaps, support_margin: margin })
}

/// Convenience: single-mode symbol values used by closed-form checks.
pub fn symbol_at(sym: &[f64], spec: &GridSpec, k: &[i64]) -> Option<f64> {
    let idx: Option<Vec<usize>> = k.iter().enumerate().map(|(j, &v)| spec.index_of_wavenumber(j, v)).collect();
    idx.map(|i| sym[spec.ravel(&i)])
}
