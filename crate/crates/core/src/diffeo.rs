//! Bounded diffeomorphisms that are the identity outside an interior box, composition
//! `f o sigma` by trigonometric resampling, Jacobian constants, and invariance experiments.

use std::collections::HashMap;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::anisotropy::AnisotropyVector;
use crate::error::{Error, Result};
use crate::family::TestFunction;
use crate::grid::{GridFunction, PartialEvaluator, GridSpec, SpectralFunction};
use crate::jet::{Jet, JetSpace, MapScalar, Unary, JET_ORDER};
use crate::littlewood_paley::{build_partition, DecompositionSystem};
use crate::numeric::RatioStats;
use crate::spaces::{f_norm_spectral, multi_indices_of_order, SpaceParams};

pub const NEWTON_TOLERANCE: f64 = 1e-12;
pub const NEWTON_MAX_ITER: usize = 50;

/// Elementary maps. Every perturbation is `bump(|x - c|^2 / R^2)`-weighted, so the map
/// equals the identity outside a box around `c`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MapKind {
    Identity,
    Translation { shift: Vec<f64> },
    /// `x_target += eps * bump((x_driver - c)^2 / R^2)`; unit triangular Jacobian.
    Shear { target: usize, driver: usize, eps: f64, center: f64, radius: f64 },
    /// Rotation of `(x_i, x_k)` about `c` by `angle * bump(r^2 / R^2)`; area preserving.
    Swirl { axes: (usize, usize), center: (f64, f64), radius: f64, angle: f64 },
    /// `x_i += eps * bump(r^2 / R^2) (x_i - c_i)` on the listed axes.
    Radial { axes: Vec<usize>, center: Vec<f64>, radius: f64, eps: f64 },
    /// `factors[0] o factors[1] o ...`, factor `i` acting on axis group `groups[i]` only.
    Block { groups: Vec<Vec<usize>>, factors: Vec<Diffeomorphism> },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diffeomorphism {
    pub dim: usize,
    pub kind: MapKind,
}

fn bump_weight<T: MapScalar>(r2: &T, radius: f64) -> T {
    r2.scaled(1.0 / (radius * radius)).map(Unary::Bump)
}

impl Diffeomorphism {
    pub fn identity(dim: usize) -> Self {
        Self { dim, kind: MapKind::Identity }
    }

    pub fn translation(shift: Vec<f64>) -> Self {
        Self { dim: shift.len(), kind: MapKind::Translation { shift } }
    }

    pub fn shear(dim: usize, target: usize, driver: usize, eps: f64, center: f64, radius: f64) -> Result<Self> {
        if target >= dim || driver >= dim || target == driver {
            return Err(Error::Domain("shear needs distinct target and driver axes".into()));
        }
        Ok(Self { dim, kind: MapKind::Shear { target, driver, eps, center, radius } })
    }

    pub fn swirl(dim: usize, axes: (usize, usize), center: (f64, f64), radius: f64, angle: f64) -> Result<Self> {
        if axes.0 >= dim || axes.1 >= dim || axes.0 == axes.1 {
            return Err(Error::Domain("swirl needs two distinct axes".into()));
        }
        Ok(Self { dim, kind: MapKind::Swirl { axes, center, radius, angle } })
    }

    pub fn radial(dim: usize, axes: Vec<usize>, center: Vec<f64>, radius: f64, eps: f64) -> Result<Self> {
        if axes.is_empty() || axes.len() != center.len() || axes.iter().any(|&i| i >= dim) {
            return Err(Error::Domain("radial map needs one centre coordinate per axis".into()));
        }
        Ok(Self { dim, kind: MapKind::Radial { axes, center, radius, eps } })
    }

    /// Composite of per-group factors; refuses overlapping groups or factors leaving their group.
    pub fn block(groups: Vec<Vec<usize>>, factors: Vec<Diffeomorphism>) -> Result<Self> {
        let dim = factors.first().map(|f| f.dim).ok_or_else(|| Error::Domain("empty block list".into()))?;
        if groups.len() != factors.len() {
            return Err(Error::Domain("one axis group per factor is required".into()));
        }
        let mut seen = vec![false; dim];
        for g in &groups {
            for &i in g {
                if i >= dim || seen[i] {
                    return Err(Error::Precondition(format!("axis groups must be disjoint and within 1..{dim}")));
                }
                seen[i] = true;
            }
        }
        for (g, f) in groups.iter().zip(&factors) {
            if f.dim != dim {
                return Err(Error::Domain("block factors must share the dimension".into()));
            }
            if f.touched_axes().iter().any(|i| !g.contains(i)) {
                return Err(Error::Precondition(format!("block factor reaches outside its axis group {g:?}")));
            }
        }
        Ok(Self { dim, kind: MapKind::Block { groups, factors } })
    }

    /// Axes that are moved or that drive a movement.
    pub fn touched_axes(&self) -> Vec<usize> {
        let mut v = match &self.kind {
            MapKind::Identity => vec![],
            MapKind::Translation { shift } => (0..shift.len()).filter(|&i| shift[i] != 0.0).collect(),
            MapKind::Shear { target, driver, .. } => vec![*target, *driver],
            MapKind::Swirl { axes, .. } => vec![axes.0, axes.1],
            MapKind::Radial { axes, .. } => axes.clone(),
            MapKind::Block { factors, .. } => factors.iter().flat_map(|f| f.touched_axes()).collect(),
        };
        v.sort_unstable();
        v.dedup();
        v
    }

    /// `sigma(x) = (sigma'(x'), x_n)`.
    pub fn is_structured(&self) -> bool {
        !self.touched_axes().contains(&(self.dim - 1))
    }

    pub fn forward_generic<T: MapScalar>(&self, x: &[T]) -> Vec<T> {
        let mut y = x.to_vec();
        match &self.kind {
            MapKind::Identity => {}
            MapKind::Translation { shift } => {
                for (yi, s) in y.iter_mut().zip(shift) {
                    *yi = yi.plus(&yi.lift(*s));
                }
            }
            MapKind::Shear { target, driver, eps, center, radius } => {
                let d = x[*driver].minus(&x[*driver].lift(*center));
                let w = bump_weight(&d.times(&d), *radius);
                y[*target] = x[*target].plus(&w.scaled(*eps));
            }
            MapKind::Swirl { axes, center, radius, angle } => {
                let d0 = x[axes.0].minus(&x[axes.0].lift(center.0));
                let d1 = x[axes.1].minus(&x[axes.1].lift(center.1));
                let theta = bump_weight(&d0.times(&d0).plus(&d1.times(&d1)), *radius).scaled(*angle);
                let (c, s) = (theta.map(Unary::Cos), theta.map(Unary::Sin));
                y[axes.0] = c.times(&d0).minus(&s.times(&d1)).plus(&d0.lift(center.0));
                y[axes.1] = s.times(&d0).plus(&c.times(&d1)).plus(&d0.lift(center.1));
            }
            MapKind::Radial { axes, center, radius, eps } => {
                let d: Vec<T> = axes.iter().zip(center).map(|(&i, &c)| x[i].minus(&x[i].lift(c))).collect();
                let r2 = d.iter().skip(1).fold(d[0].times(&d[0]), |acc, v| acc.plus(&v.times(v)));
                let w = bump_weight(&r2, *radius).scaled(*eps);
                for (k, &i) in axes.iter().enumerate() {
                    y[i] = x[i].plus(&w.times(&d[k]));
                }
            }
            MapKind::Block { factors, .. } => {
                for f in factors.iter().rev() {
                    y = f.forward_generic(&y);
                }
            }
        }
        y
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_generic(x)
    }

    /// Taylor jets of every component at `x`.
    pub fn jets(&self, x: &[f64]) -> Vec<Jet> {
        let space = JetSpace::get(self.dim);
        let vars: Vec<Jet> = x.iter().enumerate().map(|(i, &v)| Jet::variable(&space, i, v)).collect();
        self.forward_generic(&vars)
    }

    pub fn jacobian(&self, x: &[f64]) -> Vec<Vec<f64>> {
        self.jets(x).iter().map(Jet::gradient).collect()
    }

    /// `sigma^{-1}(y)`: closed form where available, Newton otherwise.
    pub fn inverse(&self, y: &[f64]) -> Result<Vec<f64>> {
        match &self.kind {
            MapKind::Identity => Ok(y.to_vec()),
            MapKind::Translation { shift } => Ok(y.iter().zip(shift).map(|(a, b)| a - b).collect()),
            MapKind::Shear { target, driver, eps, center, radius } => {
                let mut x = y.to_vec();
                let d = y[*driver] - center;
                x[*target] -= eps * bump_weight(&(d * d), *radius);
                Ok(x)
            }
            MapKind::Swirl { axes, center, radius, angle } => {
                let (d0, d1) = (y[axes.0] - center.0, y[axes.1] - center.1);
                let theta = -angle * bump_weight(&(d0 * d0 + d1 * d1), *radius);
                let mut x = y.to_vec();
                x[axes.0] = center.0 + theta.cos() * d0 - theta.sin() * d1;
                x[axes.1] = center.1 + theta.sin() * d0 + theta.cos() * d1;
                Ok(x)
            }
            MapKind::Radial { .. } => self.newton_inverse(y),
            MapKind::Block { factors, .. } => {
                let mut x = y.to_vec();
                for f in factors {
                    x = f.inverse(&x)?;
                }
                Ok(x)
            }
        }
    }

    /// Newton iteration with the analytic Jacobian, started at `y`.
    pub fn newton_inverse(&self, y: &[f64]) -> Result<Vec<f64>> {
        let mut x = y.to_vec();
        for _ in 0..NEWTON_MAX_ITER {
            let jets = self.jets(&x);
            let r: Vec<f64> = jets.iter().zip(y).map(|(j, t)| j.value() - t).collect();
            if r.iter().map(|v| v.abs()).fold(0.0, f64::max) <= NEWTON_TOLERANCE {
                return Ok(x);
            }
            let jac: Vec<Vec<f64>> = jets.iter().map(Jet::gradient).collect();
            let step = solve(jac, r)?;
            for (xi, s) in x.iter_mut().zip(step) {
                *xi -= s;
            }
        }
        let r = self.forward(&x).iter().zip(y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if r <= NEWTON_TOLERANCE {
            Ok(x)
        } else {
            Err(Error::Numerical(format!("Newton inverse did not converge (residual {r:.3e})")))
        }
    }

    pub fn inverse_map(&self) -> InverseMap<'_> {
        InverseMap { sigma: self }
    }

    /// Per-axis interval outside which the map is the identity; `None` means the whole axis.
    pub fn perturbation_support(&self) -> Vec<Option<(f64, f64)>> {
        let mut out = vec![None; self.dim];
        match &self.kind {
            MapKind::Shear { driver, center, radius, .. } => out[*driver] = Some((center - radius, center + radius)),
            MapKind::Swirl { axes, center, radius, .. } => {
                out[axes.0] = Some((center.0 - radius, center.0 + radius));
                out[axes.1] = Some((center.1 - radius, center.1 + radius));
            }
            MapKind::Radial { axes, center, radius, .. } => {
                for (&i, &c) in axes.iter().zip(center) {
                    out[i] = Some((c - radius, c + radius));
                }
            }
            MapKind::Block { factors, .. } => {
                for f in factors {
                    for (o, s) in out.iter_mut().zip(f.perturbation_support()) {
                        if let Some((lo, hi)) = s {
                            *o = Some(o.map_or((lo, hi), |(a, b)| (a.min(lo), b.max(hi))));
                        }
                    }
                }
            }
            MapKind::Identity | MapKind::Translation { .. } => {}
        }
        out
    }

    /// Refuses when a bounded perturbation support comes within `margin` of the box faces.
    pub fn check_margin(&self, spec: &GridSpec, margin: f64) -> Result<()> {
        if spec.dim() != self.dim {
            return Err(Error::Usage("map and grid dimensions differ".into()));
        }
        for (j, s) in self.perturbation_support().into_iter().enumerate() {
            if let Some((lo, hi)) = s {
                let l = spec.box_lengths()[j];
                if lo < margin || hi > l - margin {
                    return Err(Error::Precondition(format!(
                        "perturbation support [{lo}, {hi}] on axis {} must stay {margin} inside [0, {l}]",
                        j + 1
                    )));
                }
            }
        }
        Ok(())
    }

    /// Whole-lattice translation, if this map is one.
    fn lattice_shift(&self, spec: &GridSpec) -> Option<Vec<i64>> {
        match &self.kind {
            MapKind::Identity => Some(vec![0; self.dim]),
            MapKind::Translation { shift } => shift
                .iter()
                .enumerate()
                .map(|(j, &s)| {
                    let k = s / spec.spacing(j);
                    (k == k.round()).then_some(k as i64)
                })
                .collect(),
            _ => None,
        }
    }
}

/// `tau = sigma^{-1}` viewed as a map.
pub struct InverseMap<'a> {
    sigma: &'a Diffeomorphism,
}

fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &k| a[i][c].abs().total_cmp(&a[k][c].abs())).unwrap();
        if a[p][c] == 0.0 {
            return Err(Error::Numerical("singular Jacobian".into()));
        }
        a.swap(p, c);
        b.swap(p, c);
        for i in c + 1..n {
            let f = a[i][c] / a[c][c];
            for k in c..n {
                a[i][k] -= f * a[c][k];
            }
            b[i] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Ok(x)
}

fn determinant(m: &[Vec<f64>]) -> f64 {
    crate::local_means::determinant(&m.to_vec())
}

/// Default margin: two cells on the coarsest axis.
pub fn default_margin(spec: &GridSpec) -> f64 {
    (0..spec.dim()).map(|j| 2.0 * spec.spacing(j)).fold(0.0, f64::max)
}

fn sample_maps(spec: &GridSpec, u: &SpectralFunction, map: impl Fn(&[f64]) -> Result<Vec<f64>> + Sync) -> Result<GridFunction> {
    let base = u.to_grid();
    let images: Vec<Vec<f64>> = (0..spec.len())
        .into_par_iter()
        .map(|flat| map(&spec.point(flat)))
        .collect::<Result<_>>()?;
    let moving: Vec<usize> = (0..spec.dim())
        .filter(|&j| (0..spec.len()).any(|flat| images[flat][j] != spec.point(flat)[j]))
        .collect();
    let eval = PartialEvaluator::new(u, moving);
    let samples: Vec<Complex64> = (0..spec.len())
        .into_par_iter()
        .map_init(
            || (Vec::new(), vec![0; spec.dim()]),
            |(work, idx), flat| {
                let x = spec.point(flat);
                let y = &images[flat];
                if *y == x {
                    base.samples()[flat]
                } else {
                    spec.unravel(flat, idx);
                    eval.eval(spec, idx, y, work)
                }
            },
        )
        .collect();
    GridFunction::new(spec.clone(), samples)
}

/// Samples of `f o sigma` on the lattice of `f`.
pub fn compose(f: &SpectralFunction, sigma: &Diffeomorphism) -> Result<GridFunction> {
    let spec = f.spec();
    sigma.check_margin(spec, default_margin(spec))?;
    if let Some(shift) = sigma.lattice_shift(spec) {
        let neg: Vec<i64> = shift.iter().map(|v| -v).collect();
        return Ok(f.to_grid().shifted(&neg));
    }
    sample_maps(spec, f, |x| Ok(sigma.forward(x)))
}

/// Samples of `f o sigma^{-1}`.
pub fn compose_inverse(f: &SpectralFunction, sigma: &Diffeomorphism) -> Result<GridFunction> {
    let spec = f.spec();
    sigma.check_margin(spec, default_margin(spec))?;
    if let Some(shift) = sigma.lattice_shift(spec) {
        return Ok(f.to_grid().shifted(&shift));
    }
    sample_maps(spec, f, |y| sigma.inverse_map().apply(y))
}

impl InverseMap<'_> {
    pub fn apply(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.sigma.inverse(y)
    }
}

/// Spectrum restricted to `|xi|_a <= ` the certification radius, and the discarded energy fraction.
pub fn low_pass(u: &SpectralFunction, sys: &DecompositionSystem) -> (SpectralFunction, f64) {
    let radius = sys.certification_radius();
    let frac = sys.energy_fraction_beyond(u, radius);
    let coeffs = u
        .coeffs()
        .iter()
        .zip(sys.radii())
        .map(|(c, &r)| if r > radius { Complex64::default() } else { *c })
        .collect();
    (SpectralFunction::new(u.spec().clone(), coeffs).expect("same grid"), frac)
}

/// Sampled constants `C_{alpha,sigma}`, `c_sigma`, `c_tau`.
#[derive(Debug, Clone, Serialize)]
pub struct DiffeoConstants {
    /// `(alpha, max_j sup |D^alpha sigma_j|)` for `1 <= |alpha| <= 4`.
    pub c_alpha: Vec<(Vec<usize>, f64)>,
    pub c_sigma: f64,
    pub c_tau: f64,
}

impl DiffeoConstants {
    pub fn get(&self, alpha: &[usize]) -> Option<f64> {
        self.c_alpha.iter().find(|(a, _)| a == alpha).map(|(_, v)| *v)
    }
}

/// Samples a `32^n` lattice over the perturbation support (whole box on unbounded axes).
/// The map is the identity elsewhere, where `|det J| = 1`.
pub fn diffeo_constants(sigma: &Diffeomorphism, box_lengths: &[f64]) -> Result<DiffeoConstants> {
    const SAMPLES: usize = 32;
    let n = sigma.dim;
    if box_lengths.len() != n {
        return Err(Error::Usage("one box length per axis is required".into()));
    }
    let ranges: Vec<(f64, f64)> = sigma
        .perturbation_support()
        .into_iter()
        .zip(box_lengths)
        .map(|(s, &l)| s.unwrap_or((0.0, l)))
        .collect();
    let alphas: Vec<Vec<usize>> = (1..=JET_ORDER).flat_map(|k| multi_indices_of_order(n, k)).collect();
    let total = SAMPLES.pow(n as u32);
    let per_point: Vec<(Vec<f64>, f64)> = (0..total)
        .into_par_iter()
        .map(|mut flat| {
            let x: Vec<f64> = ranges
                .iter()
                .map(|&(lo, hi)| {
                    let i = flat % SAMPLES;
                    flat /= SAMPLES;
                    lo + (hi - lo) * i as f64 / (SAMPLES - 1) as f64
                })
                .collect();
            let jets = sigma.jets(&x);
            let sup: Vec<f64> = alphas
                .iter()
                .map(|a| jets.iter().map(|j| j.derivative(a).abs()).fold(0.0, f64::max))
                .collect();
            let jac: Vec<Vec<f64>> = jets.iter().map(Jet::gradient).collect();
            (sup, determinant(&jac).abs())
        })
        .collect();
    let mut c_alpha: Vec<(Vec<usize>, f64)> = alphas.into_iter().map(|a| (a, 0.0)).collect();
    let (mut dmin, mut dmax) = (1.0f64, 1.0f64);
    for (sup, det) in &per_point {
        for (c, s) in c_alpha.iter_mut().zip(sup) {
            c.1 = c.1.max(*s);
        }
        dmin = dmin.min(*det);
        dmax = dmax.max(*det);
    }
    let consts = DiffeoConstants { c_alpha, c_sigma: dmin, c_tau: 1.0 / dmax };
    if !(consts.c_sigma > 0.0 && consts.c_tau > 0.0) || consts.c_alpha.iter().any(|(_, v)| !v.is_finite()) {
        return Err(Error::Precondition("map is not a bounded diffeomorphism on the sampled box".into()));
    }
    Ok(consts)
}

/// Whether `(sigma, params)` meets the invariance hypotheses: translations always; a structured
/// map when `a_1 = ... = a_{n-1}` and `p_1 = ... = p_{n-1}`; a block map when `p` and `a` are
/// constant on every group.
pub fn hypothesis_ok(sigma: &Diffeomorphism, params: &SpaceParams) -> bool {
    let a = params.a.weights();
    let p = params.pq.p();
    let constant_on = |axes: &[usize]| {
        axes.windows(2).all(|w| a[w[0]] == a[w[1]] && p[w[0]] == p[w[1]])
    };
    match &sigma.kind {
        MapKind::Identity | MapKind::Translation { .. } => true,
        MapKind::Block { groups, .. } => groups.iter().all(|g| constant_on(g)),
        _ => {
            let n = sigma.dim;
            sigma.is_structured() && constant_on(&(0..n - 1).collect::<Vec<_>>())
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct InvarianceRow {
    pub f_id: usize,
    pub point: usize,
    pub s: f64,
    pub p: Vec<f64>,
    pub q: f64,
    pub a: Vec<f64>,
    pub hypothesis_ok: bool,
    pub ratio: f64,
    pub resolution: usize,
    /// Energy fraction removed by the low-pass projection of `f o sigma`.
    pub discarded: f64,
}

/// Partitions shared across parameter points with the same anisotropy.
pub struct PartitionCache {
    spec: GridSpec,
    systems: HashMap<Vec<u64>, DecompositionSystem>,
}

impl PartitionCache {
    pub fn new(spec: &GridSpec) -> Self {
        Self { spec: spec.clone(), systems: HashMap::new() }
    }

    pub fn get(&mut self, a: &AnisotropyVector) -> Result<&DecompositionSystem> {
        let key: Vec<u64> = a.weights().iter().map(|w| w.to_bits()).collect();
        if !self.systems.contains_key(&key) {
            let sys = build_partition(a, &self.spec)?;
            self.systems.insert(key.clone(), sys);
        }
        Ok(&self.systems[&key])
    }
}

/// `(projected f, projected f o sigma, discarded fraction)`.
fn composed_pair(f: &TestFunction, sigma: &Diffeomorphism, sys: &DecompositionSystem) -> Result<(SpectralFunction, SpectralFunction, f64)> {
    let (u, _) = low_pass(&f.spectral(sys.spec())?, sys);
    let (v, discarded) = low_pass(&compose(&u, sigma)?.to_spectral(), sys);
    Ok((u, v, discarded))
}

/// `f_norm(f o sigma) / f_norm(f)` for every function and parameter point. Points that violate
/// the hypotheses are run anyway and flagged.
pub fn invariance_experiment(
    family: &[TestFunction],
    sigma: &Diffeomorphism,
    points: &[SpaceParams],
    spec: &GridSpec,
) -> Result<Vec<InvarianceRow>> {
    let mut cache = PartitionCache::new(spec);
    let mut rows = Vec::new();
    for (pi, params) in points.iter().enumerate() {
        let sys = cache.get(&params.a)?;
        let ok = hypothesis_ok(sigma, params);
        let part: Vec<InvarianceRow> = family
            .par_iter()
            .enumerate()
            .map(|(fi, f)| {
                let (u, v, discarded) = composed_pair(f, sigma, sys)?;
                let ratio = f_norm_spectral(&v, params, sys)?.value / f_norm_spectral(&u, params, sys)?.value;
                Ok(InvarianceRow {
                    f_id: fi,
                    point: pi,
                    s: params.s,
                    p: params.pq.p().to_vec(),
                    q: params.pq.q(),
                    a: params.a.weights().to_vec(),
                    hypothesis_ok: ok,
                    ratio,
                    resolution: spec.points()[0],
                    discarded,
                })
            })
            .collect::<Result<_>>()?;
        rows.extend(part);
    }
    Ok(rows)
}

pub fn ratio_band(rows: &[InvarianceRow]) -> RatioStats {
    RatioStats::from_ratios(&rows.iter().map(|r| r.ratio).collect::<Vec<_>>())
}

#[derive(Debug, Clone, Serialize)]
pub struct BlockReport {
    pub composite: RatioStats,
    pub per_factor: Vec<RatioStats>,
    /// `product of per-factor maxima`.
    pub factor_bound: f64,
    pub rows: Vec<InvarianceRow>,
}

/// Composite and per-factor ratios for a block map; refuses when `p` or `a` varies inside a group.
pub fn block_invariance_experiment(
    family: &[TestFunction],
    sigma: &Diffeomorphism,
    params: &SpaceParams,
    spec: &GridSpec,
) -> Result<BlockReport> {
    let MapKind::Block { groups, factors } = &sigma.kind else {
        return Err(Error::Usage("block experiment needs a block map".into()));
    };
    if !hypothesis_ok(sigma, params) {
        return Err(Error::Precondition(format!(
            "p and a must be constant within every axis group {groups:?}"
        )));
    }
    let rows = invariance_experiment(family, sigma, std::slice::from_ref(params), spec)?;
    let per_factor: Vec<RatioStats> = factors
        .iter()
        .map(|f| Ok(ratio_band(&invariance_experiment(family, f, std::slice::from_ref(params), spec)?)))
        .collect::<Result<_>>()?;
    Ok(BlockReport {
        composite: ratio_band(&rows),
        factor_bound: per_factor.iter().map(|b| b.max).product(),
        per_factor,
        rows,
    })
}

/// Ratio bands of one map at a grid and its refinement. No verdict is attached.
#[derive(Debug, Clone, Serialize)]
pub struct ContrastReport {
    pub hypothesis_ok: bool,
    pub coarse: RatioStats,
    pub fine: RatioStats,
    /// `(fine.max - fine.min) / (coarse.max - coarse.min)`.
    pub widening: f64,
    pub outcome: &'static str,
}

pub fn resolution_contrast(
    family: &[TestFunction],
    sigma: &Diffeomorphism,
    params: &SpaceParams,
    spec: &GridSpec,
) -> Result<ContrastReport> {
    let coarse = ratio_band(&invariance_experiment(family, sigma, std::slice::from_ref(params), spec)?);
    let fine = ratio_band(&invariance_experiment(family, sigma, std::slice::from_ref(params), &spec.refined())?);
    let widening = (fine.max - fine.min) / (coarse.max - coarse.min);
    Ok(ContrastReport {
        hypothesis_ok: hypothesis_ok(sigma, params),
        coarse,
        fine,
        widening,
        outcome: if widening >= 2.0 { "widened" } else { "bounded" },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::{random_band_limited, random_gaussians, Gaussian};
    use crate::mixed_norms::IntegrabilityVector;
    use std::f64::consts::PI;

    fn params(s: f64, a: &[f64], p: &[f64], q: f64) -> SpaceParams {
        SpaceParams::new(s, AnisotropyVector::new(a.to_vec()).unwrap(), IntegrabilityVector::new(p.to_vec(), q).unwrap())
            .unwrap()
    }

    fn sample_points(dim: usize, count: usize, lo: f64, hi: f64) -> Vec<Vec<f64>> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64(11);
        (0..count).map(|_| (0..dim).map(|_| rng.random_range(lo..hi)).collect()).collect()
    }

    fn family_maps() -> Vec<Diffeomorphism> {
        vec![
            Diffeomorphism::shear(3, 0, 1, 0.4, 5.0, 2.0).unwrap(),
            Diffeomorphism::swirl(3, (0, 1), (5.0, 5.0), 2.5, 1.0).unwrap(),
            Diffeomorphism::radial(3, vec![0, 1], vec![5.0, 4.5], 3.0, 0.2).unwrap(),
            Diffeomorphism::radial(3, vec![0], vec![5.0], 2.0, -0.25).unwrap(),
            Diffeomorphism::translation(vec![0.3, -0.2, 0.0]),
        ]
    }

    #[test]
    fn inverse_roundtrip_on_samples() {
        for m in family_maps() {
            for x in sample_points(3, 1000, 1.0, 9.0) {
                let y = m.forward(&x);
                let back = m.inverse(&y).unwrap();
                let err = back.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                assert!(err <= 1e-10, "{m:?} {err}");
            }
            assert!(m.is_structured());
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        for m in family_maps() {
            for x in sample_points(3, 20, 2.0, 8.0) {
                let j = m.jacobian(&x);
                for k in 0..3 {
                    let h = 1e-6;
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[k] += h;
                    xm[k] -= h;
                    let (fp, fm) = (m.forward(&xp), m.forward(&xm));
                    for i in 0..3 {
                        let fd = (fp[i] - fm[i]) / (2.0 * h);
                        assert!((fd - j[i][k]).abs() < 1e-7, "{m:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn constants_for_simple_maps() {
        let id = diffeo_constants(&Diffeomorphism::identity(2), &[4.0, 4.0]).unwrap();
        assert_eq!(id.c_sigma, 1.0);
        assert_eq!(id.get(&[1, 0]), Some(1.0));
        assert_eq!(id.get(&[0, 1]), Some(1.0));
        assert_eq!(id.get(&[1, 1]), Some(0.0));
        assert_eq!(id.get(&[2, 0]), Some(0.0));
        let shear = Diffeomorphism::shear(2, 0, 1, 0.7, 2.0, 1.5).unwrap();
        let c = diffeo_constants(&shear, &[4.0, 4.0]).unwrap();
        assert_eq!(c.c_sigma, 1.0);
        assert_eq!(c.c_tau, 1.0);
        assert!(c.get(&[0, 4]).unwrap() > 0.0);
        // Swirls preserve area.
        let sw = Diffeomorphism::swirl(2, (0, 1), (2.0, 2.0), 1.5, 0.8).unwrap();
        let c = diffeo_constants(&sw, &[4.0, 4.0]).unwrap();
        assert!((c.c_sigma - 1.0).abs() < 1e-12 && (c.c_tau - 1.0).abs() < 1e-12);
    }

    #[test]
    fn jacobian_floor_confirmed_by_dense_sampling() {
        // 1-D distortion x + eps b((x-c)^2/R^2)(x-c) with |eps d/dx| <= 1/2.
        let m = Diffeomorphism::radial(2, vec![0], vec![2.0], 1.5, 0.3).unwrap();
        let c = diffeo_constants(&m, &[4.0, 4.0]).unwrap();
        let dense = (0..=20000)
            .map(|i| {
                let x = 0.5 + 3.0 * i as f64 / 20000.0;
                let h = 1e-6;
                (m.forward(&[x + h, 1.0])[0] - m.forward(&[x - h, 1.0])[0]) / (2.0 * h)
            })
            .fold(f64::INFINITY, f64::min);
        assert!(dense >= 0.5);
        assert!(c.c_sigma >= 0.5 && (c.c_sigma - dense).abs() < 2e-2);
    }

    #[test]
    fn compose_identity_translation_and_closed_form() {
        let spec = GridSpec::uniform(2, 32, 4.0 * PI).unwrap();
        let a = AnisotropyVector::new(vec![1.0, 1.0]).unwrap();
        let f = &random_band_limited(&spec, &a, 3.0, 1, 6, 5).unwrap()[0];
        let u = f.spectral(&spec).unwrap();
        let id = compose(&u, &Diffeomorphism::identity(2)).unwrap();
        assert!(id.max_diff(&u.to_grid()).unwrap() < 1e-12);
        let h = spec.spacing(0);
        let t = compose(&u, &Diffeomorphism::translation(vec![3.0 * h, 0.0])).unwrap();
        for flat in [0, 17, 500] {
            let x = spec.point(flat);
            assert!((t.samples()[flat] - f.eval(&spec, &[x[0] + 3.0 * h, x[1]])).norm() < 1e-12);
        }
        let sys = build_partition(&a, &spec).unwrap();
        let pr = params(1.0, &[1.0, 1.0], &[2.0, 3.0], 2.0);
        let n0 = f_norm_spectral(&u, &pr, &sys).unwrap().value;
        let n1 = f_norm_spectral(&t.to_spectral(), &pr, &sys).unwrap().value;
        assert!((n1 / n0 - 1.0).abs() < 1e-10);

        // Gaussian bump under a shear: compare with the closed form at sigma(x).
        let fine = GridSpec::uniform(2, 64, 4.0 * PI).unwrap();
        let g = TestFunction::Gaussians {
            bumps: vec![Gaussian { center: vec![6.0, 6.5], widths: vec![1.2, 1.0], amplitude: 1.0 }],
        };
        let gu = g.spectral(&fine).unwrap();
        let sh = Diffeomorphism::shear(2, 0, 1, 0.5, 6.0, 3.0).unwrap();
        let c = compose(&gu, &sh).unwrap();
        let err = (0..fine.len())
            .map(|flat| (c.samples()[flat] - g.eval(&fine, &sh.forward(&fine.point(flat)))).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn margin_violation_is_refused() {
        let spec = GridSpec::uniform(2, 32, 8.0).unwrap();
        let u = SpectralFunction::from_modes(spec.clone(), &[(vec![1, 0], Complex64::new(1.0, 0.0))]).unwrap();
        let m = Diffeomorphism::radial(2, vec![0], vec![1.0], 1.0, 0.2).unwrap();
        assert!(matches!(compose(&u, &m), Err(Error::Precondition(_))));
    }

    #[test]
    fn compose_roundtrip_for_band_limited_input() {
        // Bump perturbations have slowly decaying spectra, so the intermediate f o sigma is
        // resolved only on a fine grid with a wide, gentle perturbation.
        let spec = GridSpec::uniform(2, 128, 4.0 * PI).unwrap();
        let a = AnisotropyVector::new(vec![1.0, 1.0]).unwrap();
        let f = &random_band_limited(&spec, &a, 1.0, 1, 4, 9).unwrap()[0];
        let u = f.spectral(&spec).unwrap();
        for m in [
            Diffeomorphism::translation(vec![0.37, -0.21]),
            Diffeomorphism::radial(2, vec![0], vec![6.28], 5.5, 0.02).unwrap(),
            Diffeomorphism::swirl(2, (0, 1), (6.28, 6.28), 5.5, 0.02).unwrap(),
        ] {
            let there = compose(&u, &m).unwrap();
            let back = compose_inverse(&there.to_spectral(), &m).unwrap();
            let rel = back.max_diff(&u.to_grid()).unwrap() / u.to_grid().max_abs();
            assert!(rel < 1e-8, "{m:?} {rel}");
        }
    }

    #[test]
    fn invariance_rows_and_hypotheses() {
        let spec = GridSpec::uniform(2, 32, 4.0 * PI).unwrap();
        let fam = random_gaussians(2, 4, (&[5.5, 5.5], &[7.0, 7.0]), (1.1, 1.4), 3);
        let ok = params(1.0, &[1.0, 1.0], &[2.0, 2.0], 2.0);
        let rows = invariance_experiment(&fam, &Diffeomorphism::identity(2), std::slice::from_ref(&ok), &spec).unwrap();
        assert!(rows.iter().all(|r| (r.ratio - 1.0).abs() < 1e-12 && r.hypothesis_ok));
        let m = Diffeomorphism::radial(2, vec![0], vec![6.3], 3.0, 0.2).unwrap();
        let rows = invariance_experiment(&fam, &m, std::slice::from_ref(&ok), &spec).unwrap();
        let band = ratio_band(&rows);
        assert!(band.min > 0.5 && band.max < 2.0, "{band:?}");
        assert!(rows.iter().all(|r| r.discarded < 1e-3));
        // Mixing shear in 2-D is not structured.
        let mix = Diffeomorphism::shear(2, 0, 1, 0.4, 6.3, 3.0).unwrap();
        assert!(!hypothesis_ok(&mix, &ok));
        let three = params(1.0, &[1.0, 2.0, 1.0], &[2.0, 3.0, 2.0], 2.0);
        let sw = Diffeomorphism::swirl(3, (0, 1), (5.0, 5.0), 2.0, 0.5).unwrap();
        assert!(!hypothesis_ok(&sw, &three));
        assert!(hypothesis_ok(&sw, &params(1.0, &[2.0, 2.0, 1.0], &[2.0, 2.0, 4.0], 2.0)));
    }

    #[test]
    fn block_maps() {
        let spec = GridSpec::uniform(2, 32, 4.0 * PI).unwrap();
        let fam = random_gaussians(2, 3, (&[5.5, 5.5], &[7.0, 7.0]), (1.1, 1.4), 4);
        let pr = params(1.0, &[2.0, 1.0], &[2.0, 3.0], 2.0);
        let id = Diffeomorphism::block(vec![vec![0], vec![1]], vec![Diffeomorphism::identity(2), Diffeomorphism::identity(2)])
            .unwrap();
        let rep = block_invariance_experiment(&fam, &id, &pr, &spec).unwrap();
        assert!((rep.composite.max - 1.0).abs() < 1e-12 && (rep.composite.min - 1.0).abs() < 1e-12);
        let h = spec.spacing(0);
        let tr = Diffeomorphism::block(
            vec![vec![0], vec![1]],
            vec![Diffeomorphism::translation(vec![2.0 * h, 0.0]), Diffeomorphism::identity(2)],
        )
        .unwrap();
        let rep = block_invariance_experiment(&fam, &tr, &pr, &spec).unwrap();
        assert!((rep.composite.max - 1.0).abs() < 1e-10 && (rep.composite.min - 1.0).abs() < 1e-10);
        let two = Diffeomorphism::block(
            vec![vec![0], vec![1]],
            vec![
                Diffeomorphism::radial(2, vec![0], vec![6.3], 3.0, 0.2).unwrap(),
                Diffeomorphism::radial(2, vec![1], vec![6.0], 3.0, -0.2).unwrap(),
            ],
        )
        .unwrap();
        let rep = block_invariance_experiment(&fam, &two, &pr, &spec).unwrap();
        assert!(rep.composite.max <= rep.factor_bound * 1.1, "{rep:?}");
        // A factor reaching into another group is refused.
        let bad = Diffeomorphism::block(
            vec![vec![0], vec![1]],
            vec![Diffeomorphism::shear(2, 0, 1, 0.2, 6.0, 2.0).unwrap(), Diffeomorphism::identity(2)],
        );
        assert!(bad.is_err());
        // p varying inside a group is refused.
        let joint = Diffeomorphism::block(vec![vec![0, 1]], vec![Diffeomorphism::identity(2)]).unwrap();
        assert!(block_invariance_experiment(&fam, &joint, &pr, &spec).is_err());
    }
}
