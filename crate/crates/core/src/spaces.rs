//! Quasi-norms of anisotropic Triebel-Lizorkin, Besov, Bessel-potential and Hoelder type,
//! together with the boundedness and embedding experiments built on them.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use serde::Serialize;

use crate::anisotropy::AnisotropyVector;
use crate::error::{Error, Result};
use crate::grid::{GridFunction, GridSpec, SpectralFunction};
use crate::littlewood_paley::DecompositionSystem;
use crate::mixed_norms::{lp_vec_norm, lp_vec_norm_values, lq_aggregate, IntegrabilityVector};
use crate::multipliers::{apply_multiplier, derivative_symbol, multiply_spectrum, xi_symbol};
use crate::numeric::RatioStats;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpaceParams {
    pub s: f64,
    pub a: AnisotropyVector,
    pub pq: IntegrabilityVector,
}

impl SpaceParams {
    pub fn new(s: f64, a: AnisotropyVector, pq: IntegrabilityVector) -> Result<Self> {
        if !s.is_finite() {
            return Err(Error::Domain(format!("smoothness must be finite, got {s}")));
        }
        if a.dim() != pq.dim() {
            return Err(Error::Usage(format!(
                "anisotropy has {} weights but p has {} entries",
                a.dim(),
                pq.dim()
            )));
        }
        Ok(Self { s, a, pq })
    }

    pub fn with_s(&self, s: f64) -> Self {
        Self { s, ..self.clone() }
    }
}

/// A quasi-norm value with the weighted `L_p` norm of every block `2^{js} u_j`.
#[derive(Debug, Clone, Serialize)]
pub struct NormReport {
    pub value: f64,
    pub per_level: Vec<f64>,
    pub tail_fraction: f64,
}

fn check_compatible(params: &SpaceParams, sys: &DecompositionSystem, spec: &GridSpec) -> Result<()> {
    if sys.spec() != spec {
        return Err(Error::Usage("function and decomposition live on different grids".into()));
    }
    if sys.anisotropy() != &params.a {
        return Err(Error::Usage("decomposition was built for a different anisotropy".into()));
    }
    if params.pq.dim() != spec.dim() {
        return Err(Error::Usage("integrability vector dimension differs from the grid".into()));
    }
    Ok(())
}

struct Blocks {
    magnitudes: Vec<Vec<f64>>,
    weights: Vec<f64>,
    tail_fraction: f64,
}

fn weighted_blocks(u: &SpectralFunction, params: &SpaceParams, sys: &DecompositionSystem) -> Result<Blocks> {
    check_compatible(params, sys, u.spec())?;
    let tail_fraction = sys.certify_tail(u)?;
    let magnitudes = sys.blocks(u)?.iter().map(GridFunction::magnitudes).collect();
    let weights = (0..sys.levels()).map(|j| 2f64.powf(j as f64 * params.s)).collect();
    Ok(Blocks { magnitudes, weights, tail_fraction })
}

fn level_norms(spec: &GridSpec, b: &Blocks, p: &[f64]) -> Vec<f64> {
    b.magnitudes
        .iter()
        .zip(&b.weights)
        .map(|(m, w)| w * lp_vec_norm_values(spec, m, p))
        .collect()
}

fn lq(values: &[f64], q: f64) -> f64 {
    if q.is_infinite() {
        return values.iter().copied().fold(0.0, f64::max);
    }
    crate::numeric::compensated_sum(values.iter().map(|v| v.powf(q))).powf(1.0 / q)
}

/// `|| (sum_j 2^{jsq} |u_j|^q)^{1/q} | L_p ||` with its per-level breakdown.
pub fn f_norm_spectral(u: &SpectralFunction, params: &SpaceParams, sys: &DecompositionSystem) -> Result<NormReport> {
    if !params.pq.all_finite() {
        return Err(Error::Domain("the F quasi-norm is defined for finite p only".into()));
    }
    let b = weighted_blocks(u, params, sys)?;
    let g = lq_aggregate(&b.magnitudes, &b.weights, params.pq.q());
    let value = lp_vec_norm_values(u.spec(), &g, params.pq.p());
    let per_level = level_norms(u.spec(), &b, params.pq.p());
    Ok(NormReport { value, per_level, tail_fraction: b.tail_fraction })
}

pub fn f_norm(u: &GridFunction, params: &SpaceParams, sys: &DecompositionSystem) -> Result<f64> {
    Ok(f_norm_spectral(&u.to_spectral(), params, sys)?.value)
}

/// `(sum_j 2^{jsq} || u_j | L_p ||^q)^{1/q}`.
pub fn b_norm_spectral(u: &SpectralFunction, params: &SpaceParams, sys: &DecompositionSystem) -> Result<NormReport> {
    let b = weighted_blocks(u, params, sys)?;
    let per_level = level_norms(u.spec(), &b, params.pq.p());
    Ok(NormReport { value: lq(&per_level, params.pq.q()), per_level, tail_fraction: b.tail_fraction })
}

pub fn b_norm(u: &GridFunction, params: &SpaceParams, sys: &DecompositionSystem) -> Result<f64> {
    Ok(b_norm_spectral(&u.to_spectral(), params, sys)?.value)
}

/// `|| Xi^s u | L_p ||`; the partition only certifies the spectral tail.
pub fn h_norm_spectral(u: &SpectralFunction, s: f64, p: &IntegrabilityVector, sys: &DecompositionSystem) -> Result<f64> {
    if u.spec() != sys.spec() {
        return Err(Error::Usage("function and decomposition live on different grids".into()));
    }
    sys.certify_tail(u)?;
    let v = apply_multiplier(&xi_symbol(sys.anisotropy(), s), u)?;
    lp_vec_norm(&v, p)
}

pub fn h_norm(u: &GridFunction, s: f64, p: &IntegrabilityVector, sys: &DecompositionSystem) -> Result<f64> {
    h_norm_spectral(&u.to_spectral(), s, p, sys)
}

/// All multi-indices of total order `k` in `n` variables, lexicographic.
pub fn multi_indices_of_order(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(n: usize, k: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == n - 1 {
            prefix.push(k);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for first in (0..=k).rev() {
            prefix.push(first);
            rec(n, k - first, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, k, &mut Vec::new(), &mut out);
    out
}

/// Spectral derivative `partial^alpha u`.
pub fn derivative(u: &SpectralFunction, alpha: &[usize]) -> Result<GridFunction> {
    let order: usize = alpha.iter().sum();
    // partial^alpha = i^{|alpha|} xi^alpha
    let phase = Complex64::i().powu(order as u32);
    Ok(apply_multiplier(&derivative_symbol(alpha), u)?.scaled(phase))
}

/// Deterministic pair budget for the Hoelder seminorm.
pub const HOLDER_PAIR_CAP: usize = 1_000_000;

/// Lattice offsets `d != 0` with Euclidean length `< radius` (or `<= radius` if `closed`),
/// keeping one of each `+-d` pair when `half` is set.
pub fn offset_stencil(spec: &GridSpec, radius: f64, closed: bool, half: bool) -> Vec<(Vec<i64>, f64)> {
    let n = spec.dim();
    let reach: Vec<i64> = (0..n)
        .map(|j| ((radius / spec.spacing(j)).floor() as i64).min(spec.points()[j] as i64 / 2))
        .collect();
    let mut out = Vec::new();
    let mut d: Vec<i64> = reach.iter().map(|r| -r).collect();
    loop {
        let len = d.iter().enumerate().map(|(j, &v)| (v as f64 * spec.spacing(j)).powi(2)).sum::<f64>().sqrt();
        let inside = if closed { len <= radius } else { len < radius };
        let nonzero = d.iter().any(|&v| v != 0);
        let positive = d.iter().rev().find(|&&v| v != 0).is_some_and(|&v| v > 0);
        if inside && nonzero && (!half || positive) {
            out.push((d.clone(), len));
        }
        let mut j = 0;
        loop {
            if j == n {
                return out;
            }
            d[j] += 1;
            if d[j] <= reach[j] {
                break;
            }
            d[j] = -reach[j];
            j += 1;
        }
    }
}

fn shifted_flat(spec: &GridSpec, idx: &[usize], d: &[i64]) -> usize {
    let mut flat = 0;
    for j in (0..spec.dim()).rev() {
        let n = spec.points()[j] as i64;
        let i = (idx[j] as i64 + d[j]).rem_euclid(n) as usize;
        flat = flat * spec.points()[j] + i;
    }
    flat
}

/// `||u||_rho`: sup norms of all derivatives up to order `k < rho <= k+1` plus the
/// Hoelder quotient of the order-`k` derivatives over lattice pairs at distance `<= 1`.
pub fn holder_norm(u: &GridFunction, rho: f64) -> Result<f64> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::Domain(format!("Hoelder order must be positive and finite, got {rho}")));
    }
    let spec = u.spec();
    let k = (rho.ceil() as usize).saturating_sub(1);
    let s = u.to_spectral();
    let mut total = 0.0;
    let mut top = Vec::new();
    for order in 0..=k {
        for alpha in multi_indices_of_order(spec.dim(), order) {
            let d = derivative(&s, &alpha)?;
            total += d.max_abs();
            if order == k {
                top.push(d);
            }
        }
    }
    let stencil = offset_stencil(spec, 1.0, true, true);
    let pairs = stencil.len() * spec.len();
    let expo = rho - k as f64;
    let quotient = |d: &GridFunction, flat: usize, (off, len): &(Vec<i64>, f64), idx: &mut Vec<usize>| {
        spec.unravel(flat, idx);
        let other = shifted_flat(spec, idx, off);
        (d.samples()[flat] - d.samples()[other]).norm() / len.powf(expo)
    };
    for d in &top {
        let mut idx = vec![0; spec.dim()];
        let mut sup: f64 = 0.0;
        if pairs <= HOLDER_PAIR_CAP {
            for flat in 0..spec.len() {
                for o in &stencil {
                    sup = sup.max(quotient(d, flat, o, &mut idx));
                }
            }
        } else {
            let mut rng = Xoshiro256PlusPlus::seed_from_u64(0x401de5);
            for _ in 0..HOLDER_PAIR_CAP {
                let flat = rng.random_range(0..spec.len());
                let o = &stencil[rng.random_range(0..stencil.len())];
                sup = sup.max(quotient(d, flat, o, &mut idx));
            }
        }
        total += sup;
    }
    Ok(total)
}

/// `x -> max { |u(y)| : y lattice, |x - y| < radius }` with periodic wrap.
pub fn sup_over_ball(u: &GridFunction, radius: f64) -> Vec<f64> {
    let spec = u.spec();
    let stencil = offset_stencil(spec, radius, false, false);
    let mags = u.magnitudes();
    (0..spec.len())
        .into_par_iter()
        .map(|flat| {
            let mut idx = vec![0; spec.dim()];
            spec.unravel(flat, &mut idx);
            stencil.iter().fold(mags[flat], |m, (d, _)| m.max(mags[shifted_flat(spec, &idx, d)]))
        })
        .collect()
}

fn stats_over<F>(family: &[SpectralFunction], f: F) -> Result<RatioStats>
where
    F: Fn(&SpectralFunction) -> Result<(f64, f64)> + Sync,
{
    let pairs: Vec<(f64, f64)> = family.par_iter().map(&f).collect::<Result<_>>()?;
    Ok(RatioStats::from_pairs(pairs))
}

/// Ratios `f_norm(D^alpha u; s - a.alpha) / f_norm(u; s)` over a family.
pub fn derivative_boundedness_experiment(
    family: &[SpectralFunction],
    alpha: &[usize],
    params: &SpaceParams,
    sys: &DecompositionSystem,
) -> Result<RatioStats> {
    if alpha.len() != params.a.dim() {
        return Err(Error::Usage("multi-index dimension differs from the anisotropy".into()));
    }
    let shift: f64 = params.a.weights().iter().zip(alpha).map(|(a, &m)| a * m as f64).sum();
    let lowered = params.with_s(params.s - shift);
    stats_over(family, |u| {
        let d = derivative(u, alpha)?.to_spectral();
        Ok((f_norm_spectral(&d, &lowered, sys)?.value, f_norm_spectral(u, params, sys)?.value))
    })
}

/// Ratios `|| sup_{|x-y|<radius} |u(y)| | L_p || / f_norm(u)`; requires
/// `s > sum_l a_l / min(p_1..p_l)`.
pub fn sup_ball_experiment(
    family: &[SpectralFunction],
    radius: f64,
    params: &SpaceParams,
    sys: &DecompositionSystem,
) -> Result<RatioStats> {
    let mut running = f64::INFINITY;
    let mut threshold = 0.0;
    for (al, pl) in params.a.weights().iter().zip(params.pq.p()) {
        running = running.min(*pl);
        threshold += al / running;
    }
    if params.s <= threshold {
        return Err(Error::Precondition(format!(
            "sup-over-ball estimate needs s > sum_l a_l / min(p_1..p_l) = {threshold}, got s = {}",
            params.s
        )));
    }
    stats_over(family, |u| {
        let g = u.to_grid();
        let m = sup_over_ball(&g, radius);
        Ok((lp_vec_norm_values(g.spec(), &m, params.pq.p()), f_norm_spectral(u, params, sys)?.value))
    })
}

/// Ratios `b_norm(u; s, inf, inf) / holder_norm(u, rho)` for `s <= rho`.
pub fn holder_embedding_experiment(
    family: &[SpectralFunction],
    s: f64,
    rho: f64,
    sys: &DecompositionSystem,
) -> Result<RatioStats> {
    if s > rho {
        return Err(Error::Precondition(format!("Hoelder embedding needs s <= rho, got s = {s}, rho = {rho}")));
    }
    let n = sys.spec().dim();
    let params = SpaceParams::new(
        s,
        sys.anisotropy().clone(),
        IntegrabilityVector::new(vec![f64::INFINITY; n], f64::INFINITY)?,
    )?;
    stats_over(family, |u| Ok((b_norm_spectral(u, &params, sys)?.value, holder_norm(&u.to_grid(), rho)?)))
}

/// Ratios `f_norm(u; lambda s, lambda a) / f_norm(u; s, a)`, each with its own partition.
pub fn rescaling_experiment(
    family: &[SpectralFunction],
    lambda: f64,
    params: &SpaceParams,
    sys: &DecompositionSystem,
) -> Result<RatioStats> {
    let scaled_a = params.a.scaled(lambda)?;
    let scaled_sys = crate::littlewood_paley::build_partition(&scaled_a, sys.spec())?;
    let scaled = SpaceParams::new(lambda * params.s, scaled_a, params.pq.clone())?;
    stats_over(family, |u| {
        Ok((f_norm_spectral(u, &scaled, &scaled_sys)?.value, f_norm_spectral(u, params, sys)?.value))
    })
}

/// Ratios `f_norm(op(u); s - shift) / f_norm(u; s)` for a multiplier `op`.
pub fn multiplier_band(
    family: &[SpectralFunction],
    sym: &crate::multipliers::MultiplierSymbol,
    shift: f64,
    params: &SpaceParams,
    sys: &DecompositionSystem,
) -> Result<RatioStats> {
    let lowered = params.with_s(params.s - shift);
    stats_over(family, |u| {
        let v = multiply_spectrum(sym, u)?;
        Ok((f_norm_spectral(&v, &lowered, sys)?.value, f_norm_spectral(u, params, sys)?.value))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::random_band_limited;
    use crate::littlewood_paley::{build_partition, level_symbol, BumpProfile};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn setup(a: &[f64], n: usize) -> (GridSpec, DecompositionSystem) {
        let a = AnisotropyVector::new(a.to_vec()).unwrap();
        let spec = GridSpec::uniform(a.dim(), n, 2.0 * PI).unwrap();
        let sys = build_partition(&a, &spec).unwrap();
        (spec, sys)
    }

    fn params(s: f64, a: &[f64], p: &[f64], q: f64) -> SpaceParams {
        SpaceParams::new(
            s,
            AnisotropyVector::new(a.to_vec()).unwrap(),
            IntegrabilityVector::new(p.to_vec(), q).unwrap(),
        )
        .unwrap()
    }

    fn family(spec: &GridSpec, a: &[f64], cutoff: f64, count: usize, seed: u64) -> Vec<SpectralFunction> {
        let a = AnisotropyVector::new(a.to_vec()).unwrap();
        random_band_limited(spec, &a, cutoff, count, 8, seed)
            .unwrap()
            .iter()
            .map(|f| f.spectral(spec).unwrap())
            .collect()
    }

    #[test]
    fn low_band_reduces_to_lp() {
        let (spec, sys) = setup(&[2.0, 1.0], 32);
        let pr = params(1.5, &[2.0, 1.0], &[2.0, 3.0], 2.0);
        for u in family(&spec, &[2.0, 1.0], 1.0, 5, 1) {
            let g = u.to_grid();
            let lp = lp_vec_norm(&g, &pr.pq).unwrap();
            assert!((f_norm(&g, &pr, &sys).unwrap() - lp).abs() <= 1e-8 * lp);
            assert!((b_norm(&g, &pr, &sys).unwrap() - lp).abs() <= 1e-8 * lp);
            let doubled = g.scaled(Complex64::new(2.0, 0.0));
            assert!((f_norm(&doubled, &pr, &sys).unwrap() - 2.0 * f_norm(&g, &pr, &sys).unwrap()).abs() <= 1e-12 * lp * 4.0);
        }
    }

    #[test]
    fn single_mode_matches_symbol_sum() {
        let (spec, sys) = setup(&[2.0, 1.0], 64);
        let pr = params(1.3, &[2.0, 1.0], &[2.0, 1.5], 2.0);
        let k = vec![0i64, 6];
        let u = SpectralFunction::from_modes(spec.clone(), &[(k, Complex64::new(1.0, 0.0))]).unwrap();
        let r = sys.radii()[spec.ravel(&[0, 6])];
        let weights: f64 = (0..sys.levels())
            .map(|j| (2f64.powf(j as f64 * pr.s) * level_symbol(&BumpProfile::default(), j, r)).powi(2))
            .sum::<f64>()
            .sqrt();
        // |e^{i xi.x}| = 1, so the L_p norm is the box factor prod L_j^{1/p_j}.
        let box_factor = (2.0 * PI).powf(1.0 / 2.0) * (2.0 * PI).powf(1.0 / 1.5);
        let got = f_norm_spectral(&u, &pr, &sys).unwrap().value;
        assert!((got - weights * box_factor).abs() <= 1e-10 * got);
        // Two active levels at most.
        let active = (0..sys.levels()).filter(|&j| level_symbol(&BumpProfile::default(), j, r) > 0.0).count();
        assert!(active <= 2);
    }

    #[test]
    fn besov_equals_f_for_pure_powers() {
        let (spec, sys) = setup(&[2.0, 1.0], 32);
        let pr = params(0.7, &[2.0, 1.0], &[2.0, 2.0], 2.0);
        for u in family(&spec, &[2.0, 1.0], 4.0, 4, 2) {
            let f = f_norm_spectral(&u, &pr, &sys).unwrap().value;
            let b = b_norm_spectral(&u, &pr, &sys).unwrap().value;
            assert!((f - b).abs() <= 1e-10 * f);
        }
    }

    #[test]
    fn besov_q_infinity_takes_max_of_two_levels() {
        let (spec, sys) = setup(&[1.0, 1.0], 64);
        let pr = params(1.0, &[1.0, 1.0], &[2.0, 2.0], f64::INFINITY);
        let u = SpectralFunction::from_modes(
            spec.clone(),
            &[(vec![0, 0], Complex64::new(1.0, 0.0)), (vec![6, 0], Complex64::new(0.5, 0.0))],
        )
        .unwrap();
        let rep = b_norm_spectral(&u, &pr, &sys).unwrap();
        let l2 = 2.0 * PI;
        // Level 0 holds the constant only; the mode at radius 6 sits in levels 2 and 3.
        let r = 6.0;
        let lvl = |j: usize| 2f64.powi(j as i32) * 0.5 * level_symbol(&BumpProfile::default(), j, r) * l2;
        let expect = [l2, lvl(2), lvl(3)].into_iter().fold(0.0, f64::max);
        assert!((rep.value - expect).abs() <= 1e-10 * expect);
    }

    #[test]
    fn h_norm_examples() {
        let (spec, sys) = setup(&[2.0, 1.0], 32);
        let p = IntegrabilityVector::new(vec![2.0, 2.0], 2.0).unwrap();
        let u = family(&spec, &[2.0, 1.0], 6.0, 1, 3).remove(0);
        let g = u.to_grid();
        assert!((h_norm(&g, 0.0, &p, &sys).unwrap() - lp_vec_norm(&g, &p).unwrap()).abs() <= 1e-12);
        let k = vec![2i64, 3];
        let mode = SpectralFunction::from_modes(spec.clone(), &[(k, Complex64::new(1.0, 0.0))]).unwrap();
        let br = crate::multipliers::bracket(&sys.anisotropy().with_leading_unit(), &[2.0, 3.0]);
        let expect = br.powf(1.7) * 2.0 * PI;
        assert!((h_norm_spectral(&mode, 1.7, &p, &sys).unwrap() - expect).abs() <= 1e-10 * expect);
    }

    #[test]
    fn h_and_f_are_equivalent_and_stable() {
        let (spec, sys) = setup(&[2.0, 1.0], 32);
        let fine = spec.refined();
        let fine_sys = build_partition(sys.anisotropy(), &fine).unwrap();
        let pr = params(1.0, &[2.0, 1.0], &[2.0, 2.0], 2.0);
        let fam = random_band_limited(&spec, sys.anisotropy(), 8.0, 10, 8, 5).unwrap();
        let band = |spec: &GridSpec, sys: &DecompositionSystem| {
            let ratios: Vec<(f64, f64)> = fam
                .iter()
                .map(|f| {
                    let u = f.spectral(spec).unwrap();
                    (h_norm_spectral(&u, 1.0, &pr.pq, sys).unwrap(), f_norm_spectral(&u, &pr, sys).unwrap().value)
                })
                .collect();
            RatioStats::from_pairs(ratios)
        };
        let (c, f) = (band(&spec, &sys), band(&fine, &fine_sys));
        assert!(c.min > 0.0 && c.max.is_finite());
        assert!(c.endpoint_drift(&f) < 0.1);
    }

    #[test]
    fn holder_norm_examples() {
        let spec = GridSpec::uniform(1, 128, 2.0 * PI).unwrap();
        let c = GridFunction::from_fn(spec.clone(), |_| Complex64::new(-2.5, 0.0)).unwrap();
        for rho in [0.5, 1.0, 2.3] {
            assert!((holder_norm(&c, rho).unwrap() - 2.5).abs() < 1e-12);
        }
        let s = GridFunction::from_fn(spec.clone(), |x| Complex64::new(x[0].sin(), 0.0)).unwrap();
        let h = holder_norm(&s, 1.0).unwrap();
        assert!((h - 2.0).abs() <= 1e-3, "{h}");
        let h2 = holder_norm(&s.scaled(Complex64::new(2.0, 0.0)), 1.0).unwrap();
        assert!((h2 - 2.0 * h).abs() <= 1e-12);
        // Dense-pair oracle on the same lattice.
        let dense = {
            let v: Vec<f64> = s.samples().iter().map(|z| z.re).collect();
            let mut sup: f64 = 0.0;
            for i in 0..128 {
                for j in 0..128 {
                    let d = spec.periodic_distance(0, i, j);
                    if d > 0.0 && d <= 1.0 + 1e-12 {
                        sup = sup.max((v[i] - v[j]).abs() / d);
                    }
                }
            }
            sup + v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
        };
        assert!((h - dense).abs() <= 1e-12);
    }

    #[test]
    fn stencil_sizes() {
        let spec = GridSpec::uniform(2, 16, 16.0).unwrap();
        // Unit spacing: offsets with |d| <= 1 are the 4 axis neighbours.
        assert_eq!(offset_stencil(&spec, 1.0, true, false).len(), 4);
        assert_eq!(offset_stencil(&spec, 1.0, true, true).len(), 2);
        assert_eq!(offset_stencil(&spec, 1.5, false, false).len(), 8);
        assert_eq!(multi_indices_of_order(3, 2).len(), 6);
    }

    #[test]
    fn derivative_ratio_for_zero_and_single_mode() {
        let (spec, sys) = setup(&[2.0, 1.0], 32);
        let pr = params(3.0, &[2.0, 1.0], &[2.0, 2.0], 2.0);
        let fam = family(&spec, &[2.0, 1.0], 6.0, 5, 7);
        let st = derivative_boundedness_experiment(&fam, &[0, 0], &pr, &sys).unwrap();
        assert!((st.min - 1.0).abs() < 1e-12 && (st.max - 1.0).abs() < 1e-12);
        // A single mode at xi = (3, 0): |D_1 e| = 3 and the level weights shift by 2^{-2j}.
        let mode = SpectralFunction::from_modes(spec.clone(), &[(vec![3, 0], Complex64::new(1.0, 0.0))]).unwrap();
        let st = derivative_boundedness_experiment(&[mode], &[1, 0], &pr, &sys).unwrap();
        let r = 3f64.sqrt();
        let w = |s: f64| {
            (0..sys.levels())
                .map(|j| (2f64.powf(j as f64 * s) * level_symbol(&BumpProfile::default(), j, r)).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        let expect = 3.0 * w(1.0) / w(3.0);
        assert!((st.max - expect).abs() <= 1e-10 * expect);
    }

    #[test]
    fn derivative_band_stable_under_refinement() {
        let (spec, sys) = setup(&[2.0, 1.0], 32);
        let fine = spec.refined();
        let fine_sys = build_partition(sys.anisotropy(), &fine).unwrap();
        let pr = params(3.0, &[2.0, 1.0], &[2.0, 2.0], 2.0);
        let fam = random_band_limited(&spec, sys.anisotropy(), 8.0, 50, 6, 11).unwrap();
        let on = |spec: &GridSpec, sys: &DecompositionSystem| {
            let v: Vec<SpectralFunction> = fam.iter().map(|f| f.spectral(spec).unwrap()).collect();
            derivative_boundedness_experiment(&v, &[1, 0], &pr, sys).unwrap()
        };
        let (c, f) = (on(&spec, &sys), on(&fine, &fine_sys));
        assert!(c.max.is_finite() && ((f.max - c.max) / c.max).abs() <= 0.1);
    }

    #[test]
    fn sup_ball_and_holder_embedding_bands() {
        let (spec, sys) = setup(&[2.0, 1.0], 32);
        let fam = family(&spec, &[2.0, 1.0], 8.0, 20, 13);
        let pr = params(3.5, &[2.0, 1.0], &[2.0, 2.0], 2.0);
        let st = sup_ball_experiment(&fam, 1.0, &pr, &sys).unwrap();
        assert!(st.min > 0.0 && st.max.is_finite() && st.max / st.min < 50.0);
        assert!(sup_ball_experiment(&fam, 1.0, &pr.with_s(1.0), &sys).is_err());
        let st = holder_embedding_experiment(&fam, 0.8, 1.0, &sys).unwrap();
        assert!(st.min > 0.0 && st.max.is_finite());
        assert!(holder_embedding_experiment(&fam, 1.5, 1.0, &sys).is_err());
    }

    #[test]
    fn rescaled_partition_gives_stable_band() {
        let (spec, sys) = setup(&[1.0, 1.0], 64);
        let fam = family(&spec, &[1.0, 1.0], 8.0, 10, 17);
        let pr = params(1.0, &[1.0, 1.0], &[2.0, 2.0], 2.0);
        let st = rescaling_experiment(&fam, 1.5, &pr, &sys).unwrap();
        assert!(st.min > 0.0 && st.max / st.min < 10.0);
    }

    #[test]
    fn f_norm_refuses_infinite_p_and_rough_data() {
        let (spec, sys) = setup(&[1.0, 1.0], 32);
        let u = SpectralFunction::from_modes(spec.clone(), &[(vec![15, 0], Complex64::new(1.0, 0.0))]).unwrap();
        let pr = params(1.0, &[1.0, 1.0], &[2.0, 2.0], 2.0);
        assert!(matches!(f_norm_spectral(&u, &pr, &sys), Err(Error::Precondition(_))));
        let inf = params(1.0, &[1.0, 1.0], &[f64::INFINITY, 2.0], 2.0);
        assert!(matches!(f_norm_spectral(&u, &inf, &sys), Err(Error::Domain(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn f_norm_d_power_subadditive(seed in any::<u64>(), pi in 0usize..3, qi in 0usize..3, s in -1.0f64..2.0) {
            let exps = [0.5, 1.0, 2.0];
            let (spec, sys) = setup(&[2.0, 1.0], 16);
            let fam = family(&spec, &[2.0, 1.0], 2.0, 2, seed);
            let pr = params(s, &[2.0, 1.0], &[exps[pi], 2.0], exps[qi]);
            let sum = SpectralFunction::new(spec.clone(), fam[0].coeffs().iter().zip(fam[1].coeffs()).map(|(x, y)| x + y).collect()).unwrap();
            let d = pr.pq.d();
            let n = |u: &SpectralFunction| f_norm_spectral(u, &pr, &sys).unwrap().value.powf(d);
            prop_assert!(n(&sum) <= (n(&fam[0]) + n(&fam[1])) * (1.0 + 1e-9));
        }
    }
}
