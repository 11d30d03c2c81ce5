//! Anisotropic Littlewood-Paley partition of unity on the frequency lattice.
//!
//! `psi(xi) = profile(|xi|_a)` equals 1 on the unit anisotropic ball and vanishes outside
//! radius 3/2. Quasi-homogeneity gives `psi(2^{-ja} xi) = profile(2^{-j} |xi|_a)`, so every
//! symbol is a function of the lattice radius alone:
//! `Phi_0 = psi`, `Phi_j(xi) = profile(2^{-j} r) - profile(2^{1-j} r)`.

use rayon::prelude::*;
use serde::Serialize;

use crate::anisotropy::AnisotropyVector;
use crate::error::{Error, Result};
use crate::grid::{GridFunction, GridSpec, SpectralFunction};
use crate::numeric::compensated_sum;

/// Symbols below this are treated as zero for support and overlap accounting.
pub const SUPPORT_FLOOR: f64 = 1e-14;
/// Maximum spectral energy fraction tolerated beyond the certification radius.
pub const TAIL_TOLERANCE: f64 = 1e-10;

/// Smooth monotone radial cutoff: 1 on `[0, inner]`, 0 on `[outer, inf)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BumpProfile {
    pub inner_radius: f64,
    pub outer_radius: f64,
}

impl Default for BumpProfile {
    fn default() -> Self {
        Self { inner_radius: 1.0, outer_radius: 1.5 }
    }
}

/// `exp(-1/t)` for `t > 0`, else 0.
#[inline]
fn flat_exp(t: f64) -> f64 {
    if t > 0.0 {
        (-1.0 / t).exp()
    } else {
        0.0
    }
}

/// C-infinity step from 1 at `tau <= 0` to 0 at `tau >= 1`.
#[inline]
pub fn smoothstep_down(tau: f64) -> f64 {
    if tau <= 0.0 {
        return 1.0;
    }
    if tau >= 1.0 {
        return 0.0;
    }
    let a = flat_exp(1.0 - tau);
    let b = flat_exp(tau);
    a / (a + b)
}

impl BumpProfile {
    #[inline]
    pub fn eval(&self, r: f64) -> f64 {
        smoothstep_down((r - self.inner_radius) / (self.outer_radius - self.inner_radius))
    }
}

/// Partition symbols `Phi_0..Phi_J` tabulated on a lattice.
#[derive(Debug, Clone)]
pub struct DecompositionSystem {
    a: AnisotropyVector,
    spec: GridSpec,
    profile: BumpProfile,
    max_level: usize,
    radii: Vec<f64>,
    symbols: Vec<Vec<f64>>,
}

/// Outcome of checking the partition invariants on a lattice.
#[derive(Debug, Clone, Serialize)]
pub struct PartitionReport {
    pub levels: usize,
    pub max_lattice_radius: f64,
    pub covered_points: usize,
    pub max_sum_deviation: f64,
    pub corona_violations: usize,
    pub range_violations: usize,
    pub max_active_levels: usize,
}

/// Level `j`'s symbol at anisotropic radius `r`.
#[inline]
pub fn level_symbol(profile: &BumpProfile, j: usize, r: f64) -> f64 {
    let scale = 0.5f64.powi(j as i32);
    if j == 0 {
        profile.eval(r)
    } else {
        profile.eval(scale * r) - profile.eval(2.0 * scale * r)
    }
}

/// Largest level whose corona `[2^{j-1}, 3 * 2^{j-1}]` meets radii up to `max_radius`.
pub fn top_level(max_radius: f64) -> usize {
    let mut j = 0usize;
    while 2f64.powi(j as i32) < max_radius {
        j += 1;
    }
    j
}

/// Smallest anisotropic radius of an axis Nyquist frequency.
pub fn nyquist_radius(a: &AnisotropyVector, spec: &GridSpec) -> f64 {
    (0..spec.dim())
        .map(|j| {
            let mut xi = vec![0.0; spec.dim()];
            xi[j] = std::f64::consts::PI * spec.points()[j] as f64 / spec.box_lengths()[j];
            a.distance_unchecked(&xi)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Anisotropic radius of every lattice frequency, in storage order.
pub fn lattice_radii(a: &AnisotropyVector, spec: &GridSpec) -> Vec<f64> {
    spec.map_frequencies(|xi| a.distance_unchecked(xi))
}

pub fn build_partition(a: &AnisotropyVector, spec: &GridSpec) -> Result<DecompositionSystem> {
    DecompositionSystem::new(a, spec, BumpProfile::default())
}

impl DecompositionSystem {
    pub fn new(a: &AnisotropyVector, spec: &GridSpec, profile: BumpProfile) -> Result<Self> {
        if a.dim() != spec.dim() {
            return Err(Error::Usage(format!(
                "anisotropy has {} weights for a {}-dimensional grid",
                a.dim(),
                spec.dim()
            )));
        }
        let nyq = nyquist_radius(a, spec);
        if nyq <= 2.0 {
            let need: Vec<String> = (0..spec.dim())
                .map(|j| {
                    let min_n = (2f64.powf(a.weights()[j]) * spec.box_lengths()[j] / std::f64::consts::PI)
                        .floor() as usize
                        + 1;
                    format!("N_{}>={}", j + 1, min_n + min_n % 2)
                })
                .collect();
            return Err(Error::Configuration(format!(
                "grid too coarse: the Nyquist frequency must exceed anisotropic radius 2 \
                 (got {nyq:.4}); minimum resolution {}",
                need.join(", ")
            )));
        }
        let radii = lattice_radii(a, spec);
        let max_radius = radii.iter().copied().fold(0.0, f64::max);
        let max_level = top_level(max_radius);
        let symbols = Self::tabulate(&profile, &radii, max_level);
        Ok(Self { a: a.clone(), spec: spec.clone(), profile, max_level, radii, symbols })
    }

    /// Builds a system from externally supplied radii, e.g. for transformed symbols.
    pub fn from_radii(
        a: &AnisotropyVector,
        spec: &GridSpec,
        radii: Vec<f64>,
        max_level: usize,
    ) -> Result<Self> {
        if radii.len() != spec.len() {
            return Err(Error::Usage("radius table does not match the grid".into()));
        }
        let profile = BumpProfile::default();
        let symbols = Self::tabulate(&profile, &radii, max_level);
        Ok(Self { a: a.clone(), spec: spec.clone(), profile, max_level, radii, symbols })
    }

    fn tabulate(profile: &BumpProfile, radii: &[f64], max_level: usize) -> Vec<Vec<f64>> {
        (0..=max_level)
            .into_par_iter()
            .map(|j| radii.iter().map(|&r| level_symbol(profile, j, r)).collect())
            .collect()
    }

    pub fn anisotropy(&self) -> &AnisotropyVector {
        &self.a
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn profile(&self) -> &BumpProfile {
        &self.profile
    }

    /// Highest level `J`.
    pub fn max_level(&self) -> usize {
        self.max_level
    }

    pub fn levels(&self) -> usize {
        self.max_level + 1
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn symbol(&self, j: usize) -> Result<&[f64]> {
        self.symbols
            .get(j)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Usage(format!("level {j} outside 0..={}", self.max_level)))
    }

    /// Radius beyond which spectral energy must be negligible: `2^{J-2}`.
    pub fn certification_radius(&self) -> f64 {
        2f64.powi(self.max_level as i32 - 2)
    }

    /// `u_j = F^{-1}(Phi_j u^)`.
    pub fn apply_block(&self, j: usize, u: &SpectralFunction) -> Result<GridFunction> {
        if u.spec() != &self.spec {
            return Err(Error::Usage("function and decomposition live on different grids".into()));
        }
        Ok(u.multiplied_real(self.symbol(j)?).to_grid())
    }

    /// All blocks `u_0..u_J`.
    pub fn blocks(&self, u: &SpectralFunction) -> Result<Vec<GridFunction>> {
        if u.spec() != &self.spec {
            return Err(Error::Usage("function and decomposition live on different grids".into()));
        }
        Ok(self.symbols.par_iter().map(|s| u.multiplied_real(s).to_grid()).collect())
    }

    /// Fraction of spectral energy at radii above `radius`.
    pub fn energy_fraction_beyond(&self, u: &SpectralFunction, radius: f64) -> f64 {
        let total = compensated_sum(u.coeffs().iter().map(|c| c.norm_sqr()));
        if total == 0.0 {
            return 0.0;
        }
        let tail = compensated_sum(
            u.coeffs().iter().zip(&self.radii).filter(|(_, &r)| r > radius).map(|(c, _)| c.norm_sqr()),
        );
        tail / total
    }

    /// Refuses when more than [`TAIL_TOLERANCE`] of the energy lies beyond `2^{J-2}`.
    pub fn certify_tail(&self, u: &SpectralFunction) -> Result<f64> {
        let radius = self.certification_radius();
        let frac = self.energy_fraction_beyond(u, radius);
        if frac > TAIL_TOLERANCE {
            return Err(Error::Precondition(format!(
                "spectral tail not negligible: energy fraction {frac:.3e} beyond anisotropic radius \
                 {radius} exceeds {TAIL_TOLERANCE:e}; refine the grid or use smoother data"
            )));
        }
        Ok(frac)
    }

    /// Checks sum, range, corona containment and overlap on the lattice.
    pub fn report(&self) -> PartitionReport {
        let cover = 2f64.powi(self.max_level as i32 - 1);
        let mut covered = 0;
        let mut max_dev: f64 = 0.0;
        let mut corona = 0;
        let mut range = 0;
        let mut max_active = 0;
        for (flat, &r) in self.radii.iter().enumerate() {
            let mut sum = Vec::with_capacity(self.levels());
            let mut active = 0;
            for (j, s) in self.symbols.iter().enumerate() {
                let v = s[flat];
                sum.push(v);
                if !(-SUPPORT_FLOOR..=1.0 + SUPPORT_FLOOR).contains(&v) {
                    range += 1;
                }
                if v.abs() >= SUPPORT_FLOOR {
                    active += 1;
                    let (lo, hi) = if j == 0 {
                        (0.0, self.profile.outer_radius)
                    } else {
                        let c = 2f64.powi(j as i32 - 1);
                        (c, 3.0 * c)
                    };
                    if r < lo || r > hi {
                        corona += 1;
                    }
                }
            }
            max_active = max_active.max(active);
            if r <= cover {
                covered += 1;
                max_dev = max_dev.max((compensated_sum(sum) - 1.0).abs());
            }
        }
        PartitionReport {
            levels: self.levels(),
            max_lattice_radius: self.radii.iter().copied().fold(0.0, f64::max),
            covered_points: covered,
            max_sum_deviation: max_dev,
            corona_violations: corona,
            range_violations: range,
            max_active_levels: max_active,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_xoshiro::Xoshiro256PlusPlus;
    use std::f64::consts::PI;

    fn system(a: &[f64], n: usize) -> DecompositionSystem {
        let a = AnisotropyVector::new(a.to_vec()).unwrap();
        let spec = GridSpec::uniform(a.dim(), n, 2.0 * PI).unwrap();
        build_partition(&a, &spec).unwrap()
    }

    #[test]
    fn profile_endpoints_and_monotonicity() {
        let p = BumpProfile::default();
        assert_eq!(p.eval(1.0), 1.0);
        assert_eq!(p.eval(1.5), 0.0);
        assert_eq!(p.eval(0.0), 1.0);
        let mut prev = 1.0;
        for i in 0..=1000 {
            let v = p.eval(1.0 + 0.5 * i as f64 / 1000.0);
            assert!((0.0..=1.0).contains(&v) && v <= prev);
            prev = v;
        }
        assert!((p.eval(1.25) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn unit_ball_is_level_zero() {
        let sys = system(&[2.0, 1.0], 32);
        for (flat, &r) in sys.radii().iter().enumerate() {
            if r <= 1.0 {
                assert_eq!(sys.symbol(0).unwrap()[flat], 1.0);
                for j in 1..sys.levels() {
                    assert_eq!(sys.symbol(j).unwrap()[flat], 0.0);
                }
            }
        }
        assert_eq!(sys.symbol(0).unwrap()[0], 1.0);
    }

    #[test]
    fn partition_sums_to_one_against_direct_summation() {
        for a in [vec![1.0, 1.0], vec![2.0, 1.0], vec![2.0, 2.0, 1.0]] {
            let n = if a.len() == 3 { 16 } else { 64 };
            let sys = system(&a, n);
            let rep = sys.report();
            assert!(rep.max_sum_deviation <= 1e-12, "{a:?}: {rep:?}");
            assert_eq!(rep.corona_violations, 0);
            assert_eq!(rep.range_violations, 0);
            assert!(rep.max_active_levels <= 2);
            // Independent oracle: recompute each level from the raw smoothstep.
            let mut rng = Xoshiro256PlusPlus::seed_from_u64(9);
            let aniso = AnisotropyVector::new(a.clone()).unwrap();
            for _ in 0..200 {
                let flat = rng.random_range(0..sys.spec().len());
                let xi = sys.spec().frequency_point(flat);
                let r = aniso.distance(&xi).unwrap();
                if r > 2f64.powi(sys.max_level() as i32 - 1) {
                    continue;
                }
                let psi = |t: f64| smoothstep_down(2.0 * (t - 1.0));
                let total: f64 = (0..sys.levels())
                    .map(|j| {
                        let d = aniso.dilate(0.5f64.powi(j as i32), &xi).unwrap();
                        let dm = aniso.dilate(0.5f64.powi(j as i32 - 1), &xi).unwrap();
                        let here = psi(aniso.distance(&d).unwrap());
                        if j == 0 { here } else { here - psi(aniso.distance(&dm).unwrap()) }
                    })
                    .sum();
                assert!((total - 1.0).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn top_level_matches_lattice() {
        let sys = system(&[2.0, 1.0], 32);
        let m = sys.report().max_lattice_radius;
        let j = sys.max_level() as i32;
        assert!(2f64.powi(j - 1) < m && m <= 2f64.powi(j));
    }

    #[test]
    fn coarse_grid_is_refused() {
        let a = AnisotropyVector::new(vec![2.0, 1.0]).unwrap();
        let spec = GridSpec::new(vec![8, 8], vec![40.0, 40.0]).unwrap();
        let err = build_partition(&a, &spec).unwrap_err();
        assert!(matches!(err, Error::Configuration(ref m) if m.contains("minimum resolution")));
    }

    #[test]
    fn blocks_of_low_and_single_modes() {
        let sys = system(&[2.0, 1.0], 32);
        let spec = sys.spec().clone();
        let low = SpectralFunction::from_modes(
            spec.clone(),
            &[(vec![0, 0], Complex64::new(1.0, 0.0)), (vec![1, 0], Complex64::new(0.3, -0.2)), (vec![0, -1], Complex64::new(0.5, 0.0))],
        )
        .unwrap();
        let u = low.to_grid();
        assert!(sys.apply_block(0, &low).unwrap().max_diff(&u).unwrap() <= 1e-10);
        assert!(sys.apply_block(2, &low).unwrap().max_abs() <= 1e-12);
        assert!(sys.apply_block(sys.levels(), &low).is_err());

        let k = vec![0i64, 5];
        let single = SpectralFunction::from_modes(spec.clone(), &[(k.clone(), Complex64::new(1.0, 0.0))]).unwrap();
        let flat = spec.ravel(&[0, 5]);
        let r = sys.radii()[flat];
        for j in 0..sys.levels() {
            let expect = level_symbol(&BumpProfile::default(), j, r);
            let got = sys.apply_block(j, &single).unwrap();
            let oracle = single.to_grid().scaled(Complex64::new(expect, 0.0));
            assert!(got.max_diff(&oracle).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn reconstruction_of_band_limited_data() {
        let sys = system(&[2.0, 1.0], 32);
        let spec = sys.spec().clone();
        let cover = 2f64.powi(sys.max_level() as i32 - 1);
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(3);
        for _ in 0..20 {
            let coeffs: Vec<Complex64> = sys
                .radii()
                .iter()
                .map(|&r| if r <= cover { Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) } else { Complex64::default() })
                .collect();
            let s = SpectralFunction::new(spec.clone(), coeffs).unwrap();
            let u = s.to_grid();
            let mut acc = GridFunction::zeros(spec.clone());
            for b in sys.blocks(&s).unwrap() {
                acc = acc.add(&b).unwrap();
            }
            assert!(acc.max_diff(&u).unwrap() <= 1e-8 * u.max_abs());
        }
    }

    #[test]
    fn tail_certification() {
        let sys = system(&[1.0, 1.0], 32);
        let spec = sys.spec().clone();
        let ok = SpectralFunction::from_modes(spec.clone(), &[(vec![1, 1], Complex64::new(1.0, 0.0))]).unwrap();
        assert!(sys.certify_tail(&ok).is_ok());
        let bad = SpectralFunction::from_modes(spec, &[(vec![12, 0], Complex64::new(1.0, 0.0))]).unwrap();
        assert!(matches!(sys.certify_tail(&bad), Err(Error::Precondition(_))));
    }
}
