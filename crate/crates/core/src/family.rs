//! Seeded, grid-independent test functions.
//!
//! A member is described in continuum terms (integer wavenumbers or Gaussian parameters),
//! so the same function can be sampled on a grid and on its refinement. Randomness comes
//! from `Xoshiro256PlusPlus::seed_from_u64(seed)`, consumed sequentially.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::anisotropy::AnisotropyVector;
use crate::error::{Error, Result};
use crate::grid::{GridFunction, GridSpec, SpectralFunction};

/// Anisotropic Gaussian `amp * exp(-sum ((x_j - c_j) / w_j)^2)`, evaluated on the nearest
/// periodic image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub center: Vec<f64>,
    pub widths: Vec<f64>,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TestFunction {
    /// `sum amp * e^{i xi(k) . x}` with `xi(k)_j = 2 pi k_j / L_j`.
    Modes { modes: Vec<(Vec<i64>, (f64, f64))> },
    Gaussians { bumps: Vec<Gaussian> },
}

fn wrap(d: f64, l: f64) -> f64 {
    d - l * (d / l).round()
}

impl Gaussian {
    pub fn eval(&self, x: &[f64], box_lengths: &[f64]) -> f64 {
        let mut e = 0.0;
        for j in 0..x.len() {
            let d = wrap(x[j] - self.center[j], box_lengths[j]) / self.widths[j];
            e += d * d;
        }
        self.amplitude * (-e).exp()
    }
}

impl TestFunction {
    /// Exact value at an arbitrary point of the torus described by `spec`.
    pub fn eval(&self, spec: &GridSpec, x: &[f64]) -> Complex64 {
        match self {
            TestFunction::Modes { modes } => modes
                .iter()
                .map(|(k, (re, im))| {
                    let phase: f64 = k
                        .iter()
                        .zip(x)
                        .zip(spec.box_lengths())
                        .map(|((&kj, &xj), &l)| 2.0 * std::f64::consts::PI * kj as f64 * xj / l)
                        .sum();
                    Complex64::new(*re, *im) * Complex64::from_polar(1.0, phase)
                })
                .sum(),
            TestFunction::Gaussians { bumps } => {
                Complex64::new(bumps.iter().map(|g| g.eval(x, spec.box_lengths())).sum(), 0.0)
            }
        }
    }

    pub fn spectral(&self, spec: &GridSpec) -> Result<SpectralFunction> {
        match self {
            TestFunction::Modes { modes } => {
                let m: Vec<(Vec<i64>, Complex64)> =
                    modes.iter().map(|(k, (re, im))| (k.clone(), Complex64::new(*re, *im))).collect();
                SpectralFunction::from_modes(spec.clone(), &m)
            }
            TestFunction::Gaussians { .. } => Ok(self.grid(spec)?.to_spectral()),
        }
    }

    pub fn grid(&self, spec: &GridSpec) -> Result<GridFunction> {
        match self {
            TestFunction::Modes { .. } => Ok(self.spectral(spec)?.to_grid()),
            TestFunction::Gaussians { bumps } => {
                if bumps.iter().any(|g| g.center.len() != spec.dim() || g.widths.len() != spec.dim()) {
                    return Err(Error::Usage("gaussian dimension differs from the grid".into()));
                }
                GridFunction::from_fn(spec.clone(), |x| self.eval(spec, x))
            }
        }
    }
}

/// Wavenumbers `k` with `|k_j| < N_j / 2` and `|xi(k)|_a <= cutoff`, Nyquist excluded.
pub fn band_wavenumbers(spec: &GridSpec, a: &AnisotropyVector, cutoff: f64) -> Vec<Vec<i64>> {
    let mut out = Vec::new();
    spec.for_each_frequency(|flat, xi| {
        let mut idx = vec![0; spec.dim()];
        spec.unravel(flat, &mut idx);
        let k: Vec<i64> = (0..spec.dim()).map(|j| spec.wavenumber(j, idx[j])).collect();
        let nyquist = k.iter().zip(spec.points()).any(|(&kj, &n)| kj == -(n as i64) / 2);
        if !nyquist && a.distance_unchecked(xi) <= cutoff {
            out.push(k);
        }
    });
    out
}

/// Real trigonometric polynomials with `modes` random conjugate pairs drawn from the
/// anisotropic band `|xi|_a <= cutoff` of `spec`, amplitudes uniform in `[-1/2, 1/2]^2`.
pub fn random_band_limited(
    spec: &GridSpec,
    a: &AnisotropyVector,
    cutoff: f64,
    count: usize,
    modes: usize,
    seed: u64,
) -> Result<Vec<TestFunction>> {
    let band = band_wavenumbers(spec, a, cutoff);
    if band.is_empty() {
        return Err(Error::Configuration(format!("no lattice frequencies with |xi|_a <= {cutoff}")));
    }
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    Ok((0..count)
        .map(|_| {
            let mut m = Vec::with_capacity(2 * modes);
            for _ in 0..modes {
                let k = band[rng.random_range(0..band.len())].clone();
                let (re, im) = (rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
                let neg: Vec<i64> = k.iter().map(|v| -v).collect();
                if neg == k {
                    m.push((k, (re, 0.0)));
                } else {
                    m.push((k, (re / 2.0, im / 2.0)));
                    m.push((neg, (re / 2.0, -im / 2.0)));
                }
            }
            TestFunction::Modes { modes: m }
        })
        .collect())
}

/// Sums of 1 to 3 Gaussians with centres in `[lo, hi]` per axis and widths in `[wmin, wmax]`.
pub fn random_gaussians(
    dim: usize,
    count: usize,
    centre_box: (&[f64], &[f64]),
    widths: (f64, f64),
    seed: u64,
) -> Vec<TestFunction> {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let k = rng.random_range(1..=3);
            let bumps = (0..k)
                .map(|_| Gaussian {
                    center: (0..dim).map(|j| rng.random_range(centre_box.0[j]..=centre_box.1[j])).collect(),
                    widths: (0..dim).map(|_| rng.random_range(widths.0..=widths.1)).collect(),
                    amplitude: rng.random_range(0.5..1.5) * if rng.random::<bool>() { 1.0 } else { -1.0 },
                })
                .collect();
            TestFunction::Gaussians { bumps }
        })
        .collect()
}
