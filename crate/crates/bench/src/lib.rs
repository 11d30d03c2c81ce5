//! Fixtures shared by the criterion benchmarks.

use anisoft::{fft_forward, AnisotropyVector, GridFunction, GridSpec, IntegrabilityVector, SpaceParams, SpectralFunction};
use num_complex::Complex64;

/// Square grid of `points` per axis on a `4 pi` box.
pub fn grid(dim: usize, points: usize) -> GridSpec {
    GridSpec::uniform(dim, points, 4.0 * std::f64::consts::PI).expect("valid grid")
}

/// Centred Gaussian with a small oscillation, smooth enough for every check.
pub fn smooth_field(spec: &GridSpec) -> SpectralFunction {
    let c: Vec<f64> = spec.box_lengths().iter().map(|l| l / 2.0).collect();
    let u = GridFunction::from_fn(spec.clone(), |x| {
        let r2: f64 = x.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum();
        Complex64::new((-r2 / 2.0).exp() * (1.0 + 0.3 * x[0].sin()), 0.0)
    })
    .expect("valid samples");
    fft_forward(&u)
}

pub fn anisotropy(dim: usize) -> AnisotropyVector {
    let w: Vec<f64> = (0..dim).map(|j| if j == 0 { 2.0 } else { 1.0 }).collect();
    AnisotropyVector::new(w).expect("valid weights")
}

pub fn params(dim: usize) -> SpaceParams {
    let p: Vec<f64> = (0..dim).map(|j| 2.0 + j as f64).collect();
    SpaceParams::new(1.0, anisotropy(dim), IntegrabilityVector::new(p, 2.0).expect("valid exponents")).expect("valid space")
}
