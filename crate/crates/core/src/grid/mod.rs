//! Periodic rectangular lattices, sampled functions, and their continuum-normalised
//! discrete Fourier transforms.
//!
//! A [`GridSpec`] discretises the torus `prod_j [0, L_j)` with `N_j` samples per axis.
//! Samples are stored row-major with axis 0 varying fastest. Spectral coefficients are
//! stored in FFT order; index `i` on axis `j` carries the integer wavenumber
//! `k = i` for `i < N_j/2` and `k = i - N_j` otherwise, i.e. the symmetric half-open range
//! `[-N_j/2, N_j/2)` with the Nyquist mode on the negative side. The physical frequency is
//! `xi_j = 2 pi k / L_j`.
//!
//! Normalisation follows the continuum transform `F u(xi) = int e^{-i x.xi} u(x) dx`:
//! forward coefficients are the DFT scaled by the cell volume, and the inverse is
//! `u(x) = (prod_j L_j)^{-1} sum_k c_k e^{i xi_k . x}`.

mod fft;
pub mod io;

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftDirection;
use serde::Serialize;

use crate::anisotropy::AnisoPoint;
use crate::error::{Error, Result};

pub(crate) use fft::transform_axes;

/// Lattice description: samples per axis and period per axis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSpec {
    points: Vec<usize>,
    box_lengths: Vec<f64>,
}

impl GridSpec {
    pub fn new(points: Vec<usize>, box_lengths: Vec<f64>) -> Result<Self> {
        if points.is_empty() || points.len() != box_lengths.len() {
            return Err(Error::Configuration(format!(
                "grid needs matching, non-empty point and length lists (got {} and {})",
                points.len(),
                box_lengths.len()
            )));
        }
        if let Some(p) = points.iter().find(|&&p| p < 8 || p % 2 != 0) {
            return Err(Error::Configuration(format!(
                "points per axis must be even and at least 8, got {p}"
            )));
        }
        if let Some(l) = box_lengths.iter().find(|l| !(**l > 0.0) || !l.is_finite()) {
            return Err(Error::Configuration(format!("box lengths must be positive, got {l}")));
        }
        Ok(Self { points, box_lengths })
    }

    /// `n`-dimensional grid with the same resolution and period on every axis.
    pub fn uniform(n: usize, points: usize, length: f64) -> Result<Self> {
        Self::new(vec![points; n], vec![length; n])
    }

    pub fn dim(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[usize] {
        &self.points
    }

    pub fn box_lengths(&self) -> &[f64] {
        &self.box_lengths
    }

    /// Total number of samples.
    pub fn len(&self) -> usize {
        self.points.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.box_lengths[axis] / self.points[axis] as f64
    }

    /// Riemann weight `prod_j L_j / N_j`.
    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|j| self.spacing(j)).product()
    }

    pub fn volume(&self) -> f64 {
        self.box_lengths.iter().product()
    }

    /// Same box with twice the samples per axis.
    pub fn refined(&self) -> Self {
        Self {
            points: self.points.iter().map(|p| 2 * p).collect(),
            box_lengths: self.box_lengths.clone(),
        }
    }

    /// Integer wavenumber carried by FFT index `idx` on `axis`.
    #[inline]
    pub fn wavenumber(&self, axis: usize, idx: usize) -> i64 {
        let n = self.points[axis];
        if idx < n / 2 {
            idx as i64
        } else {
            idx as i64 - n as i64
        }
    }

    /// FFT index holding integer wavenumber `k` on `axis`, if representable.
    pub fn index_of_wavenumber(&self, axis: usize, k: i64) -> Option<usize> {
        let n = self.points[axis] as i64;
        if k < -n / 2 || k >= n / 2 {
            return None;
        }
        Some(if k >= 0 { k as usize } else { (k + n) as usize })
    }

    #[inline]
    pub fn frequency(&self, axis: usize, idx: usize) -> f64 {
        2.0 * PI * self.wavenumber(axis, idx) as f64 / self.box_lengths[axis]
    }

    /// Physical frequencies along each axis in FFT order.
    pub fn axis_frequencies(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|j| (0..self.points[j]).map(|i| self.frequency(j, i)).collect())
            .collect()
    }

    /// Lattice coordinate `idx * h` on `axis`.
    #[inline]
    pub fn coordinate(&self, axis: usize, idx: usize) -> f64 {
        idx as f64 * self.spacing(axis)
    }

    /// Coordinate of `idx` measured from the origin on the periodic circle, in `[-L/2, L/2)`.
    #[inline]
    pub fn centered_coordinate(&self, axis: usize, idx: usize) -> f64 {
        self.wavenumber(axis, idx) as f64 * self.spacing(axis)
    }

    /// Periodic distance between lattice indices `i` and `j` on `axis`.
    #[inline]
    pub fn periodic_distance(&self, axis: usize, i: usize, j: usize) -> f64 {
        let n = self.points[axis];
        let d = if i > j { i - j } else { j - i };
        d.min(n - d) as f64 * self.spacing(axis)
    }

    /// Multi-index of flat position `flat`.
    pub fn unravel(&self, mut flat: usize, out: &mut [usize]) {
        for (o, &n) in out.iter_mut().zip(&self.points) {
            *o = flat % n;
            flat /= n;
        }
    }

    pub fn ravel(&self, idx: &[usize]) -> usize {
        let mut flat = 0;
        for (i, n) in idx.iter().zip(&self.points).rev() {
            flat = flat * n + i;
        }
        flat
    }

    /// Lattice point coordinates of flat position `flat`.
    pub fn point(&self, flat: usize) -> Vec<f64> {
        let mut idx = vec![0; self.dim()];
        self.unravel(flat, &mut idx);
        idx.iter().enumerate().map(|(j, &i)| self.coordinate(j, i)).collect()
    }

    /// Frequency vector of flat spectral position `flat`.
    pub fn frequency_point(&self, flat: usize) -> Vec<f64> {
        let mut idx = vec![0; self.dim()];
        self.unravel(flat, &mut idx);
        idx.iter().enumerate().map(|(j, &i)| self.frequency(j, i)).collect()
    }

    /// Calls `f(flat, xi)` for every lattice frequency in storage order.
    pub fn for_each_frequency(&self, mut f: impl FnMut(usize, &[f64])) {
        let freqs = self.axis_frequencies();
        let mut idx = vec![0usize; self.dim()];
        let mut xi: Vec<f64> = freqs.iter().map(|v| v[0]).collect();
        for flat in 0..self.len() {
            f(flat, &xi);
            for j in 0..self.dim() {
                idx[j] += 1;
                if idx[j] < self.points[j] {
                    xi[j] = freqs[j][idx[j]];
                    break;
                }
                idx[j] = 0;
                xi[j] = freqs[j][0];
            }
        }
    }

    /// Evaluates `f` on every lattice frequency, in storage order.
    pub fn map_frequencies<T>(&self, mut f: impl FnMut(&[f64]) -> T) -> Vec<T> {
        let mut out = Vec::with_capacity(self.len());
        self.for_each_frequency(|_, xi| out.push(f(xi)));
        out
    }

    /// Calls `f(flat, x)` for every lattice point in storage order.
    pub fn for_each_point(&self, mut f: impl FnMut(usize, &[f64])) {
        let mut idx = vec![0usize; self.dim()];
        let mut x = vec![0.0; self.dim()];
        for flat in 0..self.len() {
            f(flat, &x);
            for j in 0..self.dim() {
                idx[j] += 1;
                if idx[j] < self.points[j] {
                    x[j] = self.coordinate(j, idx[j]);
                    break;
                }
                idx[j] = 0;
                x[j] = 0.0;
            }
        }
    }

    fn check_same(&self, other: &GridSpec) -> Result<()> {
        if self != other {
            return Err(Error::Usage("grid specifications differ".into()));
        }
        Ok(())
    }
}

/// Complex samples of a periodic function on a lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    spec: GridSpec,
    samples: Vec<Complex64>,
}

impl GridFunction {
    pub fn new(spec: GridSpec, samples: Vec<Complex64>) -> Result<Self> {
        if samples.len() != spec.len() {
            return Err(Error::Usage(format!(
                "expected {} samples, got {}",
                spec.len(),
                samples.len()
            )));
        }
        if samples.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Domain("grid samples must be finite".into()));
        }
        Ok(Self { spec, samples })
    }

    pub(crate) fn from_raw(spec: GridSpec, samples: Vec<Complex64>) -> Self {
        debug_assert_eq!(samples.len(), spec.len());
        Self { spec, samples }
    }

    pub fn zeros(spec: GridSpec) -> Self {
        let n = spec.len();
        Self { spec, samples: vec![Complex64::default(); n] }
    }

    pub fn from_real(spec: GridSpec, values: &[f64]) -> Result<Self> {
        Self::new(spec, values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    /// Samples `f` at every lattice point.
    pub fn from_fn(spec: GridSpec, mut f: impl FnMut(&[f64]) -> Complex64) -> Result<Self> {
        let mut samples = Vec::with_capacity(spec.len());
        spec.for_each_point(|_, x| samples.push(f(x)));
        Self::new(spec, samples)
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.samples.iter().map(|z| z.norm()).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        Self::from_raw(self.spec.clone(), self.samples.iter().map(|z| z * c).collect())
    }

    pub fn add(&self, other: &GridFunction) -> Result<Self> {
        self.spec.check_same(&other.spec)?;
        Ok(Self::from_raw(
            self.spec.clone(),
            self.samples.iter().zip(&other.samples).map(|(a, b)| a + b).collect(),
        ))
    }

    pub fn sub(&self, other: &GridFunction) -> Result<Self> {
        self.spec.check_same(&other.spec)?;
        Ok(Self::from_raw(
            self.spec.clone(),
            self.samples.iter().zip(&other.samples).map(|(a, b)| a - b).collect(),
        ))
    }

    /// Max-norm distance to `other`.
    pub fn max_diff(&self, other: &GridFunction) -> Result<f64> {
        self.spec.check_same(&other.spec)?;
        Ok(self.samples.iter().zip(&other.samples).fold(0.0, |m, (a, b)| m.max((a - b).norm())))
    }

    /// Lattice translation by `shift[j]` samples along each axis: `v(x) = u(x - shift h)`.
    pub fn shifted(&self, shift: &[i64]) -> Self {
        let spec = &self.spec;
        let mut out = vec![Complex64::default(); spec.len()];
        let mut idx = vec![0usize; spec.dim()];
        let mut src = vec![0usize; spec.dim()];
        for (flat, o) in out.iter_mut().enumerate() {
            spec.unravel(flat, &mut idx);
            for j in 0..spec.dim() {
                let n = spec.points[j] as i64;
                src[j] = (idx[j] as i64 - shift[j]).rem_euclid(n) as usize;
            }
            *o = self.samples[spec.ravel(&src)];
        }
        Self::from_raw(spec.clone(), out)
    }

    /// Continuum-normalised forward transform.
    pub fn to_spectral(&self) -> SpectralFunction {
        fft_forward(self)
    }

    /// Compensated `sum |u|^2 h^n`.
    pub fn l2_norm_squared(&self) -> f64 {
        crate::numeric::compensated_sum(self.samples.iter().map(|z| z.norm_sqr()))
            * self.spec.cell_volume()
    }
}

/// Discrete Fourier coefficients of a [`GridFunction`], continuum normalised.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralFunction {
    spec: GridSpec,
    coeffs: Vec<Complex64>,
}

impl SpectralFunction {
    pub fn new(spec: GridSpec, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != spec.len() {
            return Err(Error::Usage(format!(
                "expected {} coefficients, got {}",
                spec.len(),
                coeffs.len()
            )));
        }
        if coeffs.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Domain("spectral coefficients must be finite".into()));
        }
        Ok(Self { spec, coeffs })
    }

    pub(crate) fn from_raw(spec: GridSpec, coeffs: Vec<Complex64>) -> Self {
        debug_assert_eq!(coeffs.len(), spec.len());
        Self { spec, coeffs }
    }

    /// Trigonometric polynomial `sum_m amp_m e^{i xi(k_m) . x}` given by integer wavenumbers.
    pub fn from_modes(spec: GridSpec, modes: &[(Vec<i64>, Complex64)]) -> Result<Self> {
        let mut coeffs = vec![Complex64::default(); spec.len()];
        let volume = spec.volume();
        let mut idx = vec![0usize; spec.dim()];
        for (k, amp) in modes {
            if k.len() != spec.dim() {
                return Err(Error::Usage("mode wavenumber has wrong dimension".into()));
            }
            for (j, &kj) in k.iter().enumerate() {
                idx[j] = spec.index_of_wavenumber(j, kj).ok_or_else(|| {
                    Error::Configuration(format!(
                        "wavenumber {kj} on axis {j} not representable with {} points",
                        spec.points[j]
                    ))
                })?;
            }
            coeffs[spec.ravel(&idx)] += amp * volume;
        }
        Ok(Self { spec, coeffs })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    /// Frequency vector of coefficient `flat`.
    pub fn frequency_of(&self, flat: usize) -> Vec<f64> {
        self.spec.frequency_point(flat)
    }

    /// Pointwise product with real symbol values given in storage order.
    pub fn multiplied_real(&self, symbol: &[f64]) -> SpectralFunction {
        Self::from_raw(
            self.spec.clone(),
            self.coeffs.iter().zip(symbol).map(|(c, s)| c * s).collect(),
        )
    }

    pub fn multiplied(&self, symbol: &[Complex64]) -> SpectralFunction {
        Self::from_raw(
            self.spec.clone(),
            self.coeffs.iter().zip(symbol).map(|(c, s)| c * s).collect(),
        )
    }

    pub fn to_grid(&self) -> GridFunction {
        fft_inverse(self)
    }

    /// `(2 pi)^{-n} sum |c|^2 dxi`, equal to the grid `L_2` norm squared by Parseval.
    pub fn l2_norm_squared(&self) -> f64 {
        crate::numeric::compensated_sum(self.coeffs.iter().map(|z| z.norm_sqr())) / self.spec.volume()
    }

    /// Evaluates the trigonometric interpolant at an arbitrary point (reduced mod periods).
    pub fn evaluate(&self, x: &[f64]) -> Complex64 {
        let mut work = Vec::new();
        evaluate_separable(&self.spec, &self.coeffs, x, &mut work) / self.spec.volume()
    }
}

/// Continuum-normalised forward transform.
pub fn fft_forward(u: &GridFunction) -> SpectralFunction {
    let spec = u.spec.clone();
    let mut data = u.samples.clone();
    let axes: Vec<usize> = (0..spec.dim()).collect();
    transform_axes(&mut data, &spec.points, &axes, FftDirection::Forward);
    let h = spec.cell_volume();
    for c in &mut data {
        *c *= h;
    }
    SpectralFunction::from_raw(spec, data)
}

/// Inverse of [`fft_forward`].
pub fn fft_inverse(u: &SpectralFunction) -> GridFunction {
    let spec = u.spec.clone();
    let mut data = u.coeffs.clone();
    let axes: Vec<usize> = (0..spec.dim()).collect();
    transform_axes(&mut data, &spec.points, &axes, FftDirection::Inverse);
    let scale = 1.0 / spec.volume();
    for c in &mut data {
        *c *= scale;
    }
    GridFunction::from_raw(spec, data)
}

/// `sum_k c_k e^{i xi_k . x}` by contracting one axis at a time; cost `prod N_j` per point.
pub(crate) fn evaluate_separable(
    spec: &GridSpec,
    coeffs: &[Complex64],
    x: &[f64],
    work: &mut Vec<Complex64>,
) -> Complex64 {
    let dim = spec.dim();
    work.clear();
    work.extend_from_slice(coeffs);
    let mut len = coeffs.len();
    let mut phases = Vec::new();
    for j in 0..dim {
        let n = spec.points[j];
        let xj = x[j].rem_euclid(spec.box_lengths[j]);
        phases.clear();
        phases.extend((0..n).map(|i| Complex64::from_polar(1.0, spec.frequency(j, i) * xj)));
        let out_len = len / n;
        for o in 0..out_len {
            let line = &work[o * n..(o + 1) * n];
            let mut acc = Complex64::default();
            for (c, p) in line.iter().zip(&phases) {
                acc += c * p;
            }
            work[o] = acc;
        }
        len = out_len;
    }
    work[0]
}

/// Interpolant evaluator for points that leave some axes on the lattice.
///
/// The fixed axes are transformed back to physical space once, so each point costs
/// `prod N_j` over the moving axes only.
pub(crate) struct PartialEvaluator {
    moving: Vec<usize>,
    fixed: Vec<usize>,
    reduced: GridSpec,
    block: usize,
    data: Vec<Complex64>,
}

impl PartialEvaluator {
    pub(crate) fn new(u: &SpectralFunction, moving: Vec<usize>) -> Self {
        let spec = u.spec();
        let fixed: Vec<usize> = (0..spec.dim()).filter(|j| !moving.contains(j)).collect();
        let mut mixed = u.coeffs.clone();
        transform_axes(&mut mixed, &spec.points, &fixed, FftDirection::Inverse);
        let scale = 1.0 / spec.volume();
        let reduced = GridSpec {
            points: moving.iter().map(|&j| spec.points[j]).collect(),
            box_lengths: moving.iter().map(|&j| spec.box_lengths[j]).collect(),
        };
        let block = reduced.len();
        let mut data = vec![Complex64::default(); mixed.len()];
        let mut idx = vec![0; spec.dim()];
        for (flat, v) in mixed.iter().enumerate() {
            spec.unravel(flat, &mut idx);
            data[Self::split(&moving, &fixed, spec, &idx, block)] = v * scale;
        }
        Self { moving, fixed, reduced, block, data }
    }

    fn split(moving: &[usize], fixed: &[usize], spec: &GridSpec, idx: &[usize], block: usize) -> usize {
        let inner = moving.iter().rev().fold(0, |acc, &j| acc * spec.points[j] + idx[j]);
        let outer = fixed.iter().rev().fold(0, |acc, &j| acc * spec.points[j] + idx[j]);
        inner + block * outer
    }

    /// Value at `y`, whose fixed-axis coordinates sit on lattice index `idx`.
    pub(crate) fn eval(&self, spec: &GridSpec, idx: &[usize], y: &[f64], work: &mut Vec<Complex64>) -> Complex64 {
        let outer = self.fixed.iter().rev().fold(0, |acc, &j| acc * spec.points[j] + idx[j]);
        let ym: Vec<f64> = self.moving.iter().map(|&j| y[j]).collect();
        let line = &self.data[outer * self.block..(outer + 1) * self.block];
        evaluate_separable(&self.reduced, line, &ym, work)
    }
}

/// Values of the trigonometric interpolant of `u` at arbitrary points.
pub fn resample(u: &SpectralFunction, points: &[AnisoPoint]) -> Result<Vec<Complex64>> {
    let spec = u.spec();
    let mut work = Vec::new();
    let scale = 1.0 / spec.volume();
    points
        .iter()
        .map(|p| {
            if p.coords().len() != spec.dim() {
                return Err(Error::Usage("resample point has wrong dimension".into()));
            }
            Ok(evaluate_separable(spec, &u.coeffs, p.coords(), &mut work) * scale)
        })
        .collect()
}
