//! Multi-dimensional complex FFT on row-major arrays (axis 0 varies fastest).

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

type PlanKey = (usize, bool);

fn plan(len: usize, direction: FftDirection) -> Arc<dyn Fft<f64>> {
    static CACHE: OnceLock<Mutex<(FftPlanner<f64>, HashMap<PlanKey, Arc<dyn Fft<f64>>>)>> =
        OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new((FftPlanner::new(), HashMap::new())));
    let mut guard = cache.lock().expect("fft plan cache poisoned");
    let key = (len, direction == FftDirection::Forward);
    if let Some(p) = guard.1.get(&key) {
        return p.clone();
    }
    let p = guard.0.plan_fft(len, direction);
    guard.1.insert(key, p.clone());
    p
}

/// Unnormalised in-place transform of `data` along each axis listed in `axes`.
pub(crate) fn transform_axes(
    data: &mut [Complex64],
    points: &[usize],
    axes: &[usize],
    direction: FftDirection,
) {
    for &axis in axes {
        transform_axis(data, points, axis, direction);
    }
}

fn transform_axis(data: &mut [Complex64], points: &[usize], axis: usize, direction: FftDirection) {
    let len = points[axis];
    let stride: usize = points[..axis].iter().product();
    let total = data.len();
    let fft = plan(len, direction);
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    if stride == 1 {
        for line in data.chunks_exact_mut(len) {
            fft.process_with_scratch(line, &mut scratch);
        }
        return;
    }
    let block = stride * len;
    let mut line = vec![Complex64::default(); len];
    for outer in (0..total).step_by(block) {
        for inner in 0..stride {
            let base = outer + inner;
            for (k, v) in line.iter_mut().enumerate() {
                *v = data[base + k * stride];
            }
            fft.process_with_scratch(&mut line, &mut scratch);
            for (k, v) in line.iter().enumerate() {
                data[base + k * stride] = *v;
            }
        }
    }
}
