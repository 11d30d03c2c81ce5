//! Small numerical helpers shared across modules.

/// Neumaier-compensated accumulator. Summation order is the caller's iteration order, so
/// results are reproducible bit for bit.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Compensated sum of an iterator, in iteration order.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = CompensatedSum::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// Summary of a family of ratios. Entries whose denominator vanishes are skipped and counted.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct RatioStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub count: usize,
    pub skipped: usize,
}

impl RatioStats {
    pub fn from_pairs<I: IntoIterator<Item = (f64, f64)>>(pairs: I) -> Self {
        let mut ratios = Vec::new();
        let mut skipped = 0;
        for (num, den) in pairs {
            if den == 0.0 || !den.is_finite() || !num.is_finite() {
                skipped += 1;
            } else {
                ratios.push(num / den);
            }
        }
        Self::from_ratios_with_skipped(&ratios, skipped)
    }

    pub fn from_ratios(ratios: &[f64]) -> Self {
        Self::from_ratios_with_skipped(ratios, 0)
    }

    fn from_ratios_with_skipped(ratios: &[f64], skipped: usize) -> Self {
        if ratios.is_empty() {
            return Self { min: f64::NAN, max: f64::NAN, mean: f64::NAN, count: 0, skipped };
        }
        let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        let max = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = compensated_sum(ratios.iter().copied()) / ratios.len() as f64;
        Self { min, max, mean, count: ratios.len(), skipped }
    }

    /// Largest relative movement of the band endpoints between two runs.
    pub fn endpoint_drift(&self, other: &RatioStats) -> f64 {
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs());
        rel(self.min, other.min).max(rel(self.max, other.max))
    }
}
