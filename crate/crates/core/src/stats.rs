//! Small summary statistics shared by the Monte-Carlo estimators.

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Compensated (Neumaier) summation; the result depends only on the order
/// of `values`, never on how they were produced.
pub fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Sample mean with the half-width of a normal-approximation 95% interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanCi {
    pub mean: f64,
    pub half_ci95: f64,
}

impl MeanCi {
    pub fn from_samples(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, half_ci95: f64::NAN };
        }
        let mean = neumaier_sum(values.iter().copied()) / n as f64;
        if n < 2 {
            return Self { mean, half_ci95: 0.0 };
        }
        let var = neumaier_sum(values.iter().map(|v| (v - mean) * (v - mean))) / (n - 1) as f64;
        Self { mean, half_ci95: Z95 * (var / n as f64).sqrt() }
    }
}
