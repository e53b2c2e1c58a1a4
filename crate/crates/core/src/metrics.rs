//! Distances between distributions and regularity semi-norms.
//!
//! Everything here is one-dimensional except [`w1_point_masses`], which
//! covers Dirac measures in any dimension. Grid quantities use the midpoint
//! rule: a [`GridDensity`] stores density values at cell centres and all
//! integrals are `sum(values) * spacing`.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Integral deviation from 1 that is silently renormalised away.
pub const RENORMALIZE_TOLERANCE: f64 = 1e-3;

/// Gaussian tabulation half-width, in standard deviations.
const GAUSSIAN_HALF_WIDTH: f64 = 6.0;

/// A probability density sampled at the centres of a uniform 1-D grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    lo: f64,
    hi: f64,
    values: Vec<f64>,
}

impl GridDensity {
    /// Builds a density from cell-centre values.
    ///
    /// Values must be finite and nonnegative. If the midpoint integral is
    /// within [`RENORMALIZE_TOLERANCE`] of one the values are rescaled to
    /// integrate to exactly one; larger deviations are rejected.
    pub fn new(lo: f64, hi: f64, values: Vec<f64>) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(Error::invalid(format!("grid bounds [{lo}, {hi}] must satisfy lo < hi")));
        }
        if values.len() < 2 {
            return Err(Error::invalid("a grid density needs at least 2 cells"));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::invalid(format!("density value {v} is negative or not finite")));
        }
        let spacing = (hi - lo) / values.len() as f64;
        let mass: f64 = values.iter().sum::<f64>() * spacing;
        if (mass - 1.0).abs() >= RENORMALIZE_TOLERANCE {
            return Err(Error::invalid(format!("density integrates to {mass}, more than {RENORMALIZE_TOLERANCE} away from 1")));
        }
        let values = values.into_iter().map(|v| v / mass).collect();
        Ok(Self { lo, hi, values })
    }

    /// Tabulates `density` at the cell centres.
    pub fn from_fn(lo: f64, hi: f64, n_cells: usize, density: impl Fn(f64) -> f64) -> Result<Self> {
        let h = (hi - lo) / n_cells as f64;
        let values = (0..n_cells).map(|i| density(lo + (i as f64 + 0.5) * h)).collect();
        Self::new(lo, hi, values)
    }

    /// Normal(mean, sigma²), zero outside `mean ± 6 sigma`.
    pub fn gaussian(lo: f64, hi: f64, n_cells: usize, mean: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
        }
        let norm = 1.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt());
        Self::from_fn(lo, hi, n_cells, |x| {
            let z = (x - mean) / sigma;
            if z.abs() > GAUSSIAN_HALF_WIDTH {
                0.0
            } else {
                norm * (-0.5 * z * z).exp()
            }
        })
    }

    /// Uniform on `[a, b]`, using exact cell overlaps so edge cells carry
    /// their true mass.
    pub fn uniform(lo: f64, hi: f64, n_cells: usize, a: f64, b: f64) -> Result<Self> {
        if !(b > a) {
            return Err(Error::invalid(format!("uniform support [{a}, {b}] is empty")));
        }
        let h = (hi - lo) / n_cells as f64;
        let values = (0..n_cells)
            .map(|i| {
                let left = lo + i as f64 * h;
                let overlap = ((left + h).min(b) - left.max(a)).max(0.0);
                overlap / h / (b - a)
            })
            .collect();
        Self::new(lo, hi, values)
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn n_cells(&self) -> usize {
        self.values.len()
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / self.values.len() as f64
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn center(&self, i: usize) -> f64 {
        self.lo + (i as f64 + 0.5) * self.spacing()
    }

    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.spacing()
    }

    pub fn mean(&self) -> f64 {
        let h = self.spacing();
        self.values.iter().enumerate().map(|(i, v)| v * self.center(i)).sum::<f64>() * h
    }

    /// Cumulative distribution at the right edge of every cell.
    pub fn cdf(&self) -> Vec<f64> {
        let h = self.spacing();
        self.values
            .iter()
            .scan(0.0, |acc, v| {
                *acc += v * h;
                Some(*acc)
            })
            .collect()
    }

    fn check_same_grid(&self, other: &Self) -> Result<()> {
        let scale = self.hi.abs().max(self.lo.abs()).max(1.0);
        let tol = 1e-12 * scale;
        if self.n_cells() != other.n_cells() || (self.lo - other.lo).abs() > tol || (self.hi - other.hi).abs() > tol {
            return Err(Error::GridMismatch(format!("[{}, {}] x {} vs [{}, {}] x {}", self.lo, self.hi, self.n_cells(), other.lo, other.hi, other.n_cells())));
        }
        Ok(())
    }
}

/// A finite sample, kept sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalSample {
    values: Vec<f64>,
}

impl EmpiricalSample {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("empirical sample is empty"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("empirical sample contains a non-finite value"));
        }
        values.sort_by(f64::total_cmp);
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// A Dirac measure in `R^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointMass {
    location: Vec<f64>,
}

impl PointMass {
    pub fn new(location: Vec<f64>) -> Result<Self> {
        if location.is_empty() {
            return Err(Error::invalid("point mass needs dimension >= 1"));
        }
        if location.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("point mass has a non-finite coordinate"));
        }
        Ok(Self { location })
    }

    pub fn scalar(x: f64) -> Result<Self> {
        Self::new(vec![x])
    }

    pub fn location(&self) -> &[f64] {
        &self.location
    }

    pub fn dim(&self) -> usize {
        self.location.len()
    }
}

/// W1 between two Dirac measures: the Euclidean distance of their locations.
pub fn w1_point_masses(a: &PointMass, b: &PointMass) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { left: a.dim(), right: b.dim() });
    }
    Ok(a.location.iter().zip(&b.location).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
}

/// W1 between two grid densities as `∫ |F_p − F_q|`.
pub fn w1_grid(p: &GridDensity, q: &GridDensity) -> Result<f64> {
    p.check_same_grid(q)?;
    let h = p.spacing();
    let (mut fp, mut fq, mut acc) = (0.0, 0.0, 0.0);
    for (a, b) in p.values.iter().zip(&q.values) {
        fp += a * h;
        fq += b * h;
        acc += (fp - fq).abs();
    }
    Ok(acc * h)
}

/// Total variation `½ ∫ |p − q|`.
pub fn tv_grid(p: &GridDensity, q: &GridDensity) -> Result<f64> {
    p.check_same_grid(q)?;
    let h = p.spacing();
    Ok(0.5 * h * p.values.iter().zip(&q.values).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// Exact W1 between two equal-size empirical measures via the sorted
/// (quantile) coupling.
pub fn w1_empirical(x: &EmpiricalSample, y: &EmpiricalSample) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::SizeMismatch { left: x.len(), right: y.len() });
    }
    let total: f64 = x.values.iter().zip(&y.values).map(|(a, b)| (a - b).abs()).sum();
    Ok(total / x.len() as f64)
}

fn check_grid_function(f: &[f64], spacing: f64) -> Result<()> {
    if f.len() < 2 {
        return Err(Error::invalid("semi-norm needs at least 2 grid points"));
    }
    if !(spacing > 0.0 && spacing.is_finite()) {
        return Err(Error::invalid(format!("grid spacing must be positive, got {spacing}")));
    }
    Ok(())
}

/// Largest difference quotient of `f` over all grid pairs.
///
/// On a uniform grid the maximum over all pairs is attained by a pair of
/// neighbours (`|f_i − f_j| ≤ Σ |Δf|` over the cells in between), so only
/// adjacent differences are scanned.
pub fn lipschitz_seminorm_grid(f: &[f64], spacing: f64) -> Result<f64> {
    check_grid_function(f, spacing)?;
    let max_step = f.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
    Ok(max_step / spacing)
}

/// Largest Hölder quotient `|f_i − f_j| / d_ij^alpha` over all grid pairs.
pub fn holder_seminorm_grid(f: &[f64], spacing: f64, alpha: f64) -> Result<f64> {
    check_grid_function(f, spacing)?;
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::invalid(format!("Hölder exponent must lie in (0, 1], got {alpha}")));
    }
    if alpha == 1.0 {
        return lipschitz_seminorm_grid(f, spacing);
    }
    let n = f.len();
    let inv_dist: Vec<f64> = (0..n).map(|k| ((k as f64) * spacing).powf(-alpha)).collect();
    let best = (0..n - 1)
        .into_par_iter()
        .map(|i| {
            let fi = f[i];
            f[i + 1..].iter().enumerate().map(|(k, fj)| (fj - fi).abs() * inv_dist[k + 1]).fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    Ok(best)
}

/// Ordinary least-squares fit of `log value = exponent · log h + intercept`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingFit {
    pub exponent: f64,
    pub intercept: f64,
}

pub fn fit_scaling_exponent(points: &[(f64, f64)]) -> Result<ScalingFit> {
    if points.len() < 3 {
        return Err(Error::invalid("a scaling fit needs at least 3 points"));
    }
    if let Some((h, v)) = points.iter().find(|(h, v)| !(*h > 0.0 && *v > 0.0 && h.is_finite() && v.is_finite())) {
        return Err(Error::invalid(format!("scaling fit needs positive finite points, got ({h}, {v})")));
    }
    let n = points.len() as f64;
    let (xs, ys): (Vec<f64>, Vec<f64>) = points.iter().map(|(h, v)| (h.ln(), v.ln())).unzip();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("scaling fit needs at least two distinct h values"));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let exponent = sxy / sxx;
    Ok(ScalingFit { exponent, intercept: my - exponent * mx })
}
