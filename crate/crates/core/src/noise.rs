//! Noise kernels for noise injection and convolution smoothing.
//!
//! A kernel family is a [`NoiseKernel`] implementation registered under a
//! name in a [`KernelRegistry`]; configs select one with `noise.family` and
//! `noise.scale`. Every kernel exposes its CDF so grid computations can use
//! exact per-cell masses.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::mdp::{PolicyKind, PolicySpec};
use crate::metrics::GridDensity;

/// Cells used by [`tv_shift`]; well above the 512-cell floor.
pub const TV_GRID_CELLS: usize = 20_000;

/// Certification passes when no shift exceeds `L_ℓ · h` by more than this.
pub const CERTIFY_TOLERANCE: f64 = 1e-6;

/// Minimum number of grid cells across a kernel support for convolution.
pub const MIN_KERNEL_CELLS: usize = 20;

pub trait NoiseKernel: Send + Sync + fmt::Debug {
    fn family(&self) -> &'static str;
    /// Standard deviation for gaussian, half-width otherwise.
    fn scale(&self) -> f64;
    fn density(&self, x: f64) -> f64;
    fn cdf(&self, x: f64) -> f64;
    fn sample(&self, rng: &mut dyn RngCore) -> f64;
    fn sup_density(&self) -> f64;
    /// Declared `L_ℓ` with `TV(ℓ(· + h), ℓ) ≤ L_ℓ |h|`.
    fn tv_lc_constant(&self) -> f64;
    /// Interval carrying all but a negligible amount of mass.
    fn support(&self) -> (f64, f64);
    fn std_dev(&self) -> f64;
}

fn check_scale(family: &str, scale: f64) -> Result<()> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::invalid(format!("{family} kernel needs a positive finite scale, got {scale}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian {
    sigma: f64,
}

impl Gaussian {
    pub fn new(sigma: f64) -> Result<Self> {
        check_scale("gaussian", sigma)?;
        Ok(Self { sigma })
    }
}

impl NoiseKernel for Gaussian {
    fn family(&self) -> &'static str {
        "gaussian"
    }
    fn scale(&self) -> f64 {
        self.sigma
    }
    fn density(&self, x: f64) -> f64 {
        let z = x / self.sigma;
        (-0.5 * z * z).exp() / (self.sigma * (2.0 * std::f64::consts::PI).sqrt())
    }
    fn cdf(&self, x: f64) -> f64 {
        0.5 * erfc(-x / (self.sigma * std::f64::consts::SQRT_2))
    }
    fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.sigma * z
    }
    fn sup_density(&self) -> f64 {
        self.density(0.0)
    }
    fn tv_lc_constant(&self) -> f64 {
        gaussian_l_ell(self.sigma)
    }
    fn support(&self) -> (f64, f64) {
        (-6.0 * self.sigma, 6.0 * self.sigma)
    }
    fn std_dev(&self) -> f64 {
        self.sigma
    }
}

/// `L_ℓ = 1 / (2σ)` for an isotropic gaussian.
pub fn gaussian_l_ell(sigma: f64) -> f64 {
    1.0 / (2.0 * sigma)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Uniform {
    half_width: f64,
}

impl Uniform {
    pub fn new(half_width: f64) -> Result<Self> {
        check_scale("uniform", half_width)?;
        Ok(Self { half_width })
    }
}

impl NoiseKernel for Uniform {
    fn family(&self) -> &'static str {
        "uniform"
    }
    fn scale(&self) -> f64 {
        self.half_width
    }
    fn density(&self, x: f64) -> f64 {
        if x.abs() <= self.half_width {
            0.5 / self.half_width
        } else {
            0.0
        }
    }
    fn cdf(&self, x: f64) -> f64 {
        ((x + self.half_width) / (2.0 * self.half_width)).clamp(0.0, 1.0)
    }
    fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        self.half_width * (2.0 * rng.random::<f64>() - 1.0)
    }
    fn sup_density(&self) -> f64 {
        0.5 / self.half_width
    }
    fn tv_lc_constant(&self) -> f64 {
        2.0 * self.sup_density()
    }
    fn support(&self) -> (f64, f64) {
        (-self.half_width, self.half_width)
    }
    fn std_dev(&self) -> f64 {
        self.half_width / 3f64.sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangular {
    half_width: f64,
}

impl Triangular {
    pub fn new(half_width: f64) -> Result<Self> {
        check_scale("triangular", half_width)?;
        Ok(Self { half_width })
    }
}

impl NoiseKernel for Triangular {
    fn family(&self) -> &'static str {
        "triangular"
    }
    fn scale(&self) -> f64 {
        self.half_width
    }
    fn density(&self, x: f64) -> f64 {
        let w = self.half_width;
        ((w - x.abs()) / (w * w)).max(0.0)
    }
    fn cdf(&self, x: f64) -> f64 {
        let w = self.half_width;
        if x <= -w {
            0.0
        } else if x <= 0.0 {
            (x + w) * (x + w) / (2.0 * w * w)
        } else if x < w {
            1.0 - (w - x) * (w - x) / (2.0 * w * w)
        } else {
            1.0
        }
    }
    fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        // sum of two independent U(−w/2, w/2)
        let w = self.half_width;
        w * (rng.random::<f64>() + rng.random::<f64>() - 1.0)
    }
    fn sup_density(&self) -> f64 {
        1.0 / self.half_width
    }
    fn tv_lc_constant(&self) -> f64 {
        2.0 * self.sup_density()
    }
    fn support(&self) -> (f64, f64) {
        (-self.half_width, self.half_width)
    }
    fn std_dev(&self) -> f64 {
        self.half_width / 6f64.sqrt()
    }
}

type KernelCtor = fn(f64) -> Result<Arc<dyn NoiseKernel>>;

/// Kernel families by name.
#[derive(Clone)]
pub struct KernelRegistry {
    ctors: BTreeMap<&'static str, KernelCtor>,
}

impl Default for KernelRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl KernelRegistry {
    pub fn empty() -> Self {
        Self { ctors: BTreeMap::new() }
    }

    pub fn builtin() -> Self {
        let mut reg = Self::empty();
        reg.register("gaussian", |s| Ok(Arc::new(Gaussian::new(s)?)));
        reg.register("uniform", |s| Ok(Arc::new(Uniform::new(s)?)));
        reg.register("triangular", |s| Ok(Arc::new(Triangular::new(s)?)));
        reg
    }

    pub fn register(&mut self, family: &'static str, ctor: KernelCtor) {
        self.ctors.insert(family, ctor);
    }

    pub fn families(&self) -> Vec<&'static str> {
        self.ctors.keys().copied().collect()
    }

    pub fn build(&self, family: &str, scale: f64) -> Result<Arc<dyn NoiseKernel>> {
        let ctor =
            self.ctors.get(family).ok_or_else(|| Error::Unknown { what: "noise family", name: family.to_string(), known: self.families().join(", ") })?;
        ctor(scale)
    }
}

/// Shorthand for [`KernelRegistry::builtin`] lookups.
pub fn kernel(family: &str, scale: f64) -> Result<Arc<dyn NoiseKernel>> {
    KernelRegistry::builtin().build(family, scale)
}

/// Numerical `TV(ℓ(· + h), ℓ)` from exact cell masses on a grid covering
/// both supports. Coarse-graining never increases TV, so the result is a
/// lower bound on the exact value. One cell edge sits at `−h/2`, where the
/// two densities of a symmetric unimodal kernel cross, so for the built-in
/// families no cell mixes signs and only rounding error remains.
pub fn tv_shift(kernel: &dyn NoiseKernel, h: f64) -> f64 {
    if h == 0.0 {
        return 0.0;
    }
    let (lo, hi) = kernel.support();
    let (lo, hi) = (lo - h.abs(), hi + h.abs());
    let dx = (hi - lo) / TV_GRID_CELLS as f64;
    let cross = -0.5 * h;
    let start = cross - ((cross - lo) / dx).ceil() * dx;
    let cells = ((hi - start) / dx).ceil() as usize;
    let mut prev_p = kernel.cdf(start);
    let mut prev_q = kernel.cdf(start + h);
    let mut acc = 0.0;
    for i in 1..=cells {
        let x = start + i as f64 * dx;
        let (cp, cq) = (kernel.cdf(x), kernel.cdf(x + h));
        acc += ((cp - prev_p) - (cq - prev_q)).abs();
        prev_p = cp;
        prev_q = cq;
    }
    (0.5 * acc).min(1.0)
}

/// Largest `tv_shift(h) − L_ℓ · h` over `shifts`. Certification passes when
/// the result is at most [`CERTIFY_TOLERANCE`].
pub fn certify_tv_lipschitz(kernel: &dyn NoiseKernel, shifts: &[f64]) -> f64 {
    let l = kernel.tv_lc_constant();
    shifts.iter().map(|h| tv_shift(kernel, *h) - l * h.abs()).fold(f64::NEG_INFINITY, f64::max)
}

/// Noise injection `a = clip(π(s) + η)`, one fresh kernel draw per action.
pub fn inject(policy: &PolicySpec, kernel: Arc<dyn NoiseKernel>) -> Result<PolicySpec> {
    if policy.kind() == PolicyKind::NoiseInjected {
        return Err(Error::invalid(format!("policy `{}` already carries noise", policy.label())));
    }
    Ok(policy.with_noise(kernel))
}

/// Per-cell kernel masses `w_k = ℓ([(k − ½)dx, (k + ½)dx])` for `|k| ≤ K`.
fn cell_weights(kernel: &dyn NoiseKernel, spacing: f64) -> Vec<f64> {
    let (lo, hi) = kernel.support();
    let reach = (lo.abs().max(hi.abs()) / spacing + 0.5).ceil() as i64;
    (-reach..=reach).map(|k| kernel.cdf((k as f64 + 0.5) * spacing) - kernel.cdf((k as f64 - 0.5) * spacing)).collect()
}

/// `(f * ℓ)(x_i) ≈ Σ_k f(x_i − k dx) ℓ(cell k)`, zero outside the grid.
pub fn convolve_grid(f: &[f64], kernel: &dyn NoiseKernel, spacing: f64) -> Result<Vec<f64>> {
    if !(spacing > 0.0 && spacing.is_finite()) {
        return Err(Error::invalid(format!("grid spacing must be positive, got {spacing}")));
    }
    let (lo, hi) = kernel.support();
    let cells = ((hi - lo) / spacing).floor() as usize;
    if cells < MIN_KERNEL_CELLS {
        return Err(Error::UnderResolved { cells, required: MIN_KERNEL_CELLS, max_spacing: (hi - lo) / MIN_KERNEL_CELLS as f64 });
    }
    let w = cell_weights(kernel, spacing);
    let reach = (w.len() / 2) as i64;
    let n = f.len() as i64;
    Ok((0..n)
        .map(|i| {
            let k_lo = (i - n + 1).max(-reach);
            let k_hi = i.min(reach);
            (k_lo..=k_hi).map(|k| f[(i - k) as usize] * w[(k + reach) as usize]).sum()
        })
        .collect())
}

/// Density of the pre-clip noisy action when the base action is `center`.
pub fn noisy_action_density(kernel: &dyn NoiseKernel, center: f64, lo: f64, hi: f64, n_cells: usize) -> Result<GridDensity> {
    let dx = (hi - lo) / n_cells as f64;
    let values = (0..n_cells)
        .map(|i| {
            let a = lo + i as f64 * dx - center;
            (kernel.cdf(a + dx) - kernel.cdf(a)) / dx
        })
        .collect();
    GridDensity::new(lo, hi, values)
}
