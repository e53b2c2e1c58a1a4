//! Regularity constants and performance-gap bounds.
//!
//! Constants that only exist in some regimes are `Option`s: `None` means the
//! formula does not apply, which experiments tabulate rather than treat as
//! an error.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::mdp::MdpSpec;

/// `L_Q = L_r / (1 − γ L_p (1 + L_π))` when `γ L_p (1 + L_π) < 1`.
pub fn lipschitz_q_constant(l_r: f64, l_p: f64, l_pi: f64, gamma: f64) -> Option<f64> {
    let rate = gamma * l_p * (1.0 + l_pi);
    (rate < 1.0).then(|| l_r / (1.0 - rate))
}

/// `ᾱ = min{1, −log γ / log(L_p (1 + L_π))}`, and 1 when `L_p (1 + L_π) ≤ 1`.
pub fn critical_exponent(gamma: f64, l_p: f64, l_pi: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::invalid(format!("critical exponent needs gamma in (0, 1), got {gamma}")));
    }
    let l = l_p * (1.0 + l_pi);
    if l <= 1.0 {
        return Ok(1.0);
    }
    Ok((-gamma.ln() / l.ln()).min(1.0))
}

/// `L_{Q,α} = L_r (diam S + diam A)^{1−α} / (1 − γ (L_p (1 + L_π))^α)` for `0 < α < ᾱ`.
pub fn holder_q_constant(alpha: f64, l_r: f64, diam_s: f64, diam_a: f64, gamma: f64, l_p: f64, l_pi: f64) -> Result<f64> {
    let alpha_bar = critical_exponent(gamma, l_p, l_pi)?;
    if !(alpha > 0.0) || alpha >= alpha_bar {
        return Err(Error::AlphaAboveCritical { alpha, alpha_bar });
    }
    let diam = diam_s + diam_a;
    if !(diam > 0.0) || diam_s < 0.0 || diam_a < 0.0 {
        return Err(Error::invalid("diameters must be nonnegative with a positive sum"));
    }
    Ok(l_r * diam.powf(1.0 - alpha) / (1.0 - gamma * (l_p * (1.0 + l_pi)).powf(alpha)))
}

/// `L_{V,α} = L_{Q,α} (L_π + 1)^α`.
pub fn holder_v_constant(l_q_alpha: f64, l_pi: f64, alpha: f64) -> f64 {
    l_q_alpha * (l_pi + 1.0).powf(alpha)
}

/// `L_ℓ = 1 / (2 min σ_i)` for a diagonal gaussian.
pub fn gaussian_tv_lipschitz_constant(sigma_diag: &[f64]) -> Result<f64> {
    if sigma_diag.is_empty() || sigma_diag.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::invalid("gaussian scales must be nonempty and positive"));
    }
    let min = sigma_diag.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(1.0 / (2.0 * min))
}

/// `E[W] ≤ √MSE` for deterministic policies.
pub fn mse_to_wasserstein(mse: f64) -> Result<f64> {
    if !(mse >= 0.0) {
        return Err(Error::invalid(format!("MSE must be nonnegative, got {mse}")));
    }
    Ok(mse.sqrt())
}

/// The five gap bounds. String names are the identifiers used in configs and CSVs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BoundKind {
    /// `2 R_max / (1 − γ)² · E[TV]`.
    Tv,
    /// `L_Q / (1 − γ) · E[W]`.
    Wasserstein,
    /// `L_{Q,α} / (1 − γ) · E[W^α]`.
    Holder,
    /// `L_{Q,α} / (1 − γ) · E[W]^α`.
    HolderJensen,
    /// `2 L_ℓ Q_max / (1 − γ) · E[W]` under noise injection.
    Noise,
}

impl BoundKind {
    pub const ALL: [BoundKind; 5] = [BoundKind::Tv, BoundKind::Wasserstein, BoundKind::Holder, BoundKind::HolderJensen, BoundKind::Noise];

    pub fn name(self) -> &'static str {
        match self {
            BoundKind::Tv => "tv-thm1",
            BoundKind::Wasserstein => "wasserstein-thm2",
            BoundKind::Holder => "holder-thm5",
            BoundKind::HolderJensen => "holder-jensen-eq4",
            BoundKind::Noise => "noise-thm6",
        }
    }

    /// What the divergence argument of [`gap_bound`] means for this kind.
    pub fn divergence(self) -> &'static str {
        match self {
            BoundKind::Tv => "E[TV]",
            BoundKind::Wasserstein | BoundKind::HolderJensen | BoundKind::Noise => "E[W]",
            BoundKind::Holder => "E[W^alpha]",
        }
    }
}

impl fmt::Display for BoundKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BoundKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BoundKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| Error::Unknown {
            what: "bound kind",
            name: s.to_string(),
            known: BoundKind::ALL.map(BoundKind::name).join(", "),
        })
    }
}

/// Inputs to [`gap_bound`]; absent constants are `None`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BoundConstants {
    pub gamma: f64,
    pub r_max: Option<f64>,
    pub q_max: Option<f64>,
    pub l_q: Option<f64>,
    pub alpha: Option<f64>,
    pub l_q_alpha: Option<f64>,
    pub l_ell: Option<f64>,
}

impl BoundConstants {
    /// `Q_max`, falling back to `R_max / (1 − γ)`.
    pub fn q_max_or_default(&self) -> Option<f64> {
        self.q_max.or(self.r_max.map(|r| r / (1.0 - self.gamma)))
    }
}

fn need(kind: BoundKind, symbol: &'static str, v: Option<f64>) -> Result<f64> {
    v.ok_or(Error::MissingConstant { kind: kind.name(), symbol })
}

pub fn gap_bound(kind: BoundKind, c: &BoundConstants, divergence: f64) -> Result<f64> {
    if !(divergence >= 0.0) {
        return Err(Error::invalid(format!("divergence must be nonnegative, got {divergence}")));
    }
    let h = 1.0 - c.gamma;
    Ok(match kind {
        BoundKind::Tv => 2.0 * need(kind, "R_max", c.r_max)? / (h * h) * divergence,
        BoundKind::Wasserstein => need(kind, "L_Q", c.l_q)? / h * divergence,
        BoundKind::Holder => need(kind, "L_Q_alpha", c.l_q_alpha)? / h * divergence,
        BoundKind::HolderJensen => {
            let l = need(kind, "L_Q_alpha", c.l_q_alpha)?;
            l / h * divergence.powf(need(kind, "alpha", c.alpha)?)
        }
        BoundKind::Noise => {
            let l_ell = need(kind, "L_ell", c.l_ell)?;
            2.0 * l_ell * need(kind, "Q_max", c.q_max_or_default())? / h * divergence
        }
    })
}

/// Problem description for [`BoundReport::evaluate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    pub gamma: f64,
    pub l_p: f64,
    pub l_r: f64,
    pub l_pi: f64,
    pub diam_s: f64,
    pub diam_a: f64,
    pub alpha: Option<f64>,
    pub l_ell: Option<f64>,
    pub r_max: Option<f64>,
    pub q_max: Option<f64>,
}

impl BoundInputs {
    pub fn from_mdp(mdp: &MdpSpec, l_pi: f64) -> Self {
        Self {
            gamma: mdp.gamma,
            l_p: mdp.l_p,
            l_r: mdp.l_r,
            l_pi,
            diam_s: mdp.diam_s(),
            diam_a: mdp.diam_a(),
            alpha: None,
            l_ell: None,
            r_max: Some(mdp.r_max()),
            q_max: None,
        }
    }
}

/// Every constant for one configuration, plus an optional evaluated bound.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub gamma: f64,
    pub l_p: f64,
    pub l_r: f64,
    pub l_pi: f64,
    pub lipschitz_regime_ok: bool,
    pub l_q: Option<f64>,
    pub alpha_bar: f64,
    pub requested_alpha: Option<f64>,
    pub l_q_alpha: Option<f64>,
    pub l_v_alpha: Option<f64>,
    pub l_ell: Option<f64>,
    pub q_max: Option<f64>,
    pub r_max: Option<f64>,
    pub gap_bound_value: Option<f64>,
    pub bound_kind: Option<BoundKind>,
}

impl BoundReport {
    pub fn evaluate(inp: &BoundInputs) -> Result<Self> {
        let alpha_bar = critical_exponent(inp.gamma, inp.l_p, inp.l_pi)?;
        let l_q = lipschitz_q_constant(inp.l_r, inp.l_p, inp.l_pi, inp.gamma);
        let l_q_alpha = match inp.alpha {
            Some(a) if a < alpha_bar => Some(holder_q_constant(a, inp.l_r, inp.diam_s, inp.diam_a, inp.gamma, inp.l_p, inp.l_pi)?),
            _ => None,
        };
        let consts = BoundConstants { gamma: inp.gamma, r_max: inp.r_max, q_max: inp.q_max, ..Default::default() };
        Ok(Self {
            gamma: inp.gamma,
            l_p: inp.l_p,
            l_r: inp.l_r,
            l_pi: inp.l_pi,
            lipschitz_regime_ok: l_q.is_some(),
            l_q,
            alpha_bar,
            requested_alpha: inp.alpha,
            l_q_alpha,
            l_v_alpha: l_q_alpha.map(|l| holder_v_constant(l, inp.l_pi, inp.alpha.unwrap_or(1.0))),
            l_ell: inp.l_ell,
            q_max: consts.q_max_or_default(),
            r_max: inp.r_max,
            gap_bound_value: None,
            bound_kind: None,
        })
    }

    pub fn constants(&self) -> BoundConstants {
        BoundConstants {
            gamma: self.gamma,
            r_max: self.r_max,
            q_max: self.q_max,
            l_q: self.l_q,
            alpha: self.requested_alpha,
            l_q_alpha: self.l_q_alpha,
            l_ell: self.l_ell,
        }
    }

    /// Evaluates `kind` at `divergence`, or leaves the value at `None` when
    /// the kind is inapplicable in this regime.
    pub fn with_gap(mut self, kind: BoundKind, divergence: f64) -> Result<Self> {
        self.bound_kind = Some(kind);
        self.gap_bound_value = match gap_bound(kind, &self.constants(), divergence) {
            Ok(v) => Some(v),
            Err(Error::MissingConstant { .. }) => None,
            Err(e) => return Err(e),
        };
        Ok(self)
    }

    /// `(symbol, value)` rows, with inapplicable entries as `None`.
    pub fn rows(&self) -> Vec<(&'static str, Option<f64>)> {
        vec![
            ("gamma", Some(self.gamma)),
            ("L_p", Some(self.l_p)),
            ("L_r", Some(self.l_r)),
            ("L_pi", Some(self.l_pi)),
            ("L_Q", self.l_q),
            ("alpha_bar", Some(self.alpha_bar)),
            ("alpha", self.requested_alpha),
            ("L_Q_alpha", self.l_q_alpha),
            ("L_V_alpha", self.l_v_alpha),
            ("L_ell", self.l_ell),
            ("R_max", self.r_max),
            ("Q_max", self.q_max),
        ]
    }
}
