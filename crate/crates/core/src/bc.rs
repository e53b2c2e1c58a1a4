//! Behavioral cloning: demonstrations, least-squares imitators and gap
//! measurement.

use std::fmt;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mdp::{rollout_seeded, MdpSpec, PolicySpec, Seeds};
use crate::metrics::{w1_point_masses, PointMass};
use crate::output::fmt_num;
use crate::stats::{neumaier_sum, MeanCi};
use crate::stream::derive_seed;
use crate::value::episode_returns;

/// Default ridge penalty of [`fit_imitator`].
pub const DEFAULT_RIDGE: f64 = 1e-8;

/// Expert state/action pairs with `(1 − γ) γ^t` weights.
///
/// `actions_executed` holds the noisy action before clipping, and
/// `actions_pre_noise` the expert's own action; both coincide for
/// noiseless experts.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoDataset {
    pub states: Vec<f64>,
    pub actions_executed: Vec<f64>,
    pub actions_pre_noise: Vec<f64>,
    pub weights: Vec<f64>,
    pub episodes: Vec<u64>,
    pub steps: Vec<usize>,
    pub source_policy: String,
    pub mdp: String,
    pub seed: u64,
    pub action_lo: f64,
    pub action_hi: f64,
}

impl DemoDataset {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    fn weighted_mean(&self, f: impl Fn(usize) -> f64) -> f64 {
        let total = neumaier_sum(self.weights.iter().copied());
        neumaier_sum((0..self.len()).map(|i| self.weights[i] * f(i))) / total
    }

    fn imitator_action(&self, imitator: &PolicySpec, s: f64) -> f64 {
        imitator.base_action(s).clamp(self.action_lo, self.action_hi)
    }

    /// `E_d[W(π_E(·|s), π_I(·|s))]` for deterministic policies.
    pub fn mean_wasserstein(&self, imitator: &PolicySpec) -> Result<f64> {
        let mut acc = Vec::with_capacity(self.len());
        for i in 0..self.len() {
            let a = PointMass::scalar(self.actions_pre_noise[i])?;
            let b = PointMass::scalar(self.imitator_action(imitator, self.states[i]))?;
            acc.push(w1_point_masses(&a, &b)?);
        }
        Ok(self.weighted_mean(|i| acc[i]))
    }

    /// `E_d[TV]`; for deterministic policies TV is the indicator of disagreement.
    pub fn mean_tv(&self, imitator: &PolicySpec) -> f64 {
        self.weighted_mean(|i| if self.actions_pre_noise[i] == self.imitator_action(imitator, self.states[i]) { 0.0 } else { 1.0 })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = format!(
            "# source_policy = {}\n# mdp = {}\n# seed = {}\n# action_interval = {},{}\nstate,action_executed,action_pre_noise,weight,episode,t\n",
            self.source_policy,
            self.mdp,
            self.seed,
            fmt_num(self.action_lo),
            fmt_num(self.action_hi)
        );
        for i in 0..self.len() {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                fmt_num(self.states[i]),
                fmt_num(self.actions_executed[i]),
                fmt_num(self.actions_pre_noise[i]),
                fmt_num(self.weights[i]),
                self.episodes[i],
                self.steps[i]
            ));
        }
        fs::write(path, out)?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut d = DemoDataset {
            states: vec![],
            actions_executed: vec![],
            actions_pre_noise: vec![],
            weights: vec![],
            episodes: vec![],
            steps: vec![],
            source_policy: String::new(),
            mdp: String::new(),
            seed: 0,
            action_lo: f64::NEG_INFINITY,
            action_hi: f64::INFINITY,
        };
        let bad = |line: usize, msg: &str| Error::invalid(format!("{}:{line}: {msg}", path.display()));
        let mut header_seen = false;
        for (n, line) in text.lines().enumerate() {
            let n = n + 1;
            if let Some(meta) = line.strip_prefix('#') {
                if let Some((k, v)) = meta.split_once('=') {
                    let v = v.trim();
                    match k.trim() {
                        "source_policy" => d.source_policy = v.into(),
                        "mdp" => d.mdp = v.into(),
                        "seed" => d.seed = v.parse().map_err(|_| bad(n, "bad seed"))?,
                        "action_interval" => {
                            let (lo, hi) = v.split_once(',').ok_or_else(|| bad(n, "bad action interval"))?;
                            d.action_lo = lo.parse().map_err(|_| bad(n, "bad action interval"))?;
                            d.action_hi = hi.parse().map_err(|_| bad(n, "bad action interval"))?;
                        }
                        _ => {}
                    }
                }
                continue;
            }
            if !header_seen {
                if line.trim() != "state,action_executed,action_pre_noise,weight,episode,t" {
                    return Err(bad(n, "unexpected header"));
                }
                header_seen = true;
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(bad(n, "expected 6 columns"));
            }
            let num = |i: usize| f[i].parse::<f64>().map_err(|_| bad(n, "bad number"));
            d.states.push(num(0)?);
            d.actions_executed.push(num(1)?);
            d.actions_pre_noise.push(num(2)?);
            d.weights.push(num(3)?);
            d.episodes.push(f[4].parse().map_err(|_| bad(n, "bad episode"))?);
            d.steps.push(f[5].parse().map_err(|_| bad(n, "bad step"))?);
        }
        Ok(d)
    }
}

pub fn collect(mdp: &MdpSpec, expert: &PolicySpec, n_episodes: usize, horizon: usize, seed: u64) -> Result<DemoDataset> {
    if n_episodes == 0 {
        return Err(Error::invalid("collect needs n_episodes >= 1"));
    }
    let trajs = (0..n_episodes as u64).into_par_iter().map(|ep| rollout_seeded(mdp, expert, horizon, Seeds::common(seed), ep)).collect::<Result<Vec<_>>>()?;
    let cap = n_episodes * horizon;
    let mut d = DemoDataset {
        states: Vec::with_capacity(cap),
        actions_executed: Vec::with_capacity(cap),
        actions_pre_noise: Vec::with_capacity(cap),
        weights: Vec::with_capacity(cap),
        episodes: Vec::with_capacity(cap),
        steps: Vec::with_capacity(cap),
        source_policy: expert.label().to_string(),
        mdp: format!("{}(L_p={}, L_r={}, gamma={})", mdp.name(), mdp.l_p, mdp.l_r, mdp.gamma),
        seed,
        action_lo: mdp.action_lo,
        action_hi: mdp.action_hi,
    };
    for (ep, tr) in trajs.into_iter().enumerate() {
        let mut w = 1.0 - mdp.gamma;
        for t in 0..tr.len() {
            d.states.push(tr.states[t]);
            d.actions_executed.push(tr.pre_clip_actions[t]);
            d.actions_pre_noise.push(tr.pre_noise_actions[t]);
            d.weights.push(w);
            d.episodes.push(ep as u64);
            d.steps.push(t);
            w *= mdp.gamma;
        }
    }
    Ok(d)
}

/// A linear-in-parameters hypothesis class `π(s) = φ(s)ᵀθ`.
pub trait HypothesisClass: Send + Sync + fmt::Debug {
    fn name(&self) -> String;
    fn dim(&self) -> usize;
    fn features(&self, s: f64, out: &mut [f64]);
}

/// Hat functions on `knots` equispaced points of `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiecewiseLinear {
    pub knots: usize,
    pub lo: f64,
    pub hi: f64,
}

impl HypothesisClass for PiecewiseLinear {
    fn name(&self) -> String {
        format!("piecewise-linear({})", self.knots)
    }

    fn dim(&self) -> usize {
        self.knots
    }

    fn features(&self, s: f64, out: &mut [f64]) {
        out.fill(0.0);
        let step = (self.hi - self.lo) / (self.knots - 1) as f64;
        let u = ((s - self.lo) / step).clamp(0.0, (self.knots - 1) as f64);
        let i = (u.floor() as usize).min(self.knots - 2);
        let frac = u - i as f64;
        out[i] = 1.0 - frac;
        out[i + 1] = frac;
    }
}

/// Monomials in the rescaled state `x = (2s − lo − hi) / (hi − lo)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Polynomial {
    pub degree: usize,
    pub lo: f64,
    pub hi: f64,
}

impl HypothesisClass for Polynomial {
    fn name(&self) -> String {
        format!("polynomial({})", self.degree)
    }

    fn dim(&self) -> usize {
        self.degree + 1
    }

    fn features(&self, s: f64, out: &mut [f64]) {
        let x = (2.0 * s - self.lo - self.hi) / (self.hi - self.lo);
        let mut p = 1.0;
        for o in out.iter_mut() {
            *o = p;
            p *= x;
        }
    }
}

/// Builds a hypothesis class by name over the state interval.
pub fn hypothesis(name: &str, size: usize, lo: f64, hi: f64) -> Result<Arc<dyn HypothesisClass>> {
    match name {
        "piecewise-linear" if size >= 2 => Ok(Arc::new(PiecewiseLinear { knots: size, lo, hi })),
        "piecewise-linear" => Err(Error::invalid("piecewise-linear needs at least 2 knots")),
        "polynomial" => Ok(Arc::new(Polynomial { degree: size, lo, hi })),
        other => Err(Error::Unknown { what: "hypothesis class", name: other.into(), known: "piecewise-linear, polynomial".into() }),
    }
}

/// Least-squares coefficients with the class that produced them.
#[derive(Debug, Clone)]
pub struct FittedImitator {
    pub class: Arc<dyn HypothesisClass>,
    pub coefficients: Vec<f64>,
    pub policy: PolicySpec,
}

impl FittedImitator {
    pub fn predict(&self, s: f64) -> f64 {
        let mut phi = vec![0.0; self.class.dim()];
        self.class.features(s, &mut phi);
        phi.iter().zip(&self.coefficients).map(|(a, b)| a * b).sum()
    }
}

/// Weighted ridge regression of pre-noise actions on states.
pub fn fit_imitator(data: &DemoDataset, class: Arc<dyn HypothesisClass>, ridge: f64) -> Result<FittedImitator> {
    if data.is_empty() {
        return Err(Error::invalid("cannot fit an imitator on an empty dataset"));
    }
    if !(ridge >= 0.0) {
        return Err(Error::invalid(format!("ridge must be nonnegative, got {ridge}")));
    }
    let p = class.dim();
    let mut a = DMatrix::<f64>::zeros(p, p);
    let mut b = DVector::<f64>::zeros(p);
    let mut phi = vec![0.0; p];
    for i in 0..data.len() {
        class.features(data.states[i], &mut phi);
        let w = data.weights[i];
        for r in 0..p {
            b[r] += w * phi[r] * data.actions_pre_noise[i];
            for c in 0..p {
                a[(r, c)] += w * phi[r] * phi[c];
            }
        }
    }
    let scale = a.diagonal().amax().max(f64::MIN_POSITIVE);
    for r in 0..p {
        a[(r, r)] += ridge;
    }
    let eig = SymmetricEigen::new(a.clone()).eigenvalues;
    let min_eig = eig.iter().copied().fold(f64::INFINITY, f64::min);
    if min_eig <= 1e-13 * scale {
        return Err(Error::RankDeficient(format!("{} on {} samples, smallest eigenvalue {min_eig:e}", class.name(), data.len())));
    }
    let theta = a.cholesky().ok_or_else(|| Error::RankDeficient(class.name()))?.solve(&b);
    let coefficients: Vec<f64> = theta.iter().copied().collect();

    let (lo, hi) = (data.action_lo, data.action_hi);
    let cls = Arc::clone(&class);
    let coef = coefficients.clone();
    let eval = move |s: f64| {
        let mut phi = vec![0.0; cls.dim()];
        cls.features(s, &mut phi);
        phi.iter().zip(&coef).map(|(x, c)| x * c).sum::<f64>().clamp(lo, hi)
    };
    // declared L_π from a fine scan over the observed state range
    let (s_lo, s_hi) = data.states.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), s| (a.min(*s), b.max(*s)));
    let l_pi = if s_hi > s_lo {
        let n = 2000;
        let h = (s_hi - s_lo) / n as f64;
        (0..n).map(|i| (eval(s_lo + (i + 1) as f64 * h) - eval(s_lo + i as f64 * h)).abs() / h).fold(0.0, f64::max)
    } else {
        0.0
    };
    let policy = PolicySpec::deterministic(format!("fit[{}]", class.name()), l_pi, eval);
    Ok(FittedImitator { class, coefficients, policy })
}

/// `E_d[(π_E(s) − π_I(s))²]` against the recorded pre-noise actions.
pub fn imitation_mse(data: &DemoDataset, imitator: &PolicySpec) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::invalid("imitation_mse needs a nonempty dataset"));
    }
    Ok(data.weighted_mean(|i| {
        let d = data.actions_pre_noise[i] - data.imitator_action(imitator, data.states[i]);
        d * d
    }))
}

/// The per-coordinate shift `(ε / √n) 1_n`, whose Euclidean norm is `ε`.
pub fn adversarial_shift(epsilon: f64, n_dims: usize) -> Result<Vec<f64>> {
    if !(epsilon >= 0.0) || n_dims == 0 {
        return Err(Error::invalid("adversarial shift needs epsilon >= 0 and n_dims >= 1"));
    }
    Ok(vec![epsilon / (n_dims as f64).sqrt(); n_dims])
}

/// `π_I(s) = π_E(s) + (ε / √n) 1_n`. Policies here have scalar actions, so
/// `n_dims` must be 1; use [`adversarial_shift`] for the vector itself.
pub fn adversarial_imitator(expert: &PolicySpec, epsilon: f64, n_dims: usize) -> Result<PolicySpec> {
    let shift = adversarial_shift(epsilon, n_dims)?;
    if n_dims != 1 {
        return Err(Error::DimensionMismatch { left: n_dims, right: 1 });
    }
    let d = shift[0];
    if d == 0.0 {
        return Ok(expert.clone());
    }
    Ok(expert.map_actions(format!("{}+{}", expert.label(), d), move |a| a + d))
}

/// `J^{π_E} − J^{π_I}` from two Monte-Carlo estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapEstimate {
    pub gap: f64,
    pub half_ci95: f64,
    pub expert: MeanCi,
    pub imitator: MeanCi,
}

impl GapEstimate {
    pub fn from_returns(expert: MeanCi, imitator: MeanCi) -> Self {
        Self { gap: expert.mean - imitator.mean, half_ci95: expert.half_ci95.hypot(imitator.half_ci95), expert, imitator }
    }
}

/// Both policies share initial states; their noise streams are independent.
pub fn measure_gap(mdp: &MdpSpec, expert: &PolicySpec, imitator: &PolicySpec, n_episodes: usize, horizon: usize, seed: u64) -> Result<GapEstimate> {
    Ok(measure_gaps(mdp, expert, std::slice::from_ref(imitator), n_episodes, horizon, seed)?[0])
}

/// [`measure_gap`] for several imitators against one expert estimate.
/// Every imitator uses the same imitator-side streams, so the returned gaps
/// are exactly those `measure_gap` would give one by one.
pub fn measure_gaps(mdp: &MdpSpec, expert: &PolicySpec, imitators: &[PolicySpec], n_episodes: usize, horizon: usize, seed: u64) -> Result<Vec<GapEstimate>> {
    if n_episodes < 2 {
        return Err(Error::invalid("measure_gap needs at least 2 episodes"));
    }
    let est = |policy: &PolicySpec, salt: u64| -> Result<MeanCi> {
        let seeds = Seeds { init: seed, noise: derive_seed(seed, salt) };
        Ok(MeanCi::from_samples(&episode_returns(mdp, policy, n_episodes, horizon, seeds)?))
    };
    let e = est(expert, 1)?;
    imitators.iter().map(|imi| Ok(GapEstimate::from_returns(e, est(imi, 2)?))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{inject, kernel};
    use crate::value::counterexample_gap_exact;

    fn shift(l_p: f64) -> MdpSpec {
        MdpSpec::shift_control(l_p, 1.0, 0.75).unwrap()
    }

    #[test]
    fn collect_examples() {
        let m = shift(0.8);
        let d = collect(&m, &PolicySpec::constant(0.0), 3, 20, 1).unwrap();
        assert_eq!(d.len(), 60);
        assert!(d.states.iter().chain(&d.actions_executed).all(|x| *x == 0.0));
        let d = collect(&m, &PolicySpec::constant(0.3), 2, 20, 1).unwrap();
        assert!(d.actions_executed.iter().all(|a| *a == 0.3));
        assert!((d.weights[1] / d.weights[0] - 0.75).abs() < 1e-15);

        let noisy = inject(&PolicySpec::constant(0.5), kernel("gaussian", 0.1).unwrap()).unwrap();
        let d = collect(&m, &noisy, 100, 100, 2).unwrap();
        let n = d.len() as f64;
        let mean = d.actions_executed.iter().sum::<f64>() / n;
        let sd = (d.actions_executed.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((sd - 0.1).abs() < 0.005, "{sd}");
        assert!(d.actions_pre_noise.iter().all(|a| *a == 0.5));
    }

    #[test]
    fn realizable_fits_are_exact() {
        let m = shift(0.8);
        let expert = PolicySpec::deterministic("lin", 0.3, |s| 0.2 + 0.3 * s);
        let d = collect(&m, &expert, 2, 40, 1).unwrap();
        let class = hypothesis("polynomial", 1, 0.0, 1.0).unwrap();
        let fit = fit_imitator(&d, class, 0.0).unwrap();
        // polynomial in x = 2s − 1: 0.2 + 0.3 (x + 1) / 2
        assert!((fit.coefficients[0] - 0.35).abs() < 1e-8 && (fit.coefficients[1] - 0.15).abs() < 1e-8);
        assert!(imitation_mse(&d, &fit.policy).unwrap() <= 1e-12);

        let c = collect(&m, &PolicySpec::constant(0.4), 2, 40, 1).unwrap();
        let pw = fit_imitator(&c, hypothesis("piecewise-linear", 4, 0.0, 1.0).unwrap(), DEFAULT_RIDGE).unwrap();
        assert!(imitation_mse(&c, &pw.policy).unwrap() <= 1e-12);
    }

    #[test]
    fn rank_deficiency_is_reported() {
        let m = shift(0.8);
        let d = collect(&m, &PolicySpec::constant(0.0), 2, 10, 1).unwrap();
        let err = fit_imitator(&d, hypothesis("polynomial", 2, 0.0, 1.0).unwrap(), 0.0).unwrap_err();
        assert!(matches!(err, Error::RankDeficient(_)));
        assert!(err.to_string().contains("ridge"));
        assert!(fit_imitator(&d, hypothesis("polynomial", 2, 0.0, 1.0).unwrap(), 1e-6).is_ok());
    }

    #[test]
    fn adversarial_examples() {
        let expert = PolicySpec::constant(0.0);
        let m = shift(0.8);
        let d = collect(&m, &expert, 2, 30, 1).unwrap();
        let same = adversarial_imitator(&expert, 0.0, 1).unwrap();
        assert_eq!(imitation_mse(&d, &same).unwrap(), 0.0);
        let imi = adversarial_imitator(&expert, 0.2, 1).unwrap();
        assert!((imitation_mse(&d, &imi).unwrap() - 0.04).abs() < 1e-12);
        assert!((d.mean_wasserstein(&imi).unwrap() - 0.2).abs() < 1e-12);
        assert!((d.mean_tv(&imi) - 1.0).abs() < 1e-12);
        let v = adversarial_shift(0.2, 4).unwrap();
        assert!(v.iter().all(|x| (x - 0.1).abs() < 1e-15));
        assert!((v.iter().map(|x| x * x).sum::<f64>().sqrt() - 0.2).abs() < 1e-15);
        assert!(adversarial_imitator(&expert, 0.2, 4).is_err());
    }

    #[test]
    fn gap_examples() {
        let m = shift(0.8);
        let h = m.truncation_horizon(1e-10);
        let e = PolicySpec::constant(0.0);
        let g = measure_gap(&m, &e, &e, 4, h, 1).unwrap();
        assert_eq!((g.gap, g.half_ci95), (0.0, 0.0));
        let delta = 1e-3;
        let g = measure_gap(&m, &e, &PolicySpec::constant(delta), 4, h, 1).unwrap();
        let exact = counterexample_gap_exact(delta, 0.8, 1.0, 0.75, 1e-12).unwrap();
        assert!((g.gap - exact).abs() < 1e-9);

        let m = shift(1.5);
        let r = |d: f64| measure_gap(&m, &e, &PolicySpec::constant(d), 2, h, 1).unwrap().gap / d;
        assert!(r(1e-4) > r(1e-2));
    }

    #[test]
    fn csv_round_trip() {
        let m = shift(0.8);
        let noisy = inject(&PolicySpec::constant(0.2), kernel("uniform", 0.05).unwrap()).unwrap();
        let d = collect(&m, &noisy, 2, 5, 9).unwrap();
        let path = std::env::temp_dir().join(format!("bcbounds-demo-{}.csv", std::process::id()));
        d.write_csv(&path).unwrap();
        let back = DemoDataset::read_csv(&path).unwrap();
        std::fs::remove_file(&path).unwrap();
        assert_eq!(back.len(), d.len());
        assert_eq!(back.seed, 9);
        assert_eq!(back.source_policy, d.source_policy);
        for i in 0..d.len() {
            assert!((back.actions_executed[i] - d.actions_executed[i]).abs() < 1e-11);
        }
    }
}
