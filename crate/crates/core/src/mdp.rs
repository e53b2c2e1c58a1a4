//! Lipschitz MDPs on intervals, policies and seeded rollouts.
//!
//! Both built-in MDPs are deterministic, so the Wasserstein distance between
//! transition kernels is the distance between next states and the
//! Lipschitz spot-checks below compare plain difference quotients.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::noise::NoiseKernel;
use crate::stats::neumaier_sum;
use crate::stream::{stream, Purpose};

fn clip(x: f64, lo: f64, hi: f64) -> f64 {
    x.max(lo).min(hi)
}

/// Which closed-form dynamics an [`MdpSpec`] uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dynamics {
    /// `s' = clip(L_p s, −1, 1)`, `r = L_r s`, single action.
    ClipChain,
    /// `s' = clip(L_p (s + a), 0, 1)`, `r = −L_r s`.
    ShiftControl,
}

impl Dynamics {
    pub fn name(self) -> &'static str {
        match self {
            Dynamics::ClipChain => "clip-chain",
            Dynamics::ShiftControl => "shift-control",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialState {
    Uniform { lo: f64, hi: f64 },
    Point(f64),
}

impl InitialState {
    fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            InitialState::Point(s) => s,
            InitialState::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
        }
    }
}

/// A deterministic MDP on `S = [state_lo, state_hi]`, `A = [action_lo, action_hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MdpSpec {
    pub dynamics: Dynamics,
    pub state_lo: f64,
    pub state_hi: f64,
    pub action_lo: f64,
    pub action_hi: f64,
    pub gamma: f64,
    pub l_p: f64,
    pub l_r: f64,
    pub init: InitialState,
}

fn check_constants(l_p: f64, l_r: f64, gamma: f64) -> Result<()> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::invalid(format!("gamma must lie in [0, 1), got {gamma}")));
    }
    for (name, v) in [("L_p", l_p), ("L_r", l_r)] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::invalid(format!("{name} must be finite and nonnegative, got {v}")));
        }
    }
    Ok(())
}

impl MdpSpec {
    /// The clip chain: one action, dynamics alone decide regularity.
    pub fn clip_chain(l_p: f64, l_r: f64, gamma: f64) -> Result<Self> {
        check_constants(l_p, l_r, gamma)?;
        Ok(Self {
            dynamics: Dynamics::ClipChain,
            state_lo: -1.0,
            state_hi: 1.0,
            action_lo: 0.0,
            action_hi: 0.0,
            gamma,
            l_p,
            l_r,
            init: InitialState::Uniform { lo: 0.0, hi: 1.0 },
        })
    }

    /// The shift-control MDP whose optimal policy is `π ≡ 0` from `s = 0`.
    pub fn shift_control(l_p: f64, l_r: f64, gamma: f64) -> Result<Self> {
        check_constants(l_p, l_r, gamma)?;
        Ok(Self {
            dynamics: Dynamics::ShiftControl,
            state_lo: 0.0,
            state_hi: 1.0,
            action_lo: 0.0,
            action_hi: 1.0,
            gamma,
            l_p,
            l_r,
            init: InitialState::Point(0.0),
        })
    }

    pub fn with_init(mut self, init: InitialState) -> Self {
        self.init = init;
        self
    }

    pub fn name(&self) -> &'static str {
        self.dynamics.name()
    }

    pub fn transition(&self, s: f64, a: f64) -> f64 {
        match self.dynamics {
            Dynamics::ClipChain => clip(self.l_p * s, -1.0, 1.0),
            Dynamics::ShiftControl => clip(self.l_p * (s + a), 0.0, 1.0),
        }
    }

    pub fn reward(&self, s: f64, _a: f64) -> f64 {
        match self.dynamics {
            Dynamics::ClipChain => self.l_r * s,
            Dynamics::ShiftControl => -self.l_r * s,
        }
    }

    pub fn diam_s(&self) -> f64 {
        self.state_hi - self.state_lo
    }

    pub fn diam_a(&self) -> f64 {
        self.action_hi - self.action_lo
    }

    /// `sup |r|` over `S × A`; both rewards are linear in the state.
    pub fn r_max(&self) -> f64 {
        self.l_r * self.state_lo.abs().max(self.state_hi.abs())
    }

    pub fn clip_action(&self, a: f64) -> f64 {
        clip(a, self.action_lo, self.action_hi)
    }

    pub fn contains_state(&self, s: f64) -> bool {
        (self.state_lo..=self.state_hi).contains(&s)
    }

    /// Smallest horizon with `γ^H · R_max / (1 − γ) < tol`.
    pub fn truncation_horizon(&self, tol: f64) -> usize {
        let r_max = self.r_max();
        if r_max == 0.0 || self.gamma == 0.0 {
            return 1;
        }
        let h = ((tol * (1.0 - self.gamma) / r_max).ln() / self.gamma.ln()).floor() as usize + 1;
        h.max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    Deterministic,
    Constant,
    NoiseInjected,
}

/// One action decision. For noiseless policies all three fields coincide.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionDraw {
    /// `π(s)` clipped to the action interval.
    pub pre_noise: f64,
    /// `π(s) + η` before clipping; theory quantities are measured here.
    pub pre_clip: f64,
    /// The action handed to the environment.
    pub executed: f64,
}

/// A stationary policy on a 1-D action interval with declared Lipschitz constant.
#[derive(Clone)]
pub struct PolicySpec {
    kind: PolicyKind,
    map: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    l_pi: f64,
    noise: Option<Arc<dyn NoiseKernel>>,
    label: String,
}

impl fmt::Debug for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PolicySpec")
            .field("kind", &self.kind)
            .field("label", &self.label)
            .field("l_pi", &self.l_pi)
            .field("noise", &self.noise.as_ref().map(|k| (k.family(), k.scale())))
            .finish()
    }
}

impl PolicySpec {
    pub fn deterministic(label: impl Into<String>, l_pi: f64, map: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { kind: PolicyKind::Deterministic, map: Arc::new(map), l_pi, noise: None, label: label.into() }
    }

    /// `π(·|s) = δ_a` for every state.
    pub fn constant(a: f64) -> Self {
        Self { kind: PolicyKind::Constant, map: Arc::new(move |_| a), l_pi: 0.0, noise: None, label: format!("constant({a})") }
    }

    /// Wraps a noiseless policy with a noise kernel; see [`crate::noise::inject`].
    pub(crate) fn with_noise(&self, kernel: Arc<dyn NoiseKernel>) -> Self {
        Self {
            kind: PolicyKind::NoiseInjected,
            map: Arc::clone(&self.map),
            l_pi: self.l_pi,
            label: format!("{}+{}({})", self.label, kernel.family(), kernel.scale()),
            noise: Some(kernel),
        }
    }

    /// Replaces the mapping while keeping kind and noise; used to shift policies.
    pub(crate) fn map_actions(&self, label: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        let inner = Arc::clone(&self.map);
        Self { kind: self.kind, map: Arc::new(move |s| f(inner(s))), l_pi: self.l_pi, noise: self.noise.clone(), label: label.into() }
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn l_pi(&self) -> f64 {
        self.l_pi
    }

    pub fn noise(&self) -> Option<&dyn NoiseKernel> {
        self.noise.as_deref()
    }

    pub fn is_deterministic(&self) -> bool {
        self.noise.is_none()
    }

    /// The noiseless action `π(s)`, before any clipping.
    pub fn base_action(&self, s: f64) -> f64 {
        (self.map)(s)
    }

    /// Draws an action; noise-injected policies consume one kernel sample.
    pub fn act<R: Rng>(&self, mdp: &MdpSpec, s: f64, rng: &mut R) -> ActionDraw {
        let pre_noise = mdp.clip_action(self.base_action(s));
        let pre_clip = match &self.noise {
            Some(kernel) => pre_noise + kernel.sample(rng),
            None => pre_noise,
        };
        ActionDraw { pre_noise, pre_clip, executed: mdp.clip_action(pre_clip) }
    }
}

/// One episode. `actions` are the executed actions.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<f64>,
    pub actions: Vec<f64>,
    pub pre_noise_actions: Vec<f64>,
    pub pre_clip_actions: Vec<f64>,
    pub rewards: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Single episode under stream 0 of `seed`.
pub fn rollout(mdp: &MdpSpec, policy: &PolicySpec, horizon: usize, seed: u64) -> Result<Trajectory> {
    rollout_episode(mdp, policy, horizon, seed, 0)
}

pub fn rollout_episode(mdp: &MdpSpec, policy: &PolicySpec, horizon: usize, seed: u64, episode: u64) -> Result<Trajectory> {
    rollout_seeded(mdp, policy, horizon, Seeds::common(seed), episode)
}

/// Master seeds for the initial-state and noise streams of a rollout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seeds {
    pub init: u64,
    pub noise: u64,
}

impl Seeds {
    pub fn common(seed: u64) -> Self {
        Self { init: seed, noise: seed }
    }
}

pub fn rollout_seeded(mdp: &MdpSpec, policy: &PolicySpec, horizon: usize, seeds: Seeds, episode: u64) -> Result<Trajectory> {
    if horizon == 0 {
        return Err(Error::invalid("rollout horizon must be >= 1"));
    }
    let mut init_rng = stream(seeds.init, episode, Purpose::Init);
    let mut noise_rng = stream(seeds.noise, episode, Purpose::Noise);
    let mut traj = Trajectory {
        states: Vec::with_capacity(horizon),
        actions: Vec::with_capacity(horizon),
        pre_noise_actions: Vec::with_capacity(horizon),
        pre_clip_actions: Vec::with_capacity(horizon),
        rewards: Vec::with_capacity(horizon),
    };
    let mut s = mdp.init.sample(&mut init_rng);
    for _ in 0..horizon {
        let draw = policy.act(mdp, s, &mut noise_rng);
        traj.states.push(s);
        traj.actions.push(draw.executed);
        traj.pre_noise_actions.push(draw.pre_noise);
        traj.pre_clip_actions.push(draw.pre_clip);
        traj.rewards.push(mdp.reward(s, draw.executed));
        s = mdp.transition(s, draw.executed);
    }
    Ok(traj)
}

/// `Σ_t γ^t r_t` with compensated summation.
pub fn discounted_return(traj: &Trajectory, gamma: f64) -> f64 {
    let mut discount = 1.0;
    neumaier_sum(traj.rewards.iter().map(|r| {
        let term = discount * r;
        discount *= gamma;
        term
    }))
}

/// States along expert rollouts weighted by `(1 − γ) γ^t`.
#[derive(Debug, Clone, PartialEq)]
pub struct VisitationSample {
    pub states: Vec<f64>,
    pub weights: Vec<f64>,
}

impl VisitationSample {
    pub fn total_weight(&self) -> f64 {
        neumaier_sum(self.weights.iter().copied())
    }

    /// Weighted mean of `f` over the sample, i.e. an estimate of `E_{s∼d^π}[f(s)]`.
    pub fn expectation(&self, f: impl Fn(f64) -> f64) -> f64 {
        neumaier_sum(self.states.iter().zip(&self.weights).map(|(s, w)| w * f(*s))) / self.total_weight()
    }
}

pub fn visitation_states(mdp: &MdpSpec, policy: &PolicySpec, n_episodes: usize, horizon: usize, seed: u64) -> Result<VisitationSample> {
    if n_episodes == 0 {
        return Err(Error::invalid("visitation sampling needs n_episodes >= 1"));
    }
    let trajs: Vec<Trajectory> = (0..n_episodes as u64).into_par_iter().map(|ep| rollout_episode(mdp, policy, horizon, seed, ep)).collect::<Result<_>>()?;
    let weights_one: Vec<f64> = (0..horizon).map(|t| (1.0 - mdp.gamma) * mdp.gamma.powi(t as i32)).collect();
    let mut sample = VisitationSample { states: Vec::with_capacity(n_episodes * horizon), weights: Vec::with_capacity(n_episodes * horizon) };
    for traj in trajs {
        sample.states.extend(traj.states);
        sample.weights.extend_from_slice(&weights_one);
    }
    Ok(sample)
}

/// Largest sampled difference quotients of reward and transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzAudit {
    pub reward_quotient: f64,
    pub transition_quotient: f64,
}

impl LipschitzAudit {
    pub fn within(&self, mdp: &MdpSpec) -> bool {
        let slack = 1.0 + 1e-12;
        self.reward_quotient <= mdp.l_r * slack + 1e-15 && self.transition_quotient <= mdp.l_p * slack + 1e-15
    }
}

fn uniform_in<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Spot-checks the declared `(L_p, L_r)` on `n_pairs` random pairs of `(s, a)`.
pub fn audit_mdp(mdp: &MdpSpec, n_pairs: usize, seed: u64) -> LipschitzAudit {
    let mut rng = stream(seed, 0, Purpose::Data);
    let mut audit = LipschitzAudit { reward_quotient: 0.0, transition_quotient: 0.0 };
    for _ in 0..n_pairs {
        let (s1, s2) = (uniform_in(&mut rng, mdp.state_lo, mdp.state_hi), uniform_in(&mut rng, mdp.state_lo, mdp.state_hi));
        let (a1, a2) = (uniform_in(&mut rng, mdp.action_lo, mdp.action_hi), uniform_in(&mut rng, mdp.action_lo, mdp.action_hi));
        let d = (s1 - s2).abs() + (a1 - a2).abs();
        if d == 0.0 {
            continue;
        }
        audit.reward_quotient = audit.reward_quotient.max((mdp.reward(s1, a1) - mdp.reward(s2, a2)).abs() / d);
        audit.transition_quotient = audit.transition_quotient.max((mdp.transition(s1, a1) - mdp.transition(s2, a2)).abs() / d);
    }
    audit
}

/// Largest sampled `|π(s) − π(s')| / |s − s'|` of the clipped noiseless action.
pub fn audit_policy(mdp: &MdpSpec, policy: &PolicySpec, n_pairs: usize, seed: u64) -> f64 {
    let mut rng = stream(seed, 1, Purpose::Data);
    (0..n_pairs)
        .map(|_| {
            let (s1, s2) = (uniform_in(&mut rng, mdp.state_lo, mdp.state_hi), uniform_in(&mut rng, mdp.state_lo, mdp.state_hi));
            let d = (s1 - s2).abs();
            if d == 0.0 {
                0.0
            } else {
                (mdp.clip_action(policy.base_action(s1)) - mdp.clip_action(policy.base_action(s2))).abs() / d
            }
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shift(l_p: f64) -> MdpSpec {
        MdpSpec::shift_control(l_p, 1.0, 0.75).unwrap()
    }

    #[test]
    fn constructors_validate() {
        assert!(MdpSpec::clip_chain(1.15, 1.0, 1.0).is_err());
        assert!(MdpSpec::shift_control(-1.0, 1.0, 0.5).is_err());
        let m = MdpSpec::clip_chain(1.15, 1.0, 0.75).unwrap();
        assert_eq!((m.diam_s(), m.diam_a()), (2.0, 0.0));
        assert_eq!(m.r_max(), 1.0);
    }

    #[test]
    fn clip_chain_fixed_point() {
        let mdp = MdpSpec::clip_chain(1.15, 1.0, 0.75).unwrap().with_init(InitialState::Point(0.0));
        let t = rollout(&mdp, &PolicySpec::constant(0.0), 3, 9).unwrap();
        assert_eq!(t.states, vec![0.0; 3]);
        assert_eq!(t.rewards, vec![0.0; 3]);
    }

    #[test]
    fn shift_control_trajectories() {
        let t = rollout(&shift(0.8), &PolicySpec::constant(0.0), 5, 1).unwrap();
        assert_eq!(t.states, vec![0.0; 5]);
        assert_eq!(t.rewards, vec![0.0; 5]);

        let t = rollout(&shift(0.8), &PolicySpec::constant(0.5), 3, 1).unwrap();
        // independent recursion s_{k+1} = 0.8 (s_k + 0.5)
        let mut expect = vec![0.0];
        for _ in 0..2 {
            let s: f64 = *expect.last().unwrap();
            expect.push((0.8 * (s + 0.5)).min(1.0));
        }
        for (a, b) in t.states.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((t.states[1] - 0.4).abs() < 1e-15 && (t.states[2] - 0.72).abs() < 1e-15);
        assert!((discounted_return(&t, 0.75) - (-0.705)).abs() < 1e-12);
    }

    #[test]
    fn discounted_return_geometric() {
        let h = 12;
        let t =
            Trajectory { states: vec![0.0; h], actions: vec![0.0; h], pre_noise_actions: vec![0.0; h], pre_clip_actions: vec![0.0; h], rewards: vec![1.0; h] };
        assert!((discounted_return(&t, 0.5) - 2.0 * (1.0 - 0.5f64.powi(h as i32))).abs() < 1e-14);
        let zero = Trajectory { rewards: vec![0.0; h], ..t };
        assert_eq!(discounted_return(&zero, 0.5), 0.0);
    }

    #[test]
    fn rollout_rejects_zero_horizon() {
        assert!(rollout(&shift(0.8), &PolicySpec::constant(0.0), 0, 1).is_err());
    }

    #[test]
    fn visitation_examples() {
        let mdp = shift(0.8);
        let v = visitation_states(&mdp, &PolicySpec::constant(0.0), 4, 10, 3).unwrap();
        assert!(v.states.iter().all(|s| *s == 0.0));
        assert!((v.total_weight() - 4.0 * (1.0 - 0.75f64.powi(10))).abs() < 1e-12);

        let chain = MdpSpec::clip_chain(1.15, 1.0, 0.75).unwrap().with_init(InitialState::Point(1.0));
        let v = visitation_states(&chain, &PolicySpec::constant(0.0), 2, 20, 3).unwrap();
        assert!(v.states.iter().all(|s| *s == 1.0));

        let v = visitation_states(&mdp, &PolicySpec::constant(0.5), 1, 3, 3).unwrap();
        let expect = [0.0, 0.4, 0.72];
        for (s, e) in v.states.iter().zip(expect) {
            assert!((s - e).abs() < 1e-15);
        }
        assert!((v.weights[1] / v.weights[0] - 0.75).abs() < 1e-15);
        assert!((v.weights[2] / v.weights[0] - 0.5625).abs() < 1e-15);
        assert!(visitation_states(&mdp, &PolicySpec::constant(0.5), 0, 3, 3).is_err());
    }

    #[test]
    fn declared_constants_hold() {
        for mdp in [MdpSpec::clip_chain(1.15, 1.0, 0.9).unwrap(), shift(1.15), shift(0.8)] {
            let audit = audit_mdp(&mdp, 10_000, 5);
            assert!(audit.within(&mdp), "{mdp:?} {audit:?}");
        }
        let mdp = shift(0.8);
        let p = PolicySpec::deterministic("sin", 1.2, |s| 0.5 + 0.3 * (4.0 * s).sin());
        assert!(audit_policy(&mdp, &p, 10_000, 2) <= 1.2 + 1e-9);
    }

    #[test]
    fn truncation_horizon_rule() {
        let mdp = MdpSpec::shift_control(1.15, 1.0, 0.9).unwrap();
        let h = mdp.truncation_horizon(1e-6);
        assert!(0.9f64.powi(h as i32) * 10.0 < 1e-6);
        assert!(0.9f64.powi(h as i32 - 1) * 10.0 >= 1e-6);
    }
}
