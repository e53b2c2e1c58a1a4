//! Closed-form values for the built-in MDPs, Monte-Carlo evaluation and a
//! tabular oracle for the performance difference lemma.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mdp::{discounted_return, rollout_seeded, MdpSpec, PolicySpec, Seeds};
use crate::stats::{neumaier_sum, MeanCi};
use crate::stream::{stream, Purpose};

/// Default series truncation tolerance.
pub const SERIES_TOL: f64 = 1e-10;

/// Number of terms `K` with `L_r γ^K / (1 − γ) ≤ tol`.
pub fn series_terms(l_r: f64, gamma: f64, tol: f64) -> Result<usize> {
    if !(tol > 0.0) {
        return Err(Error::invalid(format!("series tolerance must be positive, got {tol}")));
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::invalid(format!("gamma must lie in [0, 1), got {gamma}")));
    }
    if l_r == 0.0 {
        return Ok(0);
    }
    if gamma == 0.0 {
        return Ok(1);
    }
    let k = ((tol * (1.0 - gamma) / l_r).ln() / gamma.ln()).ceil();
    Ok(k.max(1.0) as usize)
}

/// `V(s) = L_r Σ_k γ^k clip(L_p^k s, −1, 1)` on the clip chain.
pub fn clipchain_v_exact(s: f64, l_p: f64, l_r: f64, gamma: f64, tol: f64) -> Result<f64> {
    let k = series_terms(l_r, gamma, tol)?;
    let (mut x, mut disc) = (s.clamp(-1.0, 1.0), 1.0);
    let mut acc = 0.0;
    for _ in 0..k {
        acc += disc * x;
        x = (l_p * x).clamp(-1.0, 1.0);
        disc *= gamma;
    }
    Ok(l_r * acc)
}

/// Tabulated clip-chain value with its truncation budget.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueCurve {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub l_p: f64,
    pub l_r: f64,
    pub gamma: f64,
    pub truncation_k: usize,
    pub truncation_bound: f64,
}

impl ValueCurve {
    /// `n_points` equispaced states on `[lo, hi]`, endpoints included.
    pub fn clip_chain(lo: f64, hi: f64, n_points: usize, l_p: f64, l_r: f64, gamma: f64, tol: f64) -> Result<Self> {
        if n_points < 2 || !(hi > lo) {
            return Err(Error::invalid("value curve needs hi > lo and at least 2 points"));
        }
        let k = series_terms(l_r, gamma, tol)?;
        let step = (hi - lo) / (n_points - 1) as f64;
        let grid: Vec<f64> = (0..n_points).map(|i| lo + i as f64 * step).collect();
        let values = grid.par_iter().map(|s| clipchain_v_exact(*s, l_p, l_r, gamma, tol)).collect::<Result<_>>()?;
        Ok(Self { grid, values, l_p, l_r, gamma, truncation_k: k, truncation_bound: l_r * gamma.powi(k as i32) / (1.0 - gamma) })
    }

    pub fn spacing(&self) -> f64 {
        self.grid[1] - self.grid[0]
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::invalid(format!("delta must lie in (0, 1], got {delta}")));
    }
    Ok(())
}

/// `L_r Σ_k γ^k clip(δ L_p^k, 0, 1)`.
pub fn counterexample_gap_series(delta: f64, l_p: f64, l_r: f64, gamma: f64, tol: f64) -> Result<f64> {
    check_delta(delta)?;
    let k = series_terms(l_r, gamma, tol)?;
    let (mut x, mut disc, mut acc) = (delta, 1.0, 0.0);
    for _ in 0..k {
        acc += disc * x;
        x = (l_p * x).min(1.0);
        disc *= gamma;
    }
    Ok(l_r * acc)
}

/// Exact `J^{π*} − J^{π_δ}` on shift control from `s_0 = 0`:
/// `L_r Σ_k γ^k s_k` with `s_{k+1} = clip(L_p (s_k + δ), 0, 1)`.
pub fn counterexample_gap_exact(delta: f64, l_p: f64, l_r: f64, gamma: f64, tol: f64) -> Result<f64> {
    check_delta(delta)?;
    let k = series_terms(l_r, gamma, tol)?;
    let (mut s, mut disc, mut acc) = (0.0f64, 1.0, 0.0);
    for _ in 0..k {
        acc += disc * s;
        s = (l_p * (s + delta)).clamp(0.0, 1.0);
        disc *= gamma;
    }
    Ok(l_r * acc)
}

/// Discounted returns of `n_episodes` seeded episodes, in episode order.
pub fn episode_returns(mdp: &MdpSpec, policy: &PolicySpec, n_episodes: usize, horizon: usize, seeds: Seeds) -> Result<Vec<f64>> {
    (0..n_episodes as u64).into_par_iter().map(|ep| rollout_seeded(mdp, policy, horizon, seeds, ep).map(|t| discounted_return(&t, mdp.gamma))).collect()
}

/// Monte-Carlo `J^π` with a normal 95% interval.
pub fn mc_return(mdp: &MdpSpec, policy: &PolicySpec, n_episodes: usize, horizon: usize, seed: u64) -> Result<MeanCi> {
    if n_episodes < 2 {
        return Err(Error::invalid("mc_return needs at least 2 episodes"));
    }
    Ok(MeanCi::from_samples(&episode_returns(mdp, policy, n_episodes, horizon, Seeds::common(seed))?))
}

/// `(f(x + h) − f(x − h)) / 2h`, falling back to a one-sided difference
/// when `x ± h` leaves `[lo, hi]`.
pub fn derivative(f: impl Fn(f64) -> f64, x: f64, h: f64, lo: f64, hi: f64) -> f64 {
    if x - h < lo {
        (f(x + h) - f(x)) / h
    } else if x + h > hi {
        (f(x) - f(x - h)) / h
    } else {
        (f(x + h) - f(x - h)) / (2.0 * h)
    }
}

/// Deterministic finite MDP; `next[s * n_actions + a]` is the successor.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    pub n_states: usize,
    pub n_actions: usize,
    pub next: Vec<usize>,
    pub reward: Vec<f64>,
    pub gamma: f64,
    pub init: Vec<f64>,
}

impl TabularMdp {
    pub fn new(n_states: usize, n_actions: usize, next: Vec<usize>, reward: Vec<f64>, gamma: f64, init: Vec<f64>) -> Result<Self> {
        let n = n_states * n_actions;
        if n_states == 0 || n_actions == 0 {
            return Err(Error::invalid("tabular MDP needs at least one state and action"));
        }
        if next.len() != n || reward.len() != n {
            return Err(Error::SizeMismatch { left: next.len().min(reward.len()), right: n });
        }
        if init.len() != n_states {
            return Err(Error::SizeMismatch { left: init.len(), right: n_states });
        }
        if let Some(bad) = next.iter().find(|&&j| j >= n_states) {
            return Err(Error::invalid(format!("successor index {bad} out of range")));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::invalid(format!("gamma must lie in [0, 1), got {gamma}")));
        }
        if init.iter().any(|p| *p < 0.0) || (init.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("initial distribution must be a probability vector"));
        }
        Ok(Self { n_states, n_actions, next, reward, gamma, init })
    }

    fn idx(&self, s: usize, a: usize) -> usize {
        s * self.n_actions + a
    }

    fn check_policy(&self, policy: &[usize]) -> Result<()> {
        if policy.len() != self.n_states {
            return Err(Error::SizeMismatch { left: policy.len(), right: self.n_states });
        }
        if policy.iter().any(|&a| a >= self.n_actions) {
            return Err(Error::invalid("policy action index out of range"));
        }
        Ok(())
    }

    /// Nearest-state discretization of shift control on `n_states × n_actions` grids.
    pub fn shift_control(mdp: &MdpSpec, n_states: usize, n_actions: usize) -> Result<Self> {
        if n_states < 2 || n_actions < 2 {
            return Err(Error::invalid("discretization needs at least 2 states and 2 actions"));
        }
        let ds = (mdp.state_hi - mdp.state_lo) / (n_states - 1) as f64;
        let da = (mdp.action_hi - mdp.action_lo) / (n_actions - 1) as f64;
        let mut next = Vec::with_capacity(n_states * n_actions);
        let mut reward = Vec::with_capacity(n_states * n_actions);
        for i in 0..n_states {
            let s = mdp.state_lo + i as f64 * ds;
            for j in 0..n_actions {
                let a = mdp.action_lo + j as f64 * da;
                let s2 = mdp.transition(s, a);
                next.push((((s2 - mdp.state_lo) / ds).round() as usize).min(n_states - 1));
                reward.push(mdp.reward(s, a));
            }
        }
        let mut init = vec![0.0; n_states];
        let i0 = match mdp.init {
            crate::mdp::InitialState::Point(s0) => ((s0 - mdp.state_lo) / ds).round() as usize,
            crate::mdp::InitialState::Uniform { .. } => {
                return Err(Error::invalid("tabular discretization expects a point-mass initial state"));
            }
        };
        init[i0.min(n_states - 1)] = 1.0;
        Self::new(n_states, n_actions, next, reward, mdp.gamma, init)
    }

    /// Random successors, rewards in `[−1, 1]` and a random initial law.
    pub fn random(n_states: usize, n_actions: usize, gamma: f64, seed: u64) -> Result<Self> {
        let mut rng = stream(seed, 0, Purpose::Data);
        let n = n_states * n_actions;
        let next = (0..n).map(|_| rng.random_range(0..n_states)).collect();
        let reward = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let raw: Vec<f64> = (0..n_states).map(|_| rng.random::<f64>() + 1e-3).collect();
        let z: f64 = raw.iter().sum();
        Self::new(n_states, n_actions, next, reward, gamma, raw.iter().map(|p| p / z).collect())
    }

    pub fn random_policy(&self, seed: u64) -> Vec<usize> {
        let mut rng = stream(seed, 1, Purpose::Data);
        (0..self.n_states).map(|_| rng.random_range(0..self.n_actions)).collect()
    }
}

/// Value tables from [`tabular_solve`]; `q[s * n_actions + a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularValues {
    pub q: Vec<f64>,
    pub v: Vec<f64>,
    pub iterations: usize,
}

/// Bellman residual target of [`tabular_solve`].
pub const BELLMAN_TOL: f64 = 1e-10;

/// Policy evaluation by fixed-point iteration until `‖Q − T^π Q‖_∞ ≤ 1e-10`.
pub fn tabular_solve(t: &TabularMdp, policy: &[usize]) -> Result<TabularValues> {
    t.check_policy(policy)?;
    let mut q = vec![0.0; t.n_states * t.n_actions];
    let mut v = vec![0.0; t.n_states];
    let max_iter = 1_000_000;
    for it in 1..=max_iter {
        let mut change = 0.0f64;
        let new_q: Vec<f64> = (0..q.len()).map(|i| t.reward[i] + t.gamma * v[t.next[i]]).collect();
        for (old, new) in q.iter().zip(&new_q) {
            change = change.max((old - new).abs());
        }
        q = new_q;
        for (s, vs) in v.iter_mut().enumerate() {
            *vs = q[t.idx(s, policy[s])];
        }
        // residual of the new iterate is at most γ times this change
        if t.gamma * change <= BELLMAN_TOL * 0.5 {
            return Ok(TabularValues { q, v, iterations: it });
        }
    }
    Err(Error::invalid("value iteration did not converge"))
}

fn policy_matrix(t: &TabularMdp, policy: &[usize]) -> (DMatrix<f64>, DVector<f64>) {
    let n = t.n_states;
    let mut m = DMatrix::<f64>::identity(n, n);
    let mut r = DVector::<f64>::zeros(n);
    for s in 0..n {
        let i = t.idx(s, policy[s]);
        m[(s, t.next[i])] -= t.gamma;
        r[s] = t.reward[i];
    }
    (m, r)
}

/// Both sides of the performance difference lemma, computed exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdlCheck {
    /// `J^{π_E} − J^{π_I}`.
    pub lhs: f64,
    /// `(1 − γ)^{-1} E_{s∼d^{π_E}} [A^{π_I}(s, π_E(s))]`.
    pub rhs: f64,
    pub residual: f64,
}

pub fn pdl_check(t: &TabularMdp, pi_e: &[usize], pi_i: &[usize]) -> Result<PdlCheck> {
    t.check_policy(pi_e)?;
    t.check_policy(pi_i)?;
    let mu = DVector::from_column_slice(&t.init);
    let solve = |policy: &[usize]| -> Result<(DMatrix<f64>, DVector<f64>)> {
        let (m, r) = policy_matrix(t, policy);
        let lu = m.clone().lu();
        let v = lu.solve(&r).ok_or_else(|| Error::invalid("singular policy matrix"))?;
        Ok((m, v))
    };
    let (m_e, v_e) = solve(pi_e)?;
    let (_, v_i) = solve(pi_i)?;
    let lhs = mu.dot(&v_e) - mu.dot(&v_i);

    // d^T (I − γ P_E) = (1 − γ) μ^T
    let d = m_e.transpose().lu().solve(&(&mu * (1.0 - t.gamma))).ok_or_else(|| Error::invalid("singular occupancy system"))?;
    let adv = (0..t.n_states).map(|s| {
        let i = t.idx(s, pi_e[s]);
        let q_i = t.reward[i] + t.gamma * v_i[t.next[i]];
        d[s] * (q_i - v_i[s])
    });
    let rhs = neumaier_sum(adv) / (1.0 - t.gamma);
    Ok(PdlCheck { lhs, rhs, residual: (lhs - rhs).abs() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::InitialState;

    #[test]
    fn series_terms_meet_tail_bound() {
        for (l_r, g, tol) in [(1.0, 0.75, 1e-10), (2.0, 0.9, 1e-6), (0.5, 0.99, 1e-8)] {
            let k = series_terms(l_r, g, tol).unwrap();
            assert!(l_r * g.powi(k as i32) / (1.0 - g) <= tol * (1.0 + 1e-12));
            assert!(l_r * g.powi(k as i32 - 1) / (1.0 - g) > tol);
        }
        assert!(series_terms(1.0, 0.5, 0.0).is_err());
    }

    #[test]
    fn clipchain_examples() {
        assert_eq!(clipchain_v_exact(0.0, 1.15, 1.0, 0.75, 1e-10).unwrap(), 0.0);
        assert!((clipchain_v_exact(1.0, 1.15, 1.0, 0.75, 1e-10).unwrap() - 4.0).abs() < 1e-10);
        let f = |s| clipchain_v_exact(s, 1.15, 1.0, 0.75, 1e-12).unwrap();
        let slope = derivative(f, 0.0, 1e-6, -1.0, 1.0);
        assert!((slope - 1.0 / (1.0 - 0.75 * 1.15)).abs() < 0.01);
        assert!(clipchain_v_exact(0.3, 1.15, 1.0, 0.75, -1.0).is_err());
    }

    #[test]
    fn counterexample_examples() {
        let r = counterexample_gap_series(1e-6, 0.8, 1.0, 0.75, 1e-14).unwrap() / 1e-6;
        assert!((r - 2.5).abs() < 0.025);
        let div = |d: f64| counterexample_gap_series(d, 1.5, 1.0, 0.75, 1e-14).unwrap() / d;
        assert!(div(1e-6) > 10.0 * div(1e-2));
        assert!(counterexample_gap_series(0.0, 0.8, 1.0, 0.75, 1e-10).is_err());
        assert!(counterexample_gap_series(1.5, 0.8, 1.0, 0.75, 1e-10).is_err());
    }

    #[test]
    fn exact_counterexample_matches_first_order_limit() {
        // s_k = δ Σ_{j=1..k} L^j for small δ, giving γL / ((1 − γL)(1 − γ)) L_r
        let (l, g) = (0.8, 0.75);
        let limit = g * l / ((1.0 - g * l) * (1.0 - g));
        let r = counterexample_gap_exact(1e-7, l, 1.0, g, 1e-14).unwrap() / 1e-7;
        assert!((r - limit).abs() < 1e-4 * limit);
    }

    #[test]
    fn mc_return_examples() {
        let m = MdpSpec::shift_control(0.8, 1.0, 0.75).unwrap();
        let h = m.truncation_horizon(1e-6);
        let zero = mc_return(&m, &PolicySpec::constant(0.0), 8, h, 1).unwrap();
        assert_eq!((zero.mean, zero.half_ci95), (0.0, 0.0));

        let c = MdpSpec::clip_chain(1.15, 1.0, 0.75).unwrap().with_init(InitialState::Point(1.0));
        let r = mc_return(&c, &PolicySpec::constant(0.0), 4, c.truncation_horizon(1e-6), 1).unwrap();
        assert!((r.mean - 4.0).abs() < 1e-6 && r.half_ci95 == 0.0);

        let d = mc_return(&m, &PolicySpec::constant(0.5), 2, h, 1).unwrap();
        // independent recursion
        let (mut s, mut disc, mut acc) = (0.0f64, 1.0, 0.0);
        for _ in 0..h {
            acc -= disc * s;
            s = (0.8 * (s + 0.5)).clamp(0.0, 1.0);
            disc *= 0.75;
        }
        assert!((d.mean - acc).abs() < 1e-6);
        assert!(mc_return(&m, &PolicySpec::constant(0.5), 1, h, 1).is_err());
    }

    #[test]
    fn tabular_examples() {
        let zero = TabularMdp::new(2, 2, vec![0, 1, 1, 0], vec![0.0; 4], 0.9, vec![1.0, 0.0]).unwrap();
        assert!(tabular_solve(&zero, &[0, 1]).unwrap().q.iter().all(|q| *q == 0.0));
        let one = TabularMdp::new(1, 1, vec![0], vec![1.0], 0.5, vec![1.0]).unwrap();
        assert!((tabular_solve(&one, &[0]).unwrap().q[0] - 2.0).abs() < 1e-10);

        let m = MdpSpec::shift_control(0.8, 1.0, 0.75).unwrap();
        let t = TabularMdp::shift_control(&m, 51, 21).unwrap();
        let sol = tabular_solve(&t, &vec![0; 51]).unwrap();
        assert_eq!(sol.v[0], 0.0);
        assert!(sol.v.windows(2).all(|w| w[1] <= w[0]));
        // Bellman residual
        let res = (0..t.next.len()).map(|i| (sol.q[i] - (t.reward[i] + t.gamma * sol.v[t.next[i]])).abs()).fold(0.0, f64::max);
        assert!(res <= BELLMAN_TOL);
    }

    #[test]
    fn pdl_examples() {
        let t = TabularMdp::random(5, 3, 0.9, 4).unwrap();
        let pe = t.random_policy(1);
        let same = pdl_check(&t, &pe, &pe).unwrap();
        assert!(same.residual <= 1e-9 && same.lhs.abs() < 1e-9 && same.rhs.abs() < 1e-9);
        for seed in 0..5 {
            let t = TabularMdp::random(5, 3, 0.8, seed).unwrap();
            let c = pdl_check(&t, &t.random_policy(seed + 10), &t.random_policy(seed + 20)).unwrap();
            assert!(c.residual <= 1e-8);
        }
        let m = MdpSpec::shift_control(0.8, 1.0, 0.75).unwrap();
        let t = TabularMdp::shift_control(&m, 51, 21).unwrap();
        let c = pdl_check(&t, &vec![0; 51], &vec![5; 51]).unwrap();
        assert!(c.residual <= 1e-6 && c.lhs > 0.0);
        // value iteration agrees with the direct solve
        let vi = tabular_solve(&t, &vec![5; 51]).unwrap();
        assert!((c.lhs - (0.0 - vi.v[0])).abs() < 1e-9);
    }
}
