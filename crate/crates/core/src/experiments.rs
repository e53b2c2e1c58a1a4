//! Named, config-driven scenarios.
//!
//! Each scenario is a [`Scenario`] registered by name in a
//! [`ScenarioRegistry`]. A run returns an [`ExperimentResult`] holding CSV
//! tables, SVG plots and pass/fail checks; the run passes iff every check
//! does.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::bc::{self, collect, fit_imitator, hypothesis, imitation_mse, measure_gaps};
use crate::bounds::{self, BoundInputs, BoundKind, BoundReport};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::mdp::{MdpSpec, PolicySpec};
use crate::metrics::{fit_scaling_exponent, holder_seminorm_grid, lipschitz_seminorm_grid, tv_grid, w1_grid, GridDensity};
use crate::noise::{self, certify_tv_lipschitz, convolve_grid, inject, tv_shift, KernelRegistry, NoiseKernel};
use crate::output::{fmt_num, Cell, Check, ExperimentResult, Table};
use crate::stats::{neumaier_sum, MeanCi};
use crate::stream::{derive_seed, stream, Purpose};
use crate::svg::{Chart, Series};
use crate::value::{self, counterexample_gap_exact, counterexample_gap_series, ValueCurve};

pub trait Scenario: Send + Sync {
    fn name(&self) -> &'static str;
    fn description(&self) -> &'static str;
    /// Whether the output depends on the seed.
    fn seeded(&self) -> bool;
    fn run(&self, cfg: &ExperimentConfig) -> Result<ExperimentResult>;
}

#[derive(Default)]
pub struct ScenarioRegistry {
    scenarios: BTreeMap<&'static str, Arc<dyn Scenario>>,
}

impl ScenarioRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        r.register(Arc::new(Figure1));
        r.register(Arc::new(Example1));
        r.register(Arc::new(Counterexample));
        r.register(Arc::new(Tightness));
        r.register(Arc::new(BcRates));
        r.register(Arc::new(NoisePerformance));
        r.register(Arc::new(Bounds));
        r.register(Arc::new(CertifyNoise));
        r
    }

    pub fn register(&mut self, s: Arc<dyn Scenario>) {
        self.scenarios.insert(s.name(), s);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.scenarios.keys().copied().collect()
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn Scenario>> {
        self.scenarios.get(name).cloned().ok_or_else(|| Error::Unknown { what: "scenario", name: name.into(), known: self.names().join(", ") })
    }

    pub fn run(&self, cfg: &ExperimentConfig) -> Result<ExperimentResult> {
        self.get(&cfg.scenario)?.run(cfg)
    }
}

pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

pub fn lin_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn thin(points: Vec<(f64, f64)>, max: usize) -> Vec<(f64, f64)> {
    let step = points.len().div_ceil(max).max(1);
    points.into_iter().step_by(step).collect()
}

// ---------------------------------------------------------------- figure1

/// Gaussian pairs contrasting TV and W1.
pub struct Figure1;

/// `(label, mean_p, mean_q, sigma, lo, hi, tv target, W target)`.
pub type GaussianPair = (&'static str, f64, f64, f64, f64, f64, f64, f64);

pub const FIGURE1_PAIRS: [GaussianPair; 3] =
    [("left", 0.0, 1.0, 1.0, -6.0, 7.0, 0.383, 1.0), ("center", 0.0, 1.0, 0.05, -1.0, 2.0, 1.0, 1.0), ("right", 0.0, 0.4, 0.05, -1.0, 1.5, 1.0, 0.4)];

impl Scenario for Figure1 {
    fn name(&self) -> &'static str {
        "figure1"
    }
    fn description(&self) -> &'static str {
        "TV and W1 for three equal-variance gaussian pairs"
    }
    fn seeded(&self) -> bool {
        false
    }
    fn run(&self, cfg: &ExperimentConfig) -> Result<ExperimentResult> {
        let n = cfg.usize("n_cells", 20_000)?;
        let tol = cfg.f64("tolerance", 0.005)?;
        let tv_min = cfg.f64("tv_min", 0.999)?;
        cfg.require("n_cells", n >= 2, "needs at least 2 cells")?;
        let mut res = ExperimentResult::new(self.name());
        let mut t = Table::new("pairs", &["pair", "mean_p", "mean_q", "sigma", "lo", "hi", "tv", "w1", "tv_target", "w1_target"]);
        let mut chart = Chart::new("gaussian pairs", "x", "density");
        for (label, mp, mq, sigma, lo, hi, tv_target, w_target) in FIGURE1_PAIRS {
            let p = GridDensity::gaussian(lo, hi, n, mp, sigma)?;
            let q = GridDensity::gaussian(lo, hi, n, mq, sigma)?;
            let tv = tv_grid(&p, &q)?;
            let w = w1_grid(&p, &q)?;
            t.push(vec![label.into(), mp.into(), mq.into(), sigma.into(), lo.into(), hi.into(), tv.into(), w.into(), tv_target.into(), w_target.into()]);
            if label == "left" {
                res.checks.push(Check::near(format!("{label}_tv"), tv, tv_target, tol));
            } else {
                res.checks.push(Check::at_least(format!("{label}_tv"), tv, tv_min));
            }
            res.checks.push(Check::near(format!("{label}_w1"), w, w_target, tol));
            res.note(format!("{label}_tv"), tv);
            res.note(format!("{label}_w1"), w);
            for (name, d) in [("p", &p), ("q", &q)] {
                let pts = (0..d.n_cells()).map(|i| (d.center(i), d.values()[i])).collect();
                chart.series.push(Series::line(format!("{label} {name}"), thin(pts, 400)));
            }
        }
        res.tables.push(t);
        res.plots.push(("pairs".into(), chart.render()));
        Ok(res)
    }
}

// ---------------------------------------------------------------- example1

/// Clip-chain value curves, tangent slope and Hölder envelopes.
pub struct Example1;

/// Difference quotients `(V(h) − V(0)) / h` at `h = 2^{−k}`.
pub fn difference_quotients(l_p: f64, l_r: f64, gamma: f64, k_lo: i32, k_hi: i32, tol: f64) -> Result<Vec<(f64, f64)>> {
    let v0 = value::clipchain_v_exact(0.0, l_p, l_r, gamma, tol)?;
    (k_lo..=k_hi)
        .map(|k| {
            let h = 2f64.powi(-k);
            Ok((h, (value::clipchain_v_exact(h, l_p, l_r, gamma, tol)? - v0) / h))
        })
        .collect()
}

/// Count of grid points with `|V(s) − V(0)| > L |s|^α + slack`.
pub fn envelope_violations(curve: &ValueCurve, l_v: f64, alpha: f64, slack: f64) -> Result<usize> {
    let v0 = value::clipchain_v_exact(0.0, curve.l_p, curve.l_r, curve.gamma, 1e-14)?;
    Ok(curve.grid.iter().zip(&curve.values).filter(|(s, v)| (*v - v0).abs() > l_v * s.abs().powf(alpha) + slack).count())
}

impl Scenario for Example1 {
    fn name(&self) -> &'static str {
        "example1"
    }
    fn description(&self) -> &'static str {
        "clip-chain value functions, tangent slope and Holder envelopes"
    }
    fn seeded(&self) -> bool {
        false
    }
    fn run(&self, cfg: &ExperimentConfig) -> Result<ExperimentResult> {
        let l_p = cfg.f64("l_p", 1.15)?;
        let l_r = cfg.f64("l_r", 1.0)?;
        let g_lip = cfg.f64("gamma_lipschitz", 0.75)?;
        let g_hold = cfg.f64("gamma_holder", 0.9)?;
        let alphas = cfg.f64_list("alphas", &[0.3, 0.5, 0.7])?;
        let n_env = cfg.usize("envelope_points", 10_001)?;
        let n_lip = cfg.usize("seminorm_points", 4_001)?;
        let tol = cfg.f64("series_tol", 1e-12)?;
        let h = cfg.f64("derivative_step", 1e-6)?;
        cfg.require("gamma_lipschitz", g_lip * l_p < 1.0, "the tangent check needs gamma * L_p < 1")?;
        let mut res = ExperimentResult::new(self.name());

        let l_q = bounds::lipschitz_q_constant(l_r, l_p, 0.0, g_lip).expect("regime checked above");
        let slope = value::derivative(|s| value::clipchain_v_exact(s, l_p, l_r, g_lip, tol).unwrap_or(f64::NAN), 0.0, h, -1.0, 1.0);
        res.checks.push(Check::near("tangent_slope", slope, l_q, 1e-3 * l_q));
        res.note("tangent_slope", slope);
        res.note("L_Q", l_q);

        let lip_curve = ValueCurve::clip_chain(-1.0, 1.0, n_lip, l_p, l_r, g_lip, tol)?;
        let lip = lipschitz_seminorm_grid(&lip_curve.values, lip_curve.spacing())?;
        res.checks.push(Check::near("lipschitz_seminorm", lip, l_q, 0.01 * l_q));
        res.note("lipschitz_seminorm", lip);

        let env_curve = ValueCurve::clip_chain(-1.0, 1.0, n_env, l_p, l_r, g_hold, tol)?;
        let plot_curve = ValueCurve::clip_chain(-1.0, 1.0, n_env, l_p, l_r, g_lip, tol)?;
        let alpha_bar = bounds::critical_exponent(g_hold, l_p, 0.0)?;
        let diam = 2.0;
        let mut columns = vec!["s".to_string(), format!("v_gamma_{g_lip}"), format!("v_gamma_{g_hold}"), format!("tangent_gamma_{g_lip}")];
        let mut env_consts = Vec::new();
        let mut env_table = Table::new("envelopes", &["alpha", "L_Q_alpha", "L_V_alpha", "violations", "holder_seminorm_0_1"]);
        let n_holder = n_env.min(5_001);
        let holder_curve = ValueCurve::clip_chain(0.0, 1.0, n_holder, l_p, l_r, g_hold, tol)?;
        for &a in &alphas {
            let l_qa = bounds::holder_q_constant(a, l_r, diam, 0.0, g_hold, l_p, 0.0)?;
            let l_va = bounds::holder_v_constant(l_qa, 0.0, a);
            let viol = envelope_violations(&env_curve, l_va, a, 1e-9)?;
            let hs = holder_seminorm_grid(&holder_curve.values, holder_curve.spacing(), a)?;
            env_table.push(vec![a.into(), l_qa.into(), l_va.into(), viol.into(), hs.into()]);
            res.checks.push(Check::at_most(format!("envelope_violations_alpha_{a}"), viol as f64, 0.0));
            res.checks.push(Check::at_most(format!("holder_seminorm_alpha_{a}"), hs, l_va));
            columns.push(format!("envelope_alpha_{a}"));
            env_consts.push((a, l_va));
        }
        let cols: Vec<&str> = columns.iter().map(String::as_str).collect();
        let mut vt = Table::new("value", &cols);
        for i in 0..env_curve.grid.len() {
            let s = env_curve.grid[i];
            let mut row: Vec<Cell> = vec![s.into(), plot_curve.values[i].into(), env_curve.values[i].into(), (l_q * s).into()];
            row.extend(env_consts.iter().map(|(a, l)| Cell::Num(l * s.abs().powf(*a) * s.signum())));
            vt.push(row);
        }

        let q = difference_quotients(l_p, l_r, g_hold, 4, 20, tol)?;
        let fit = fit_scaling_exponent(&q)?;
        let mut qt = Table::new("quotients", &["h", "quotient"]);
        for (hh, v) in &q {
            qt.push(vec![(*hh).into(), (*v).into()]);
        }
        qt.comment(format!("fitted exponent {} vs alpha_bar - 1 = {}", fmt_num(fit.exponent), fmt_num(alpha_bar - 1.0)));
        res.checks.push(Check::near("quotient_exponent", fit.exponent, alpha_bar - 1.0, 0.05));
        res.note("alpha_bar", alpha_bar);
        res.note("quotient_exponent", fit.exponent);

        let mut chart = Chart::new("clip-chain value", "s", "V(s)");
        let pts = |c: &ValueCurve| thin(c.grid.iter().copied().zip(c.values.iter().copied()).collect(), 500);
        chart.series.push(Series::line(format!("V, gamma={g_lip}"), pts(&plot_curve)));
        chart.series.push(Series::line(format!("V, gamma={g_hold}"), pts(&env_curve)));
        chart.series.push(Series::dashed("tangent", vec![(-0.15, -0.15 * l_q), (0.15, 0.15 * l_q)]));
        for (a, l) in &env_consts {
            let e: Vec<(f64, f64)> = lin_space(-1.0, 1.0, 401).into_iter().map(|s| (s, (l * s.abs().powf(*a) * s.signum()).clamp(-15.0, 15.0))).collect();
            chart.series.push(Series::dashed(format!("envelope alpha={a}"), e));
        }
        res.tables.extend([vt, env_table, qt]);
        res.plots.push(("value".into(), chart.render()));
        Ok(res)
    }
}

// ---------------------------------------------------------------- counterexample

/// Divergence of gap/δ on shift control as `γ L_p` crosses 1.
pub struct Counterexample;

impl Scenario for Counterexample {
    fn name(&self) -> &'static str {
        "counterexample"
    }
    fn description(&self) -> &'static str {
        "gap-to-perturbation ratio on shift control in both regimes"
    }
    fn seeded(&self) -> bool {
        false
    }
    fn run(&self, cfg: &ExperimentConfig) -> Result<ExperimentResult> {
        let gamma = cfg.f64("gamma", 0.75)?;
        let l_r = cfg.f64("l_r", 1.0)?;
        let l_ps = cfg.f64_list("l_ps", &[0.8, 1.5])?;
        let deltas = cfg.f64_list("deltas", &[1e-2, 1e-3, 1e-4, 1e-5, 1e-6])?;
        let tol = cfg.f64("series_tol", 1e-14)?;
        let mc_delta = cfg.f64("mc_delta", 1e-3)?;
        let mc_tol = cfg.f64("mc_tolerance", 0.1)?;
        cfg.require("deltas", deltas.iter().all(|d| *d > 0.0 && *d <= 1.0), "deltas must lie in (0, 1]")?;
        let mut deltas = deltas;
        deltas.sort_by(|a, b| b.total_cmp(a));
        let mut res = ExperimentResult::new(self.name());
        let mut t = Table::new("ratios", &["l_p", "delta", "gap_series", "ratio_series", "gap_exact", "ratio_exact"]);
        let mut chart = Chart::new("gap / delta", "delta", "ratio").log_log();
        for &l_p in &l_ps {
            let mut ratios = Vec::new();
            let mut exact_pts = Vec::new();
            for &d in &deltas {
                let s = counterexample_gap_series(d, l_p, l_r, gamma, tol)?;
                let e = counterexample_gap_exact(d, l_p, l_r, gamma, tol)?;
                t.push(vec![l_p.into(), d.into(), s.into(), (s / d).into(), e.into(), (e / d).into()]);
                ratios.push((d, s / d));
                exact_pts.push((d, e / d));
            }
            chart.series.push(Series::line(format!("series, L_p={l_p}"), ratios.clone()));
            chart.series.push(Series::dashed(format!("exact, L_p={l_p}"), exact_pts));
            if gamma * l_p < 1.0 {
                let limit = l_r / (1.0 - gamma * l_p);
                let last = ratios.last().map_or(f64::NAN, |r| r.1);
                res.checks.push(Check::near(format!("limit_ratio_l_p_{l_p}"), last, limit, 0.01 * limit));
                res.note(format!("limit_ratio_l_p_{l_p}"), last);

                let mdp = MdpSpec::shift_control(l_p, l_r, gamma)?;
                let h = mdp.truncation_horizon(1e-12);
                let g = bc::measure_gap(&mdp, &PolicySpec::constant(0.0), &PolicySpec::constant(mc_delta), 2, h, 0)?;
                let series = counterexample_gap_series(mc_delta, l_p, l_r, gamma, tol)?;
                let exact = counterexample_gap_exact(mc_delta, l_p, l_r, gamma, tol)?;
                res.note(format!("rollout_ratio_l_p_{l_p}"), g.gap / mc_delta);
                res.note(format!("rollout_over_series_l_p_{l_p}"), g.gap / series);
                res.checks.push(Check::near(format!("rollout_vs_exact_l_p_{l_p}"), g.gap / exact, 1.0, mc_tol));
                res.checks.push(Check::at_least(format!("rollout_over_series_l_p_{l_p}"), g.gap / series, 1.0));
            } else {
                let non_increasing = ratios.windows(2).filter(|w| w[1].1 <= w[0].1).count();
                res.checks.push(Check::at_most(format!("non_monotone_steps_l_p_{l_p}"), non_increasing as f64, 0.0));
                res.note(format!("ratio_growth_l_p_{l_p}"), ratios.last().unwrap().1 / ratios[0].1);
            }
        }
        res.tables.push(t);
        res.plots.push(("ratios".into(), chart.render()));
        Ok(res)
    }
}

// ---------------------------------------------------------------- tightness

/// Exponent of the gap series in the divergent regime.
pub struct Tightness;

/// Log-log fit of the gap series on log-spaced `δ`.
pub fn series_exponent(gamma: f64, l_p: f64, l_r: f64, deltas: &[f64], tol: f64) -> Result<crate::metrics::ScalingFit> {
    let pts: Vec<(f64, f64)> = deltas.iter().map(|d| Ok((*d, counterexample_gap_series(*d, l_p, l_r, gamma, tol)?))).collect::<Result<_>>()?;
    fit_scaling_exponent(&pts)
}

impl Scenario for Tightness {
    fn name(&self) -> &'static str {
        "tightness"
    }
    fn description(&self) -> &'static str {
        "fitted gap exponent against the critical exponent"
    }
    fn seeded(&self) -> bool {
        false
    }
    fn run(&self, cfg: &ExperimentConfig) -> Result<ExperimentResult> {
        let gammas = cfg.f64_list("gammas", &[0.9, 0.75])?;
        let l_ps = cfg.f64_list("l_ps", &[1.15, 1.5])?;
        let l_r = cfg.f64("l_r", 1.0)?;
        let lo = cfg.f64("delta_lo", 1e-6)?;
        let hi = cfg.f64("delta_hi", 1e-2)?;
        let n = cfg.usize("n_points", 41)?;
        let rel_tol = cfg.f64("relative_tolerance", 0.05)?;
        let tol = cfg.f64("series_tol", 1e-14)?;
        cfg.require("l_ps", gammas.len() == l_ps.len(), "gammas and l_ps must have equal length")?;
        cfg.require("n_points", n >= 3, "needs at least 3 points")?;
        cfg.require("delta_lo", lo > 0.0 && lo < hi && hi <= 1.0, "needs 0 < delta_lo < delta_hi <= 1")?;
        for (g, l) in gammas.iter().zip(&l_ps) {
            cfg.require("gammas", g * l > 1.0, &format!("gamma * L_p must exceed 1, got {g} * {l}"))?;
        }
        let deltas = log_space(lo, hi, n);
        let mut res = ExperimentResult::new(self.name());
        let mut st = Table::new("series", &["gamma", "l_p", "delta", "gap_series"]);
        let mut ft = Table::new("fits", &["gamma", "l_p", "exponent", "intercept", "target", "relative_error", "exponent_2l_r", "intercept_shift"]);
        let mut chart = Chart::new("gap series", "delta", "gap").log_log();
        for (&g, &l_p) in gammas.iter().zip(&l_ps) {
            let mut pts = Vec::new();
            for &d in &deltas {
                let v = counterexample_gap_series(d, l_p, l_r, g, tol)?;
                st.push(vec![g.into(), l_p.into(), d.into(), v.into()]);
                pts.push((d, v));
            }
            let fit = fit_scaling_exponent(&pts)?;
            let fit2 = series_exponent(g, l_p, 2.0 * l_r, &deltas, tol)?;
            let target = -g.ln() / l_p.ln();
            let rel = (fit.exponent - target).abs() / target;
            ft.push(vec![
                g.into(),
                l_p.into(),
                fit.exponent.into(),
                fit.intercept.into(),
                target.into(),
                rel.into(),
                fit2.exponent.into(),
                (fit2.intercept - fit.intercept).into(),
            ]);
            let tag = format!("gamma_{g}_l_p_{l_p}");
            res.checks.push(Check::at_most(format!("relative_error_{tag}"), rel, rel_tol));
            res.checks.push(Check::near(format!("doubling_exponent_{tag}"), fit2.exponent, fit.exponent, 1e-6));
            res.checks.push(Check::near(format!("doubling_intercept_{tag}"), fit2.intercept - fit.intercept, 2f64.ln(), 1e-6));
            res.note(format!("exponent_{tag}"), fit.exponent);
            res.note(format!("target_{tag}"), target);
            let c = fit.intercept.exp();
            chart.series.push(Series::line(format!("series {tag}"), pts));
            chart.series.push(Series::dashed(format!("fit {tag}"), deltas.iter().map(|d| (*d, c * d.powf(fit.exponent))).collect()));
        }
        res.tables.extend([st, ft]);
        res.plots.push(("series".into(), chart.render()));
        Ok(res)
    }
}

// ---------------------------------------------------------------- bc-rates

/// Gap against imitation error with and without noise injection.
pub struct BcRates;

/// One `ε` of [`BcRates`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatePoint {
    pub epsilon: f64,
    pub mse: f64,
    pub mean_w: f64,
    pub mean_tv: f64,
    pub mean_w_noisy: f64,
    pub mean_tv_noisy: f64,
    pub plain: bc::GapEstimate,
    pub noisy: bc::GapEstimate,
}

impl Scenario for BcRates {
    fn name(&self) -> &'static str {
        "bc-rates"
    }
    fn description(&self) -> &'static str {
        "plain versus noise-injected behavioral cloning gaps on shift control"
    }
    fn seeded(&self) -> bool {
        true
    }
    fn run(&self, cfg: &ExperimentConfig) -> Result<ExperimentResult> {
        let gamma = cfg.f64("gamma", 0.9)?;
        let l_p = cfg.f64("l_p", 1.15)?;
        let l_r = cfg.f64("l_r", 1.0)?;
        let eps_grid = cfg.f64_list("epsilons", &log_space(0.02, 0.2, 10))?;
        let include_zero = cfg.bool("include_zero", true)?;
        let family = cfg.string("noise.family", "gaussian");
        let sigma = cfg.f64("noise.scale", 0.25)?;
        let n_noisy = cfg.usize("noisy_episodes", 200_000)?;
        let n_demo = cfg.usize("demo_episodes", 200)?;
        let alpha = cfg.f64("alpha", 0.7)?;
        let slope_min = cfg.f64("slope_min", 0.9)?;
        let ci_mult = cfg.f64("ci_multiplier", 3.0)?;
        let horizon_tol = cfg.f64("horizon_tol", 1e-6)?;
        let fitted = cfg.bool("fitted_imitator", false)?;
        let seed = cfg.seed(20_240_611)?;
        cfg.require("epsilons", eps_grid.iter().all(|e| *e > 0.0), "epsilons must be positive")?;
        cfg.require("noisy_episodes", n_noisy >= 2, "needs at least 2 episodes")?;

        let mdp = MdpSpec::shift_control(l_p, l_r, gamma)?;
        let horizon = mdp.truncation_horizon(horizon_tol);
        let kernel = KernelRegistry::builtin().build(&family, sigma)?;
        let expert = PolicySpec::deterministic("pi_star", 0.0, |_| 0.0);
        let noisy_expert = inject(&expert, Arc::clone(&kernel))?;

        let mut eps: Vec<f64> = eps_grid.clone();
        if include_zero {
            eps.insert(0, 0.0);
        }
        let imitators: Vec<PolicySpec> = eps.iter().map(|e| bc::adversarial_imitator(&expert, *e, 1)).collect::<Result<_>>()?;
        let noisy_imitators: Vec<PolicySpec> = imitators.iter().map(|p| inject(p, Arc::clone(&kernel))).collect::<Result<_>>()?;

        // plain rollouts are deterministic: two episodes give the exact gap with a zero interval
        let plain = measure_gaps(&mdp, &expert, &imitators, 2, horizon, seed)?;
        let noisy = measure_gaps(&mdp, &noisy_expert, &noisy_imitators, n_noisy, horizon, derive_seed(seed, 17))?;
        let demos = collect(&mdp, &expert, 1, horizon, seed)?;
        let noisy_demos = collect(&mdp, &noisy_expert, n_demo, horizon, derive_seed(seed, 23))?;

        let points: Vec<RatePoint> = (0..eps.len())
            .map(|i| {
                Ok(RatePoint {
                    epsilon: eps[i],
                    mse: imitation_mse(&demos, &imitators[i])?,
                    mean_w: demos.mean_wasserstein(&imitators[i])?,
                    mean_tv: demos.mean_tv(&imitators[i]),
                    mean_w_noisy: noisy_demos.mean_wasserstein(&imitators[i])?,
                    mean_tv_noisy: tv_shift(kernel.as_ref(), eps[i]),
                    plain: plain[i],
                    noisy: noisy[i],
                })
            })
            .collect::<Result<_>>()?;

        let mut inputs = BoundInputs::from_mdp(&mdp, 0.0);
        inputs.alpha = Some(alpha);
        inputs.l_ell = Some(kernel.tv_lc_constant());
        let report = BoundReport::evaluate(&inputs)?;
        let consts = report.constants();

        let mut res = ExperimentResult::new(self.name());
        let mut t = Table::new(
            "gaps",
            &[
                "epsilon",
                "mse",
                "mean_w",
                "mean_tv",
                "gap_plain",
                "ci_plain",
                "gap_noisy",
                "ci_noisy",
                "bound_tv_thm1",
                "bound_wasserstein_thm2",
                "bound_holder_thm5",
                "bound_holder_jensen_eq4",
                "bound_tv_thm1_noisy",
                "bound_noise_thm6",
            ],
        );
        t.comment(format!("mdp = shift-control(L_p={l_p}, L_r={l_r}, gamma={gamma}), horizon = {horizon}"));
        t.comment(format!("noise = {family}({sigma}), action clipped after noise; W and TV measured before clipping"));
        t.comment(format!("noisy episodes per policy = {n_noisy}, seed = {seed}"));
        let mut violations = 0usize;
        let mut envelope_violations = 0usize;
        let mut bound_rows = Table::new("bound_checks", &["epsilon", "regime", "bound", "gap", "ci", "bound_value", "violated"]);
        for p in &points {
            let b = |k: BoundKind, d: f64| bounds::gap_bound(k, &consts, d).ok();
            let plain_bounds = [
                (BoundKind::Tv, b(BoundKind::Tv, p.mean_tv)),
                (BoundKind::Wasserstein, b(BoundKind::Wasserstein, p.mean_w)),
                (BoundKind::Holder, b(BoundKind::Holder, p.mean_w.powf(alpha))),
                (BoundKind::HolderJensen, b(BoundKind::HolderJensen, p.mean_w)),
            ];
            let noisy_bounds = [(BoundKind::Tv, b(BoundKind::Tv, p.mean_tv_noisy)), (BoundKind::Noise, b(BoundKind::Noise, p.mean_w_noisy))];
            for (regime, gap, list) in [("plain", p.plain, &plain_bounds[..]), ("noisy", p.noisy, &noisy_bounds[..])] {
                for (kind, value) in list {
                    let Some(v) = value else { continue };
                    let bad = gap.gap > v + ci_mult * gap.half_ci95;
                    violations += bad as usize;
                    bound_rows.push(vec![p.epsilon.into(), regime.into(), kind.name().into(), gap.gap.into(), gap.half_ci95.into(), (*v).into(), bad.into()]);
                }
            }
            if let Some(env) = plain_bounds[3].1 {
                envelope_violations += (p.plain.gap > env + ci_mult * p.plain.half_ci95) as usize;
            }
            t.push(vec![
                p.epsilon.into(),
                p.mse.into(),
                p.mean_w.into(),
                p.mean_tv.into(),
                p.plain.gap.into(),
                p.plain.half_ci95.into(),
                p.noisy.gap.into(),
                p.noisy.half_ci95.into(),
                plain_bounds[0].1.into(),
                plain_bounds[1].1.into(),
                plain_bounds[2].1.into(),
                plain_bounds[3].1.into(),
                noisy_bounds[0].1.into(),
                noisy_bounds[1].1.into(),
            ]);
        }
        res.checks.push(Check::at_most("bound_violations", violations as f64, 0.0));
        res.checks.push(Check::at_most("plain_envelope_violations", envelope_violations as f64, 0.0));

        let positive =
            |f: fn(&RatePoint) -> bc::GapEstimate| -> Vec<(f64, f64)> { points.iter().filter(|p| p.epsilon > 0.0).map(|p| (p.epsilon, f(p).gap)).collect() };
        let slope_of = |pts: &[(f64, f64)]| fit_scaling_exponent(pts).map(|f| f.exponent).unwrap_or(f64::NAN);
        let noisy_pts = positive(|p| p.noisy);
        let plain_pts = positive(|p| p.plain);
        let noisy_slope = slope_of(&noisy_pts);
        let plain_slope = slope_of(&plain_pts);
        res.checks.push(Check::new("noisy_slope", noisy_slope, format!("x >= {}", fmt_num(slope_min)), noisy_slope >= slope_min));
        res.note("noisy_slope", noisy_slope);
        res.note("plain_slope", plain_slope);
        if let Some(z) = points.iter().find(|p| p.epsilon == 0.0) {
            res.checks.push(Check::at_most("zero_epsilon_plain_gap", z.plain.gap.abs(), ci_mult * z.plain.half_ci95));
            res.checks.push(Check::at_most("zero_epsilon_noisy_gap", z.noisy.gap.abs(), ci_mult * z.noisy.half_ci95));
        }
        res.note("horizon", horizon);
        res.note("alpha_bar", report.alpha_bar);
        res.note("L_Q_alpha", report.l_q_alpha);
        res.note("L_ell", report.l_ell);
        res.note("Q_max", report.q_max);
        res.note("J_expert_noisy", noisy[0].expert.mean);
        res.note("action_boundary", "clip after noise");

        let env: Vec<(f64, f64)> = points
            .iter()
            .filter(|p| p.epsilon > 0.0)
            .filter_map(|p| Some((p.epsilon, bounds::gap_bound(BoundKind::HolderJensen, &consts, p.mean_w).ok()?)))
            .collect();
        let n6: Vec<(f64, f64)> = points
            .iter()
            .filter(|p| p.epsilon > 0.0)
            .filter_map(|p| Some((p.epsilon, bounds::gap_bound(BoundKind::Noise, &consts, p.mean_w_noisy).ok()?)))
            .collect();
        let chart = Chart::new("gap versus imitation error", "epsilon", "gap")
            .log_log()
            .with(Series::line("plain", plain_pts))
            .with(Series::line("noisy", noisy_pts))
            .with(Series::dashed(format!("Holder envelope alpha={alpha}"), env))
            .with(Series::dashed("noise bound", n6));
        res.plots.push(("gaps".into(), chart.render()));
        res.tables.push(t);
        res.tables.push(bound_rows);

        if fitted {
            res.tables.push(fitted_variant(cfg, &mdp, &noisy_expert, &kernel, horizon, seed)?);
        }
        Ok(res)
    }
}

/// Illustration only: a least-squares imitator fitted to noisy demonstrations.
fn fitted_variant(cfg: &ExperimentConfig, mdp: &MdpSpec, noisy_expert: &PolicySpec, kernel: &Arc<dyn NoiseKernel>, horizon: usize, seed: u64) -> Result<Table> {
    let class = hypothesis(&cfg.string("imitator.class", "piecewise-linear"), cfg.usize("imitator.size", 8)?, mdp.state_lo, mdp.state_hi)?;
    let ridge = cfg.f64("imitator.ridge", bc::DEFAULT_RIDGE)?;
    let n_demo = cfg.usize("demo_episodes", 200)?;
    let n_eval = cfg.usize("fitted_episodes", 20_000)?;
    let data = collect(mdp, noisy_expert, n_demo, horizon, derive_seed(seed, 31))?;
    let fit = fit_imitator(&data, class, ridge)?;
    let mse = imitation_mse(&data, &fit.policy)?;
    let noisy_fit = inject(&fit.policy, Arc::clone(kernel))?;
    let expert = PolicySpec::deterministic("pi_star", 0.0, |_| 0.0);
    let plain = bc::measure_gap(mdp, &expert, &fit.policy, 2, horizon, seed)?;
    let noisy = bc::measure_gap(mdp, noisy_expert, &noisy_fit, n_eval, horizon, derive_seed(seed, 37))?;
    let mut t = Table::new("fitted", &["imitator", "mse", "mean_w", "gap_plain", "ci_plain", "gap_noisy", "ci_noisy"]);
    t.push(vec![
        fit.class.name().into(),
        mse.into(),
        data.mean_wasserstein(&fit.policy)?.into(),
        plain.gap.into(),
        plain.half_ci95.into(),
        noisy.gap.into(),
        noisy.half_ci95.into(),
    ]);
    Ok(t)
}

// ---------------------------------------------------------------- noise-performance

/// Expert return as a function of injected noise scale.
pub struct NoisePerformance;

impl Scenario for NoisePerformance {
    fn name(&self) -> &'static str {
        "noise-performance"
    }
    fn description(&self) -> &'static str {
        "noise-injected expert return against noise scale"
    }
    fn seeded(&self) -> bool {
        true
    }
    fn run(&self, cfg: &ExperimentConfig) -> Result<ExperimentResult> {
        let gamma = cfg.f64("gamma", 0.9)?;
        let l_r = cfg.f64("l_r", 1.0)?;
        let l_ps = cfg.f64_list("l_ps", &[1.15, 0.8])?;
        let sigmas = cfg.f64_list("sigmas", &lin_space(0.0, 0.3, 10))?;
        let family = cfg.string("noise.family", "gaussian");
        let n_seeds = cfg.usize("seeds", 20)?;
        let n_eps = cfg.usize("episodes", 40)?;
        let seed = cfg.seed(7)?;
        cfg.require("sigmas", sigmas.iter().all(|s| *s >= 0.0), "noise scales must be nonnegative")?;
        cfg.require("seeds", n_seeds >= 2, "needs at least 2 seeds")?;
        cfg.require("episodes", n_eps >= 1, "needs at least 1 episode")?;
        let registry = KernelRegistry::builtin();
        let mut res = ExperimentResult::new(self.name());
        let mut t = Table::new("returns", &["mdp", "l_p", "sigma", "mean_return", "half_ci95"]);
        t.comment(format!("{n_seeds} seeds x {n_eps} episodes per point; interval over per-seed means"));
        let mut chart = Chart::new("expert return under noise", "sigma", "J");
        for &l_p in &l_ps {
            let mdp = MdpSpec::shift_control(l_p, l_r, gamma)?;
            let horizon = mdp.truncation_horizon(1e-6);
            let expert = PolicySpec::deterministic("pi_star", 0.0, |_| 0.0);
            let noiseless = value::mc_return(&mdp, &expert, 2, horizon, seed)?.mean;
            let mut rows: Vec<(f64, MeanCi)> = Vec::new();
            for &sigma in &sigmas {
                let policy = if sigma == 0.0 { expert.clone() } else { inject(&expert, registry.build(&family, sigma)?)? };
                let per_seed: Vec<f64> = (0..n_seeds as u64)
                    .map(|k| {
                        let s = derive_seed(seed, k);
                        let r = value::episode_returns(&mdp, &policy, n_eps, horizon, crate::mdp::Seeds::common(s))?;
                        Ok(neumaier_sum(r) / n_eps as f64)
                    })
                    .collect::<Result<_>>()?;
                let m = MeanCi::from_samples(&per_seed);
                t.push(vec![mdp.name().into(), l_p.into(), sigma.into(), m.mean.into(), m.half_ci95.into()]);
                rows.push((sigma, m));
            }
            let tag = format!("l_p_{l_p}");
            if let Some((_, m0)) = rows.iter().find(|(s, _)| *s == 0.0) {
                res.checks.push(Check::near(format!("zero_noise_matches_expert_{tag}"), m0.mean, noiseless, 0.0));
            }
            if let Some((s_max, m)) = rows.iter().max_by(|a, b| a.0.total_cmp(&b.0)) {
                if *s_max > 0.0 {
                    res.checks.push(Check::new(format!("max_noise_below_zero_{tag}"), m.mean, "x < 0", m.mean < 0.0));
                }
            }
            let mut sorted = rows.clone();
            sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
            let increases = sorted.windows(2).filter(|w| w[1].1.mean > w[0].1.mean + w[0].1.half_ci95.hypot(w[1].1.half_ci95)).count();
            res.checks.push(Check::at_most(format!("monotonicity_violations_{tag}"), increases as f64, 0.0));
            let worst = rows.iter().map(|(_, m)| noiseless - m.mean).fold(0.0, f64::max);
            res.note(format!("max_degradation_{tag}"), worst);
            // J* = 0 here, so degradation is reported relative to the return range R_max / (1 − γ)
            res.note(format!("max_relative_degradation_{tag}"), worst / (mdp.r_max() / (1.0 - gamma)));
            chart.series.push(Series::line(format!("shift-control L_p={l_p}"), rows.iter().map(|(s, m)| (*s, m.mean)).collect()));
        }
        res.tables.push(t);
        res.plots.push(("returns".into(), chart.render()));
        Ok(res)
    }
}

// ---------------------------------------------------------------- bounds

/// Tabulates every constant for one configuration.
pub struct Bounds;

pub fn bound_reports(cfg: &ExperimentConfig) -> Result<Vec<BoundReport>> {
    let l_r = cfg.f64("l_r", 1.0)?;
    let l_p = cfg.f64("l_p", 1.15)?;
    let l_pi = cfg.f64("l_pi", 0.0)?;
    let gamma = cfg.f64("gamma", 0.75)?;
    let diam_s = cfg.f64("diam_s", 2.0)?;
    let diam_a = cfg.f64("diam_a", 0.0)?;
    let alphas = cfg.f64_list("alphas", &[0.3, 0.5, 0.7])?;
    let sigma = cfg.opt_f64("noise.scale")?;
    let family = cfg.string("noise.family", "gaussian");
    // both built-in MDPs have max |s| = 1
    let r_max = cfg.opt_f64("r_max")?.unwrap_or(l_r);
    let q_max = cfg.opt_f64("q_max")?;
    cfg.require("gamma", gamma > 0.0 && gamma < 1.0, "gamma must lie in (0, 1)")?;
    let l_ell = match sigma {
        Some(s) => Some(noise::kernel(&family, s)?.tv_lc_constant()),
        None => None,
    };
    alphas
        .iter()
        .map(|a| BoundReport::evaluate(&BoundInputs { gamma, l_p, l_r, l_pi, diam_s, diam_a, alpha: Some(*a), l_ell, r_max: Some(r_max), q_max }))
        .collect()
}

impl Scenario for Bounds {
    fn name(&self) -> &'static str {
        "bounds"
    }
    fn description(&self) -> &'static str {
        "regularity constants and bound applicability for one configuration"
    }
    fn seeded(&self) -> bool {
        false
    }
    fn run(&self, cfg: &ExperimentConfig) -> Result<ExperimentResult> {
        let reports = bound_reports(cfg)?;
        let mut res = ExperimentResult::new(self.name());
        let mut t = Table::new("constants", &["alpha", "alpha_bar", "lipschitz_regime_ok", "L_Q", "L_Q_alpha", "L_V_alpha", "L_ell", "R_max", "Q_max"]);
        for r in &reports {
            t.push(vec![
                r.requested_alpha.into(),
                r.alpha_bar.into(),
                r.lipschitz_regime_ok.into(),
                r.l_q.into(),
                r.l_q_alpha.into(),
                r.l_v_alpha.into(),
                r.l_ell.into(),
                r.r_max.into(),
                r.q_max.into(),
            ]);
        }
        if let Some(r) = reports.first() {
            res.note("L_Q", r.l_q.map_or(Cell::Text("inapplicable".into()), Cell::Num));
            res.note("alpha_bar", r.alpha_bar);
            let consistent = r.lipschitz_regime_ok == (r.gamma * r.l_p * (1.0 + r.l_pi) < 1.0);
            res.checks.push(Check::new("regime_flag_consistent", consistent as u8 as f64, "x = 1", consistent));
        }
        res.tables.push(t);
        Ok(res)
    }
}

// ---------------------------------------------------------------- certify-noise

/// TV-Lipschitz certification and convolution smoothing for every kernel family.
pub struct CertifyNoise;

/// `max_h |tv_shift(h) − (2Φ(h / 2σ) − 1)|` for a gaussian kernel.
pub fn gaussian_tv_error(sigma: f64, shifts: &[f64]) -> Result<f64> {
    let k = noise::Gaussian::new(sigma)?;
    let z = Normal::standard();
    Ok(shifts.iter().map(|h| (tv_shift(&k, *h) - (2.0 * z.cdf(h / (2.0 * sigma)) - 1.0)).abs()).fold(0.0, f64::max))
}

/// Random `±M` step function with `n_steps` breakpoints on `n` grid points.
pub fn random_step_function(n: usize, m: f64, seed: u64) -> Vec<f64> {
    let mut rng = stream(seed, 0, Purpose::Data);
    let n_breaks = rng.random_range(3..30);
    let mut breaks: Vec<usize> = (0..n_breaks).map(|_| rng.random_range(1..n)).collect();
    breaks.sort_unstable();
    let mut f = Vec::with_capacity(n);
    let mut level = if rng.random::<bool>() { m } else { -m };
    let mut b = breaks.into_iter().peekable();
    for i in 0..n {
        while b.peek() == Some(&i) {
            b.next();
            level = -level;
        }
        f.push(level);
    }
    f
}

/// `(measured Lipschitz semi-norm, 2 L_ℓ M)` for one smoothing trial.
pub fn smoothing_trial(kernel: &dyn NoiseKernel, f: &[f64], m: f64, spacing: f64) -> Result<(f64, f64)> {
    let g = convolve_grid(f, kernel, spacing)?;
    Ok((lipschitz_seminorm_grid(&g, spacing)?, 2.0 * kernel.tv_lc_constant() * m))
}

impl Scenario for CertifyNoise {
    fn name(&self) -> &'static str {
        "certify-noise"
    }
    fn description(&self) -> &'static str {
        "TV-Lipschitz certification and smoothing bound for the noise kernels"
    }
    fn seeded(&self) -> bool {
        true
    }
    fn run(&self, cfg: &ExperimentConfig) -> Result<ExperimentResult> {
        let families = cfg.string_list("families", &["gaussian", "uniform", "triangular"]);
        let scales = cfg.f64_list("scales", &log_space(0.05, 1.0, 10))?;
        let shifts = cfg.f64_list("shifts", &log_space(1e-3, 1.0, 50))?;
        let n_trials = cfg.usize("smoothing_trials", 100)?;
        let smoothing_scale = cfg.f64("smoothing_scale", 0.2)?;
        let n_grid = cfg.usize("smoothing_points", 2001)?;
        let slack = cfg.f64("smoothing_slack", 0.02)?;
        let seed = cfg.seed(11)?;
        cfg.require("shifts", shifts.iter().all(|h| *h > 0.0), "shifts must be positive")?;
        let registry = KernelRegistry::builtin();
        let mut res = ExperimentResult::new(self.name());

        let cases: Vec<(String, f64)> = families.iter().flat_map(|f| scales.iter().map(move |s| (f.clone(), *s))).collect();
        let rows: Vec<(String, f64, f64, f64, Option<f64>)> = cases
            .par_iter()
            .map(|(fam, s)| {
                let k = registry.build(fam, *s)?;
                let viol = certify_tv_lipschitz(k.as_ref(), &shifts);
                let err = if fam == "gaussian" { Some(gaussian_tv_error(*s, &shifts)?) } else { None };
                Ok((fam.clone(), *s, k.tv_lc_constant(), viol, err))
            })
            .collect::<Result<_>>()?;
        let mut t = Table::new("certification", &["family", "scale", "L_ell", "max_violation", "gaussian_tv_error"]);
        let mut worst_viol = f64::NEG_INFINITY;
        let mut worst_err = 0.0f64;
        for (fam, s, l, v, e) in &rows {
            t.push(vec![fam.as_str().into(), (*s).into(), (*l).into(), (*v).into(), (*e).into()]);
            worst_viol = worst_viol.max(*v);
            worst_err = worst_err.max(e.unwrap_or(0.0));
        }
        res.checks.push(Check::at_most("max_violation", worst_viol, noise::CERTIFY_TOLERANCE));
        if families.iter().any(|f| f == "gaussian") {
            res.checks.push(Check::at_most("gaussian_tv_error", worst_err, 1e-4));
        }

        let spacing = 4.0 / (n_grid - 1) as f64;
        let ms = [0.5, 1.0, 2.0];
        let mut st = Table::new("smoothing", &["family", "trial", "M", "seminorm", "bound", "ratio"]);
        let mut violations = 0usize;
        let mut worst_ratio = 0.0f64;
        for fam in &families {
            let k = registry.build(fam, smoothing_scale)?;
            for trial in 0..n_trials {
                let m = ms[trial % ms.len()];
                let f = random_step_function(n_grid, m, derive_seed(seed, trial as u64));
                let (lip, bound) = smoothing_trial(k.as_ref(), &f, m, spacing)?;
                violations += (lip > bound * (1.0 + slack)) as usize;
                worst_ratio = worst_ratio.max(lip / bound);
                st.push(vec![fam.as_str().into(), trial.into(), m.into(), lip.into(), bound.into(), (lip / bound).into()]);
            }
        }
        res.checks.push(Check::at_most("smoothing_violations", violations as f64, 0.0));
        res.note("worst_smoothing_ratio", worst_ratio);
        res.note("worst_certification_violation", worst_viol);

        let mut chart = Chart::new("TV of shifted kernel", "h", "TV").log_log();
        for fam in &families {
            let k = registry.build(fam, 0.25)?;
            chart.series.push(Series::line(format!("{fam}(0.25)"), shifts.iter().map(|h| (*h, tv_shift(k.as_ref(), *h))).collect()));
            chart.series.push(Series::dashed(format!("{fam} L_ell h"), shifts.iter().map(|h| (*h, (k.tv_lc_constant() * h).min(10.0))).collect()));
        }
        res.tables.extend([t, st]);
        res.plots.push(("tv_shift".into(), chart.render()));
        Ok(res)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_lists_builtins() {
        let r = ScenarioRegistry::with_builtins();
        assert_eq!(r.names(), vec!["bc-rates", "bounds", "certify-noise", "counterexample", "example1", "figure1", "noise-performance", "tightness"]);
        assert!(r.get("nope").is_err());
    }

    #[test]
    fn spaces() {
        let l = log_space(1e-6, 1e-2, 5);
        assert!((l[2] - 1e-4).abs() < 1e-16 && (l[4] - 1e-2).abs() < 1e-16);
        assert_eq!(lin_space(0.0, 0.3, 10).len(), 10);
        assert!((lin_space(0.0, 0.3, 10)[9] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn tightness_rejects_convergent_regime() {
        let cfg = ExperimentConfig::defaults("tightness").set("gammas", "0.75").set("l_ps", "0.8");
        let err = Tightness.run(&cfg).unwrap_err();
        assert!(err.to_string().contains("tightness.gammas"), "{err}");
    }

    #[test]
    fn step_functions_attain_their_bound() {
        let f = random_step_function(500, 2.0, 4);
        assert!(f.iter().all(|v| v.abs() == 2.0));
        assert!(f.windows(2).any(|w| w[0] != w[1]));
    }
}
