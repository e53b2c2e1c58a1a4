use std::path::PathBuf;
use std::process::ExitCode;

use bcbounds::config::{Config, ExperimentConfig};
use bcbounds::experiments::{bound_reports, ScenarioRegistry};
use bcbounds::output::fmt_num;
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "bcbounds", version, about = "Behavioral-cloning bound experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// TV and W1 for the three gaussian pairs
    Figure1(RunArgs),
    /// Clip-chain value curves, tangent slope and Hölder envelopes
    Example1(RunArgs),
    /// Gap/δ ratio on shift control in both regimes
    Counterexample(RunArgs),
    /// Fitted gap exponent in the divergent regime
    Tightness(RunArgs),
    /// Plain versus noise-injected BC gaps
    BcRates(RunArgs),
    /// Expert return against injected noise scale
    NoisePerformance(RunArgs),
    /// Tabulate regularity constants and bound applicability
    Bounds(RunArgs),
    /// TV-Lipschitz certification of the noise kernels
    CertifyNoise(RunArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Config file of `section.key = value` lines
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Output root; each scenario writes to a subdirectory named after it
    #[arg(long, env = "BCBOUNDS_OUTDIR", default_value = "out")]
    outdir: PathBuf,
    /// Overrides the master seed of stochastic scenarios
    #[arg(long)]
    seed: Option<u64>,
    /// Extra `key=value` settings applied after the config file
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Command {
    fn parts(&self) -> (&'static str, &RunArgs) {
        match self {
            Command::Figure1(a) => ("figure1", a),
            Command::Example1(a) => ("example1", a),
            Command::Counterexample(a) => ("counterexample", a),
            Command::Tightness(a) => ("tightness", a),
            Command::BcRates(a) => ("bc-rates", a),
            Command::NoisePerformance(a) => ("noise-performance", a),
            Command::Bounds(a) => ("bounds", a),
            Command::CertifyNoise(a) => ("certify-noise", a),
        }
    }
}

fn load(args: &RunArgs) -> bcbounds::Result<Config> {
    let mut cfg = match &args.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    for kv in &args.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| bcbounds::Error::Config { key: kv.clone(), message: "expected KEY=VALUE".into() })?;
        cfg.set(k.trim(), v.trim());
    }
    Ok(cfg)
}

fn print_bounds(cfg: &ExperimentConfig) -> bcbounds::Result<()> {
    let reports = bound_reports(cfg)?;
    let Some(first) = reports.first() else { return Ok(()) };
    println!("gamma = {}  L_p = {}  L_r = {}  L_pi = {}", fmt_num(first.gamma), fmt_num(first.l_p), fmt_num(first.l_r), fmt_num(first.l_pi));
    println!("{:<12}{}", "L_Q", first.l_q.map_or("inapplicable".to_string(), fmt_num));
    println!("{:<12}{}", "alpha_bar", fmt_num(first.alpha_bar));
    println!("{:<12}{:<22}{:<22}", "alpha", "L_Q_alpha", "L_V_alpha");
    for r in &reports {
        let show = |v: Option<f64>| v.map_or("inapplicable".to_string(), fmt_num);
        println!("{:<12}{:<22}{:<22}", r.requested_alpha.map_or("-".into(), fmt_num), show(r.l_q_alpha), show(r.l_v_alpha));
    }
    if let Some(l) = first.l_ell {
        println!("{:<12}{}", "L_ell", fmt_num(l));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool, bcbounds::Error> {
    let (scenario, args) = cli.command.parts();
    let registry = ScenarioRegistry::with_builtins();
    let cfg = ExperimentConfig::new(scenario, load(args)?).with_seed(args.seed);
    let result = registry.run(&cfg)?;
    for path in result.write(&args.outdir)? {
        println!("{}", path.display());
    }
    if scenario == "bounds" {
        print_bounds(&cfg)?;
    }
    for check in &result.checks {
        println!("{}", check.describe());
    }
    Ok(result.passed())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("one or more thresholds failed");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
