//! Command-line interface definition.

use clap::{Args, Parser, Subcommand, ValueEnum};
use rsgame_core::lab::Sampler;
use serde::Serialize;
use serde_json::Value;
use std::path::PathBuf;

#[derive(Debug, Clone, Parser)]
#[command(
    name = "rsgame",
    version,
    about = "Risk-sensitive zero-sum stochastic games on finite CTMCs"
)]
pub struct Cli {
    /// Worker threads for the parallel parts (results do not depend on it).
    #[arg(long, env = "RSGAME_THREADS", global = true)]
    pub threads: Option<usize>,
    /// Also write the report to this file.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Validate a model and evaluate the Lyapunov and small-cost gates.
    Validate(ValidateArgs),
    /// Solve the discounted criterion at one risk level and extract the Markov saddle policy.
    SolveDiscounted(SolveDiscountedArgs),
    /// Solve the long-run criterion and cross-check it against the Perron eigenvalue.
    SolveErgodic(SolveErgodicArgs),
    /// Run the verification suites against a stored long-run solution.
    Verify(VerifyArgs),
    /// Monte Carlo estimators under a given strategy profile.
    Simulate(SimulateArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Validate(_) => "validate",
            Command::SolveDiscounted(_) => "solve-discounted",
            Command::SolveErgodic(_) => "solve-ergodic",
            Command::Verify(_) => "verify",
            Command::Simulate(_) => "simulate",
        }
    }

    pub fn options(&self) -> Value {
        let v = match self {
            Command::Validate(a) => serde_json::to_value(a),
            Command::SolveDiscounted(a) => serde_json::to_value(a),
            Command::SolveErgodic(a) => serde_json::to_value(a),
            Command::Verify(a) => serde_json::to_value(a),
            Command::Simulate(a) => serde_json::to_value(a),
        };
        v.expect("serializable options")
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ValidateArgs {
    pub model: PathBuf,
    /// Risk level the small-cost gate is evaluated at.
    #[arg(long, default_value_t = 1.0)]
    pub theta: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SolveDiscountedArgs {
    pub model: PathBuf,
    /// Risk level to solve at; must lie in (epsilon, theta_cap).
    #[arg(long)]
    pub theta: f64,
    /// Starting point of the march (default 1e-3 * theta_cap).
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Sup-norm change between successive epsilon halvings that stops the refinement.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 20)]
    pub max_halvings: usize,
    /// Target contraction constant per Picard interval.
    #[arg(long, default_value_t = 0.5)]
    pub safety: f64,
    #[arg(long, default_value_t = 1e-10)]
    pub picard_tol: f64,
    /// HJI residual allowed, relative to the sup of psi.
    #[arg(long, default_value_t = 1e-6)]
    pub residual_tol: f64,
    /// Time step of the Markov policy table.
    #[arg(long, default_value_t = 0.05)]
    pub policy_dt: f64,
    /// Policy horizon; defaults to T_eps (the time the risk level reaches epsilon).
    #[arg(long)]
    pub horizon: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SolveErgodicArgs {
    pub model: PathBuf,
    /// Cost truncation ladder, comma separated and increasing (default: all states).
    #[arg(long, value_delimiter = ',')]
    pub levels: Vec<usize>,
    #[arg(long, default_value_t = 2000.0)]
    pub tmax: f64,
    /// March step (default 0.1 / (M + ||r||)).
    #[arg(long)]
    pub dt: Option<f64>,
    /// Per-step change in rho and psi that ends the march.
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub residual_tol: f64,
    /// Allowed gap to the Perron eigenvalue and eigenvector.
    #[arg(long, default_value_t = 1e-6)]
    pub perron_tol: f64,
    /// Solve even if a gate fails (recorded in the report).
    #[arg(long)]
    pub override_gates: bool,
    /// Write the solution file here for `verify`.
    #[arg(long)]
    pub solution_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct VerifyArgs {
    pub model: PathBuf,
    #[arg(long)]
    pub solution: PathBuf,
    /// Monte Carlo paths per estimate.
    #[arg(long, default_value_t = 10_000)]
    pub paths: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Saddle and Perron tolerance.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Ergodic residual allowed, relative to max(1, |rho|).
    #[arg(long, default_value_t = 1e-6)]
    pub residual_tol: f64,
    /// Random mixed deviations per player in the saddle check.
    #[arg(long, default_value_t = 100)]
    pub mixed: usize,
    /// Random stationary deviations of player 2 in the twisted-chain check.
    #[arg(long, default_value_t = 10)]
    pub d_deviations: usize,
    /// Horizon of the dynamic programming identity check.
    #[arg(long, default_value_t = 1.0)]
    pub dpp_horizon: f64,
    /// Horizon of the growth-moment check.
    #[arg(long, default_value_t = 5.0)]
    pub growth_horizon: f64,
    /// Standard errors allowed in Monte Carlo comparisons.
    #[arg(long, default_value_t = 3.0)]
    pub sigmas: f64,
    #[arg(long)]
    pub override_gates: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerArg {
    Exact,
    Literal,
}

impl From<SamplerArg> for Sampler {
    fn from(s: SamplerArg) -> Self {
        match s {
            SamplerArg::Exact => Sampler::Exact,
            SamplerArg::Literal => Sampler::Literal,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    pub model: PathBuf,
    #[arg(long)]
    pub profile: PathBuf,
    /// Simulation horizon.
    #[arg(long, visible_alias = "T")]
    pub horizon: f64,
    #[arg(long, default_value_t = 10_000)]
    pub paths: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Start state (default: the model's reference state).
    #[arg(long)]
    pub start: Option<usize>,
    /// Also estimate the discounted functional at this risk level.
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long, value_enum, default_value_t = SamplerArg::Exact)]
    pub sampler: SamplerArg,
    /// Include the first sample path in the report.
    #[arg(long)]
    pub record_path: bool,
}

/// Rebuilds an argument vector from resolved options: the positional model
/// path first, then `--flag value` pairs in key order.
pub fn argv_for(name: &str, options: &Value, threads: Option<usize>) -> Vec<String> {
    let mut argv = vec!["rsgame".to_string()];
    if let Some(t) = threads {
        argv.push("--threads".into());
        argv.push(t.to_string());
    }
    argv.push(name.into());
    let Some(obj) = options.as_object() else {
        return argv;
    };
    if let Some(Value::String(model)) = obj.get("model") {
        argv.push(model.clone());
    }
    for (key, value) in obj {
        if key == "model" {
            continue;
        }
        let flag = format!("--{}", key.replace('_', "-"));
        match value {
            Value::Null => {}
            Value::Bool(true) => argv.push(flag),
            Value::Bool(false) => {}
            Value::Array(items) if items.is_empty() => {}
            Value::Array(items) => {
                argv.push(flag);
                argv.push(items.iter().map(scalar).collect::<Vec<_>>().join(","));
            }
            other => {
                argv.push(flag);
                argv.push(scalar(other));
            }
        }
    }
    argv
}

fn scalar(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}
