use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use kqlearn_core::design::{build_max_uncertainty_set, CandidateGrid};
use kqlearn_core::harness::{self, ExperimentConfig, ORACLE_TOL};
use kqlearn_core::kernels::{KernelSpec, Point};
use kqlearn_core::kqlearn::{candidate_grid, run, KqlearnConfig, RKHS_NORM_CONSTANT};
use kqlearn_core::mdp::{build_rkhs_mdp, exact_value_iteration, FiniteMdp, RewardModel, RkhsMdpParams};

#[derive(Parser)]
#[command(name = "kqlearn", version, about = "Kernel ridge regression Q-learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Greedy maximum-variance design trace.
    Design {
        /// Kernel as inline JSON or a path to a JSON file.
        #[arg(long)]
        kernel: String,
        #[arg(long)]
        j: usize,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        /// Use the state-action embedding of this MDP as the grid.
        #[arg(long, conflicts_with_all = ["grid", "grid_size"])]
        mdp: Option<PathBuf>,
        /// JSON array of points.
        #[arg(long, conflicts_with = "grid_size")]
        grid: Option<PathBuf>,
        /// Equally spaced points on [0, 1].
        #[arg(long)]
        grid_size: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// One KQLearn run on an MDP file.
    Run {
        #[arg(long)]
        mdp: PathBuf,
        #[arg(long)]
        kernel: String,
        #[arg(long)]
        j: usize,
        #[arg(long)]
        l: usize,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        /// Defaults to the MDP's discount.
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        #[arg(long, env = "KQLEARN_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Seeded sweep over sample budgets from a JSON experiment config.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's output path.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the config's master seed.
        #[arg(long, env = "KQLEARN_SEED")]
        seed: Option<u64>,
    },
    /// Prints V* and Q* of an MDP file as CSV.
    Oracle {
        #[arg(long)]
        mdp: PathBuf,
        #[arg(long, default_value_t = ORACLE_TOL)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Runs the built-in invariant checks and prints a JSON report.
    Validate {
        /// krr, design, mdp, kqlearn or all.
        #[arg(long, default_value = "all")]
        suite: String,
    },
    /// Writes a synthetic MDP with kernel-smooth transitions as JSON.
    GenMdp {
        #[arg(long)]
        kernel: String,
        #[arg(long)]
        n_states: usize,
        #[arg(long)]
        n_actions: usize,
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long, default_value_t = 0.05)]
        mix: f64,
        #[arg(long)]
        gamma: f64,
        /// Reward model as JSON, e.g. {"kind": "uniform"}.
        #[arg(long)]
        rewards: Option<String>,
        #[arg(long, env = "KQLEARN_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn json_arg(arg: &str) -> Result<String> {
    if arg.trim_start().starts_with(['{', '[']) {
        Ok(arg.to_string())
    } else {
        fs::read_to_string(arg).with_context(|| format!("reading {arg}"))
    }
}

fn parse_kernel(arg: &str) -> Result<KernelSpec> {
    let k: KernelSpec = serde_json::from_str(&json_arg(arg)?).context("parsing kernel JSON")?;
    k.validate()?;
    Ok(k)
}

fn load_mdp(path: &Path) -> Result<FiniteMdp> {
    Ok(harness::load_mdp(path)?)
}

fn config_hash(config: &Value) -> String {
    hex::encode(Sha256::digest(config.to_string().as_bytes()))
}

fn meta_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

/// Writes `<out>.meta.json` with the config hash and the constants behind any bound.
fn write_meta(
    out: &Path,
    config: &Value,
    beta: Option<f64>,
    lambda: Option<f64>,
    extra: Value,
) -> Result<()> {
    let mut meta = json!({
        "config_hash": config_hash(config),
        "config": config,
        "beta": beta,
        "c": RKHS_NORM_CONSTANT,
        "lambda": lambda,
        "version": kqlearn_core::VERSION,
    });
    if let (Value::Object(m), Value::Object(e)) = (&mut meta, extra) {
        m.extend(e);
    }
    let path = meta_path(out);
    fs::write(&path, serde_json::to_string_pretty(&meta)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

fn write_out(out: &Path, body: &str) -> Result<()> {
    fs::write(out, body).with_context(|| format!("writing {}", out.display()))
}

fn cmd_design(
    kernel: &str,
    j: usize,
    lambda: f64,
    mdp: Option<PathBuf>,
    grid: Option<PathBuf>,
    grid_size: Option<usize>,
    out: &Path,
) -> Result<()> {
    let k = parse_kernel(kernel)?;
    let (cands, source) = match (mdp, grid, grid_size) {
        (Some(p), _, _) => (candidate_grid(&load_mdp(&p)?)?, json!({ "mdp": p })),
        (_, Some(p), _) => {
            let text = fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
            let pts: Vec<Point> = serde_json::from_str(&text).context("parsing grid JSON")?;
            (CandidateGrid::new(pts)?, json!({ "grid": p }))
        }
        (_, _, Some(n)) => (CandidateGrid::unit_interval(n)?, json!({ "grid_size": n })),
        _ => bail!("one of --mdp, --grid or --grid-size is required"),
    };
    let trace = build_max_uncertainty_set(&k, &cands, j, lambda)?;
    let mut csv = String::from("step,grid_index,sigma2,info_gain_prefix\n");
    for (step, ((idx, s2), gain)) in
        trace.selected.iter().zip(&trace.sigma2_at_selection).zip(trace.info_gain_prefix(lambda)).enumerate()
    {
        writeln!(csv, "{step},{idx},{s2},{gain}")?;
    }
    write_out(out, &csv)?;
    let config = json!({ "command": "design", "kernel": k, "j": j, "lambda": lambda, "candidates": source });
    write_meta(out, &config, None, Some(lambda), json!({}))
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    mdp: &Path,
    kernel: &str,
    j: usize,
    l: usize,
    lambda: f64,
    gamma: Option<f64>,
    delta: f64,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let m = load_mdp(mdp)?;
    let k = parse_kernel(kernel)?;
    let cfg = KqlearnConfig { j, l, lambda, delta, gamma: gamma.unwrap_or(m.gamma), seed };
    let res = run(&m, &k, &cfg)?;
    let v_star = harness::optimal_value(&m)?;
    let v_pi = kqlearn_core::mdp::policy_value(&m, &res.policy, ORACLE_TOL)?;
    let final_error = v_pi.sup_dist(&v_star);

    let mut csv = String::from("round,j,y_value\n");
    for state in &res.y_history {
        for (idx, y) in state.y.iter().enumerate() {
            writeln!(csv, "{},{idx},{y}", state.round_index)?;
        }
    }
    csv.push_str("final_error,theorem1_bound,samples_used\n");
    writeln!(csv, "{final_error},{},{}", res.theorem1_bound, res.samples_used)?;
    write_out(out, &csv)?;

    let config = json!({ "command": "run", "mdp": m, "kernel": k, "kqlearn": cfg });
    let extra = json!({
        "delta": delta,
        "info_gain": res.info_gain,
        "theorem1_bound": res.theorem1_bound,
        "final_error": final_error,
        "policy": res.policy.action_of,
    });
    write_meta(out, &config, Some(res.beta), Some(lambda), extra)
}

fn cmd_sweep(config: &Path, out: Option<PathBuf>, seed: Option<u64>) -> Result<()> {
    let text = fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?;
    let mut cfg = ExperimentConfig::from_json(&text)?;
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    let out = out.or_else(|| cfg.output.clone()).context("no output path: pass --out or set \"output\"")?;
    let start = Instant::now();
    let records = harness::sweep(&cfg)?;
    let wall = start.elapsed().as_secs_f64();
    let mut buf = Vec::new();
    harness::write_csv(&records, &mut buf)?;
    fs::write(&out, buf).with_context(|| format!("writing {}", out.display()))?;

    let failed = records.iter().filter(|r| !r.is_ok()).count();
    let slope = harness::fit_loglog_slope(&records).ok();
    let in_band = match (slope, cfg.slope_band) {
        (Some(s), Some((lo, hi))) => Some((lo..=hi).contains(&s)),
        _ => None,
    };
    let beta = records.iter().find(|r| r.is_ok()).map(|r| r.beta);
    let medians: Vec<Value> = harness::medians_by_n(&records)
        .into_iter()
        .map(|(n, e)| json!({ "n": n, "median_error": e }))
        .collect();
    let extra = json!({
        "delta": cfg.delta,
        "records": records.len(),
        "failed_records": failed,
        "medians": medians,
        "slope": slope,
        "slope_band": cfg.slope_band,
        "slope_in_band": in_band,
        "wall_time_seconds": wall,
    });
    write_meta(&out, &serde_json::to_value(&cfg)?, beta, Some(cfg.lambda), extra)?;
    match slope {
        Some(s) => println!("{} records, {failed} failed, slope {s:.4}", records.len()),
        None => println!("{} records, {failed} failed", records.len()),
    }
    if in_band == Some(false) {
        println!("slope outside the configured band");
    }
    Ok(())
}

fn cmd_oracle(mdp: &Path, tol: f64, out: Option<PathBuf>) -> Result<()> {
    let m = load_mdp(mdp)?;
    let (v, q) = exact_value_iteration(&m, tol)?;
    let mut csv = String::from("state,action,q_star,v_star\n");
    for (s, row) in q.iter().enumerate() {
        for (a, qa) in row.iter().enumerate() {
            writeln!(csv, "{s},{a},{qa},{}", v.v[s])?;
        }
    }
    match out {
        Some(out) => {
            write_out(&out, &csv)?;
            let config = json!({ "command": "oracle", "mdp": m, "tol": tol });
            write_meta(&out, &config, None, None, json!({}))
        }
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn cmd_validate(suite: &str) -> Result<bool> {
    let report = harness::validate(suite)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(report.pass)
}

#[allow(clippy::too_many_arguments)]
fn cmd_gen_mdp(
    kernel: &str,
    n_states: usize,
    n_actions: usize,
    dim: usize,
    mix: f64,
    gamma: f64,
    rewards: Option<String>,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let k = parse_kernel(kernel)?;
    let rewards: RewardModel = match rewards {
        Some(r) => serde_json::from_str(&json_arg(&r)?).context("parsing reward model JSON")?,
        None => RewardModel::Uniform,
    };
    let params = RkhsMdpParams { n_states, n_actions, dim, mix, gamma, seed, rewards };
    let built = build_rkhs_mdp(&k, &params)?;
    write_out(out, &(built.mdp.to_json() + "\n"))?;
    if built.mix < mix {
        eprintln!("mix reduced from {mix} to {} to keep slice norms at most 1", built.mix);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Design { kernel, j, lambda, mdp, grid, grid_size, out } => {
            cmd_design(&kernel, j, lambda, mdp, grid, grid_size, &out).map(|_| true)
        }
        Command::Run { mdp, kernel, j, l, lambda, gamma, delta, seed, out } => {
            cmd_run(&mdp, &kernel, j, l, lambda, gamma, delta, seed, &out).map(|_| true)
        }
        Command::Sweep { config, out, seed } => cmd_sweep(&config, out, seed).map(|_| true),
        Command::Oracle { mdp, tol, out } => cmd_oracle(&mdp, tol, out).map(|_| true),
        Command::Validate { suite } => cmd_validate(&suite),
        Command::GenMdp { kernel, n_states, n_actions, dim, mix, gamma, rewards, seed, out } => {
            cmd_gen_mdp(&kernel, n_states, n_actions, dim, mix, gamma, rewards, seed, &out).map(|_| true)
        }
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
