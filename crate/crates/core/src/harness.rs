//! Seeded experiment sweeps, CSV reporting, slope fitting and self-checks.

use std::io::{Read, Write};
use std::path::PathBuf;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{build_max_uncertainty_set, verify_uncertainty_sum, CandidateGrid};
use crate::error::{input_err, Error, Result};
use crate::kernels::{KernelSpec, Point};
use crate::kqlearn::{run, suggest_jl, KqlearnConfig, RunResult};
use crate::krr::{DesignSet, RegressionModel};
use crate::mdp::{
    build_rkhs_mdp, exact_value_iteration, policy_value, FiniteMdp, GenerativeModel, Policy, RewardModel,
    RkhsMdpParams, ValueFunction,
};

/// Tolerance of the value oracles used to measure errors.
pub const ORACLE_TOL: f64 = 1e-8;
/// Errors are floored at this value before taking logs.
pub const ERROR_FLOOR: f64 = 1e-12;

/// Where the MDP of each record comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MdpSource {
    /// JSON file holding a [`FiniteMdp`], shared by all records.
    File(PathBuf),
    /// A fresh synthetic MDP per seed.
    Generate(MdpGenerator),
}

/// [`RkhsMdpParams`] minus the seed, which the sweep supplies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MdpGenerator {
    pub n_states: usize,
    pub n_actions: usize,
    pub dim: usize,
    pub mix: f64,
    pub gamma: f64,
    #[serde(default)]
    pub rewards: RewardModel,
}

impl MdpGenerator {
    pub fn params(&self, seed: u64) -> RkhsMdpParams {
        RkhsMdpParams {
            n_states: self.n_states,
            n_actions: self.n_actions,
            dim: self.dim,
            mix: self.mix,
            gamma: self.gamma,
            seed,
            rewards: self.rewards,
        }
    }
}

/// How each target sample budget `N` is split into design size and rounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Split {
    /// `L` from [`suggest_jl`] at the given accuracy, `J = floor(N / L)`.
    Theorem2 { epsilon: f64 },
    /// One `(J, L)` per entry of `n_values`, with `J * L = N`.
    Explicit { pairs: Vec<(usize, usize)> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub mdp: MdpSource,
    pub kernel: KernelSpec,
    pub n_values: Vec<usize>,
    pub split: Split,
    pub seeds: Vec<u64>,
    pub delta: f64,
    pub lambda: f64,
    #[serde(default)]
    pub master_seed: u64,
    /// Pre-registered acceptance band for the fitted log-log slope.
    #[serde(default)]
    pub slope_band: Option<(f64, f64)>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Input(format!("experiment config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_values.is_empty() || self.seeds.is_empty() {
            return input_err("n_values and seeds must be nonempty");
        }
        if self.n_values.contains(&0) {
            return input_err("every N must be positive");
        }
        self.kernel.validate()?;
        match &self.split {
            Split::Theorem2 { epsilon } if !(*epsilon > 0.0) => input_err("epsilon must be positive"),
            Split::Explicit { pairs } => {
                if pairs.len() != self.n_values.len() {
                    return input_err("explicit split needs one (J, L) pair per N");
                }
                match pairs.iter().zip(&self.n_values).find(|((j, l), n)| j * l != **n) {
                    Some(((j, l), n)) => input_err(format!("J * L = {j} * {l} does not equal N = {n}")),
                    None => Ok(()),
                }
            }
            _ => Ok(()),
        }?;
        if let Some((lo, hi)) = self.slope_band {
            if !(lo <= hi) {
                return input_err("slope band must satisfy low <= high");
            }
        }
        KqlearnConfig { j: 1, l: 1, lambda: self.lambda, delta: self.delta, gamma: 0.5, seed: 0 }.validate()
    }

    /// `(J, L)` for every entry of `n_values`, given the MDP's discount and dimension.
    pub fn splits(&self, gamma: f64, dim: usize) -> Result<Vec<(usize, usize)>> {
        match &self.split {
            Split::Explicit { pairs } => Ok(pairs.clone()),
            Split::Theorem2 { epsilon } => {
                let profile = self.kernel.eigendecay(dim)?;
                let (_, l) = suggest_jl(*epsilon, gamma, &profile, self.delta)?;
                let l = usize::try_from(l).map_err(|_| Error::Input("suggested L overflows".into()))?;
                self.n_values
                    .iter()
                    .map(|&n| match n / l {
                        0 => input_err(format!("N = {n} is smaller than L = {l}")),
                        j => Ok((j, l)),
                    })
                    .collect()
            }
        }
    }
}

/// One `(N, seed)` job. Numeric fields are NaN when `error` is set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub seed: u64,
    pub n_target: usize,
    pub j: usize,
    pub l: usize,
    /// `J * L`.
    pub n: usize,
    /// `||V^pi - V*||_inf`.
    pub measured_error: f64,
    pub theorem1_bound: f64,
    pub info_gain: f64,
    pub beta: f64,
    pub samples_used: u64,
    pub bound_holds: bool,
    pub y_min: f64,
    pub y_max: f64,
    pub v_star_min: f64,
    pub v_star_max: f64,
    pub error: Option<String>,
    #[serde(skip)]
    pub wall_time_seconds: f64,
}

impl ExperimentRecord {
    fn failed(seed: u64, n_target: usize, j: usize, l: usize, err: &Error) -> Self {
        ExperimentRecord {
            seed,
            n_target,
            j,
            l,
            n: j * l,
            measured_error: f64::NAN,
            theorem1_bound: f64::NAN,
            info_gain: f64::NAN,
            beta: f64::NAN,
            samples_used: 0,
            bound_holds: false,
            y_min: f64::NAN,
            y_max: f64::NAN,
            v_star_min: f64::NAN,
            v_star_max: f64::NAN,
            error: Some(err.to_string()),
            wall_time_seconds: 0.0,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }
}

/// Independent stream for a `(master_seed, N, seed)` job, or `(master_seed, seed)` when
/// `n` is `None` so that every `N` of one seed sees the same MDP.
pub fn job_rng(master_seed: u64, n: Option<usize>, seed: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&master_seed.to_le_bytes());
    key[8..16].copy_from_slice(&seed.to_le_bytes());
    if let Some(n) = n {
        key[16..24].copy_from_slice(&(n as u64).to_le_bytes());
        key[24] = 1;
    }
    ChaCha8Rng::from_seed(key)
}

/// The MDP a sweep uses for `seed`.
pub fn sweep_mdp(cfg: &ExperimentConfig, seed: u64) -> Result<FiniteMdp> {
    match &cfg.mdp {
        MdpSource::File(path) => load_mdp(path),
        MdpSource::Generate(g) => {
            let mdp_seed = job_rng(cfg.master_seed, None, seed).next_u64();
            Ok(build_rkhs_mdp(&cfg.kernel, &g.params(mdp_seed))?.mdp)
        }
    }
}

pub fn load_mdp(path: &std::path::Path) -> Result<FiniteMdp> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Input(format!("cannot read MDP file {}: {e}", path.display())))?;
    FiniteMdp::from_json(&text)
}

/// Runs every `(N, seed)` job on the rayon pool. Records come back sorted by
/// `(N, seed)`; a failing job yields an error row instead of aborting the sweep.
pub fn sweep(cfg: &ExperimentConfig) -> Result<Vec<ExperimentRecord>> {
    cfg.validate()?;
    let (gamma, dim) = match &cfg.mdp {
        MdpSource::File(path) => {
            let m = load_mdp(path)?;
            (m.gamma, m.dim())
        }
        MdpSource::Generate(g) => (g.gamma, g.dim),
    };
    let splits = cfg.splits(gamma, dim)?;
    let jobs: Vec<(usize, (usize, usize), u64)> = cfg
        .n_values
        .iter()
        .zip(&splits)
        .flat_map(|(&n, &jl)| cfg.seeds.iter().map(move |&s| (n, jl, s)))
        .collect();
    let mut records: Vec<ExperimentRecord> = jobs
        .par_iter()
        .map(|&(n, (j, l), seed)| {
            let start = Instant::now();
            let mut rec =
                run_job(cfg, n, j, l, seed).unwrap_or_else(|e| ExperimentRecord::failed(seed, n, j, l, &e));
            rec.wall_time_seconds = start.elapsed().as_secs_f64();
            rec
        })
        .collect();
    records.sort_by_key(|r| (r.n_target, r.seed));
    Ok(records)
}

fn run_job(cfg: &ExperimentConfig, n: usize, j: usize, l: usize, seed: u64) -> Result<ExperimentRecord> {
    let mdp = sweep_mdp(cfg, seed)?;
    let run_seed = job_rng(cfg.master_seed, Some(n), seed).next_u64();
    let kcfg = KqlearnConfig { j, l, lambda: cfg.lambda, delta: cfg.delta, gamma: mdp.gamma, seed: run_seed };
    let res = run(&mdp, &cfg.kernel, &kcfg)?;
    let v_star = optimal_value(&mdp)?;
    let v_pi = policy_value(&mdp, &res.policy, ORACLE_TOL)?;
    let measured_error = v_pi.sup_dist(&v_star);
    let (y_min, y_max) = y_range(&res);
    Ok(ExperimentRecord {
        seed,
        n_target: n,
        j,
        l,
        n: j * l,
        measured_error,
        theorem1_bound: res.theorem1_bound,
        info_gain: res.info_gain,
        beta: res.beta,
        samples_used: res.samples_used,
        bound_holds: measured_error <= res.theorem1_bound,
        y_min,
        y_max,
        v_star_min: v_star.v.iter().copied().fold(f64::INFINITY, f64::min),
        v_star_max: v_star.v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        error: None,
        wall_time_seconds: 0.0,
    })
}

/// `V*` as the exact value of the policy greedy in the value-iteration `Q*`. It is
/// within `ORACLE_TOL` of the iterate, and a learned policy that matches the optimal one
/// scores an error of exactly zero.
pub fn optimal_value(mdp: &FiniteMdp) -> Result<ValueFunction> {
    let (_, q) = exact_value_iteration(mdp, ORACLE_TOL)?;
    policy_value(mdp, &Policy::greedy(&q), ORACLE_TOL)
}

/// Smallest and largest entry over all recorded `Y` vectors.
pub fn y_range(res: &RunResult) -> (f64, f64) {
    res.y_history
        .iter()
        .flat_map(|r| r.y.iter().copied())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), y| (lo.min(y), hi.max(y)))
}

pub fn write_csv<W: Write>(records: &[ExperimentRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r).map_err(|e| Error::Input(format!("csv write: {e}")))?;
    }
    w.flush().map_err(|e| Error::Input(format!("csv write: {e}")))
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<ExperimentRecord>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(|e| Error::Input(format!("csv read: {e}"))))
        .collect()
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        0.5 * (xs[m - 1] + xs[m])
    }
}

/// Median measured error per distinct `N`, ascending in `N`. Error rows are skipped.
pub fn medians_by_n(records: &[ExperimentRecord]) -> Vec<(usize, f64)> {
    let mut ns: Vec<usize> = records.iter().filter(|r| r.is_ok()).map(|r| r.n).collect();
    ns.sort_unstable();
    ns.dedup();
    ns.into_iter()
        .map(|n| {
            let errs = records.iter().filter(|r| r.is_ok() && r.n == n).map(|r| r.measured_error).collect();
            (n, median(errs))
        })
        .collect()
}

/// Least-squares slope of `ln(median error)` against `ln N`.
pub fn fit_loglog_slope(records: &[ExperimentRecord]) -> Result<f64> {
    let meds = medians_by_n(records);
    if meds.len() < 4 {
        return input_err(format!("slope fit needs at least 4 distinct N values, got {}", meds.len()));
    }
    let pts: Vec<(f64, f64)> =
        meds.iter().map(|&(n, e)| ((n as f64).ln(), e.max(ERROR_FLOOR).ln())).collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

/// One invariant measured by [`validate`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub suite: String,
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
    pub pass: bool,
}

pub const SUITES: [&str; 4] = ["krr", "design", "mdp", "kqlearn"];

/// Runs the built-in invariant checks of one suite (or `"all"`) on fixed seeds.
pub fn validate(suite: &str) -> Result<ValidationReport> {
    let names: Vec<&str> = match suite {
        "all" => SUITES.to_vec(),
        s if SUITES.contains(&s) => vec![s],
        other => {
            return input_err(format!(
                "unknown suite {other:?}; expected one of krr, design, mdp, kqlearn, all"
            ))
        }
    };
    let mut checks = Vec::new();
    for name in names {
        match name {
            "krr" => validate_krr(&mut checks)?,
            "design" => validate_design(&mut checks)?,
            "mdp" => validate_mdp(&mut checks)?,
            _ => validate_kqlearn(&mut checks)?,
        }
    }
    let pass = checks.iter().all(|c| c.pass);
    Ok(ValidationReport { checks, pass })
}

fn at_most(suite: &str, name: &str, value: f64, threshold: f64) -> Check {
    Check { suite: suite.into(), name: name.into(), value, threshold, pass: value <= threshold }
}

fn validation_kernels() -> Vec<KernelSpec> {
    vec![
        KernelSpec::se(0.3),
        KernelSpec::matern(1.5, 0.4),
        KernelSpec::finite_rank(vec![1.0, 0.5, 0.25, 0.125]),
    ]
}

fn random_points(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Point> {
    (0..n).map(|_| Point((0..dim).map(|_| rng.random()).collect())).collect()
}

fn dense_posterior(
    k: &KernelSpec,
    design: &[Point],
    lambda: f64,
    y: &[f64],
    z: &Point,
) -> Result<(f64, f64)> {
    let n = design.len();
    let mut g = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            g[(i, j)] = k.eval(&design[i], &design[j])? + if i == j { lambda * lambda } else { 0.0 };
        }
    }
    let inv = g.try_inverse().ok_or_else(|| Error::Numeric("dense Gram inverse failed".into()))?;
    let kv = DVector::from_iterator(n, design.iter().map(|p| k.eval(z, p)).collect::<Result<Vec<_>>>()?);
    let mean = kv.dot(&(&inv * DVector::from_column_slice(y)));
    let var = k.eval(z, z)? - kv.dot(&(&inv * &kv));
    Ok((mean, var.max(0.0).sqrt()))
}

fn validate_krr(checks: &mut Vec<Check>) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    let mut violations = 0usize;
    for k in validation_kernels() {
        let dim = k.fixed_dim().unwrap_or(2);
        for _ in 0..5 {
            let j = rng.random_range(1..=20);
            let design = random_points(&mut rng, j, dim);
            let y: Vec<f64> = (0..j).map(|_| rng.random_range(-1.0..1.0)).collect();
            let lambda = rng.random_range(0.3..1.5);
            let model = RegressionModel::fit(k.clone(), DesignSet::new(design.clone(), lambda)?, y.clone())?;
            for z in random_points(&mut rng, 10, dim) {
                let (m, s) = dense_posterior(&k, &design, lambda, &y, &z)?;
                worst = worst.max((model.predict(&z)? - m).abs()).max((model.posterior_std(&z)? - s).abs());
            }
            let probes = random_points(&mut rng, 20, dim);
            let mut prev: Vec<f64> = probes.iter().map(|z| k.eval(z, z)).collect::<Result<_>>()?;
            let mut grow = RegressionModel::empty(k.clone(), lambda)?;
            for p in &design {
                grow = grow.add_point(p.clone())?;
                let cur: Vec<f64> = probes.iter().map(|z| grow.posterior_var(z)).collect::<Result<_>>()?;
                violations += cur.iter().zip(&prev).filter(|(c, p)| **c > **p + 1e-9).count();
                prev = cur;
            }
        }
    }
    checks.push(at_most("krr", "dense_equivalence_max_abs_diff", worst, 1e-9));
    checks.push(at_most("krr", "variance_monotonicity_violations", violations as f64, 0.0));
    Ok(())
}

fn brute_force_greedy(k: &KernelSpec, grid: &CandidateGrid, j: usize, lambda: f64) -> Result<Vec<usize>> {
    let mut chosen: Vec<usize> = Vec::new();
    for _ in 0..j {
        let pts: Vec<Point> = chosen.iter().map(|&i| grid.points()[i].clone()).collect();
        let model = if pts.is_empty() {
            RegressionModel::empty(k.clone(), lambda)?
        } else {
            RegressionModel::new(k.clone(), DesignSet::new(pts, lambda)?)?
        };
        let mut best = (0, f64::NEG_INFINITY);
        for (i, z) in grid.points().iter().enumerate() {
            let v = model.posterior_var(z)?;
            if v > best.1 {
                best = (i, v);
            }
        }
        chosen.push(best.0);
    }
    Ok(chosen)
}

fn validate_design(checks: &mut Vec<Check>) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut sum_violations = 0usize;
    let mut worst_margin = f64::NEG_INFINITY;
    let mut mismatches = 0usize;
    for k in validation_kernels() {
        let dim = k.fixed_dim().unwrap_or(2);
        let grid = CandidateGrid::new(random_points(&mut rng, 60, dim))?;
        for &lambda in &[0.5, 1.0, 2.0] {
            let trace = build_max_uncertainty_set(&k, &grid, 20, lambda)?;
            let rep = verify_uncertainty_sum(&trace, &k, &grid, lambda)?;
            sum_violations += usize::from(!rep.holds);
            worst_margin = worst_margin.max(rep.lhs - rep.rhs);
            if brute_force_greedy(&k, &grid, 10, lambda)? != trace.selected[..10] {
                mismatches += 1;
            }
        }
    }
    let grid = CandidateGrid::unit_interval(50)?;
    let one = build_max_uncertainty_set(&KernelSpec::se(0.2), &grid, 1, 1.0)?;
    let rep = verify_uncertainty_sum(&one, &KernelSpec::se(0.2), &grid, 1.0)?;
    checks.push(at_most("design", "uncertainty_sum_violations", sum_violations as f64, 0.0));
    checks.push(at_most("design", "uncertainty_sum_worst_lhs_minus_rhs", worst_margin, 1e-9));
    checks.push(at_most("design", "uncertainty_sum_equality_j1", (rep.lhs - rep.rhs).abs(), 1e-12));
    checks.push(at_most("design", "greedy_bruteforce_mismatches", mismatches as f64, 0.0));
    Ok(())
}

fn validation_mdp(seed: u64) -> Result<FiniteMdp> {
    let params = RkhsMdpParams {
        n_states: 12,
        n_actions: 3,
        dim: 2,
        mix: 0.05,
        gamma: 0.8,
        seed,
        rewards: RewardModel::Uniform,
    };
    Ok(build_rkhs_mdp(&KernelSpec::se(0.3), &params)?.mdp)
}

fn validate_mdp(checks: &mut Vec<Check>) -> Result<()> {
    let mut residual: f64 = 0.0;
    let mut policy_gap: f64 = 0.0;
    let mut row_err: f64 = 0.0;
    let mut range_violations = 0usize;
    let mut count_err = 0u64;
    for seed in 0..5 {
        let m = validation_mdp(seed)?;
        for rows in &m.transition {
            for row in rows {
                row_err = row_err.max((row.iter().sum::<f64>() - 1.0).abs());
                range_violations += row.iter().filter(|p| **p < 0.0).count();
            }
        }
        let (v, q) = exact_value_iteration(&m, ORACLE_TOL)?;
        let tv = m.bellman(&v.v);
        residual = residual.max(v.v.iter().zip(&tv).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        range_violations += v.v.iter().filter(|x| !(0.0..=m.v_max()).contains(*x)).count();
        let v_pi = policy_value(&m, &Policy::greedy(&q), ORACLE_TOL)?;
        policy_gap = policy_gap.max(v_pi.sup_dist(&v));
        let mut gen = GenerativeModel::new(&m, seed);
        for s in 0..m.n_states {
            for a in 0..m.n_actions {
                gen.sample_transition(s, a)?;
            }
        }
        count_err += gen.sample_count().abs_diff((m.n_states * m.n_actions) as u64);
    }
    checks.push(at_most("mdp", "transition_row_sum_max_abs_diff", row_err, 1e-12));
    checks.push(at_most("mdp", "bellman_residual_of_vstar", residual, ORACLE_TOL));
    checks.push(at_most("mdp", "greedy_policy_value_gap", policy_gap, 2.0 * ORACLE_TOL));
    checks.push(at_most("mdp", "range_violations", range_violations as f64, 0.0));
    checks.push(at_most("mdp", "sample_count_mismatch", count_err as f64, 0.0));
    Ok(())
}

fn validate_kqlearn(checks: &mut Vec<Check>) -> Result<()> {
    let k = KernelSpec::se(0.3);
    let mut accounting = 0u64;
    let mut clip_violations = 0usize;
    let mut nondeterministic = 0usize;
    for seed in 0..3 {
        let m = validation_mdp(seed)?;
        let cfg = KqlearnConfig { j: 30, l: 10, lambda: 1.0, delta: 0.1, gamma: m.gamma, seed };
        let a = run(&m, &k, &cfg)?;
        let b = run(&m, &k, &cfg)?;
        accounting += a.samples_used.abs_diff(cfg.samples());
        let (lo, hi) = y_range(&a);
        clip_violations += usize::from(lo < 0.0 || hi > m.v_max());
        nondeterministic += usize::from(a.proxy != b.proxy || a.y_history != b.y_history);
    }
    let single = FiniteMdp::with_line_embedding(vec![vec![vec![1.0]]], vec![vec![1.0]], 0.5)?;
    let cfg = KqlearnConfig { j: 1, l: 60, lambda: 1.0, delta: 0.1, gamma: 0.5, seed: 0 };
    let fixed_point = run(&single, &k, &cfg)?.y_history[60].y[0];
    checks.push(at_most("kqlearn", "sample_accounting_mismatch", accounting as f64, 0.0));
    checks.push(at_most("kqlearn", "clipping_violations", clip_violations as f64, 0.0));
    checks.push(at_most("kqlearn", "nondeterministic_runs", nondeterministic as f64, 0.0));
    checks.push(at_most("kqlearn", "scalar_fixed_point_abs_diff", (fixed_point - 4.0 / 3.0).abs(), 1e-12));
    Ok(())
}
