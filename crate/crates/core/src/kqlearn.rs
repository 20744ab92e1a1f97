//! Kernel-based Q-learning: rounds of approximate value iteration whose expectation
//! step is a kernel ridge regression over a fixed maximum-variance design.

use serde::{Deserialize, Serialize};

use crate::design::{build_max_uncertainty_set, info_gain, CandidateGrid, GreedyTrace};
use crate::error::{input_err, Result};
use crate::kernels::{EigendecayProfile, KernelSpec, Point};
use crate::krr::{confidence_width, DesignSet, RegressionModel};
use crate::mdp::{FiniteMdp, GenerativeModel, Policy};

/// RKHS-norm constant relating `||P V||` to `1 / (1 - gamma)` on the unit cube.
pub const RKHS_NORM_CONSTANT: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KqlearnConfig {
    /// Design size.
    pub j: usize,
    /// Number of rounds.
    pub l: usize,
    pub lambda: f64,
    pub delta: f64,
    pub gamma: f64,
    pub seed: u64,
}

impl KqlearnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.j == 0 || self.l == 0 {
            return input_err("J and L must be positive");
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return input_err("lambda must be positive");
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return input_err("delta must lie in (0, 1)");
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return input_err("gamma must lie in (0, 1)");
        }
        Ok(())
    }

    /// Total generative-model draws, `J * L`.
    pub fn samples(&self) -> u64 {
        (self.j * self.l) as u64
    }
}

/// Observation vector `Y^(l)` on the design after round `l`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundState {
    pub y: Vec<f64>,
    pub round_index: usize,
}

impl RoundState {
    pub fn initial(j: usize) -> Self {
        RoundState { y: vec![0.0; j], round_index: 0 }
    }
}

/// The fixed design of one run together with everything a round needs:
/// the factorized regularized Gram matrix and the kernel between every
/// state-action pair of the MDP and every design point.
#[derive(Clone, Debug)]
pub struct DesignModel {
    trace: GreedyTrace,
    pairs: Vec<(usize, usize)>,
    model: RegressionModel,
    cross: Vec<Vec<f64>>,
    reward: Vec<Vec<f64>>,
    n_actions: usize,
    gamma: f64,
}

impl DesignModel {
    /// Runs the greedy design phase on the MDP's embedded state-action grid.
    pub fn build(mdp: &FiniteMdp, k: &KernelSpec, j: usize, lambda: f64) -> Result<Self> {
        let grid = candidate_grid(mdp)?;
        let trace = build_max_uncertainty_set(k, &grid, j, lambda)?;
        let pairs = trace.selected.iter().map(|&i| grid.pair(i).expect("grid built with pairs")).collect();
        let model = RegressionModel::new(k.clone(), DesignSet::new(trace.selected_points(&grid), lambda)?)?;
        let cross = mdp.embedding.iter().map(|z| model.kernel_vector(z)).collect::<Result<Vec<_>>>()?;
        Ok(DesignModel {
            trace,
            pairs,
            model,
            cross,
            reward: mdp.reward.clone(),
            n_actions: mdp.n_actions,
            gamma: mdp.gamma,
        })
    }

    pub fn trace(&self) -> &GreedyTrace {
        &self.trace
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// `(s_j, a_j)` of design point `j`.
    pub fn pair(&self, j: usize) -> (usize, usize) {
        self.pairs[j]
    }

    pub fn design(&self) -> &DesignSet {
        self.model.design()
    }

    pub fn kernel(&self) -> &KernelSpec {
        self.model.kernel()
    }

    /// `(K + lambda^2 I)^-1 y`.
    pub fn weights(&self, y: &[f64]) -> Vec<f64> {
        self.model.factor().solve(y)
    }

    /// Regressor `k(z_sa)^T w` at every state-action pair, indexed like the embedding.
    fn regress_all(&self, w: &[f64]) -> Vec<f64> {
        self.cross.iter().map(|k| k.iter().zip(w).map(|(a, b)| a * b).sum()).collect()
    }

    /// `max_a { r(s, a) + gamma * pred(s, a) }`.
    fn backup(&self, pred: &[f64], s: usize) -> f64 {
        (0..self.n_actions)
            .map(|a| self.reward[s][a] + self.gamma * pred[s * self.n_actions + a])
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Candidate grid of all embedded state-action pairs, in embedding order.
pub fn candidate_grid(mdp: &FiniteMdp) -> Result<CandidateGrid> {
    let pairs = (0..mdp.n_states).flat_map(|s| (0..mdp.n_actions).map(move |a| (s, a))).collect();
    CandidateGrid::with_pairs(mdp.embedding.clone(), pairs)
}

/// One round: for each design point draw `s' ~ P(. | s_j, a_j)` and set
/// `y[j] = clip(max_a { r(s', a) + gamma k(s', a)^T (K + lambda^2 I)^-1 y_prev }, 0, 1/(1-gamma))`.
pub fn bellman_round(prev: &RoundState, dm: &DesignModel, gen: &mut GenerativeModel) -> Result<RoundState> {
    if prev.y.len() != dm.len() {
        return input_err(format!(
            "observation length {} does not match design size {}",
            prev.y.len(),
            dm.len()
        ));
    }
    let v_max = 1.0 / (1.0 - dm.gamma);
    let pred = dm.regress_all(&dm.weights(&prev.y));
    let mut y = Vec::with_capacity(dm.len());
    for &(s, a) in &dm.pairs {
        let next = gen.sample_transition(s, a)?;
        y.push(dm.backup(&pred, next).clamp(0.0, v_max));
    }
    Ok(RoundState { y, round_index: prev.round_index + 1 })
}

/// `Q(s, a) = r(s, a) + gamma k(z_sa)^T weights`, tabulated over the MDP.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProxyQ {
    pub design: Vec<Point>,
    pub lambda: f64,
    pub weights: Vec<f64>,
    pub gamma: f64,
    pub values: Vec<Vec<f64>>,
}

impl ProxyQ {
    pub fn q(&self, s: usize, a: usize) -> f64 {
        self.values[s][a]
    }

    pub fn policy(&self) -> Policy {
        Policy::greedy(&self.values)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunResult {
    pub proxy: ProxyQ,
    pub policy: Policy,
    pub trace: GreedyTrace,
    pub samples_used: u64,
    /// `Y^(0) .. Y^(L)`.
    pub y_history: Vec<RoundState>,
    pub beta: f64,
    pub info_gain: f64,
    pub theorem1_bound: f64,
}

/// Width `beta(delta)` for regressing `P V` with `V` in `[0, 1/(1-gamma)]`: RKHS norm
/// at most `c / (1 - gamma)` and sub-Gaussian noise with parameter `1 / (2 (1 - gamma))`.
pub fn certified_beta(cfg: &KqlearnConfig, n_candidates: usize) -> Result<f64> {
    let h = 1.0 / (1.0 - cfg.gamma);
    confidence_width(RKHS_NORM_CONSTANT * h, 0.5 * h, cfg.lambda, n_candidates, cfg.delta)
}

/// Full algorithm: greedy design, `L` sampling rounds from `Y^(0) = 0`, proxy Q and
/// its greedy policy. Draws exactly `J * L` transitions.
pub fn run(mdp: &FiniteMdp, k: &KernelSpec, cfg: &KqlearnConfig) -> Result<RunResult> {
    cfg.validate()?;
    if cfg.gamma != mdp.gamma {
        return input_err(format!("config gamma {} differs from MDP gamma {}", cfg.gamma, mdp.gamma));
    }
    let dm = DesignModel::build(mdp, k, cfg.j, cfg.lambda)?;
    let mut gen = GenerativeModel::new(mdp, cfg.seed);
    let mut history = Vec::with_capacity(cfg.l + 1);
    history.push(RoundState::initial(cfg.j));
    for _ in 0..cfg.l {
        let next = bellman_round(history.last().expect("nonempty"), &dm, &mut gen)?;
        history.push(next);
    }
    let weights = dm.weights(&history[cfg.l].y);
    let pred = dm.regress_all(&weights);
    let values = (0..mdp.n_states)
        .map(|s| {
            (0..mdp.n_actions).map(|a| mdp.reward[s][a] + mdp.gamma * pred[mdp.pair_index(s, a)]).collect()
        })
        .collect();
    let proxy =
        ProxyQ { design: dm.design().points.clone(), lambda: cfg.lambda, weights, gamma: mdp.gamma, values };
    let policy = proxy.policy();
    let gain = info_gain(k, &dm.design().points, cfg.lambda)?;
    let beta = certified_beta(cfg, mdp.n_states * mdp.n_actions)?;
    Ok(RunResult {
        proxy,
        policy,
        trace: dm.trace().clone(),
        samples_used: gen.sample_count(),
        y_history: history,
        beta,
        info_gain: gain,
        theorem1_bound: theorem1_bound(cfg, beta, gain),
    })
}

/// `2 beta (gamma/(1-gamma))^2 sqrt(2 Gamma / (J ln(1 + 1/lambda^2))) + 2 gamma^(L-1) / (1-gamma)^2`.
pub fn theorem1_bound(cfg: &KqlearnConfig, beta: f64, gamma_info: f64) -> f64 {
    let g = cfg.gamma;
    let h = 1.0 / (1.0 - g);
    let spread = (2.0 * gamma_info / (cfg.j as f64 * (1.0 / (cfg.lambda * cfg.lambda)).ln_1p())).sqrt();
    2.0 * beta * (g * h).powi(2) * spread + 2.0 * g.powi(cfg.l as i32 - 1) * h * h
}

/// Exponent of `1/epsilon` in the design size for a given eigendecay.
pub fn epsilon_exponent(profile: &EigendecayProfile) -> f64 {
    match *profile {
        EigendecayProfile::Polynomial { beta_p, .. } => 2.0 * beta_p / (beta_p - 1.0),
        EigendecayProfile::Exponential { .. } => 2.0,
    }
}

/// Sizing rule for an `epsilon`-optimal run, with every hidden constant set to 1
/// (`c = 1`, `lambda = 1`, `d = 1`):
///
/// ```text
/// L = ceil((ln(1/eps) + 2 ln(1/(1-gamma)) + ln 4) / (1 - gamma))
/// J = ceil((gamma / (eps (1-gamma)^3))^p (1 + sqrt(ln(1/((1-gamma) delta))))^p ln(1/(eps (1-gamma)))^q)
/// ```
///
/// with `p = 2 beta_p / (beta_p - 1)`, `q = beta_p / (beta_p - 1)` under polynomial decay and
/// `p = 2`, `q = 2 + 1/beta_e` under exponential decay. The log factor is floored at 1.
/// Not a certified guarantee: experiment sizing only.
pub fn suggest_jl(epsilon: f64, gamma: f64, profile: &EigendecayProfile, delta: f64) -> Result<(u64, u64)> {
    if !(epsilon > 0.0) {
        return input_err("epsilon must be positive");
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return input_err("gamma must lie in (0, 1)");
    }
    if !(delta > 0.0 && delta < 1.0) {
        return input_err("delta must lie in (0, 1)");
    }
    let h = 1.0 / (1.0 - gamma);
    let l = (((1.0 / epsilon).ln() + 2.0 * h.ln() + 4f64.ln()) / (1.0 - gamma)).ceil().max(1.0);
    let p = epsilon_exponent(profile);
    let q = match *profile {
        EigendecayProfile::Polynomial { beta_p, .. } => beta_p / (beta_p - 1.0),
        EigendecayProfile::Exponential { beta_e, .. } => 2.0 + 1.0 / beta_e,
    };
    let width = RKHS_NORM_CONSTANT + (RKHS_NORM_CONSTANT * h / delta).ln().sqrt();
    let log_factor = (h / epsilon).ln().max(1.0);
    let j = ((gamma * h.powi(3) / epsilon).powf(p) * width.powf(p) * log_factor.powf(q)).ceil().max(1.0);
    Ok((to_count(j), to_count(l)))
}

fn to_count(x: f64) -> u64 {
    if x >= u64::MAX as f64 {
        u64::MAX
    } else {
        x as u64
    }
}
