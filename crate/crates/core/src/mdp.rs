//! Tabular discounted MDPs, a generative-model sampler and exact oracles.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{input_err, Error, Result};
use crate::kernels::{KernelSpec, Point};

const ROW_SUM_TOL: f64 = 1e-12;
const DIRECT_SOLVE_MAX_STATES: usize = 1000;

/// Finite MDP `(S, A, P, r, gamma)` with each `(s, a)` embedded in `[0,1]^d`.
/// `embedding[s * n_actions + a]` is the point of `(s, a)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiniteMdp {
    pub n_states: usize,
    pub n_actions: usize,
    pub gamma: f64,
    pub transition: Vec<Vec<Vec<f64>>>,
    pub reward: Vec<Vec<f64>>,
    pub embedding: Vec<Point>,
}

impl FiniteMdp {
    pub fn new(
        transition: Vec<Vec<Vec<f64>>>,
        reward: Vec<Vec<f64>>,
        gamma: f64,
        embedding: Vec<Point>,
    ) -> Result<Self> {
        let n_states = transition.len();
        let n_actions = transition.first().map_or(0, |r| r.len());
        let m = FiniteMdp { n_states, n_actions, gamma, transition, reward, embedding };
        m.validate()?;
        Ok(m)
    }

    /// Like [`FiniteMdp::new`], with pairs spread evenly along `[0, 1]`.
    pub fn with_line_embedding(
        transition: Vec<Vec<Vec<f64>>>,
        reward: Vec<Vec<f64>>,
        gamma: f64,
    ) -> Result<Self> {
        let count = transition.len() * transition.first().map_or(0, |r| r.len());
        Self::new(transition, reward, gamma, line_embedding(count))
    }

    pub fn validate(&self) -> Result<()> {
        let (ns, na) = (self.n_states, self.n_actions);
        if ns == 0 || na == 0 {
            return input_err("MDP needs at least one state and one action");
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return input_err(format!("gamma must lie in (0, 1), got {}", self.gamma));
        }
        if self.transition.len() != ns || self.reward.len() != ns {
            return input_err("transition and reward must have one entry per state");
        }
        for s in 0..ns {
            if self.transition[s].len() != na || self.reward[s].len() != na {
                return input_err(format!("state {s} does not have {na} actions"));
            }
            for a in 0..na {
                let row = &self.transition[s][a];
                if row.len() != ns {
                    return input_err(format!("transition row ({s}, {a}) has wrong length"));
                }
                if row.iter().any(|p| !(*p >= 0.0)) {
                    return input_err(format!("transition row ({s}, {a}) has a negative entry"));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    return input_err(format!("transition row ({s}, {a}) sums to {sum}"));
                }
                let r = self.reward[s][a];
                if !(0.0..=1.0).contains(&r) {
                    return input_err(format!("reward ({s}, {a}) = {r} outside [0, 1]"));
                }
            }
        }
        if self.embedding.len() != ns * na {
            return input_err("embedding must have one point per state-action pair");
        }
        let dim = self.embedding[0].dim();
        if dim == 0 {
            return input_err("embedding points must have positive dimension");
        }
        for p in &self.embedding {
            if p.dim() != dim {
                return input_err("embedding points must share one dimension");
            }
            if p.coords().iter().any(|c| !(0.0..=1.0).contains(c)) {
                return input_err("embedding points must lie in the unit cube");
            }
        }
        let mut sorted: Vec<&[f64]> = self.embedding.iter().map(|p| p.coords()).collect();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return input_err("embedding is not injective");
        }
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: FiniteMdp = serde_json::from_str(s).map_err(|e| Error::Input(format!("bad MDP JSON: {e}")))?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("MDP serialization cannot fail")
    }

    pub fn dim(&self) -> usize {
        self.embedding[0].dim()
    }

    pub fn pair_index(&self, s: usize, a: usize) -> usize {
        s * self.n_actions + a
    }

    pub fn point(&self, s: usize, a: usize) -> &Point {
        &self.embedding[self.pair_index(s, a)]
    }

    /// Upper end of the value range, `1 / (1 - gamma)`.
    pub fn v_max(&self) -> f64 {
        1.0 / (1.0 - self.gamma)
    }

    /// `[P V](s, a)`.
    pub fn expected_next(&self, s: usize, a: usize, v: &[f64]) -> f64 {
        self.transition[s][a].iter().zip(v).map(|(p, x)| p * x).sum()
    }

    /// `Q(s, a) = r(s, a) + gamma [P V](s, a)`.
    pub fn q_from_v(&self, v: &[f64]) -> Vec<Vec<f64>> {
        (0..self.n_states)
            .map(|s| {
                (0..self.n_actions)
                    .map(|a| self.reward[s][a] + self.gamma * self.expected_next(s, a, v))
                    .collect()
            })
            .collect()
    }

    /// Bellman optimality operator `T`.
    pub fn bellman(&self, v: &[f64]) -> Vec<f64> {
        self.q_from_v(v).into_iter().map(|row| row.into_iter().fold(f64::NEG_INFINITY, f64::max)).collect()
    }
}

/// `count` distinct points spread evenly over `[0, 1]`.
pub fn line_embedding(count: usize) -> Vec<Point> {
    if count <= 1 {
        return vec![Point(vec![0.0]); count];
    }
    (0..count).map(|i| Point(vec![i as f64 / (count - 1) as f64])).collect()
}

/// A state-value function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueFunction {
    pub v: Vec<f64>,
}

impl ValueFunction {
    pub fn sup_dist(&self, other: &ValueFunction) -> f64 {
        self.v.iter().zip(&other.v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// Deterministic stationary policy.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Policy {
    pub action_of: Vec<usize>,
}

impl Policy {
    /// `argmax_a q[s][a]`, lowest index on ties.
    pub fn greedy(q: &[Vec<f64>]) -> Policy {
        let action_of = q
            .iter()
            .map(|row| {
                let mut best = 0;
                for a in 1..row.len() {
                    if row[a] > row[best] {
                        best = a;
                    }
                }
                best
            })
            .collect();
        Policy { action_of }
    }
}

/// Value iteration from `V = 0` until the contraction stopping rule certifies
/// `||V - V*||_inf <= tol`. Returns `(V*, Q*)`.
pub fn exact_value_iteration(m: &FiniteMdp, tol: f64) -> Result<(ValueFunction, Vec<Vec<f64>>)> {
    if !(tol > 0.0) {
        return input_err("tolerance must be positive");
    }
    let stop = tol * (1.0 - m.gamma) / (2.0 * m.gamma);
    let mut v = vec![0.0; m.n_states];
    loop {
        let next = m.bellman(&v);
        let diff = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        if diff <= stop {
            break;
        }
    }
    let q = m.q_from_v(&v);
    Ok((ValueFunction { v }, q))
}

/// `V^pi`, by a direct solve of `(I - gamma P_pi) V = r_pi` for up to a thousand
/// states and by iteration to the same certified tolerance beyond that.
pub fn policy_value(m: &FiniteMdp, pi: &Policy, tol: f64) -> Result<ValueFunction> {
    if pi.action_of.len() != m.n_states || pi.action_of.iter().any(|&a| a >= m.n_actions) {
        return input_err("policy does not match the MDP");
    }
    if !(tol > 0.0) {
        return input_err("tolerance must be positive");
    }
    let n = m.n_states;
    let r_pi: Vec<f64> = (0..n).map(|s| m.reward[s][pi.action_of[s]]).collect();
    if n <= DIRECT_SOLVE_MAX_STATES {
        let a = DMatrix::from_fn(n, n, |s, t| {
            let id = if s == t { 1.0 } else { 0.0 };
            id - m.gamma * m.transition[s][pi.action_of[s]][t]
        });
        let v = a
            .lu()
            .solve(&DVector::from_vec(r_pi))
            .ok_or_else(|| Error::Numeric("singular policy evaluation system".into()))?;
        return Ok(ValueFunction { v: v.iter().copied().collect() });
    }
    let stop = tol * (1.0 - m.gamma) / (2.0 * m.gamma);
    let mut v = vec![0.0; n];
    loop {
        let next: Vec<f64> =
            (0..n).map(|s| r_pi[s] + m.gamma * m.expected_next(s, pi.action_of[s], &v)).collect();
        let diff = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        if diff <= stop {
            return Ok(ValueFunction { v });
        }
    }
}

/// Sampler `s' ~ P(. | s, a)` with a draw counter.
#[derive(Debug)]
pub struct GenerativeModel<'a> {
    mdp: &'a FiniteMdp,
    sample_count: u64,
    rng: ChaCha8Rng,
}

impl<'a> GenerativeModel<'a> {
    pub fn new(mdp: &'a FiniteMdp, seed: u64) -> Self {
        GenerativeModel { mdp, sample_count: 0, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn mdp(&self) -> &'a FiniteMdp {
        self.mdp
    }

    pub fn sample_count(&self) -> u64 {
        self.sample_count
    }

    /// Inverse-CDF draw over the stored transition row.
    pub fn sample_transition(&mut self, s: usize, a: usize) -> Result<usize> {
        if s >= self.mdp.n_states || a >= self.mdp.n_actions {
            return input_err(format!("state-action ({s}, {a}) out of range"));
        }
        let row = &self.mdp.transition[s][a];
        let u: f64 = self.rng.random();
        self.sample_count += 1;
        let mut cum = 0.0;
        let mut last_positive = 0;
        for (t, p) in row.iter().enumerate() {
            if *p > 0.0 {
                last_positive = t;
            }
            cum += p;
            if u < cum {
                return Ok(t);
            }
        }
        Ok(last_positive)
    }
}

/// Parameters of a synthetic MDP whose transition slices `z -> P(s' | z)` lie in the
/// kernel's RKHS (augmented with a constant feature) with norm at most 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RkhsMdpParams {
    pub n_states: usize,
    pub n_actions: usize,
    pub dim: usize,
    /// Requested mixing strength; shrunk if the norm budget demands it.
    pub mix: f64,
    pub gamma: f64,
    pub seed: u64,
    #[serde(default)]
    pub rewards: RewardModel,
}

/// How rewards of a synthetic MDP are drawn.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RewardModel {
    /// Independent `U[0, 1]` per state-action.
    #[default]
    Uniform,
    /// Rewards solved backwards from a planted optimal value function.
    ///
    /// `V*(s)` is drawn uniformly within `value_spread` of a center chosen so that
    /// rewards average about one half. Each state gets one optimal action; every other
    /// action trails it in `Q*` by a gap drawn log-uniformly from `[gap_min, gap_max]`.
    /// Gaps spread over several orders of magnitude make the suboptimality of a greedy
    /// policy track the size of the Q-estimation error.
    PlantedGaps { value_spread: f64, gap_min: f64, gap_max: f64 },
}

/// A generated MDP together with the quantities certifying its construction.
#[derive(Clone, Debug)]
pub struct RkhsMdp {
    pub mdp: FiniteMdp,
    pub anchors: Vec<Point>,
    /// Mixing strength actually used.
    pub mix: f64,
    /// Per-successor RKHS norm bound `1/n + mix sqrt(w^T G w)`.
    pub slice_norms: Vec<f64>,
}

/// Builds an MDP with
/// `P(s' | z) = 1/n + mix (K(z, c_s') - mean_s'' K(z, c_s''))`
/// for random anchors `c`, embedding pairs on a randomly shifted Halton set.
/// Rewards follow `params.rewards`.
pub fn build_rkhs_mdp(k: &KernelSpec, params: &RkhsMdpParams) -> Result<RkhsMdp> {
    let RkhsMdpParams { n_states: ns, n_actions: na, dim, mix, gamma, seed, rewards } = *params;
    if ns == 0 || na == 0 || dim == 0 {
        return input_err("n_states, n_actions and dim must be positive");
    }
    if !(0.0..1.0).contains(&mix) {
        return input_err(format!("mix must lie in [0, 1), got {mix}"));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return input_err(format!("gamma must lie in (0, 1), got {gamma}"));
    }
    if let Some(d) = k.fixed_dim() {
        if d != dim {
            return input_err(format!("kernel is defined on dimension {d}, got {dim}"));
        }
    }
    k.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let embedding = shifted_halton(ns * na, dim, &mut rng)?;
    let anchors: Vec<Point> = (0..ns).map(|_| Point((0..dim).map(|_| rng.random()).collect())).collect();
    let mut reward: Vec<Vec<f64>> = (0..ns).map(|_| (0..na).map(|_| rng.random()).collect()).collect();

    let nf = ns as f64;
    let gram = crate::kernels::gram(k, &anchors)?;
    // w = e_s' - 1/n: w^T G w = G_ss - 2 mean_row_s + mean_all
    let row_mean: Vec<f64> = (0..ns).map(|s| gram.row(s).sum() / nf).collect();
    let all_mean = row_mean.iter().sum::<f64>() / nf;
    let quad: Vec<f64> =
        (0..ns).map(|s| (gram[(s, s)] - 2.0 * row_mean[s] + all_mean).max(0.0).sqrt()).collect();
    let max_quad = quad.iter().copied().fold(0.0, f64::max);
    let budget = 1.0 - 1.0 / nf;
    let mix = if max_quad * mix > budget { budget / max_quad } else { mix };
    let slice_norms: Vec<f64> = quad.iter().map(|q| 1.0 / nf + mix * q).collect();

    let mut transition = vec![vec![Vec::new(); na]; ns];
    for s in 0..ns {
        for a in 0..na {
            let z = embedding[s * na + a].coords();
            let kv: Vec<f64> = anchors.iter().map(|c| k.k(z, c.coords())).collect();
            let mean = kv.iter().sum::<f64>() / nf;
            let row: Vec<f64> = kv.iter().map(|v| 1.0 / nf + mix * (v - mean)).collect();
            if let Some(neg) = row.iter().find(|p| **p < 0.0) {
                return Err(Error::Construction(format!(
                    "transition probability {neg:e} at ({s}, {a}) is negative; use a smaller mix (at most {:.3e} always works)",
                    1.0 / nf
                )));
            }
            transition[s][a] = row;
        }
    }
    if let RewardModel::PlantedGaps { value_spread, gap_min, gap_max } = rewards {
        reward = planted_rewards(&transition, gamma, value_spread, gap_min, gap_max, &mut rng)?;
    }
    let mdp = FiniteMdp::new(transition, reward, gamma, embedding)?;
    Ok(RkhsMdp { mdp, anchors, mix, slice_norms })
}

fn planted_rewards(
    transition: &[Vec<Vec<f64>>],
    gamma: f64,
    spread: f64,
    gap_min: f64,
    gap_max: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<f64>>> {
    if !(spread >= 0.0 && gap_min > 0.0 && gap_max >= gap_min) {
        return input_err("planted gaps need value_spread >= 0 and 0 < gap_min <= gap_max");
    }
    let ns = transition.len();
    let center = (0.5 + 0.5 * gap_max) / (1.0 - gamma);
    let v: Vec<f64> = (0..ns).map(|_| center + spread * (2.0 * rng.random::<f64>() - 1.0)).collect();
    let (lo, hi) = (gap_min.ln(), gap_max.ln());
    let mut reward = Vec::with_capacity(ns);
    for (s, rows) in transition.iter().enumerate() {
        let best = rng.random_range(0..rows.len());
        let mut r_s = Vec::with_capacity(rows.len());
        for (a, row) in rows.iter().enumerate() {
            let gap = if a == best { 0.0 } else { (lo + rng.random::<f64>() * (hi - lo)).exp() };
            let pv: f64 = row.iter().zip(&v).map(|(p, x)| p * x).sum();
            let r = v[s] - gap - gamma * pv;
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::Construction(format!(
                    "planted reward {r:.4} at ({s}, {a}) leaves [0, 1]; reduce value_spread or gap_max"
                )));
            }
            r_s.push(r);
        }
        reward.push(r_s);
    }
    Ok(reward)
}

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// Halton points with a random Cranley-Patterson shift, in random order.
fn shifted_halton(count: usize, dim: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Point>> {
    if dim > PRIMES.len() {
        return input_err(format!("embedding dimension at most {}", PRIMES.len()));
    }
    let shift: Vec<f64> = (0..dim).map(|_| rng.random()).collect();
    let mut pts: Vec<Point> = (1..=count as u64)
        .map(|i| {
            Point(
                (0..dim)
                    .map(|d| {
                        let x = radical_inverse(i, PRIMES[d]) + shift[d];
                        x - x.floor()
                    })
                    .collect(),
            )
        })
        .collect();
    pts.shuffle(rng);
    Ok(pts)
}
