//! Greedy maximum-variance design and information gain accounting.

use serde::{Deserialize, Serialize};

use crate::error::{input_err, Result};
use crate::kernels::{check_dims, KernelSpec, Point};
use crate::krr::{clamp_variance, DesignSet, RegressionModel};

/// Finite candidate domain. When built from an MDP, `pairs[i]` is the `(state, action)`
/// embedded at `points[i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidateGrid {
    points: Vec<Point>,
    pairs: Option<Vec<(usize, usize)>>,
}

impl CandidateGrid {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        let first = match points.first() {
            Some(p) => p,
            None => return input_err("candidate grid must be nonempty"),
        };
        let dim = first.dim();
        if points.iter().any(|p| p.dim() != dim) {
            return input_err("candidate grid points must share one dimension");
        }
        if points.iter().any(|p| p.coords().iter().any(|c| !c.is_finite())) {
            return input_err("candidate grid contains non-finite coordinates");
        }
        Ok(CandidateGrid { points, pairs: None })
    }

    pub fn with_pairs(points: Vec<Point>, pairs: Vec<(usize, usize)>) -> Result<Self> {
        if pairs.len() != points.len() {
            return input_err("pair map must have one entry per grid point");
        }
        let mut grid = Self::new(points)?;
        grid.pairs = Some(pairs);
        Ok(grid)
    }

    /// `n` equally spaced points on `[0, 1]`.
    pub fn unit_interval(n: usize) -> Result<Self> {
        if n < 2 {
            return Self::new(vec![Point(vec![0.0]); n]);
        }
        Self::new((0..n).map(|i| Point(vec![i as f64 / (n - 1) as f64])).collect())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].dim()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn pair(&self, i: usize) -> Option<(usize, usize)> {
        self.pairs.as_ref().map(|p| p[i])
    }
}

/// Greedy selection order and the variance each point had when picked.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreedyTrace {
    pub selected: Vec<usize>,
    pub sigma2_at_selection: Vec<f64>,
}

impl GreedyTrace {
    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    pub fn selected_points(&self, grid: &CandidateGrid) -> Vec<Point> {
        self.selected.iter().map(|&i| grid.points[i].clone()).collect()
    }

    /// Information gain of each prefix, by the chain rule
    /// `1/2 sum ln(1 + sigma2_j / lambda^2)`.
    pub fn info_gain_prefix(&self, lambda: f64) -> Vec<f64> {
        let lam2 = lambda * lambda;
        self.sigma2_at_selection
            .iter()
            .scan(0.0, |acc, s| {
                *acc += 0.5 * (s / lam2).ln_1p();
                Some(*acc)
            })
            .collect()
    }
}

/// Picks `j` points one at a time, each maximizing the current posterior variance
/// over the grid. Ties go to the lowest grid index. Repeats are allowed.
pub fn build_max_uncertainty_set(
    k: &KernelSpec,
    grid: &CandidateGrid,
    j: usize,
    lambda: f64,
) -> Result<GreedyTrace> {
    if j == 0 {
        return input_err("design size must be at least 1");
    }
    if !(lambda > 0.0) {
        return input_err("lambda must be positive");
    }
    check_dims(k, &grid.points, grid.dim())?;
    let lam2 = lambda * lambda;
    let n = grid.len();
    let coords: Vec<&[f64]> = grid.points.iter().map(|p| p.coords()).collect();
    // var[i] = Sigma^2(z_i); proj[i] = L^-1 k_U(z_i) for the current design U
    let mut var: Vec<f64> = coords.iter().map(|c| k.k(c, c)).collect();
    let mut proj: Vec<Vec<f64>> = vec![Vec::with_capacity(j); n];
    let mut trace =
        GreedyTrace { selected: Vec::with_capacity(j), sigma2_at_selection: Vec::with_capacity(j) };
    for _ in 0..j {
        let mut best = 0;
        for i in 1..n {
            if var[i] > var[best] {
                best = i;
            }
        }
        let sigma2 = clamp_variance(var[best])?;
        trace.selected.push(best);
        trace.sigma2_at_selection.push(sigma2);

        let pivot = (var[best] + lam2).sqrt();
        let row = proj[best].clone();
        let u = coords[best];
        for i in 0..n {
            let dot: f64 = row.iter().zip(&proj[i]).map(|(a, b)| a * b).sum();
            let c = (k.k(coords[i], u) - dot) / pivot;
            proj[i].push(c);
            var[i] -= c * c;
        }
    }
    Ok(trace)
}

/// `1/2 ln det(I + K_U / lambda^2)`, from the log-pivots of a fresh factorization.
pub fn info_gain(k: &KernelSpec, pts: &[Point], lambda: f64) -> Result<f64> {
    if pts.is_empty() {
        return Ok(0.0);
    }
    let model = RegressionModel::new(k.clone(), DesignSet::new(pts.to_vec(), lambda)?)?;
    let g = model.factor().half_log_det() - pts.len() as f64 * lambda.ln();
    Ok(g.max(0.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UncertaintySumReport {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Checks `sum_j Sigma^2_{U_(j-1)}(z_j) <= 2 / ln(1 + 1/lambda^2) * gain(U_J)` for a trace.
pub fn verify_uncertainty_sum(
    trace: &GreedyTrace,
    k: &KernelSpec,
    grid: &CandidateGrid,
    lambda: f64,
) -> Result<UncertaintySumReport> {
    if trace.selected.len() != trace.sigma2_at_selection.len() {
        return input_err("trace has mismatched lengths");
    }
    if let Some(bad) = trace.selected.iter().find(|&&i| i >= grid.len()) {
        return input_err(format!("trace index {bad} outside grid of size {}", grid.len()));
    }
    let lhs: f64 = trace.sigma2_at_selection.iter().sum();
    let gain = info_gain(k, &trace.selected_points(grid), lambda)?;
    let rhs = 2.0 / (1.0 / (lambda * lambda)).ln_1p() * gain;
    Ok(UncertaintySumReport { lhs, rhs, holds: lhs <= rhs + 1e-9 })
}
