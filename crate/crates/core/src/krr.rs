//! Kernel ridge regression on a fixed design with regularizer `lambda^2`.
//!
//! ```text
//! mean(z) = k(z)^T (K + lambda^2 I)^-1 y
//! var(z)  = K(z, z) - k(z)^T (K + lambda^2 I)^-1 k(z)
//! ```

use crate::error::{input_err, Error, Result};
use crate::kernels::{check_dims, KernelSpec, Point};
use crate::linalg::LowerFactor;

/// Negative variances above this are round-off and clamp to zero.
pub const VARIANCE_CLAMP: f64 = -1e-10;

/// Ordered design points plus the ridge parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignSet {
    pub points: Vec<Point>,
    pub lambda: f64,
}

impl DesignSet {
    pub fn new(points: Vec<Point>, lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return input_err(format!("lambda must be positive, got {lambda}"));
        }
        Ok(DesignSet { points, lambda })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct RegressionModel {
    kernel: KernelSpec,
    design: DesignSet,
    factor: LowerFactor,
    y: Option<Vec<f64>>,
    weights: Option<Vec<f64>>,
}

impl RegressionModel {
    /// A model with no design points: zero mean, prior variance.
    pub fn empty(kernel: KernelSpec, lambda: f64) -> Result<Self> {
        Self::new(kernel, DesignSet::new(Vec::new(), lambda)?)
    }

    /// Factorizes `K + lambda^2 I` for the design without attaching observations.
    pub fn new(kernel: KernelSpec, design: DesignSet) -> Result<Self> {
        if let Some(first) = design.points.first() {
            check_dims(&kernel, &design.points, first.dim())?;
        }
        let lam2 = design.lambda * design.lambda;
        let pts = &design.points;
        let factor = LowerFactor::factorize(pts.len(), |i, j| {
            let v = kernel.k(pts[i].coords(), pts[j].coords());
            if i == j {
                v + lam2
            } else {
                v
            }
        })?;
        Ok(RegressionModel { kernel, design, factor, y: None, weights: None })
    }

    pub fn fit(kernel: KernelSpec, design: DesignSet, y: Vec<f64>) -> Result<Self> {
        if design.is_empty() {
            return input_err("fit needs at least one design point");
        }
        Self::new(kernel, design)?.with_observations(y)
    }

    /// Attaches (or replaces) the observation vector.
    pub fn with_observations(mut self, y: Vec<f64>) -> Result<Self> {
        if y.len() != self.design.len() {
            return input_err(format!(
                "observation length {} does not match design size {}",
                y.len(),
                self.design.len()
            ));
        }
        self.weights = Some(self.factor.solve(&y));
        self.y = Some(y);
        Ok(self)
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn design(&self) -> &DesignSet {
        &self.design
    }

    pub fn factor(&self) -> &LowerFactor {
        &self.factor
    }

    pub fn observations(&self) -> Option<&[f64]> {
        self.y.as_deref()
    }

    /// `(K + lambda^2 I)^-1 y`.
    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    fn check_query(&self, z: &Point) -> Result<()> {
        match self.design.points.first() {
            Some(p) if p.dim() != z.dim() => {
                input_err(format!("query dimension {} does not match design dimension {}", z.dim(), p.dim()))
            }
            _ => check_dims(&self.kernel, std::slice::from_ref(z), z.dim()),
        }
    }

    /// `k(z) = [K(z, z_j)]_j`.
    pub fn kernel_vector(&self, z: &Point) -> Result<Vec<f64>> {
        self.check_query(z)?;
        Ok(self.kvec(z.coords()))
    }

    fn kvec(&self, z: &[f64]) -> Vec<f64> {
        self.design.points.iter().map(|p| self.kernel.k(z, p.coords())).collect()
    }

    /// Posterior mean.
    pub fn predict(&self, z: &Point) -> Result<f64> {
        let w = self.weights.as_ref().ok_or_else(|| Error::State("model has no observations".into()))?;
        let k = self.kernel_vector(z)?;
        Ok(k.iter().zip(w).map(|(a, b)| a * b).sum())
    }

    /// Posterior variance, clamped at zero for tiny negative round-off.
    pub fn posterior_var(&self, z: &Point) -> Result<f64> {
        self.check_query(z)?;
        let prior = self.kernel.k(z.coords(), z.coords());
        let v = self.factor.forward_solve(&self.kvec(z.coords()));
        let var = prior - v.iter().map(|x| x * x).sum::<f64>();
        clamp_variance(var)
    }

    pub fn posterior_std(&self, z: &Point) -> Result<f64> {
        Ok(self.posterior_var(z)?.sqrt())
    }

    /// Appends a design point by extending the factor. Observations are dropped;
    /// re-attach them with [`RegressionModel::with_observations`].
    pub fn add_point(&self, z: Point) -> Result<Self> {
        self.check_query(&z)?;
        let cross = self.kvec(z.coords());
        let diag = self.kernel.k(z.coords(), z.coords()) + self.design.lambda * self.design.lambda;
        let mut factor = self.factor.clone();
        factor.append(&cross, diag)?;
        let mut design = self.design.clone();
        design.points.push(z);
        Ok(RegressionModel { kernel: self.kernel.clone(), design, factor, y: None, weights: None })
    }
}

pub(crate) fn clamp_variance(var: f64) -> Result<f64> {
    if var < VARIANCE_CLAMP {
        return Err(Error::Numeric(format!("posterior variance {var:e} is negative")));
    }
    Ok(var.max(0.0))
}

/// Width multiplier `beta(delta)` of the simultaneous confidence band over a finite
/// candidate set: `C_K + (R / lambda) sqrt(2 ln(2 n / delta))`.
///
/// `C_K` bounds the RKHS norm of the target and `R` is the sub-Gaussian parameter of the
/// observation noise. The bias term is at most `C_K * sigma(z)` and the noise term is a
/// sub-Gaussian with scale at most `R * sigma(z) / lambda`, so a union bound over the
/// `n` candidates gives the stated width.
pub fn confidence_width(c_k: f64, r: f64, lambda: f64, n_candidates: usize, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return input_err(format!("delta must lie in (0, 1), got {delta}"));
    }
    if !(lambda > 0.0) {
        return input_err("lambda must be positive");
    }
    if n_candidates == 0 {
        return input_err("need at least one candidate");
    }
    if c_k < 0.0 || r < 0.0 {
        return input_err("C_K and R must be nonnegative");
    }
    Ok(c_k + (r / lambda) * (2.0 * (2.0 * n_candidates as f64 / delta).ln()).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p(v: &[f64]) -> Point {
        Point(v.to_vec())
    }

    fn random_points(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Point> {
        (0..n).map(|_| Point((0..d).map(|_| rng.random()).collect())).collect()
    }

    /// Naive route: explicit inverse of the regularized Gram matrix.
    fn dense(k: &KernelSpec, pts: &[Point], lambda: f64, y: &[f64], z: &Point) -> (f64, f64) {
        let n = pts.len();
        let g = DMatrix::from_fn(n, n, |i, j| {
            k.eval(&pts[i], &pts[j]).unwrap() + if i == j { lambda * lambda } else { 0.0 }
        });
        let inv = g.try_inverse().unwrap();
        let kv = DVector::from_iterator(n, pts.iter().map(|q| k.eval(z, q).unwrap()));
        let mean = (kv.transpose() * &inv * DVector::from_column_slice(y))[(0, 0)];
        let var = k.eval(z, z).unwrap() - (kv.transpose() * &inv * &kv)[(0, 0)];
        (mean, var)
    }

    #[test]
    fn single_point_closed_forms() {
        let k = KernelSpec::se(0.2);
        let z = p(&[0.3]);
        let d = DesignSet::new(vec![z.clone()], 1.0).unwrap();
        let m = RegressionModel::fit(k.clone(), d.clone(), vec![2.0]).unwrap();
        assert!((m.predict(&z).unwrap() - 1.0).abs() < 1e-15);
        let m = RegressionModel::fit(k.clone(), d, vec![1.0]).unwrap();
        assert!((m.predict(&z).unwrap() - 0.5).abs() < 1e-15);
        assert!((m.posterior_var(&z).unwrap() - 0.5).abs() < 1e-15);
        assert!((m.posterior_std(&z).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn zero_observations_predict_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts = random_points(&mut rng, 6, 2);
        let m = RegressionModel::fit(KernelSpec::se(0.2), DesignSet::new(pts, 1.0).unwrap(), vec![0.0; 6])
            .unwrap();
        for z in random_points(&mut rng, 20, 2) {
            assert_eq!(m.predict(&z).unwrap(), 0.0);
        }
    }

    #[test]
    fn far_query_predicts_near_zero() {
        let pts = vec![p(&[0.0, 0.0]), p(&[0.05, 0.0])];
        let y = vec![3.0, -4.0];
        let m = RegressionModel::fit(KernelSpec::se(0.2), DesignSet::new(pts, 1.0).unwrap(), y).unwrap();
        assert!(m.predict(&p(&[5.0, 5.0])).unwrap().abs() <= 1e-6 * 5.0);
    }

    #[test]
    fn predict_is_linear_in_y() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts = random_points(&mut rng, 8, 2);
        let y: Vec<f64> = (0..8).map(|_| rng.random::<f64>()).collect();
        let d = DesignSet::new(pts, 0.7).unwrap();
        let base = RegressionModel::fit(KernelSpec::matern(1.5, 0.3), d.clone(), y.clone()).unwrap();
        let scaled = base.clone().with_observations(y.iter().map(|v| v * 4.0).collect()).unwrap();
        for z in random_points(&mut rng, 10, 2) {
            assert_eq!(scaled.predict(&z).unwrap(), 4.0 * base.predict(&z).unwrap());
        }
    }

    #[test]
    fn four_point_dense_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let k = KernelSpec::se(0.2);
        let pts = random_points(&mut rng, 4, 2);
        let y: Vec<f64> = (0..4).map(|_| rng.random::<f64>() * 5.0).collect();
        let m =
            RegressionModel::fit(k.clone(), DesignSet::new(pts.clone(), 1.0).unwrap(), y.clone()).unwrap();
        for z in random_points(&mut rng, 10, 2) {
            let (mean, var) = dense(&k, &pts, 1.0, &y, &z);
            assert!((m.predict(&z).unwrap() - mean).abs() < 1e-10);
            assert!((m.posterior_var(&z).unwrap() - var).abs() < 1e-10);
        }
    }

    #[test]
    fn dense_equivalence_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let kernels = [KernelSpec::se(0.2), KernelSpec::matern(0.5, 0.3), KernelSpec::matern(2.5, 0.2)];
        for (t, k) in kernels.iter().cycle().take(15).enumerate() {
            let n = 1 + (t * 7) % 50;
            let lambda = [0.5, 1.0, 2.0][t % 3];
            let pts = random_points(&mut rng, n, 2);
            let y: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 5.0).collect();
            let m = RegressionModel::fit(k.clone(), DesignSet::new(pts.clone(), lambda).unwrap(), y.clone())
                .unwrap();
            for z in random_points(&mut rng, 10, 2) {
                let (mean, var) = dense(k, &pts, lambda, &y, &z);
                assert!((m.predict(&z).unwrap() - mean).abs() < 1e-9);
                assert!((m.posterior_std(&z).unwrap() - var.max(0.0).sqrt()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn factor_reconstructs_regularized_gram() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let k = KernelSpec::se(0.2);
        let pts = random_points(&mut rng, 30, 2);
        let m = RegressionModel::new(k.clone(), DesignSet::new(pts.clone(), 1.0).unwrap()).unwrap();
        let a = crate::kernels::gram(&k, &pts).unwrap() + DMatrix::identity(30, 30);
        let l = DMatrix::from_fn(30, 30, |i, j| m.factor().get(i, j));
        assert!((&l * l.transpose() - &a).norm() / a.norm() < 1e-9);
    }

    #[test]
    fn empty_design_has_prior_variance() {
        let m = RegressionModel::empty(KernelSpec::se(0.2), 1.0).unwrap();
        assert_eq!(m.posterior_std(&p(&[0.5, 0.5])).unwrap(), 1.0);
        assert!(matches!(m.predict(&p(&[0.5, 0.5])), Err(Error::State(_))));
    }

    #[test]
    fn errors() {
        let k = KernelSpec::se(0.2);
        let d = DesignSet::new(vec![p(&[0.1]), p(&[0.2])], 1.0).unwrap();
        assert!(matches!(RegressionModel::fit(k.clone(), d.clone(), vec![1.0]), Err(Error::Input(_))));
        let m = RegressionModel::fit(k, d, vec![1.0, 2.0]).unwrap();
        assert!(matches!(m.predict(&p(&[0.1, 0.1])), Err(Error::Input(_))));
        assert!(DesignSet::new(vec![], 0.0).is_err());
        assert!(clamp_variance(-1e-11).unwrap() == 0.0);
        assert!(matches!(clamp_variance(-1e-9), Err(Error::Numeric(_))));
    }

    #[test]
    fn add_point_closed_forms() {
        let k = KernelSpec::se(0.2);
        let z = p(&[0.4]);
        for lambda in [0.5, 1.0, 2.0] {
            let m = RegressionModel::empty(k.clone(), lambda).unwrap().add_point(z.clone()).unwrap();
            let want = lambda / (1.0 + lambda * lambda).sqrt();
            assert!((m.posterior_std(&z).unwrap() - want).abs() < 1e-12);
        }
        let m = RegressionModel::empty(k, 1.0)
            .unwrap()
            .add_point(z.clone())
            .unwrap()
            .add_point(z.clone())
            .unwrap();
        assert!((m.posterior_var(&z).unwrap() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn incremental_matches_from_scratch() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let k = KernelSpec::matern(1.5, 0.2);
        let grid = random_points(&mut rng, 100, 2);
        let adds = random_points(&mut rng, 20, 2);
        let mut m = RegressionModel::empty(k.clone(), 1.0).unwrap();
        for (i, z) in adds.iter().enumerate() {
            m = m.add_point(z.clone()).unwrap();
            let scratch =
                RegressionModel::new(k.clone(), DesignSet::new(adds[..=i].to_vec(), 1.0).unwrap()).unwrap();
            for g in &grid {
                let d = (m.posterior_std(g).unwrap() - scratch.posterior_std(g).unwrap()).abs();
                assert!(d <= 1e-9);
            }
        }
    }

    #[test]
    fn variance_never_increases_with_more_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let k = KernelSpec::se(0.2);
        let grid = random_points(&mut rng, 100, 2);
        let mut m = RegressionModel::empty(k, 1.0).unwrap();
        let mut prev: Vec<f64> = grid.iter().map(|g| m.posterior_std(g).unwrap()).collect();
        for z in random_points(&mut rng, 20, 2) {
            m = m.add_point(z).unwrap();
            let cur: Vec<f64> = grid.iter().map(|g| m.posterior_std(g).unwrap()).collect();
            assert!(cur.iter().zip(&prev).all(|(c, p)| *c <= p + 1e-9));
            prev = cur;
        }
    }

    #[test]
    fn std_does_not_depend_on_y() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let pts = random_points(&mut rng, 10, 2);
        let d = DesignSet::new(pts, 1.0).unwrap();
        let a = RegressionModel::fit(KernelSpec::se(0.2), d.clone(), vec![0.0; 10]).unwrap();
        let b = RegressionModel::fit(KernelSpec::se(0.2), d, (0..10).map(|i| i as f64).collect()).unwrap();
        for z in random_points(&mut rng, 20, 2) {
            assert_eq!(a.posterior_std(&z).unwrap().to_bits(), b.posterior_std(&z).unwrap().to_bits());
        }
    }

    #[test]
    fn confidence_width_values() {
        let b = confidence_width(1.0, 1.0, 1.0, 100, 0.05).unwrap();
        assert!((b - (1.0 + (2.0 * 4000f64.ln()).sqrt())).abs() < 1e-12);
        assert!((b - 5.072849).abs() < 1e-6);
        assert_eq!(confidence_width(2.5, 0.0, 1.0, 100, 0.05).unwrap(), 2.5);
        let near_one = confidence_width(1.0, 1.0, 1.0, 1, 1.0 - 1e-12).unwrap();
        assert!((near_one - (1.0 + (2.0 * 2f64.ln()).sqrt())).abs() < 1e-9);
        assert!(confidence_width(1.0, 1.0, 1.0, 10, 0.0).is_err());
        assert!(confidence_width(1.0, 1.0, 1.0, 10, 1.0).is_err());
        // monotone in delta and n
        assert!(
            confidence_width(1.0, 1.0, 1.0, 10, 0.1).unwrap()
                >= confidence_width(1.0, 1.0, 1.0, 10, 0.2).unwrap()
        );
        assert!(
            confidence_width(1.0, 1.0, 1.0, 20, 0.1).unwrap()
                >= confidence_width(1.0, 1.0, 1.0, 10, 0.1).unwrap()
        );
    }

    proptest::proptest! {
        #[test]
        fn posterior_variance_between_zero_and_prior(
            seed in 0u64..1000,
            j in 1usize..15,
            lambda in 0.2f64..3.0,
            ell in 0.05f64..2.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let k = KernelSpec::se(ell);
            let pts: Vec<Point> = (0..j).map(|_| p(&[rng.random(), rng.random()])).collect();
            let m = RegressionModel::new(k, DesignSet::new(pts, lambda).unwrap()).unwrap();
            let z = p(&[rng.random(), rng.random()]);
            let v = m.posterior_var(&z).unwrap();
            proptest::prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
        }
    }
}
