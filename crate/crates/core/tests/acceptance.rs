use std::time::{Duration, Instant};

use kqlearn_core::design::{build_max_uncertainty_set, verify_uncertainty_sum, CandidateGrid, GreedyTrace};
use kqlearn_core::harness::{
    fit_loglog_slope, load_mdp, medians_by_n, sweep, ExperimentConfig, ExperimentRecord, MdpSource,
};
use kqlearn_core::kernels::{KernelSpec, Point};
use kqlearn_core::krr::{confidence_width, DesignSet, RegressionModel};
use kqlearn_core::mdp::{exact_value_iteration, policy_value, FiniteMdp, Policy};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const END_TO_END: &str = include_str!("configs/end_to_end.json");
const SCALING: &str = include_str!("configs/scaling.json");

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(id: usize, name: &str, limit: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = f();
    let took = start.elapsed();
    let pass = out.pass && took < limit;
    println!(
        "{} {id:>2} {name}: {} [{:.1}s of {}s]",
        if pass { "PASS" } else { "FAIL" },
        out.detail,
        took.as_secs_f64(),
        limit.as_secs()
    );
    pass
}

fn random_points(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Point> {
    (0..n).map(|_| Point((0..d).map(|_| rng.random()).collect())).collect()
}

fn random_kernel(rng: &mut ChaCha8Rng) -> (KernelSpec, usize) {
    match rng.random_range(0..3) {
        0 => (KernelSpec::se(rng.random_range(0.1..1.0)), rng.random_range(1..=3)),
        1 => {
            let nu = [0.5, 1.5, 2.5][rng.random_range(0..3)];
            (KernelSpec::matern(nu, rng.random_range(0.1..1.0)), rng.random_range(1..=3))
        }
        _ => {
            let m = rng.random_range(2..=8);
            let decay = rng.random_range(0.3..0.8);
            (KernelSpec::finite_rank((0..m).map(|i| f64::powi(decay, i)).collect()), 1)
        }
    }
}

fn gram_plus(k: &KernelSpec, pts: &[Point], lambda: f64) -> DMatrix<f64> {
    let n = pts.len();
    DMatrix::from_fn(n, n, |i, j| {
        k.eval(&pts[i], &pts[j]).unwrap() + if i == j { lambda * lambda } else { 0.0 }
    })
}

fn kvec(k: &KernelSpec, pts: &[Point], z: &Point) -> DVector<f64> {
    DVector::from_iterator(pts.len(), pts.iter().map(|p| k.eval(z, p).unwrap()))
}

fn krr_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (k, d) = random_kernel(&mut rng);
        let j = rng.random_range(1..=50);
        let lambda = rng.random_range(0.3..2.0);
        let design = random_points(&mut rng, j, d);
        let y: Vec<f64> = (0..j).map(|_| rng.random_range(-1.0..1.0)).collect();
        let model =
            RegressionModel::fit(k.clone(), DesignSet::new(design.clone(), lambda).unwrap(), y.clone())
                .unwrap();
        let inv = gram_plus(&k, &design, lambda).try_inverse().unwrap();
        let alpha = &inv * DVector::from_vec(y);
        for z in random_points(&mut rng, 20, d) {
            let kv = kvec(&k, &design, &z);
            let mean = kv.dot(&alpha);
            let std = (k.eval(&z, &z).unwrap() - kv.dot(&(&inv * &kv))).max(0.0).sqrt();
            worst = worst
                .max((model.predict(&z).unwrap() - mean).abs())
                .max((model.posterior_std(&z).unwrap() - std).abs());
        }
    }
    Outcome { pass: worst <= 1e-9, detail: format!("max abs diff {worst:.2e} over 100 instances") }
}

fn variance_monotonicity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut violations = 0;
    let mut checked = 0;
    for _ in 0..20 {
        let (k, d) = random_kernel(&mut rng);
        let lambda = rng.random_range(0.1..2.0);
        let grid = random_points(&mut rng, 100, d);
        let j = rng.random_range(1..=20);
        let mut model = RegressionModel::empty(k.clone(), lambda).unwrap();
        let mut prev: Vec<f64> = grid.iter().map(|z| k.eval(z, z).unwrap()).collect();
        for p in random_points(&mut rng, j, d) {
            model = model.add_point(p).unwrap();
            for (z, before) in grid.iter().zip(prev.iter_mut()) {
                let now = model.posterior_var(z).unwrap();
                checked += 1;
                if now > *before + 1e-9 {
                    violations += 1;
                }
                *before = now;
            }
        }
    }
    Outcome { pass: violations == 0, detail: format!("{violations} violations in {checked} comparisons") }
}

fn uncertainty_sum() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let kernels = [
        KernelSpec::se(0.1),
        KernelSpec::se(0.5),
        KernelSpec::matern(0.5, 0.2),
        KernelSpec::matern(1.5, 0.3),
        KernelSpec::matern(2.5, 0.5),
        KernelSpec::finite_rank(vec![1.0, 0.6, 0.3, 0.1, 0.05, 0.01]),
        KernelSpec::Linear { offset: 0.5 },
    ];
    let lambdas = [0.1, 0.5, 1.0, 2.0, 5.0];
    let (mut violations, mut cases, mut worst) = (0, 0, f64::NEG_INFINITY);
    for k in &kernels {
        let d = k.fixed_dim().unwrap_or(2);
        let grid = CandidateGrid::new(random_points(&mut rng, 80, d)).unwrap();
        for &lambda in &lambdas {
            let full = build_max_uncertainty_set(k, &grid, 50, lambda).unwrap();
            for j in 1..=50 {
                let prefix = GreedyTrace {
                    selected: full.selected[..j].to_vec(),
                    sigma2_at_selection: full.sigma2_at_selection[..j].to_vec(),
                };
                let rep = verify_uncertainty_sum(&prefix, k, &grid, lambda).unwrap();
                cases += 1;
                violations += usize::from(!rep.holds || rep.lhs.is_nan() || rep.lhs > rep.rhs + 1e-9);
                worst = worst.max(rep.lhs - rep.rhs);
            }
        }
    }
    // equality needs K(z, z) = 1 at the first pick, so only the stationary kernels apply
    let mut eq_gap: f64 = 0.0;
    for k in &kernels[..5] {
        let d = k.fixed_dim().unwrap_or(2);
        let grid = CandidateGrid::new(random_points(&mut rng, 30, d)).unwrap();
        let one = build_max_uncertainty_set(k, &grid, 1, 1.0).unwrap();
        let rep = verify_uncertainty_sum(&one, k, &grid, 1.0).unwrap();
        eq_gap = eq_gap.max((rep.lhs - rep.rhs).abs());
    }
    Outcome {
        pass: violations == 0 && eq_gap <= 1e-12,
        detail: format!(
            "{violations} violations in {cases} cases, worst lhs-rhs {worst:.2e}, J=1 equality gap {eq_gap:.1e}"
        ),
    }
}

fn brute_force_greedy(k: &KernelSpec, grid: &[Point], j: usize, lambda: f64) -> Vec<usize> {
    let mut chosen: Vec<usize> = Vec::new();
    for _ in 0..j {
        let pts: Vec<Point> = chosen.iter().map(|&i| grid[i].clone()).collect();
        let inv = gram_plus(k, &pts, lambda).try_inverse().unwrap();
        let mut best = (0, f64::NEG_INFINITY);
        for (i, z) in grid.iter().enumerate() {
            let kv = kvec(k, &pts, z);
            let var = k.eval(z, z).unwrap() - kv.dot(&(&inv * &kv));
            if var > best.1 {
                best = (i, var);
            }
        }
        chosen.push(best.0);
    }
    chosen
}

fn greedy_fidelity() -> Outcome {
    let mut mismatches = 0;
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(1040 + seed);
        let (k, d) = random_kernel(&mut rng);
        let lambda = rng.random_range(0.3..2.0);
        let points = random_points(&mut rng, 200, d);
        let grid = CandidateGrid::new(points.clone()).unwrap();
        let fast = build_max_uncertainty_set(&k, &grid, 20, lambda).unwrap();
        if fast.selected != brute_force_greedy(&k, &points, 20, lambda) {
            mismatches += 1;
        }
    }
    Outcome { pass: mismatches == 0, detail: format!("{mismatches} of 10 seeds disagree") }
}

fn coverage() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let k = KernelSpec::finite_rank((0..8).map(|m| 0.5f64.powi(m)).collect());
    let grid = CandidateGrid::unit_interval(100).unwrap();
    let (lambda, noise, delta) = (1.0, 0.5, 0.1);
    let trace = build_max_uncertainty_set(&k, &grid, 30, lambda).unwrap();
    let design = trace.selected_points(&grid);
    let base = RegressionModel::new(k.clone(), DesignSet::new(design.clone(), lambda).unwrap()).unwrap();
    let beta = confidence_width(1.0, noise, lambda, grid.len(), delta).unwrap();
    let sigma: Vec<f64> = grid.points().iter().map(|z| base.posterior_std(z).unwrap()).collect();
    let trials = 500;
    let mut covered = 0;
    for _ in 0..trials {
        let anchors = random_points(&mut rng, 6, 1);
        let alpha = DVector::from_iterator(6, (0..6).map(|_| rng.random_range(-1.0..1.0)));
        let norm = alpha.dot(&(gram_plus(&k, &anchors, 0.0) * &alpha)).sqrt();
        let alpha = alpha * (rng.random_range(0.2..1.0) / norm);
        let f = |z: &Point| kvec(&k, &anchors, z).dot(&alpha);
        let y: Vec<f64> = design.iter().map(|z| f(z) + rng.random_range(-noise..noise)).collect();
        let model = base.clone().with_observations(y).unwrap();
        let ok = grid
            .points()
            .iter()
            .zip(&sigma)
            .all(|(z, s)| (f(z) - model.predict(z).unwrap()).abs() <= beta * s);
        covered += usize::from(ok);
    }
    let rate = covered as f64 / trials as f64;
    Outcome { pass: rate >= 0.87, detail: format!("uniform coverage {rate:.3} with beta {beta:.4}") }
}

fn sweep_from(text: &str) -> (ExperimentConfig, Vec<ExperimentRecord>) {
    let cfg = ExperimentConfig::from_json(text).unwrap();
    let recs = sweep(&cfg).unwrap();
    (cfg, recs)
}

fn end_to_end(records: &[ExperimentRecord]) -> Outcome {
    let failed = records.iter().filter(|r| !r.is_ok()).count();
    let meds = medians_by_n(records);
    let median = meds.first().map_or(f64::NAN, |m| m.1);
    let over_bound = records.iter().filter(|r| !r.bound_holds).count();
    let worst_ratio = records.iter().map(|r| r.measured_error / r.theorem1_bound).fold(0.0, f64::max);
    Outcome {
        pass: failed == 0 && records.len() == 10 && median <= 0.5 && over_bound == 0,
        detail: format!(
            "median error {median:.4}, {over_bound} seeds over bound, max error/bound {worst_ratio:.2e}, {failed} failed runs"
        ),
    }
}

fn scaling(cfg: &ExperimentConfig, records: &[ExperimentRecord]) -> Outcome {
    let (lo, hi) = cfg.slope_band.expect("band is pre-registered");
    let failed = records.iter().filter(|r| !r.is_ok()).count();
    let meds: Vec<String> = medians_by_n(records).iter().map(|(n, e)| format!("{n}:{e:.4}")).collect();
    match fit_loglog_slope(records) {
        Ok(slope) => Outcome {
            pass: failed == 0 && (lo..=hi).contains(&slope),
            detail: format!("slope {slope:.3}, band [{lo}, {hi}], medians {}", meds.join(" ")),
        },
        Err(e) => Outcome { pass: false, detail: e.to_string() },
    }
}

fn sample_accounting(records: &[&ExperimentRecord]) -> Outcome {
    let bad = records.iter().filter(|r| r.samples_used != (r.j * r.l) as u64).count();
    Outcome { pass: bad == 0, detail: format!("{bad} of {} runs with samples != J*L", records.len()) }
}

fn gamma_of(cfg: &ExperimentConfig) -> f64 {
    match &cfg.mdp {
        MdpSource::Generate(g) => g.gamma,
        MdpSource::File(path) => load_mdp(path).unwrap().gamma,
    }
}

fn boundedness(runs: &[(&ExperimentConfig, &[ExperimentRecord])]) -> Outcome {
    let mut bad = 0;
    let mut total = 0;
    for (cfg, records) in runs {
        let top = 1.0 / (1.0 - gamma_of(cfg));
        total += records.len();
        bad += records
            .iter()
            .filter(|r| !(r.y_min >= 0.0 && r.y_max <= top && r.v_star_min >= 0.0 && r.v_star_max <= top))
            .count();
    }
    Outcome { pass: bad == 0, detail: format!("{bad} of {total} runs with values outside [0, 1/(1-gamma)]") }
}

fn random_mdp(rng: &mut ChaCha8Rng) -> FiniteMdp {
    let ns = rng.random_range(2..=10);
    let na = rng.random_range(2..=5);
    let gamma = rng.random_range(0.5..0.95);
    let transition = (0..ns)
        .map(|_| {
            (0..na)
                .map(|_| {
                    let w: Vec<f64> = (0..ns).map(|_| rng.random::<f64>().powi(3)).collect();
                    let total: f64 = w.iter().sum();
                    w.iter().map(|x| x / total).collect()
                })
                .collect()
        })
        .collect();
    let reward = (0..ns).map(|_| (0..na).map(|_| rng.random()).collect()).collect();
    FiniteMdp::with_line_embedding(transition, reward, gamma).unwrap()
}

fn value_error_transfer() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(110);
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let m = random_mdp(&mut rng);
        let (v_star, q_star) = exact_value_iteration(&m, 1e-12).unwrap();
        let eps = (rng.random_range(-3.0f64..0.0) * std::f64::consts::LN_10).exp();
        let mut q = q_star.clone();
        for row in q.iter_mut() {
            for x in row.iter_mut() {
                *x += eps * rng.random_range(-1.0..1.0);
            }
        }
        let (s, a) = (rng.random_range(0..m.n_states), rng.random_range(0..m.n_actions));
        q[s][a] = q_star[s][a] + eps;
        let v_pi = policy_value(&m, &Policy::greedy(&q), 1e-12).unwrap();
        let loss = v_pi.sup_dist(&v_star);
        let bound = 2.0 * eps / (1.0 - m.gamma);
        worst = worst.max(loss / bound);
        if loss > bound + 1e-9 {
            violations += 1;
        }
    }
    Outcome { pass: violations == 0, detail: format!("{violations} violations, max loss/bound {worst:.3}") }
}

fn main() {
    let secs = Duration::from_secs;
    let mut results = vec![
        report(1, "krr exactness", secs(10), krr_exactness),
        report(2, "variance monotonicity", secs(10), variance_monotonicity),
        report(3, "uncertainty sum", secs(30), uncertainty_sum),
        report(4, "greedy fidelity", secs(30), greedy_fidelity),
        report(5, "confidence coverage", secs(60), coverage),
    ];

    let mut e2e = None;
    results.push(report(6, "end-to-end optimality", secs(300), || {
        let (cfg, recs) = sweep_from(END_TO_END);
        let out = end_to_end(&recs);
        e2e = Some((cfg, recs));
        out
    }));
    let mut scal = None;
    results.push(report(7, "scaling slope", secs(900), || {
        let (cfg, recs) = sweep_from(SCALING);
        let out = scaling(&cfg, &recs);
        scal = Some((cfg, recs));
        out
    }));
    let (e2e_cfg, e2e_recs) = e2e.expect("criterion 6 ran");
    let (scal_cfg, scal_recs) = scal.expect("criterion 7 ran");
    let all: Vec<&ExperimentRecord> = e2e_recs.iter().chain(&scal_recs).collect();
    results.push(report(8, "sample accounting", secs(1), || sample_accounting(&all)));
    results.push(report(9, "clipping and boundedness", secs(1), || {
        boundedness(&[(&e2e_cfg, &e2e_recs), (&scal_cfg, &scal_recs)])
    }));
    results.push(report(10, "value-error transfer", secs(30), value_error_transfer));

    let passed = results.iter().filter(|p| **p).count();
    println!("acceptance: {passed} of {} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
