//! Acceptance suite on the generated 20-factory, 7-market Cournot network.
//!
//! Every test writes one `PASS`/`FAIL` line straight to stderr, so the
//! verdicts show up even when the harness captures output.

use std::io::Write;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gnep_core::cournot::{self, CournotNoise, CournotSpec, DEFAULT_LAYOUT_SEED};
use gnep_core::equilibrium::{
    self, AnalysisConstants, BoundKind, FixedPointOptions, SolveOptions,
};
use gnep_core::harness::{self, Algorithm, ExperimentConfig, SweepParam};
use gnep_core::penalty::{penalty_gradient, penalty_value, PenaltyConfig};
use gnep_core::rng::run_rng;
use gnep_core::strategies::{GradientMode, Learner, Problem, StepSizes, StrategyKind};

const SLACK: f64 = 1e-9;

fn report(label: &str, pass: bool, detail: &str, elapsed: Duration) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(
        std::io::stderr(),
        "acceptance {label}: {verdict} ({detail}; {:.2}s)",
        elapsed.as_secs_f64()
    );
}

fn network_problem(rho: f64) -> Problem {
    let (game, cs) = cournot::build_game(&cournot::generated_network(DEFAULT_LAYOUT_SEED)).unwrap();
    Problem::new(game, cs, PenaltyConfig::new(rho).unwrap()).unwrap()
}

fn random_vector(rng: &mut ChaCha8Rng, m: usize, r: f64) -> DVector<f64> {
    DVector::from_fn(m, |_, _| rng.gen_range(-r..r))
}

fn sci(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn cournot_config(alg: Algorithm, mu: f64) -> ExperimentConfig {
    ExperimentConfig::cournot(alg, mu)
}

#[test]
fn monotonicity_and_lipschitz_suite() {
    let start = Instant::now();
    let problem = network_problem(200.0);
    let m = problem.dim();
    let n = problem.topology().num_agents();
    let game = &problem.game;
    let cs = &problem.constraints;
    let cfg = &problem.penalty;
    let mc = game.monotonicity_constants();
    let uniform = StepSizes::uniform(n, 1.0).unwrap();
    let base = AnalysisConstants::compute(&problem, &uniform, 0.0, 0.0).unwrap();
    let lp = base.penalized_lipschitz();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = [f64::NEG_INFINITY; 6];
    for _ in 0..1000 {
        let a = random_vector(&mut rng, m, 1.5);
        let b = random_vector(&mut rng, m, 1.5);
        let d = &a - &b;
        let d2 = d.norm_squared();
        let df = game.block_gradient(&a).unwrap() - game.block_gradient(&b).unwrap();
        let dp = penalty_gradient(cs, cfg, &a).unwrap() - penalty_gradient(cs, cfg, &b).unwrap();
        let dfp = problem.penalized_operator(&a).unwrap() - problem.penalized_operator(&b).unwrap();

        // each entry is "violation amount", positive means the inequality fails
        worst[0] = worst[0].max(mc.nu * d2 - d.dot(&df));
        worst[1] = worst[1].max(df.norm() - mc.delta * d.norm());
        worst[2] = worst[2].max(dfp.norm() - lp * d.norm());

        let t = rng.gen_range(0.0..0.9);
        let mu_max = rng.gen_range(1e-4..1e-2);
        let mus: Vec<f64> = (0..n).map(|_| mu_max * rng.gen_range(1.0 - t..=1.0)).collect();
        let steps = StepSizes::new(mus).unwrap();
        let c = base.with_steps(steps.mu_max(), steps.t());
        let u = steps.per_entry(problem.topology()).unwrap();
        let ud = u.component_mul(&d);
        worst[3] = worst[3].max(c.mu_max * c.nu_prime() * d2 - ud.dot(&dfp));
        worst[4] = worst[4].max(c.mu_max * c.nu_dprime() * d2 - ud.dot(&df));
        worst[5] = worst[5].max(-c.t * c.mu_max * c.delta_p * d2 - ud.dot(&dp));
    }
    let pass = worst.iter().all(|&v| v <= SLACK) && start.elapsed() < Duration::from_secs(10);
    report(
        "1 monotonicity/Lipschitz suite",
        pass,
        &format!(
            "nu = {:.4}, delta = {:.4}, delta_p = {:.4}, worst excess {:?}",
            mc.nu, mc.delta, base.delta_p, worst
        ),
        start.elapsed(),
    );
    assert!(pass, "worst excess {worst:?}");
}

#[test]
fn cournot_strong_monotonicity() {
    let start = Instant::now();
    let spec = cournot::generated_network(DEFAULT_LAYOUT_SEED);
    let (game, _) = cournot::build_game(&spec).unwrap();
    let x_min = spec.x.iter().copied().fold(f64::INFINITY, f64::min);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst = f64::INFINITY;
    for _ in 0..1000 {
        let a = random_vector(&mut rng, game.dim(), 1.0);
        let q = a.dot(&(game.matrix() * &a));
        worst = worst.min(q / a.norm_squared());
    }
    let pass = worst >= x_min && start.elapsed() < Duration::from_secs(1);
    report(
        "2 strong monotonicity a'Ba >= x_min |a|^2",
        pass,
        &format!("min a'Ba/|a|^2 = {worst:.6}, x_min = {x_min}"),
        start.elapsed(),
    );
    assert!(pass);
}

#[test]
fn three_factory_golden_matrix() {
    let start = Instant::now();
    let spec = CournotSpec::uniform(
        3,
        3,
        vec![(0, 0), (0, 2), (1, 1), (2, 1), (2, 2)],
        4.0,
        12.0,
        4.0,
        1.0,
        CournotNoise { vx: 0.0, vy: 0.0 },
    );
    let (game, _) = cournot::build_game(&spec).unwrap();
    let (x, y) = (4.0, 4.0);
    #[rustfmt::skip]
    let golden = DMatrix::from_row_slice(5, 5, &[
        2.0 * x + 2.0 * y, 2.0 * x,           0.0,               0.0,               0.0,
        2.0 * x,           2.0 * x + 2.0 * y, 0.0,               0.0,               y,
        0.0,               0.0,               2.0 * x + 2.0 * y, y,                 0.0,
        0.0,               0.0,               y,                 2.0 * x + 2.0 * y, 2.0 * x,
        0.0,               y,                 0.0,               2.0 * x,           2.0 * x + 2.0 * y,
    ]);
    let exact = game.matrix() == &golden;
    let (xm, y1, y2) = cournot::decomposition_certificate(&spec).unwrap();
    let rebuilt = &xm * xm.transpose() + &y1 * y1.transpose() + &y2 * y2.transpose();
    let err = (game.matrix() - rebuilt).amax();
    let pass = exact && err <= 1e-12 && start.elapsed() < Duration::from_secs(1);
    report(
        "3 three-factory golden matrix",
        pass,
        &format!("entrywise match = {exact}, reconstruction error = {err:e}"),
        start.elapsed(),
    );
    assert!(pass);
}

#[test]
fn nash_and_fixed_point_oracles() {
    let start = Instant::now();
    let problem = network_problem(200.0);
    let m = problem.dim();
    let opts = SolveOptions::default();
    let w_star = equilibrium::solve_penalized_nash(&problem, &opts).unwrap();
    let residual = problem.penalized_operator(&w_star).unwrap().norm();

    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let starts = [random_vector(&mut rng, m, 3.0), random_vector(&mut rng, m, 3.0)];
    let sols: Vec<DVector<f64>> = starts
        .iter()
        .map(|w0| {
            let o = SolveOptions {
                initial: Some(w0.clone()),
                ..SolveOptions::default()
            };
            equilibrium::solve_penalized_nash(&problem, &o).unwrap()
        })
        .collect();
    let spread = (&sols[0] - &sols[1]).norm();

    // fixed point under the unique fixed-point conditions, and at the step
    // used in the experiments
    let n = problem.topology().num_agents();
    let c = AnalysisConstants::compute(&problem, &StepSizes::uniform(n, 1.0).unwrap(), 0.0, 0.0).unwrap();
    let mu_o = equilibrium::step_size_bound(BoundKind::Deterministic, &c).unwrap().mu_bound;
    let mut fp_residual: f64 = 0.0;
    for (mu, checked) in [(0.5 * mu_o, true), (0.003, false)] {
        let steps = StepSizes::uniform(n, mu).unwrap();
        let u = steps.per_entry(problem.topology()).unwrap();
        for kind in [StrategyKind::Atp, StrategyKind::Pta] {
            let fo = FixedPointOptions {
                require_conditions: checked,
                ..FixedPointOptions::default()
            };
            let fp = equilibrium::solve_fixed_point(kind, &problem, &steps, &fo).unwrap();
            let (phi, psi, next) = equilibrium::unified_map(kind, &problem, &u, &fp.w).unwrap();
            let r = (&next - &fp.w).norm().max((&phi - &fp.phi).norm()).max((&psi - &fp.psi).norm());
            fp_residual = fp_residual.max(r);
        }
    }
    let pass = residual <= 1e-10 && fp_residual <= 1e-9 && spread <= 1e-9 && start.elapsed() < Duration::from_secs(30);
    report(
        "4 Nash and fixed-point oracles",
        pass,
        &format!("|F^p(w*)| = {residual:e}, fixed-point residual = {fp_residual:e}, init spread = {spread:e}"),
        start.elapsed(),
    );
    assert!(pass);
}

/// Mean-square deviation from `reference` over `runs` stochastic runs,
/// recorded every `every` iterations.
fn msd_curve(
    kind: StrategyKind,
    problem: &Problem,
    steps: &StepSizes,
    reference: &DVector<f64>,
    runs: usize,
    iters: usize,
    every: usize,
) -> Vec<f64> {
    let mut sums = vec![0.0; iters / every + 1];
    for run in 0..runs {
        let mut rng = run_rng(5, run as u64);
        let mut l = Learner::new(kind, problem, steps, DVector::zeros(problem.dim())).unwrap();
        sums[0] += (l.iterate() - reference).norm_squared();
        for i in 1..=iters {
            l.advance(&mut GradientMode::Sampled(&mut rng)).unwrap();
            if i % every == 0 {
                sums[i / every] += (l.iterate() - reference).norm_squared();
            }
        }
    }
    sums.iter().map(|s| s / runs as f64).collect()
}

#[test]
fn stability_thresholds() {
    let start = Instant::now();
    let mut details = Vec::new();
    let mut pass = true;

    let mut sg = cournot_config(Algorithm::Sg, 0.0065);
    sg.num_runs = 50;
    sg.thinning = 10;
    let sg_diverges = matches!(
        harness::run_experiment(&sg),
        Err(gnep_core::GnepError::ExperimentFailed { .. })
    );
    details.push(format!("SG at 0.0065 diverges: {sg_diverges}"));
    pass &= sg_diverges;
    for alg in [Algorithm::Atp, Algorithm::Pta] {
        let mut c = sg.clone();
        c.algorithm = alg;
        let r = harness::run_experiment(&c).unwrap();
        let ok = r.steady_state_msd.is_finite() && r.diverged_runs.is_empty();
        details.push(format!("{} at 0.0065 steady MSD {:.3e}", alg.name(), r.steady_state_msd));
        pass &= ok;
    }

    let problem = network_problem(200.0);
    let n = problem.topology().num_agents();
    let mut rng = run_rng(0, u64::MAX);
    let noise = equilibrium::noise_constants(&problem.game, 1000, &mut rng).unwrap();
    let unit = StepSizes::uniform(n, 1.0).unwrap();
    let c = AnalysisConstants::compute(&problem, &unit, noise.alpha, noise.beta).unwrap();

    // SG at 0.9 times its bound: the mean-square recursion
    // E|w~_i|^2 <= q E|w~_{i-1}|^2 must hold along the averaged curve
    let mu_sg = 0.9 * equilibrium::step_size_bound(BoundKind::SgStochastic, &c).unwrap().mu_bound;
    let steps = StepSizes::uniform(n, mu_sg).unwrap();
    let w_star = equilibrium::solve_penalized_nash(&problem, &SolveOptions::default()).unwrap();
    let lp = c.penalized_lipschitz();
    let q = 1.0 - 2.0 * mu_sg * c.nu_prime() + mu_sg * mu_sg * (lp * lp + 2.0 * c.alpha);
    let every = 100;
    let curve = msd_curve(StrategyKind::Sg, &problem, &steps, &w_star, 50, 2000, every);
    let sg_ok = curve
        .iter()
        .enumerate()
        .all(|(j, &v)| v <= curve[0] * q.powi((j * every) as i32) + SLACK)
        && curve.windows(2).all(|p| p[1] < p[0]);
    details.push(format!(
        "SG at 0.9 x {:.3e}: MSD {:.6e} -> {:.6e}",
        mu_sg / 0.9,
        curve[0],
        curve[curve.len() - 1]
    ));
    pass &= sg_ok;

    // noiseless ATP/PTA at 0.9 times the fixed-point bound contract with
    // modulus sqrt(1 - a_1)
    let mu_o = 0.9 * equilibrium::step_size_bound(BoundKind::Deterministic, &c).unwrap().mu_bound;
    let steps = StepSizes::uniform(n, mu_o).unwrap();
    let u = steps.per_entry(problem.topology()).unwrap();
    let kappa = equilibrium::contraction_modulus(&c.with_steps(mu_o, 0.0));
    let mut prng = ChaCha8Rng::seed_from_u64(15);
    for kind in [StrategyKind::Atp, StrategyKind::Pta] {
        let mut worst: f64 = f64::NEG_INFINITY;
        for _ in 0..100 {
            let a = random_vector(&mut prng, problem.dim(), 1.5);
            let b = random_vector(&mut prng, problem.dim(), 1.5);
            let ta = equilibrium::unified_map(kind, &problem, &u, &a).unwrap().2;
            let tb = equilibrium::unified_map(kind, &problem, &u, &b).unwrap().2;
            worst = worst.max((&ta - &tb).norm() - kappa * (&a - &b).norm());
        }
        let fp = equilibrium::solve_fixed_point(kind, &problem, &steps, &FixedPointOptions::default()).unwrap();
        let mut l = Learner::new(kind, &problem, &steps, DVector::zeros(problem.dim())).unwrap();
        let e0 = (l.iterate() - &fp.w).norm();
        let mut envelope_ok = true;
        for i in 1..=1000 {
            l.advance(&mut GradientMode::Exact).unwrap();
            envelope_ok &= (l.iterate() - &fp.w).norm() <= kappa.powi(i) * e0 + SLACK;
        }
        details.push(format!(
            "{} at 0.9 x {:.3e}: kappa = {:.9}, worst pair excess {:.2e}",
            kind.name(),
            mu_o / 0.9,
            kappa,
            worst
        ));
        pass &= worst <= SLACK && envelope_ok && kappa < 1.0;
    }
    pass &= start.elapsed() < Duration::from_secs(300);
    report("5 stability thresholds", pass, &details.join(", "), start.elapsed());
    assert!(pass, "{details:?}");
}

fn mu_sweep(alg: Algorithm) -> Vec<f64> {
    let mut cfg = cournot_config(alg, 0.001);
    cfg.thinning = 10;
    let table = harness::sweep(&cfg, SweepParam::Mu, &[0.001, 0.002, 0.004]).unwrap();
    table.rows.iter().map(|r| r.steady_msd.expect("row failed")).collect()
}

#[test]
fn steady_msd_linear_in_mu() {
    let start = Instant::now();
    let mut details = Vec::new();
    let mut pass = true;
    for alg in [Algorithm::Atp, Algorithm::Pta] {
        let msd = mu_sweep(alg);
        let ratios: Vec<f64> = msd.windows(2).map(|p| p[1] / p[0]).collect();
        pass &= ratios.iter().all(|r| (1.6..=2.4).contains(r));
        details.push(format!("{} MSD {} ratios {:.3?}", alg.name(), sci(&msd), ratios));
    }
    report("6a steady-state MSD doubles with mu", pass, &details.join(", "), start.elapsed());
    assert!(pass, "{details:?}");
}

fn bias_over_mu(alg: Algorithm, rho: f64) -> Vec<f64> {
    [0.001, 0.002, 0.004]
        .iter()
        .map(|&mu| {
            let mut cfg = cournot_config(alg, mu);
            cfg.rho = rho;
            harness::fixed_point_bias(&cfg).unwrap() / mu
        })
        .collect()
}

#[test]
fn bias_linear_in_mu() {
    let start = Instant::now();
    let mut details = Vec::new();
    let mut pass = true;
    for alg in [Algorithm::Atp, Algorithm::Pta] {
        let s = bias_over_mu(alg, 200.0);
        let (lo, hi) = s.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &v| (l.min(v), h.max(v)));
        pass &= hi / lo - 1.0 <= 0.15;
        details.push(format!("{} bias/mu {:.3?} spread {:.1}%", alg.name(), s, 100.0 * (hi / lo - 1.0)));
    }
    report("6b bias/mu constant", pass, &details.join(", "), start.elapsed());
    assert!(pass, "{details:?}");
}

#[test]
fn bias_slope_grows_with_rho() {
    let start = Instant::now();
    let mut details = Vec::new();
    let mut pass = true;
    for alg in [Algorithm::Atp, Algorithm::Pta] {
        let slopes: Vec<f64> = [100.0, 200.0, 400.0]
            .iter()
            .map(|&rho| {
                let s = bias_over_mu(alg, rho);
                s.iter().sum::<f64>() / s.len() as f64
            })
            .collect();
        pass &= slopes.windows(2).all(|p| p[1] > p[0]);
        details.push(format!("{} mean bias/mu over rho {:.4?}", alg.name(), slopes));
    }
    report("6c bias slope increases with rho", pass, &details.join(", "), start.elapsed());
    assert!(pass, "{details:?}");
}

#[test]
fn baseline_comparison() {
    let start = Instant::now();
    let mut reach = Vec::new();
    let mut steady = Vec::new();
    let mut feasible = true;
    for alg in [Algorithm::Sg, Algorithm::Atp, Algorithm::Pta, Algorithm::Ah, Algorithm::Tik] {
        let r = harness::run_experiment(&cournot_config(alg, 0.003)).unwrap();
        let it = r.iterations_to_reach(2.0 * r.steady_state_msd).unwrap_or(usize::MAX);
        if matches!(alg, Algorithm::Ah | Algorithm::Tik) {
            feasible &= r.min_action >= 0.0;
        }
        reach.push((alg, it));
        steady.push((alg, r.steady_state_msd));
    }
    let slowest_penalty = reach[..3].iter().map(|r| r.1).max().unwrap();
    let largest_penalty = steady[..3].iter().map(|s| s.1).fold(0.0, f64::max);
    let faster = reach[3..].iter().all(|r| r.1 > slowest_penalty);
    let larger = steady[3..].iter().all(|s| s.1 >= largest_penalty);
    let pass = faster && larger && feasible && start.elapsed() < Duration::from_secs(600);
    let fmt: Vec<String> = reach
        .iter()
        .zip(&steady)
        .map(|((a, it), (_, s))| format!("{} reach {it} steady {s:.3e}", a.name()))
        .collect();
    report(
        "7 baseline comparison",
        pass,
        &format!("{}, baselines nonnegative: {feasible}", fmt.join(", ")),
        start.elapsed(),
    );
    assert!(pass, "{fmt:?}");
}

#[test]
fn gradient_noise_contract() {
    let start = Instant::now();
    let problem = network_problem(200.0);
    let game = &problem.game;
    let m = game.dim();
    let mut rng = run_rng(8, 0);
    let nc = equilibrium::noise_constants(game, 20_000, &mut rng).unwrap();
    let w_star = equilibrium::solve_penalized_nash(&problem, &SolveOptions::default()).unwrap();
    let mut prng = ChaCha8Rng::seed_from_u64(18);
    let points = [w_star, random_vector(&mut prng, m, 1.0), random_vector(&mut prng, m, 3.0)];
    let mut pass = true;
    let mut worst_z: f64 = 0.0;
    let mut worst_margin = f64::INFINITY;
    for (j, w) in points.iter().enumerate() {
        // zero mean is checked componentwise at w*; the second-moment
        // bound at every point
        let samples = if j == 0 { 100_000 } else { 20_000 };
        let n = samples as f64;
        let mut sum = DVector::zeros(m);
        let mut sum_sq = DVector::zeros(m);
        let mut norms = Vec::with_capacity(samples);
        for _ in 0..samples {
            let s = game.sample_noise(w, &mut rng).unwrap();
            norms.push(s.norm_squared());
            sum += &s;
            sum_sq += s.component_mul(&s);
        }
        if j == 0 {
            for i in 0..m {
                let mean = sum[i] / n;
                let var = (sum_sq[i] / n - mean * mean) * n / (n - 1.0);
                let se = (var / n).sqrt();
                if se > 0.0 {
                    worst_z = worst_z.max(mean.abs() / se);
                }
                pass &= mean.abs() <= 3.0 * se;
            }
        }
        let mean_sq = norms.iter().sum::<f64>() / n;
        let var_sq = norms.iter().map(|x| (x - mean_sq).powi(2)).sum::<f64>() / (n - 1.0);
        let se_sq = (var_sq / n).sqrt();
        let bound = nc.alpha * w.norm_squared() + nc.beta;
        worst_margin = worst_margin.min(bound + 3.0 * se_sq - mean_sq);
        pass &= mean_sq <= bound + 3.0 * se_sq;
    }
    pass &= start.elapsed() < Duration::from_secs(30);
    report(
        "8 gradient-noise contract",
        pass,
        &format!(
            "alpha = {:.4}, beta = {:.4}, worst |mean|/se = {worst_z:.2}, smallest second-moment margin = {worst_margin:.4}",
            nc.alpha, nc.beta
        ),
        start.elapsed(),
    );
    assert!(pass);
}

#[test]
fn asymptotic_feasibility() {
    let start = Instant::now();
    let base = network_problem(50.0);
    let values: Vec<f64> = [50.0, 100.0, 200.0, 400.0, 800.0]
        .iter()
        .map(|&rho| {
            let p = base.with_rho(rho).unwrap();
            let w = equilibrium::solve_penalized_nash(&p, &SolveOptions::default()).unwrap();
            penalty_value(&p.constraints, &p.penalty, &w).unwrap()
        })
        .collect();
    let pass = values.windows(2).all(|p| p[1] < p[0]) && start.elapsed() < Duration::from_secs(120);
    report(
        "9 asymptotic feasibility",
        pass,
        &format!("p(w*(rho)) over rho = 50..800: {}", sci(&values)),
        start.elapsed(),
    );
    assert!(pass);
}
