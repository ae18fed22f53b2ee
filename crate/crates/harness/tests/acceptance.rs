//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::OnceLock;
use std::time::Instant;

use rand::Rng;
use rsmd_core::certificate::{eps_hat, eps_true, optimal_mu, rho_bar, rho_general, CertificateParams};
use rsmd_core::geometry::prox::{prox_objective, vi_residual};
use rsmd_core::geometry::{composite_prox, CompositePenalty, Domain, FeasibleSet, Geometry, GeometryKind, Norm};
use rsmd_core::linalg;
use rsmd_core::problems::{make_instance, LinearTerm, MatrixSpec};
use rsmd_core::rng::stream;
use rsmd_core::rsmd::{auxiliary_sequence, chain_terms, run, stepsize_constant};
use rsmd_core::truncation::{
    anchor_sample_count, estimate_anchor_gradient, residual_bounds, threshold_tau, truncate,
};
use rsmd_core::{Instance, InstanceSpec, NoiseKind, RsmdConfig, ThresholdPolicy, TruncationConfig};
use rsmd_harness::experiment::CoverageRow;
use rsmd_harness::{output, Experiment, ExperimentConfig, MonteCarlo};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

type Criterion = (u32, &'static str, fn() -> Verdict);

fn main() {
    let criteria: [Criterion; 12] = [
        (1, "prox correctness", prox_correctness),
        (2, "proxy strong convexity", proxy_strong_convexity),
        (3, "deterministic specialization", deterministic),
        (4, "inequality chain", inequality_chain),
        (5, "residual bounds", residual_moments),
        (6, "gap bound coverage", gap_bound_coverage),
        (7, "certificate validity", certificate_validity),
        (8, "certificate at beta_bar", certificate_beta),
        (9, "multistage contraction", multistage_contraction),
        (10, "robustness comparison", robustness),
        (11, "rho_bar closed form", rho_closed_form),
        (12, "determinism", determinism),
    ];
    let mut failed = 0;
    for (k, name, f) in criteria {
        let start = Instant::now();
        let v = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        failed += !v.pass as usize;
        println!(
            "criterion {k:>2} {}: {name}: {} [{:.1}s]",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criterion/criteria failed");
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------- 1

/// Minimum of `f` over the box `[lo0, hi0]` by successively finer grids,
/// skipping points where `f` is `None`.
fn zoom(lo0: &[f64], hi0: &[f64], f: impl Fn(&[f64]) -> Option<f64>) -> f64 {
    let d = lo0.len();
    let (mut lo, mut hi) = (lo0.to_vec(), hi0.to_vec());
    let k: usize = match d {
        0 => return f(&[]).unwrap_or(f64::INFINITY),
        1 => 2000,
        2 => 200,
        _ => 40,
    };
    let mut best = f64::INFINITY;
    let mut arg = lo0.to_vec();
    let mut u = vec![0.0; d];
    for _ in 0..12 {
        let h: Vec<f64> = (0..d).map(|j| (hi[j] - lo[j]) / k as f64).collect();
        for idx in 0..(k + 1).pow(d as u32) {
            let mut r = idx;
            for j in 0..d {
                u[j] = lo[j] + (r % (k + 1)) as f64 * h[j];
                r /= k + 1;
            }
            if let Some(v) = f(&u) {
                if v < best {
                    best = v;
                    arg.copy_from_slice(&u);
                }
            }
        }
        for j in 0..d {
            lo[j] = (arg[j] - 3.0 * h[j]).max(lo0[j]);
            hi[j] = (arg[j] + 3.0 * h[j]).min(hi0[j]);
        }
    }
    best
}

/// Brute-force minimum of `f` over a set of dimension at most 3. Simplices
/// are parametrized by their first `n - 1` coordinates; the sphere of an l2
/// ball gets its own angular grid, since lattice points approach a curved
/// boundary too unevenly for the zoom to track it.
fn grid_min(set: &FeasibleSet, f: impl Fn(&[f64]) -> f64) -> f64 {
    let n = set.dim();
    let (lo0, hi0) = set.bounds();
    if set.is_simplex() {
        let total = hi0[0];
        return zoom(&lo0[..n - 1], &hi0[..n - 1], |u| {
            let mut z = u.to_vec();
            z.push(total - u.iter().sum::<f64>());
            set.contains(&z, 1e-13).then(|| f(&z))
        });
    }
    let solid = zoom(&lo0, &hi0, |u| set.contains(u, 1e-13).then(|| f(u)));
    let FeasibleSet::Ball(b) = set else { return solid };
    if b.norm != Norm::L2 {
        return solid;
    }
    let pi = std::f64::consts::PI;
    let on_sphere = |dir: &[f64]| -> Vec<f64> { b.center.iter().zip(dir).map(|(c, d)| c + b.radius * d).collect() };
    let sphere = match n {
        1 => f(&on_sphere(&[1.0])).min(f(&on_sphere(&[-1.0]))),
        2 => zoom(&[0.0], &[2.0 * pi], |a| Some(f(&on_sphere(&[a[0].cos(), a[0].sin()])))),
        _ => zoom(&[0.0, 0.0], &[pi, 2.0 * pi], |a| {
            let (st, ct) = a[0].sin_cos();
            let (sp, cp) = a[1].sin_cos();
            Some(f(&on_sphere(&[st * cp, st * sp, ct])))
        }),
    };
    solid.min(sphere)
}

fn random_case(kind: GeometryKind, rng: &mut impl Rng) -> (Geometry, Domain, CompositePenalty) {
    let n = match kind {
        GeometryKind::Euclidean => rng.random_range(1..=3),
        GeometryKind::L1 => rng.random_range(2..=3),
    };
    let set = match rng.random_range(0..4) {
        0 | 1 => {
            // mostly the geometry's own norm
            let norm = if rng.random_range(0..4) == 0 {
                match kind.norm() {
                    Norm::L2 => Norm::L1,
                    Norm::L1 => Norm::L2,
                }
            } else {
                kind.norm()
            };
            let c = (0..n).map(|_| rng.random_range(-0.5..0.5)).collect();
            FeasibleSet::ball(norm, c, rng.random_range(0.5..2.0)).unwrap()
        }
        2 => {
            let lo: Vec<f64> = (0..n).map(|_| rng.random_range(-1.5..0.0)).collect();
            let hi = lo.iter().map(|l| l + rng.random_range(0.2..2.0)).collect();
            FeasibleSet::boxed(lo, hi).unwrap()
        }
        _ if n >= 2 => FeasibleSet::simplex(n, rng.random_range(0.5..2.0)).unwrap(),
        _ => FeasibleSet::boxed(vec![-1.0], vec![1.0]).unwrap(),
    };
    let penalty = match rng.random_range(0..4) {
        0 => CompositePenalty::Zero,
        1 => CompositePenalty::L1 { weight: rng.random_range(0.0..1.5) },
        2 => CompositePenalty::Power { weight: rng.random_range(0.0..1.5), exponent: rng.random_range(1.0..2.0) },
        _ if set.is_simplex() => CompositePenalty::NegEntropy { weight: rng.random_range(0.0..1.5) },
        _ => CompositePenalty::L1 { weight: rng.random_range(0.0..1.5) },
    };
    let center = set.default_center();
    let radius = set.radius_about(&center, kind.norm());
    let geometry = Geometry::new(kind, center, radius).unwrap();
    (geometry, Domain::new(set), penalty)
}

fn prox_correctness() -> Verdict {
    let mut worst_gap = 0.0f64;
    let mut worst_vi = f64::INFINITY;
    let mut bad = 0;
    for (g, kind) in [GeometryKind::Euclidean, GeometryKind::L1].into_iter().enumerate() {
        let mut rng = stream(101, g as u64);
        for _ in 0..100 {
            let (geometry, domain, penalty) = random_case(kind, &mut rng);
            let set = domain.set().clone();
            let n = set.dim();
            let x = set.sample(&mut rng);
            let xi: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let beta = 10f64.powf(rng.random_range(-1.0..1.0));
            let z = composite_prox(&geometry, &domain, &penalty, &x, &xi, beta).unwrap();
            let obj = |v: &[f64]| prox_objective(&geometry, &penalty, &x, &xi, beta, v);
            let gm = grid_min(&set, obj);
            let gap = (obj(&z) - gm).abs();
            // directions towards sampled points, at full and small step
            let mut probes = Vec::with_capacity(1000);
            for j in 0..1000 {
                let w = set.sample(&mut rng);
                let t = if j % 2 == 0 { 1.0 } else { 1e-4 };
                probes.push(z.iter().zip(&w).map(|(a, b)| a + t * (b - a)).collect::<Vec<f64>>());
            }
            let vi = vi_residual(&geometry, &penalty, &x, &xi, beta, &z, probes.iter().map(Vec::as_slice));
            if gap > 1e-6 || vi < -1e-8 {
                bad += 1;
            }
            worst_gap = worst_gap.max(gap);
            worst_vi = worst_vi.min(vi);
        }
    }
    verdict(bad == 0, format!("200 cases, worst |prox - grid| = {worst_gap:.2e}, worst VI residual = {worst_vi:.2e}"))
}

// ---------------------------------------------------------------- 2

fn proxy_strong_convexity() -> Verdict {
    let mut worst = f64::NEG_INFINITY;
    let mut violations = 0;
    for (g, kind) in [GeometryKind::Euclidean, GeometryKind::L1].into_iter().enumerate() {
        for n in [2usize, 10, 50] {
            let norm = kind.norm();
            let geometry = Geometry::new(kind, vec![0.0; n], 1.0).unwrap();
            let ball = FeasibleSet::ball(norm, vec![0.0; n], 1.0).unwrap();
            let mut rng = stream(102, (g * 100 + n) as u64);
            for k in 0..10_000 {
                let x = ball.sample(&mut rng);
                let z = if k % 2 == 0 {
                    ball.sample(&mut rng)
                } else {
                    // move one coordinate, staying in the ball
                    let mut z = x.clone();
                    let j = rng.random_range(0..n);
                    let room = 1.0 - norm.of(&x);
                    z[j] += rng.random_range(-room..room);
                    z
                };
                let d = norm.dist(&x, &z);
                let excess = 0.5 * d * d - geometry.bregman_unchecked(&x, &z);
                worst = worst.max(excess);
                violations += (excess > 1e-9) as usize;
            }
        }
    }
    verdict(
        violations == 0,
        format!("60000 pairs, {violations} violations, max (||z-x||^2/2 - V) = {worst:.2e}"),
    )
}

// ---------------------------------------------------------------- helpers

fn quadratic(kind: GeometryKind, n: usize, penalty: CompositePenalty, noise: NoiseKind, sigma: f64, seed: u64) -> Instance {
    let set = FeasibleSet::ball(kind.norm(), vec![0.0; n], 1.0).unwrap();
    let spectrum = (0..n).map(|i| 0.1 + 0.9 * i as f64 / (n.max(2) - 1) as f64).collect();
    let mut spec = InstanceSpec::new(MatrixSpec::Spectrum(spectrum), set, kind);
    spec.linear = LinearTerm::Minimizer(vec![0.7; n]);
    spec.penalty = penalty;
    spec.noise = noise;
    spec.sigma = sigma;
    spec.seed = seed;
    make_instance(&spec).unwrap()
}

fn tau_config(inst: &Instance, n_steps: usize, tau: f64) -> RsmdConfig {
    let center = inst.geometry().center().to_vec();
    let lambda = threshold_tau(inst.sigma(), n_steps, tau, inst.m(), 0.0).unwrap();
    let truncation = TruncationConfig::new(
        inst.geometry().norm(),
        center.clone(),
        inst.gradient(&center),
        0.0,
        lambda,
        inst.lipschitz(),
        ThresholdPolicy::Tau { tau },
    )
    .unwrap();
    let g = inst.geometry();
    let beta = stepsize_constant(inst.lipschitz(), inst.sigma(), n_steps, g.radius(), g.capacity());
    RsmdConfig::new(beta, n_steps, truncation, center)
}

// ---------------------------------------------------------------- 3

fn deterministic() -> Verdict {
    let mut ok = true;
    let mut worst_ratio = 0.0f64;
    let mut worst_eps = 0.0f64;
    for (k, kind) in [GeometryKind::Euclidean, GeometryKind::L1].into_iter().enumerate() {
        for (j, penalty) in [CompositePenalty::Zero, CompositePenalty::L1 { weight: 0.05 }].into_iter().enumerate() {
            let inst = quadratic(kind, 6, penalty, NoiseKind::None, 0.0, 103 + (2 * k + j) as u64);
            for n_steps in [10, 50, 200] {
                let cfg = tau_config(&inst, n_steps, 2.0);
                let trace = run(&cfg, &inst, &mut stream(103, 0)).unwrap();
                let g = inst.geometry();
                let beta = trace.betas()[0];
                let bound = 2.0 * beta * g.radius().powi(2) * g.capacity() / n_steps as f64;
                let gap = inst.objective(trace.average()).unwrap() - inst.fstar();
                let l = inst.lipschitz();
                let (hat, truth) = (eps_hat(&trace, &inst, l).unwrap(), eps_true(&trace, &inst, l).unwrap());
                let diff = (hat - truth).abs() / (1.0 + truth.abs());
                worst_ratio = worst_ratio.max(gap / bound);
                worst_eps = worst_eps.max(diff);
                ok &= gap <= bound && diff <= 1e-10;
            }
        }
    }
    verdict(ok, format!("12 runs, max gap/bound = {worst_ratio:.3}, max |eps_hat - eps| = {worst_eps:.1e}"))
}

// ---------------------------------------------------------------- 4

fn inequality_chain() -> Verdict {
    let combos = [
        (GeometryKind::Euclidean, CompositePenalty::Zero),
        (GeometryKind::Euclidean, CompositePenalty::L1 { weight: 0.1 }),
        (GeometryKind::L1, CompositePenalty::Zero),
        (GeometryKind::L1, CompositePenalty::Power { weight: 0.2, exponent: 1.3 }),
    ];
    let mut worst = f64::INFINITY;
    let mut violations = 0;
    for run_id in 0..100u64 {
        let (kind, penalty) = combos[run_id as usize % combos.len()];
        let inst = quadratic(kind, 5, penalty, NoiseKind::Pareto { tail: 2.5 }, 1.0, 104 + run_id % 4);
        let cfg = tau_config(&inst, 100, 2.0).with_residuals();
        let mut rng = stream(104, run_id);
        let trace = run(&cfg, &inst, &mut rng).unwrap();
        let aux = auxiliary_sequence(&trace, &inst).unwrap();
        for j in 0..10 {
            let z = if j == 0 { inst.xstar().to_vec() } else { inst.domain().set().sample(&mut rng) };
            let s = chain_terms(&trace, &inst, &aux, &z).unwrap().worst_relative_slack();
            worst = worst.min(s);
            violations += (s < -1e-8) as usize;
        }
    }
    verdict(violations == 0, format!("1000 (run, z) pairs, {violations} violations, worst relative slack = {worst:.2e}"))
}

// ---------------------------------------------------------------- 5

fn residual_moments() -> Verdict {
    // (a) on every iteration of every coverage run
    let (_, mc) = coverage_runs();
    let row = find(&mc.coverage, "residual_bound");
    let mut ok = row.violations == 0 && row.replications > 0;
    let mut detail = format!("(a) {} violations over {} runs", row.violations, row.replications);

    // (b), (c) by Monte Carlo at fixed points
    let n = 10;
    let inst = quadratic(GeometryKind::Euclidean, n, CompositePenalty::Zero, NoiseKind::Pareto { tail: 2.5 }, 1.0, 105);
    let sigma = inst.sigma();
    let center = inst.geometry().center().to_vec();
    let mut rng = stream(105, 0);
    let anchor = estimate_anchor_gradient(&inst, &center, anchor_sample_count(2.0), &mut rng).unwrap();
    let anchor_error = Norm::L2.dual_dist(&anchor.point, &inst.gradient(&center));
    let mut worst = 0.0f64;
    for (lambda, gbar, err) in [
        (threshold_tau(sigma, 100, 2.0, inst.m(), 0.0).unwrap(), inst.gradient(&center), 0.0),
        (threshold_tau(sigma, 10, 8.0, inst.m(), 0.0).unwrap(), inst.gradient(&center), 0.0),
        (threshold_tau(sigma, 100, 2.0, inst.m(), anchor_error / sigma).unwrap(), anchor.point.clone(), anchor_error),
    ] {
        let cfg = TruncationConfig::new(Norm::L2, center.clone(), gbar, err, lambda, inst.lipschitz(), ThresholdPolicy::Custom).unwrap();
        let bounds = residual_bounds(inst.m(), err, sigma, lambda);
        let points: Vec<Vec<f64>> = (0..5).map(|_| inst.domain().set().sample(&mut rng)).collect();
        for x in &points {
            let grad = inst.gradient(x);
            let k = 100_000;
            let mut mean = vec![0.0; n];
            let mut sq = 0.0;
            for _ in 0..k {
                let (y, _) = truncate(&inst.sample_gradient(x, &mut rng), &cfg, x).unwrap();
                let xi = linalg::sub(&y, &grad);
                let d = linalg::norm_l2(&xi);
                ok &= d <= bounds.per_sample * (1.0 + 1e-12);
                linalg::axpy(&mut mean, 1.0 / k as f64, &xi);
                sq += d * d / k as f64;
            }
            let rb = linalg::norm_l2(&mean) / bounds.bias;
            let rc = sq.sqrt() / bounds.rms;
            worst = worst.max(rb).max(rc);
            ok &= rb <= 1.1 && rc <= 1.1;
        }
    }
    detail.push_str(&format!("; (b), (c) worst ratio to bound {worst:.3} over 15 points x 1e5 samples"));
    verdict(ok, detail)
}

// ---------------------------------------------------------------- 6-8

const COVERAGE: &str = r#"{
    "name": "coverage",
    "instance": {
        "dim": 10, "geometry": "euclidean",
        "set": {"kind": "ball", "radius": 1.0},
        "spectrum": {"kind": "linear", "min": 0.1, "max": 1.0},
        "linear": {"kind": "minimizer", "point": 0.5},
        "seed": 106
    },
    "noise": {"kind": "pareto", "sigma": 1.0, "tail": 2.5},
    "method": "rsmd", "threshold": "tau",
    "iterations": 500, "taus": [2.0], "replications": 300, "seed": 106,
    "anchor": {"kind": "median", "upsilon_sigma": 1.0},
    "trace_replications": 0
}"#;

fn coverage_runs() -> &'static (Experiment, MonteCarlo) {
    static RUNS: OnceLock<(Experiment, MonteCarlo)> = OnceLock::new();
    RUNS.get_or_init(|| {
        let exp = Experiment::new(ExperimentConfig::from_json(COVERAGE).unwrap()).unwrap();
        let mc = exp.monte_carlo(0).unwrap();
        (exp, mc)
    })
}

fn find<'a>(rows: &'a [CoverageRow], name: &str) -> &'a CoverageRow {
    rows.iter().find(|r| r.bound == name).unwrap()
}

fn describe(r: &CoverageRow) -> String {
    format!(
        "{} violated {}/{} = {:.3} [{:.3}, {:.3}] vs allowed {:.3}",
        r.bound,
        r.violations,
        r.replications,
        r.frequency,
        r.wilson_low,
        r.wilson_high,
        r.budget + r.slack
    )
}

fn gap_bound_coverage() -> Verdict {
    let (_, mc) = coverage_runs();
    let r = find(&mc.coverage, "theorem1");
    let failures = mc.failures().count();
    verdict(r.passed && r.replications == 300 && failures == 0, describe(r))
}

fn certificate_validity() -> Verdict {
    let (_, mc) = coverage_runs();
    let (c, s) = (find(&mc.coverage, "certificate"), find(&mc.coverage, "sandwich"));
    verdict(c.passed && s.passed, format!("{}; {}", describe(c), describe(s)))
}

fn certificate_beta() -> Verdict {
    let (_, mc) = coverage_runs();
    let r = find(&mc.coverage, "certificate_beta");
    verdict(r.passed, describe(r))
}

// ---------------------------------------------------------------- 9

fn multistage_config(sigma: f64, reps: usize) -> ExperimentConfig {
    let text = format!(
        r#"{{
        "name": "multistage",
        "instance": {{
            "dim": 2, "geometry": "euclidean",
            "set": {{"kind": "box", "lower": -1.0, "upper": 1.0}},
            "spectrum": {{"kind": "explicit", "values": [1.0, 1.0]}},
            "linear": {{"kind": "minimizer", "point": [0.7, -0.4]}},
            "seed": 109
        }},
        "noise": {{"kind": "pareto", "sigma": {sigma}, "tail": 2.5}},
        "method": "multistage",
        "iterations": 40000, "taus": [2.0], "replications": {reps}, "seed": 109,
        "anchor": {{"kind": "median", "upsilon_sigma": {ups}}},
        "trace_replications": 0
    }}"#,
        ups = 0.5 * sigma
    );
    ExperimentConfig::from_json(&text).unwrap()
}

fn multistage_contraction() -> Verdict {
    let exp = Experiment::new(multistage_config(0.1, 200)).unwrap();
    let stages = exp.plan(2.0).unwrap().stages();
    let mc = exp.monte_carlo(0).unwrap();
    let row = find(&mc.coverage, "multistage_contraction");
    let within = mc
        .replications
        .iter()
        .filter(|r| r.outcomes.first().is_some_and(|o| o.anchor_ok))
        .count();

    let quiet = Experiment::new(multistage_config(0.0, 3)).unwrap();
    let quiet_stages = quiet.plan(2.0).unwrap().stages();
    let qmc = quiet.monte_carlo(0).unwrap();
    let qrow = find(&qmc.coverage, "multistage_contraction");
    verdict(
        row.passed && stages >= 2 && qrow.violations == 0 && qrow.replications == 3 && quiet_stages >= 2,
        format!(
            "m = {stages} stages: {} (anchor within budget in {within}/200); sigma = 0, m = {quiet_stages}: {}/{} violated",
            describe(row),
            qrow.violations,
            qrow.replications
        ),
    )
}

// ---------------------------------------------------------------- 10

fn robustness() -> Verdict {
    let cfg = ExperimentConfig::from_json(
        &COVERAGE
            .replace(r#""tail": 2.5"#, r#""tail": 2.2"#),
    )
    .unwrap();
    let exp = Experiment::new(cfg).unwrap();
    let cmp = exp.compare(0).unwrap();
    let clipped = cmp.pairs.iter().filter(|p| p.clipped > 0).count();
    let (a, b) = (&cmp.table[0], &cmp.table[1]);
    verdict(
        cmp.passed && cmp.asserted && a.replications == 300,
        format!(
            "300 pairs ({clipped} with truncation): q99 rsmd = {:.4e}, smd = {:.4e}; q90 {:.4e} vs {:.4e}",
            a.q99, b.q99, a.q90, b.q90
        ),
    )
}

// ---------------------------------------------------------------- 11

fn rho_closed_form() -> Verdict {
    let mut rng = stream(111, 0);
    let mut worst = 0.0f64;
    let mut ok = true;
    for k in 0..100u64 {
        let kind = if k % 2 == 0 { GeometryKind::Euclidean } else { GeometryKind::L1 };
        let n = rng.random_range(2..=8);
        let sigma = rng.random_range(0.1..3.0);
        let inst = quadratic(kind, n, CompositePenalty::Zero, NoiseKind::StudentT { dof: 3.0 }, sigma, 111 + k);
        let n_steps = rng.random_range(20..=300);
        let tau = rng.random_range(1.0..5.0);
        let trace = run(&tau_config(&inst, n_steps, tau), &inst, &mut stream(111, k)).unwrap();
        let params = CertificateParams::from_instance(&inst, 0.0);
        let s = trace.bregman_sum();
        let closed = rho_bar(n_steps, tau, &params, s).unwrap();
        // rho is separable in (mu, nu): minimize each over a log grid
        let grid = |f: &dyn Fn(f64) -> f64| {
            (0..=400_000)
                .map(|j| f(10f64.powf(-10.0 + 16.0 * j as f64 / 400_000.0)))
                .fold(f64::INFINITY, f64::min)
        };
        let mu_star = optimal_mu(n_steps, tau, &params, s);
        let nu_best = {
            let mut best = (f64::INFINITY, 1.0);
            for j in 0..=400_000 {
                let nu = 10f64.powf(-10.0 + 16.0 * j as f64 / 400_000.0);
                let v = rho_general(n_steps, tau, &params, s, 1.0, nu);
                if v < best.0 {
                    best = (v, nu);
                }
            }
            best.1
        };
        let numeric = grid(&|mu| rho_general(n_steps, tau, &params, s, mu, nu_best));
        let rel = (numeric - closed).abs() / closed;
        worst = worst.max(rel);
        ok &= rel <= 1e-6 && (1e-10..=1e6).contains(&mu_star);
    }
    verdict(ok, format!("100 traces, worst relative difference {worst:.2e}"))
}

// ---------------------------------------------------------------- 12

fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Verdict {
    let mut cfg = ExperimentConfig::from_json(COVERAGE).unwrap();
    cfg.replications = 40;
    cfg.trace_replications = 2;
    let tmp = tempfile::tempdir().unwrap();
    let mut trees = Vec::new();
    for (i, threads) in [1usize, 4, 4].into_iter().enumerate() {
        let exp = Experiment::new(cfg.clone()).unwrap();
        let mc = exp.monte_carlo(threads).unwrap();
        let dir = tmp.path().join(format!("run{i}"));
        output::write_run(&dir, &exp, &mc).unwrap();
        trees.push(read_tree(&dir));
    }
    let files = trees[0].len();
    let same = trees.windows(2).all(|w| w[0] == w[1]);
    verdict(same && files >= 6, format!("{files} files byte-identical across 3 runs on 1 and 4 threads"))
}
