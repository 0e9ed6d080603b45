//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Every tolerance and configuration is pinned below.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use common::*;
use ndarray::{array, Array1, Array2};
use rand::Rng;
use villani::data::{Corruption, DataKind, DataRecipe};
use villani::diagnostics::{grad_lower_bound_at, laplacian_upper_bound_at, villani_scan};
use villani::dynamics::run_sgd;
use villani::fpe::{build_grid, decay_rate, spectral_gap, tail_radius, Scheme};
use villani::harness::{run_ablation, run_sweep, AblationConfig, AblationSetting, Metric, SweepConfig, SweepResult};
use villani::{Activation, ActivationKind, Dataset, InitSpec, LossSpec, Net, OuterWeights, SgdConfig};

const LAMBDA_C_ULPS: f64 = 2.0;
const GRAD_FD_TOL: f64 = 1e-6;
const LAPLACIAN_FD_TOL: f64 = 1e-5;
const DERIVATIVE_SPECS: usize = 120;
const BOUND_SAMPLES: usize = 1_000;
const BOUND_SLACK: f64 = 1e-12;
const GLIP_SPECS: usize = 10;
const GLIP_PAIRS: usize = 10_000;
const SCAN_RAYS: usize = 16;
const SCAN_RMAX: f64 = 1e3;
const SGD_RUNS: u64 = 20;
const SGD_TOL: f64 = 1e-3;
const ORACLE_RESTARTS: usize = 200;
const DESCENT_SPECS: usize = 20;
const DESCENT_SLACK: f64 = 1e-10;
const OU_DECAY_TOL: f64 = 0.05;
const OU_GAP_TOL: f64 = 0.03;
const SIGMOID_AGREEMENT_TOL: f64 = 0.10;
const MIN_R_SQUARED: f64 = 0.99;
const SWEEP_RATIO: f64 = 2.0;
const FRACTIONS: [f64; 3] = [0.0, 0.5, 0.9];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn sigmoid1() -> Activation {
    Activation::sigmoid(1.0).unwrap()
}

fn lambda_c_exactness() -> Outcome {
    let mut worst: f64 = 0.0;
    let one = LossSpec::new(Net::zeros(array![1.0], 1, sigmoid1()).unwrap(), Dataset::new(array![[1.0]], array![0.0]).unwrap(), 0.1).unwrap();
    worst = worst.max((one.lambda_c() - 0.125).abs());
    for p in [1usize, 4, 16, 64] {
        // B_x = 2 and a_j = 1/(2√p) are exact in binary for these widths.
        let data = Dataset::new(array![[2.0, 0.0], [0.0, -1.0]], array![0.3, -0.2]).unwrap();
        let spec = LossSpec::with_outer(sigmoid1(), p, &OuterWeights::Normalized, data, 0.1).unwrap();
        worst = worst.max((spec.lambda_c() - 0.125).abs());
    }
    outcome(worst <= LAMBDA_C_ULPS * f64::EPSILON * 0.125, format!("max |λ_c − 0.125| = {worst:.3e}"))
}

fn derivative_oracles() -> Outcome {
    let mut r = rng(1001);
    let (mut g_worst, mut l_worst): (f64, f64) = (0.0, 0.0);
    for k in 0..DERIVATIVE_SPECS {
        let spec = random_spec(&mut r, activation_for(k));
        g_worst = g_worst.max(rel_err(&spec.grad(), &fd_gradient(&spec, spec.weights(), 1e-5)));
        let want = fd_laplacian(&spec, spec.weights(), 2e-3);
        l_worst = l_worst.max((spec.laplacian() - want).abs() / want.abs());
    }
    outcome(
        g_worst <= GRAD_FD_TOL && l_worst <= LAPLACIAN_FD_TOL,
        format!("{DERIVATIVE_SPECS} specs: gradient rel err {g_worst:.2e}, laplacian rel err {l_worst:.2e}"),
    )
}

fn pointwise_bounds() -> Outcome {
    let mut r = rng(1002);
    let mut violations = 0;
    for k in 0..3 {
        for _ in 0..BOUND_SAMPLES {
            let spec = random_spec(&mut r, activation_for(k));
            let (p, d) = spec.shape();
            let scale = r.random_range(0.1..50.0);
            let w = gaussian_matrix(&mut r, p, d, scale);
            let ev = spec.evaluate_at(&w);
            let g2: f64 = ev.grad.iter().map(|v| v * v).sum();
            let lo = grad_lower_bound_at(&spec, &w);
            let hi = laplacian_upper_bound_at(&spec, &w);
            if g2 < lo - BOUND_SLACK * lo.abs().max(1.0) {
                violations += 1;
            }
            if ev.laplacian > hi + BOUND_SLACK * hi.abs().max(1.0) {
                violations += 1;
            }
        }
    }
    outcome(violations == 0, format!("{violations} violations over {} samples", 3 * BOUND_SAMPLES))
}

fn gradient_lipschitz_bound() -> Outcome {
    let mut r = rng(1003);
    let mut worst: f64 = 0.0;
    for k in 0..2 * GLIP_SPECS {
        let act = if k % 2 == 0 { sigmoid1() } else { Activation::tanh() };
        let spec = random_spec(&mut r, act);
        let bound = spec.glip_bound().unwrap();
        let (p, d) = spec.shape();
        for _ in 0..GLIP_PAIRS {
            let scale = r.random_range(0.1..5.0);
            let w1 = gaussian_matrix(&mut r, p, d, scale);
            let step = if r.random_bool(0.5) { 1e-3 } else { scale };
            let w2 = &w1 + &gaussian_matrix(&mut r, p, d, step);
            let ratio = frob(&(spec.grad_at(&w1) - spec.grad_at(&w2))) / frob(&(&w1 - &w2));
            worst = worst.max(ratio / bound);
        }
    }
    outcome(worst <= 1.0, format!("worst empirical ratio / glip_bound = {worst:.3}"))
}

fn villani_divergence() -> Outcome {
    let mut details = Vec::new();
    let mut pass = true;
    for (k, act) in [sigmoid1(), Activation::tanh(), Activation::softplus(1.0).unwrap()].into_iter().enumerate() {
        let spec = tiny_spec(500 + k as u64, act, 1.5);
        let rep = villani_scan(&spec, 0.1, SCAN_RAYS, SCAN_RMAX, 7).unwrap();
        pass &= rep.diverging;
        details.push(format!("{}={}", act.kind.name(), rep.diverging));
    }
    outcome(pass, format!("diverging: {}", details.join(", ")))
}

fn sgd_global_convergence() -> Outcome {
    let spec = tiny_spec(41, sigmoid1(), 1.5);
    let oracle = multistart_minimum(&spec, ORACLE_RESTARTS, 42);
    let worst = (0..SGD_RUNS)
        .map(|seed| {
            let cfg = SgdConfig { step_size: 1e-2, batch_size: 2, steps: 100_000, seed, init: InitSpec::Auto, log_every: 100_000 };
            (run_sgd(&spec, &cfg).unwrap().final_loss() - oracle).abs()
        })
        .fold(0.0, f64::max);
    outcome(worst <= SGD_TOL, format!("oracle {oracle:.6}, worst |final − oracle| = {worst:.2e} over {SGD_RUNS} runs"))
}

fn descent_property() -> Outcome {
    let mut r = rng(1007);
    let mut worst_rise = f64::NEG_INFINITY;
    for case in 0..DESCENT_SPECS {
        let spec = random_spec(&mut r, activation_for(case % 2));
        let cfg = SgdConfig {
            step_size: 1.0 / spec.glip_bound().unwrap(),
            batch_size: spec.data().n(),
            steps: 500,
            seed: case as u64,
            init: InitSpec::Gaussian { tau: 1.5 },
            log_every: 1,
        };
        let t = run_sgd(&spec, &cfg).unwrap();
        for pair in t.losses.windows(2) {
            worst_rise = worst_rise.max(pair[1] - pair[0]);
        }
    }
    outcome(worst_rise <= DESCENT_SLACK, format!("largest single-step loss change {worst_rise:.2e}"))
}

fn ou_spec(lambda: f64) -> LossSpec {
    let data = Dataset::new(array![[0.5]], array![0.0]).unwrap();
    LossSpec::new(Net::zeros(Array1::zeros(1), 1, sigmoid1()).unwrap(), data, lambda).unwrap()
}

fn ou_decay() -> Outcome {
    let lambda = 0.5;
    let spec = ou_spec(lambda);
    let mut g = build_grid(&spec, tail_radius(&spec, 1.0).unwrap(), 401, 1.0).unwrap();
    let fit = decay_rate(&mut g, 12.0, 0.005, Scheme::Implicit).unwrap();
    let rel = (fit.rate / (2.0 * lambda) - 1.0).abs();
    outcome(rel <= OU_DECAY_TOL, format!("rate {:.5} vs 2λ = {}, rel err {rel:.2e}", fit.rate, 2.0 * lambda))
}

fn ou_gap() -> Outcome {
    let lambda = 0.5;
    let spec = ou_spec(lambda);
    let g = build_grid(&spec, tail_radius(&spec, 1.0).unwrap(), 401, 1.0).unwrap();
    let gap = spectral_gap(&g).unwrap();
    let rel = (gap / (2.0 * lambda) - 1.0).abs();
    outcome(rel <= OU_GAP_TOL, format!("gap {gap:.5} vs 2λ = {}, rel err {rel:.2e} (gap/λ = {:.5})", 2.0 * lambda, gap / lambda))
}

fn sigmoid_mixing() -> Outcome {
    let xs = [0.8, -0.5, 0.3];
    let ys = [0.9, -0.6, 0.4];
    let data = Dataset::new(Array2::from_shape_vec((3, 1), xs.to_vec()).unwrap(), Array1::from(ys.to_vec())).unwrap();
    let base = LossSpec::with_outer(sigmoid1(), 1, &OuterWeights::Normalized, data, 0.0).unwrap();
    let spec = base.with_lambda(1.5 * base.lambda_c()).unwrap();
    let s = 0.5;
    let mut g = build_grid(&spec, tail_radius(&spec, s).unwrap(), 401, s).unwrap();
    let gap = spectral_gap(&g).unwrap();
    let fit = decay_rate(&mut g, 8.0 / gap, 0.02, Scheme::Implicit).unwrap();
    let rel = (fit.rate / gap - 1.0).abs();
    outcome(
        gap > 0.0 && fit.rate > 0.0 && rel <= SIGMOID_AGREEMENT_TOL && fit.r_squared >= MIN_R_SQUARED,
        format!("gap {gap:.5}, decay {:.5}, rel diff {rel:.2e}, R² {:.5}", fit.rate, fit.r_squared),
    )
}

fn sweep_config(kind: DataKind) -> SweepConfig {
    SweepConfig {
        lambdas: vec![1.3e-5, 1.3e-4, 1.3e-3, 1.3e-2, 0.13],
        widths: vec![5, 10, 20, 50],
        recipe: DataRecipe { kind, n_train: 1000, n_test: 1000, seed: 1, corruption: Corruption::default() },
        sgd: SgdConfig { step_size: 0.01, batch_size: 32, steps: 20_000, seed: 11, init: InitSpec::Gaussian { tau: 0.2 }, log_every: 200 },
        restarts_per_cell: 2,
        metric: Metric::BestTestLoss,
        activation: ActivationKind::Sigmoid { beta: 1.0 },
        outer: OuterWeights::Normalized,
        jobs: None,
    }
}

fn worst_ratio_at(result: &SweepResult, lambda: f64) -> f64 {
    let min = result.min();
    result.widths.iter().map(|&w| result.value(lambda, w).unwrap() / min).fold(0.0, f64::max)
}

fn sweep_reproduction() -> Outcome {
    let sine = sweep_config(DataKind::SineNorm { d: 20, noise_sd: 0.5 });
    let teacher = sweep_config(DataKind::Teacher { d: 20, p_teacher: 5, noise_sd: 0.1 });
    let first = run_sweep(&sine).unwrap();
    let rerun = run_sweep(&sine).unwrap();
    let identical = first.grid.iter().flatten().zip(rerun.grid.iter().flatten()).all(|(a, b)| a.to_bits() == b.to_bits());
    let t = run_sweep(&teacher).unwrap();
    let (rs, rt) = (worst_ratio_at(&first, 0.13), worst_ratio_at(&t, 0.13));
    outcome(
        rs <= SWEEP_RATIO && rt <= SWEEP_RATIO && identical,
        format!(
            "λ=0.13 worst ratio to grid min: sine {rs:.3} (min {:.4}), teacher {rt:.3} (min {:.4}); rerun bit-exact {identical}",
            first.min(),
            t.min()
        ),
    )
}

fn ablation_ordering() -> Outcome {
    let cfg = AblationConfig {
        recipe: DataRecipe {
            kind: DataKind::SineNorm { d: 20, noise_sd: 0.0 },
            n_train: 1000,
            n_test: 1000,
            seed: 5,
            corruption: Corruption::default(),
        },
        settings: vec![
            AblationSetting { width: 10, step_size: 1e-2, lambda: 0.013 },
            AblationSetting { width: 10, step_size: 1e-2, lambda: 0.13 },
            AblationSetting { width: 50, step_size: 5e-3, lambda: 0.013 },
            AblationSetting { width: 50, step_size: 1e-2, lambda: 0.13 },
        ],
        batch_size: 32,
        steps: 20_000,
        log_every: 200,
        replicates: 8,
        seed: 21,
        init: InitSpec::Gaussian { tau: 0.2 },
        activation: ActivationKind::Sigmoid { beta: 1.0 },
        outer: OuterWeights::Normalized,
        jobs: None,
    };
    let result = run_ablation(&cfg, &FRACTIONS).unwrap();
    let mut pass = true;
    let mut rows = Vec::new();
    for set in &cfg.settings {
        let finals: Vec<f64> = FRACTIONS.iter().map(|&f| result.curve(set, f).unwrap().final_clean_test()).collect();
        let ordered = finals.windows(2).all(|w| w[0] < w[1]);
        pass &= ordered;
        rows.push(format!(
            "p={} λ={}: {:.5} / {:.5} / {:.5} {}",
            set.width,
            set.lambda,
            finals[0],
            finals[1],
            finals[2],
            if ordered { "ordered" } else { "unordered" }
        ));
    }
    outcome(pass, rows.join("; "))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("1 lambda_c exactness", lambda_c_exactness),
        ("2 derivative oracles", derivative_oracles),
        ("3 gradient/laplacian pointwise bounds", pointwise_bounds),
        ("4 gradient Lipschitz bound", gradient_lipschitz_bound),
        ("5 villani divergence", villani_divergence),
        ("6 sgd global convergence", sgd_global_convergence),
        ("7 descent property", descent_property),
        ("8a OU decay rate", ou_decay),
        ("8b OU spectral gap", ou_gap),
        ("8c sigmoid decay vs gap", sigmoid_mixing),
        ("9 sweep reproduction", sweep_reproduction),
        ("10 ablation ordering", ablation_ordering),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let out = run();
        let secs = start.elapsed().as_secs_f64();
        println!("{} [{name}] {} ({secs:.1}s)", if out.pass { "PASS" } else { "FAIL" }, out.detail);
        if !out.pass {
            failed += 1;
        }
    }
    println!("{failed} of {} criteria failed", criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
