//! Independent oracles shared by the integration and acceptance suites.
//! Nothing here calls the analytic derivative code it is used to check.
#![allow(dead_code)]

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use villani::{Activation, ActivationKind, Dataset, LossSpec, Net};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| {
        let g: f64 = StandardNormal.sample(rng);
        scale * g
    })
}

pub fn activation_for(index: usize) -> Activation {
    match index % 3 {
        0 => Activation::sigmoid(1.0).unwrap(),
        1 => Activation::tanh(),
        _ => Activation::softplus(1.0).unwrap(),
    }
}

pub fn activation_of(kind: ActivationKind) -> Activation {
    Activation::new(kind).unwrap()
}

/// Random instance with p, d, n in 1..=6, Gaussian outer weights, inputs and
/// labels in [-1, 1], λ in [0.05, 1] and Gaussian W of random scale.
pub fn random_spec(rng: &mut ChaCha8Rng, act: Activation) -> LossSpec {
    let p = rng.random_range(1..=6);
    let d = rng.random_range(1..=6);
    let n = rng.random_range(1..=6);
    random_spec_shaped(rng, act, p, d, n)
}

pub fn random_spec_shaped(rng: &mut ChaCha8Rng, act: Activation, p: usize, d: usize, n: usize) -> LossSpec {
    let xs = Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0));
    let ys = Array1::from_shape_fn(n, |_| rng.random_range(-1.0..1.0));
    let a = Array1::from_shape_fn(p, |_| -> f64 { StandardNormal.sample(rng) });
    let w_scale = rng.random_range(0.1..2.0);
    let w = gaussian_matrix(rng, p, d, w_scale);
    let lambda = rng.random_range(0.05..1.0);
    let net = Net::new(a, w, act).unwrap();
    LossSpec::new(net, Dataset::new(xs, ys).unwrap(), lambda).unwrap()
}

/// Straight-line re-implementation of the regularized loss.
pub fn naive_loss(spec: &LossSpec, w: &Array2<f64>) -> f64 {
    let data = spec.data();
    let net = spec.net();
    let act = net.activation();
    let (p, d) = w.dim();
    let mut total = 0.0;
    for i in 0..data.n() {
        let mut f = 0.0;
        for j in 0..p {
            let mut z = 0.0;
            for k in 0..d {
                z += w[[j, k]] * data.xs()[[i, k]];
            }
            f += net.a()[j] * act.value(z);
        }
        let r = data.ys()[i] - f;
        total += 0.5 * r * r;
    }
    let mut reg = 0.0;
    for v in w.iter() {
        reg += v * v;
    }
    total / data.n() as f64 + 0.5 * spec.lambda() * reg
}

/// Central differences of `naive_loss`.
pub fn fd_gradient(spec: &LossSpec, w: &Array2<f64>, h: f64) -> Array2<f64> {
    let mut g = Array2::zeros(w.dim());
    let mut probe = w.clone();
    for idx in ndarray::indices(w.dim()) {
        let orig = probe[idx];
        probe[idx] = orig + h;
        let up = naive_loss(spec, &probe);
        probe[idx] = orig - h;
        let down = naive_loss(spec, &probe);
        probe[idx] = orig;
        g[idx] = (up - down) / (2.0 * h);
    }
    g
}

/// Trace of the finite-difference Hessian of `naive_loss`, one Richardson
/// step on the second differences.
pub fn fd_laplacian(spec: &LossSpec, w: &Array2<f64>, h: f64) -> f64 {
    let centre = naive_loss(spec, w);
    let mut probe = w.clone();
    let mut second = |idx: (usize, usize), step: f64| {
        let orig = probe[idx];
        probe[idx] = orig + step;
        let up = naive_loss(spec, &probe);
        probe[idx] = orig - step;
        let down = naive_loss(spec, &probe);
        probe[idx] = orig;
        (up - 2.0 * centre + down) / (step * step)
    };
    let mut trace = 0.0;
    for idx in ndarray::indices(w.dim()) {
        let coarse = second(idx, h);
        let fine = second(idx, h / 2.0);
        trace += (4.0 * fine - coarse) / 3.0;
    }
    trace
}

pub fn frob(w: &Array2<f64>) -> f64 {
    w.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn rel_err(got: &Array2<f64>, want: &Array2<f64>) -> f64 {
    frob(&(got - want)) / frob(want).max(1e-300)
}

/// Plain full-batch gradient descent from `w0` until ‖∇L̃‖_F < `tol` or
/// `max_iter`. Independent of the SGD code path it is compared against.
pub fn gd_to_tolerance(spec: &LossSpec, w0: Array2<f64>, step: f64, tol: f64, max_iter: usize) -> (Array2<f64>, f64) {
    let mut w = w0;
    for _ in 0..max_iter {
        let g = spec.grad_at(&w);
        if frob(&g) < tol {
            break;
        }
        w.scaled_add(-step, &g);
    }
    let l = spec.loss_at(&w);
    (w, l)
}

/// Composite adaptive Simpson quadrature on [lo, hi].
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64, tol: f64) -> f64 {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64, m: f64, fm: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1) + recurse(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1)
    }
    let (fa, fb) = (f(lo), f(hi));
    let (m, fm, whole) = simpson(f, lo, fa, hi, fb);
    recurse(f, lo, fa, hi, fb, m, fm, whole, tol, 50)
}

/// p = d = 2, n = 8 net with inputs/labels uniform in [-1, 1], outer weights
/// normalized to ‖a‖₂·B_x = 1 and λ = `lambda_factor`·λ_c.
pub fn tiny_spec(seed: u64, act: Activation, lambda_factor: f64) -> LossSpec {
    let mut r = rng(seed);
    let xs = Array2::from_shape_fn((8, 2), |_| r.random_range(-1.0..1.0));
    let ys = Array1::from_shape_fn(8, |_| r.random_range(-1.0..1.0));
    let data = Dataset::new(xs, ys).unwrap();
    let base = LossSpec::with_outer(act, 2, &villani::OuterWeights::Normalized, data, 0.0).unwrap();
    let lc = base.lambda_c();
    base.with_lambda(lambda_factor * lc).unwrap()
}

/// Minimum over `restarts` Gaussian-initialized full-batch GD runs.
pub fn multistart_minimum(spec: &LossSpec, restarts: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let (p, d) = spec.shape();
    let step = 1.0 / spec.glip_bound().unwrap();
    (0..restarts)
        .map(|_| {
            let w0 = gaussian_matrix(&mut r, p, d, 2.0);
            gd_to_tolerance(spec, w0, step, 1e-8, 2_000_000).1
        })
        .fold(f64::INFINITY, f64::min)
}
