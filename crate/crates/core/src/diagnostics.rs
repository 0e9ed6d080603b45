//! Villani-condition diagnostics: the quantity `V_s = ‖∇L̃‖²/s − ΔL̃`, the
//! closed-form lower bound on ‖∇L̃‖² and upper bound on ΔL̃, and seeded ray
//! scans that certify divergence of `V_s` at large ‖W‖_F.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param_err, Result};
use crate::model::{frobenius, frobenius_sq, LossSpec};

fn check_s(s: f64) -> Result<()> {
    if s.is_finite() && s > 0.0 {
        Ok(())
    } else {
        param_err(format!("noise scale s must be positive, got {s}"))
    }
}

/// `‖∇L̃(W)‖_F²/s − ΔL̃(W)` at the spec's weights.
pub fn v_s(spec: &LossSpec, s: f64) -> Result<f64> {
    v_s_at(spec, spec.weights(), s)
}

pub fn v_s_at(spec: &LossSpec, w: &Array2<f64>, s: f64) -> Result<f64> {
    check_s(s)?;
    let ev = spec.evaluate_at(w);
    Ok(frobenius_sq(&ev.grad) / s - ev.laplacian)
}

/// `λ² − 2λM_D L B_x²‖a‖²`, the coefficient of ‖W‖_F² in the lower bound on
/// `V_s`. Positive exactly when λ > λ_c.
pub fn leading_coefficient(spec: &LossSpec) -> f64 {
    let lambda = spec.lambda();
    lambda * lambda - lambda * spec.lambda_c()
}

/// Lower bound on ‖∇L̃‖_F² at the spec's weights:
/// `(λ² − 2λM_D L B_x²‖a‖²)‖W‖_F² − 2λM_D B_x‖a‖(B_y + ‖a‖‖c‖)‖W‖_F`.
pub fn grad_lower_bound(spec: &LossSpec) -> f64 {
    grad_lower_bound_at(spec, spec.weights())
}

pub fn grad_lower_bound_at(spec: &LossSpec, w: &Array2<f64>) -> f64 {
    let net = spec.net();
    let act = net.activation();
    let lambda = spec.lambda();
    let an = net.a_norm();
    let bx = spec.data().b_x();
    let by = spec.data().b_y();
    let c = act.offset_norm(net.width());
    let r = frobenius(w);
    leading_coefficient(spec) * r * r - 2.0 * lambda * act.md * bx * an * (by + an * c) * r
}

/// Upper bound on ΔL̃ at the spec's weights:
/// `p[M_D²B_x²‖a‖² + ‖a‖(B_y + ‖a‖(‖c‖ + L B_x‖W‖_F))M_D'B_x² + λd]`.
/// Affine in ‖W‖_F.
pub fn laplacian_upper_bound(spec: &LossSpec) -> f64 {
    laplacian_upper_bound_at(spec, spec.weights())
}

pub fn laplacian_upper_bound_at(spec: &LossSpec, w: &Array2<f64>) -> f64 {
    let net = spec.net();
    let act = net.activation();
    let (p, d) = spec.shape();
    let an = net.a_norm();
    let bx = spec.data().b_x();
    let by = spec.data().b_y();
    let c = act.offset_norm(p);
    let r = frobenius(w);
    p as f64
        * (act.md * act.md * bx * bx * an * an
            + an * (by + an * (c + act.lipschitz * bx * r)) * act.md_prime * bx * bx
            + spec.lambda() * d as f64)
}

/// `{1, 2, 4, …}` below `r_max`, then `r_max` itself.
pub fn geometric_radii(r_max: f64) -> Vec<f64> {
    let mut radii = Vec::new();
    let mut r = 1.0;
    while r < r_max {
        radii.push(r);
        r *= 2.0;
    }
    radii.push(r_max);
    radii
}

/// Uniform direction on the Frobenius unit sphere of `p × d` matrices.
pub fn random_direction(p: usize, d: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    loop {
        let g = Array2::from_shape_fn((p, d), |_| StandardNormal.sample(rng));
        let norm = frobenius(&g);
        if norm > 0.0 {
            return g / norm;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VillaniReport {
    pub lambda: f64,
    pub s: f64,
    pub lambda_c: f64,
    pub leading_coefficient: f64,
    pub seed: u64,
    pub ray_count: usize,
    pub radii: Vec<f64>,
    /// `ray_count × radii.len()`, row = ray.
    pub v_values: Vec<Vec<f64>>,
    pub grad_bound_violations: usize,
    pub laplacian_bound_violations: usize,
    /// Every ray is positive and non-decreasing over its last three radii.
    pub diverging: bool,
}

/// Evaluates `V_s` along `ray_count` seeded random directions at radii
/// `{1, 2, 4, …, r_max}` and checks both pointwise bounds at every sample.
///
/// For λ ≤ λ_c the report is informational; divergence is not ruled out.
pub fn villani_scan(spec: &LossSpec, s: f64, ray_count: usize, r_max: f64, seed: u64) -> Result<VillaniReport> {
    check_s(s)?;
    if ray_count < 8 {
        return param_err(format!("villani scan needs at least 8 rays, got {ray_count}"));
    }
    if !(r_max >= 10.0 && r_max.is_finite()) {
        return param_err(format!("villani scan needs r_max >= 10, got {r_max}"));
    }
    let (p, d) = spec.shape();
    let radii = geometric_radii(r_max);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let directions: Vec<Array2<f64>> = (0..ray_count).map(|_| random_direction(p, d, &mut rng)).collect();

    let rows: Vec<(Vec<f64>, usize, usize)> = directions
        .par_iter()
        .map(|dir| {
            let mut vals = Vec::with_capacity(radii.len());
            let (mut grad_viol, mut lap_viol) = (0, 0);
            for &r in &radii {
                let w = dir * r;
                let ev = spec.evaluate_at(&w);
                let g2 = frobenius_sq(&ev.grad);
                if g2 < grad_lower_bound_at(spec, &w) {
                    grad_viol += 1;
                }
                if ev.laplacian > laplacian_upper_bound_at(spec, &w) {
                    lap_viol += 1;
                }
                vals.push(g2 / s - ev.laplacian);
            }
            (vals, grad_viol, lap_viol)
        })
        .collect();

    let diverging = rows.iter().all(|(vals, _, _)| tail_diverges(vals));
    Ok(VillaniReport {
        lambda: spec.lambda(),
        s,
        lambda_c: spec.lambda_c(),
        leading_coefficient: leading_coefficient(spec),
        seed,
        ray_count,
        grad_bound_violations: rows.iter().map(|r| r.1).sum(),
        laplacian_bound_violations: rows.iter().map(|r| r.2).sum(),
        v_values: rows.into_iter().map(|r| r.0).collect(),
        radii,
        diverging,
    })
}

fn tail_diverges(vals: &[f64]) -> bool {
    let tail = &vals[vals.len().saturating_sub(3)..];
    tail.iter().all(|&v| v > 0.0) && tail.windows(2).all(|w| w[1] >= w[0])
}
