//! Constant-step minibatch SGD and the Euler–Maruyama discretization of its
//! diffusion limit `dW = −∇L̃(W)dt + √s dB`.
//!
//! Every run owns a `ChaCha8Rng` seeded from `(seed, stream)`, so runs are
//! bit-reproducible and ensembles can be executed in any order.

use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{param_err, DivergedState, Error, Result};
use crate::model::{frobenius, LossSpec};

/// Loss above which a run is declared divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

/// How the initial weights are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitSpec {
    /// i.i.d. `N(0, τ²)` entries.
    Gaussian { tau: f64 },
    Zero,
    /// Row-major `p × d` matrix.
    Explicit(Vec<Vec<f64>>),
    /// Gaussian with `τ² = s/(4λ)`, which keeps `ρ₀² e^{2L̃/s}` integrable.
    #[default]
    Auto,
}

impl InitSpec {
    pub fn sample(&self, spec: &LossSpec, s: f64, rng: &mut ChaCha8Rng) -> Result<Array2<f64>> {
        let (p, d) = spec.shape();
        match self {
            InitSpec::Zero => Ok(Array2::zeros((p, d))),
            InitSpec::Gaussian { tau } => {
                if !(tau.is_finite() && *tau > 0.0) {
                    return param_err(format!("Gaussian init needs tau > 0, got {tau}"));
                }
                Ok(gaussian(rng, p, d, *tau))
            }
            InitSpec::Auto => {
                let lambda = spec.lambda();
                if lambda <= 0.0 || s <= 0.0 {
                    return param_err("automatic init needs lambda > 0 and s > 0; give tau explicitly");
                }
                Ok(gaussian(rng, p, d, (s / (4.0 * lambda)).sqrt()))
            }
            InitSpec::Explicit(rows) => {
                if rows.len() != p || rows.iter().any(|r| r.len() != d) {
                    return Err(Error::Shape(format!("explicit init must be {p}x{d}")));
                }
                let w = Array2::from_shape_fn((p, d), |(j, k)| rows[j][k]);
                if w.iter().any(|v| !v.is_finite()) {
                    return param_err("explicit init has non-finite entries");
                }
                Ok(w)
            }
        }
    }
}

fn gaussian(rng: &mut ChaCha8Rng, p: usize, d: usize, tau: f64) -> Array2<f64> {
    Array2::from_shape_fn((p, d), |_| {
        let g: f64 = StandardNormal.sample(rng);
        tau * g
    })
}

fn default_log_every() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub step_size: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub seed: u64,
    #[serde(default)]
    pub init: InitSpec,
    #[serde(default = "default_log_every")]
    pub log_every: usize,
}

impl SgdConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return param_err(format!("step size must be positive, got {}", self.step_size));
        }
        if self.batch_size == 0 || self.batch_size > n {
            return param_err(format!("batch size must be in [1, {n}], got {}", self.batch_size));
        }
        if self.steps == 0 {
            return param_err("at least one step is required");
        }
        if self.log_every == 0 {
            return param_err("log_every must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdeConfig {
    pub s: f64,
    pub dt: f64,
    pub t_max: f64,
    pub seed: u64,
    #[serde(default)]
    pub init: InitSpec,
    #[serde(default = "default_log_every")]
    pub log_every: usize,
}

impl SdeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.s.is_finite() && self.s >= 0.0) {
            return param_err(format!("noise scale s must be nonnegative, got {}", self.s));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return param_err(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_max.is_finite() && self.t_max > 0.0) {
            return param_err(format!("t_max must be positive, got {}", self.t_max));
        }
        if self.log_every == 0 {
            return param_err("log_every must be at least 1");
        }
        Ok(())
    }

    pub fn step_count(&self) -> usize {
        ((self.t_max / self.dt) - 1e-9).ceil().max(1.0) as usize
    }
}

/// Logged path of a run. Index 0 is the initial state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<usize>,
    pub times: Vec<f64>,
    pub losses: Vec<f64>,
    pub grad_norms: Vec<f64>,
    pub final_w: Array2<f64>,
    /// Hex digest of the generator position after the run.
    pub rng_state_digest: String,
}

impl Trajectory {
    fn new(final_w: Array2<f64>) -> Self {
        Trajectory {
            steps: Vec::new(),
            times: Vec::new(),
            losses: Vec::new(),
            grad_norms: Vec::new(),
            final_w,
            rng_state_digest: String::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn final_loss(&self) -> f64 {
        *self.losses.last().expect("trajectory has at least the initial point")
    }

    /// Columns `step, time, loss, grad_norm`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["step", "time", "loss", "grad_norm"])?;
        for i in 0..self.len() {
            w.write_record(&[
                self.steps[i].to_string(),
                self.times[i].to_string(),
                self.losses[i].to_string(),
                self.grad_norms[i].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Generator for `(seed, stream)`; stream 0 is used by single runs.
pub fn run_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn rng_digest(rng: &ChaCha8Rng) -> String {
    let mut h = Sha256::new();
    h.update(rng.get_seed());
    h.update(rng.get_stream().to_le_bytes());
    h.update(rng.get_word_pos().to_le_bytes());
    hex::encode(h.finalize())
}

/// One minibatch step `(1 − sλ)W + (s/b) Σ_{i∈B} (y_i − f(x_i))·∇_W f(x_i)`.
pub fn sgd_step(spec: &LossSpec, w: &Array2<f64>, batch: &[usize], s: f64) -> Result<Array2<f64>> {
    if batch.is_empty() {
        return param_err("minibatch is empty");
    }
    let n = spec.data().n();
    if let Some(&bad) = batch.iter().find(|&&i| i >= n) {
        return param_err(format!("batch index {bad} out of range for {n} points"));
    }
    if w.dim() != spec.shape() {
        return Err(Error::Shape(format!("weights {:?} do not match net {:?}", w.dim(), spec.shape())));
    }
    let mut next = spec.batch_data_direction(w, batch);
    next *= s / batch.len() as f64;
    next.scaled_add(1.0 - s * spec.lambda(), w);
    Ok(next)
}

struct Logger<'a> {
    spec: &'a LossSpec,
    traj: Trajectory,
    last_good: DivergedState,
}

impl<'a> Logger<'a> {
    fn new(spec: &'a LossSpec, w0: &Array2<f64>) -> Self {
        Logger {
            spec,
            traj: Trajectory::new(w0.clone()),
            last_good: DivergedState { step: 0, time: 0.0, loss: f64::NAN, weights: w0.clone() },
        }
    }

    fn log(&mut self, step: usize, time: f64, w: &Array2<f64>) -> Result<()> {
        let loss = self.spec.loss_at(w);
        if !loss.is_finite() || loss > DIVERGENCE_THRESHOLD {
            return Err(self.diverged());
        }
        let g = frobenius(&self.spec.grad_at(w));
        self.traj.steps.push(step);
        self.traj.times.push(time);
        self.traj.losses.push(loss);
        self.traj.grad_norms.push(g);
        self.last_good = DivergedState { step, time, loss, weights: w.clone() };
        Ok(())
    }

    fn diverged(&self) -> Error {
        Error::Diverged(Box::new(self.last_good.clone()))
    }

    fn finish(mut self, w: Array2<f64>, rng: &ChaCha8Rng) -> Trajectory {
        self.traj.final_w = w;
        self.traj.rng_state_digest = rng_digest(rng);
        self.traj
    }
}

/// SGD on `spec` as configured. See [`run_sgd_observed`].
pub fn run_sgd(spec: &LossSpec, cfg: &SgdConfig) -> Result<Trajectory> {
    run_sgd_observed(spec, cfg, 0, |_, _, _| {})
}

/// SGD with i.i.d. uniform with-replacement minibatches; `batch_size == n`
/// means the deterministic full batch. `observe(step, time, W)` is called at
/// every logged point (step 0, every `log_every` steps, and the last step).
/// Time is `step · s`.
pub fn run_sgd_observed<F>(spec: &LossSpec, cfg: &SgdConfig, stream: u64, mut observe: F) -> Result<Trajectory>
where
    F: FnMut(usize, f64, &Array2<f64>),
{
    let n = spec.data().n();
    cfg.validate(n)?;
    let s = cfg.step_size;
    let mut rng = run_rng(cfg.seed, stream);
    let mut w = cfg.init.sample(spec, s, &mut rng)?;
    let full: Vec<usize> = (0..n).collect();
    let mut batch = vec![0usize; cfg.batch_size];
    let mut logger = Logger::new(spec, &w);
    logger.log(0, 0.0, &w)?;
    observe(0, 0.0, &w);
    for k in 1..=cfg.steps {
        let idx: &[usize] = if cfg.batch_size == n {
            &full
        } else {
            for slot in batch.iter_mut() {
                *slot = rng.random_range(0..n);
            }
            &batch
        };
        let next = sgd_step(spec, &w, idx, s)?;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(logger.diverged());
        }
        w = next;
        if k % cfg.log_every == 0 || k == cfg.steps {
            let t = k as f64 * s;
            logger.log(k, t, &w)?;
            observe(k, t, &w);
        }
    }
    Ok(logger.finish(w, &rng))
}

pub fn run_sde(spec: &LossSpec, cfg: &SdeConfig) -> Result<Trajectory> {
    run_sde_observed(spec, cfg, 0, |_, _, _| {})
}

/// Euler–Maruyama `W ← W − dt·∇L̃(W) + √(s·dt)·G`, `G` standard normal.
/// The last step is shortened so that the run ends exactly at `t_max`.
pub fn run_sde_observed<F>(spec: &LossSpec, cfg: &SdeConfig, stream: u64, mut observe: F) -> Result<Trajectory>
where
    F: FnMut(usize, f64, &Array2<f64>),
{
    cfg.validate()?;
    let mut rng = run_rng(cfg.seed, stream);
    let mut w = cfg.init.sample(spec, cfg.s, &mut rng)?;
    let steps = cfg.step_count();
    let mut logger = Logger::new(spec, &w);
    logger.log(0, 0.0, &w)?;
    observe(0, 0.0, &w);
    let mut t = 0.0;
    for k in 1..=steps {
        let h = if k == steps { cfg.t_max - t } else { cfg.dt };
        let g = spec.grad_at(&w);
        w.scaled_add(-h, &g);
        if cfg.s > 0.0 {
            let amp = (cfg.s * h).sqrt();
            w.mapv_inplace(|v| {
                let z: f64 = StandardNormal.sample(&mut rng);
                v + amp * z
            });
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(logger.diverged());
        }
        t = if k == steps { cfg.t_max } else { k as f64 * cfg.dt };
        if k % cfg.log_every == 0 || k == steps {
            logger.log(k, t, &w)?;
            observe(k, t, &w);
        }
    }
    Ok(logger.finish(w, &rng))
}

/// `paths` independent SDE runs; path `i` uses stream `i`, so the result
/// does not depend on scheduling.
pub fn run_sde_ensemble(spec: &LossSpec, cfg: &SdeConfig, paths: usize) -> Result<Vec<Trajectory>> {
    if paths == 0 {
        return param_err("ensemble needs at least one path");
    }
    (0..paths as u64).into_par_iter().map(|i| run_sde_observed(spec, cfg, i, |_, _, _| {})).collect()
}

/// Pointwise mean loss over an ensemble whose members share a log schedule.
pub fn ensemble_mean_loss(trajs: &[Trajectory]) -> Result<(Vec<f64>, Vec<f64>)> {
    let first = trajs.first().ok_or_else(|| Error::Parameter("empty ensemble".into()))?;
    if trajs.iter().any(|t| t.len() != first.len()) {
        return Err(Error::Shape("ensemble members have different log schedules".into()));
    }
    let m = trajs.len() as f64;
    let mean = (0..first.len()).map(|i| trajs.iter().map(|t| t.losses[i]).sum::<f64>() / m).collect();
    Ok((first.times.clone(), mean))
}

/// Step-size guidance `min(1/gLip, ε·user_scale)`. The theoretical scale
/// depends on constants with no computable form, so it is supplied.
pub fn s_star(spec: &LossSpec, eps: f64, user_scale: f64) -> Result<f64> {
    if !(eps > 0.0 && user_scale > 0.0) {
        return param_err("eps and user_scale must be positive");
    }
    Ok((1.0 / spec.glip_bound()?).min(eps * user_scale))
}

/// A-priori bound on `‖W^{k+1}‖_F` given `‖W^k‖_F` for one SGD step of size
/// `s < 1/λ` with a bounded activation.
pub fn weight_norm_step_bound(spec: &LossSpec, s: f64, w_norm: f64) -> Result<f64> {
    let act = spec.net().activation();
    if !act.is_bounded() {
        return Err(Error::UnsupportedBound("weight-norm bound needs a bounded activation".into()));
    }
    if !(s > 0.0 && s * spec.lambda() < 1.0) {
        return param_err("weight-norm bound needs 0 < s < 1/lambda");
    }
    let a = spec.net().a_norm();
    let (p, _) = spec.shape();
    let data = spec.data();
    let residual = data.b_y() + a * act.b_sigma * (p as f64).sqrt();
    Ok((1.0 - s * spec.lambda()) * w_norm + s * act.md * data.b_x() * a * residual)
}
