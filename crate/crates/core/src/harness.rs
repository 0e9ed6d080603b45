//! Experiment orchestration: the (λ, width) sweep, the noisy-label ablation
//! and their reports.
//!
//! Seeds are positional. Restart `r` of cell `c` always trains with
//! `SgdConfig.seed = cell_seed(base, c)` on stream `r`, whatever order the
//! pool runs cells in.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activation::{Activation, ActivationKind};
use crate::data::{corrupt_labels, DataRecipe};
use crate::dynamics::{run_sgd_observed, InitSpec, SgdConfig};
use crate::error::{param_err, Error, Result};
use crate::model::{LossSpec, OuterWeights};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Minimum held-out MSE over logged checkpoints.
    #[default]
    BestTestLoss,
    /// Regularized training loss at the last step.
    FinalTrainLoss,
}

fn default_activation() -> ActivationKind {
    ActivationKind::Sigmoid { beta: 1.0 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub lambdas: Vec<f64>,
    pub widths: Vec<usize>,
    pub recipe: DataRecipe,
    /// Template; `seed` is the base seed of the sweep.
    pub sgd: SgdConfig,
    pub restarts_per_cell: usize,
    #[serde(default)]
    pub metric: Metric,
    #[serde(default = "default_activation")]
    pub activation: ActivationKind,
    #[serde(default)]
    pub outer: OuterWeights,
    /// Worker cap; `None` uses every core.
    #[serde(default)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartMeta {
    pub restart: usize,
    pub seed: u64,
    pub stream: u64,
    pub steps: usize,
    /// `+∞` when the run diverged.
    pub metric: f64,
    pub wall_seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMeta {
    pub lambda: f64,
    pub width: usize,
    pub cell_index: usize,
    pub lambda_c: f64,
    pub restarts: Vec<RestartMeta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub lambdas: Vec<f64>,
    pub widths: Vec<usize>,
    pub metric: Metric,
    /// `grid[i][j]` is the best metric over restarts at `(lambdas[i], widths[j])`.
    pub grid: Vec<Vec<f64>>,
    pub cells: Vec<CellMeta>,
}

impl SweepResult {
    pub fn min(&self) -> f64 {
        self.grid.iter().flatten().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn value(&self, lambda: f64, width: usize) -> Option<f64> {
        let i = self.lambdas.iter().position(|&l| l == lambda)?;
        let j = self.widths.iter().position(|&w| w == width)?;
        Some(self.grid[i][j])
    }
}

/// SplitMix64 finalizer; decorrelates positional seeds.
pub fn mix_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn cell_seed(base: u64, cell: usize) -> u64 {
    mix_seed(base, cell as u64)
}

fn pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        if j == 0 {
            return param_err("jobs must be at least 1");
        }
        b = b.num_threads(j);
    }
    b.build().map_err(|e| Error::Numerical(format!("thread pool: {e}")))
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambdas.is_empty() || self.widths.is_empty() {
            return param_err("lambda and width lists must be non-empty");
        }
        if self.lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return param_err("lambdas must be finite and nonnegative");
        }
        if self.widths.contains(&0) {
            return param_err("widths must be positive");
        }
        if self.restarts_per_cell == 0 {
            return param_err("restarts_per_cell must be at least 1");
        }
        self.recipe.validate()?;
        self.sgd.validate(self.recipe.n_train)?;
        Activation::new(self.activation)?;
        Ok(())
    }
}

/// Outcome of one training run used by both experiments.
struct RunOutcome {
    metric: f64,
    steps: usize,
}

/// Trains one restart of one sweep cell.
fn sweep_run(spec: &LossSpec, test: &crate::Dataset, sgd: &SgdConfig, stream: u64, metric: Metric) -> Result<RunOutcome> {
    let mut best = f64::INFINITY;
    let traj = run_sgd_observed(spec, sgd, stream, |_, _, w| {
        if metric == Metric::BestTestLoss {
            best = best.min(spec.mse_on(w, test));
        }
    })?;
    let value = match metric {
        Metric::BestTestLoss => best,
        Metric::FinalTrainLoss => traj.final_loss(),
    };
    Ok(RunOutcome { metric: value, steps: *traj.steps.last().unwrap_or(&0) })
}

/// Runs every `(λ, p)` cell. For each cell `‖a‖₂·B_x = 1` (or the configured
/// outer weights), `restarts_per_cell` SGD runs, and the minimum over
/// non-divergent restarts; a cell whose restarts all diverge holds `+∞`.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let data = cfg.recipe.generate()?;
    let act = Activation::new(cfg.activation)?;
    let nw = cfg.widths.len();
    let cells = cfg.lambdas.len() * nw;
    let work: Vec<(usize, usize)> = (0..cells).flat_map(|c| (0..cfg.restarts_per_cell).map(move |r| (c, r))).collect();
    let base = cfg.sgd.seed;
    let runs: Vec<Result<(usize, f64, RestartMeta)>> = pool(cfg.jobs)?.install(|| {
        work.par_iter()
            .map(|&(c, r)| {
                let lambda = cfg.lambdas[c / nw];
                let width = cfg.widths[c % nw];
                let spec = LossSpec::with_outer(act, width, &cfg.outer, data.train.clone(), lambda)?;
                let sgd = SgdConfig { seed: cell_seed(base, c), ..cfg.sgd.clone() };
                let start = Instant::now();
                let outcome = sweep_run(&spec, &data.test, &sgd, r as u64, cfg.metric);
                let wall = start.elapsed().as_secs_f64();
                let meta = match outcome {
                    Ok(o) => RestartMeta { restart: r, seed: sgd.seed, stream: r as u64, steps: o.steps, metric: o.metric, wall_seconds: wall, failure: None },
                    Err(Error::Diverged(st)) => RestartMeta {
                        restart: r,
                        seed: sgd.seed,
                        stream: r as u64,
                        steps: st.step,
                        metric: f64::INFINITY,
                        wall_seconds: wall,
                        failure: Some(format!("diverged after step {} (loss {:e})", st.step, st.loss)),
                    },
                    Err(e) => return Err(e),
                };
                Ok((c, spec.lambda_c(), meta))
            })
            .collect()
    });
    let mut metas: Vec<CellMeta> = (0..cells)
        .map(|c| CellMeta { lambda: cfg.lambdas[c / nw], width: cfg.widths[c % nw], cell_index: c, lambda_c: f64::NAN, restarts: Vec::new() })
        .collect();
    for run in runs {
        let (c, lc, meta) = run?;
        metas[c].lambda_c = lc;
        metas[c].restarts.push(meta);
    }
    let mut grid = vec![vec![f64::INFINITY; nw]; cfg.lambdas.len()];
    for m in metas.iter_mut() {
        m.restarts.sort_by_key(|r| r.restart);
        let best = m.restarts.iter().map(|r| r.metric).fold(f64::INFINITY, f64::min);
        grid[m.cell_index / nw][m.cell_index % nw] = best;
    }
    Ok(SweepResult { lambdas: cfg.lambdas.clone(), widths: cfg.widths.clone(), metric: cfg.metric, grid, cells: metas })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AblationSetting {
    pub width: usize,
    pub step_size: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationConfig {
    /// Clean recipe; its corruption block sets the Cauchy scale.
    pub recipe: DataRecipe,
    pub settings: Vec<AblationSetting>,
    pub batch_size: usize,
    pub steps: usize,
    pub log_every: usize,
    /// Independent (data, corruption, init) draws averaged per curve.
    pub replicates: usize,
    pub seed: u64,
    #[serde(default)]
    pub init: InitSpec,
    #[serde(default = "default_activation")]
    pub activation: ActivationKind,
    #[serde(default)]
    pub outer: OuterWeights,
    #[serde(default)]
    pub jobs: Option<usize>,
}

/// Replicate-averaged curves for one (setting, fraction) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationCurve {
    pub setting: AblationSetting,
    pub fraction: f64,
    pub steps: Vec<usize>,
    /// Unregularized MSE on the (corrupted) training set.
    pub train: Vec<f64>,
    pub clean_test: Vec<f64>,
    /// Held-out set corrupted at the same fraction.
    pub noisy_test: Vec<f64>,
    pub diverged_replicates: usize,
}

impl AblationCurve {
    pub fn final_clean_test(&self) -> f64 {
        *self.clean_test.last().unwrap_or(&f64::INFINITY)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub fractions: Vec<f64>,
    pub curves: Vec<AblationCurve>,
}

impl AblationResult {
    pub fn curve(&self, setting: &AblationSetting, fraction: f64) -> Option<&AblationCurve> {
        self.curves.iter().find(|c| &c.setting == setting && c.fraction == fraction)
    }
}

struct Curves {
    steps: Vec<usize>,
    train: Vec<f64>,
    clean: Vec<f64>,
    noisy: Vec<f64>,
}

/// Trains on labels corrupted at each fraction and tracks train, clean-test
/// and noisy-test MSE at every log point. Replicate `r` draws its data,
/// corruption and initialization from `mix_seed(seed, r)`; within a
/// replicate the clean data and the SGD randomness are shared by all
/// fractions and settings, so curves differ only through the corruption.
pub fn run_ablation(cfg: &AblationConfig, fractions: &[f64]) -> Result<AblationResult> {
    if fractions.is_empty() || fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
        return param_err("fractions must be a non-empty subset of [0, 1]");
    }
    if cfg.settings.is_empty() || cfg.replicates == 0 {
        return param_err("ablation needs at least one setting and one replicate");
    }
    cfg.recipe.validate()?;
    let act = Activation::new(cfg.activation)?;
    let scale = cfg.recipe.corruption.scale;
    let jobs: Vec<(usize, usize, usize)> = (0..cfg.settings.len())
        .flat_map(|s| (0..fractions.len()).flat_map(move |f| (0..cfg.replicates).map(move |r| (s, f, r))))
        .collect();
    let runs: Vec<Result<Option<Curves>>> = pool(cfg.jobs)?.install(|| {
        jobs.par_iter()
            .map(|&(si, fi, r)| {
                let setting = cfg.settings[si];
                let fraction = fractions[fi];
                let rep_seed = mix_seed(cfg.seed, r as u64);
                let data = cfg.recipe.with_seed(rep_seed).with_corruption(fraction).generate()?;
                let noisy_test = corrupt_labels(&data.test, fraction, scale, mix_seed(rep_seed, 1))?;
                let spec = LossSpec::with_outer(act, setting.width, &cfg.outer, data.train.clone(), setting.lambda)?;
                let sgd = SgdConfig {
                    step_size: setting.step_size,
                    batch_size: cfg.batch_size,
                    steps: cfg.steps,
                    seed: rep_seed,
                    init: cfg.init.clone(),
                    log_every: cfg.log_every,
                };
                let mut c = Curves { steps: Vec::new(), train: Vec::new(), clean: Vec::new(), noisy: Vec::new() };
                let res = run_sgd_observed(&spec, &sgd, 0, |k, _, w| {
                    c.steps.push(k);
                    c.train.push(spec.mse_on(w, &data.train));
                    c.clean.push(spec.mse_on(w, &data.test));
                    c.noisy.push(spec.mse_on(w, &noisy_test));
                });
                match res {
                    Ok(_) => Ok(Some(c)),
                    Err(Error::Diverged(_)) => Ok(None),
                    Err(e) => Err(e),
                }
            })
            .collect()
    });
    let mut curves = Vec::new();
    let mut it = runs.into_iter();
    for &setting in &cfg.settings {
        for &fraction in fractions {
            let reps: Vec<Option<Curves>> = (0..cfg.replicates).map(|_| it.next().expect("one run per job")).collect::<Result<_>>()?;
            let ok: Vec<&Curves> = reps.iter().flatten().collect();
            let diverged = reps.len() - ok.len();
            let curve = if let Some(first) = ok.first() {
                let m = ok.len() as f64;
                let avg = |pick: fn(&Curves) -> &Vec<f64>| -> Vec<f64> {
                    (0..first.steps.len()).map(|i| ok.iter().map(|c| pick(c)[i]).sum::<f64>() / m).collect()
                };
                AblationCurve {
                    setting,
                    fraction,
                    steps: first.steps.clone(),
                    train: avg(|c| &c.train),
                    clean_test: avg(|c| &c.clean),
                    noisy_test: avg(|c| &c.noisy),
                    diverged_replicates: diverged,
                }
            } else {
                AblationCurve {
                    setting,
                    fraction,
                    steps: vec![cfg.steps],
                    train: vec![f64::INFINITY],
                    clean_test: vec![f64::INFINITY],
                    noisy_test: vec![f64::INFINITY],
                    diverged_replicates: diverged,
                }
            };
            curves.push(curve);
        }
    }
    Ok(AblationResult { fractions: fractions.to_vec(), curves })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Svg,
}

fn num(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else {
        v.to_string()
    }
}

fn parse_num(s: &str) -> Result<f64> {
    match s.trim() {
        "inf" => Ok(f64::INFINITY),
        t => t.parse().map_err(|e| Error::Parameter(format!("bad number {t:?}: {e}"))),
    }
}

/// Writes `sweep.csv` (long format `lambda,width,restart,metric`),
/// `sweep_meta.json`, and `sweep.svg` when requested. Returns the paths.
pub fn emit_report(result: &SweepResult, dir: &Path, formats: &[ReportFormat]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let csv_path = dir.join("sweep.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record(["lambda", "width", "restart", "metric"])?;
    for cell in &result.cells {
        for r in &cell.restarts {
            w.write_record(&[num(cell.lambda), cell.width.to_string(), r.restart.to_string(), num(r.metric)])?;
        }
    }
    w.flush()?;
    let meta_path = dir.join("sweep_meta.json");
    fs::write(&meta_path, serde_json::to_vec_pretty(&serde_json::json!({
        "metric": result.metric,
        "metric_rule": "per restart: minimum held-out MSE over logged checkpoints; per cell: minimum over restarts; diverged restarts count as +inf",
        "cells": result.cells,
    }))?)?;
    let mut out = vec![csv_path, meta_path];
    if formats.contains(&ReportFormat::Svg) {
        let svg = dir.join("sweep.svg");
        fs::write(&svg, sweep_svg(result))?;
        out.push(svg);
    }
    Ok(out)
}

/// Parses a sweep CSV back into `(lambdas, widths, grid)`, taking the
/// minimum over restarts per cell. Axes keep first-appearance order.
pub fn read_sweep_csv(path: &Path) -> Result<(Vec<f64>, Vec<usize>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    let (mut lambdas, mut widths): (Vec<f64>, Vec<usize>) = (Vec::new(), Vec::new());
    for rec in r.records() {
        let rec = rec?;
        let l = parse_num(&rec[0])?;
        let w: usize = rec[1].parse().map_err(|e| Error::Parameter(format!("bad width: {e}")))?;
        let m = parse_num(&rec[3])?;
        if !lambdas.contains(&l) {
            lambdas.push(l);
        }
        if !widths.contains(&w) {
            widths.push(w);
        }
        rows.push((l, w, m));
    }
    let mut grid = vec![vec![f64::INFINITY; widths.len()]; lambdas.len()];
    for (l, w, m) in rows {
        let i = lambdas.iter().position(|&x| x == l).expect("seen");
        let j = widths.iter().position(|&x| x == w).expect("seen");
        grid[i][j] = grid[i][j].min(m);
    }
    Ok((lambdas, widths, grid))
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Heatmap of `log10(metric)`, λ on the vertical axis, width horizontal.
pub fn sweep_svg(result: &SweepResult) -> String {
    let (cw, ch, left, top) = (70.0, 28.0, 110.0, 40.0);
    let (nl, nw) = (result.lambdas.len(), result.widths.len());
    let width = left + cw * nw as f64 + 20.0;
    let height = top + ch * nl as f64 + 50.0;
    let finite: Vec<f64> = result.grid.iter().flatten().filter(|v| v.is_finite() && **v > 0.0).map(|v| v.log10()).collect();
    let lo = finite.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = finite.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(s, r#"<text x="{left}" y="20">{}</text>"#, esc(&format!("{:?} by (lambda, width)", result.metric)));
    for (i, &l) in result.lambdas.iter().enumerate() {
        let y = top + ch * i as f64;
        let _ = writeln!(s, r#"<text x="5" y="{}">λ = {}</text>"#, y + ch * 0.65, esc(&format!("{l:.3e}")));
        for j in 0..nw {
            let v = result.grid[i][j];
            let fill = if v.is_finite() && v > 0.0 {
                let t = if hi > lo { (v.log10() - lo) / (hi - lo) } else { 0.5 };
                let r = (40.0 + 215.0 * t) as u8;
                let b = (255.0 - 215.0 * t) as u8;
                format!("rgb({r},90,{b})")
            } else {
                "rgb(0,0,0)".into()
            };
            let x = left + cw * j as f64;
            let _ = writeln!(s, r#"<rect x="{x}" y="{y}" width="{cw}" height="{ch}" fill="{fill}" stroke="white"/>"#);
            let _ = writeln!(s, r#"<text x="{}" y="{}" fill="white">{}</text>"#, x + 6.0, y + ch * 0.65, esc(&format!("{v:.4}")));
        }
    }
    for (j, &w) in result.widths.iter().enumerate() {
        let _ = writeln!(s, r#"<text x="{}" y="{}">p = {w}</text>"#, left + cw * j as f64 + 14.0, top + ch * nl as f64 + 18.0);
    }
    s.push_str("</svg>\n");
    s
}

/// Writes `ablation.csv` (`width,step_size,lambda,fraction,step,train,clean_test,noisy_test`)
/// and, optionally, `ablation.svg` with the clean-test curves.
pub fn emit_ablation_report(result: &AblationResult, dir: &Path, formats: &[ReportFormat]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let csv_path = dir.join("ablation.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record(["width", "step_size", "lambda", "fraction", "step", "train", "clean_test", "noisy_test"])?;
    for c in &result.curves {
        for i in 0..c.steps.len() {
            w.write_record(&[
                c.setting.width.to_string(),
                c.setting.step_size.to_string(),
                c.setting.lambda.to_string(),
                c.fraction.to_string(),
                c.steps[i].to_string(),
                num(c.train[i]),
                num(c.clean_test[i]),
                num(c.noisy_test[i]),
            ])?;
        }
    }
    w.flush()?;
    let mut out = vec![csv_path];
    if formats.contains(&ReportFormat::Svg) {
        let svg = dir.join("ablation.svg");
        fs::write(&svg, ablation_svg(result))?;
        out.push(svg);
    }
    Ok(out)
}

/// One panel per setting with a clean-test line per corruption fraction.
pub fn ablation_svg(result: &AblationResult) -> String {
    let (pw, ph, gap) = (320.0, 200.0, 40.0);
    let settings: Vec<AblationSetting> = result.curves.iter().fold(Vec::new(), |mut acc, c| {
        if !acc.contains(&c.setting) {
            acc.push(c.setting);
        }
        acc
    });
    let width = gap + (pw + gap) * settings.len() as f64;
    let height = ph + 2.0 * gap + 20.0;
    let colours = ["#1f77b4", "#ff7f0e", "#d62728", "#2ca02c", "#9467bd"];
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">"#);
    for (k, st) in settings.iter().enumerate() {
        let x0 = gap + (pw + gap) * k as f64;
        let y0 = gap;
        let curves: Vec<&AblationCurve> = result.curves.iter().filter(|c| &c.setting == st).collect();
        let vals: Vec<f64> = curves.iter().flat_map(|c| c.clean_test.iter().cloned()).filter(|v| v.is_finite()).collect();
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let smax = curves.iter().filter_map(|c| c.steps.last()).cloned().max().unwrap_or(1).max(1) as f64;
        let _ = writeln!(s, r#"<rect x="{x0}" y="{y0}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
        let _ = writeln!(s, r#"<text x="{x0}" y="{}">{}</text>"#, y0 - 8.0, esc(&format!("p={} eta={} lambda={}", st.width, st.step_size, st.lambda)));
        for (ci, c) in curves.iter().enumerate() {
            let pts: Vec<String> = c
                .steps
                .iter()
                .zip(&c.clean_test)
                .filter(|(_, v)| v.is_finite())
                .map(|(&st, &v)| {
                    let t = if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
                    format!("{:.2},{:.2}", x0 + pw * st as f64 / smax, y0 + ph * (1.0 - t))
                })
                .collect();
            let colour = colours[ci % colours.len()];
            let _ = writeln!(s, r#"<polyline fill="none" stroke="{colour}" points="{}"/>"#, pts.join(" "));
            let _ = writeln!(s, r#"<text x="{}" y="{}" fill="{colour}">{}</text>"#, x0 + 4.0 + 80.0 * ci as f64, y0 + ph + 16.0, esc(&format!("noise {}", c.fraction)));
        }
    }
    s.push_str("</svg>\n");
    s
}

/// `‖a‖₂·B_x` of the spec a sweep cell would build; 1 for the normalized
/// outer-weight rules.
pub fn normalization_product(cfg: &SweepConfig, width: usize) -> Result<f64> {
    let data = cfg.recipe.generate()?;
    let spec = LossSpec::with_outer(Activation::new(cfg.activation)?, width, &cfg.outer, data.train, 0.0)?;
    Ok(spec.net().a_norm() * spec.data().b_x())
}
