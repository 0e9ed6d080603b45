//! Seeded synthetic regression data: the sine-of-norm recipe, a Sigmoid
//! teacher, file input, and additive Cauchy label corruption.
//!
//! A recipe seed drives independent ChaCha streams for the training draw,
//! the test draw, the teacher weights and the corruption, so changing one
//! part of a recipe never shifts the random numbers of another.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use rand::distr::Open01;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::activation::Activation;
use crate::dynamics::run_rng;
use crate::error::{param_err, Error, Result};
use crate::model::Dataset;

pub const TRAIN_STREAM: u64 = 1;
pub const TEST_STREAM: u64 = 2;
pub const TEACHER_STREAM: u64 = 3;
pub const CORRUPTION_STREAM: u64 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataKind {
    /// `x ∼ U[0,1)^d`, `y = sin(π‖x‖²/d) + N(0, noise_sd²)`.
    SineNorm { d: usize, noise_sd: f64 },
    /// `y = aᵀσ(Wx) + N(0, noise_sd²)` for a hidden Sigmoid(1) net with
    /// `a_i ∼ N(0,1)/√p_teacher` and `W_jk ∼ N(0,1)`.
    Teacher { d: usize, p_teacher: usize, noise_sd: f64 },
    /// CSV with a header, feature columns then the label; the first
    /// `n_train` rows train, the next `n_test` rows test.
    FromFile { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Corruption {
    pub fraction: f64,
    #[serde(default = "default_cauchy_scale")]
    pub scale: f64,
}

fn default_cauchy_scale() -> f64 {
    0.05
}

impl Default for Corruption {
    fn default() -> Self {
        Corruption { fraction: 0.0, scale: default_cauchy_scale() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataRecipe {
    #[serde(flatten)]
    pub kind: DataKind,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
    #[serde(default)]
    pub corruption: Corruption,
}

/// Hidden Sigmoid(1) net used for realizable labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Teacher {
    pub a: Array1<f64>,
    pub w: Array2<f64>,
}

impl Teacher {
    pub fn random(d: usize, p: usize, rng: &mut ChaCha8Rng) -> Self {
        let scale = 1.0 / (p as f64).sqrt();
        let a = Array1::from_shape_fn(p, |_| scale * normal(rng));
        let w = Array2::from_shape_fn((p, d), |_| normal(rng));
        Teacher { a, w }
    }

    pub fn predict(&self, x: ndarray::ArrayView1<'_, f64>) -> f64 {
        self.predict_with(&teacher_activation(), x)
    }

    fn predict_with(&self, sig: &Activation, x: ndarray::ArrayView1<'_, f64>) -> f64 {
        self.w.outer_iter().zip(self.a.iter()).map(|(row, aj)| aj * sig.value(row.dot(&x))).sum()
    }
}

/// Train/test pair generated from a recipe. `clean_train` is the training
/// set before corruption; the test set is never corrupted.
#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub train: Dataset,
    pub clean_train: Dataset,
    pub test: Dataset,
    pub teacher: Option<Teacher>,
}

fn teacher_activation() -> Activation {
    Activation::sigmoid(1.0).expect("unit slope is valid")
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn uniform_inputs(d: usize, n: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((n, d), |_| rng.random::<f64>())
}

fn check_sizes(d: usize, n: usize, noise_sd: f64) -> Result<()> {
    if d == 0 || n == 0 {
        return param_err("dimension and sample count must be at least 1");
    }
    if !(noise_sd.is_finite() && noise_sd >= 0.0) {
        return param_err(format!("noise sd must be nonnegative, got {noise_sd}"));
    }
    Ok(())
}

/// Noiseless sine-of-norm label `sin(π‖x‖²/d)`.
pub fn sine_label(x: ndarray::ArrayView1<'_, f64>) -> f64 {
    let r2: f64 = x.iter().map(|v| v * v).sum();
    (std::f64::consts::PI * r2 / x.len() as f64).sin()
}

pub fn sine_from(d: usize, n: usize, noise_sd: f64, rng: &mut ChaCha8Rng) -> Result<Dataset> {
    check_sizes(d, n, noise_sd)?;
    let xs = uniform_inputs(d, n, rng);
    let ys = Array1::from_shape_fn(n, |i| {
        let clean = sine_label(xs.row(i));
        if noise_sd > 0.0 {
            clean + noise_sd * normal(rng)
        } else {
            clean
        }
    });
    Dataset::new(xs, ys)
}

pub fn teacher_from(teacher: &Teacher, n: usize, noise_sd: f64, rng: &mut ChaCha8Rng) -> Result<Dataset> {
    let d = teacher.w.ncols();
    check_sizes(d, n, noise_sd)?;
    let xs = uniform_inputs(d, n, rng);
    let sig = teacher_activation();
    let ys = Array1::from_shape_fn(n, |i| {
        let clean = teacher.predict_with(&sig, xs.row(i));
        if noise_sd > 0.0 {
            clean + noise_sd * normal(rng)
        } else {
            clean
        }
    });
    Dataset::new(xs, ys)
}

/// Sine-of-norm data from the training stream of `seed`.
pub fn gen_sine(d: usize, n: usize, noise_sd: f64, seed: u64) -> Result<Dataset> {
    sine_from(d, n, noise_sd, &mut run_rng(seed, TRAIN_STREAM))
}

/// Teacher data from the training stream of `seed`, with the teacher drawn
/// from the teacher stream.
pub fn gen_teacher(d: usize, p_teacher: usize, n: usize, noise_sd: f64, seed: u64) -> Result<Dataset> {
    if p_teacher == 0 {
        return param_err("teacher width must be at least 1");
    }
    let teacher = Teacher::random(d, p_teacher, &mut run_rng(seed, TEACHER_STREAM));
    teacher_from(&teacher, n, noise_sd, &mut run_rng(seed, TRAIN_STREAM))
}

/// Adds `scale·ξ`, ξ standard Cauchy, to a uniformly chosen
/// `⌊fraction·n⌋`-subset of labels. The subset is the prefix of a seeded
/// partial Fisher–Yates shuffle, so for a fixed seed larger fractions corrupt
/// a superset of the points (with the same noise values).
pub fn corrupt_labels(ds: &Dataset, fraction: f64, scale: f64, seed: u64) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&fraction) {
        return param_err(format!("corruption fraction must be in [0, 1], got {fraction}"));
    }
    if !scale.is_finite() {
        return param_err("corruption scale must be finite");
    }
    let n = ds.n();
    let k = (fraction * n as f64).floor() as usize;
    if k == 0 || scale == 0.0 {
        return Ok(ds.clone());
    }
    let mut rng = run_rng(seed, CORRUPTION_STREAM);
    let mut idx: Vec<usize> = (0..n).collect();
    let mut ys = ds.ys().clone();
    for i in 0..k {
        let j = rng.random_range(i..n);
        idx.swap(i, j);
        let u: f64 = rng.sample(Open01);
        let xi = (std::f64::consts::PI * (u - 0.5)).tan();
        ys[idx[i]] += scale * xi;
    }
    ds.with_labels(ys)
}

impl DataRecipe {
    pub fn validate(&self) -> Result<()> {
        if self.n_train == 0 || self.n_test == 0 {
            return param_err("n_train and n_test must be at least 1");
        }
        let c = self.corruption;
        if !(0.0..=1.0).contains(&c.fraction) || !c.scale.is_finite() {
            return param_err("corruption needs fraction in [0, 1] and a finite scale");
        }
        match &self.kind {
            DataKind::SineNorm { d, noise_sd } => check_sizes(*d, 1, *noise_sd),
            DataKind::Teacher { d, p_teacher, noise_sd } => {
                if *p_teacher == 0 {
                    return param_err("teacher width must be at least 1");
                }
                check_sizes(*d, 1, *noise_sd)
            }
            DataKind::FromFile { .. } => Ok(()),
        }
    }

    pub fn dim(&self) -> Option<usize> {
        match &self.kind {
            DataKind::SineNorm { d, .. } | DataKind::Teacher { d, .. } => Some(*d),
            DataKind::FromFile { .. } => None,
        }
    }

    pub fn with_corruption(&self, fraction: f64) -> Self {
        DataRecipe { corruption: Corruption { fraction, ..self.corruption }, ..self.clone() }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        DataRecipe { seed, ..self.clone() }
    }

    pub fn generate(&self) -> Result<Generated> {
        self.validate()?;
        let mut train_rng = run_rng(self.seed, TRAIN_STREAM);
        let mut test_rng = run_rng(self.seed, TEST_STREAM);
        let (clean_train, test, teacher) = match &self.kind {
            DataKind::SineNorm { d, noise_sd } => (
                sine_from(*d, self.n_train, *noise_sd, &mut train_rng)?,
                sine_from(*d, self.n_test, *noise_sd, &mut test_rng)?,
                None,
            ),
            DataKind::Teacher { d, p_teacher, noise_sd } => {
                let t = Teacher::random(*d, *p_teacher, &mut run_rng(self.seed, TEACHER_STREAM));
                (
                    teacher_from(&t, self.n_train, *noise_sd, &mut train_rng)?,
                    teacher_from(&t, self.n_test, *noise_sd, &mut test_rng)?,
                    Some(t),
                )
            }
            DataKind::FromFile { path } => {
                let all = read_csv(path)?;
                if all.n() < self.n_train + self.n_test {
                    return param_err(format!(
                        "{} has {} rows, recipe needs {}",
                        path.display(),
                        all.n(),
                        self.n_train + self.n_test
                    ));
                }
                (rows(&all, 0, self.n_train)?, rows(&all, self.n_train, self.n_test)?, None)
            }
        };
        let train = corrupt_labels(&clean_train, self.corruption.fraction, self.corruption.scale, self.seed)?;
        Ok(Generated { train, clean_train, test, teacher })
    }
}

fn rows(ds: &Dataset, start: usize, len: usize) -> Result<Dataset> {
    let xs = ds.xs().slice(ndarray::s![start..start + len, ..]).to_owned();
    let ys = ds.ys().slice(ndarray::s![start..start + len]).to_owned();
    Dataset::new(xs, ys)
}

/// CSV text with header `x0,…,x{d−1},y`; floats use the shortest
/// round-tripping representation.
pub fn to_csv_bytes(ds: &Dataset) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = (0..ds.dim()).map(|k| format!("x{k}")).collect();
    header.push("y".into());
    w.write_record(&header)?;
    for i in 0..ds.n() {
        let mut rec: Vec<String> = ds.x(i).iter().map(|v| v.to_string()).collect();
        rec.push(ds.y(i).to_string());
        w.write_record(&rec)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes the dataset and returns the SHA-256 of the written bytes.
pub fn write_csv(ds: &Dataset, path: &Path) -> Result<String> {
    let bytes = to_csv_bytes(ds)?;
    fs::write(path, &bytes)?;
    Ok(sha256_hex(&bytes))
}

pub fn read_csv(path: &Path) -> Result<Dataset> {
    let mut r = csv::Reader::from_path(path)?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let vals: Vec<f64> = rec
            .iter()
            .map(|f| f.trim().parse::<f64>().map_err(|e| Error::Parameter(format!("{}: bad number {f:?}: {e}", path.display()))))
            .collect::<Result<_>>()?;
        if vals.len() < 2 {
            return param_err(format!("{}: need at least one feature and a label", path.display()));
        }
        ys.push(vals[vals.len() - 1]);
        xs.push(vals[..vals.len() - 1].to_vec());
    }
    Dataset::from_rows(&xs, ys)
}

/// Sidecar written next to a generated CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub recipe: DataRecipe,
    pub seed: u64,
    #[serde(rename = "B_x")]
    pub b_x: f64,
    #[serde(rename = "B_y")]
    pub b_y: f64,
    pub hash: String,
    pub test_hash: String,
    /// How hidden teacher weights were drawn, when a teacher is used.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub teacher_weights: Option<String>,
}

/// Paths written by [`write_generated`].
#[derive(Debug, Clone, PartialEq)]
pub struct WrittenFiles {
    pub train: PathBuf,
    pub test: PathBuf,
    pub meta: PathBuf,
}

/// Writes `out` (training data), `<stem>.test.csv` and `<stem>.meta.json`.
pub fn write_generated(recipe: &DataRecipe, generated: &Generated, out: &Path) -> Result<WrittenFiles> {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("data");
    let sibling = |suffix: &str| out.with_file_name(format!("{stem}{suffix}"));
    let test = sibling(".test.csv");
    let meta_path = sibling(".meta.json");
    let hash = write_csv(&generated.train, out)?;
    let test_hash = write_csv(&generated.test, &test)?;
    let meta = DatasetMeta {
        recipe: recipe.clone(),
        seed: recipe.seed,
        b_x: generated.train.b_x(),
        b_y: generated.train.b_y(),
        hash,
        test_hash,
        teacher_weights: generated.teacher.as_ref().map(|_| "a ~ N(0,1)/sqrt(p), W ~ N(0,1), sigmoid(1)".into()),
    };
    fs::write(&meta_path, serde_json::to_vec_pretty(&meta)?)?;
    Ok(WrittenFiles { train: out.to_path_buf(), test, meta: meta_path })
}
