//! Depth-2 nets `f(x) = aᵀσ(Wx)` with fixed outer weights, the
//! Frobenius-regularized squared loss over a dataset, and its closed-form
//! gradient and Laplacian.
//!
//! Everything here is hand-derived; finite-difference oracles live in the
//! test suites.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::activation::Activation;
use crate::error::{param_err, Error, Result};

/// Training or test data with certified norm bounds.
///
/// `b_x` and `b_y` are always recomputed from the stored points, never
/// taken from the caller.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    xs: Array2<f64>,
    ys: Array1<f64>,
    sq_norms: Array1<f64>,
    b_x: f64,
    b_y: f64,
}

impl Dataset {
    /// `xs` is `n × d`, one row per point.
    pub fn new(xs: Array2<f64>, ys: Array1<f64>) -> Result<Self> {
        let (n, d) = xs.dim();
        if n == 0 || d == 0 {
            return param_err("dataset needs n >= 1 points of dimension d >= 1");
        }
        if ys.len() != n {
            return Err(Error::Shape(format!("{} labels for {n} points", ys.len())));
        }
        if xs.iter().chain(ys.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Domain("dataset contains non-finite values".into()));
        }
        let sq_norms = xs.map_axis(Axis(1), |row| row.dot(&row));
        let b_x = sq_norms.iter().fold(0.0f64, |m, &v| m.max(v)).sqrt();
        let b_y = ys.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        Ok(Dataset { xs, ys, sq_norms, b_x, b_y })
    }

    pub fn from_rows(rows: &[Vec<f64>], ys: Vec<f64>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Shape("ragged feature rows".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let xs = Array2::from_shape_vec((rows.len(), d), flat).map_err(|e| Error::Shape(e.to_string()))?;
        Self::new(xs, Array1::from(ys))
    }

    /// Same inputs, new labels; bounds are re-certified.
    pub fn with_labels(&self, ys: Array1<f64>) -> Result<Self> {
        Self::new(self.xs.clone(), ys)
    }

    pub fn n(&self) -> usize {
        self.xs.nrows()
    }

    pub fn dim(&self) -> usize {
        self.xs.ncols()
    }

    pub fn xs(&self) -> &Array2<f64> {
        &self.xs
    }

    pub fn ys(&self) -> &Array1<f64> {
        &self.ys
    }

    pub fn x(&self, i: usize) -> ArrayView1<'_, f64> {
        self.xs.row(i)
    }

    pub fn y(&self, i: usize) -> f64 {
        self.ys[i]
    }

    pub fn sq_norm(&self, i: usize) -> f64 {
        self.sq_norms[i]
    }

    /// max_i ‖x_i‖₂
    pub fn b_x(&self) -> f64 {
        self.b_x
    }

    /// max_i |y_i|
    pub fn b_y(&self) -> f64 {
        self.b_y
    }
}

/// How the fixed outer layer is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OuterWeights {
    /// `a_j = 1/(√p·B_x)`, so that ‖a‖₂·B_x = 1.
    #[default]
    Normalized,
    /// Gaussian direction rescaled so that ‖a‖₂·B_x = 1.
    GaussianNormalized { seed: u64 },
    Zero,
    Explicit(Vec<f64>),
}

impl OuterWeights {
    pub fn build(&self, p: usize, b_x: f64) -> Result<Array1<f64>> {
        if p == 0 {
            return param_err("width p must be at least 1");
        }
        let scale = if b_x > 0.0 { 1.0 / b_x } else { 1.0 };
        match self {
            OuterWeights::Normalized => Ok(Array1::from_elem(p, scale / (p as f64).sqrt())),
            OuterWeights::GaussianNormalized { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let g: Array1<f64> = (0..p).map(|_| StandardNormal.sample(&mut rng)).collect();
                let norm = g.dot(&g).sqrt();
                Ok(g.mapv(|v| v * scale / norm))
            }
            OuterWeights::Zero => Ok(Array1::zeros(p)),
            OuterWeights::Explicit(a) if a.len() == p => Ok(Array1::from(a.clone())),
            OuterWeights::Explicit(a) => Err(Error::Shape(format!("{} outer weights for width {p}", a.len()))),
        }
    }
}

/// `x ↦ aᵀσ(Wx)` with `a ∈ ℝᵖ` fixed and `W ∈ ℝ^{p×d}` trainable.
#[derive(Debug, Clone, PartialEq)]
pub struct Net {
    a: Array1<f64>,
    a_norm: f64,
    w: Array2<f64>,
    act: Activation,
}

impl Net {
    pub fn new(a: Array1<f64>, w: Array2<f64>, act: Activation) -> Result<Self> {
        let (p, d) = w.dim();
        if p == 0 || d == 0 {
            return param_err("net needs p >= 1 and d >= 1");
        }
        if a.len() != p {
            return Err(Error::Shape(format!("outer weights have length {} but W has {p} rows", a.len())));
        }
        if a.iter().chain(w.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Domain("net parameters must be finite".into()));
        }
        let a_norm = a.dot(&a).sqrt();
        Ok(Net { a, a_norm, w, act })
    }

    /// Net with `W = 0`.
    pub fn zeros(a: Array1<f64>, d: usize, act: Activation) -> Result<Self> {
        let p = a.len();
        Self::new(a, Array2::zeros((p, d)), act)
    }

    pub fn width(&self) -> usize {
        self.w.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn a(&self) -> &Array1<f64> {
        &self.a
    }

    pub fn a_norm(&self) -> f64 {
        self.a_norm
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.w
    }

    pub fn activation(&self) -> &Activation {
        &self.act
    }

    pub fn set_weights(&mut self, w: Array2<f64>) -> Result<()> {
        if w.dim() != self.w.dim() {
            return Err(Error::Shape(format!("expected {:?} weights, got {:?}", self.w.dim(), w.dim())));
        }
        self.w = w;
        Ok(())
    }

    pub fn forward(&self, x: ArrayView1<'_, f64>) -> Result<f64> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape(format!("input of length {} for a net with d = {}", x.len(), self.input_dim())));
        }
        Ok(self.forward_with(&self.w, x))
    }

    /// Output at arbitrary weights of this net's shape (unchecked).
    #[inline]
    pub fn forward_with(&self, w: &Array2<f64>, x: ArrayView1<'_, f64>) -> f64 {
        w.outer_iter()
            .zip(self.a.iter())
            .map(|(row, &aj)| aj * self.act.value(row.dot(&x)))
            .sum()
    }
}

/// 2·M_D·L·B_x²·‖a‖₂², the regularization strength above which the loss is a
/// Villani function.
pub fn lambda_c(net: &Net, data: &Dataset) -> f64 {
    let act = net.activation();
    2.0 * act.md * act.lipschitz * data.b_x().powi(2) * net.a_norm().powi(2)
}

/// Loss, gradient and Laplacian at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub grad: Array2<f64>,
    pub laplacian: f64,
}

/// The regularized empirical risk
/// `L̃(W) = (1/n) Σ ½(y_i − f(x_i))² + (λ/2)‖W‖_F²`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossSpec {
    net: Net,
    data: Dataset,
    lambda: f64,
}

impl LossSpec {
    pub fn new(net: Net, data: Dataset, lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return param_err(format!("regularizer must be finite and nonnegative, got {lambda}"));
        }
        if net.input_dim() != data.dim() {
            return Err(Error::Shape(format!(
                "net input dimension {} does not match data dimension {}",
                net.input_dim(),
                data.dim()
            )));
        }
        Ok(LossSpec { net, data, lambda })
    }

    /// Builds the net from an outer-weight rule and `W = 0`.
    pub fn with_outer(act: Activation, p: usize, outer: &OuterWeights, data: Dataset, lambda: f64) -> Result<Self> {
        let a = outer.build(p, data.b_x())?;
        let net = Net::zeros(a, data.dim(), act)?;
        Self::new(net, data, lambda)
    }

    pub fn net(&self) -> &Net {
        &self.net
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn weights(&self) -> &Array2<f64> {
        self.net.weights()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.net.weights().dim()
    }

    /// Number of trainable parameters, p·d.
    pub fn param_count(&self) -> usize {
        let (p, d) = self.shape();
        p * d
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::new(self.net.clone(), self.data.clone(), lambda)
    }

    pub fn with_weights(&self, w: Array2<f64>) -> Result<Self> {
        let mut net = self.net.clone();
        net.set_weights(w)?;
        Ok(LossSpec { net, data: self.data.clone(), lambda: self.lambda })
    }

    pub fn with_data(&self, data: Dataset) -> Result<Self> {
        Self::new(self.net.clone(), data, self.lambda)
    }

    pub fn lambda_c(&self) -> f64 {
        lambda_c(&self.net, &self.data)
    }

    /// Upper bound on the gradient-Lipschitz coefficient of the loss,
    /// `√p(‖a‖B_x B_y L'_σ + √p‖a‖²M_D²B_x² + p‖a‖²B_x²M_D'B_σ + λ)`.
    /// Needs a bounded activation.
    pub fn glip_bound(&self) -> Result<f64> {
        let act = self.net.activation();
        if !act.is_bounded() {
            return Err(Error::UnsupportedBound(format!(
                "the smoothness bound needs a bounded activation; {} is unbounded",
                act.kind.name()
            )));
        }
        let p = self.net.width() as f64;
        let an = self.net.a_norm();
        let bx = self.data.b_x();
        let by = self.data.b_y();
        Ok(p.sqrt()
            * (an * bx * by * act.l_sigma_prime
                + p.sqrt() * an * an * act.md * act.md * bx * bx
                + p * an * an * bx * bx * act.md_prime * act.b_sigma
                + self.lambda))
    }

    pub fn forward(&self, x: ArrayView1<'_, f64>) -> Result<f64> {
        self.net.forward(x)
    }

    pub fn loss(&self) -> f64 {
        self.loss_at(self.net.weights())
    }

    pub fn grad(&self) -> Array2<f64> {
        self.grad_at(self.net.weights())
    }

    pub fn laplacian(&self) -> f64 {
        self.laplacian_at(self.net.weights())
    }

    pub fn evaluate(&self) -> Evaluation {
        self.evaluate_at(self.net.weights())
    }

    fn check_shape(&self, w: &Array2<f64>) {
        assert_eq!(w.dim(), self.shape(), "weight matrix has the wrong shape");
    }

    /// `1/n Σ ½(y_i − f(x_i))²` at `w`.
    pub fn data_loss_at(&self, w: &Array2<f64>) -> f64 {
        self.check_shape(w);
        let z = self.data.xs.dot(&w.t());
        let act = self.net.activation();
        let a = self.net.a();
        let mut total = 0.0;
        for (zi, &yi) in z.outer_iter().zip(self.data.ys.iter()) {
            let f: f64 = zi.iter().zip(a.iter()).map(|(&zij, &aj)| aj * act.value(zij)).sum();
            total += 0.5 * (yi - f) * (yi - f);
        }
        total / self.data.n() as f64
    }

    pub fn loss_at(&self, w: &Array2<f64>) -> f64 {
        self.data_loss_at(w) + 0.5 * self.lambda * frobenius_sq(w)
    }

    pub fn grad_at(&self, w: &Array2<f64>) -> Array2<f64> {
        self.check_shape(w);
        let z = self.data.xs.dot(&w.t());
        let act = self.net.activation();
        let a = self.net.a();
        let inv_n = 1.0 / self.data.n() as f64;
        let mut coef = Array2::<f64>::zeros(z.dim());
        for ((zi, mut ci), &yi) in z.outer_iter().zip(coef.outer_iter_mut()).zip(self.data.ys.iter()) {
            let f: f64 = zi.iter().zip(a.iter()).map(|(&zij, &aj)| aj * act.value(zij)).sum();
            let r = f - yi;
            for ((c, &zij), &aj) in ci.iter_mut().zip(zi.iter()).zip(a.iter()) {
                *c = inv_n * aj * r * act.d1(zij);
            }
        }
        let mut g = coef.t().dot(&self.data.xs);
        g.scaled_add(self.lambda, w);
        g
    }

    /// Trace of the Hessian:
    /// `Σ_j (1/n)Σ_i [a_j²σ'(W_j·x_i)² + (f(x_i) − y_i)a_jσ''(W_j·x_i)]‖x_i‖² + λpd`.
    pub fn laplacian_at(&self, w: &Array2<f64>) -> f64 {
        self.evaluate_at(w).laplacian
    }

    pub fn evaluate_at(&self, w: &Array2<f64>) -> Evaluation {
        self.check_shape(w);
        let (p, d) = self.shape();
        let n = self.data.n();
        let z = self.data.xs.dot(&w.t());
        let act = self.net.activation();
        let a = self.net.a();
        let inv_n = 1.0 / n as f64;
        let mut coef = Array2::<f64>::zeros((n, p));
        let mut data_loss = 0.0;
        let mut lap = 0.0;
        let mut d1 = vec![0.0; p];
        let mut d2 = vec![0.0; p];
        for i in 0..n {
            let zi = z.row(i);
            let mut f = 0.0;
            for j in 0..p {
                let (v, g1, g2) = act.all(zi[j]);
                f += a[j] * v;
                d1[j] = g1;
                d2[j] = g2;
            }
            let r = f - self.data.ys[i];
            data_loss += 0.5 * r * r;
            let mut per_point = 0.0;
            for j in 0..p {
                coef[[i, j]] = inv_n * a[j] * r * d1[j];
                per_point += a[j] * a[j] * d1[j] * d1[j] + r * a[j] * d2[j];
            }
            lap += per_point * self.data.sq_norms[i];
        }
        let mut grad = coef.t().dot(&self.data.xs);
        grad.scaled_add(self.lambda, w);
        Evaluation {
            loss: data_loss * inv_n + 0.5 * self.lambda * frobenius_sq(w),
            grad,
            laplacian: lap * inv_n + self.lambda * (p * d) as f64,
        }
    }

    /// `Σ_{i∈batch} (y_i − f(x_i))·∇_W f(x_i)`, the un-normalized data part of
    /// a minibatch descent direction. Indices may repeat.
    pub fn batch_data_direction(&self, w: &Array2<f64>, batch: &[usize]) -> Array2<f64> {
        self.check_shape(w);
        let (p, _) = self.shape();
        let act = self.net.activation();
        let a = self.net.a();
        let mut out = Array2::<f64>::zeros(w.dim());
        let mut d1 = vec![0.0; p];
        for &i in batch {
            let x = self.data.xs.row(i);
            let mut f = 0.0;
            for (j, row) in w.outer_iter().enumerate() {
                let (v, g1, _) = act.all(row.dot(&x));
                f += a[j] * v;
                d1[j] = g1;
            }
            let r = self.data.ys[i] - f;
            for (j, mut orow) in out.outer_iter_mut().enumerate() {
                orow.scaled_add(r * a[j] * d1[j], &x);
            }
        }
        out
    }

    /// Mean squared error `1/m Σ (y − f(x))²` of the current-shape net at `w`
    /// on another dataset (no ½, no regularizer).
    pub fn mse_on(&self, w: &Array2<f64>, data: &Dataset) -> f64 {
        self.check_shape(w);
        let z = data.xs.dot(&w.t());
        let act = self.net.activation();
        let a = self.net.a();
        let total: f64 = z
            .outer_iter()
            .zip(data.ys.iter())
            .map(|(zi, &yi)| {
                let f: f64 = zi.iter().zip(a.iter()).map(|(&zij, &aj)| aj * act.value(zij)).sum();
                (yi - f) * (yi - f)
            })
            .sum();
        total / data.n() as f64
    }
}

pub fn frobenius_sq(w: &Array2<f64>) -> f64 {
    w.iter().map(|v| v * v).sum()
}

pub fn frobenius(w: &Array2<f64>) -> f64 {
    frobenius_sq(w).sqrt()
}
