//! Finite-volume Fokker–Planck solver for `∂_t ρ = ∇·(ρ∇L̃) + (s/2)Δρ` on a
//! truncated box `[−R, R]^dim` with `dim = p·d ∈ {1, 2}`.
//!
//! Each node carries a cell of width `h`. The flux across the face between
//! neighbours `u → v` uses exponential fitting (the Scharfetter–Gummel form of
//! Chang–Cooper weighting):
//!
//! ```text
//! J_uv = (D/h²)·[B(w)ρ_u − B(−w)ρ_v],  w = (L̃_v − L̃_u)/D,  D = s/2,
//! B(w) = w/(eʷ − 1)
//! ```
//!
//! so transition rates are positive, faces outside the box carry no flux,
//! mass is conserved exactly and the discrete Gibbs density
//! `μ_u ∝ exp(−2L̃_u/s)` is an exact stationary point (each face is in
//! detailed balance). The generator `A` is therefore similar to the symmetric
//! matrix `S = M^{-1/2} A M^{1/2}` with off-diagonals `√(r_uv·r_vu)`, which
//! is what the spectral-gap estimate works with.
//!
//! The continuum rate this approximates is called λ_s in the literature,
//! `λ_s = (1 + 3s·inf V_s·ε(R_s)) / (2(C(R_s) + 3ε(R_s)))`, but ε and C have
//! no computable recipe, so only the numerical gap is offered.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{param_err, Error, Result};
use crate::model::LossSpec;

/// Target probability mass of the Gibbs measure outside the box.
pub const TAIL_MASS: f64 = 1e-8;
/// Largest generator size accepted by [`spectral_gap`].
pub const MAX_GAP_NODES: usize = 40_000;
/// Iteration cap for the eigen-solver (outer) and each linear solve (inner).
pub const MAX_ITERATIONS: usize = 10_000;
/// χ below this is treated as converged.
pub const CHI_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Explicit,
    /// Backward Euler; unconditionally stable.
    #[default]
    Implicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitialDensity {
    #[default]
    Uniform,
    /// Isotropic Gaussian bump, renormalized on the grid.
    Gaussian { center: Vec<f64>, sd: f64 },
    /// Node values in grid order; renormalized.
    Values(Vec<f64>),
}

/// Grid-discretized `μ_s = exp(−2L̃/s)/Z_s`.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsMeasure {
    pub s: f64,
    /// Normalized so that `Σ values · h^dim = 1`.
    pub values: Vec<f64>,
    /// `Z_s = Σ exp(−2L̃/s) · h^dim` (may underflow; see `log_z`).
    pub z: f64,
    pub log_z: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Edge {
    u: usize,
    v: usize,
    /// Rate of mass moving u → v.
    uv: f64,
    /// Rate of mass moving v → u.
    vu: f64,
}

/// Density and potential on `m^dim` nodes. Node `(i, j)` of a 2-D grid is
/// stored at `i·m + j`; axis 0 is the first entry of `W` in row-major order.
#[derive(Debug, Clone)]
pub struct FpeGrid {
    pub dim: usize,
    pub half_width: f64,
    pub m: usize,
    pub h: f64,
    pub s: f64,
    pub rho: Vec<f64>,
    pub potential: Vec<f64>,
    gibbs: GibbsMeasure,
    edges: Vec<Edge>,
    /// Diagonal of the generator (minus total out-rate of each node).
    diag: Vec<f64>,
    /// Largest face difference quotient `|ΔL̃|/h`.
    max_grad: f64,
    /// `√μ` normalized to unit Euclidean norm.
    sqrt_mu: Vec<f64>,
}

fn bernoulli(w: f64) -> f64 {
    if w.abs() < 1e-5 {
        1.0 - 0.5 * w + w * w / 12.0
    } else {
        w / w.exp_m1()
    }
}

/// Smallest half-width with Gibbs mass outside `[−R, R]^dim` below
/// [`TAIL_MASS`], from `L̃ ≥ (λ/2)‖W‖²` and
/// `0 ≤ L̃ − (λ/2)‖W‖² ≤ ½(B_y + ‖a‖₁B_σ)²`:
/// `μ(outside) ≤ e^{2·osc/s}·dim·erfc(R/√(2v)) ≤ e^{2·osc/s}·dim·e^{−R²/(2v)}`
/// with `v = s/(2λ)`.
pub fn tail_radius(spec: &LossSpec, s: f64) -> Result<f64> {
    let lambda = spec.lambda();
    if lambda <= 0.0 {
        return param_err("tail radius needs lambda > 0");
    }
    if !(s > 0.0) {
        return param_err("tail radius needs s > 0");
    }
    let act = spec.net().activation();
    if !act.is_bounded() {
        return Err(Error::UnsupportedBound("tail radius needs a bounded activation; give R explicitly".into()));
    }
    let a1: f64 = spec.net().a().iter().map(|v| v.abs()).sum();
    let osc = 0.5 * (spec.data().b_y() + a1 * act.b_sigma).powi(2);
    let dim = spec.param_count() as f64;
    let v = s / (2.0 * lambda);
    Ok((2.0 * v * (2.0 * osc / s + dim.ln() - TAIL_MASS.ln())).sqrt())
}

/// Tabulates L̃ on `[−R, R]^dim` with `m` points per axis and starts from the
/// uniform density. When [`tail_radius`] is available, `R` must not be
/// smaller than it.
pub fn build_grid(spec: &LossSpec, r: f64, m: usize, s: f64) -> Result<FpeGrid> {
    let dim = spec.param_count();
    if !(1..=2).contains(&dim) {
        return Err(Error::UnsupportedDimension(dim));
    }
    if !(s.is_finite() && s > 0.0) {
        return param_err(format!("s must be positive, got {s}"));
    }
    if !(r.is_finite() && r > 0.0) {
        return param_err(format!("half-width must be positive, got {r}"));
    }
    if m < 3 {
        return param_err("need at least 3 points per axis");
    }
    if let Ok(r_min) = tail_radius(spec, s) {
        if r < r_min {
            return param_err(format!("half-width {r} leaves Gibbs tail mass above {TAIL_MASS}; need R >= {r_min}"));
        }
    }
    let h = 2.0 * r / (m - 1) as f64;
    let coord = |i: usize| -r + h * i as f64;
    let shape = spec.shape();
    let nodes = m.pow(dim as u32);
    let potential: Vec<f64> = (0..nodes)
        .map(|k| {
            let flat: Vec<f64> = if dim == 1 { vec![coord(k)] } else { vec![coord(k / m), coord(k % m)] };
            let w = Array2::from_shape_vec(shape, flat).expect("p·d matches grid dimension");
            spec.loss_at(&w)
        })
        .collect();
    if potential.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("loss is not finite on the grid".into()));
    }

    let diff = 0.5 * s;
    let scale = diff / (h * h);
    let mut edges = Vec::with_capacity(dim * nodes);
    let mut push = |u: usize, v: usize| {
        let w = (potential[v] - potential[u]) / diff;
        edges.push(Edge { u, v, uv: scale * bernoulli(w), vu: scale * bernoulli(-w) });
    };
    if dim == 1 {
        for i in 0..m - 1 {
            push(i, i + 1);
        }
    } else {
        for i in 0..m {
            for j in 0..m {
                let k = i * m + j;
                if j + 1 < m {
                    push(k, k + 1);
                }
                if i + 1 < m {
                    push(k, k + m);
                }
            }
        }
    }
    let mut diag = vec![0.0; nodes];
    let mut max_grad = 0.0f64;
    for e in &edges {
        diag[e.u] -= e.uv;
        diag[e.v] -= e.vu;
        max_grad = max_grad.max((potential[e.v] - potential[e.u]).abs() / h);
    }

    let cell = h.powi(dim as i32);
    let l_min = potential.iter().cloned().fold(f64::INFINITY, f64::min);
    let shifted: Vec<f64> = potential.iter().map(|l| (-2.0 * (l - l_min) / s).exp()).collect();
    let mass: f64 = shifted.iter().sum::<f64>() * cell;
    let values: Vec<f64> = shifted.iter().map(|v| v / mass).collect();
    let log_z = mass.ln() - 2.0 * l_min / s;
    let gibbs = GibbsMeasure { s, values, z: log_z.exp(), log_z };
    let root: Vec<f64> = potential.iter().map(|l| (-(l - l_min) / s).exp()).collect();
    let norm = root.iter().map(|v| v * v).sum::<f64>().sqrt();
    let sqrt_mu = root.iter().map(|v| v / norm).collect();

    let mut grid = FpeGrid {
        dim,
        half_width: r,
        m,
        h,
        s,
        rho: Vec::new(),
        potential,
        gibbs,
        edges,
        diag,
        max_grad,
        sqrt_mu,
    };
    grid.set_density(&InitialDensity::Uniform)?;
    Ok(grid)
}

impl FpeGrid {
    pub fn nodes(&self) -> usize {
        self.rho.len().max(self.potential.len())
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    pub fn coordinate(&self, i: usize) -> f64 {
        -self.half_width + self.h * i as f64
    }

    /// Parameter-space point of node `k`.
    pub fn point(&self, k: usize) -> Vec<f64> {
        if self.dim == 1 {
            vec![self.coordinate(k)]
        } else {
            vec![self.coordinate(k / self.m), self.coordinate(k % self.m)]
        }
    }

    pub fn gibbs(&self) -> &GibbsMeasure {
        &self.gibbs
    }

    pub fn mass(&self) -> f64 {
        self.rho.iter().sum::<f64>() * self.cell_volume()
    }

    pub fn set_density(&mut self, init: &InitialDensity) -> Result<()> {
        let nodes = self.potential.len();
        let raw: Vec<f64> = match init {
            InitialDensity::Uniform => vec![1.0; nodes],
            InitialDensity::Gaussian { center, sd } => {
                if center.len() != self.dim || !(*sd > 0.0) {
                    return param_err("Gaussian density needs a centre of grid dimension and sd > 0");
                }
                (0..nodes)
                    .map(|k| {
                        let r2: f64 = self.point(k).iter().zip(center).map(|(x, c)| (x - c) * (x - c)).sum();
                        (-0.5 * r2 / (sd * sd)).exp()
                    })
                    .collect()
            }
            InitialDensity::Values(v) => {
                if v.len() != nodes {
                    return Err(Error::Shape(format!("density has {} values, grid has {nodes} nodes", v.len())));
                }
                if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                    return param_err("density values must be finite and nonnegative");
                }
                v.clone()
            }
        };
        let mass: f64 = raw.iter().sum::<f64>() * self.cell_volume();
        if !(mass > 0.0 && mass.is_finite()) {
            return param_err("initial density has no mass on the grid");
        }
        self.rho = raw.into_iter().map(|x| x / mass).collect();
        Ok(())
    }

    /// Largest stable explicit step: the smaller of
    /// `h²/(2·dim·D + h·max|∇L̃|)` and `1/max|A_uu|` (positivity).
    pub fn explicit_dt_limit(&self) -> f64 {
        let diff = 0.5 * self.s;
        let classic = self.h * self.h / (2.0 * self.dim as f64 * diff + self.h * self.max_grad);
        let max_out = self.diag.iter().fold(0.0f64, |acc, d| acc.max(d.abs()));
        classic.min(1.0 / max_out)
    }

    /// `out = A·x`.
    pub fn apply_generator(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for e in &self.edges {
            let flux = e.uv * x[e.u] - e.vu * x[e.v];
            out[e.u] -= flux;
            out[e.v] += flux;
        }
    }

    /// `out = −S·x` for the symmetrized generator.
    fn apply_neg_symmetric(&self, x: &[f64], out: &mut [f64]) {
        for (o, (d, xi)) in out.iter_mut().zip(self.diag.iter().zip(x)) {
            *o = -d * xi;
        }
        for e in &self.edges {
            let c = (e.uv * e.vu).sqrt();
            out[e.u] -= c * x[e.v];
            out[e.v] -= c * x[e.u];
        }
    }

    /// Weighted distance `χ = (Σ (ρ − μ)²/μ · h^dim)^{1/2}` to the discrete
    /// Gibbs density.
    pub fn chi(&self) -> f64 {
        let sum: f64 = self
            .rho
            .iter()
            .zip(&self.gibbs.values)
            .map(|(r, mu)| (r - mu) * (r - mu) / mu)
            .sum();
        (sum * self.cell_volume()).sqrt()
    }
}

/// Advances `grid.rho` by `dt`. Explicit steps beyond
/// [`FpeGrid::explicit_dt_limit`] are rejected.
pub fn step_fpe(grid: &mut FpeGrid, dt: f64, scheme: Scheme) -> Result<()> {
    if !(dt.is_finite() && dt > 0.0) {
        return param_err(format!("dt must be positive, got {dt}"));
    }
    match scheme {
        Scheme::Explicit => {
            let limit = grid.explicit_dt_limit();
            if dt > limit {
                return param_err(format!("explicit step {dt} exceeds stability limit {limit}"));
            }
            let mut out = vec![0.0; grid.rho.len()];
            grid.apply_generator(&grid.rho, &mut out);
            for (r, o) in grid.rho.iter_mut().zip(out) {
                *r += dt * o;
            }
        }
        Scheme::Implicit if grid.dim == 1 => implicit_tridiagonal(grid, dt)?,
        Scheme::Implicit => implicit_cg(grid, dt)?,
    }
    Ok(())
}

/// `(I − dt·A)ρ' = ρ` by the Thomas algorithm. `I − dt·A` is a column-wise
/// diagonally dominant M-matrix, so no pivoting is needed.
fn implicit_tridiagonal(grid: &mut FpeGrid, dt: f64) -> Result<()> {
    let n = grid.rho.len();
    let mut lower = vec![0.0; n];
    let mut upper = vec![0.0; n];
    let diag: Vec<f64> = grid.diag.iter().map(|d| 1.0 - dt * d).collect();
    for (k, e) in grid.edges.iter().enumerate() {
        // Row k gains from k+1 at rate vu; row k+1 gains from k at rate uv.
        upper[k] = -dt * e.vu;
        lower[k + 1] = -dt * e.uv;
    }
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut b = diag[0];
    c[0] = upper[0] / b;
    d[0] = grid.rho[0] / b;
    for i in 1..n {
        b = diag[i] - lower[i] * c[i - 1];
        if b.abs() < f64::MIN_POSITIVE {
            return Err(Error::Numerical("singular tridiagonal system".into()));
        }
        c[i] = upper[i] / b;
        d[i] = (grid.rho[i] - lower[i] * d[i - 1]) / b;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    grid.rho = d;
    Ok(())
}

/// `(I − dt·S)u' = u` with `u = ρ/√μ` by conjugate gradients.
fn implicit_cg(grid: &mut FpeGrid, dt: f64) -> Result<()> {
    let root = &grid.sqrt_mu;
    let rhs: Vec<f64> = grid.rho.iter().zip(root).map(|(r, q)| r / q).collect();
    let x0 = rhs.clone();
    let u = conjugate_gradient(
        |x, out| {
            grid.apply_neg_symmetric(x, out);
            for (o, xi) in out.iter_mut().zip(x) {
                *o = xi + dt * *o;
            }
        },
        &rhs,
        x0,
        1e-14,
    )?;
    grid.rho = u.iter().zip(root).map(|(v, q)| (v * q).max(0.0)).collect();
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn conjugate_gradient<F>(apply: F, b: &[f64], mut x: Vec<f64>, rel_tol: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let mut ax = vec![0.0; n];
    apply(&x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let target = rel_tol * rel_tol * dot(b, b).max(f64::MIN_POSITIVE);
    let mut ap = vec![0.0; n];
    for _ in 0..MAX_ITERATIONS {
        if rr <= target {
            return Ok(x);
        }
        apply(&p, &mut ap);
        let alpha = rr / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    if rr <= target * 1e4 {
        return Ok(x);
    }
    Err(Error::Numerical(format!("conjugate gradients did not converge in {MAX_ITERATIONS} iterations")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub rate: f64,
    pub r_squared: f64,
    pub times: Vec<f64>,
    /// χ(t) at `times`, starting with the initial density.
    pub chi_series: Vec<f64>,
    pub masses: Vec<f64>,
    /// χ fell below [`CHI_FLOOR`] before the nominal fit window; the fit used
    /// the points just before the crossing instead.
    pub early_convergence: bool,
}

/// Evolves the grid to `t_max` in steps of `dt`, records χ and fits
/// `log χ = c − rate·t` on the second half of the run.
pub fn decay_rate(grid: &mut FpeGrid, t_max: f64, dt: f64, scheme: Scheme) -> Result<DecayFit> {
    if !(t_max > 0.0 && dt > 0.0 && dt < t_max) {
        return param_err("need 0 < dt < t_max");
    }
    let steps = (t_max / dt).round() as usize;
    let mut times = vec![0.0];
    let mut chi = vec![grid.chi()];
    let mut masses = vec![grid.mass()];
    for k in 1..=steps {
        step_fpe(grid, dt, scheme)?;
        times.push(k as f64 * dt);
        chi.push(grid.chi());
        masses.push(grid.mass());
    }
    let t_end = times[steps];
    let crossing = chi.iter().position(|&c| c < CHI_FLOOR);
    let (lo, hi, early) = match crossing {
        Some(k) if times[k] <= 0.5 * t_end => (times[k] * 0.5, times[k], true),
        Some(k) => (0.5 * t_end, times[k], false),
        None => (0.5 * t_end, f64::INFINITY, false),
    };
    let window: Vec<(f64, f64)> = times
        .iter()
        .zip(&chi)
        .filter(|(&t, &c)| t >= lo && t < hi && c > 0.0)
        .map(|(&t, &c)| (t, c.ln()))
        .collect();
    if window.len() < 3 {
        return Err(Error::Numerical("too few points in the decay fit window".into()));
    }
    let (slope, r_squared) = linear_fit(&window);
    Ok(DecayFit { rate: -slope, r_squared, times, chi_series: chi, masses, early_convergence: early })
}

/// Least-squares slope and coefficient of determination.
fn linear_fit(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    (slope, r2)
}

/// Magnitude of the second-smallest eigenvalue of the discrete generator.
///
/// Works on `K = −S + c·qqᵀ` with q the normalized `√μ` (the null vector of
/// `S`) and `c` a Gershgorin bound on the spectrum of `−S`, which moves the
/// zero eigenvalue to the top; inverse power iteration on `K` then converges
/// to the gap. Each solve is a conjugate-gradient run.
pub fn spectral_gap(grid: &FpeGrid) -> Result<f64> {
    let n = grid.potential.len();
    if n > MAX_GAP_NODES {
        return param_err(format!("generator of size {n} exceeds {MAX_GAP_NODES}"));
    }
    let q = &grid.sqrt_mu;
    let shift = 2.0 * grid.diag.iter().fold(0.0f64, |acc, d| acc.max(d.abs()));
    let apply = |x: &[f64], out: &mut [f64]| {
        grid.apply_neg_symmetric(x, out);
        let proj = dot(q, x) * shift;
        for (o, qi) in out.iter_mut().zip(q) {
            *o += proj * qi;
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    deflate_normalize(&mut x, q);
    let mut kx = vec![0.0; n];
    let mut estimate = f64::NAN;
    for _ in 0..MAX_ITERATIONS {
        let mut y = conjugate_gradient(apply, &x, x.clone(), 1e-12)?;
        deflate_normalize(&mut y, q);
        apply(&y, &mut kx);
        let rayleigh = dot(&y, &kx);
        let residual = kx.iter().zip(&y).map(|(k, v)| (k - rayleigh * v).powi(2)).sum::<f64>().sqrt();
        x = y;
        if (rayleigh - estimate).abs() <= 1e-11 * rayleigh.abs() && residual <= 1e-6 * rayleigh.abs() {
            return Ok(rayleigh);
        }
        estimate = rayleigh;
    }
    Err(Error::Numerical(format!("inverse iteration did not converge in {MAX_ITERATIONS} iterations")))
}

fn deflate_normalize(x: &mut [f64], q: &[f64]) {
    let c = dot(x, q);
    for (xi, qi) in x.iter_mut().zip(q) {
        *xi -= c * qi;
    }
    let norm = dot(x, x).sqrt();
    for xi in x.iter_mut() {
        *xi /= norm;
    }
}
