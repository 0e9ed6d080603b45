//! Smooth scalar activations with closed-form first and second derivatives
//! and the derivative-bound constants every smoothness and Villani bound
//! in this crate is built from.

use serde::{Deserialize, Serialize};

use crate::error::{param_err, Error, Result};

/// Which nonlinearity, plus its shape parameter where it has one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ActivationKind {
    /// `1 / (1 + exp(-beta x))`
    Sigmoid { beta: f64 },
    Tanh,
    /// `ln(1 + exp(beta x)) / beta`
    SoftPlus { beta: f64 },
}

impl ActivationKind {
    pub fn name(&self) -> &'static str {
        match self {
            ActivationKind::Sigmoid { .. } => "sigmoid",
            ActivationKind::Tanh => "tanh",
            ActivationKind::SoftPlus { .. } => "softplus",
        }
    }

    /// Parses the CLI/spec-file spelling. `beta` is ignored for tanh.
    pub fn from_name(name: &str, beta: f64) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "sigmoid" => Ok(ActivationKind::Sigmoid { beta }),
            "tanh" => Ok(ActivationKind::Tanh),
            "softplus" => Ok(ActivationKind::SoftPlus { beta }),
            other => param_err(format!("unknown activation '{other}'")),
        }
    }
}

/// An activation together with its bound constants.
///
/// `b_sigma` is `+inf` for SoftPlus (it is unbounded). `l_sigma_prime`, the
/// Lipschitz constant of σ', always equals `md_prime` (sup |σ''|) for these
/// C∞ scalar functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Activation {
    pub kind: ActivationKind,
    /// sup |σ(x)|
    pub b_sigma: f64,
    /// Lipschitz constant of σ.
    pub lipschitz: f64,
    /// sup |σ'(x)|
    pub md: f64,
    /// sup |σ''(x)|
    pub md_prime: f64,
    /// Lipschitz constant of σ'.
    pub l_sigma_prime: f64,
    /// σ(0); the offset vector of the hidden layer at W = 0 is σ(0)·1_p.
    pub sigma_at_zero: f64,
}

#[inline]
fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Activation {
    /// Builds the activation and fills in its constants.
    pub fn new(kind: ActivationKind) -> Result<Self> {
        let act = match kind {
            ActivationKind::Sigmoid { beta } => {
                check_beta(beta)?;
                let md_prime = beta * beta / (6.0 * 3f64.sqrt());
                Activation {
                    kind,
                    b_sigma: 1.0,
                    lipschitz: beta / 4.0,
                    md: beta / 4.0,
                    md_prime,
                    l_sigma_prime: md_prime,
                    sigma_at_zero: 0.5,
                }
            }
            ActivationKind::Tanh => {
                let md_prime = 4.0 / (3.0 * 3f64.sqrt());
                Activation {
                    kind,
                    b_sigma: 1.0,
                    lipschitz: 1.0,
                    md: 1.0,
                    md_prime,
                    l_sigma_prime: md_prime,
                    sigma_at_zero: 0.0,
                }
            }
            ActivationKind::SoftPlus { beta } => {
                check_beta(beta)?;
                Activation {
                    kind,
                    b_sigma: f64::INFINITY,
                    lipschitz: 1.0,
                    md: 1.0,
                    md_prime: beta / 4.0,
                    l_sigma_prime: beta / 4.0,
                    sigma_at_zero: std::f64::consts::LN_2 / beta,
                }
            }
        };
        debug_assert!(act.grid_consistent(), "closed-form constants disagree with grid maxima for {kind:?}");
        Ok(act)
    }

    pub fn sigmoid(beta: f64) -> Result<Self> {
        Self::new(ActivationKind::Sigmoid { beta })
    }

    pub fn tanh() -> Self {
        Self::new(ActivationKind::Tanh).expect("tanh has no parameters")
    }

    pub fn softplus(beta: f64) -> Result<Self> {
        Self::new(ActivationKind::SoftPlus { beta })
    }

    pub fn is_bounded(&self) -> bool {
        self.b_sigma.is_finite()
    }

    /// ‖σ(0)·1_p‖₂
    pub fn offset_norm(&self, p: usize) -> f64 {
        (p as f64).sqrt() * self.sigma_at_zero.abs()
    }

    /// σ(x), rejecting non-finite input.
    pub fn eval(&self, x: f64) -> Result<f64> {
        check_finite(x)?;
        Ok(self.value(x))
    }

    /// σ'(x), rejecting non-finite input.
    pub fn eval_d1(&self, x: f64) -> Result<f64> {
        check_finite(x)?;
        Ok(self.d1(x))
    }

    /// σ''(x), rejecting non-finite input.
    pub fn eval_d2(&self, x: f64) -> Result<f64> {
        check_finite(x)?;
        Ok(self.d2(x))
    }

    /// Unchecked σ(x) for hot loops.
    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        match self.kind {
            ActivationKind::Sigmoid { beta } => logistic(beta * x),
            ActivationKind::Tanh => x.tanh(),
            ActivationKind::SoftPlus { beta } => {
                let z = beta * x;
                (z.max(0.0) + (-z.abs()).exp().ln_1p()) / beta
            }
        }
    }

    #[inline]
    pub fn d1(&self, x: f64) -> f64 {
        match self.kind {
            ActivationKind::Sigmoid { beta } => {
                let s = logistic(beta * x);
                beta * s * logistic(-beta * x)
            }
            ActivationKind::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            ActivationKind::SoftPlus { beta } => logistic(beta * x),
        }
    }

    #[inline]
    pub fn d2(&self, x: f64) -> f64 {
        match self.kind {
            ActivationKind::Sigmoid { beta } => {
                let s = logistic(beta * x);
                let c = logistic(-beta * x);
                beta * beta * s * c * (c - s)
            }
            ActivationKind::Tanh => {
                let t = x.tanh();
                -2.0 * t * (1.0 - t * t)
            }
            ActivationKind::SoftPlus { beta } => {
                let s = logistic(beta * x);
                beta * s * logistic(-beta * x)
            }
        }
    }

    /// (σ, σ', σ'') at once, sharing the exponential.
    #[inline]
    pub fn all(&self, x: f64) -> (f64, f64, f64) {
        match self.kind {
            ActivationKind::Sigmoid { beta } => {
                let s = logistic(beta * x);
                let c = logistic(-beta * x);
                let d1 = beta * s * c;
                (s, d1, beta * d1 * (c - s))
            }
            ActivationKind::Tanh => {
                let t = x.tanh();
                let d1 = 1.0 - t * t;
                (t, d1, -2.0 * t * d1)
            }
            ActivationKind::SoftPlus { beta } => {
                let s = logistic(beta * x);
                let c = logistic(-beta * x);
                (self.value(x), s, beta * s * c)
            }
        }
    }

    /// Coarse grid check that the stored sup-constants really bound and
    /// nearly attain the grid maxima of |σ'| and |σ''|.
    fn grid_consistent(&self) -> bool {
        let scale = match self.kind {
            ActivationKind::Sigmoid { beta } | ActivationKind::SoftPlus { beta } => 1.0 / beta,
            ActivationKind::Tanh => 1.0,
        };
        let n = 20_001;
        let (mut m1, mut m2) = (0.0f64, 0.0f64);
        for k in 0..n {
            let x = scale * (-20.0 + 40.0 * k as f64 / (n - 1) as f64);
            m1 = m1.max(self.d1(x).abs());
            m2 = m2.max(self.d2(x).abs());
        }
        let close = |grid: f64, stored: f64| grid <= stored * (1.0 + 1e-12) && grid >= stored * (1.0 - 1e-4);
        close(m1, self.md) && close(m2, self.md_prime)
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if beta.is_finite() && beta > 0.0 {
        Ok(())
    } else {
        param_err(format!("activation shape parameter must be positive and finite, got {beta}"))
    }
}

fn check_finite(x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("activation input must be finite, got {x}")))
    }
}
