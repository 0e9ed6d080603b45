//! JSON spec files describing a loss instance:
//!
//! ```json
//! {"activation": "sigmoid", "beta": 1.0, "p": 2, "d": 2, "lambda": 0.1875,
//!  "a_mode": "normalized", "data_path": "train.csv"}
//! ```
//!
//! `data_path` is resolved relative to the spec file. Small specs may give
//! the data inline as `"data": {"x": [[...], ...], "y": [...]}` instead.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::activation::{Activation, ActivationKind};
use crate::data::read_csv;
use crate::error::{param_err, Error, Result};
use crate::model::{Dataset, LossSpec, Net, OuterWeights};

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InlineData {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecFile {
    pub activation: String,
    #[serde(default = "unit")]
    pub beta: f64,
    pub p: usize,
    pub d: usize,
    pub lambda: f64,
    #[serde(default)]
    pub a_mode: OuterWeights,
    #[serde(default)]
    pub data_path: Option<PathBuf>,
    #[serde(default)]
    pub data: Option<InlineData>,
    /// Starting `W` (row-major `p × d`); zero when absent.
    #[serde(default)]
    pub weights: Option<Vec<Vec<f64>>>,
}

impl SpecFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn activation(&self) -> Result<Activation> {
        Activation::new(ActivationKind::from_name(&self.activation, self.beta)?)
    }

    /// Builds the loss; relative `data_path`s are taken from `base_dir`.
    pub fn build(&self, base_dir: &Path) -> Result<LossSpec> {
        let data = match (&self.data_path, &self.data) {
            (Some(p), None) => read_csv(&if p.is_absolute() { p.clone() } else { base_dir.join(p) })?,
            (None, Some(inline)) => Dataset::from_rows(&inline.x, inline.y.clone())?,
            _ => return param_err("spec needs exactly one of data_path and data"),
        };
        if data.dim() != self.d {
            return Err(Error::Shape(format!("spec says d = {}, data has {} features", self.d, data.dim())));
        }
        if self.p == 0 {
            return param_err("width p must be at least 1");
        }
        let act = self.activation()?;
        let a = self.a_mode.build(self.p, data.b_x())?;
        let w = match &self.weights {
            None => Array2::zeros((self.p, self.d)),
            Some(rows) => {
                if rows.len() != self.p || rows.iter().any(|r| r.len() != self.d) {
                    return Err(Error::Shape(format!("weights must be {}x{}", self.p, self.d)));
                }
                Array2::from_shape_fn((self.p, self.d), |(j, k)| rows[j][k])
            }
        };
        LossSpec::new(Net::new(a, w, act)?, data, self.lambda)
    }
}

/// Reads and builds a spec file in one go.
pub fn load_spec(path: &Path) -> Result<LossSpec> {
    let file = SpecFile::load(path)?;
    file.build(path.parent().unwrap_or(Path::new(".")))
}
