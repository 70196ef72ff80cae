//! TOML instance description.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::conic::SolverSettings;
use crate::error::{Error, Result};
use crate::linalg::min_eig;
use crate::operators::{CostSpec, LtvSystem, Tolerances};
use crate::synthesis::{BenchmarkObjective, ConstraintSpec, DisturbanceModel};

/// Dense matrix stored row-major with its shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixSpec {
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

impl MatrixSpec {
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let (r, c) = m.shape();
        Self { shape: [r, c], data: (0..r).flat_map(|i| (0..c).map(move |j| m[(i, j)])).collect() }
    }

    pub fn to_matrix(&self, name: &str) -> Result<DMatrix<f64>> {
        let [r, c] = self.shape;
        if self.data.len() != r * c {
            return Err(Error::Config(format!(
                "{name}: shape [{r}, {c}] needs {} entries, found {}",
                r * c,
                self.data.len()
            )));
        }
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config(format!("{name}: entries must be finite")));
        }
        Ok(DMatrix::from_row_slice(r, c, &self.data))
    }
}

/// A time-invariant matrix or one matrix per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSeq {
    Constant(MatrixSpec),
    Varying(Vec<MatrixSpec>),
}

impl MatrixSeq {
    fn expand(&self, name: &str, len: usize) -> Result<Vec<DMatrix<f64>>> {
        match self {
            MatrixSeq::Constant(m) => Ok(vec![m.to_matrix(name)?; len]),
            MatrixSeq::Varying(ms) => {
                if ms.len() != len {
                    return Err(Error::Config(format!("{name}: expected {len} matrices, found {}", ms.len())));
                }
                ms.iter().enumerate().map(|(k, m)| m.to_matrix(&format!("{name}_{k}"))).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub a: MatrixSeq,
    pub b: MatrixSeq,
    pub e: MatrixSeq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostConfig {
    pub q: MatrixSeq,
    pub r: MatrixSeq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceConfig {
    /// `P` of the pointwise set `wᵀPw ≤ 1`.
    pub shape: MatrixSpec,
    /// Energy bound; defaults to `T/σmin(P)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightChoice {
    Identity,
    Benchmark,
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightConfig {
    pub kind: WeightChoice,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<MatrixSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hx: Option<MatrixSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hu: Option<MatrixSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    #[serde(default = "default_tol")]
    pub feas_tol: f64,
    #[serde(default = "default_tol")]
    pub gap_tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: u32,
}

fn default_tol() -> f64 {
    1e-8
}

fn default_max_iter() -> u32 {
    200
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { feas_tol: default_tol(), gap_tol: default_tol(), max_iter: default_max_iter() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    /// Replace `𝒪` by the constraint-satisfying clairvoyant benchmark.
    #[serde(default)]
    pub constrained: bool,
    #[serde(default)]
    pub objective: BenchmarkObjective,
    #[serde(default = "default_realisations")]
    pub realisations: usize,
}

fn default_realisations() -> usize {
    100
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self { constrained: false, objective: BenchmarkObjective::default(), realisations: default_realisations() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub horizon: usize,
    pub x0: Vec<f64>,
    pub system: SystemConfig,
    pub cost: CostConfig,
    pub disturbance: DisturbanceConfig,
    pub weight: WeightConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraints: Option<ConstraintConfig>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub benchmark: BenchmarkConfig,
}

/// Validated problem data built from a [`Config`].
#[derive(Debug, Clone)]
pub struct Instance {
    pub sys: LtvSystem,
    pub cost: CostSpec,
    pub x0: DVector<f64>,
    pub shape: DMatrix<f64>,
    pub omega: f64,
    pub weight: WeightChoice,
    pub explicit_weight: Option<DMatrix<f64>>,
    pub constraints: Option<ConstraintSpec>,
    pub settings: SolverSettings,
    pub benchmark: BenchmarkConfig,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn instance(&self) -> Result<Instance> {
        let t = self.horizon;
        if t == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        let wrap = |e: Error| match e {
            Error::Config(_) => e,
            other => Error::Config(other.to_string()),
        };
        let sys = LtvSystem::new(
            self.system.a.expand("A", t + 1)?,
            self.system.b.expand("B", t + 1)?,
            self.system.e.expand("E", t)?,
        )
        .map_err(wrap)?;
        let cost = CostSpec::new(self.cost.q.expand("Q", t + 1)?, self.cost.r.expand("R", t + 1)?, Tolerances::default())
            .map_err(wrap)?;
        cost.check_against(&sys).map_err(wrap)?;
        let (n, m, _) = sys.dims();
        let x0 = DVector::from_column_slice(&self.x0);
        let shape = self.disturbance.shape.to_matrix("disturbance.shape")?;
        DisturbanceModel::PointwiseEllipsoid { shape: shape.clone(), x0: x0.clone() }
            .validate(&sys, Tolerances::default().pd)
            .map_err(wrap)?;
        let omega = match self.disturbance.omega {
            Some(w) if w.is_finite() && w >= 0.0 => w,
            Some(w) => return Err(Error::Config(format!("disturbance.omega = {w} must be nonnegative"))),
            None => t as f64 / min_eig(&shape),
        };
        let explicit_weight = self.weight.matrix.as_ref().map(|m| m.to_matrix("weight.matrix")).transpose()?;
        if self.weight.kind == WeightChoice::Explicit && explicit_weight.is_none() {
            return Err(Error::Config("weight.kind = \"explicit\" needs weight.matrix".into()));
        }
        let constraints = match &self.constraints {
            None => None,
            Some(c) => {
                let hx = c.hx.as_ref().map(|h| h.to_matrix("constraints.hx")).transpose()?.unwrap_or_else(|| DMatrix::zeros(0, n));
                let hu = c.hu.as_ref().map(|h| h.to_matrix("constraints.hu")).transpose()?.unwrap_or_else(|| DMatrix::zeros(0, m));
                let spec = ConstraintSpec::new(hx, hu).map_err(wrap)?;
                spec.check_against(&sys).map_err(wrap)?;
                Some(spec)
            }
        };
        let s = &self.solver;
        if !(s.feas_tol > 0.0 && s.gap_tol > 0.0) {
            return Err(Error::Config("solver tolerances must be positive".into()));
        }
        if self.benchmark.realisations == 0 {
            return Err(Error::Config("benchmark.realisations must be positive".into()));
        }
        Ok(Instance {
            sys,
            cost,
            x0,
            shape,
            omega,
            weight: self.weight.kind,
            explicit_weight,
            constraints,
            settings: SolverSettings { feas_tol: s.feas_tol, gap_tol: s.gap_tol, max_iter: s.max_iter, verbose: false },
            benchmark: self.benchmark.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
horizon = 2
x0 = [0.0]

[system]
a = { shape = [1, 1], data = [1.0] }
b = { shape = [1, 1], data = [1.0] }
e = [{ shape = [1, 1], data = [1.0] }, { shape = [1, 1], data = [0.5] }]

[cost]
q = { shape = [1, 1], data = [1.0] }
r = { shape = [1, 1], data = [1.0] }

[disturbance]
shape = { shape = [1, 1], data = [4.0] }

[weight]
kind = "identity"
"#;

    #[test]
    fn minimal_config_parses() {
        let cfg = Config::parse(MINIMAL).unwrap();
        let inst = cfg.instance().unwrap();
        assert_eq!(inst.sys.horizon(), 2);
        assert_eq!(inst.sys.e(1)[(0, 0)], 0.5);
        assert!((inst.omega - 0.5).abs() < 1e-12);
        assert!(inst.constraints.is_none());
    }

    #[test]
    fn round_trip() {
        let cfg = Config::parse(MINIMAL).unwrap();
        let again = Config::parse(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn bad_q_names_time_index() {
        let text = MINIMAL.replace(
            "q = { shape = [1, 1], data = [1.0] }",
            "q = [{ shape = [1, 1], data = [1.0] }, { shape = [1, 1], data = [-1.0] }, { shape = [1, 1], data = [1.0] }]",
        );
        let err = Config::parse(&text).unwrap().instance().unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("Q_1"), "{err}");
    }

    #[test]
    fn wrong_data_length_is_reported() {
        let text = MINIMAL.replace("data = [4.0]", "data = [4.0, 1.0]");
        let err = Config::parse(&text).unwrap().instance().unwrap_err();
        assert!(err.to_string().contains("disturbance.shape"));
    }
}
