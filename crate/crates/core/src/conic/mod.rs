//! Conic programs over a flat variable vector and the solver backend contract.
//!
//! A program minimises `cᵀx` subject to affine equalities, affine
//! inequalities (`≥ 0`), second-order cones `‖tail(x)‖₂ ≤ head(x)` and linear
//! matrix inequalities `F₀ + Σᵢ xᵢFᵢ ⪰ 0`. LMIs are stored as sparse upper
//! triangular triplets; symmetry is enforced when entries are inserted.

mod clarabel_backend;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::min_eig;

pub use clarabel_backend::ClarabelBackend;

/// `Σ coefᵢ·x_{varᵢ} + constant`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl Affine {
    pub fn constant(c: f64) -> Self {
        Self { terms: Vec::new(), constant: c }
    }

    pub fn var(v: usize) -> Self {
        Self { terms: vec![(v, 1.0)], constant: 0.0 }
    }

    pub fn with_term(mut self, v: usize, coef: f64) -> Self {
        self.terms.push((v, coef));
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(v, c)| c * x[v]).sum::<f64>()
    }

    pub fn is_constant(&self) -> bool {
        self.terms.iter().all(|&(_, c)| c == 0.0)
    }
}

/// `‖tail(x)‖₂ ≤ head(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocConstraint {
    pub head: Affine,
    pub tail: Vec<Affine>,
}

/// One upper-triangular LMI coefficient; `var = None` marks the constant `F₀`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmiEntry {
    pub var: Option<usize>,
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmiConstraint {
    pub dim: usize,
    pub entries: Vec<LmiEntry>,
}

impl LmiConstraint {
    pub fn new(dim: usize) -> Self {
        Self { dim, entries: Vec::new() }
    }

    fn push(&mut self, var: Option<usize>, i: usize, j: usize, value: f64) {
        if value != 0.0 {
            let (row, col) = if i <= j { (i, j) } else { (j, i) };
            self.entries.push(LmiEntry { var, row, col, value });
        }
    }

    /// Adds `value` at `(i, j)` and its mirror `(j, i)`.
    pub fn add(&mut self, var: Option<usize>, i: usize, j: usize, value: f64) -> Result<()> {
        if i >= self.dim || j >= self.dim {
            return Err(Error::Dimension(format!("LMI entry ({i}, {j}) outside dimension {}", self.dim)));
        }
        self.push(var, i, j, value);
        Ok(())
    }

    /// Places a symmetric block on the diagonal at offset `off`.
    pub fn add_diag_block(&mut self, var: Option<usize>, off: usize, block: &DMatrix<f64>) -> Result<()> {
        let k = block.nrows();
        if block.ncols() != k || off + k > self.dim {
            return Err(Error::Dimension(format!("diagonal block {:?} at {off} exceeds LMI dimension {}", block.shape(), self.dim)));
        }
        let asym = (block - block.transpose()).amax();
        if asym > 1e-10 * block.amax().max(1.0) {
            return Err(Error::Invalid(format!("LMI diagonal block asymmetry {asym:.3e}")));
        }
        for j in 0..k {
            for i in 0..=j {
                self.push(var, off + i, off + j, 0.5 * (block[(i, j)] + block[(j, i)]));
            }
        }
        Ok(())
    }

    /// Places `block` at `(r0, c0)` strictly off the diagonal and mirrors it.
    pub fn add_offdiag_block(&mut self, var: Option<usize>, r0: usize, c0: usize, block: &DMatrix<f64>) -> Result<()> {
        let (r, c) = block.shape();
        if r0 + r > self.dim || c0 + c > self.dim {
            return Err(Error::Dimension(format!("block {:?} at ({r0}, {c0}) exceeds LMI dimension {}", block.shape(), self.dim)));
        }
        if r0 < c0 + c && c0 < r0 + r {
            return Err(Error::Invalid("off-diagonal block overlaps the diagonal".into()));
        }
        for i in 0..r {
            for j in 0..c {
                self.push(var, r0 + i, c0 + j, block[(i, j)]);
            }
        }
        Ok(())
    }

    /// Dense `F(x) = F₀ + Σᵢ xᵢFᵢ`.
    pub fn evaluate(&self, x: &[f64]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.dim, self.dim);
        for e in &self.entries {
            let scale = e.var.map_or(1.0, |v| x[v]);
            out[(e.row, e.col)] += scale * e.value;
            if e.row != e.col {
                out[(e.col, e.row)] += scale * e.value;
            }
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConicProgram {
    labels: Vec<String>,
    objective: Vec<f64>,
    pub equalities: Vec<Affine>,
    pub inequalities: Vec<Affine>,
    pub socs: Vec<SocConstraint>,
    pub lmis: Vec<LmiConstraint>,
}

impl ConicProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_variable(&mut self, label: impl Into<String>) -> usize {
        self.labels.push(label.into());
        self.objective.push(0.0);
        self.labels.len() - 1
    }

    pub fn add_variables(&mut self, count: usize, label: &str) -> std::ops::Range<usize> {
        let start = self.labels.len();
        for i in 0..count {
            self.add_variable(format!("{label}[{i}]"));
        }
        start..start + count
    }

    pub fn num_vars(&self) -> usize {
        self.labels.len()
    }

    pub fn label(&self, v: usize) -> &str {
        &self.labels[v]
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn set_objective(&mut self, v: usize, coef: f64) -> Result<()> {
        if !coef.is_finite() {
            return Err(Error::Invalid("objective coefficient must be finite".into()));
        }
        self.check_var(v)?;
        self.objective[v] = coef;
        Ok(())
    }

    fn check_var(&self, v: usize) -> Result<()> {
        if v >= self.num_vars() {
            return Err(Error::Dimension(format!("variable {v} out of range ({} declared)", self.num_vars())));
        }
        Ok(())
    }

    fn check_affine(&self, a: &Affine) -> Result<()> {
        for &(v, c) in &a.terms {
            self.check_var(v)?;
            if !c.is_finite() {
                return Err(Error::Invalid("non-finite coefficient".into()));
            }
        }
        Ok(())
    }

    pub fn add_equality(&mut self, a: Affine) -> Result<()> {
        self.check_affine(&a)?;
        self.equalities.push(a);
        Ok(())
    }

    /// `a(x) ≥ 0`.
    pub fn add_nonneg(&mut self, a: Affine) -> Result<()> {
        self.check_affine(&a)?;
        self.inequalities.push(a);
        Ok(())
    }

    pub fn add_soc(&mut self, head: Affine, tail: Vec<Affine>) -> Result<()> {
        self.check_affine(&head)?;
        for t in &tail {
            self.check_affine(t)?;
        }
        self.socs.push(SocConstraint { head, tail });
        Ok(())
    }

    pub fn add_lmi(&mut self, lmi: LmiConstraint) -> Result<()> {
        for e in &lmi.entries {
            if let Some(v) = e.var {
                self.check_var(v)?;
            }
            if !e.value.is_finite() {
                return Err(Error::Invalid("non-finite LMI coefficient".into()));
            }
        }
        self.lmis.push(lmi);
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.equalities.is_empty() && self.inequalities.is_empty() && self.socs.is_empty() && self.lmis.is_empty()
    }

    /// Structured text dump (JSON, sparse triplets per constraint).
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("conic program serialises")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverStatus {
    Optimal,
    NearOptimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

impl SolverStatus {
    pub fn is_solved(self) -> bool {
        matches!(self, SolverStatus::Optimal | SolverStatus::NearOptimal)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub feas_tol: f64,
    pub gap_tol: f64,
    pub max_iter: u32,
    pub verbose: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { feas_tol: 1e-8, gap_tol: 1e-8, max_iter: 200, verbose: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub status: SolverStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: u32,
    /// Seconds.
    pub solve_time: f64,
    pub message: Option<String>,
}

impl SolveReport {
    pub fn failure(num_vars: usize, message: impl Into<String>) -> Self {
        Self {
            status: SolverStatus::NumericalFailure,
            x: vec![0.0; num_vars],
            objective: f64::NAN,
            primal_residual: f64::NAN,
            dual_residual: f64::NAN,
            iterations: 0,
            solve_time: 0.0,
            message: Some(message.into()),
        }
    }
}

/// A conic solver. Implementations must not share mutable state across solves.
pub trait ConicBackend {
    fn name(&self) -> &'static str;
    fn solve(&self, program: &ConicProgram, settings: &SolverSettings) -> SolveReport;
}

/// Solves with the reference backend.
pub fn solve(program: &ConicProgram, settings: &SolverSettings) -> SolveReport {
    ClarabelBackend.solve(program, settings)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    Dimension,
    Equality,
    Inequality,
    Soc,
    Lmi,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintResidual {
    pub kind: ConstraintKind,
    pub index: usize,
    /// Amount of violation; zero when satisfied.
    pub residual: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub entries: Vec<ConstraintResidual>,
}

impl ValidationReport {
    pub fn max_residual(&self) -> f64 {
        self.entries.iter().map(|e| e.residual).fold(0.0, f64::max)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.entries.iter().all(|e| e.residual <= tol)
    }

    pub fn violations(&self, tol: f64) -> impl Iterator<Item = &ConstraintResidual> {
        self.entries.iter().filter(move |e| e.residual > tol)
    }
}

/// Recomputes every constraint residual of `x` without touching a backend.
pub fn validate_solution(program: &ConicProgram, x: &[f64]) -> ValidationReport {
    let mut entries = Vec::new();
    if x.len() != program.num_vars() {
        entries.push(ConstraintResidual { kind: ConstraintKind::Dimension, index: 0, residual: f64::INFINITY });
        return ValidationReport { entries };
    }
    for (i, a) in program.equalities.iter().enumerate() {
        entries.push(ConstraintResidual { kind: ConstraintKind::Equality, index: i, residual: a.eval(x).abs() });
    }
    for (i, a) in program.inequalities.iter().enumerate() {
        entries.push(ConstraintResidual { kind: ConstraintKind::Inequality, index: i, residual: (-a.eval(x)).max(0.0) });
    }
    for (i, s) in program.socs.iter().enumerate() {
        let norm = s.tail.iter().map(|t| t.eval(x).powi(2)).sum::<f64>().sqrt();
        entries.push(ConstraintResidual { kind: ConstraintKind::Soc, index: i, residual: (norm - s.head.eval(x)).max(0.0) });
    }
    for (i, l) in program.lmis.iter().enumerate() {
        let lo = if l.dim == 0 { 0.0 } else { min_eig(&l.evaluate(x)) };
        entries.push(ConstraintResidual { kind: ConstraintKind::Lmi, index: i, residual: (-lo).max(0.0) });
    }
    ValidationReport { entries }
}
