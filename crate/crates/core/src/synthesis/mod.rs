//! Conic programs for generalised regret, H2 and H∞ synthesis over achievable
//! system responses.
//!
//! Every program is linear in the response parameter `Θ`, the level `μ` and
//! the S-procedure multipliers. Regret LMIs are assembled in Schur-complement
//! form with blocks ordered `[x0 row | w rows | 𝒞^{1/2}Φ rows]`.

mod constraints;
mod param;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use constraints::{
    add_constraint_rows, robust_row_values, worst_case_row_disturbance, ConstraintRow, ConstraintSpec,
    RobustConstraints, Signal,
};
pub use param::{AffineMatrix, ResponseParam};

use crate::conic::{self, Affine, ConicProgram, LmiConstraint, SolverSettings, SolverStatus};
use crate::error::{Error, Result};
use crate::linalg::{condition_number, max_eig, min_eig, quad, symmetrize, COND_LIMIT};
use crate::operators::{build_stacked, noncausal_cost_operator, BenchmarkOperator, CostSpec, LtvSystem, StackedOperators};
use crate::slp::{recover_controller, Causality, Controller, SystemResponse};

/// Disturbance set the regret guarantee is taken over.
#[derive(Debug, Clone, PartialEq)]
pub enum DisturbanceModel {
    /// `‖w‖² ≤ ω` with known `x0`.
    EnergyBall { omega: f64, x0: DVector<f64> },
    ZeroInit,
    AdversarialInit,
    /// `w_kᵀPw_k ≤ 1` for every `k` with known `x0`.
    PointwiseEllipsoid { shape: DMatrix<f64>, x0: DVector<f64> },
}

impl DisturbanceModel {
    pub fn validate(&self, sys: &LtvSystem, tol_pd: f64) -> Result<()> {
        let (n, _, p) = sys.dims();
        let check_x0 = |x0: &DVector<f64>| {
            if x0.len() != n {
                return Err(Error::Dimension(format!("x0 has length {}, expected {n}", x0.len())));
            }
            Ok(())
        };
        match self {
            DisturbanceModel::EnergyBall { omega, x0 } => {
                if !(omega.is_finite() && *omega >= 0.0) {
                    return Err(Error::Invalid(format!("energy bound ω = {omega} must be nonnegative")));
                }
                check_x0(x0)
            }
            DisturbanceModel::PointwiseEllipsoid { shape, x0 } => {
                if shape.shape() != (p, p) {
                    return Err(Error::Dimension(format!("P is {:?}, expected {p}×{p}", shape.shape())));
                }
                if (shape - shape.transpose()).amax() > 1e-10 * shape.amax().max(1.0) {
                    return Err(Error::Invalid("P is not symmetric".into()));
                }
                let lo = min_eig(&symmetrize(shape));
                if lo < tol_pd {
                    return Err(Error::NotPsd(format!("P min eigenvalue {lo:.3e} below {tol_pd:.1e}")));
                }
                check_x0(x0)
            }
            DisturbanceModel::ZeroInit | DisturbanceModel::AdversarialInit => Ok(()),
        }
    }
}

/// `𝒫_i`: `P` on the `i`-th (1-based) `p×p` diagonal block of the `pT` disturbance space.
pub fn embed_shape(shape: &DMatrix<f64>, horizon: usize, i: usize) -> DMatrix<f64> {
    let p = shape.nrows();
    let mut out = DMatrix::zeros(p * horizon, p * horizon);
    out.view_mut((p * (i - 1), p * (i - 1)), (p, p)).copy_from(shape);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightKind {
    /// Dynamic regret.
    Identity,
    /// Competitive ratio, `𝒲 = 𝒪`.
    Benchmark,
    Custom,
}

/// Positive definite disturbance weight `𝒲` over `δ = [x0; w]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretWeight {
    w: DMatrix<f64>,
    n: usize,
    kind: WeightKind,
    regularisation: Option<f64>,
}

impl RegretWeight {
    pub fn identity(sys: &LtvSystem) -> Self {
        let d = sys.delta_dim();
        Self { w: DMatrix::identity(d, d), n: sys.dims().0, kind: WeightKind::Identity, regularisation: None }
    }

    /// `𝒲 = 𝒪`, shifted to `𝒪 + εI` with `ε = 1e-8·trace(𝒪)/dim` when `𝒪` is singular.
    pub fn benchmark(o: &BenchmarkOperator) -> Self {
        let m = o.matrix();
        let d = m.nrows();
        let hi = max_eig(m);
        let lo = min_eig(m);
        let mut w = m.clone();
        let mut regularisation = None;
        if lo < 1e-10 * hi || hi <= 0.0 {
            let tr = m.trace();
            let eps = if tr > 0.0 { 1e-8 * tr / d as f64 } else { 1e-8 };
            for i in 0..d {
                w[(i, i)] += eps;
            }
            regularisation = Some(eps);
        }
        Self { w, n: o.state_dim(), kind: WeightKind::Benchmark, regularisation }
    }

    pub fn custom(w: DMatrix<f64>, sys: &LtvSystem, tol_pd: f64) -> Result<Self> {
        let d = sys.delta_dim();
        if w.shape() != (d, d) {
            return Err(Error::Dimension(format!("weight is {:?}, expected {d}×{d}", w.shape())));
        }
        if (&w - w.transpose()).amax() > 1e-10 * w.amax().max(1.0) {
            return Err(Error::Invalid("weight is not symmetric".into()));
        }
        let w = symmetrize(&w);
        let lo = min_eig(&w);
        if lo < tol_pd {
            return Err(Error::NotPsd(format!("weight min eigenvalue {lo:.3e} below {tol_pd:.1e}")));
        }
        Ok(Self { w, n: sys.dims().0, kind: WeightKind::Custom, regularisation: None })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn kind(&self) -> WeightKind {
        self.kind
    }

    /// `ε` added to a singular benchmark weight.
    pub fn regularisation(&self) -> Option<f64> {
        self.regularisation
    }

    pub fn dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn w1(&self) -> DMatrix<f64> {
        self.w.view((0, 0), (self.n, self.n)).into_owned()
    }

    pub fn w2(&self) -> DMatrix<f64> {
        let d = self.dim() - self.n;
        self.w.view((self.n, 0), (d, self.n)).into_owned()
    }

    pub fn w3(&self) -> DMatrix<f64> {
        let d = self.dim() - self.n;
        self.w.view((self.n, self.n), (d, d)).into_owned()
    }

    pub fn condition(&self) -> f64 {
        condition_number(&self.w)
    }
}

/// Scalarisation of the matrix cost `Φᵀ𝒞Φ` for the constrained benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchmarkObjective {
    #[default]
    Frobenius,
    Operator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthesisKind {
    EnergyBall,
    ZeroInit,
    AdversarialInit,
    Pointwise,
    H2,
    Hinf,
    ReferenceDynamicRegret,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub num_vars: usize,
    pub constraint_rows: usize,
    /// Largest cone violation of the returned point, re-evaluated in `f64`.
    pub max_cone_residual: f64,
    pub weight_regularisation: Option<f64>,
    pub message: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SynthesisResult {
    pub kind: SynthesisKind,
    pub status: SolverStatus,
    /// Only set when the solver reports a solution.
    pub mu: Option<f64>,
    pub lambdas: Vec<f64>,
    pub phi: Option<SystemResponse>,
    pub controller: Option<Controller>,
    pub objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: u32,
    pub solve_time: f64,
    pub diagnostics: Diagnostics,
}

impl SynthesisResult {
    pub fn is_solved(&self) -> bool {
        self.status.is_solved()
    }

    /// `μ`, or an error describing why there is none.
    pub fn level(&self) -> Result<f64> {
        self.mu.ok_or_else(|| self.not_solved())
    }

    pub fn response(&self) -> Result<&SystemResponse> {
        self.phi.as_ref().ok_or_else(|| self.not_solved())
    }

    pub fn gain(&self) -> Result<&Controller> {
        self.controller.as_ref().ok_or_else(|| self.not_solved())
    }

    fn not_solved(&self) -> Error {
        let msg = format!("{:?} synthesis ended with status {:?}", self.kind, self.status);
        if self.status == SolverStatus::Infeasible {
            Error::Infeasible(msg)
        } else {
            Error::NotSolved(msg)
        }
    }
}

/// How the reported level is read off the solution.
enum Level {
    Var(usize),
    /// Reported as the square of the variable.
    Squared(usize),
}

/// Schur-complement regret LMI `[head; body; tail]` with an identity in the last block.
struct RegretLmi {
    /// `(1,1)`, `(2,1)` and `(3,1)` blocks; absent for zero-initial-state forms.
    head: Option<(AffineMatrix, AffineMatrix, AffineMatrix)>,
    body: AffineMatrix,
    tail: AffineMatrix,
}

impl RegretLmi {
    fn build(&self) -> Result<LmiConstraint> {
        let h = usize::from(self.head.is_some());
        let d = self.body.shape().0;
        let r = self.tail.shape().0;
        let mut lmi = LmiConstraint::new(h + d + r);
        if let Some((s11, s21, s31)) = &self.head {
            s11.place_diag(&mut lmi, 0)?;
            if d > 0 {
                s21.place_offdiag(&mut lmi, h, 0)?;
            }
            s31.place_offdiag(&mut lmi, h + d, 0)?;
        }
        if d > 0 {
            self.body.place_diag(&mut lmi, h)?;
            self.tail.place_offdiag(&mut lmi, h + d, h)?;
        }
        lmi.add_diag_block(None, h + d, &DMatrix::identity(r, r))?;
        Ok(lmi)
    }
}

fn check_condition(m: &DMatrix<f64>, what: &str) -> Result<()> {
    let cond = condition_number(m);
    if !cond.is_finite() || cond > COND_LIMIT {
        return Err(Error::IllConditioned { what: what.into(), cond, limit: COND_LIMIT });
    }
    Ok(())
}

fn scalar(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

fn column(v: DVector<f64>) -> DMatrix<f64> {
    let len = v.len();
    DMatrix::from_column_slice(len, 1, v.as_slice())
}

/// Assembles and solves the synthesis programs for one system and cost.
#[derive(Debug, Clone)]
pub struct Synthesizer<'a> {
    sys: &'a LtvSystem,
    cost: &'a CostSpec,
    ops: StackedOperators,
    settings: SolverSettings,
}

impl<'a> Synthesizer<'a> {
    pub fn new(sys: &'a LtvSystem, cost: &'a CostSpec, settings: SolverSettings) -> Result<Self> {
        cost.check_against(sys)?;
        let ops = build_stacked(sys)?;
        Ok(Self { sys, cost, ops, settings })
    }

    pub fn system(&self) -> &LtvSystem {
        self.sys
    }

    pub fn cost(&self) -> &CostSpec {
        self.cost
    }

    pub fn ops(&self) -> &StackedOperators {
        &self.ops
    }

    pub fn settings(&self) -> &SolverSettings {
        &self.settings
    }

    /// Unconstrained clairvoyant benchmark `𝒪`.
    pub fn benchmark(&self) -> Result<BenchmarkOperator> {
        noncausal_cost_operator(self.sys, &self.ops, self.cost)
    }

    fn check_operands(&self, o: &BenchmarkOperator, w: Option<&RegretWeight>) -> Result<()> {
        let d = self.sys.delta_dim();
        if o.dim() != d || o.state_dim() != self.sys.dims().0 {
            return Err(Error::Dimension(format!("benchmark operator is {}×{}, expected {d}×{d}", o.dim(), o.dim())));
        }
        if let Some(w) = w {
            if w.dim() != d || w.n != self.sys.dims().0 {
                return Err(Error::Dimension(format!("weight is {}×{}, expected {d}×{d}", w.dim(), w.dim())));
            }
        }
        Ok(())
    }

    fn check_x0(&self, x0: &DVector<f64>) -> Result<()> {
        let n = self.sys.dims().0;
        if x0.len() != n {
            return Err(Error::Dimension(format!("x0 has length {}, expected {n}", x0.len())));
        }
        Ok(())
    }

    /// Program with `Θ` declared, and `𝒞^{1/2}Φ(θ)`.
    fn setup(&self, causality: Causality) -> (ConicProgram, ResponseParam, AffineMatrix) {
        let mut prog = ConicProgram::new();
        let param = ResponseParam::new(&mut prog, self.sys, &self.ops, causality);
        let cphi = param.phi().left_mul(self.cost.c_sqrt());
        (prog, param, cphi)
    }

    fn add_constraints(
        &self,
        prog: &mut ConicProgram,
        param: &ResponseParam,
        constraints: Option<&RobustConstraints>,
    ) -> Result<usize> {
        match constraints {
            Some(rc) if !rc.spec.is_empty() => add_constraint_rows(prog, param, self.sys, rc),
            _ => Ok(0),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        &self,
        kind: SynthesisKind,
        prog: &ConicProgram,
        param: &ResponseParam,
        level: Level,
        lambdas: &[usize],
        constraint_rows: usize,
        weight: Option<&RegretWeight>,
    ) -> Result<SynthesisResult> {
        let report = conic::solve(prog, &self.settings);
        let mut diagnostics = Diagnostics {
            num_vars: prog.num_vars(),
            constraint_rows,
            max_cone_residual: f64::NAN,
            weight_regularisation: weight.and_then(RegretWeight::regularisation),
            message: report.message.clone(),
        };
        let mut result = SynthesisResult {
            kind,
            status: report.status,
            mu: None,
            lambdas: Vec::new(),
            phi: None,
            controller: None,
            objective: report.objective,
            primal_residual: report.primal_residual,
            dual_residual: report.dual_residual,
            iterations: report.iterations,
            solve_time: report.solve_time,
            diagnostics: Diagnostics::default(),
        };
        if report.status.is_solved() {
            let x = &report.x;
            diagnostics.max_cone_residual = conic::validate_solution(prog, x).max_residual();
            let phi = param.response(self.sys, x)?;
            result.controller = Some(recover_controller(self.sys, &phi)?);
            result.phi = Some(phi);
            result.mu = Some(match level {
                Level::Var(v) => x[v],
                Level::Squared(v) => x[v] * x[v],
            });
            result.lambdas = lambdas.iter().map(|&v| x[v]).collect();
        }
        result.diagnostics = diagnostics;
        Ok(result)
    }

    /// Energy-ball generalised regret: `J − δᵀ𝒪δ ≤ μ δᵀ𝒲δ` for all `‖w‖² ≤ ω`.
    pub fn energy_ball(
        &self,
        o: &BenchmarkOperator,
        w: &RegretWeight,
        x0: &DVector<f64>,
        omega: f64,
        constraints: Option<&RobustConstraints>,
    ) -> Result<SynthesisResult> {
        self.check_operands(o, Some(w))?;
        self.check_x0(x0)?;
        if !(omega.is_finite() && omega >= 0.0) {
            return Err(Error::Invalid(format!("energy bound ω = {omega} must be nonnegative")));
        }
        let (n, _, _) = self.sys.dims();
        let d = self.sys.delta_dim() - n;
        let (mut prog, param, cphi) = self.setup(Causality::Causal);
        let mu = prog.add_variable("mu");
        let lambda = prog.add_variable("lambda");
        prog.set_objective(mu, 1.0)?;
        prog.add_nonneg(Affine::var(lambda))?;
        let head = (
            AffineMatrix::constant(scalar(quad(&o.o1(), x0)))
                .with_term(mu, scalar(quad(&w.w1(), x0)))
                .with_term(lambda, scalar(-omega)),
            AffineMatrix::constant(column(o.o2() * x0)).with_term(mu, column(w.w2() * x0)),
            cphi.columns(0, n).right_mul_vec(x0),
        );
        let body = AffineMatrix::constant(o.o3())
            .with_term(mu, w.w3())
            .with_term(lambda, DMatrix::identity(d, d));
        let lmi = RegretLmi { head: Some(head), body, tail: cphi.columns(n, d) };
        prog.add_lmi(lmi.build()?)?;
        let rows = self.add_constraints(&mut prog, &param, constraints)?;
        self.finish(SynthesisKind::EnergyBall, &prog, &param, Level::Var(mu), &[lambda], rows, Some(w))
    }

    /// `min μ` s.t. `[μ𝒲3 + 𝒪3, ·; 𝒞^{1/2}Φw, I] ⪰ 0`.
    ///
    /// Congruent to the `𝒲3^{-1/2}`-scaled form with the same optimum, but the
    /// data stays bounded when `𝒲3` is nearly singular. When `p > n` the LMI is
    /// stated on `range(ℰᵀ)`, outside of which both `Φ` and `𝒪` vanish.
    pub fn zero_init(&self, o: &BenchmarkOperator, w: &RegretWeight) -> Result<SynthesisResult> {
        self.check_operands(o, Some(w))?;
        let n = self.sys.dims().0;
        let d = self.sys.delta_dim() - n;
        check_condition(&w.w3(), "W3")?;
        let (w3, o3, basis) = match self.disturbance_basis(false) {
            Some(u) => (u.transpose() * w.w3() * &u, u.transpose() * o.o3() * &u, Some(u)),
            None => (w.w3(), o.o3(), None),
        };
        self.reduced(SynthesisKind::ZeroInit, n, d, &w3, &o3, basis.as_ref(), None, Some(w))
    }

    /// As [`Self::zero_init`] with the full `𝒲`, `𝒪` and `Φ`.
    pub fn adversarial_init(&self, o: &BenchmarkOperator, w: &RegretWeight) -> Result<SynthesisResult> {
        self.check_operands(o, Some(w))?;
        check_condition(w.matrix(), "W")?;
        let (wm, om, basis) = match self.disturbance_basis(true) {
            Some(u) => (u.transpose() * w.matrix() * &u, u.transpose() * o.matrix() * &u, Some(u)),
            None => (w.matrix().clone(), o.matrix().clone(), None),
        };
        self.reduced(SynthesisKind::AdversarialInit, 0, self.sys.delta_dim(), &wm, &om, basis.as_ref(), None, Some(w))
    }

    /// Orthonormal basis of `range(ℰᵀ)` on the `w` (or full `δ`) coordinates; `None` if every `E_k` is square.
    fn disturbance_basis(&self, with_x0: bool) -> Option<DMatrix<f64>> {
        let (n, _, p) = self.sys.dims();
        if p == n {
            return None;
        }
        let t = self.sys.horizon();
        let head = if with_x0 { n } else { 0 };
        let mut u = DMatrix::zeros(head + p * t, head + n * t);
        u.view_mut((0, 0), (head, head)).fill_with_identity();
        for k in 0..t {
            let svd = self.sys.e(k).clone().svd(false, true);
            let vt = svd.v_t.expect("requested");
            u.view_mut((head + p * k, head + n * k), (p, n)).copy_from(&vt.rows(0, n).transpose());
        }
        Some(u)
    }

    /// Worst-case `‖𝒞^{1/2}Φw‖²` with the level `γ² = μ`.
    pub fn hinf(&self, constraints: Option<&RobustConstraints>) -> Result<SynthesisResult> {
        let n = self.sys.dims().0;
        let d = self.sys.delta_dim() - n;
        let eye = DMatrix::identity(d, d);
        self.reduced(SynthesisKind::Hinf, n, d, &eye, &DMatrix::zeros(d, d), None, constraints, None)
    }

    #[allow(clippy::too_many_arguments)]
    fn reduced(
        &self,
        kind: SynthesisKind,
        start: usize,
        d: usize,
        weight: &DMatrix<f64>,
        o: &DMatrix<f64>,
        basis: Option<&DMatrix<f64>>,
        constraints: Option<&RobustConstraints>,
        w: Option<&RegretWeight>,
    ) -> Result<SynthesisResult> {
        let (mut prog, param, cphi) = self.setup(Causality::Causal);
        let mu = prog.add_variable("mu");
        prog.set_objective(mu, 1.0)?;
        let body = AffineMatrix::constant(symmetrize(o)).with_term(mu, symmetrize(weight));
        let tail = match basis {
            Some(u) => cphi.columns(start, d).right_mul(u),
            None => cphi.columns(start, d),
        };
        let lmi = RegretLmi { head: None, body, tail };
        prog.add_lmi(lmi.build()?)?;
        let rows = self.add_constraints(&mut prog, &param, constraints)?;
        self.finish(kind, &prog, &param, Level::Var(mu), &[], rows, w)
    }

    /// Pointwise-ellipsoid generalised regret with one multiplier per step.
    pub fn pointwise(
        &self,
        o: &BenchmarkOperator,
        w: &RegretWeight,
        x0: &DVector<f64>,
        shape: &DMatrix<f64>,
        constraints: Option<&ConstraintSpec>,
    ) -> Result<SynthesisResult> {
        self.check_operands(o, Some(w))?;
        self.check_x0(x0)?;
        let model = DisturbanceModel::PointwiseEllipsoid { shape: shape.clone(), x0: x0.clone() };
        model.validate(self.sys, 1e-12)?;
        let (n, _, _) = self.sys.dims();
        let t = self.sys.horizon();
        let d = self.sys.delta_dim() - n;
        let (mut prog, param, cphi) = self.setup(Causality::Causal);
        let mu = prog.add_variable("mu");
        prog.set_objective(mu, 1.0)?;
        let lambdas: Vec<usize> = prog.add_variables(t, "lambda").collect();
        let mut s11 = AffineMatrix::constant(scalar(quad(&o.o1(), x0))).with_term(mu, scalar(quad(&w.w1(), x0)));
        let mut body = AffineMatrix::constant(o.o3()).with_term(mu, w.w3());
        for (i, &l) in lambdas.iter().enumerate() {
            prog.add_nonneg(Affine::var(l))?;
            s11 = s11.with_term(l, scalar(-1.0));
            body = body.with_term(l, embed_shape(shape, t, i + 1));
        }
        let head = (
            s11,
            AffineMatrix::constant(column(o.o2() * x0)).with_term(mu, column(w.w2() * x0)),
            cphi.columns(0, n).right_mul_vec(x0),
        );
        let lmi = RegretLmi { head: Some(head), body, tail: cphi.columns(n, d) };
        prog.add_lmi(lmi.build()?)?;
        let rc = constraints.map(|spec| RobustConstraints::new(spec.clone(), shape.clone(), x0.clone()));
        let rows = self.add_constraints(&mut prog, &param, rc.as_ref())?;
        self.finish(SynthesisKind::Pointwise, &prog, &param, Level::Var(mu), &lambdas, rows, Some(w))
    }

    /// `min ‖𝒞^{1/2}Φ‖_F²`; the level reported is that squared norm.
    pub fn h2(&self, constraints: Option<&RobustConstraints>) -> Result<SynthesisResult> {
        let (mut prog, param, cphi) = self.setup(Causality::Causal);
        let s = prog.add_variable("norm");
        prog.set_objective(s, 1.0)?;
        prog.add_soc(Affine::var(s), cphi.entries())?;
        let rows = self.add_constraints(&mut prog, &param, constraints)?;
        self.finish(SynthesisKind::H2, &prog, &param, Level::Squared(s), &[], rows, None)
    }

    /// Dynamic-regret program without a weight: `μ̂ − λ̂ω` in the `(1,1)` block
    /// and `λ̂I + 𝒪3` in the `(2,2)` block. Against the identity-weight
    /// energy-ball level, `μ̂ ≤ μ(x0ᵀx0 + ω)`, with equality at `x0 = 0`.
    pub fn reference_dynamic_regret(
        &self,
        o: &BenchmarkOperator,
        x0: &DVector<f64>,
        omega: f64,
    ) -> Result<SynthesisResult> {
        self.check_operands(o, None)?;
        self.check_x0(x0)?;
        let (n, _, _) = self.sys.dims();
        let d = self.sys.delta_dim() - n;
        let (mut prog, param, cphi) = self.setup(Causality::Causal);
        let mu = prog.add_variable("mu_hat");
        let lambda = prog.add_variable("lambda_hat");
        prog.set_objective(mu, 1.0)?;
        prog.add_nonneg(Affine::var(lambda))?;
        let head = (
            AffineMatrix::constant(scalar(quad(&o.o1(), x0)))
                .with_term(mu, scalar(1.0))
                .with_term(lambda, scalar(-omega)),
            AffineMatrix::constant(column(o.o2() * x0)),
            cphi.columns(0, n).right_mul_vec(x0),
        );
        let body = AffineMatrix::constant(o.o3()).with_term(lambda, DMatrix::identity(d, d));
        let lmi = RegretLmi { head: Some(head), body, tail: cphi.columns(n, d) };
        prog.add_lmi(lmi.build()?)?;
        self.finish(SynthesisKind::ReferenceDynamicRegret, &prog, &param, Level::Var(mu), &[lambda], 0, None)
    }

    /// Clairvoyant benchmark that satisfies the robust constraints:
    /// `Õ = Φ*ᵀ𝒞Φ*` for the best full-block achievable `Φ*`.
    pub fn constrained_noncausal_benchmark(
        &self,
        rc: &RobustConstraints,
        objective: BenchmarkObjective,
    ) -> Result<BenchmarkOperator> {
        let (mut prog, param, cphi) = self.setup(Causality::Noncausal);
        let s = prog.add_variable("level");
        prog.set_objective(s, 1.0)?;
        match objective {
            BenchmarkObjective::Frobenius => prog.add_soc(Affine::var(s), cphi.entries())?,
            BenchmarkObjective::Operator => {
                let d = self.sys.delta_dim();
                let lmi = RegretLmi {
                    head: None,
                    body: AffineMatrix::zeros(d, d).with_term(s, DMatrix::identity(d, d)),
                    tail: cphi,
                };
                prog.add_lmi(lmi.build()?)?;
            }
        }
        self.add_constraints(&mut prog, &param, Some(rc))?;
        let report = conic::solve(&prog, &self.settings);
        match report.status {
            st if st.is_solved() => {}
            SolverStatus::Infeasible => {
                return Err(Error::Infeasible("constraints cannot be met even by a clairvoyant controller".into()))
            }
            st => {
                return Err(Error::NotSolved(format!(
                    "constrained benchmark: {st:?} {}",
                    report.message.unwrap_or_default()
                )))
            }
        }
        let phi = param.response(self.sys, &report.x)?.stacked();
        let o = phi.transpose() * self.cost.c() * phi;
        BenchmarkOperator::from_matrix(symmetrize(&o), self.sys.dims().0)
    }
}
