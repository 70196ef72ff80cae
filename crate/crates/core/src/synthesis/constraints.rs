//! Polytopic state/input constraints `H_x x ≤ 1`, `H_u u ≤ 1`, robustified over
//! pointwise ellipsoidal disturbances with the closed-form support function
//! `max_{wᵀPw≤1} aᵀw = ‖P^{-1/2}a‖₂`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::param::ResponseParam;
use crate::conic::{Affine, ConicProgram};
use crate::error::{Error, Result};
use crate::linalg::inv_sqrt;
use crate::operators::LtvSystem;
use crate::slp::SystemResponse;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSpec {
    hx: DMatrix<f64>,
    hu: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Signal {
    State,
    Input,
}

/// One row `[H_z]_i` of the stacked constraint matrix.
#[derive(Debug, Clone)]
pub struct ConstraintRow {
    pub signal: Signal,
    pub time: usize,
    pub index: usize,
    /// Row over the stacked `[x; u]`.
    pub h: DVector<f64>,
}

impl ConstraintSpec {
    /// `hx` is `q_x × n`, `hu` is `q_u × m`; either may have zero rows.
    pub fn new(hx: DMatrix<f64>, hu: DMatrix<f64>) -> Result<Self> {
        for (name, h) in [("H_x", &hx), ("H_u", &hu)] {
            for (i, row) in h.row_iter().enumerate() {
                if row.iter().all(|&v| v == 0.0) {
                    return Err(Error::Invalid(format!("{name} row {i} is zero")));
                }
                if row.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Invalid(format!("{name} row {i} is not finite")));
                }
            }
        }
        Ok(Self { hx, hu })
    }

    /// Symmetric box `|x_i| ≤ x_max[i]`, `|u_i| ≤ u_max[i]`.
    pub fn boxes(x_max: &[f64], u_max: &[f64]) -> Result<Self> {
        let make = |lim: &[f64]| {
            let mut h = DMatrix::zeros(2 * lim.len(), lim.len());
            for (i, &l) in lim.iter().enumerate() {
                h[(2 * i, i)] = 1.0 / l;
                h[(2 * i + 1, i)] = -1.0 / l;
            }
            h
        };
        Self::new(make(x_max), make(u_max))
    }

    pub fn hx(&self) -> &DMatrix<f64> {
        &self.hx
    }

    pub fn hu(&self) -> &DMatrix<f64> {
        &self.hu
    }

    pub fn is_empty(&self) -> bool {
        self.hx.nrows() == 0 && self.hu.nrows() == 0
    }

    pub fn check_against(&self, sys: &LtvSystem) -> Result<()> {
        let (n, m, _) = sys.dims();
        if (self.hx.nrows() > 0 && self.hx.ncols() != n) || (self.hu.nrows() > 0 && self.hu.ncols() != m) {
            return Err(Error::Dimension(format!(
                "constraint matrices {:?} / {:?} do not match n = {n}, m = {m}",
                self.hx.shape(),
                self.hu.shape()
            )));
        }
        Ok(())
    }

    /// Rows of `H_z = blkdiag(I ⊗ H_x, I ⊗ H_u)`.
    pub fn rows(&self, sys: &LtvSystem) -> Vec<ConstraintRow> {
        let (n, m, _) = sys.dims();
        let t = sys.horizon();
        let ns = sys.state_dim();
        let len = ns + sys.input_dim();
        let mut out = Vec::new();
        for k in 0..=t {
            for (i, hrow) in self.hx.row_iter().enumerate() {
                let mut h = DVector::zeros(len);
                h.rows_mut(n * k, n).copy_from(&hrow.transpose());
                out.push(ConstraintRow { signal: Signal::State, time: k, index: i, h });
            }
        }
        for k in 0..=t {
            for (i, hrow) in self.hu.row_iter().enumerate() {
                let mut h = DVector::zeros(len);
                h.rows_mut(ns + m * k, m).copy_from(&hrow.transpose());
                out.push(ConstraintRow { signal: Signal::Input, time: k, index: i, h });
            }
        }
        out
    }

    /// Largest `[H_x x_k]_i` or `[H_u u_k]_i` along a trajectory.
    pub fn max_value(&self, xs: &[DVector<f64>], us: &[DVector<f64>]) -> f64 {
        let mut best = f64::NEG_INFINITY;
        for x in xs {
            if self.hx.nrows() > 0 {
                best = best.max((&self.hx * x).max());
            }
        }
        for u in us {
            if self.hu.nrows() > 0 {
                best = best.max((&self.hu * u).max());
            }
        }
        best
    }
}

/// Constraints together with the pointwise disturbance set they are robust to.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustConstraints {
    pub spec: ConstraintSpec,
    /// `P` of `𝕎 = {w | wᵀPw ≤ 1}`.
    pub shape: DMatrix<f64>,
    pub x0: DVector<f64>,
}

impl RobustConstraints {
    pub fn new(spec: ConstraintSpec, shape: DMatrix<f64>, x0: DVector<f64>) -> Self {
        Self { spec, shape, x0 }
    }
}

/// Adds `[H_z]_i Φ0 x0 + Σ_j ‖[H_z]_i [[Φw]]_j P^{-1/2}‖ ≤ 1` for every row.
///
/// `Φw` has `T` block columns of width `p`, one per `w_j`. Returns the number
/// of tightened rows.
pub fn add_constraint_rows(
    prog: &mut ConicProgram,
    param: &ResponseParam,
    sys: &LtvSystem,
    rc: &RobustConstraints,
) -> Result<usize> {
    rc.spec.check_against(sys)?;
    let (n, _, p) = sys.dims();
    if rc.shape.shape() != (p, p) || rc.x0.len() != n {
        return Err(Error::Dimension("disturbance shape or x0 does not match the system".into()));
    }
    let p_inv_sqrt = inv_sqrt(&rc.shape, "P")?;
    let rows = rc.spec.rows(sys);
    for (r, row) in rows.iter().enumerate() {
        let hphi = param.phi().left_mul(&DMatrix::from_row_slice(1, row.h.len(), row.h.as_slice()));
        let nominal = hphi.columns(0, n).right_mul_vec(&rc.x0).entries().remove(0);
        let mut slack = Affine { terms: Vec::new(), constant: 1.0 - nominal.constant };
        slack.terms.extend(nominal.terms.iter().map(|&(v, c)| (v, -c)));
        for j in 1..=sys.horizon() {
            let block = hphi.columns(sys.delta_offset(j), p).right_mul(&p_inv_sqrt);
            if block.is_zero() {
                continue;
            }
            let t = prog.add_variable(format!("row{r}_norm[{j}]"));
            prog.add_soc(Affine::var(t), block.entries())?;
            slack.terms.push((t, -1.0));
        }
        prog.add_nonneg(slack)?;
    }
    Ok(rows.len())
}

/// Tightened left-hand side of every constraint row for a fixed response.
pub fn robust_row_values(phi: &SystemResponse, sys: &LtvSystem, rc: &RobustConstraints) -> Result<Vec<f64>> {
    let p_inv_sqrt = inv_sqrt(&rc.shape, "P")?;
    let (n, _, p) = sys.dims();
    let full = phi.stacked();
    Ok(rc
        .spec
        .rows(sys)
        .iter()
        .map(|row| {
            let hphi = row.h.transpose() * &full;
            let nominal = (hphi.columns(0, n) * &rc.x0)[0];
            let spread: f64 = (1..=sys.horizon())
                .map(|j| (hphi.columns(sys.delta_offset(j), p) * &p_inv_sqrt).norm())
                .sum();
            nominal + spread
        })
        .collect())
}

/// Per-step maximiser of `[H_z]_i Φδ` over `𝕎^T`: `w_j = P^{-1/2} v_j / ‖v_j‖`
/// with `v_j = (h [[Φw]]_j P^{-1/2})ᵀ`.
pub fn worst_case_row_disturbance(
    phi: &SystemResponse,
    sys: &LtvSystem,
    rc: &RobustConstraints,
    row: &ConstraintRow,
) -> Result<Vec<DVector<f64>>> {
    let p_inv_sqrt = inv_sqrt(&rc.shape, "P")?;
    let (_, _, p) = sys.dims();
    let hphi = row.h.transpose() * phi.stacked();
    Ok((1..=sys.horizon())
        .map(|j| {
            let v = (hphi.columns(sys.delta_offset(j), p) * &p_inv_sqrt).transpose();
            let norm = v.norm();
            if norm == 0.0 {
                DVector::zeros(p)
            } else {
                &p_inv_sqrt * (v.column(0) / norm)
            }
        })
        .collect())
}
