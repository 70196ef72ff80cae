//! Affine parametrisation of achievable system responses.
//!
//! The free variable is a block-lower-triangular `Θ` (m(T+1) × n(T+1)) with
//! `Φu = Θℰ` and `Φx = G + FΦu`. Every such `Φ` satisfies the achievability
//! constraint identically and is realisable by state feedback, so no
//! equality rows are needed in the conic program.

use nalgebra::{DMatrix, DVector};

use crate::conic::{Affine, ConicProgram, LmiConstraint};
use crate::error::Result;
use crate::operators::{LtvSystem, StackedOperators};
use crate::slp::{Causality, SystemResponse};

/// `constant + Σ x_v · coef_v`.
#[derive(Debug, Clone)]
pub struct AffineMatrix {
    pub constant: DMatrix<f64>,
    pub terms: Vec<(usize, DMatrix<f64>)>,
}

impl AffineMatrix {
    pub fn constant(m: DMatrix<f64>) -> Self {
        Self { constant: m, terms: Vec::new() }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::constant(DMatrix::zeros(rows, cols))
    }

    pub fn with_term(mut self, v: usize, coef: DMatrix<f64>) -> Self {
        debug_assert_eq!(coef.shape(), self.shape());
        self.terms.push((v, coef));
        self
    }

    pub fn shape(&self) -> (usize, usize) {
        self.constant.shape()
    }

    pub fn left_mul(&self, l: &DMatrix<f64>) -> Self {
        Self {
            constant: l * &self.constant,
            terms: self.terms.iter().map(|(v, t)| (*v, l * t)).collect(),
        }
    }

    pub fn right_mul(&self, r: &DMatrix<f64>) -> Self {
        Self {
            constant: &self.constant * r,
            terms: self.terms.iter().map(|(v, t)| (*v, t * r)).collect(),
        }
    }

    pub fn right_mul_vec(&self, r: &DVector<f64>) -> Self {
        self.right_mul(&DMatrix::from_column_slice(r.len(), 1, r.as_slice()))
    }

    pub fn columns(&self, start: usize, count: usize) -> Self {
        Self {
            constant: self.constant.columns(start, count).into_owned(),
            terms: self.terms.iter().map(|(v, t)| (*v, t.columns(start, count).into_owned())).collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        Self {
            constant: self.constant.transpose(),
            terms: self.terms.iter().map(|(v, t)| (*v, t.transpose())).collect(),
        }
    }

    pub fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        let mut out = self.constant.clone();
        for (v, t) in &self.terms {
            out += t * x[*v];
        }
        out
    }

    /// Entry-wise affine expressions in column-major order.
    pub fn entries(&self) -> Vec<Affine> {
        let (r, c) = self.shape();
        let mut out: Vec<Affine> = self.constant.iter().map(|&v| Affine::constant(v)).collect();
        debug_assert_eq!(out.len(), r * c);
        for (v, t) in &self.terms {
            for (idx, &val) in t.iter().enumerate() {
                if val != 0.0 {
                    out[idx].terms.push((*v, val));
                }
            }
        }
        out
    }

    /// True when the expression is identically zero.
    pub fn is_zero(&self) -> bool {
        self.constant.iter().all(|&v| v == 0.0) && self.terms.iter().all(|(_, t)| t.iter().all(|&v| v == 0.0))
    }

    /// Places this (symmetric) expression as a diagonal LMI block at `off`.
    pub fn place_diag(&self, lmi: &mut LmiConstraint, off: usize) -> Result<()> {
        lmi.add_diag_block(None, off, &self.constant)?;
        for (v, t) in &self.terms {
            lmi.add_diag_block(Some(*v), off, t)?;
        }
        Ok(())
    }

    /// Places this expression as an off-diagonal LMI block at `(r0, c0)`.
    pub fn place_offdiag(&self, lmi: &mut LmiConstraint, r0: usize, c0: usize) -> Result<()> {
        lmi.add_offdiag_block(None, r0, c0, &self.constant)?;
        for (v, t) in &self.terms {
            lmi.add_offdiag_block(Some(*v), r0, c0, t)?;
        }
        Ok(())
    }
}

/// Variables of `Θ` and the induced affine map to `Φ`.
#[derive(Debug, Clone)]
pub struct ResponseParam {
    causality: Causality,
    vars: Vec<(usize, usize, usize)>, // (program var, row of Θ, column of Θ)
    phi: AffineMatrix,
}

impl ResponseParam {
    /// Declares the `Θ` entries in `prog` and builds `Φ(θ)`.
    pub fn new(prog: &mut ConicProgram, sys: &LtvSystem, ops: &StackedOperators, causality: Causality) -> Self {
        let (n, m, _) = sys.dims();
        let t = sys.horizon();
        let ns = sys.state_dim();
        let rows = ns + sys.input_dim();
        let d = sys.delta_dim();
        let mut vars = Vec::new();
        for k in 0..=t {
            let blocks = match causality {
                Causality::Causal => k + 1,
                Causality::Noncausal => t + 1,
            };
            for j in 0..blocks {
                for r in 0..m {
                    for c in 0..n {
                        let v = prog.add_variable(format!("theta[{k},{j}][{r},{c}]"));
                        vars.push((v, m * k + r, n * j + c));
                    }
                }
            }
        }
        let mut constant = DMatrix::zeros(rows, d);
        constant.rows_mut(0, ns).copy_from(&ops.g);
        let terms = vars
            .iter()
            .map(|&(v, row, col)| {
                // Φ gains [F e_row; e_row] ⊗ ℰ[col, :]
                let mut left = DVector::zeros(rows);
                left.rows_mut(0, ns).copy_from(&ops.f.column(row));
                left[ns + row] = 1.0;
                let right = ops.blk_e.row(col).into_owned();
                (v, left * right)
            })
            .collect();
        Self { causality, vars, phi: AffineMatrix { constant, terms } }
    }

    pub fn causality(&self) -> Causality {
        self.causality
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    /// `Φ(θ)` as an affine matrix over program variables.
    pub fn phi(&self) -> &AffineMatrix {
        &self.phi
    }

    pub fn response(&self, sys: &LtvSystem, x: &[f64]) -> Result<SystemResponse> {
        let full = self.phi.eval(x);
        let ns = sys.state_dim();
        let px = full.rows(0, ns).into_owned();
        let pu = full.rows(ns, sys.input_dim()).into_owned();
        SystemResponse::from_dense(sys, &px, &pu, self.causality)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::build_stacked;
    use crate::slp::achievability_residual;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn every_parameter_is_achievable() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, -0.1, 0.9]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let e = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.3, 0.0, 1.0, 0.0]);
        let sys = LtvSystem::time_invariant(a, b, e, 4).unwrap();
        let ops = build_stacked(&sys).unwrap();
        for causality in [Causality::Causal, Causality::Noncausal] {
            let mut prog = ConicProgram::new();
            let param = ResponseParam::new(&mut prog, &sys, &ops, causality);
            let x: Vec<f64> = (0..prog.num_vars()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let phi = param.response(&sys, &x).unwrap();
            assert!(achievability_residual(&phi, &ops).unwrap() < 1e-10);
        }
    }

    #[test]
    fn entries_match_eval() {
        let sys = LtvSystem::time_invariant(
            DMatrix::identity(1, 1),
            DMatrix::identity(1, 1),
            DMatrix::identity(1, 1),
            2,
        )
        .unwrap();
        let ops = build_stacked(&sys).unwrap();
        let mut prog = ConicProgram::new();
        let param = ResponseParam::new(&mut prog, &sys, &ops, Causality::Causal);
        let x: Vec<f64> = (0..prog.num_vars()).map(|i| 0.1 * i as f64 - 0.2).collect();
        let dense = param.phi().eval(&x);
        let entries = param.phi().entries();
        for (idx, e) in entries.iter().enumerate() {
            assert!((e.eval(&x) - dense[idx]).abs() < 1e-14);
        }
    }
}
