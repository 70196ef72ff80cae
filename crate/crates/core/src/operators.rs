//! Stacked finite-horizon operators and the optimal non-causal benchmark.
//!
//! Signals over the horizon are stacked as
//! `x = [x_0; …; x_T]`, `u = [u_0; …; u_T]` and `δ = [x_0; w_0; …; w_{T-1}]`.
//! `A_T` and `B_T` are accepted so that every sequence has `T+1` entries, but
//! the dynamics never use them: `x_T` is the last state and `u_T` only enters
//! the cost.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{block_diag, min_eig, psd_sqrt, rank, symmetrize};

/// PSD / PD tolerances for cost and weight validation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub psd: f64,
    pub pd: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { psd: 1e-9, pd: 1e-12 }
    }
}

/// Linear time-varying system `x_{k+1} = A_k x_k + B_k u_k + E_k w_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct LtvSystem {
    horizon: usize,
    a: Vec<DMatrix<f64>>,
    b: Vec<DMatrix<f64>>,
    e: Vec<DMatrix<f64>>,
    n: usize,
    m: usize,
    p: usize,
}

impl LtvSystem {
    /// `a` and `b` hold `T+1` matrices, `e` holds `T`.
    pub fn new(a: Vec<DMatrix<f64>>, b: Vec<DMatrix<f64>>, e: Vec<DMatrix<f64>>) -> Result<Self> {
        let horizon = e.len();
        if horizon == 0 {
            return Err(Error::Dimension("horizon must be at least one step".into()));
        }
        if a.len() != horizon + 1 || b.len() != horizon + 1 {
            return Err(Error::Dimension(format!(
                "expected {} A and B matrices for horizon {horizon}, got {} and {}",
                horizon + 1,
                a.len(),
                b.len()
            )));
        }
        let n = a[0].nrows();
        let m = b[0].ncols();
        let p = e[0].ncols();
        if n == 0 || m == 0 || p == 0 {
            return Err(Error::Dimension("state, input and disturbance dimensions must be positive".into()));
        }
        for (k, ak) in a.iter().enumerate() {
            if ak.shape() != (n, n) {
                return Err(Error::Dimension(format!("A_{k} is {:?}, expected ({n}, {n})", ak.shape())));
            }
        }
        for (k, bk) in b.iter().enumerate() {
            if bk.shape() != (n, m) {
                return Err(Error::Dimension(format!("B_{k} is {:?}, expected ({n}, {m})", bk.shape())));
            }
        }
        for (k, ek) in e.iter().enumerate() {
            if ek.shape() != (n, p) {
                return Err(Error::Dimension(format!("E_{k} is {:?}, expected ({n}, {p})", ek.shape())));
            }
            if rank(ek, 1e-10) < n {
                return Err(Error::Invalid(format!("E_{k} does not have full row rank {n}")));
            }
        }
        Ok(Self { horizon, a, b, e, n, m, p })
    }

    pub fn time_invariant(a: DMatrix<f64>, b: DMatrix<f64>, e: DMatrix<f64>, horizon: usize) -> Result<Self> {
        Self::new(vec![a; horizon + 1], vec![b; horizon + 1], vec![e; horizon])
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// `(n, m, p)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.n, self.m, self.p)
    }

    pub fn a(&self, k: usize) -> &DMatrix<f64> {
        &self.a[k]
    }

    pub fn b(&self, k: usize) -> &DMatrix<f64> {
        &self.b[k]
    }

    pub fn e(&self, k: usize) -> &DMatrix<f64> {
        &self.e[k]
    }

    pub fn a_seq(&self) -> &[DMatrix<f64>] {
        &self.a
    }

    pub fn b_seq(&self) -> &[DMatrix<f64>] {
        &self.b
    }

    pub fn e_seq(&self) -> &[DMatrix<f64>] {
        &self.e
    }

    pub fn state_dim(&self) -> usize {
        self.n * (self.horizon + 1)
    }

    pub fn input_dim(&self) -> usize {
        self.m * (self.horizon + 1)
    }

    pub fn disturbance_dim(&self) -> usize {
        self.p * self.horizon
    }

    /// Length of `δ = [x_0; w]`.
    pub fn delta_dim(&self) -> usize {
        self.n + self.p * self.horizon
    }

    /// Column offset of δ-block `j` (block 0 is `x_0`, block `j ≥ 1` is `w_{j-1}`).
    pub fn delta_offset(&self, j: usize) -> usize {
        if j == 0 {
            0
        } else {
            self.n + self.p * (j - 1)
        }
    }

    pub fn delta_width(&self, j: usize) -> usize {
        if j == 0 {
            self.n
        } else {
            self.p
        }
    }

    /// Number of δ entries that time step `k` may causally depend on.
    pub fn causal_width(&self, k: usize) -> usize {
        self.n + self.p * k
    }

    /// Applies `(I − 𝒵𝒜)⁻¹` to `y` (n(T+1) rows) by forward block substitution.
    pub fn transition_solve(&self, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if y.nrows() != self.state_dim() {
            return Err(Error::Dimension(format!(
                "transition_solve needs {} rows, got {}",
                self.state_dim(),
                y.nrows()
            )));
        }
        let n = self.n;
        let mut out = y.clone();
        for k in 1..=self.horizon {
            let prev = out.rows(n * (k - 1), n).into_owned();
            let next = &self.a[k - 1] * prev;
            let mut row = out.rows_mut(n * k, n);
            row += next;
        }
        Ok(out)
    }

    /// Step-by-step simulation. `u` has `T+1` entries, `w` has `T`.
    pub fn simulate(&self, x0: &DVector<f64>, u: &[DVector<f64>], w: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
        self.check_sequences(x0, u, w)?;
        let mut xs = Vec::with_capacity(self.horizon + 1);
        xs.push(x0.clone());
        for k in 0..self.horizon {
            let next = &self.a[k] * &xs[k] + &self.b[k] * &u[k] + &self.e[k] * &w[k];
            xs.push(next);
        }
        Ok(xs)
    }

    pub fn check_sequences(&self, x0: &DVector<f64>, u: &[DVector<f64>], w: &[DVector<f64>]) -> Result<()> {
        if x0.len() != self.n {
            return Err(Error::Dimension(format!("x0 has length {}, expected {}", x0.len(), self.n)));
        }
        if u.len() != self.horizon + 1 || u.iter().any(|uk| uk.len() != self.m) {
            return Err(Error::Dimension(format!(
                "input sequence must hold {} vectors of length {}",
                self.horizon + 1,
                self.m
            )));
        }
        self.check_disturbance(w)
    }

    pub fn check_disturbance(&self, w: &[DVector<f64>]) -> Result<()> {
        if w.len() != self.horizon || w.iter().any(|wk| wk.len() != self.p) {
            return Err(Error::Dimension(format!(
                "disturbance sequence must hold {} vectors of length {}",
                self.horizon, self.p
            )));
        }
        Ok(())
    }

    /// Stacks `x_0` and `w` into `δ`.
    pub fn delta(&self, x0: &DVector<f64>, w: &[DVector<f64>]) -> DVector<f64> {
        let mut d = DVector::zeros(self.delta_dim());
        d.rows_mut(0, self.n).copy_from(x0);
        for (k, wk) in w.iter().enumerate() {
            d.rows_mut(self.n + self.p * k, self.p).copy_from(wk);
        }
        d
    }

    /// Splits `δ` into `x_0` and the disturbance sequence.
    pub fn split_delta(&self, delta: &DVector<f64>) -> (DVector<f64>, Vec<DVector<f64>>) {
        let x0 = delta.rows(0, self.n).into_owned();
        let w = (0..self.horizon)
            .map(|k| delta.rows(self.n + self.p * k, self.p).into_owned())
            .collect();
        (x0, w)
    }

    pub fn split_inputs(&self, u: &DVector<f64>) -> Vec<DVector<f64>> {
        (0..=self.horizon).map(|k| u.rows(self.m * k, self.m).into_owned()).collect()
    }

    pub fn split_states(&self, x: &DVector<f64>) -> Vec<DVector<f64>> {
        (0..=self.horizon).map(|k| x.rows(self.n * k, self.n).into_owned()).collect()
    }
}

/// Stage costs `Q_k ⪰ 0`, `R_k ≻ 0` for `k = 0..=T` and their stacked forms.
#[derive(Debug, Clone, PartialEq)]
pub struct CostSpec {
    q: Vec<DMatrix<f64>>,
    r: Vec<DMatrix<f64>>,
    q_blk: DMatrix<f64>,
    r_blk: DMatrix<f64>,
    c: DMatrix<f64>,
    c_sqrt: DMatrix<f64>,
}

impl CostSpec {
    pub fn new(q: Vec<DMatrix<f64>>, r: Vec<DMatrix<f64>>, tol: Tolerances) -> Result<Self> {
        if q.len() != r.len() || q.is_empty() {
            return Err(Error::Dimension(format!(
                "Q and R sequences must have equal nonzero length, got {} and {}",
                q.len(),
                r.len()
            )));
        }
        let n = q[0].nrows();
        let m = r[0].nrows();
        let mut q_sqrt = Vec::with_capacity(q.len());
        let mut r_sqrt = Vec::with_capacity(r.len());
        for (k, qk) in q.iter().enumerate() {
            if qk.shape() != (n, n) {
                return Err(Error::Dimension(format!("Q_{k} is {:?}, expected ({n}, {n})", qk.shape())));
            }
            if (qk - qk.transpose()).amax() > 1e-10 * qk.amax().max(1.0) {
                return Err(Error::Invalid(format!("Q_{k} is not symmetric")));
            }
            let lo = min_eig(qk);
            if lo < -tol.psd {
                return Err(Error::NotPsd(format!("Q_{k} has min eigenvalue {lo:.3e}")));
            }
            q_sqrt.push(psd_sqrt(qk, tol.psd)?);
        }
        for (k, rk) in r.iter().enumerate() {
            if rk.shape() != (m, m) {
                return Err(Error::Dimension(format!("R_{k} is {:?}, expected ({m}, {m})", rk.shape())));
            }
            if (rk - rk.transpose()).amax() > 1e-10 * rk.amax().max(1.0) {
                return Err(Error::Invalid(format!("R_{k} is not symmetric")));
            }
            let lo = min_eig(rk);
            if lo < tol.pd {
                return Err(Error::NotPsd(format!("R_{k} is not positive definite (min eigenvalue {lo:.3e})")));
            }
            r_sqrt.push(psd_sqrt(rk, tol.psd)?);
        }
        let q_blk = block_diag(&q.iter().map(symmetrize).collect::<Vec<_>>());
        let r_blk = block_diag(&r.iter().map(symmetrize).collect::<Vec<_>>());
        let c = block_diag(&[q_blk.clone(), r_blk.clone()]);
        let mut sqrt_blocks = q_sqrt;
        sqrt_blocks.extend(r_sqrt);
        let c_sqrt = block_diag(&sqrt_blocks);
        Ok(Self { q, r, q_blk, r_blk, c, c_sqrt })
    }

    pub fn time_invariant(q: DMatrix<f64>, r: DMatrix<f64>, horizon: usize, tol: Tolerances) -> Result<Self> {
        Self::new(vec![q; horizon + 1], vec![r; horizon + 1], tol)
    }

    pub fn check_against(&self, sys: &LtvSystem) -> Result<()> {
        let (n, m, _) = sys.dims();
        if self.q.len() != sys.horizon() + 1 || self.q[0].nrows() != n || self.r[0].nrows() != m {
            return Err(Error::Dimension(format!(
                "cost has {} stages of sizes ({}, {}), system needs {} stages of sizes ({n}, {m})",
                self.q.len(),
                self.q[0].nrows(),
                self.r[0].nrows(),
                sys.horizon() + 1
            )));
        }
        Ok(())
    }

    pub fn q(&self, k: usize) -> &DMatrix<f64> {
        &self.q[k]
    }

    pub fn r(&self, k: usize) -> &DMatrix<f64> {
        &self.r[k]
    }

    pub fn q_seq(&self) -> &[DMatrix<f64>] {
        &self.q
    }

    pub fn r_seq(&self) -> &[DMatrix<f64>] {
        &self.r
    }

    /// `𝒬 = blkdiag(Q_0, …, Q_T)`.
    pub fn q_blk(&self) -> &DMatrix<f64> {
        &self.q_blk
    }

    /// `ℛ = blkdiag(R_0, …, R_T)`.
    pub fn r_blk(&self) -> &DMatrix<f64> {
        &self.r_blk
    }

    /// `𝒞 = blkdiag(𝒬, ℛ)`.
    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    /// Blockwise symmetric square root of `𝒞`.
    pub fn c_sqrt(&self) -> &DMatrix<f64> {
        &self.c_sqrt
    }

    pub fn is_zero_state_cost(&self) -> bool {
        self.q_blk.amax() == 0.0
    }
}

/// `F`, `G`, block diagonals and the downshift for one system.
#[derive(Debug, Clone)]
pub struct StackedOperators {
    pub f: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub blk_a: DMatrix<f64>,
    pub blk_b: DMatrix<f64>,
    pub blk_e: DMatrix<f64>,
    pub z: DMatrix<f64>,
}

pub fn build_stacked(sys: &LtvSystem) -> Result<StackedOperators> {
    let (n, _, _) = sys.dims();
    let t = sys.horizon();
    let blk_a = block_diag(sys.a_seq());
    let blk_b = block_diag(sys.b_seq());
    let mut e_blocks = vec![DMatrix::identity(n, n)];
    e_blocks.extend(sys.e_seq().iter().cloned());
    let blk_e = block_diag(&e_blocks);
    let mut z = DMatrix::zeros(n * (t + 1), n * (t + 1));
    for k in 1..=t {
        z.view_mut((n * k, n * (k - 1)), (n, n)).fill_with_identity();
    }
    let g = sys.transition_solve(&blk_e)?;
    let f = sys.transition_solve(&(&z * &blk_b))?;
    Ok(StackedOperators { f, g, blk_a, blk_b, blk_e, z })
}

/// PSD cost operator of the clairvoyant controller, `J*(δ) = δᵀ O δ`.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkOperator {
    o: DMatrix<f64>,
    n: usize,
}

impl BenchmarkOperator {
    /// Wraps an explicit symmetric PSD matrix whose first `n` rows belong to `x_0`.
    pub fn from_matrix(o: DMatrix<f64>, n: usize) -> Result<Self> {
        if o.nrows() != o.ncols() || o.nrows() < n {
            return Err(Error::Dimension(format!("benchmark operator shape {:?} with n = {n}", o.shape())));
        }
        let scale = o.amax().max(1.0);
        if (&o - o.transpose()).amax() > 1e-10 * scale {
            return Err(Error::Invalid("benchmark operator is not symmetric".into()));
        }
        let o = symmetrize(&o);
        let lo = min_eig(&o);
        if lo < -1e-8 * scale {
            return Err(Error::NotPsd(format!("benchmark operator min eigenvalue {lo:.3e}")));
        }
        Ok(Self { o, n })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.o
    }

    pub fn dim(&self) -> usize {
        self.o.nrows()
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    /// `x_0 × x_0` block.
    pub fn o1(&self) -> DMatrix<f64> {
        self.o.view((0, 0), (self.n, self.n)).into_owned()
    }

    /// `w × x_0` block.
    pub fn o2(&self) -> DMatrix<f64> {
        let d = self.dim() - self.n;
        self.o.view((self.n, 0), (d, self.n)).into_owned()
    }

    /// `w × w` block.
    pub fn o3(&self) -> DMatrix<f64> {
        let d = self.dim() - self.n;
        self.o.view((self.n, self.n), (d, d)).into_owned()
    }

    pub fn cost(&self, delta: &DVector<f64>) -> f64 {
        delta.dot(&(&self.o * delta))
    }
}

/// `O = Gᵀ𝒬(I + Fℛ⁻¹Fᵀ𝒬)⁻¹G`.
pub fn noncausal_cost_operator(sys: &LtvSystem, ops: &StackedOperators, cost: &CostSpec) -> Result<BenchmarkOperator> {
    cost.check_against(sys)?;
    let q = cost.q_blk();
    let r_inv = cost
        .r_blk()
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numeric("stacked R is not positive definite".into()))?
        .inverse();
    let dim = sys.state_dim();
    let inner = DMatrix::identity(dim, dim) + &ops.f * r_inv * ops.f.transpose() * q;
    let solved = inner
        .lu()
        .solve(&ops.g)
        .ok_or_else(|| Error::Numeric("benchmark inner matrix is singular".into()))?;
    let o = ops.g.transpose() * q * solved;
    BenchmarkOperator::from_matrix(symmetrize(&o), sys.dims().0)
}

/// Clairvoyant input sequence `ũ* = −(ℛ + Fᵀ𝒬F)⁻¹Fᵀ𝒬Gδ`, stacked.
pub fn noncausal_control(
    sys: &LtvSystem,
    ops: &StackedOperators,
    cost: &CostSpec,
    delta: &DVector<f64>,
) -> Result<DVector<f64>> {
    if delta.len() != sys.delta_dim() {
        return Err(Error::Dimension(format!(
            "delta has length {}, expected {}",
            delta.len(),
            sys.delta_dim()
        )));
    }
    Ok(noncausal_gain(ops, cost)? * delta)
}

/// The linear map `δ ↦ ũ*(δ)`.
pub fn noncausal_gain(ops: &StackedOperators, cost: &CostSpec) -> Result<DMatrix<f64>> {
    let q = cost.q_blk();
    let hess = symmetrize(&(cost.r_blk() + ops.f.transpose() * q * &ops.f));
    let chol = hess
        .cholesky()
        .ok_or_else(|| Error::Numeric("ℛ + Fᵀ𝒬F is not positive definite".into()))?;
    Ok(-chol.solve(&(ops.f.transpose() * q * &ops.g)))
}

/// `J = Σ_k x_kᵀQ_k x_k + u_kᵀR_k u_k` along the simulated trajectory.
pub fn evaluate_cost(
    sys: &LtvSystem,
    cost: &CostSpec,
    x0: &DVector<f64>,
    u: &[DVector<f64>],
    w: &[DVector<f64>],
) -> Result<f64> {
    cost.check_against(sys)?;
    let xs = sys.simulate(x0, u, w)?;
    Ok(trajectory_cost(cost, &xs, u))
}

pub fn trajectory_cost(cost: &CostSpec, xs: &[DVector<f64>], us: &[DVector<f64>]) -> f64 {
    let sx: f64 = xs.iter().enumerate().map(|(k, x)| x.dot(&(cost.q(k) * x))).sum();
    let su: f64 = us.iter().enumerate().map(|(k, u)| u.dot(&(cost.r(k) * u))).sum();
    sx + su
}
