//! System responses `Φ = [Φx; Φu]` mapping `δ` to the closed-loop `(x, u)`.
//!
//! Responses are stored as block rows. Row `k` of a causal response only
//! keeps the `n + p·k` columns that `x_k` or `u_k` may depend on, so the zero
//! upper part is structural.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{LtvSystem, StackedOperators};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Causality {
    Causal,
    /// Full block response, used for clairvoyant benchmarks.
    Noncausal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemResponse {
    x_rows: Vec<DMatrix<f64>>,
    u_rows: Vec<DMatrix<f64>>,
    causality: Causality,
    n: usize,
    m: usize,
    delta_dim: usize,
}

fn row_width(sys: &LtvSystem, causality: Causality, k: usize) -> usize {
    match causality {
        Causality::Causal => sys.causal_width(k),
        Causality::Noncausal => sys.delta_dim(),
    }
}

fn pad(m: &DMatrix<f64>, cols: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(m.nrows(), cols);
    out.view_mut((0, 0), m.shape()).copy_from(m);
    out
}

impl SystemResponse {
    /// Builds a response from dense `Φx` (n(T+1) × δ) and `Φu` (m(T+1) × δ).
    ///
    /// For a causal response every entry above the block diagonal must vanish
    /// (up to `1e-12` relative); those entries are then dropped.
    pub fn from_dense(
        sys: &LtvSystem,
        phi_x: &DMatrix<f64>,
        phi_u: &DMatrix<f64>,
        causality: Causality,
    ) -> Result<Self> {
        let (n, m, _) = sys.dims();
        let t = sys.horizon();
        let d = sys.delta_dim();
        if phi_x.shape() != (n * (t + 1), d) || phi_u.shape() != (m * (t + 1), d) {
            return Err(Error::Dimension(format!(
                "system response shapes {:?} / {:?}, expected ({}, {d}) / ({}, {d})",
                phi_x.shape(),
                phi_u.shape(),
                n * (t + 1),
                m * (t + 1)
            )));
        }
        let tol = 1e-12 * phi_x.amax().max(phi_u.amax()).max(1.0);
        let mut x_rows = Vec::with_capacity(t + 1);
        let mut u_rows = Vec::with_capacity(t + 1);
        for k in 0..=t {
            let w = row_width(sys, causality, k);
            for (full, rows, size) in [(phi_x, &mut x_rows, n), (phi_u, &mut u_rows, m)] {
                let block = full.rows(size * k, size);
                if w < d && block.columns(w, d - w).amax() > tol {
                    return Err(Error::Invalid(format!(
                        "response row {k} depends on future disturbances but was declared causal"
                    )));
                }
                rows.push(block.columns(0, w).into_owned());
            }
        }
        Ok(Self { x_rows, u_rows, causality, n, m, delta_dim: d })
    }

    pub fn causality(&self) -> Causality {
        self.causality
    }

    pub fn horizon(&self) -> usize {
        self.x_rows.len() - 1
    }

    pub fn delta_dim(&self) -> usize {
        self.delta_dim
    }

    /// Block row `k` of `Φx`, trimmed to its causal width.
    pub fn x_row(&self, k: usize) -> &DMatrix<f64> {
        &self.x_rows[k]
    }

    pub fn u_row(&self, k: usize) -> &DMatrix<f64> {
        &self.u_rows[k]
    }

    fn dense(rows: &[DMatrix<f64>], size: usize, cols: usize) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(size * rows.len(), cols);
        for (k, r) in rows.iter().enumerate() {
            out.view_mut((size * k, 0), r.shape()).copy_from(r);
        }
        out
    }

    pub fn phi_x(&self) -> DMatrix<f64> {
        Self::dense(&self.x_rows, self.n, self.delta_dim)
    }

    pub fn phi_u(&self) -> DMatrix<f64> {
        Self::dense(&self.u_rows, self.m, self.delta_dim)
    }

    /// `Φ = [Φx; Φu]`.
    pub fn stacked(&self) -> DMatrix<f64> {
        let px = self.phi_x();
        let pu = self.phi_u();
        let mut out = DMatrix::zeros(px.nrows() + pu.nrows(), self.delta_dim);
        out.rows_mut(0, px.nrows()).copy_from(&px);
        out.rows_mut(px.nrows(), pu.nrows()).copy_from(&pu);
        out
    }

    /// First `n` columns of `Φ` (response to `x_0`).
    pub fn phi_0(&self) -> DMatrix<f64> {
        self.stacked().columns(0, self.n).into_owned()
    }

    /// Remaining `pT` columns of `Φ` (response to `w`).
    pub fn phi_w(&self) -> DMatrix<f64> {
        self.stacked().columns(self.n, self.delta_dim - self.n).into_owned()
    }

    /// Closed-loop `(x, u)` for a given `δ`, stacked.
    pub fn apply(&self, delta: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        (self.phi_x() * delta, self.phi_u() * delta)
    }
}

/// Block-lower-triangular state-feedback gain, `u = 𝒦x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Controller {
    rows: Vec<DMatrix<f64>>,
    n: usize,
    m: usize,
}

impl Controller {
    pub fn zero(sys: &LtvSystem) -> Self {
        let (n, m, _) = sys.dims();
        let rows = (0..=sys.horizon()).map(|k| DMatrix::zeros(m, n * (k + 1))).collect();
        Self { rows, n, m }
    }

    /// From a dense `m(T+1) × n(T+1)` gain; entries above the block diagonal must be zero.
    pub fn from_dense(sys: &LtvSystem, k_mat: &DMatrix<f64>) -> Result<Self> {
        let (n, m, _) = sys.dims();
        let t = sys.horizon();
        if k_mat.shape() != (m * (t + 1), n * (t + 1)) {
            return Err(Error::Dimension(format!(
                "controller shape {:?}, expected ({}, {})",
                k_mat.shape(),
                m * (t + 1),
                n * (t + 1)
            )));
        }
        let tol = 1e-12 * k_mat.amax().max(1.0);
        let mut rows = Vec::with_capacity(t + 1);
        for k in 0..=t {
            let row = k_mat.rows(m * k, m);
            let w = n * (k + 1);
            if w < n * (t + 1) && row.columns(w, n * (t + 1) - w).amax() > tol {
                return Err(Error::Invalid(format!("controller row {k} is not causal")));
            }
            rows.push(row.columns(0, w).into_owned());
        }
        Ok(Self { rows, n, m })
    }

    pub fn horizon(&self) -> usize {
        self.rows.len() - 1
    }

    /// `K^{k,j}` for `j ≤ k`.
    pub fn gain(&self, k: usize, j: usize) -> DMatrix<f64> {
        self.rows[k].columns(self.n * j, self.n).into_owned()
    }

    pub fn row(&self, k: usize) -> &DMatrix<f64> {
        &self.rows[k]
    }

    pub fn dense(&self) -> DMatrix<f64> {
        let t = self.horizon();
        let mut out = DMatrix::zeros(self.m * (t + 1), self.n * (t + 1));
        for (k, r) in self.rows.iter().enumerate() {
            out.view_mut((self.m * k, 0), r.shape()).copy_from(r);
        }
        out
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { rows: self.rows.iter().map(|r| r * factor).collect(), n: self.n, m: self.m }
    }

    /// `u_k = Σ_{j≤k} K^{k,j} x_j` given the states observed so far.
    pub fn input(&self, k: usize, states: &[DVector<f64>]) -> DVector<f64> {
        let mut u = DVector::zeros(self.m);
        for (j, xj) in states.iter().enumerate().take(k + 1) {
            u += self.rows[k].columns(self.n * j, self.n) * xj;
        }
        u
    }
}

/// `‖[I−𝒵𝒜, −𝒵ℬ]Φ − ℰ‖_F`.
pub fn achievability_residual(phi: &SystemResponse, ops: &StackedOperators) -> Result<f64> {
    let px = phi.phi_x();
    let pu = phi.phi_u();
    if px.nrows() != ops.z.nrows() || pu.nrows() != ops.blk_b.ncols() || px.ncols() != ops.blk_e.ncols() {
        return Err(Error::Dimension("system response does not match the stacked operators".into()));
    }
    let za = &ops.z * &ops.blk_a;
    let zb = &ops.z * &ops.blk_b;
    let lhs = &px - za * &px - zb * &pu;
    Ok((lhs - &ops.blk_e).norm())
}

/// Right inverse of `ℰ = blkdiag(I, E_0, …, E_{T-1})`, as δ-block diagonals.
fn right_inverse_blocks(sys: &LtvSystem) -> Result<Vec<DMatrix<f64>>> {
    let (n, _, _) = sys.dims();
    let mut blocks = vec![DMatrix::identity(n, n)];
    for (k, e) in sys.e_seq().iter().enumerate() {
        let inv = (e * e.transpose()).try_inverse().ok_or(Error::SingularBlock(k + 1))?;
        blocks.push(e.transpose() * inv);
    }
    Ok(blocks)
}

/// Recovers `𝒦` with `Φu = 𝒦Φx` by block forward substitution.
///
/// `Φx` is mapped to the square unit-block-triangular `Ψx = Φx ℰ⁺` first, which
/// is exactly `Φx⁻¹`'s structure when every `E_k` is square.
pub fn recover_controller(sys: &LtvSystem, phi: &SystemResponse) -> Result<Controller> {
    if phi.causality() != Causality::Causal {
        return Err(Error::Invalid("cannot recover a causal controller from a non-causal response".into()));
    }
    let (n, m, _) = sys.dims();
    let t = sys.horizon();
    if phi.horizon() != t || phi.delta_dim() != sys.delta_dim() {
        return Err(Error::Dimension("system response does not match the system".into()));
    }
    let pinv = right_inverse_blocks(sys)?;
    let to_square = |row: &DMatrix<f64>, k: usize| -> Vec<DMatrix<f64>> {
        (0..=k)
            .map(|j| row.columns(sys.delta_offset(j), sys.delta_width(j)) * &pinv[j])
            .collect()
    };
    let psi_x: Vec<Vec<DMatrix<f64>>> = (0..=t).map(|k| to_square(phi.x_row(k), k)).collect();
    let mut diag_lu = Vec::with_capacity(t + 1);
    for (k, row) in psi_x.iter().enumerate() {
        let lu = row[k].clone().lu();
        if !lu.is_invertible() {
            return Err(Error::SingularBlock(k));
        }
        diag_lu.push(row[k].transpose().lu());
    }
    let mut rows = Vec::with_capacity(t + 1);
    for k in 0..=t {
        let psi_u = to_square(phi.u_row(k), k);
        let mut gains: Vec<DMatrix<f64>> = vec![DMatrix::zeros(m, n); k + 1];
        for j in (0..=k).rev() {
            let mut rhs = psi_u[j].clone();
            for (i, g) in gains.iter().enumerate().take(k + 1).skip(j + 1) {
                rhs -= g * &psi_x[i][j];
            }
            // K^{k,j} Ψx_{j,j} = rhs
            let sol = diag_lu[j].solve(&rhs.transpose()).ok_or(Error::SingularBlock(j))?;
            gains[j] = sol.transpose();
        }
        let mut row = DMatrix::zeros(m, n * (k + 1));
        for (j, g) in gains.iter().enumerate() {
            row.view_mut((0, n * j), (m, n)).copy_from(g);
        }
        rows.push(row);
    }
    let controller = Controller { rows, n, m };
    let mismatch = (controller.dense() * phi.phi_x() - phi.phi_u()).amax();
    if mismatch > 1e-6 * phi.phi_u().amax().max(1.0) {
        return Err(Error::NotRealisable(mismatch));
    }
    Ok(controller)
}

/// `Φx = (I − 𝒵(𝒜 + ℬ𝒦))⁻¹ℰ`, `Φu = 𝒦Φx`, by forward substitution.
pub fn closed_loop_response(sys: &LtvSystem, k: &Controller) -> Result<SystemResponse> {
    let (n, m, p) = sys.dims();
    let t = sys.horizon();
    if k.horizon() != t || k.n != n || k.m != m {
        return Err(Error::Dimension("controller does not match the system".into()));
    }
    let mut x_rows: Vec<DMatrix<f64>> = Vec::with_capacity(t + 1);
    let mut u_rows: Vec<DMatrix<f64>> = Vec::with_capacity(t + 1);
    x_rows.push(DMatrix::identity(n, n));
    for step in 0..=t {
        let w = sys.causal_width(step);
        let mut u = DMatrix::zeros(m, w);
        for (j, xj) in x_rows.iter().enumerate() {
            u += k.gain(step, j) * pad(xj, w);
        }
        if step < t {
            let next_w = sys.causal_width(step + 1);
            let mut x = pad(&(sys.a(step) * &x_rows[step] + sys.b(step) * &u), next_w);
            x.view_mut((0, w), (n, p)).copy_from(sys.e(step));
            x_rows.push(x);
        }
        u_rows.push(u);
    }
    Ok(SystemResponse { x_rows, u_rows, causality: Causality::Causal, n, m, delta_dim: sys.delta_dim() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::build_stacked;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn system(rng: &mut ChaCha8Rng, n: usize, m: usize, p: usize, t: usize) -> LtvSystem {
        let a = (0..=t).map(|_| DMatrix::from_fn(n, n, |_, _| rng.gen_range(-0.9..0.9))).collect();
        let b = (0..=t).map(|_| DMatrix::from_fn(n, m, |_, _| rng.gen_range(-1.0..1.0))).collect();
        let e = (0..t)
            .map(|_| {
                let mut e = DMatrix::from_fn(n, p, |_, _| rng.gen_range(-0.3..0.3));
                for i in 0..n {
                    e[(i, i)] += 1.0;
                }
                e
            })
            .collect();
        LtvSystem::new(a, b, e).unwrap()
    }

    fn random_controller(rng: &mut ChaCha8Rng, sys: &LtvSystem) -> Controller {
        let (n, m, _) = sys.dims();
        let t = sys.horizon();
        let dense = DMatrix::from_fn(m * (t + 1), n * (t + 1), |i, j| {
            if j / n <= i / m {
                rng.gen_range(-0.5..0.5)
            } else {
                0.0
            }
        });
        Controller::from_dense(sys, &dense).unwrap()
    }

    #[test]
    fn open_loop_response() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sys = system(&mut rng, 2, 1, 2, 4);
        let ops = build_stacked(&sys).unwrap();
        let phi = closed_loop_response(&sys, &Controller::zero(&sys)).unwrap();
        assert!((phi.phi_x() - &ops.g).amax() < 1e-14);
        assert_eq!(phi.phi_u().amax(), 0.0);
        assert!(achievability_residual(&phi, &ops).unwrap() < 1e-12);
        assert_eq!(recover_controller(&sys, &phi).unwrap().dense().amax(), 0.0);
    }

    #[test]
    fn perturbed_response_violates_achievability() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let sys = system(&mut rng, 2, 1, 2, 3);
        let ops = build_stacked(&sys).unwrap();
        let phi = closed_loop_response(&sys, &random_controller(&mut rng, &sys)).unwrap();
        let mut px = phi.phi_x();
        px[(3, 1)] += 1.0;
        let bad = SystemResponse::from_dense(&sys, &px, &phi.phi_u(), Causality::Causal).unwrap();
        assert!(achievability_residual(&bad, &ops).unwrap() >= 0.1);
    }

    #[test]
    fn controller_round_trip_and_rollout() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (n, m, p, t) in [(1, 1, 1, 1), (2, 1, 2, 5), (1, 2, 2, 4), (2, 2, 2, 6)] {
            let sys = system(&mut rng, n, m, p, t);
            let ops = build_stacked(&sys).unwrap();
            let k0 = random_controller(&mut rng, &sys);
            let phi = closed_loop_response(&sys, &k0).unwrap();
            assert!(achievability_residual(&phi, &ops).unwrap() < 1e-9);
            let k1 = recover_controller(&sys, &phi).unwrap();
            assert!((k1.dense() - k0.dense()).amax() < 1e-8);
            let phi1 = closed_loop_response(&sys, &k1).unwrap();
            assert!((phi1.stacked() - phi.stacked()).norm() < 1e-7);
            for _ in 0..100 {
                let d = DVector::from_fn(sys.delta_dim(), |_, _| rng.gen_range(-1.0..1.0));
                let (x0, w) = sys.split_delta(&d);
                let mut xs = vec![x0];
                let mut us = Vec::new();
                for step in 0..=t {
                    let u = k1.input(step, &xs);
                    if step < t {
                        xs.push(sys.a(step) * &xs[step] + sys.b(step) * &u + sys.e(step) * &w[step]);
                    }
                    us.push(u);
                }
                let (xp, up) = phi.apply(&d);
                assert!((crate::linalg::stack(&xs) - xp).amax() < 1e-8);
                assert!((crate::linalg::stack(&us) - up).amax() < 1e-8);
            }
        }
    }

    #[test]
    fn causal_flag_rejects_future_dependence() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let sys = system(&mut rng, 1, 1, 1, 2);
        let ops = build_stacked(&sys).unwrap();
        let mut pu = DMatrix::zeros(3, 3);
        pu[(0, 2)] = 1.0;
        assert!(SystemResponse::from_dense(&sys, &ops.g, &pu, Causality::Causal).is_err());
        let nc = SystemResponse::from_dense(&sys, &ops.g, &pu, Causality::Noncausal).unwrap();
        assert!(recover_controller(&sys, &nc).is_err());
    }

    #[test]
    fn recovered_gain_is_structurally_causal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sys = system(&mut rng, 2, 2, 2, 4);
        let phi = closed_loop_response(&sys, &random_controller(&mut rng, &sys)).unwrap();
        let k = recover_controller(&sys, &phi).unwrap();
        let dense = k.dense();
        for r in 0..dense.nrows() {
            for c in 0..dense.ncols() {
                if c / 2 > r / 2 {
                    assert_eq!(dense[(r, c)], 0.0);
                }
            }
        }
    }
}
