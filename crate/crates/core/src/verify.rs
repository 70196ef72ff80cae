//! Independent checks of synthesised responses: eigenvalue tightness,
//! vertex enumeration, local regret maximisation and analytic bounds.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{condition_number, inv_sqrt, max_eig, min_eig, quad, sym_eig, symmetrize, COND_LIMIT};
use crate::operators::{BenchmarkOperator, CostSpec, LtvSystem};
use crate::sim::sample_ellipsoid;
use crate::slp::SystemResponse;
use crate::synthesis::{RegretWeight, Synthesizer};

pub const VERTEX_BUDGET: usize = 100_000;

/// `Φᵀ𝒞Φ − 𝒪` over `δ`.
pub fn regret_operator(phi: &SystemResponse, cost: &CostSpec, o: &BenchmarkOperator) -> Result<DMatrix<f64>> {
    let full = phi.stacked();
    if full.ncols() != o.dim() || full.nrows() != cost.c().nrows() {
        return Err(Error::Dimension(format!(
            "response {:?} does not match cost {} / benchmark {}",
            full.shape(),
            cost.c().nrows(),
            o.dim()
        )));
    }
    Ok(symmetrize(&(full.transpose() * cost.c() * &full - o.matrix())))
}

/// `Φwᵀ𝒞Φw − 𝒪3`.
fn regret_operator_w(phi: &SystemResponse, cost: &CostSpec, o3: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let pw = phi.phi_w();
    if pw.ncols() != o3.nrows() {
        return Err(Error::Dimension(format!("Φw has {} columns, 𝒪3 is {}×{}", pw.ncols(), o3.nrows(), o3.ncols())));
    }
    Ok(symmetrize(&(pw.transpose() * cost.c() * &pw - o3)))
}

/// Smallest eigenvalue of the regret operator, nonnegative for achievable causal `Φ`.
pub fn min_regret_eigenvalue(phi: &SystemResponse, cost: &CostSpec, o: &BenchmarkOperator) -> Result<f64> {
    Ok(min_eig(&regret_operator(phi, cost, o)?))
}

/// `λmax(𝒲3^{-1/2}(Φwᵀ𝒞Φw − 𝒪3)𝒲3^{-1/2})`.
pub fn tight_level_zero_init(
    phi: &SystemResponse,
    cost: &CostSpec,
    o3: &DMatrix<f64>,
    w3: &DMatrix<f64>,
) -> Result<f64> {
    let s = inv_sqrt(w3, "W3")?;
    Ok(max_eig(&symmetrize(&(&s * regret_operator_w(phi, cost, o3)? * &s))))
}

/// Same level over the full `δ` with `𝒲` and `𝒪`.
pub fn tight_level_adversarial(
    phi: &SystemResponse,
    cost: &CostSpec,
    o: &BenchmarkOperator,
    w: &RegretWeight,
) -> Result<f64> {
    let s = inv_sqrt(w.matrix(), "W")?;
    Ok(max_eig(&symmetrize(&(&s * regret_operator(phi, cost, o)? * &s))))
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorstCase {
    /// Stacked `w` over the horizon.
    pub w: DVector<f64>,
    pub level: f64,
    /// The top eigenvalue is repeated, so `w` is one of many maximisers.
    pub degenerate: bool,
}

/// `w = 𝒲3^{-1/2}v` for the top unit eigenvector `v`.
pub fn worst_case_disturbance_zero_init(
    phi: &SystemResponse,
    cost: &CostSpec,
    o3: &DMatrix<f64>,
    w3: &DMatrix<f64>,
) -> Result<WorstCase> {
    let s = inv_sqrt(w3, "W3")?;
    let inner = symmetrize(&(&s * regret_operator_w(phi, cost, o3)? * &s));
    let (vals, vecs) = sym_eig(&inner);
    let d = vals.len();
    if d == 0 {
        return Err(Error::Dimension("empty disturbance space".into()));
    }
    let top = vals[d - 1];
    let degenerate = d > 1 && (top - vals[d - 2]).abs() <= 1e-9 * top.abs().max(1.0);
    Ok(WorstCase { w: &s * vecs.column(d - 1), level: top, degenerate })
}

/// `δᵀAδ / δᵀBδ`.
pub fn rayleigh(a: &DMatrix<f64>, b: &DMatrix<f64>, delta: &DVector<f64>) -> f64 {
    quad(a, delta) / quad(b, delta)
}

/// Smallest `μ` with `δᵀ(Φᵀ𝒞Φ − 𝒪 − μ𝒲)δ ≤ 0` at every sequence of vertices of 𝕎,
/// found by bisection on `[0, adversarial tight level]`.
pub fn polytopic_exact_level(
    phi: &SystemResponse,
    cost: &CostSpec,
    o: &BenchmarkOperator,
    w: &RegretWeight,
    x0: &DVector<f64>,
    vertices: &[DVector<f64>],
) -> Result<f64> {
    let n = x0.len();
    let t = phi.horizon();
    let count = (vertices.len() as f64).powi(t as i32);
    if count > VERTEX_BUDGET as f64 {
        return Err(Error::Budget { count, limit: VERTEX_BUDGET });
    }
    if vertices.is_empty() {
        return Err(Error::Invalid("polytope has no vertices".into()));
    }
    let m = regret_operator(phi, cost, o)?;
    let wm = w.matrix();
    let p = vertices[0].len();
    if n + p * t != m.nrows() || vertices.iter().any(|v| v.len() != p) {
        return Err(Error::Dimension("vertices or x0 do not match the response".into()));
    }
    let nv = vertices.len();
    let mut index = vec![0usize; t];
    let mut delta = DVector::zeros(n + p * t);
    delta.rows_mut(0, n).copy_from(x0);
    let mut pairs = Vec::with_capacity(count as usize);
    loop {
        for (j, &i) in index.iter().enumerate() {
            delta.rows_mut(n + p * j, p).copy_from(&vertices[i]);
        }
        pairs.push((quad(&m, &delta), quad(wm, &delta)));
        let mut pos = 0;
        while pos < t {
            index[pos] += 1;
            if index[pos] < nv {
                break;
            }
            index[pos] = 0;
            pos += 1;
        }
        if pos == t {
            break;
        }
    }
    let violated = |mu: f64| pairs.iter().any(|&(a, b)| a - mu * b > 0.0);
    if !violated(0.0) {
        return Ok(0.0);
    }
    let mut hi = tight_level_adversarial(phi, cost, o, w)?.max(0.0);
    let mut lo = 0.0;
    while violated(hi) {
        // guards against round-off in the eigenvalue bracket
        hi = hi * 2.0 + 1e-12;
    }
    while hi - lo > 1e-9 * hi.max(1e-9) {
        let mid = 0.5 * (lo + hi);
        if violated(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// `max_{‖v‖≤r} vᵀAv + 2bᵀv + c` and a maximiser, by eigendecomposition and
/// the secular equation, including the hard case.
pub fn trust_region_max(a: &DMatrix<f64>, b: &DVector<f64>, c: f64, radius: f64) -> (f64, DVector<f64>) {
    let d = b.len();
    let f = |v: &DVector<f64>| quad(a, v) + 2.0 * b.dot(v) + c;
    if d == 0 || radius <= 0.0 {
        return (c, DVector::zeros(d));
    }
    let (vals, vecs) = sym_eig(&symmetrize(a));
    let beta = vecs.transpose() * b;
    let top = vals[d - 1];
    let scale = vals.amax().max(b.amax()).max(1e-300);
    let bnorm = b.norm();
    let tiny = 1e-12 * bnorm.max(scale);
    let coords = |nu: f64, skip_top: bool| {
        DVector::from_fn(d, |i, _| {
            let gap = nu - vals[i];
            if skip_top && gap.abs() <= 1e-12 * scale {
                0.0
            } else {
                beta[i] / gap
            }
        })
    };
    let lo = top.max(0.0);
    if top < 0.0 {
        let y = coords(0.0, false);
        if y.norm() <= radius {
            let v = &vecs * y;
            return (f(&v), v);
        }
    } else {
        let on_top = (0..d).any(|i| (vals[i] - top).abs() <= 1e-12 * scale && beta[i].abs() > tiny);
        if !on_top {
            let y = coords(top, true);
            let rest = y.norm();
            if rest <= radius {
                // hard case: fill the remaining radius along the top eigenvector
                let mut v = &vecs * y;
                let tau = (radius * radius - rest * rest).max(0.0).sqrt();
                let best = [1.0, -1.0]
                    .iter()
                    .map(|s| &v + vecs.column(d - 1) * (s * tau))
                    .max_by(|x, y| f(x).total_cmp(&f(y)))
                    .unwrap_or_else(|| v.clone());
                v = best;
                return (f(&v), v);
            }
        }
    }
    let mut lo_nu = lo;
    let mut hi_nu = lo + bnorm / radius + 1e-300;
    while coords(hi_nu, false).norm() > radius {
        hi_nu = lo + 2.0 * (hi_nu - lo);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo_nu + hi_nu);
        if mid <= lo_nu || mid >= hi_nu {
            break;
        }
        if coords(mid, false).norm() > radius {
            lo_nu = mid;
        } else {
            hi_nu = mid;
        }
    }
    let mut v = &vecs * coords(hi_nu, false);
    let nv = v.norm();
    if nv > 0.0 {
        v *= radius / nv;
    }
    (f(&v), v)
}

/// `max_{‖w‖²≤ω} δᵀ(Φᵀ𝒞Φ − 𝒪 − μ𝒲)δ` with `δ = [x0; w]`, and the maximising `w`.
pub fn energy_ball_worst_excess(
    phi: &SystemResponse,
    cost: &CostSpec,
    o: &BenchmarkOperator,
    w: &RegretWeight,
    mu: f64,
    x0: &DVector<f64>,
    omega: f64,
) -> Result<(f64, DVector<f64>)> {
    let n = x0.len();
    let m = regret_operator(phi, cost, o)? - w.matrix() * mu;
    let d = m.nrows() - n;
    let a = m.view((n, n), (d, d)).into_owned();
    let b = m.view((n, 0), (d, n)) * x0;
    let c = quad(&m.view((0, 0), (n, n)).into_owned(), x0);
    Ok(trust_region_max(&a, &b, c, omega.sqrt()))
}

/// Exact pointwise level of a single-step response: smallest `μ` with
/// `max_{wᵀPw≤1} δᵀ(Φᵀ𝒞Φ − 𝒪 − μ𝒲)δ ≤ 0`, by bisection on `μ`.
pub fn single_step_exact_level(
    phi: &SystemResponse,
    cost: &CostSpec,
    o: &BenchmarkOperator,
    w: &RegretWeight,
    x0: &DVector<f64>,
    shape: &DMatrix<f64>,
) -> Result<f64> {
    if phi.horizon() != 1 {
        return Err(Error::Invalid(format!("exact level needs T = 1, got T = {}", phi.horizon())));
    }
    let n = x0.len();
    let rm = regret_operator(phi, cost, o)?;
    let s = inv_sqrt(shape, "P")?;
    let mut lift = DMatrix::zeros(rm.nrows(), rm.nrows());
    lift.view_mut((0, 0), (n, n)).fill_with_identity();
    let p = s.nrows();
    lift.view_mut((n, n), (p, p)).copy_from(&s);
    let rm = lift.transpose() * rm * &lift;
    let wm = lift.transpose() * w.matrix() * &lift;
    let excess = |mu: f64| {
        let m = &rm - &wm * mu;
        let a = m.view((n, n), (p, p)).into_owned();
        let b = m.view((n, 0), (p, n)) * x0;
        let c = quad(&m.view((0, 0), (n, n)).into_owned(), x0);
        trust_region_max(&a, &b, c, 1.0).0
    };
    if excess(0.0) <= 0.0 {
        return Ok(0.0);
    }
    let mut lo = 0.0;
    let mut hi = tight_level_adversarial(phi, cost, o, w)?.max(1e-12);
    while excess(hi) > 0.0 {
        hi *= 2.0;
    }
    while hi - lo > 1e-12 * hi.max(1e-12) {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if excess(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// Primal estimate of the auxiliary regret maximisation over `𝕎^T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxiliaryEstimate {
    /// Largest `δᵀ(Φᵀ𝒞Φ − 𝒪)δ` found.
    pub regret: f64,
    /// `regret / δ*ᵀδ*` at the maximiser.
    pub p_star: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalBound {
    /// Best generalised regret ratio found; a lower bound on the true level of `Φ`.
    pub value: f64,
    /// Stacked maximiser `w`.
    pub w: Vec<f64>,
    pub restarts: usize,
    pub auxiliary: AuxiliaryEstimate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AscentSettings {
    pub restarts: usize,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for AscentSettings {
    fn default() -> Self {
        Self { restarts: 50, max_iter: 400, seed: 0 }
    }
}

type ValueGrad<'a> = dyn Fn(&DVector<f64>) -> (f64, DVector<f64>) + 'a;

fn project(w: &mut DVector<f64>, shape: &DMatrix<f64>, p: usize, t: usize) {
    for j in 0..t {
        let mut blk = w.rows_mut(p * j, p);
        let r = blk.dot(&(shape * &blk));
        if r > 1.0 {
            blk /= r.sqrt();
        }
    }
}

/// Projected ascent of `f(w)` over `𝕎^T` from `w`, with backtracking.
fn ascend(
    f: &ValueGrad<'_>,
    mut w: DVector<f64>,
    shape: &DMatrix<f64>,
    p: usize,
    t: usize,
    step0: f64,
    max_iter: usize,
) -> (f64, DVector<f64>) {
    project(&mut w, shape, p, t);
    let (mut val, mut grad) = f(&w);
    let mut step = step0;
    for _ in 0..max_iter {
        let mut improved = false;
        for _ in 0..30 {
            let mut cand = &w + &grad * step;
            project(&mut cand, shape, p, t);
            let (cv, cg) = f(&cand);
            if cv > val {
                let gain = cv - val;
                w = cand;
                val = cv;
                grad = cg;
                step *= 1.5;
                improved = gain > 1e-14 * val.abs().max(1e-300);
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    (val, w)
}

/// Multi-restart projected ascent of `δᵀ(Φᵀ𝒞Φ − 𝒪)δ / δᵀ𝒲δ` over `w ∈ 𝕎^T`.
#[allow(clippy::too_many_arguments)]
pub fn local_level_lower_bound(
    phi: &SystemResponse,
    cost: &CostSpec,
    o: &BenchmarkOperator,
    w: &RegretWeight,
    x0: &DVector<f64>,
    shape: &DMatrix<f64>,
    settings: &AscentSettings,
) -> Result<LocalBound> {
    let n = x0.len();
    let t = phi.horizon();
    let p = shape.nrows();
    let m = regret_operator(phi, cost, o)?;
    let wm = w.matrix().clone();
    if m.nrows() != n + p * t {
        return Err(Error::Dimension("P or x0 does not match the response".into()));
    }
    let lift = |wv: &DVector<f64>| {
        let mut d = DVector::zeros(n + p * t);
        d.rows_mut(0, n).copy_from(x0);
        d.rows_mut(n, p * t).copy_from(wv);
        d
    };
    let ratio = |wv: &DVector<f64>| {
        let d = lift(wv);
        let md = &m * &d;
        let wd = &wm * &d;
        let a = d.dot(&md);
        let b = d.dot(&wd);
        if b <= 1e-300 {
            return (0.0, DVector::zeros(p * t));
        }
        let g = (md.rows(n, p * t) * b - wd.rows(n, p * t) * a) * (2.0 / (b * b));
        (a / b, g)
    };
    let regret = |wv: &DVector<f64>| {
        let d = lift(wv);
        let md = &m * &d;
        (d.dot(&md), md.rows(n, p * t) * 2.0)
    };
    let lip = 2.0 * max_eig(&m).abs().max(min_eig(&m).abs()).max(1e-12);
    let step0 = min_eig(&wm).max(1e-12) / lip;
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut starts = Vec::with_capacity(settings.restarts.max(1));
    if t > 0 {
        // boundary-scaled top eigen-direction of the disturbance block
        let (_, vecs) = sym_eig(&m.view((n, n), (p * t, p * t)).into_owned());
        starts.push(vecs.column(p * t - 1) * 1e3);
    }
    while starts.len() < settings.restarts.max(1) {
        let mut wv = DVector::zeros(p * t);
        for j in 0..t {
            wv.rows_mut(p * j, p).copy_from(&sample_ellipsoid(&mut rng, shape)?);
        }
        starts.push(wv);
    }
    let mut best = (f64::NEG_INFINITY, DVector::zeros(p * t));
    let mut best_regret = (f64::NEG_INFINITY, DVector::zeros(p * t));
    for s in &starts {
        let r = ascend(&ratio, s.clone(), shape, p, t, step0, settings.max_iter);
        if r.0 > best.0 {
            best = r;
        }
        let g = ascend(&regret, s.clone(), shape, p, t, 1.0 / lip, settings.max_iter);
        if g.0 > best_regret.0 {
            best_regret = g;
        }
    }
    let d_star = lift(&best_regret.1);
    let norm2 = d_star.dot(&d_star);
    Ok(LocalBound {
        value: best.0.max(0.0),
        w: best.1.as_slice().to_vec(),
        restarts: starts.len(),
        auxiliary: AuxiliaryEstimate {
            regret: best_regret.0,
            p_star: if norm2 > 0.0 { best_regret.0 / norm2 } else { 0.0 },
        },
    })
}

/// `2/(πκ(𝒲))`.
pub fn suboptimality_floor(w: &RegretWeight) -> Result<f64> {
    let kappa = condition_number(w.matrix());
    if !kappa.is_finite() || kappa > COND_LIMIT {
        return Err(Error::IllConditioned { what: "W".into(), cond: kappa, limit: COND_LIMIT });
    }
    Ok(2.0 / (std::f64::consts::PI * kappa))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainReport {
    /// Energy-ball level at `ω = T/σmin(P)`.
    pub mu_energy: f64,
    pub omega: f64,
    pub mu_pointwise: f64,
    pub floor: f64,
    /// Local lower estimate of the true pointwise level.
    pub lower_estimate: f64,
    /// `floor·μ̄* ≤ μ̄* ≤ μ*` within tolerance.
    pub holds: bool,
    /// `floor·μ̄* − lower_estimate` if positive; reported, never asserted.
    pub soft_gap: f64,
    pub tolerance: f64,
}

/// Solves both ellipsoidal programs and checks `(2/(πκ))μ̄* ≤ μ̄* ≤ μ*`.
pub fn check_inequality_chain(
    syn: &Synthesizer<'_>,
    o: &BenchmarkOperator,
    w: &RegretWeight,
    x0: &DVector<f64>,
    shape: &DMatrix<f64>,
    ascent: &AscentSettings,
) -> Result<ChainReport> {
    let sys: &LtvSystem = syn.system();
    let omega = sys.horizon() as f64 / min_eig(&symmetrize(shape));
    let energy = syn.energy_ball(o, w, x0, omega, None)?;
    let pwb = syn.pointwise(o, w, x0, shape, None)?;
    let mu_energy = energy.level()?;
    let mu_pointwise = pwb.level()?;
    let floor = suboptimality_floor(w)?;
    let local = local_level_lower_bound(pwb.response()?, syn.cost(), o, w, x0, shape, ascent)?;
    let tolerance = 1e-6;
    let holds = floor * mu_pointwise <= mu_pointwise + tolerance && mu_pointwise <= mu_energy + tolerance;
    Ok(ChainReport {
        mu_energy,
        omega,
        mu_pointwise,
        floor,
        lower_estimate: local.value,
        holds,
        soft_gap: (floor * mu_pointwise - local.value).max(0.0),
        tolerance,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub samples: usize,
    /// `max(δᵀ(Φᵀ𝒞Φ − 𝒪)δ − μδᵀ𝒲δ)` over the samples.
    pub max_excess: f64,
    /// `max(excess / (1 + μδᵀ𝒲δ))`.
    pub max_relative_excess: f64,
    pub worst_index: Option<usize>,
}

impl CertificateReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_excess <= tol
    }
}

/// Checks `J(δ) − δᵀ𝒪δ ≤ μ δᵀ𝒲δ` on each stacked `δ`.
pub fn check_certificate(
    phi: &SystemResponse,
    cost: &CostSpec,
    o: &BenchmarkOperator,
    w: &RegretWeight,
    mu: f64,
    deltas: &[DVector<f64>],
) -> Result<CertificateReport> {
    let m = regret_operator(phi, cost, o)?;
    let mut report = CertificateReport {
        samples: deltas.len(),
        max_excess: f64::NEG_INFINITY,
        max_relative_excess: f64::NEG_INFINITY,
        worst_index: None,
    };
    for (i, d) in deltas.iter().enumerate() {
        if d.len() != m.nrows() {
            return Err(Error::Dimension(format!("sample {i} has length {}", d.len())));
        }
        let weighted = mu * quad(w.matrix(), d);
        let excess = quad(&m, d) - weighted;
        report.max_relative_excess = report.max_relative_excess.max(excess / (1.0 + weighted.abs()));
        if excess > report.max_excess {
            report.max_excess = excess;
            report.worst_index = Some(i);
        }
    }
    Ok(report)
}
