//! Test-side instance generators and oracles.
//!
//! Everything here is computed from the raw system matrices by direct
//! simulation, least squares or dense eigen-decomposition, so it shares no
//! code with the operators the library builds.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use regret_synth::conic::SolverSettings;
use regret_synth::operators::{CostSpec, LtvSystem, Tolerances};
use regret_synth::slp::{Controller, SystemResponse};

pub struct Case {
    pub sys: LtvSystem,
    pub cost: CostSpec,
    pub x0: DVector<f64>,
    pub shape: DMatrix<f64>,
}

pub fn settings() -> SolverSettings {
    SolverSettings::default()
}

pub fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal))
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn random_pd(rng: &mut ChaCha8Rng, n: usize, floor: f64) -> DMatrix<f64> {
    let l = gaussian(rng, n, n);
    &l * l.transpose() * (1.0 / n as f64) + DMatrix::identity(n, n) * floor
}

/// Random LTV instance with `E_k` of full row rank, so `n ≤ p ≤ 2`.
pub fn random_case(seed: u64, max_t: usize) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=2);
    let m = rng.gen_range(1..=2);
    let p = rng.gen_range(n..=2);
    let t = rng.gen_range(2..=max_t);
    random_case_dims(&mut rng, n, m, p, t)
}

pub fn random_case_dims(rng: &mut ChaCha8Rng, n: usize, m: usize, p: usize, t: usize) -> Case {
    let a0 = DMatrix::identity(n, n) * 0.9 + gaussian(rng, n, n) * 0.3;
    let b0 = gaussian(rng, n, m);
    let a: Vec<_> = (0..=t).map(|_| &a0 + gaussian(rng, n, n) * 0.05).collect();
    let b: Vec<_> = (0..=t).map(|_| &b0 + gaussian(rng, n, m) * 0.05).collect();
    let e: Vec<_> = (0..t)
        .map(|_| loop {
            let cand = gaussian(rng, n, p) * 0.5;
            if cand.clone().svd(false, false).singular_values.min() > 0.1 {
                break cand;
            }
        })
        .collect();
    let sys = LtvSystem::new(a, b, e).unwrap();
    let q = random_pd(rng, n, 0.2);
    let r = random_pd(rng, m, 0.1);
    let cost = CostSpec::time_invariant(q, r, t, Tolerances::default()).unwrap();
    let mut x0 = gaussian_vec(rng, n);
    x0 /= x0.norm().max(1e-3);
    let shape = random_pd(rng, p, 0.5) * 4.0;
    Case { sys, cost, x0, shape }
}

/// `(F, G)` with `x = F u + G δ`, assembled column by column from open-loop rollouts.
pub fn open_loop_maps(sys: &LtvSystem) -> (DMatrix<f64>, DMatrix<f64>) {
    let (n, m, p) = sys.dims();
    let t = sys.horizon();
    let roll = |x0: DVector<f64>, u: Vec<DVector<f64>>, w: Vec<DVector<f64>>| -> DVector<f64> {
        let mut xs = vec![x0];
        for k in 0..t {
            let next = sys.a(k) * &xs[k] + sys.b(k) * &u[k] + sys.e(k) * &w[k];
            xs.push(next);
        }
        stack(&xs)
    };
    let zeros_u = || vec![DVector::zeros(m); t + 1];
    let zeros_w = || vec![DVector::zeros(p); t];
    let mut f = DMatrix::zeros(n * (t + 1), m * (t + 1));
    for c in 0..m * (t + 1) {
        let mut u = zeros_u();
        u[c / m][c % m] = 1.0;
        f.set_column(c, &roll(DVector::zeros(n), u, zeros_w()));
    }
    let d = n + p * t;
    let mut g = DMatrix::zeros(n * (t + 1), d);
    for c in 0..d {
        let mut x0 = DVector::zeros(n);
        let mut w = zeros_w();
        if c < n {
            x0[c] = 1.0;
        } else {
            w[(c - n) / p][(c - n) % p] = 1.0;
        }
        g.set_column(c, &roll(x0, zeros_u(), w));
    }
    (f, g)
}

pub fn stack(parts: &[DVector<f64>]) -> DVector<f64> {
    let len = parts.iter().map(|v| v.len()).sum();
    let mut out = DVector::zeros(len);
    let mut at = 0;
    for v in parts {
        out.rows_mut(at, v.len()).copy_from(v);
        at += v.len();
    }
    out
}

pub fn block_diag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let r: usize = blocks.iter().map(|b| b.nrows()).sum();
    let c: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(r, c);
    let (mut i, mut j) = (0, 0);
    for b in blocks {
        out.view_mut((i, j), b.shape()).copy_from(b);
        i += b.nrows();
        j += b.ncols();
    }
    out
}

pub fn cost_blocks(sys: &LtvSystem, cost: &CostSpec) -> (DMatrix<f64>, DMatrix<f64>) {
    let t = sys.horizon();
    let q: Vec<_> = (0..=t).map(|k| cost.q(k).clone()).collect();
    let r: Vec<_> = (0..=t).map(|k| cost.r(k).clone()).collect();
    (block_diag(&q), block_diag(&r))
}

/// Clairvoyant cost matrix from the normal equations of `min_u J(u; δ)`.
pub fn benchmark_oracle(sys: &LtvSystem, cost: &CostSpec) -> DMatrix<f64> {
    let (f, g) = open_loop_maps(sys);
    let (q, r) = cost_blocks(sys, cost);
    let h = &r + f.transpose() * &q * &f;
    let cross = f.transpose() * &q * &g;
    let sol = h.cholesky().expect("R + FᵀQF is PD").solve(&cross);
    let o = g.transpose() * &q * &g - cross.transpose() * sol;
    (&o + o.transpose()) * 0.5
}

/// `Φᵀ𝒞Φ − 𝒪` from dense maps.
pub fn regret_matrix(sys: &LtvSystem, cost: &CostSpec, phi: &SystemResponse, o: &DMatrix<f64>) -> DMatrix<f64> {
    let (q, r) = cost_blocks(sys, cost);
    let px = phi.phi_x();
    let pu = phi.phi_u();
    let m = px.transpose() * q * &px + pu.transpose() * r * &pu - o;
    (&m + m.transpose()) * 0.5
}

/// Largest `λ` of the pencil `(M, W)` through a Cholesky factor of `W`.
pub fn pencil_max(m: &DMatrix<f64>, w: &DMatrix<f64>) -> f64 {
    let l = w.clone().cholesky().expect("W is PD").l();
    let li = l.clone().try_inverse().unwrap();
    let s = &li * m * li.transpose();
    let s = (&s + s.transpose()) * 0.5;
    s.symmetric_eigen().eigenvalues.max()
}

/// Closed-loop trajectory under `K`, stepping the raw dynamics.
pub fn closed_loop(
    sys: &LtvSystem,
    k: &Controller,
    x0: &DVector<f64>,
    w: &[DVector<f64>],
) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
    let t = sys.horizon();
    let mut xs = vec![x0.clone()];
    let mut us = Vec::with_capacity(t + 1);
    for step in 0..=t {
        let uk = k.input(step, &xs);
        if step < t {
            let next = sys.a(step) * &xs[step] + sys.b(step) * &uk + sys.e(step) * &w[step];
            xs.push(next);
        }
        us.push(uk);
    }
    (xs, us)
}

pub fn realised_cost(cost: &CostSpec, xs: &[DVector<f64>], us: &[DVector<f64>]) -> f64 {
    let mut j = 0.0;
    for (k, (x, u)) in xs.iter().zip(us).enumerate() {
        j += (x.transpose() * cost.q(k) * x)[(0, 0)] + (u.transpose() * cost.r(k) * u)[(0, 0)];
    }
    j
}

pub fn split_w(sys: &LtvSystem, delta: &DVector<f64>) -> (DVector<f64>, Vec<DVector<f64>>) {
    let (n, _, p) = sys.dims();
    let x0 = delta.rows(0, n).into_owned();
    let w = (0..sys.horizon()).map(|k| delta.rows(n + p * k, p).into_owned()).collect();
    (x0, w)
}

/// Expected LQR cost under unit-covariance `x0` and `w_k` from the backward Riccati recursion.
pub fn riccati_expected_cost(sys: &LtvSystem, cost: &CostSpec) -> f64 {
    let t = sys.horizon();
    let mut p = cost.q(t).clone();
    let mut total = 0.0;
    for k in (0..t).rev() {
        let (a, b, e) = (sys.a(k), sys.b(k), sys.e(k));
        total += (e.transpose() * &p * e).trace();
        let h = cost.r(k) + b.transpose() * &p * b;
        let gain = h.cholesky().unwrap().solve(&(b.transpose() * &p * a));
        let next = cost.q(k) + a.transpose() * &p * a - a.transpose() * &p * b * gain;
        p = (&next + next.transpose()) * 0.5;
    }
    total + p.trace()
}

/// `max (δᵀMδ)/(δᵀWδ)` over `δ = [x0; w]`, `wᵀPw ≤ 1`, `p ≤ 2`, by a polar grid with local refinement.
pub fn single_ellipsoid_ratio(m: &DMatrix<f64>, w: &DMatrix<f64>, x0: &DVector<f64>, shape: &DMatrix<f64>) -> f64 {
    let n = x0.len();
    let p = shape.nrows();
    assert!(p <= 2 && m.nrows() == n + p);
    let eig = shape.clone().symmetric_eigen();
    let root_inv = &eig.eigenvectors
        * DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v.sqrt()))
        * eig.eigenvectors.transpose();
    let ratio = |r: f64, th: f64| -> f64 {
        let r = r.clamp(0.0, 1.0);
        let dir = if p == 1 { DVector::from_element(1, th.cos().signum()) } else { DVector::from_vec(vec![th.cos(), th.sin()]) };
        let wv = &root_inv * dir * r;
        let d = stack(&[x0.clone(), wv]);
        let num = (d.transpose() * m * &d)[(0, 0)];
        let den = (d.transpose() * w * &d)[(0, 0)];
        num / den
    };
    let (nr, nt) = (200, if p == 1 { 2 } else { 720 });
    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    for i in 0..=nr {
        let r = i as f64 / nr as f64;
        for j in 0..nt {
            let th = if p == 1 { std::f64::consts::PI * j as f64 } else { 2.0 * std::f64::consts::PI * j as f64 / nt as f64 };
            let v = ratio(r, th);
            if v > best.0 {
                best = (v, r, th);
            }
        }
    }
    let (mut hr, mut ht) = (0.5 / nr as f64, std::f64::consts::PI / nt as f64);
    for _ in 0..200 {
        let mut moved = false;
        for (dr, dt) in [(hr, 0.0), (-hr, 0.0), (0.0, ht), (0.0, -ht)] {
            if p == 1 && dt != 0.0 {
                continue;
            }
            let (r, th) = ((best.1 + dr).clamp(0.0, 1.0), best.2 + dt);
            let v = ratio(r, th);
            if v > best.0 {
                best = (v, r, th);
                moved = true;
            }
        }
        if !moved {
            hr *= 0.5;
            ht *= 0.5;
        }
    }
    best.0
}

pub fn workspace_file(rel: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}
