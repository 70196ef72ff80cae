//! Closed-loop simulation, disturbance families and cost tables.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::linalg::{inv_sqrt, quad, stack};
use crate::operators::{trajectory_cost, BenchmarkOperator, CostSpec, LtvSystem};
use crate::slp::Controller;
use crate::synthesis::ConstraintSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    TruncatedGaussian,
    UniformEllipsoid,
    Constant,
    Sinusoidal,
    Sawtooth,
    Step,
    Stair,
}

impl FamilyKind {
    pub const ALL: [FamilyKind; 7] = [
        FamilyKind::TruncatedGaussian,
        FamilyKind::UniformEllipsoid,
        FamilyKind::Constant,
        FamilyKind::Sinusoidal,
        FamilyKind::Sawtooth,
        FamilyKind::Step,
        FamilyKind::Stair,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FamilyKind::TruncatedGaussian => "truncated_gaussian",
            FamilyKind::UniformEllipsoid => "uniform_ellipsoid",
            FamilyKind::Constant => "constant",
            FamilyKind::Sinusoidal => "sinusoidal",
            FamilyKind::Sawtooth => "sawtooth",
            FamilyKind::Step => "step",
            FamilyKind::Stair => "stair",
        }
    }

    pub fn is_random(self) -> bool {
        matches!(self, FamilyKind::TruncatedGaussian | FamilyKind::UniformEllipsoid)
    }
}

/// A disturbance family on `𝕎 = {w | wᵀPw ≤ 1}`.
///
/// Deterministic shapes are normalised so their peak lies on the boundary of 𝕎.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceFamily {
    pub kind: FamilyKind,
    /// Direction of deterministic shapes; defaults to the all-ones vector.
    pub direction: Option<Vec<f64>>,
    /// Period in steps of the sinusoid and sawtooth; defaults to the horizon.
    pub period: Option<f64>,
    /// First step of the step family; defaults to half the horizon.
    pub step_time: Option<usize>,
    /// Steps per stair; defaults to a quarter of the horizon.
    pub stair_width: Option<usize>,
}

impl DisturbanceFamily {
    pub fn new(kind: FamilyKind) -> Self {
        Self { kind, direction: None, period: None, step_time: None, stair_width: None }
    }

    pub fn all() -> Vec<Self> {
        FamilyKind::ALL.iter().map(|&k| Self::new(k)).collect()
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    fn profile(&self, t: usize) -> Result<Vec<f64>> {
        let tf = t as f64;
        let period = self.period.unwrap_or(tf.max(2.0));
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::Invalid(format!("period {period} must be positive")));
        }
        let raw: Vec<f64> = (0..t)
            .map(|k| {
                let kf = k as f64;
                match self.kind {
                    FamilyKind::Constant => 1.0,
                    FamilyKind::Sinusoidal => (2.0 * std::f64::consts::PI * (kf + 0.5) / period).sin(),
                    FamilyKind::Sawtooth => {
                        let per = period.round().max(1.0);
                        (kf % per + 1.0) / per
                    }
                    FamilyKind::Step => {
                        if k >= self.step_time.unwrap_or(t / 2) {
                            1.0
                        } else {
                            0.0
                        }
                    }
                    FamilyKind::Stair => (k / self.stair_width.unwrap_or((t / 4).max(1)).max(1) + 1) as f64,
                    FamilyKind::TruncatedGaussian | FamilyKind::UniformEllipsoid => 0.0,
                }
            })
            .collect();
        let peak = raw.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if peak == 0.0 {
            return Err(Error::Invalid(format!("{} family is identically zero on this horizon", self.name())));
        }
        Ok(raw.into_iter().map(|v| v / peak).collect())
    }
}

/// Uniform sample of `{w | wᵀPw ≤ 1}`.
pub fn sample_ellipsoid<R: Rng + ?Sized>(rng: &mut R, shape: &DMatrix<f64>) -> Result<DVector<f64>> {
    Ok(EllipsoidSampler::new(shape)?.uniform(rng))
}

/// Uniform sample of the Euclidean ball of the given radius.
pub fn sample_ball<R: Rng + ?Sized>(rng: &mut R, dim: usize, radius: f64) -> DVector<f64> {
    let g = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let norm = g.norm();
    if norm == 0.0 {
        return g;
    }
    let r: f64 = rng.gen::<f64>().powf(1.0 / dim as f64);
    g * (radius * r / norm)
}

#[derive(Debug, Clone)]
pub struct EllipsoidSampler {
    shape: DMatrix<f64>,
    inv_sqrt: DMatrix<f64>,
    /// `σ²` with `P(σ²χ²_p ≤ 1) = 1/2`.
    gauss_scale: f64,
}

impl EllipsoidSampler {
    pub fn new(shape: &DMatrix<f64>) -> Result<Self> {
        let p = shape.nrows();
        let inv_sqrt = inv_sqrt(shape, "P")?;
        let chi = ChiSquared::new(p as f64).map_err(|e| Error::Invalid(format!("χ² with {p} dof: {e}")))?;
        Ok(Self { shape: shape.clone(), inv_sqrt, gauss_scale: 1.0 / chi.inverse_cdf(0.5) })
    }

    pub fn dim(&self) -> usize {
        self.shape.nrows()
    }

    pub fn uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        &self.inv_sqrt * sample_ball(rng, self.dim(), 1.0)
    }

    /// Rejection sample of `N(0, σ²P⁻¹)` restricted to the ellipsoid.
    pub fn truncated_gaussian<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let s = self.gauss_scale.sqrt();
        loop {
            let g = DVector::from_fn(self.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
            if g.norm_squared() * self.gauss_scale <= 1.0 {
                return &self.inv_sqrt * g * s;
            }
        }
    }

    /// `d` scaled onto the boundary.
    pub fn to_boundary(&self, d: &DVector<f64>) -> Result<DVector<f64>> {
        let r = quad(&self.shape, d);
        if r <= 0.0 {
            return Err(Error::Invalid("direction must be nonzero".into()));
        }
        Ok(d / r.sqrt())
    }
}

/// RNG stream for realisation `index` of family `family`.
pub fn realisation_rng(seed: u64, family: usize, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((family as u64) << 32) | index as u64);
    rng
}

/// `count` disturbance sequences of length `T`; deterministic given `seed`.
pub fn generate(
    family: &DisturbanceFamily,
    sys: &LtvSystem,
    shape: &DMatrix<f64>,
    count: usize,
    seed: u64,
) -> Result<Vec<Vec<DVector<f64>>>> {
    let (_, _, p) = sys.dims();
    if shape.shape() != (p, p) {
        return Err(Error::Dimension(format!("P is {:?}, expected {p}×{p}", shape.shape())));
    }
    let t = sys.horizon();
    let sampler = EllipsoidSampler::new(shape)?;
    let fam_index = FamilyKind::ALL.iter().position(|&k| k == family.kind).unwrap_or(0);
    if family.kind.is_random() {
        return Ok((0..count)
            .map(|i| {
                let mut rng = realisation_rng(seed, fam_index, i);
                (0..t)
                    .map(|_| match family.kind {
                        FamilyKind::TruncatedGaussian => sampler.truncated_gaussian(&mut rng),
                        _ => sampler.uniform(&mut rng),
                    })
                    .collect()
            })
            .collect());
    }
    let dir = match &family.direction {
        Some(d) if d.len() == p => DVector::from_column_slice(d),
        Some(d) => return Err(Error::Dimension(format!("direction has length {}, expected {p}", d.len()))),
        None => DVector::from_element(p, 1.0),
    };
    let dir = sampler.to_boundary(&dir)?;
    let seq: Vec<DVector<f64>> = family.profile(t)?.into_iter().map(|s| &dir * s).collect();
    Ok(vec![seq; count])
}

/// States `x_0..x_T` and inputs `u_0..u_T` of one run.
pub type StateInputs = (Vec<DVector<f64>>, Vec<DVector<f64>>);

/// Applies `u_k = Σ_{j≤k} K^{k,j}x_j` step by step.
pub fn rollout(
    sys: &LtvSystem,
    controller: &Controller,
    x0: &DVector<f64>,
    w: &[DVector<f64>],
) -> Result<StateInputs> {
    let (n, _, _) = sys.dims();
    let t = sys.horizon();
    if x0.len() != n || controller.horizon() != t {
        return Err(Error::Dimension("x0 or controller does not match the system".into()));
    }
    sys.check_disturbance(w)?;
    let mut xs = Vec::with_capacity(t + 1);
    let mut us = Vec::with_capacity(t + 1);
    xs.push(x0.clone());
    for k in 0..=t {
        let u = controller.input(k, &xs);
        if k < t {
            xs.push(sys.a(k) * &xs[k] + sys.b(k) * &u + sys.e(k) * &w[k]);
        }
        us.push(u);
    }
    Ok((xs, us))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub controller: String,
    pub family: String,
    pub cost: f64,
    pub benchmark: f64,
    pub regret: f64,
    /// `J/J*`; `None` when `J* ≤ 1e-12`.
    pub competitive_ratio: Option<f64>,
    /// Largest `[H_x x_k]_i` or `[H_u u_k]_i`.
    pub max_constraint: Option<f64>,
    pub trajectory: Option<Trajectory>,
}

/// Simulation inputs shared by every run.
#[derive(Debug, Clone, Copy)]
pub struct SimContext<'a> {
    pub sys: &'a LtvSystem,
    pub cost: &'a CostSpec,
    pub benchmark: &'a BenchmarkOperator,
    pub x0: &'a DVector<f64>,
    pub constraints: Option<&'a ConstraintSpec>,
}

pub fn evaluate_run(
    ctx: &SimContext<'_>,
    controller_id: &str,
    family_id: &str,
    controller: &Controller,
    w: &[DVector<f64>],
    keep_trajectory: bool,
) -> Result<RunRecord> {
    let (xs, us) = rollout(ctx.sys, controller, ctx.x0, w)?;
    let cost = trajectory_cost(ctx.cost, &xs, &us);
    let delta = ctx.sys.delta(ctx.x0, w);
    let benchmark = ctx.benchmark.cost(&delta);
    Ok(RunRecord {
        controller: controller_id.to_string(),
        family: family_id.to_string(),
        cost,
        benchmark,
        regret: cost - benchmark,
        competitive_ratio: (benchmark > 1e-12).then(|| cost / benchmark),
        max_constraint: ctx.constraints.filter(|c| !c.is_empty()).map(|c| c.max_value(&xs, &us)),
        trajectory: keep_trajectory.then(|| Trajectory {
            states: xs.iter().map(|x| x.as_slice().to_vec()).collect(),
            inputs: us.iter().map(|u| u.as_slice().to_vec()).collect(),
        }),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkTable {
    pub families: Vec<String>,
    pub controllers: Vec<String>,
    /// Mean cost per `(family, controller)`.
    pub mean_cost: Vec<Vec<f64>>,
    /// `mean_cost` divided by its row minimum.
    pub normalised: Vec<Vec<f64>>,
    /// Largest constraint value over all runs per `(family, controller)`.
    pub max_constraint: Vec<Vec<Option<f64>>>,
}

impl BenchmarkTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("family");
        for c in &self.controllers {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (f, row) in self.families.iter().zip(&self.normalised) {
            out.push_str(f);
            for v in row {
                out.push(',');
                out.push_str(&format!("{v}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn entry(&self, family: &str, controller: &str) -> Option<f64> {
        let i = self.families.iter().position(|f| f == family)?;
        let j = self.controllers.iter().position(|c| c == controller)?;
        Some(self.normalised[i][j])
    }
}

/// Mean closed-loop cost of every controller on every family, normalised by row minima.
pub fn benchmark_table(
    ctx: &SimContext<'_>,
    controllers: &[(String, Controller)],
    families: &[DisturbanceFamily],
    shape: &DMatrix<f64>,
    count: usize,
    seed: u64,
) -> Result<BenchmarkTable> {
    if controllers.is_empty() {
        return Err(Error::Invalid("benchmark table needs at least one controller".into()));
    }
    if count == 0 {
        return Err(Error::Invalid("benchmark table needs at least one realisation".into()));
    }
    let mut mean_cost = Vec::with_capacity(families.len());
    let mut normalised = Vec::with_capacity(families.len());
    let mut max_constraint = Vec::with_capacity(families.len());
    for fam in families {
        let seqs = generate(fam, ctx.sys, shape, count, seed)?;
        let runs: Vec<Vec<RunRecord>> = seqs
            .par_iter()
            .map(|w| {
                controllers
                    .iter()
                    .map(|(id, k)| evaluate_run(ctx, id, fam.name(), k, w, false))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let mut means = vec![0.0; controllers.len()];
        let mut worst: Vec<Option<f64>> = vec![None; controllers.len()];
        for realisation in &runs {
            for (j, r) in realisation.iter().enumerate() {
                means[j] += r.cost;
                if let Some(v) = r.max_constraint {
                    worst[j] = Some(worst[j].map_or(v, |b: f64| b.max(v)));
                }
            }
        }
        for m in &mut means {
            *m /= count as f64;
        }
        let lo = means.iter().cloned().fold(f64::INFINITY, f64::min);
        normalised.push(means.iter().map(|&m| if lo > 0.0 { m / lo } else { 1.0 }).collect());
        mean_cost.push(means);
        max_constraint.push(worst);
    }
    Ok(BenchmarkTable {
        families: families.iter().map(|f| f.name().to_string()).collect(),
        controllers: controllers.iter().map(|(id, _)| id.clone()).collect(),
        mean_cost,
        normalised,
        max_constraint,
    })
}

/// Stacked `δ = [x0; w]` for each sequence.
pub fn stack_deltas(x0: &DVector<f64>, seqs: &[Vec<DVector<f64>>]) -> Vec<DVector<f64>> {
    seqs.iter()
        .map(|w| {
            let mut parts = vec![x0.clone()];
            parts.extend(w.iter().cloned());
            stack(&parts)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sys(t: usize) -> LtvSystem {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.125, 0.5]);
        LtvSystem::time_invariant(a, b, DMatrix::identity(2, 2), t).unwrap()
    }

    #[test]
    fn constant_family_touches_boundary() {
        let s = sys(5);
        let mut fam = DisturbanceFamily::new(FamilyKind::Constant);
        fam.direction = Some(vec![1.0, 0.0]);
        let seqs = generate(&fam, &s, &DMatrix::identity(2, 2), 2, 0).unwrap();
        for w in &seqs[0] {
            assert_eq!(w, &DVector::from_vec(vec![1.0, 0.0]));
        }
    }

    #[test]
    fn every_family_stays_in_the_set() {
        let s = sys(8);
        let shape = DMatrix::from_row_slice(2, 2, &[3.0, 0.5, 0.5, 1.0]);
        for fam in DisturbanceFamily::all() {
            let seqs = generate(&fam, &s, &shape, 50, 3).unwrap();
            let peak = seqs.iter().flatten().map(|w| quad(&shape, w)).fold(0.0, f64::max);
            assert!(peak <= 1.0 + 1e-12, "{}: {peak}", fam.name());
            if !fam.kind.is_random() {
                assert!((peak - 1.0).abs() < 1e-12, "{} peak {peak}", fam.name());
            }
        }
    }

    #[test]
    fn random_families_are_reproducible() {
        let s = sys(4);
        let fam = DisturbanceFamily::new(FamilyKind::TruncatedGaussian);
        let a = generate(&fam, &s, &DMatrix::identity(2, 2), 5, 11).unwrap();
        let b = generate(&fam, &s, &DMatrix::identity(2, 2), 5, 11).unwrap();
        let c = generate(&fam, &s, &DMatrix::identity(2, 2), 5, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn zero_gain_rollout_is_open_loop() {
        let s = sys(3);
        let k = Controller::zero(&s);
        let x0 = DVector::from_vec(vec![1.0, -1.0]);
        let w = vec![DVector::from_vec(vec![0.1, 0.2]); 3];
        let (xs, us) = rollout(&s, &k, &x0, &w).unwrap();
        let open = s.simulate(&x0, &us, &w).unwrap();
        assert_eq!(xs, open);
        assert!(us.iter().all(|u| u.iter().all(|&v| v == 0.0)));
    }
}
