//! Command implementations behind the `regret-synth` binary.
//!
//! Exit codes: 0 success, 1 a verification check failed, 2 infeasible,
//! 3 solver failure, 4 configuration or input error.

pub mod config;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conic::SolverStatus;
use crate::error::{Error, Result};
use crate::linalg::min_eig;
use crate::operators::{BenchmarkOperator, CostSpec};
use crate::sim::{benchmark_table, sample_ball, DisturbanceFamily, EllipsoidSampler, SimContext};
use crate::slp::{achievability_residual, closed_loop_response, Controller, SystemResponse};
use crate::synthesis::{
    robust_row_values, worst_case_row_disturbance, RegretWeight, RobustConstraints, SynthesisKind,
    SynthesisResult, Synthesizer, WeightKind,
};
use crate::verify::{
    check_certificate, energy_ball_worst_excess, local_level_lower_bound, min_regret_eigenvalue,
    suboptimality_floor, AscentSettings,
};
use config::{Config, Instance, MatrixSpec, WeightChoice};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_CONFIG: i32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    H2,
    Hinf,
    DrEnergy,
    CrEnergy,
    DrPwb,
    CrPwb,
    CustomWeight,
}

impl Variant {
    pub const TABLE: [Variant; 6] =
        [Variant::H2, Variant::Hinf, Variant::DrEnergy, Variant::CrEnergy, Variant::DrPwb, Variant::CrPwb];

    pub fn id(self) -> &'static str {
        match self {
            Variant::H2 => "h2",
            Variant::Hinf => "hinf",
            Variant::DrEnergy => "dr-energy",
            Variant::CrEnergy => "cr-energy",
            Variant::DrPwb => "dr-pwb",
            Variant::CrPwb => "cr-pwb",
            Variant::CustomWeight => "custom-weight",
        }
    }

    pub fn is_pointwise(self) -> bool {
        matches!(self, Variant::DrPwb | Variant::CrPwb | Variant::CustomWeight)
    }

    pub fn is_energy(self) -> bool {
        matches!(self, Variant::DrEnergy | Variant::CrEnergy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Parser)]
#[command(name = "regret-synth", version, about = "Generalised regret optimal controller synthesis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesise one controller and write the result as JSON.
    Synthesize {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        variant: Variant,
        #[arg(long, value_enum, default_value = "on")]
        constraints: Switch,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        solver_tol: Option<f64>,
    },
    /// Re-check a result file against its config.
    Verify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        result: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Report path; defaults to the result path with a `.verify.json` suffix.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        solver_tol: Option<f64>,
    },
    /// Simulate controllers on every disturbance family and write the normalised cost table.
    Benchmark {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, value_delimiter = ',')]
        controllers: Vec<Variant>,
        #[arg(long, value_enum, default_value = "on")]
        constraints: Switch,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        solver_tol: Option<f64>,
    },
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Infeasible(_) => EXIT_INFEASIBLE,
        Error::NotSolved(_) | Error::Numeric(_) | Error::NotRealisable(_) | Error::SingularBlock(_) => EXIT_SOLVER,
        _ => EXIT_CONFIG,
    }
}

fn status_code(status: SolverStatus) -> i32 {
    match status {
        SolverStatus::Optimal | SolverStatus::NearOptimal => EXIT_OK,
        SolverStatus::Infeasible => EXIT_INFEASIBLE,
        SolverStatus::Unbounded | SolverStatus::NumericalFailure => EXIT_SOLVER,
    }
}

/// Runs a parsed command and returns its exit code; diagnostics go to stderr.
pub fn run(cli: Cli) -> i32 {
    let outcome = match cli.command {
        Command::Synthesize { config, variant, constraints, out, solver_tol } => {
            cmd_synthesize(&config, variant, constraints == Switch::On, &out, solver_tol)
        }
        Command::Verify { config, result, seed, out, solver_tol } => {
            let out = out.unwrap_or_else(|| with_suffix(&result, ".verify.json"));
            cmd_verify(&result, &config, seed, &out, solver_tol).map(|r| if r.passed { EXIT_OK } else { EXIT_CHECK_FAILED })
        }
        Command::Benchmark { config, controllers, constraints, seed, out, solver_tol } => {
            cmd_benchmark(&config, &controllers, constraints == Switch::On, seed, &out, solver_tol).map(|_| EXIT_OK)
        }
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn load_instance(path: &Path, solver_tol: Option<f64>) -> Result<Instance> {
    let mut inst = Config::load(path)?.instance()?;
    if let Some(t) = solver_tol {
        if !(t.is_finite() && t > 0.0) {
            return Err(Error::Config(format!("--solver-tol {t} must be positive")));
        }
        inst.settings.feas_tol = t;
        inst.settings.gap_tol = t;
    }
    Ok(inst)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Numeric(format!("serialising JSON: {e}")))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

/// Synthesis context shared by every variant of one instance.
pub struct Prepared<'a> {
    pub inst: &'a Instance,
    pub syn: Synthesizer<'a>,
    /// Benchmark used in the regret objective.
    pub benchmark: BenchmarkOperator,
    pub constrained_benchmark: bool,
    pub robust: Option<RobustConstraints>,
}

impl<'a> Prepared<'a> {
    pub fn new(inst: &'a Instance, constraints_on: bool) -> Result<Self> {
        let syn = Synthesizer::new(&inst.sys, &inst.cost, inst.settings)?;
        let robust = match (&inst.constraints, constraints_on) {
            (Some(spec), true) if !spec.is_empty() => {
                Some(RobustConstraints::new(spec.clone(), inst.shape.clone(), inst.x0.clone()))
            }
            _ => None,
        };
        let constrained_benchmark = inst.benchmark.constrained && robust.is_some();
        let benchmark = match (&robust, constrained_benchmark) {
            (Some(rc), true) => syn.constrained_noncausal_benchmark(rc, inst.benchmark.objective)?,
            _ => syn.benchmark()?,
        };
        Ok(Self { inst, syn, benchmark, constrained_benchmark, robust })
    }

    pub fn weight(&self, variant: Variant) -> Result<Option<RegretWeight>> {
        let sys = &self.inst.sys;
        Ok(match variant {
            Variant::H2 | Variant::Hinf => None,
            Variant::DrEnergy | Variant::DrPwb => Some(RegretWeight::identity(sys)),
            Variant::CrEnergy | Variant::CrPwb => Some(RegretWeight::benchmark(&self.benchmark)),
            Variant::CustomWeight => Some(match self.inst.weight {
                WeightChoice::Identity => RegretWeight::identity(sys),
                WeightChoice::Benchmark => RegretWeight::benchmark(&self.benchmark),
                WeightChoice::Explicit => {
                    let m = self.inst.explicit_weight.clone().ok_or_else(|| Error::Config("weight.matrix missing".into()))?;
                    RegretWeight::custom(m, sys, 1e-12).map_err(|e| Error::Config(e.to_string()))?
                }
            }),
        })
    }

    pub fn solve(&self, variant: Variant) -> Result<SynthesisResult> {
        let w = self.weight(variant)?;
        let inst = self.inst;
        let rc = self.robust.as_ref();
        match (variant, w) {
            (Variant::H2, _) => self.syn.h2(rc),
            (Variant::Hinf, _) => self.syn.hinf(rc),
            (v, Some(w)) if v.is_energy() => self.syn.energy_ball(&self.benchmark, &w, &inst.x0, inst.omega, rc),
            (_, Some(w)) => self.syn.pointwise(&self.benchmark, &w, &inst.x0, &inst.shape, rc.map(|r| &r.spec)),
            (_, None) => Err(Error::Invalid("regret variant without a weight".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    pub variant: Variant,
    pub kind: SynthesisKind,
    pub status: SolverStatus,
    pub mu: Option<f64>,
    pub lambdas: Vec<f64>,
    pub weight: Option<WeightKind>,
    pub weight_regularisation: Option<f64>,
    pub constraints: bool,
    pub constrained_benchmark: bool,
    pub objective: Option<f64>,
    pub primal_residual: Option<f64>,
    pub dual_residual: Option<f64>,
    pub max_cone_residual: Option<f64>,
    pub iterations: u32,
    pub solve_time: f64,
    pub num_vars: usize,
    pub constraint_rows: usize,
    pub message: Option<String>,
    pub controller: Option<MatrixSpec>,
    pub phi_x: Option<MatrixSpec>,
    pub phi_u: Option<MatrixSpec>,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl ResultFile {
    pub fn new(variant: Variant, prep: &Prepared<'_>, res: &SynthesisResult) -> Result<Self> {
        let w = prep.weight(variant)?;
        Ok(Self {
            variant,
            kind: res.kind,
            status: res.status,
            mu: res.mu,
            lambdas: res.lambdas.clone(),
            weight: w.as_ref().map(RegretWeight::kind),
            weight_regularisation: res.diagnostics.weight_regularisation,
            constraints: prep.robust.is_some(),
            constrained_benchmark: prep.constrained_benchmark,
            objective: finite(res.objective),
            primal_residual: finite(res.primal_residual),
            dual_residual: finite(res.dual_residual),
            max_cone_residual: finite(res.diagnostics.max_cone_residual),
            iterations: res.iterations,
            solve_time: res.solve_time,
            num_vars: res.diagnostics.num_vars,
            constraint_rows: res.diagnostics.constraint_rows,
            message: res.diagnostics.message.clone(),
            controller: res.controller.as_ref().map(|k| MatrixSpec::from_matrix(&k.dense())),
            phi_x: res.phi.as_ref().map(|p| MatrixSpec::from_matrix(&p.phi_x())),
            phi_u: res.phi.as_ref().map(|p| MatrixSpec::from_matrix(&p.phi_u())),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

pub fn cmd_synthesize(
    config: &Path,
    variant: Variant,
    constraints_on: bool,
    out: &Path,
    solver_tol: Option<f64>,
) -> Result<i32> {
    let inst = load_instance(config, solver_tol)?;
    let prep = Prepared::new(&inst, constraints_on)?;
    let res = prep.solve(variant)?;
    let file = ResultFile::new(variant, &prep, &res)?;
    write_json(out, &file)?;
    match res.mu {
        Some(mu) => eprintln!("{}: status {:?}, mu = {mu}", variant.id(), res.status),
        None => eprintln!("{}: status {:?}, no solution", variant.id(), res.status),
    }
    Ok(status_code(res.status))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Informational checks never fail the report.
    pub hard: bool,
    pub value: f64,
    pub limit: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub variant: Variant,
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl VerifyReport {
    fn push(&mut self, name: &str, hard: bool, value: f64, limit: f64, passed: bool, detail: String) {
        self.checks.push(Check { name: name.into(), passed, hard, value, limit, detail });
    }
}

fn lift_delta(x0: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
    let mut d = DVector::zeros(x0.len() + w.len());
    d.rows_mut(0, x0.len()).copy_from(x0);
    d.rows_mut(x0.len(), w.len()).copy_from(w);
    d
}

fn certificate_samples(
    variant: Variant,
    inst: &Instance,
    count: usize,
    seed: u64,
) -> Result<Vec<DVector<f64>>> {
    let sys = &inst.sys;
    let (n, _, p) = sys.dims();
    let t = sys.horizon();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sampler = EllipsoidSampler::new(&inst.shape)?;
    let x0 = if variant == Variant::Hinf { DVector::zeros(n) } else { inst.x0.clone() };
    Ok((0..count)
        .map(|i| {
            let w = if variant.is_pointwise() {
                let mut w = DVector::zeros(p * t);
                for j in 0..t {
                    let mut blk = sampler.uniform(&mut rng);
                    if i % 2 == 1 {
                        blk = sampler.to_boundary(&blk).unwrap_or(blk);
                    }
                    w.rows_mut(p * j, p).copy_from(&blk);
                }
                w
            } else {
                sample_ball(&mut rng, p * t, inst.omega.sqrt())
            };
            lift_delta(&x0, &w)
        })
        .collect())
}

pub fn cmd_verify(result: &Path, config: &Path, seed: u64, out: &Path, solver_tol: Option<f64>) -> Result<VerifyReport> {
    let inst = load_instance(config, solver_tol)?;
    let file = ResultFile::load(result)?;
    let prep = Prepared::new(&inst, file.constraints)?;
    let sys = &inst.sys;
    let mut report = VerifyReport { variant: file.variant, passed: true, checks: Vec::new() };
    let (Some(kspec), Some(px), Some(pu)) = (&file.controller, &file.phi_x, &file.phi_u) else {
        return Err(Error::Config(format!("result has status {:?} and no controller to verify", file.status)));
    };
    let k = Controller::from_dense(sys, &kspec.to_matrix("controller")?)?;
    let stored = SystemResponse::from_dense(sys, &px.to_matrix("phi_x")?, &pu.to_matrix("phi_u")?, crate::slp::Causality::Causal)?;

    let ach = achievability_residual(&stored, prep.syn.ops())?;
    report.push("achievability", true, ach, 1e-6, ach <= 1e-6, "stored Φ satisfies the achievability constraint".into());

    let phi = closed_loop_response(sys, &k)?;
    let scale = stored.stacked().amax().max(1.0);
    let mismatch = (phi.stacked() - stored.stacked()).amax() / scale;
    report.push("controller_realises_phi", true, mismatch, 1e-6, mismatch <= 1e-6, "closed loop of K reproduces stored Φ".into());

    let cost: &CostSpec = &inst.cost;
    if !prep.constrained_benchmark {
        let lo = min_regret_eigenvalue(&phi, cost, &prep.benchmark)?;
        let lim = -1e-7 * prep.benchmark.matrix().amax().max(1.0);
        report.push("regret_psd", true, lo, lim, lo >= lim, "min eigenvalue of Φᵀ𝒞Φ − 𝒪".into());
    }

    let weight = prep.weight(file.variant)?;
    if let (Some(mu), Some(w)) = (file.mu, weight.as_ref()) {
        let mut deltas = certificate_samples(file.variant, &inst, 10_000, seed)?;
        if file.variant.is_energy() {
            let (excess, wc) = energy_ball_worst_excess(&phi, cost, &prep.benchmark, w, mu, &inst.x0, inst.omega)?;
            report.push(
                "energy_ball_exact_worst_case",
                true,
                excess,
                1e-6,
                excess <= 1e-6 * (1.0 + mu.abs()),
                "max over ‖w‖² ≤ ω of J − δᵀ𝒪δ − μδᵀ𝒲δ".into(),
            );
            deltas.push(lift_delta(&inst.x0, &wc));
        } else {
            let ascent = AscentSettings { restarts: 10, seed, ..AscentSettings::default() };
            let local = local_level_lower_bound(&phi, cost, &prep.benchmark, w, &inst.x0, &inst.shape, &ascent)?;
            deltas.push(lift_delta(&inst.x0, &DVector::from_column_slice(&local.w)));
            report.push(
                "local_lower_bound",
                false,
                local.value,
                mu,
                local.value <= mu + 1e-6,
                "projected-ascent regret ratio over 𝕎^T".into(),
            );
        }
        let cert = check_certificate(&phi, cost, &prep.benchmark, w, mu, &deltas)?;
        report.push(
            "certificate_sampling",
            true,
            cert.max_relative_excess,
            1e-6,
            cert.max_relative_excess <= 1e-6,
            format!("{} samples of J − δᵀ𝒪δ ≤ μδᵀ𝒲δ", cert.samples),
        );
        if file.variant.is_pointwise() {
            let omega = sys.horizon() as f64 / min_eig(&inst.shape);
            let energy = prep.syn.energy_ball(&prep.benchmark, w, &inst.x0, omega, prep.robust.as_ref())?;
            let mu_e = energy.level()?;
            report.push(
                "pointwise_below_energy",
                true,
                mu,
                mu_e,
                mu <= mu_e + 1e-6,
                format!("mu_bar = {mu} <= mu = {mu_e} (energy ball at omega = {omega})"),
            );
            let floor = suboptimality_floor(w)?;
            report.push(
                "suboptimality_floor",
                false,
                floor * mu,
                mu,
                floor * mu <= mu + 1e-6,
                format!("2/(pi kappa) = {floor}"),
            );
        }
    } else if file.variant == Variant::Hinf {
        if let Some(mu) = file.mu {
            let d = sys.delta_dim();
            let zero = BenchmarkOperator::from_matrix(DMatrix::zeros(d, d), sys.dims().0)?;
            let w = RegretWeight::identity(sys);
            let deltas = certificate_samples(Variant::Hinf, &inst, 10_000, seed)?;
            let cert = check_certificate(&phi, cost, &zero, &w, mu, &deltas)?;
            report.push(
                "certificate_sampling",
                true,
                cert.max_relative_excess,
                1e-6,
                cert.max_relative_excess <= 1e-6,
                format!("{} samples of J ≤ γ²‖w‖² with x0 = 0", cert.samples),
            );
        }
    }

    if let Some(rc) = &prep.robust {
        let rows = robust_row_values(&phi, sys, rc)?;
        let worst = rows.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        report.push("robust_constraints", true, worst, 1.0 + 1e-6, worst <= 1.0 + 1e-6, "tightened H_z rows".into());
        let spec_rows = rc.spec.rows(sys);
        let mut realised = f64::NEG_INFINITY;
        for row in &spec_rows {
            let w = worst_case_row_disturbance(&phi, sys, rc, row)?;
            let (xs, us) = crate::sim::rollout(sys, &k, &inst.x0, &w)?;
            let z: Vec<f64> = xs.iter().chain(&us).flat_map(|v| v.iter().copied()).collect();
            realised = realised.max(row.h.dot(&DVector::from_vec(z)));
        }
        report.push(
            "worst_case_constraint_rollout",
            true,
            realised,
            1.0 + 1e-6,
            realised <= 1.0 + 1e-6,
            "per-row dual-norm worst-case disturbance".into(),
        );
    }

    report.passed = report.checks.iter().all(|c| c.passed || !c.hard);
    for c in &report.checks {
        let tag = if c.passed { "pass" } else if c.hard { "FAIL" } else { "note" };
        println!("[{tag}] {}: {} (limit {}) {}", c.name, c.value, c.limit, c.detail);
    }
    write_json(out, &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub controller: String,
    pub status: SolverStatus,
    pub mu: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSummary {
    pub seed: u64,
    pub realisations: usize,
    pub levels: Vec<LevelSummary>,
    /// `100·(μ_energy − μ̄_pwb)/μ_energy` for the dynamic-regret pair.
    pub dr_reduction_percent: Option<f64>,
    /// Same for the competitive-ratio pair.
    pub cr_reduction_percent: Option<f64>,
    pub table: crate::sim::BenchmarkTable,
}

fn reduction(levels: &[LevelSummary], energy: Variant, pwb: Variant) -> Option<f64> {
    let get = |v: Variant| levels.iter().find(|l| l.controller == v.id()).and_then(|l| l.mu);
    let (e, p) = (get(energy)?, get(pwb)?);
    (e > 0.0).then(|| 100.0 * (e - p) / e)
}

pub fn cmd_benchmark(
    config: &Path,
    controllers: &[Variant],
    constraints_on: bool,
    seed: u64,
    out: &Path,
    solver_tol: Option<f64>,
) -> Result<BenchmarkSummary> {
    let inst = load_instance(config, solver_tol)?;
    let prep = Prepared::new(&inst, constraints_on)?;
    let variants: Vec<Variant> = if controllers.is_empty() { Variant::TABLE.to_vec() } else { controllers.to_vec() };
    let solved: Vec<(Variant, SynthesisResult)> = variants
        .par_iter()
        .map(|&v| prep.solve(v).map(|r| (v, r)))
        .collect::<Result<Vec<_>>>()?;
    let mut gains = Vec::with_capacity(solved.len());
    let mut levels = Vec::with_capacity(solved.len());
    for (v, res) in &solved {
        let k = res.gain().map_err(|e| match e {
            Error::Infeasible(m) => Error::Infeasible(format!("{}: {m}", v.id())),
            other => Error::NotSolved(format!("{}: {other}", v.id())),
        })?;
        gains.push((v.id().to_string(), k.clone()));
        levels.push(LevelSummary { controller: v.id().to_string(), status: res.status, mu: res.mu });
    }
    let ctx = SimContext {
        sys: &inst.sys,
        cost: &inst.cost,
        benchmark: &prep.benchmark,
        x0: &inst.x0,
        constraints: if constraints_on { inst.constraints.as_ref() } else { None },
    };
    let table = benchmark_table(&ctx, &gains, &DisturbanceFamily::all(), &inst.shape, inst.benchmark.realisations, seed)?;
    std::fs::write(out, table.to_csv())?;
    let summary = BenchmarkSummary {
        seed,
        realisations: inst.benchmark.realisations,
        dr_reduction_percent: reduction(&levels, Variant::DrEnergy, Variant::DrPwb),
        cr_reduction_percent: reduction(&levels, Variant::CrEnergy, Variant::CrPwb),
        levels,
        table,
    };
    for l in &summary.levels {
        println!("{}: mu = {}", l.controller, l.mu.map_or("none".into(), |m| m.to_string()));
    }
    if let Some(r) = summary.dr_reduction_percent {
        println!("dynamic regret: pointwise level is {r:.1}% below the energy-ball level");
    }
    if let Some(r) = summary.cr_reduction_percent {
        println!("competitive ratio: pointwise level is {r:.1}% below the energy-ball level");
    }
    write_json(&with_suffix(out, ".summary.json"), &summary)?;
    Ok(summary)
}
