use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus as ClStatus, SupportedConeT,
};

use super::{Affine, ConicBackend, ConicProgram, SolveReport, SolverSettings, SolverStatus};

/// Interior-point backend built on `clarabel`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ClarabelBackend;

struct Rows {
    i: Vec<usize>,
    j: Vec<usize>,
    v: Vec<f64>,
    b: Vec<f64>,
}

impl Rows {
    /// Row for `s = a(x)`, i.e. `-a_lin·x + s = a_const`.
    fn push_affine(&mut self, a: &Affine, scale: f64) {
        let row = self.b.len();
        for &(var, c) in &a.terms {
            if c != 0.0 {
                self.i.push(row);
                self.j.push(var);
                self.v.push(-c * scale);
            }
        }
        self.b.push(a.constant * scale);
    }
}

fn svec_index(i: usize, j: usize) -> usize {
    // upper triangle, column major
    j * (j + 1) / 2 + i
}

impl ConicBackend for ClarabelBackend {
    fn name(&self) -> &'static str {
        "clarabel"
    }

    fn solve(&self, program: &ConicProgram, settings: &SolverSettings) -> SolveReport {
        let nv = program.num_vars();
        let mut rows = Rows { i: Vec::new(), j: Vec::new(), v: Vec::new(), b: Vec::new() };
        let mut cones: Vec<SupportedConeT<f64>> = Vec::new();

        if !program.equalities.is_empty() {
            for a in &program.equalities {
                rows.push_affine(a, 1.0);
            }
            cones.push(SupportedConeT::ZeroConeT(program.equalities.len()));
        }
        if !program.inequalities.is_empty() {
            for a in &program.inequalities {
                rows.push_affine(a, 1.0);
            }
            cones.push(SupportedConeT::NonnegativeConeT(program.inequalities.len()));
        }
        for soc in &program.socs {
            rows.push_affine(&soc.head, 1.0);
            for t in &soc.tail {
                rows.push_affine(t, 1.0);
            }
            cones.push(SupportedConeT::SecondOrderConeT(1 + soc.tail.len()));
        }
        let sqrt2 = std::f64::consts::SQRT_2;
        for lmi in &program.lmis {
            let base = rows.b.len();
            let len = lmi.dim * (lmi.dim + 1) / 2;
            rows.b.resize(base + len, 0.0);
            for e in &lmi.entries {
                let scale = if e.row == e.col { 1.0 } else { sqrt2 };
                let row = base + svec_index(e.row, e.col);
                match e.var {
                    None => rows.b[row] += e.value * scale,
                    Some(var) => {
                        rows.i.push(row);
                        rows.j.push(var);
                        rows.v.push(-e.value * scale);
                    }
                }
            }
            cones.push(SupportedConeT::PSDTriangleConeT(lmi.dim));
        }

        let m = rows.b.len();
        let a = CscMatrix::new_from_triplets(m, nv, rows.i, rows.j, rows.v);
        let p = CscMatrix::zeros((nv, nv));
        let built = DefaultSettingsBuilder::default()
            .verbose(settings.verbose)
            .max_iter(settings.max_iter)
            .tol_feas(settings.feas_tol)
            .tol_gap_abs(settings.gap_tol)
            .tol_gap_rel(settings.gap_tol)
            .build();
        let cl_settings = match built {
            Ok(s) => s,
            Err(e) => return SolveReport::failure(nv, format!("invalid solver settings: {e}")),
        };
        let mut solver = match DefaultSolver::new(&p, program.objective(), &a, &rows.b, &cones, cl_settings) {
            Ok(s) => s,
            Err(e) => return SolveReport::failure(nv, format!("clarabel setup failed: {e:?}")),
        };
        solver.solve();
        let sol = &solver.solution;
        let status = match sol.status {
            ClStatus::Solved => SolverStatus::Optimal,
            ClStatus::AlmostSolved => SolverStatus::NearOptimal,
            ClStatus::PrimalInfeasible | ClStatus::AlmostPrimalInfeasible => SolverStatus::Infeasible,
            ClStatus::DualInfeasible | ClStatus::AlmostDualInfeasible => SolverStatus::Unbounded,
            _ => SolverStatus::NumericalFailure,
        };
        SolveReport {
            status,
            x: sol.x.clone(),
            objective: sol.obj_val,
            primal_residual: sol.r_prim,
            dual_residual: sol.r_dual,
            iterations: sol.iterations,
            solve_time: sol.solve_time,
            message: (!status.is_solved()).then(|| format!("clarabel status {:?}", sol.status)),
        }
    }
}
