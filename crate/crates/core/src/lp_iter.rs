//! Iterative construction of optimal `L^p` extensions for `0 < p < 2`.
//!
//! Starting from the `L^2` minimizer `f_1`, each step solves the `L^2`
//! problem for the weight `phi + (2 - p) log|f_k|`. Hölder's inequality then
//! gives `I(f_{k+1}) <= I(f_k)^q T^{1-q}` with `q = (2 - p)/2` and
//! `T = Vol(P) e^{-phi(x)}`, so the objectives sit under the bound sequence
//! `C^{q^k} T^{1 - q^k}`.

use serde::Serialize;

use crate::bergman::{modulus_shift, ExtensionSolution, ScalarProblem};
use crate::error::{Error, Result};
use crate::geometry::HolomorphicCylinder;
use crate::weights::WeightFunction;

pub const DEFAULT_MAX_STEPS: usize = 40;
pub const DEFAULT_TOL: f64 = 1e-8;

/// `C^{q^k} T^{1 - q^k}` with `q = (2 - p)/2`.
pub fn bound_sequence(c: f64, vol_target: f64, p: f64, k: usize) -> f64 {
    let q = (2.0 - p) / 2.0;
    let e = q.powi(k as i32);
    // Written in log form so that large k lands on the target without
    // cancellation in the exponent.
    vol_target * ((c / vol_target).ln() * e).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceStep {
    pub k: usize,
    pub objective: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationTrace {
    pub p: f64,
    pub steps: Vec<TraceStep>,
    #[serde(rename = "c")]
    pub initial_objective: f64,
    /// `Vol(P) e^{-phi(x)}`.
    pub target: f64,
    pub order: usize,
    #[serde(rename = "final")]
    pub final_solution: ExtensionSolution,
}

impl IterationTrace {
    pub fn bound_at(&self, k: usize) -> f64 {
        bound_sequence(self.initial_objective, self.target, self.p, k)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,objective,bound\n");
        for s in &self.steps {
            out.push_str(&format!("{},{:e},{:e}\n", s.k, s.objective, s.bound));
        }
        out
    }
}

fn check_exponent(p: f64) -> Result<()> {
    if p > 0.0 && p < 2.0 {
        Ok(())
    } else {
        Err(Error::InvalidExponent(p))
    }
}

/// Run the iteration on a prepared problem. No retries.
pub fn guan_zhou_problem(problem: &ScalarProblem, p: f64, k_max: usize, tol: f64) -> Result<IterationTrace> {
    check_exponent(p)?;
    if k_max == 0 {
        return Err(Error::InvalidParams("k_max must be at least 1".into()));
    }
    let target = problem.target();
    let seed = problem.solve_l2(None)?;
    let mut coefficients = seed.coefficients;
    let c = problem.objective(&coefficients, p);
    let mut steps = vec![TraceStep { k: 1, objective: c, bound: c }];
    let mut best = (coefficients.clone(), c);
    let mut previous = c;
    let mut stopped = false;
    for k in 2..=k_max {
        let f = problem.eval_nodes(&coefficients);
        let shift = modulus_shift(&f, p - 2.0);
        coefficients = problem.solve_l2(Some(&shift))?.coefficients;
        let objective = problem.objective(&coefficients, p);
        let bound = bound_sequence(c, target, p, k - 1);
        steps.push(TraceStep { k, objective, bound });
        if objective > bound * (1.0 + tol) {
            return Err(Error::IterationDivergence { step: k, objective, bound });
        }
        if objective < best.1 {
            best = (coefficients.clone(), objective);
        }
        if (objective - previous).abs() <= tol * objective {
            stopped = true;
            break;
        }
        previous = objective;
    }
    let (coefficients, minimal_integral) = best;
    let converged = stopped && minimal_integral <= target * (1.0 + tol);
    let final_solution = ExtensionSolution {
        index: minimal_integral / target,
        minimal_integral,
        p,
        degree: problem.basis().degree(),
        converged,
        iterations: steps.len(),
        coefficients,
    };
    Ok(IterationTrace { p, steps, initial_objective: c, target, order: problem.rule().order(), final_solution })
}

/// Reweighted iteration on `cylinder`. When the bound certificate fails the
/// run is repeated once with doubled quadrature order.
pub fn guan_zhou_extend(
    cylinder: &HolomorphicCylinder,
    w: &WeightFunction,
    p: f64,
    k_max: usize,
    tol: f64,
    degree: usize,
    order: usize,
) -> Result<IterationTrace> {
    check_exponent(p)?;
    let problem = ScalarProblem::new(cylinder, w, degree, order)?;
    match guan_zhou_problem(&problem, p, k_max, tol) {
        Err(Error::IterationDivergence { .. }) => {
            let finer = ScalarProblem::new(cylinder, w, degree, 2 * order)?;
            guan_zhou_problem(&finer, p, k_max, tol)
        }
        other => other,
    }
}
