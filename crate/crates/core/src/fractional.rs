//! Bisection on the threshold of a fractional pricing problem.
//!
//! `G(delta) = max_r N(r) - delta * D(r)` is decreasing in `delta` and
//! crosses zero at the optimal ratio, so a sign test on each threshold MILP
//! halves the bracket.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lpsolve::{MilpBackend, MilpModel, SolveResult, SolveStatus, WarmStart};
use crate::milp_builder::{build_bopt, decode_prices, BoptEncoding, PricingProblem, RelaxMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BisectionConfig {
    pub tolerance: f64,
    pub lower: f64,
    pub upper: f64,
    pub max_iters: usize,
    pub relax: RelaxMode,
}

impl BisectionConfig {
    /// Bracket valid for `problem`: the ratio lies in
    /// `[min(0, s * min(l - kappa)), s * max u]` when every `kappa >= 0`.
    pub fn for_problem(problem: &PricingProblem<'_>, tolerance: f64) -> Self {
        let inst = problem.instance;
        let s = problem.scale;
        let mut lo = 0.0f64;
        let mut hi = 0.0f64;
        for j in 0..inst.n() {
            if !problem.offered[j] {
                continue;
            }
            lo = lo.min(s * (inst.l[j] - problem.margin_cost[j]));
            hi = hi.max(s * (inst.u[j] - problem.margin_cost[j].min(0.0)));
        }
        Self { tolerance, lower: lo, upper: hi.max(lo + tolerance), max_iters: 64, relax: RelaxMode::WhenSafe }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BisectionStep {
    pub delta: f64,
    pub value: f64,
    pub nodes: usize,
}

/// One threshold solve with its decoded prices.
#[derive(Debug, Clone)]
pub struct ThresholdSolve {
    pub delta: f64,
    pub value: f64,
    pub prices: Vec<f64>,
    pub model: MilpModel,
    pub encoding: BoptEncoding,
    pub result: SolveResult,
}

/// Solves the threshold MILP at `delta`.
pub fn threshold_value(
    problem: &PricingProblem<'_>,
    delta: f64,
    relax: RelaxMode,
    backend: &dyn MilpBackend,
) -> Result<ThresholdSolve> {
    threshold_value_warm(problem, delta, relax, backend, &mut WarmStart::default())
}

pub fn threshold_value_warm(
    problem: &PricingProblem<'_>,
    delta: f64,
    relax: RelaxMode,
    backend: &dyn MilpBackend,
    warm: &mut WarmStart,
) -> Result<ThresholdSolve> {
    let (model, encoding) = build_bopt(problem, delta, relax)?;
    let result = backend.solve_milp_warm(&model, warm)?;
    match result.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => {
            return Err(Error::Infeasible(format!("no price vector satisfies the constraints at delta = {delta}")))
        }
        SolveStatus::IterationLimit => {
            return Err(Error::Solver(format!("node limit reached at delta = {delta}")));
        }
    }
    let prices = decode_prices(&encoding, &result.primal)?;
    Ok(ThresholdSolve { delta, value: result.objective, prices, model, encoding, result })
}

/// `delta -> G(delta)` on a list of thresholds.
pub fn trace(
    problem: &PricingProblem<'_>,
    deltas: &[f64],
    relax: RelaxMode,
    backend: &dyn MilpBackend,
) -> Result<Vec<(f64, f64)>> {
    deltas.iter().map(|&d| threshold_value(problem, d, relax, backend).map(|s| (d, s.value))).collect()
}

#[derive(Debug, Clone)]
pub struct FractionalSolution {
    pub prices: Vec<f64>,
    /// Certified lower end of the final bracket.
    pub lower: f64,
    pub width: f64,
    pub iterations: usize,
    pub steps: Vec<BisectionStep>,
    /// Threshold solve that produced `prices`.
    pub last: ThresholdSolve,
}

pub fn dinkelbach(
    problem: &PricingProblem<'_>,
    config: &BisectionConfig,
    backend: &dyn MilpBackend,
) -> Result<FractionalSolution> {
    dinkelbach_warm(problem, config, backend, &mut WarmStart::default())
}

/// As [`dinkelbach`], with every threshold solve starting from `warm`.
pub fn dinkelbach_warm(
    problem: &PricingProblem<'_>,
    config: &BisectionConfig,
    backend: &dyn MilpBackend,
    warm: &mut WarmStart,
) -> Result<FractionalSolution> {
    let bad_tol = config.tolerance.is_nan() || config.tolerance <= 0.0;
    if bad_tol || config.upper.is_nan() || config.lower.is_nan() || config.upper < config.lower {
        return Err(Error::InvalidArgument(format!(
            "bisection needs tolerance > 0 and lower <= upper (got {}, [{}, {}])",
            config.tolerance, config.lower, config.upper
        )));
    }
    let mut lo = config.lower;
    let mut width = config.upper - config.lower;
    let mut steps = Vec::new();
    let mut best: Option<ThresholdSolve> = None;
    while width > config.tolerance && steps.len() < config.max_iters {
        let delta = lo + 0.5 * width;
        let solve = threshold_value_warm(problem, delta, config.relax, backend, warm)?;
        steps.push(BisectionStep { delta, value: solve.value, nodes: solve.result.nodes });
        if solve.value >= 0.0 {
            lo = delta;
            best = Some(solve);
        }
        width *= 0.5;
    }
    let last = match best {
        Some(s) => s,
        None => threshold_value_warm(problem, lo, config.relax, backend, warm)?,
    };
    Ok(FractionalSolution { prices: last.prices.clone(), lower: lo, width, iterations: steps.len(), steps, last })
}
