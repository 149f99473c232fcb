//! Static pricing: one price vector for the whole horizon.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fractional::{dinkelbach, BisectionConfig, BisectionStep, ThresholdSolve};
use crate::instance::{FeasiblePriceRegion, Feasibility, Instance, RegionMode, ViolationKind};
use crate::lpsolve::{solve_lp, BundledBackend, MilpBackend, SolveStatus};
use crate::milp_builder::{PricingProblem, RelaxMode};
use crate::pwla::{error_constants_scaled, PwlaGrid};

pub const DEFAULT_K: usize = 15;
pub const DEFAULT_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub k: usize,
    pub tolerance: f64,
    pub relax: RelaxMode,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { k: DEFAULT_K, tolerance: DEFAULT_TOLERANCE, relax: RelaxMode::WhenSafe }
    }
}

impl SolveOptions {
    pub fn new(k: usize, tolerance: f64) -> Self {
        Self { k, tolerance, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    /// Largest `psi_i - c_i` over the resource rows (negative when slack).
    pub max_resource_excess: f64,
    /// Largest `psi_i - c_i - 2 eta_i / K`; nonpositive when certified.
    pub max_certified_excess: f64,
    pub eta_bound: f64,
    /// Box and price rows hold exactly.
    pub price_rows_hold: bool,
    pub certified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricingSolution {
    pub prices: Vec<f64>,
    pub approx_objective: f64,
    /// Recomputed under the exact choice model.
    pub exact_objective: f64,
    /// `2 omega / K`.
    pub omega_bound: f64,
    pub feasibility: FeasibilityReport,
    pub scale: f64,
    pub k: usize,
    pub tolerance: f64,
    pub seconds: f64,
    pub trace: Vec<BisectionStep>,
    /// Resource multipliers from the final threshold model.
    pub duals: Vec<f64>,
}

const PRICE_ROW_TOL: f64 = 1e-7;

fn row_scale(inst: &Instance, kind: &ViolationKind) -> f64 {
    match *kind {
        ViolationKind::BoxLower(j) => inst.l.get(j).copied().unwrap_or(0.0),
        ViolationKind::BoxUpper(j) => inst.u.get(j).copied().unwrap_or(0.0),
        ViolationKind::PriceRow(k) => inst.d[k].abs(),
        ViolationKind::Resource(_) => f64::INFINITY,
    }
}

/// Checks `r` against the exact region with resource slack `2 eta_i / K`.
pub fn feasibility_report(inst: &Instance, capacity: &[f64], scale: f64, k: usize, r: &[f64]) -> Result<FeasibilityReport> {
    let ec = error_constants_scaled(inst, capacity, scale);
    let slack: Vec<f64> = ec.eta.iter().map(|e| 2.0 * e / k as f64).collect();
    report_with_slack(inst, capacity, scale, &slack, r)
}

/// Checks `r` against the exact region with no resource slack.
pub fn exact_feasibility_report(inst: &Instance, capacity: &[f64], scale: f64, r: &[f64]) -> Result<FeasibilityReport> {
    report_with_slack(inst, capacity, scale, &vec![0.0; inst.m()], r)
}

fn report_with_slack(inst: &Instance, capacity: &[f64], scale: f64, slack: &[f64], r: &[f64]) -> Result<FeasibilityReport> {
    let psi = inst.mnl.resource_lhs_scaled(&inst.a_mat, capacity, scale, r)?;
    let mut excess = f64::NEG_INFINITY;
    let mut certified_excess = f64::NEG_INFINITY;
    for i in 0..inst.m() {
        excess = excess.max(psi[i] - capacity[i]);
        certified_excess = certified_excess.max(psi[i] - capacity[i] - slack[i]);
    }
    let region = FeasiblePriceRegion { instance: inst, capacity: Some(capacity.to_vec()), scale, mode: RegionMode::Slack(f64::INFINITY) };
    // price rows come out of the LP, so they hold up to its feasibility tolerance
    let price_rows_hold = match region.check(r) {
        Feasibility::Feasible => true,
        Feasibility::Violations(v) => v.iter().all(|x| x.slack <= PRICE_ROW_TOL * (1.0 + row_scale(inst, &x.kind))),
    };
    let certified = price_rows_hold && certified_excess <= 1e-9 * (1.0 + capacity.iter().fold(0.0f64, |a, &c| a.max(c)));
    Ok(FeasibilityReport {
        max_resource_excess: excess,
        max_certified_excess: certified_excess,
        eta_bound: slack.iter().fold(0.0f64, |a, &b| a.max(b)),
        price_rows_hold,
        certified,
    })
}

/// Resource multipliers of a threshold solve: the integer variables are fixed
/// at the incumbent and the remaining LP supplies row duals.
pub fn extract_duals(solve: &ThresholdSolve, m: usize) -> Result<Vec<f64>> {
    let mut model = solve.model.clone();
    for (v, &x) in model.vars.iter_mut().zip(&solve.result.primal) {
        if v.integer {
            let x = x.round().clamp(v.lower, v.upper);
            v.lower = x;
            v.upper = x;
            v.integer = false;
        }
    }
    let lp = solve_lp(&model)?;
    if lp.status != SolveStatus::Optimal {
        return Err(Error::Solver("fixed-integer model lost feasibility while extracting duals".into()));
    }
    let y = lp.duals.unwrap_or_default();
    let mut pi = vec![0.0; m];
    for (i, row) in solve.encoding.resource_rows.iter().enumerate() {
        if let Some(row) = row {
            pi[i] = y.get(*row).copied().unwrap_or(0.0).max(0.0);
        }
    }
    Ok(pi)
}

/// Solves the fractional problem described by `problem` and reports the
/// certificates.
pub fn solve_pricing(problem: &PricingProblem<'_>, opts: &SolveOptions, backend: &dyn MilpBackend) -> Result<PricingSolution> {
    let started = Instant::now();
    let mut cfg = BisectionConfig::for_problem(problem, opts.tolerance);
    cfg.relax = opts.relax;
    let sol = dinkelbach(problem, &cfg, backend)?;
    let duals = extract_duals(&sol.last, problem.instance.m())?;
    let inst = problem.instance;
    let ec = error_constants_scaled(inst, &problem.capacity, problem.scale);
    let k = problem.grid.k;
    Ok(PricingSolution {
        approx_objective: problem.approx_objective(&sol.prices)?,
        exact_objective: problem.exact_objective(&sol.prices)?,
        omega_bound: 2.0 * ec.omega_bound(k),
        feasibility: feasibility_report(inst, &problem.capacity, problem.scale, k, &sol.prices)?,
        scale: problem.scale,
        k,
        tolerance: opts.tolerance,
        seconds: started.elapsed().as_secs_f64(),
        trace: sol.steps,
        duals,
        prices: sol.prices,
    })
}

pub fn solve_static_with(inst: &Instance, scale: f64, opts: &SolveOptions, backend: &dyn MilpBackend) -> Result<PricingSolution> {
    inst.validate()?;
    let grid = PwlaGrid::build(inst, opts.k)?;
    let problem = PricingProblem::new(inst, &grid, scale);
    solve_pricing(&problem, opts, backend)
}

/// Single-period problem.
pub fn solve_sp_dmip(inst: &Instance, k: usize, tolerance: f64) -> Result<PricingSolution> {
    solve_static_with(inst, 1.0, &SolveOptions::new(k, tolerance), &BundledBackend::default())
}

/// Deterministic horizon problem with demand scale `lambda * T`.
pub fn solve_sp_star(inst: &Instance, k: usize, tolerance: f64) -> Result<PricingSolution> {
    solve_static_with(inst, inst.demand_scale(), &SolveOptions::new(k, tolerance), &BundledBackend::default())
}
