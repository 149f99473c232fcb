//! Bounded LP and MILP solving behind a small backend registry.
//!
//! The bundled backend is a revised bounded simplex with branch-and-bound on
//! top. Models tagged with ordered chains are solved through an exact
//! reformulation that drops the chain rows.

mod bnb;
mod chain;
#[cfg(feature = "microlp")]
mod external;
mod model;
mod relax;
mod simplex;

use std::sync::Arc;

pub use model::{Chain, MilpModel, Row, RowSense, Sense, SolveResult, SolveStatus, Variable};

#[cfg(feature = "microlp")]
pub use external::MicrolpBackend;

use crate::error::{Error, Result};
use relax::Relaxation;
use simplex::LpStatus;

pub const FEASIBILITY_TOL: f64 = 1e-7;
pub const INTEGRALITY_TOL: f64 = 1e-9;
pub const GAP_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct MilpOptions {
    pub node_limit: usize,
    /// Fix the rest of a chain when one of its `z` is branched on.
    pub propagate_chains: bool,
    /// Solve relaxations of chain-tagged models in reduced form.
    pub compress_chains: bool,
    /// Start child relaxations from the parent's final basis.
    pub warm_start: bool,
}

impl Default for MilpOptions {
    fn default() -> Self {
        Self { node_limit: 200_000, propagate_chains: true, compress_chains: true, warm_start: true }
    }
}

/// Solves the LP relaxation of `model` and reports row duals.
pub fn solve_lp(model: &MilpModel) -> Result<SolveResult> {
    solve_lp_with(model, &MilpOptions::default())
}

pub fn solve_lp_with(model: &MilpModel, opts: &MilpOptions) -> Result<SolveResult> {
    model.validate()?;
    let bounds: Vec<(f64, f64)> = model.vars.iter().map(|v| (v.lower, v.upper)).collect();
    let relax = Relaxation::new(model, opts.compress_chains);
    let out = relax.solve(&bounds, None, true)?;
    if out.status == LpStatus::Infeasible {
        return Ok(SolveResult::infeasible(out.iterations, 1));
    }
    let duals = out.duals.unwrap_or_default();
    let mut rc = model.objective.clone();
    for (row, &y) in model.rows.iter().zip(&duals) {
        for &(j, a) in &row.coefs {
            rc[j] -= y * a;
        }
    }
    Ok(SolveResult {
        status: SolveStatus::Optimal,
        objective: out.objective,
        max_violation: model.max_violation(&out.x),
        primal: out.x,
        duals: Some(duals),
        reduced_costs: Some(rc),
        nodes: 1,
        iterations: out.iterations,
        best_bound: out.objective,
        incumbents: Vec::new(),
    })
}

pub fn solve_milp(model: &MilpModel) -> Result<SolveResult> {
    solve_milp_with(model, &MilpOptions::default())
}

pub fn solve_milp_with(model: &MilpModel, opts: &MilpOptions) -> Result<SolveResult> {
    model.validate()?;
    bnb::branch_and_bound(model, opts, None).map(|r| r.0)
}

/// Root basis carried from one solve to the next. Any model with the same
/// numbers of variables and rows can use it; a basis that does not fit is
/// ignored.
#[derive(Debug, Clone, Default)]
pub struct WarmStart {
    basis: Option<simplex::Basis>,
}

impl WarmStart {
    pub fn is_empty(&self) -> bool {
        self.basis.is_none()
    }
}

pub fn solve_milp_warm(model: &MilpModel, opts: &MilpOptions, warm: &mut WarmStart) -> Result<SolveResult> {
    model.validate()?;
    let start = if opts.warm_start { warm.basis.as_ref() } else { None };
    let (res, basis) = bnb::branch_and_bound(model, opts, start)?;
    if basis.is_some() {
        warm.basis = basis;
    }
    Ok(res)
}

/// Objective of the dual built from `result`'s row duals; equals the primal
/// objective at an optimal basic solution.
pub fn dual_objective(model: &MilpModel, result: &SolveResult) -> Option<f64> {
    let y = result.duals.as_ref()?;
    let rc = result.reduced_costs.as_ref()?;
    let mut total = model.objective_constant;
    for (row, &yi) in model.rows.iter().zip(y) {
        total += yi * row.rhs;
    }
    let maximize = model.sense == Sense::Maximize;
    for (v, &d) in model.vars.iter().zip(rc) {
        // bound multipliers pay for whichever bound the reduced cost pushes on
        let pushes_up = if maximize { d > 0.0 } else { d < 0.0 };
        total += d * if pushes_up { v.upper } else { v.lower };
    }
    Some(total)
}

/// A solver able to take a [`MilpModel`] and return a [`SolveResult`].
pub trait MilpBackend: Send + Sync {
    fn solve_lp(&self, model: &MilpModel) -> Result<SolveResult>;
    fn solve_milp(&self, model: &MilpModel) -> Result<SolveResult>;

    /// Solve reusing state from an earlier call on a similar model. Backends
    /// without restart support ignore `warm`.
    fn solve_milp_warm(&self, model: &MilpModel, warm: &mut WarmStart) -> Result<SolveResult> {
        let _ = warm;
        self.solve_milp(model)
    }
}

/// The in-crate simplex and branch-and-bound.
#[derive(Debug, Clone, Default)]
pub struct BundledBackend {
    pub options: MilpOptions,
}

impl MilpBackend for BundledBackend {
    fn solve_lp(&self, model: &MilpModel) -> Result<SolveResult> {
        solve_lp_with(model, &self.options)
    }

    fn solve_milp(&self, model: &MilpModel) -> Result<SolveResult> {
        solve_milp_with(model, &self.options)
    }

    fn solve_milp_warm(&self, model: &MilpModel, warm: &mut WarmStart) -> Result<SolveResult> {
        solve_milp_warm(model, &self.options, warm)
    }
}

pub const BUNDLED: &str = "bundled";

/// Named solver backends with one active selection. `bundled` is always present.
#[derive(Clone)]
pub struct BackendRegistry {
    entries: Vec<(String, Arc<dyn MilpBackend>)>,
    active: usize,
}

impl Default for BackendRegistry {
    fn default() -> Self {
        Self::new()
    }
}

impl BackendRegistry {
    pub fn new() -> Self {
        #[allow(unused_mut)]
        let mut reg = Self { entries: vec![(BUNDLED.to_string(), Arc::new(BundledBackend::default()) as Arc<dyn MilpBackend>)], active: 0 };
        #[cfg(feature = "microlp")]
        reg.register_backend("microlp", Arc::new(MicrolpBackend));
        reg
    }

    pub fn register_backend(&mut self, name: &str, adapter: Arc<dyn MilpBackend>) {
        match self.entries.iter().position(|(n, _)| n == name) {
            Some(p) if name != BUNDLED => self.entries[p].1 = adapter,
            Some(_) => {}
            None => self.entries.push((name.to_string(), adapter)),
        }
    }

    pub fn select_backend(&mut self, name: &str) -> Result<()> {
        let p = self.entries.iter().position(|(n, _)| n == name).ok_or_else(|| Error::UnknownBackend(name.to_string()))?;
        self.active = p;
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn MilpBackend>> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, b)| b.clone())
            .ok_or_else(|| Error::UnknownBackend(name.to_string()))
    }

    pub fn active(&self) -> Arc<dyn MilpBackend> {
        self.entries[self.active].1.clone()
    }

    pub fn active_name(&self) -> &str {
        &self.entries[self.active].0
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.iter().map(|(n, _)| n.clone()).collect()
    }
}
