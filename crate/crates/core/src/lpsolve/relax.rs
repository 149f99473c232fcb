use super::chain::ChainReduction;
use super::model::{MilpModel, Sense};
use super::simplex::{solve_std, Basis, LpStatus, StdLp};
use crate::error::Result;

pub(crate) struct RelaxOutcome {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    /// Shadow prices in the model's sense.
    pub duals: Option<Vec<f64>>,
    pub iterations: usize,
    pub basis: Option<Basis>,
}

/// LP relaxation of a model under varying variable bounds.
pub(crate) struct Relaxation<'a> {
    model: &'a MilpModel,
    reduction: Option<ChainReduction>,
}

impl<'a> Relaxation<'a> {
    pub fn new(model: &'a MilpModel, compress: bool) -> Self {
        let reduction = if compress { ChainReduction::new(model) } else { None };
        Self { model, reduction }
    }

    pub fn solve(&self, bounds: &[(f64, f64)], warm: Option<&Basis>, want_duals: bool) -> Result<RelaxOutcome> {
        let model = self.model;
        let shadow = if model.sense == Sense::Maximize { -1.0 } else { 1.0 };
        if let Some(red) = &self.reduction {
            if let Some(rb) = red.reduced_bounds(model, bounds) {
                let lp = StdLp::from_model(&red.lp, Some(&rb));
                let out = solve_std(&lp, warm)?;
                if out.status == LpStatus::Infeasible {
                    return Ok(RelaxOutcome { status: out.status, x: Vec::new(), objective: f64::NAN, duals: None, iterations: out.iterations, basis: None });
                }
                let x = red.expand(model, bounds, &out.x[..lp.n]);
                let duals = want_duals.then(|| {
                    let yr: Vec<f64> = out.y.iter().map(|y| shadow * y).collect();
                    red.expand_duals(model, bounds, &x, &yr)
                });
                return Ok(RelaxOutcome {
                    status: LpStatus::Optimal,
                    objective: model.evaluate(&x),
                    x,
                    duals,
                    iterations: out.iterations,
                    basis: Some(out.basis),
                });
            }
        }
        let lp = StdLp::from_model(model, Some(bounds));
        let out = solve_std(&lp, warm)?;
        if out.status == LpStatus::Infeasible {
            return Ok(RelaxOutcome { status: out.status, x: Vec::new(), objective: f64::NAN, duals: None, iterations: out.iterations, basis: None });
        }
        let x = out.x[..lp.n].to_vec();
        Ok(RelaxOutcome {
            status: LpStatus::Optimal,
            objective: model.evaluate(&x),
            x,
            duals: want_duals.then(|| out.y.iter().map(|y| shadow * y).collect()),
            iterations: out.iterations,
            basis: Some(out.basis),
        })
    }
}
