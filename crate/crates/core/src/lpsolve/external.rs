//! Adapter for the `microlp` crate. It reports primal solutions only.

use microlp::{ComparisonOp, LinearExpr, OptimizationDirection, Problem};

use super::model::{MilpModel, RowSense, Sense, SolveResult, SolveStatus};
use super::MilpBackend;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default)]
pub struct MicrolpBackend;

fn run(model: &MilpModel, integer: bool) -> Result<SolveResult> {
    model.validate()?;
    let dir = match model.sense {
        Sense::Maximize => OptimizationDirection::Maximize,
        Sense::Minimize => OptimizationDirection::Minimize,
    };
    let mut p = Problem::new(dir);
    let mut vars = Vec::with_capacity(model.num_vars());
    for (v, &c) in model.vars.iter().zip(&model.objective) {
        let var = if integer && v.integer {
            p.add_integer_var(c, (v.lower.ceil() as i32, v.upper.floor() as i32))
        } else {
            p.add_var(c, (v.lower, v.upper))
        };
        vars.push(var);
    }
    for row in &model.rows {
        let mut expr = LinearExpr::empty();
        for &(j, a) in &row.coefs {
            expr.add(vars[j], a);
        }
        let op = match row.sense {
            RowSense::Le => ComparisonOp::Le,
            RowSense::Ge => ComparisonOp::Ge,
            RowSense::Eq => ComparisonOp::Eq,
        };
        p.add_constraint(expr, op, row.rhs);
    }
    let outcome = match p.solve() {
        Ok(o) => o,
        Err(microlp::Error::Infeasible) => return Ok(SolveResult::infeasible(0, 0)),
        Err(e) => return Err(Error::Solver(format!("microlp: {e:?}"))),
    };
    let optimal = outcome.is_optimal();
    let sol = outcome.into_solution().map_err(|_| Error::Solver("microlp stopped without a solution".into()))?;
    let x: Vec<f64> = vars.iter().map(|&v| sol.var_value_raw(v)).collect();
    let objective = model.evaluate(&x);
    Ok(SolveResult {
        status: if optimal { SolveStatus::Optimal } else { SolveStatus::IterationLimit },
        objective,
        max_violation: model.max_violation(&x),
        primal: x,
        duals: None,
        reduced_costs: None,
        nodes: 0,
        iterations: 0,
        best_bound: objective,
        incumbents: vec![objective],
    })
}

impl MilpBackend for MicrolpBackend {
    fn solve_lp(&self, model: &MilpModel) -> Result<SolveResult> {
        run(model, false)
    }

    fn solve_milp(&self, model: &MilpModel) -> Result<SolveResult> {
        run(model, true)
    }
}
