use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Maximize,
    Minimize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowSense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub lower: f64,
    pub upper: f64,
    pub integer: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub coefs: Vec<(usize, f64)>,
    pub sense: RowSense,
    pub rhs: f64,
}

impl Row {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coefs.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Positive amount by which `x` violates the row.
    pub fn violation(&self, x: &[f64]) -> f64 {
        let act = self.activity(x);
        match self.sense {
            RowSense::Le => (act - self.rhs).max(0.0),
            RowSense::Ge => (self.rhs - act).max(0.0),
            RowSense::Eq => (act - self.rhs).abs(),
        }
    }
}

/// An ordered binary chain `z_0 >= z_1 >= ...` with companion fill variables
/// `w`, tied by `z_k <= w_k` and `w_{k+1} <= z_k`. `rows` lists the model rows
/// that encode exactly these relations.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub z: Vec<usize>,
    pub w: Vec<usize>,
    pub rows: Vec<usize>,
}

/// Bounded mixed-integer linear program.
#[derive(Debug, Clone, PartialEq)]
pub struct MilpModel {
    pub sense: Sense,
    pub vars: Vec<Variable>,
    pub objective: Vec<f64>,
    pub objective_constant: f64,
    pub rows: Vec<Row>,
    pub chains: Vec<Chain>,
}

impl MilpModel {
    pub fn new(sense: Sense) -> Self {
        Self { sense, vars: Vec::new(), objective: Vec::new(), objective_constant: 0.0, rows: Vec::new(), chains: Vec::new() }
    }

    pub fn add_var(&mut self, lower: f64, upper: f64, integer: bool, obj: f64) -> usize {
        self.vars.push(Variable { lower, upper, integer });
        self.objective.push(obj);
        self.vars.len() - 1
    }

    pub fn add_row(&mut self, coefs: Vec<(usize, f64)>, sense: RowSense, rhs: f64) -> usize {
        self.rows.push(Row { coefs, sense, rhs });
        self.rows.len() - 1
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn integer_count(&self) -> usize {
        self.vars.iter().filter(|v| v.integer).count()
    }

    /// Copy with every integrality flag cleared.
    pub fn relaxed(&self) -> MilpModel {
        let mut m = self.clone();
        for v in &mut m.vars {
            v.integer = false;
        }
        m
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.objective_constant + self.objective.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }

    /// Largest row or bound violation of `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for (v, &xv) in self.vars.iter().zip(x) {
            worst = worst.max(v.lower - xv).max(xv - v.upper);
        }
        for row in &self.rows {
            worst = worst.max(row.violation(x));
        }
        worst
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vars.len();
        if self.objective.len() != n {
            return Err(Error::Solver(format!("objective has {} entries for {n} variables", self.objective.len())));
        }
        for (j, v) in self.vars.iter().enumerate() {
            if !v.lower.is_finite() || !v.upper.is_finite() {
                return Err(Error::Solver(format!("variable {j} must have finite bounds")));
            }
            if v.lower > v.upper {
                return Err(Error::Solver(format!("variable {j} has lower bound above upper bound")));
            }
            if !self.objective[j].is_finite() {
                return Err(Error::Solver(format!("objective coefficient {j} is not finite")));
            }
        }
        for (i, row) in self.rows.iter().enumerate() {
            if !row.rhs.is_finite() {
                return Err(Error::Solver(format!("row {i} has a non-finite right-hand side")));
            }
            for &(j, a) in &row.coefs {
                if j >= n || !a.is_finite() {
                    return Err(Error::Solver(format!("row {i} references variable {j} or has a non-finite coefficient")));
                }
            }
        }
        for (c, chain) in self.chains.iter().enumerate() {
            if chain.z.len() != chain.w.len() || chain.z.iter().chain(&chain.w).any(|&j| j >= n) {
                return Err(Error::Solver(format!("chain {c} is malformed")));
            }
            if chain.rows.iter().any(|&i| i >= self.rows.len()) {
                return Err(Error::Solver(format!("chain {c} references a missing row")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub primal: Vec<f64>,
    pub objective: f64,
    /// Shadow prices per row in the model's own sense: the rate at which the
    /// optimal objective changes as the row's right-hand side grows.
    pub duals: Option<Vec<f64>>,
    /// Reduced costs of the structural variables in the model's own sense.
    pub reduced_costs: Option<Vec<f64>>,
    pub nodes: usize,
    pub iterations: usize,
    pub max_violation: f64,
    /// Best proven bound on the optimum (equals `objective` when optimal).
    pub best_bound: f64,
    /// Incumbent objective each time it improved.
    pub incumbents: Vec<f64>,
}

impl SolveResult {
    pub fn infeasible(iterations: usize, nodes: usize) -> Self {
        Self {
            status: SolveStatus::Infeasible,
            primal: Vec::new(),
            objective: f64::NAN,
            duals: None,
            reduced_costs: None,
            nodes,
            iterations,
            max_violation: f64::NAN,
            best_bound: f64::NAN,
            incumbents: Vec::new(),
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}
