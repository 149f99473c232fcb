//! Exact LP reformulation of tagged chains.
//!
//! For a chain with `K` fill variables the relaxation of
//! `z_k >= z_{k+1}, z_k <= w_k, w_{k+1} <= z_k` projects onto
//! `1 >= w_0 >= ... >= w_{K-1} >= 0`, which is written with weights
//! `lambda_0..lambda_K >= 0`, `sum lambda = 1` and `w_k = sum_{k' > k} lambda_{k'}`.
//! The reduced LP drops all chain rows and the `z` columns, which shrinks
//! models with long chains by an order of magnitude. Branching fixes on `z`
//! translate into bounds on the weights.

use super::model::{MilpModel, RowSense, Sense};
use super::simplex::{solve_std, LpStatus, StdLp};

const NONE: usize = usize::MAX;
const FIX_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy)]
enum Role {
    Free,
    Z(usize, usize),
    W(usize, usize),
}

#[derive(Debug, Clone)]
pub(crate) struct ChainReduction {
    pub lp: MilpModel,
    var_map: Vec<usize>,
    roles: Vec<Role>,
    kept_rows: Vec<usize>,
    lambda_start: Vec<usize>,
    chain_len: Vec<usize>,
    chain_row: Vec<bool>,
}

impl ChainReduction {
    /// Builds the reduction, or `None` when the model does not have the
    /// required shape (then the caller uses the generic path).
    pub fn new(model: &MilpModel) -> Option<ChainReduction> {
        if model.chains.is_empty() {
            return None;
        }
        let nv = model.num_vars();
        let mut roles = vec![Role::Free; nv];
        let mut chain_row = vec![false; model.num_rows()];
        for (c, chain) in model.chains.iter().enumerate() {
            if chain.z.is_empty() {
                return None;
            }
            for (k, (&z, &w)) in chain.z.iter().zip(&chain.w).enumerate() {
                if !matches!(roles[z], Role::Free) || !matches!(roles[w], Role::Free) || z == w {
                    return None;
                }
                roles[z] = Role::Z(c, k);
                roles[w] = Role::W(c, k);
                if model.objective[z] != 0.0 || model.vars[w].lower != 0.0 || model.vars[w].upper != 1.0 {
                    return None;
                }
                let zv = &model.vars[z];
                if zv.lower < 0.0 || zv.upper > 1.0 {
                    return None;
                }
            }
            for &r in &chain.rows {
                if chain_row[r] {
                    return None;
                }
                chain_row[r] = true;
            }
        }
        let mut row_owner = vec![None; model.num_rows()];
        for (c, chain) in model.chains.iter().enumerate() {
            for &r in &chain.rows {
                row_owner[r] = Some(c);
            }
        }
        // chain rows touch only their own chain; z appears nowhere else
        for (i, row) in model.rows.iter().enumerate() {
            let owner = row_owner[i];
            for &(j, a) in &row.coefs {
                if a == 0.0 {
                    continue;
                }
                match (roles[j], owner) {
                    (Role::Z(c, _), Some(o)) | (Role::W(c, _), Some(o)) if c != o => return None,
                    (Role::Free, Some(_)) => return None,
                    (Role::Z(..), None) => return None,
                    _ => {}
                }
            }
        }

        let mut lp = MilpModel::new(model.sense);
        lp.objective_constant = model.objective_constant;
        let mut var_map = vec![NONE; nv];
        for j in 0..nv {
            if matches!(roles[j], Role::Free) {
                let v = &model.vars[j];
                var_map[j] = lp.add_var(v.lower, v.upper, false, model.objective[j]);
            }
        }
        let mut lambda_start = Vec::with_capacity(model.chains.len());
        let mut chain_len = Vec::with_capacity(model.chains.len());
        for chain in &model.chains {
            let k = chain.w.len();
            lambda_start.push(lp.num_vars());
            chain_len.push(k);
            let mut cum = 0.0;
            lp.add_var(0.0, 1.0, false, 0.0);
            for &w in &chain.w {
                cum += model.objective[w];
                lp.add_var(0.0, 1.0, false, cum);
            }
        }
        let mut kept_rows = Vec::new();
        let mut scratch: Vec<Vec<f64>> = chain_len.iter().map(|&k| vec![0.0; k]).collect();
        let mut touched: Vec<usize> = Vec::new();
        let mut is_touched = vec![false; chain_len.len()];
        for (i, row) in model.rows.iter().enumerate() {
            if chain_row[i] {
                continue;
            }
            let mut coefs = Vec::with_capacity(row.coefs.len());
            for &(j, a) in &row.coefs {
                match roles[j] {
                    Role::Free => coefs.push((var_map[j], a)),
                    Role::W(c, k) => {
                        if !is_touched[c] {
                            is_touched[c] = true;
                            touched.push(c);
                        }
                        scratch[c][k] += a;
                    }
                    Role::Z(..) => unreachable!(),
                }
            }
            for &c in &touched {
                let mut cum = 0.0;
                for k in 0..chain_len[c] {
                    cum += scratch[c][k];
                    if cum != 0.0 {
                        coefs.push((lambda_start[c] + k + 1, cum));
                    }
                    scratch[c][k] = 0.0;
                }
                is_touched[c] = false;
            }
            touched.clear();
            lp.add_row(coefs, row.sense, row.rhs);
            kept_rows.push(i);
        }
        for (c, &k) in chain_len.iter().enumerate() {
            let coefs = (0..=k).map(|s| (lambda_start[c] + s, 1.0)).collect();
            lp.add_row(coefs, RowSense::Eq, 1.0);
        }
        Some(ChainReduction { lp, var_map, roles, kept_rows, lambda_start, chain_len, chain_row })
    }

    /// Bounds of the reduced LP implied by bounds on the original variables,
    /// or `None` when a fill variable carries a bound the weights cannot express.
    pub fn reduced_bounds(&self, model: &MilpModel, bounds: &[(f64, f64)]) -> Option<Vec<(f64, f64)>> {
        let mut out: Vec<(f64, f64)> = self.lp.vars.iter().map(|v| (v.lower, v.upper)).collect();
        for (j, &(lo, hi)) in bounds.iter().enumerate() {
            match self.roles[j] {
                Role::Free => out[self.var_map[j]] = (lo, hi),
                Role::Z(c, k) => {
                    let s = self.lambda_start[c];
                    if lo >= 0.5 {
                        for t in 0..=k {
                            out[s + t].1 = 0.0;
                        }
                    }
                    if hi <= 0.5 {
                        for t in k + 2..=self.chain_len[c] {
                            out[s + t].1 = 0.0;
                        }
                    }
                }
                Role::W(c, k) => {
                    let s = self.lambda_start[c];
                    let (wl, wh) = (model.vars[j].lower, model.vars[j].upper);
                    if (lo, hi) == (wl, wh) {
                        continue;
                    }
                    if lo >= 1.0 - FIX_TOL {
                        for t in 0..=k {
                            out[s + t].1 = 0.0;
                        }
                    } else if lo > FIX_TOL {
                        return None;
                    }
                    if hi <= FIX_TOL {
                        for t in k + 1..=self.chain_len[c] {
                            out[s + t].1 = 0.0;
                        }
                    } else if hi < 1.0 - FIX_TOL {
                        return None;
                    }
                }
            }
        }
        Some(out)
    }

    /// Original-space primal from a reduced solution. `z` takes an integral
    /// value whenever the fill pattern allows it.
    pub fn expand(&self, model: &MilpModel, bounds: &[(f64, f64)], xr: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; model.num_vars()];
        for (c, chain) in model.chains.iter().enumerate() {
            let s = self.lambda_start[c];
            let k = self.chain_len[c];
            let mut w = vec![0.0; k + 1];
            let mut tail = 0.0;
            for t in (0..k).rev() {
                tail += xr[s + t + 1].max(0.0);
                w[t] = tail.min(1.0);
            }
            for t in 0..k {
                x[chain.w[t]] = w[t];
                let (zl, zh) = bounds[chain.z[t]];
                let (hi, lo) = (w[t], w[t + 1]);
                x[chain.z[t]] = if zl >= 0.5 {
                    1.0
                } else if zh <= 0.5 {
                    0.0
                } else if hi >= 1.0 - 1e-9 {
                    1.0
                } else if lo <= 1e-9 {
                    0.0
                } else {
                    0.5f64.clamp(lo, hi)
                };
            }
        }
        for (j, role) in self.roles.iter().enumerate() {
            if let Role::Free = role {
                x[j] = xr[self.var_map[j]];
            }
        }
        x
    }

    /// Shadow prices for every original row. Non-chain rows take the reduced
    /// duals; chain-row duals come from a small feasibility LP per chain that
    /// restores dual feasibility and complementary slackness.
    pub fn expand_duals(&self, model: &MilpModel, bounds: &[(f64, f64)], x: &[f64], yr: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; model.num_rows()];
        for (r, &i) in self.kept_rows.iter().enumerate() {
            y[i] = yr[r];
        }
        // columns of chain variables in the non-chain rows
        let mut base_cost = model.objective.clone();
        for (i, row) in model.rows.iter().enumerate() {
            if self.chain_row[i] || y[i] == 0.0 {
                continue;
            }
            for &(j, a) in &row.coefs {
                if !matches!(self.roles[j], Role::Free) {
                    base_cost[j] -= y[i] * a;
                }
            }
        }
        let maximize = model.sense == Sense::Maximize;
        for chain in &model.chains {
            let rows = &chain.rows;
            let vars: Vec<usize> = chain.z.iter().chain(&chain.w).copied().collect();
            let local: std::collections::HashMap<usize, usize> = vars.iter().enumerate().map(|(p, &j)| (j, p)).collect();
            let mut cols = vec![Vec::new(); rows.len()];
            let mut lo = Vec::with_capacity(rows.len() + vars.len());
            let mut hi = Vec::with_capacity(rows.len() + vars.len());
            for (q, &r) in rows.iter().enumerate() {
                let row = &model.rows[r];
                for &(j, a) in &row.coefs {
                    if a != 0.0 {
                        cols[q].push((local[&j], a));
                    }
                }
                let slack = (row.activity(x) - row.rhs).abs() > 1e-7;
                let (l, h) = match (row.sense, maximize) {
                    _ if slack => (0.0, 0.0),
                    (RowSense::Eq, _) => (f64::NEG_INFINITY, f64::INFINITY),
                    (RowSense::Le, true) | (RowSense::Ge, false) => (0.0, f64::INFINITY),
                    (RowSense::Ge, true) | (RowSense::Le, false) => (f64::NEG_INFINITY, 0.0),
                };
                lo.push(l);
                hi.push(h);
            }
            for &j in &vars {
                // reduced cost d = e - a.y must carry the sign its bound status allows
                let e = base_cost[j];
                let (bl, bh) = bounds[j];
                let (dl, dh) = if bh - bl <= 1e-12 {
                    (f64::NEG_INFINITY, f64::INFINITY)
                } else if x[j] <= bl + 1e-9 {
                    if maximize { (f64::NEG_INFINITY, 0.0) } else { (0.0, f64::INFINITY) }
                } else if x[j] >= bh - 1e-9 {
                    if maximize { (0.0, f64::INFINITY) } else { (f64::NEG_INFINITY, 0.0) }
                } else {
                    (0.0, 0.0)
                };
                lo.push(e - dh);
                hi.push(e - dl);
            }
            let lp = StdLp::from_columns(vars.len(), cols, vec![0.0; rows.len() + vars.len()], lo, hi);
            if let Ok(out) = solve_std(&lp, None) {
                if out.status == LpStatus::Optimal {
                    for (q, &r) in rows.iter().enumerate() {
                        y[r] = out.x[q];
                    }
                }
            }
        }
        y
    }
}
