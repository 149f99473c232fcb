//! The per-threshold pricing MILP in incremental form.
//!
//! For a threshold `delta` the model maximizes
//! `N(r) - delta * D(r)` with `N = s * sum_j (fhat_j - kappa_j ghat_j)` and
//! `D = 1 + sum_j ghat_j`, where each price is encoded by a chain of segment
//! indicators `z_jk` and fills `w_jk`, `r_j = l_j + delta_j * sum_k w_jk`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::lpsolve::{Chain, MilpModel, RowSense, Sense};
use crate::mnl::{is_null, NULL_PRICE};
use crate::pwla::{error_constants_scaled, PwlaGrid};

/// One fractional pricing problem: the static problem, its deterministic
/// `T`-period version, or a single dynamic-programming stage.
#[derive(Debug, Clone)]
pub struct PricingProblem<'a> {
    pub instance: &'a Instance,
    pub grid: &'a PwlaGrid,
    /// Multiplies revenue and consumption (`1`, `lambda * T` or `lambda`).
    pub scale: f64,
    /// Per-product opportunity cost subtracted from the price.
    pub margin_cost: Vec<f64>,
    pub capacity: Vec<f64>,
    /// Additive slack on each resource row.
    pub resource_slack: Vec<f64>,
    /// Products that are not offered sit at the null price.
    pub offered: Vec<bool>,
}

impl<'a> PricingProblem<'a> {
    /// Static problem with resource slack `eta_i / K`.
    pub fn new(instance: &'a Instance, grid: &'a PwlaGrid, scale: f64) -> Self {
        let capacity = instance.capacities_f64();
        let ec = error_constants_scaled(instance, &capacity, scale);
        let k = grid.k as f64;
        Self {
            instance,
            grid,
            scale,
            margin_cost: vec![0.0; instance.n()],
            resource_slack: ec.eta.iter().map(|e| e / k).collect(),
            capacity,
            offered: vec![true; instance.n()],
        }
    }

    /// One decomposition stage: capacity override, per-product margins and
    /// an offered mask, with slack `eta_i / K` for that capacity.
    pub fn stage(
        instance: &'a Instance,
        grid: &'a PwlaGrid,
        scale: f64,
        capacity: Vec<f64>,
        margin_cost: Vec<f64>,
        offered: Vec<bool>,
    ) -> Self {
        let ec = error_constants_scaled(instance, &capacity, scale);
        let k = grid.k as f64;
        Self {
            instance,
            grid,
            scale,
            margin_cost,
            resource_slack: ec.eta.iter().map(|e| e / k).collect(),
            capacity,
            offered,
        }
    }

    pub fn with_slack(mut self, slack: Vec<f64>) -> Self {
        self.resource_slack = slack;
        self
    }

    pub fn n(&self) -> usize {
        self.instance.n()
    }

    fn kappa(&self, j: usize) -> f64 {
        self.margin_cost[j]
    }

    /// Full price vector with the null price on products not offered.
    pub fn complete(&self, offered_prices: &[f64]) -> Vec<f64> {
        let mut r = vec![NULL_PRICE; self.n()];
        let mut it = offered_prices.iter();
        for j in 0..self.n() {
            if self.offered[j] {
                r[j] = *it.next().expect("one price per offered product");
            }
        }
        r
    }

    /// `s * sum_j (fhat_j - kappa_j ghat_j) / (1 + sum_j ghat_j)`.
    pub fn approx_objective(&self, r: &[f64]) -> Result<f64> {
        let mut num = 0.0;
        let mut den = 1.0;
        for j in 0..self.n() {
            if !self.offered[j] || is_null(r[j]) {
                continue;
            }
            let g = self.grid.eval_ghat(j, r[j])?;
            num += self.grid.eval_fhat(j, r[j])? - self.kappa(j) * g;
            den += g;
        }
        Ok(self.scale * num / den)
    }

    /// `s * sum_j P_j(r) (r_j - kappa_j)` under the exact choice model.
    pub fn exact_objective(&self, r: &[f64]) -> Result<f64> {
        let masked = self.mask(r);
        Ok(self.scale * self.instance.mnl.expected_margin(&masked, &self.margin_cost)?)
    }

    fn mask(&self, r: &[f64]) -> Vec<f64> {
        r.iter().zip(&self.offered).map(|(&x, &o)| if o { x } else { NULL_PRICE }).collect()
    }

    pub fn exact_resource(&self, r: &[f64]) -> Result<Vec<f64>> {
        let masked = self.mask(r);
        self.instance.mnl.resource_lhs_scaled(&self.instance.a_mat, &self.capacity, self.scale, &masked)
    }

    pub fn approx_resource(&self, r: &[f64]) -> Result<Vec<f64>> {
        self.grid.eval_resource(self.instance, &self.capacity, self.scale, &self.mask(r))
    }

    /// Coefficient of product `j` in resource row `i`.
    fn resource_coef(&self, i: usize, j: usize) -> f64 {
        self.scale * self.instance.a_mat[i][j] - self.capacity[i]
    }

    /// A resource row is vacuous when no offered product has a positive
    /// coefficient: then its left side is nonpositive.
    pub fn resource_row_active(&self, i: usize) -> bool {
        let any_pos = (0..self.n()).any(|j| self.offered[j] && self.resource_coef(i, j) > 0.0);
        any_pos || self.capacity[i] + self.resource_slack[i] < 0.0
    }

    pub fn has_active_resource_rows(&self) -> bool {
        (0..self.instance.m()).any(|i| self.resource_row_active(i))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelaxMode {
    /// Every `z` is binary.
    Never,
    /// Relax the monotone prefix of each chain when no resource row remains.
    #[default]
    WhenSafe,
    /// Relax the monotone prefix even with resource rows present.
    Always,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoptEncoding {
    pub n: usize,
    pub k: usize,
    pub delta: f64,
    /// Offered products in model order.
    pub products: Vec<usize>,
    pub z: Vec<Vec<usize>>,
    pub w: Vec<Vec<usize>>,
    pub r: Vec<usize>,
    /// Number of leading `z` made continuous, per offered product.
    pub relaxed_prefix: Vec<usize>,
    /// Model row of each resource constraint, `None` when dropped as vacuous.
    pub resource_rows: Vec<Option<usize>>,
    pub price_rows: Vec<Option<usize>>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub step: Vec<f64>,
    pub num_vars: usize,
}

/// Length of the non-increasing prefix of `tau`, as the index of its last entry.
fn monotone_prefix(tau: &[f64]) -> usize {
    let mut q = 0;
    while q + 1 < tau.len() && tau[q + 1] <= tau[q] + 1e-12 * (1.0 + tau[q].abs()) {
        q += 1;
    }
    q
}

pub fn build_bopt(problem: &PricingProblem<'_>, delta: f64, relax: RelaxMode) -> Result<(MilpModel, BoptEncoding)> {
    if !delta.is_finite() {
        return Err(Error::InvalidArgument(format!("threshold {delta} is not finite")));
    }
    let inst = problem.instance;
    let grid = problem.grid;
    let n = inst.n();
    if grid.n() != n || problem.margin_cost.len() != n || problem.offered.len() != n {
        return Err(Error::Dimension("pricing problem vectors must have one entry per product".into()));
    }
    if problem.capacity.len() != inst.m() || problem.resource_slack.len() != inst.m() {
        return Err(Error::Dimension("capacity and slack need one entry per resource".into()));
    }
    let k = grid.k;
    let s = problem.scale;
    let mut model = MilpModel::new(Sense::Maximize);
    let mut enc = BoptEncoding {
        n,
        k,
        delta,
        products: Vec::new(),
        z: Vec::new(),
        w: Vec::new(),
        r: Vec::new(),
        relaxed_prefix: Vec::new(),
        resource_rows: vec![None; inst.m()],
        price_rows: vec![None; inst.p()],
        lower: grid.lower.clone(),
        upper: grid.upper.clone(),
        step: grid.delta.clone(),
        num_vars: 0,
    };
    let active: Vec<bool> = (0..inst.m()).map(|i| problem.resource_row_active(i)).collect();
    let relax_ok = match relax {
        RelaxMode::Never => false,
        RelaxMode::WhenSafe => !active.iter().any(|&a| a),
        RelaxMode::Always => true,
    };

    let mut constant = -delta;
    for j in 0..n {
        if !problem.offered[j] {
            continue;
        }
        let kap = s * problem.kappa(j) + delta;
        constant += s * grid.f_anchor(j) - kap * grid.g_anchor(j);
        let tau: Vec<f64> = (0..k).map(|t| s * grid.gamma_f[j][t] - kap * grid.gamma_g[j][t]).collect();
        let relaxed = if relax_ok {
            // z_{K-1} never restricts w, and z_0..z_{q-1} can be relaxed when
            // the slopes are non-increasing on 0..=q
            let q = monotone_prefix(&tau);
            if q + 1 >= k { k } else { q }
        } else {
            0
        };
        let step = grid.delta[j];
        let z: Vec<usize> = (0..k).map(|t| model.add_var(0.0, 1.0, t >= relaxed, 0.0)).collect();
        let w: Vec<usize> = (0..k).map(|t| model.add_var(0.0, 1.0, false, step * tau[t])).collect();
        let r = model.add_var(grid.lower[j], grid.upper[j], false, 0.0);
        let mut rows = Vec::with_capacity(3 * k);
        for t in 0..k {
            if t + 1 < k {
                rows.push(model.add_row(vec![(z[t], 1.0), (z[t + 1], -1.0)], RowSense::Ge, 0.0));
            }
            rows.push(model.add_row(vec![(z[t], 1.0), (w[t], -1.0)], RowSense::Le, 0.0));
            if t + 1 < k {
                rows.push(model.add_row(vec![(w[t + 1], 1.0), (z[t], -1.0)], RowSense::Le, 0.0));
            }
        }
        let mut decode = Vec::with_capacity(k + 1);
        decode.push((r, 1.0));
        decode.extend(w.iter().map(|&x| (x, -step)));
        model.add_row(decode, RowSense::Eq, grid.lower[j]);
        model.chains.push(Chain { z: z.clone(), w: w.clone(), rows });
        enc.products.push(j);
        enc.z.push(z);
        enc.w.push(w);
        enc.r.push(r);
        enc.relaxed_prefix.push(relaxed);
    }
    model.objective_constant = constant;

    for i in 0..inst.m() {
        if !active[i] {
            continue;
        }
        let mut coefs = Vec::new();
        let mut rhs = problem.capacity[i] + problem.resource_slack[i];
        for (p, &j) in enc.products.iter().enumerate() {
            let a = problem.resource_coef(i, j);
            if a == 0.0 {
                continue;
            }
            rhs -= a * grid.g_anchor(j);
            for t in 0..k {
                coefs.push((enc.w[p][t], a * grid.delta[j] * grid.gamma_g[j][t]));
            }
        }
        enc.resource_rows[i] = Some(model.add_row(coefs, RowSense::Le, rhs));
    }
    for (row, (brow, &d)) in inst.b_mat.iter().zip(&inst.d).enumerate() {
        let coefs: Vec<(usize, f64)> =
            enc.products.iter().enumerate().filter(|(_, &j)| brow[j] != 0.0).map(|(p, &j)| (enc.r[p], brow[j])).collect();
        if coefs.is_empty() && d >= 0.0 {
            continue;
        }
        enc.price_rows[row] = Some(model.add_row(coefs, RowSense::Le, d));
    }
    enc.num_vars = model.num_vars();
    Ok((model, enc))
}

/// Builds the static threshold model with explicit slack, the direct form of
/// the construction used by the solvers.
pub fn build_bopt_static(
    grid: &PwlaGrid,
    instance: &Instance,
    delta: f64,
    resource_slack: &[f64],
    relax: bool,
) -> Result<(MilpModel, BoptEncoding)> {
    let problem = PricingProblem::new(instance, grid, 1.0).with_slack(resource_slack.to_vec());
    build_bopt(&problem, delta, if relax { RelaxMode::WhenSafe } else { RelaxMode::Never })
}

const CHAIN_TOL: f64 = 1e-6;

/// Prices from a model solution; products outside the model get the null price.
pub fn decode_prices(enc: &BoptEncoding, primal: &[f64]) -> Result<Vec<f64>> {
    if primal.len() != enc.num_vars {
        return Err(Error::Dimension(format!("primal has {} entries, model has {}", primal.len(), enc.num_vars)));
    }
    let mut r = vec![NULL_PRICE; enc.n];
    for (p, &j) in enc.products.iter().enumerate() {
        let w: Vec<f64> = enc.w[p].iter().map(|&v| primal[v]).collect();
        for t in 0..w.len() {
            if w[t] < -CHAIN_TOL || w[t] > 1.0 + CHAIN_TOL || (t + 1 < w.len() && w[t + 1] > w[t] + CHAIN_TOL) {
                return Err(Error::ChainViolation(format!("fills of product {j} are not a monotone prefix: {w:?}")));
            }
        }
        let total: f64 = w.iter().map(|x| x.clamp(0.0, 1.0)).sum();
        r[j] = (enc.lower[j] + enc.step[j] * total).clamp(enc.lower[j], enc.upper[j]);
    }
    Ok(r)
}

/// Model assignment of `z`, `w` and `r` representing the prices `r`.
pub fn encode_prices(enc: &BoptEncoding, r: &[f64]) -> Result<Vec<f64>> {
    if r.len() != enc.n {
        return Err(Error::Dimension(format!("price vector has {} entries, expected {}", r.len(), enc.n)));
    }
    let mut x = vec![0.0; enc.num_vars];
    for (p, &j) in enc.products.iter().enumerate() {
        let (l, u) = (enc.lower[j], enc.upper[j]);
        if !(r[j] >= l && r[j] <= u) {
            return Err(Error::PriceOutOfRange(format!("r[{j}] = {} outside [{l}, {u}]", r[j])));
        }
        let t = if enc.step[j] > 0.0 { (r[j] - l) / enc.step[j] } else { 0.0 };
        let seg = (t.floor() as usize).min(enc.k - 1);
        let frac = (t - seg as f64).clamp(0.0, 1.0);
        for s in 0..enc.k {
            x[enc.w[p][s]] = if s < seg { 1.0 } else if s == seg { frac } else { 0.0 };
            x[enc.z[p][s]] = if s < seg { 1.0 } else { 0.0 };
        }
        x[enc.r[p]] = r[j];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::tests::toy;
    use crate::lpsolve::{solve_milp, solve_milp_with, MilpOptions, SolveStatus};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn no_rows(mut inst: Instance) -> Instance {
        inst.a_mat.clear();
        inst.c.clear();
        inst
    }

    #[test]
    fn lp_case_has_no_integers() {
        let inst = toy(10.0, 200.0, 100.0, 300.0);
        let grid = PwlaGrid::build(&inst, 3).unwrap();
        for delta in [0.0, 5.0, 40.0] {
            let (m, _) = build_bopt_static(&grid, &inst, delta, &[], true).unwrap();
            assert_eq!(m.integer_count(), 0);
            let (m, _) = build_bopt_static(&grid, &inst, delta, &[], false).unwrap();
            assert_eq!(m.integer_count(), 3);
        }
    }

    #[test]
    fn concave_prefix_is_relaxed() {
        // b = 50, delta_j = 10, K = 20 on [1e-9, 200]: f is concave on the first ten segments
        let inst = toy(0.0, 50.0, 1e-9, 200.0);
        let grid = PwlaGrid::build(&inst, 20).unwrap();
        assert_eq!(grid.concavity_cutoff[0], 9);
        let (m, enc) = build_bopt_static(&grid, &inst, 0.0, &[], true).unwrap();
        let relaxed = enc.relaxed_prefix[0];
        assert!(relaxed >= 9, "{relaxed}");
        for (t, &z) in enc.z[0].iter().enumerate() {
            assert_eq!(m.vars[z].integer, t >= relaxed);
        }
    }

    #[test]
    fn decode_examples() {
        let mut inst = toy(0.0, 1.0, 1.0, 10.0);
        inst.l[0] = 0.0;
        let grid = PwlaGrid::build(&inst, 5).unwrap();
        let (m, enc) = build_bopt_static(&grid, &inst, 0.0, &[], false).unwrap();
        let mut x = vec![0.0; m.num_vars()];
        for (t, v) in [1.0, 1.0, 0.5, 0.0, 0.0].iter().enumerate() {
            x[enc.w[0][t]] = *v;
        }
        assert!((decode_prices(&enc, &x).unwrap()[0] - 5.0).abs() < 1e-12);
        for t in 0..5 {
            x[enc.w[0][t]] = 1.0;
        }
        assert!((decode_prices(&enc, &x).unwrap()[0] - 10.0).abs() < 1e-12);
        for t in 0..5 {
            x[enc.w[0][t]] = 0.0;
        }
        assert_eq!(decode_prices(&enc, &x).unwrap()[0], 0.0);
        x[enc.w[0][3]] = 1.0;
        assert!(matches!(decode_prices(&enc, &x), Err(Error::ChainViolation(_))));
    }

    #[test]
    fn encode_examples() {
        let inst = toy(10.0, 5.0, 100.0, 150.0);
        let grid = PwlaGrid::build(&inst, 5).unwrap();
        let (_, enc) = build_bopt_static(&grid, &inst, 0.0, &[], false).unwrap();
        let x = encode_prices(&enc, &[100.0]).unwrap();
        assert!(enc.z[0].iter().chain(&enc.w[0]).all(|&v| x[v] == 0.0));
        let x = encode_prices(&enc, &[115.0]).unwrap();
        let z: Vec<f64> = enc.z[0].iter().map(|&v| x[v]).collect();
        let w: Vec<f64> = enc.w[0].iter().map(|&v| x[v]).collect();
        assert_eq!(z, vec![1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(w, vec![1.0, 0.5, 0.0, 0.0, 0.0]);
        assert!(encode_prices(&enc, &[151.0]).is_err());
    }

    #[test]
    fn encode_decode_round_trip_and_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for seed in 0..30 {
            let inst = Instance::generate(4, 2, 5, 3, seed).unwrap();
            let k = rng.gen_range(1..12);
            let grid = PwlaGrid::build(&inst, k).unwrap();
            let delta = rng.gen_range(0.0..200.0);
            let problem = PricingProblem::new(&inst, &grid, 1.0);
            let (m, enc) = build_bopt(&problem, delta, RelaxMode::Never).unwrap();
            for _ in 0..20 {
                let r: Vec<f64> = (0..4).map(|j| rng.gen_range(inst.l[j]..=inst.u[j])).collect();
                let x = encode_prices(&enc, &r).unwrap();
                let back = decode_prices(&enc, &x).unwrap();
                for j in 0..4 {
                    assert!((back[j] - r[j]).abs() <= 1e-9);
                }
                assert!(m.chains.iter().flat_map(|c| &c.rows).all(|&row| m.rows[row].violation(&x) <= 1e-9));
                let mut num = 0.0;
                let mut den = 1.0;
                for j in 0..4 {
                    num += grid.eval_fhat(j, r[j]).unwrap();
                    den += grid.eval_ghat(j, r[j]).unwrap();
                }
                let g = num - delta * den;
                assert!((m.evaluate(&x) - g).abs() <= 1e-9 * (1.0 + g.abs()), "{} vs {g}", m.evaluate(&x));
                let psi = problem.approx_resource(&r).unwrap();
                for (i, row) in enc.resource_rows.iter().enumerate() {
                    if let Some(row) = row {
                        let lhs = m.rows[*row].activity(&x);
                        let want = psi[i] - problem.capacity[i] - problem.resource_slack[i] + m.rows[*row].rhs;
                        assert!((lhs - want).abs() <= 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn relaxed_and_binary_agree_without_resources() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for case in 0..50 {
            let n = rng.gen_range(1..=3);
            let k = rng.gen_range(1..=6);
            let mut inst = no_rows(Instance::generate(n, 1, 1, 1, case).unwrap());
            if case % 3 == 0 {
                inst.b_mat.clear();
                inst.d.clear();
            }
            for j in 0..n {
                inst.l[j] = rng.gen_range(1.0..60.0);
            }
            let grid = PwlaGrid::build(&inst, k).unwrap();
            let delta = rng.gen_range(-20.0..60.0);
            let problem = PricingProblem::new(&inst, &grid, 1.0);
            let (full, _) = build_bopt(&problem, delta, RelaxMode::Never).unwrap();
            let (rel, enc) = build_bopt(&problem, delta, RelaxMode::WhenSafe).unwrap();
            let a = solve_milp(&full).unwrap();
            let b = solve_milp(&rel).unwrap();
            assert_eq!(a.status, b.status);
            if a.status == SolveStatus::Optimal {
                assert!((a.objective - b.objective).abs() <= 1e-6, "case {case}: {} vs {}", a.objective, b.objective);
                // the relaxed optimum decodes to a prefix-structured fill
                let r = decode_prices(&enc, &b.primal).unwrap();
                let x = encode_prices(&enc, &r).unwrap();
                assert!((rel.evaluate(&x) - b.objective).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn vacuous_resource_rows_are_dropped() {
        let inst = Instance::generate(3, 2, 5, 10, 4).unwrap();
        let grid = PwlaGrid::build(&inst, 4).unwrap();
        let problem = PricingProblem::new(&inst, &grid, 1.0);
        // consumption per period is below any capacity of at least one unit
        assert!(!problem.has_active_resource_rows());
        let (_, enc) = build_bopt(&problem, 1.0, RelaxMode::WhenSafe).unwrap();
        assert!(enc.resource_rows.iter().all(Option::is_none));
        let star = PricingProblem::new(&inst, &grid, 200.0);
        let (_, enc) = build_bopt(&star, 1.0, RelaxMode::WhenSafe).unwrap();
        assert!(enc.resource_rows.iter().any(Option::is_some));
    }

    #[test]
    fn unoffered_products_drop_out() {
        let inst = Instance::generate(3, 2, 5, 10, 4).unwrap();
        let grid = PwlaGrid::build(&inst, 4).unwrap();
        let mut problem = PricingProblem::new(&inst, &grid, 1.0);
        problem.offered = vec![true, false, true];
        let (m, enc) = build_bopt(&problem, 0.0, RelaxMode::Never).unwrap();
        assert_eq!(enc.products, vec![0, 2]);
        let res = solve_milp_with(&m, &MilpOptions::default()).unwrap();
        let r = decode_prices(&enc, &res.primal).unwrap();
        assert!(crate::mnl::is_null(r[1]));
    }
}
