//! Dynamic pricing through resource decomposition.
//!
//! Each resource `i` gets a one-dimensional value table `v[i][t][x]` whose
//! stages are static pricing problems with capacity `(x, c_-i)`, scale
//! `lambda` and per-product margin cost
//! `sum_{k != i} a_kj pi_k + v_{t+1,i}(x) - v_{t+1,i}(x - a_ij)`.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fractional::{dinkelbach_warm, BisectionConfig};
use crate::instance::Instance;
use crate::lpsolve::{BundledBackend, MilpBackend, WarmStart};
use crate::milp_builder::{PricingProblem, RelaxMode};
use crate::mnl::NULL_PRICE;
use crate::pwla::PwlaGrid;
use crate::sim::Policy;
use crate::static_solver::{DEFAULT_K, DEFAULT_TOLERANCE};

#[derive(Debug, Clone, PartialEq)]
pub struct StageSolution {
    pub prices: Vec<f64>,
    /// Exact `lambda * sum_j P_j (r_j - kappa_j)` at `prices`.
    pub value: f64,
}

/// Solves one stage pricing problem. `None` means the stage region is empty.
pub trait StageSolver: Send + Sync {
    fn name(&self) -> &str;
    /// PWLA breakpoints per segment the stage problems are built with.
    fn grid_size(&self) -> usize;
    fn solve_stage(&self, problem: &PricingProblem<'_>, warm: &mut WarmStart) -> Result<Option<StageSolution>>;
}

/// Bisection over the stage MILP.
#[derive(Clone)]
pub struct DmipStage {
    pub k: usize,
    pub tolerance: f64,
    pub relax: RelaxMode,
    pub backend: Arc<dyn MilpBackend>,
}

impl DmipStage {
    pub fn new(k: usize, tolerance: f64) -> Self {
        Self { k, tolerance, relax: RelaxMode::WhenSafe, backend: Arc::new(BundledBackend::default()) }
    }
}

impl Default for DmipStage {
    fn default() -> Self {
        Self::new(DEFAULT_K, DEFAULT_TOLERANCE)
    }
}

impl StageSolver for DmipStage {
    fn name(&self) -> &str {
        "dmip"
    }

    fn grid_size(&self) -> usize {
        self.k
    }

    fn solve_stage(&self, problem: &PricingProblem<'_>, warm: &mut WarmStart) -> Result<Option<StageSolution>> {
        let mut cfg = BisectionConfig::for_problem(problem, self.tolerance);
        cfg.relax = self.relax;
        match dinkelbach_warm(problem, &cfg, self.backend.as_ref(), warm) {
            Ok(sol) => {
                let value = problem.exact_objective(&sol.prices)?;
                Ok(Some(StageSolution { prices: sol.prices, value }))
            }
            Err(Error::Infeasible(_)) => Ok(None),
            Err(e) => Err(e),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub stage_solves: usize,
    /// Stages whose region was empty; they fall back to selling nothing.
    pub infeasible_stages: usize,
    /// Stages where the previous capacity level's prices did better.
    pub carried_forward: usize,
    pub seconds: f64,
}

/// Per-resource value tables `v[i][t - 1][x]` for `t = 1..=T+1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueFunctionSet {
    pub method: String,
    pub values: Vec<Vec<Vec<f64>>>,
    pub pi: Vec<f64>,
    pub k: usize,
    pub tolerance: f64,
    pub instance_fingerprint: String,
    pub diagnostics: Diagnostics,
}

impl ValueFunctionSet {
    pub fn horizon(&self) -> usize {
        self.values.first().map_or(0, |v| v.len().saturating_sub(1))
    }

    /// `v_{t,i}(x)`, zero past the horizon.
    pub fn value(&self, i: usize, t: usize, x: u32) -> f64 {
        let table = &self.values[i];
        if t == 0 || t > table.len() {
            return 0.0;
        }
        table[t - 1][x as usize]
    }

    /// `Delta_j v_{t,i}(x) = v_{t,i}(x) - v_{t,i}(x - a_ij)`.
    pub fn marginal(&self, inst: &Instance, i: usize, j: usize, t: usize, x: u32) -> f64 {
        let a = inst.a_mat[i][j] as u32;
        if a == 0 {
            return 0.0;
        }
        if a > x {
            return self.value(i, t, x);
        }
        self.value(i, t, x) - self.value(i, t, x - a)
    }

    /// Decomposition objective: the tightest of `v_{1,i}(c_i) + sum_{k != i} pi_k c_k`.
    pub fn objective(&self, inst: &Instance) -> f64 {
        (0..inst.m())
            .map(|i| {
                let rest: f64 = (0..inst.m()).filter(|&k| k != i).map(|k| self.pi[k] * inst.c[k] as f64).sum();
                self.value(i, 1, inst.c[i]) + rest
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Checks boundary values and monotonicity in `x` and `t`.
    pub fn check_invariants(&self, tol: f64) -> std::result::Result<(), String> {
        for (i, table) in self.values.iter().enumerate() {
            let last = table.last().ok_or("empty table")?;
            if last.iter().any(|&v| v != 0.0) {
                return Err(format!("resource {i}: terminal values are not zero"));
            }
            for (t, row) in table.iter().enumerate() {
                if row[0] != 0.0 {
                    return Err(format!("resource {i}: v at t = {} and x = 0 is {}", t + 1, row[0]));
                }
                for x in 1..row.len() {
                    if row[x] < row[x - 1] - tol {
                        return Err(format!("resource {i}: v decreases in x at t = {}, x = {x}", t + 1));
                    }
                }
                if t + 1 < table.len() {
                    for x in 0..row.len() {
                        if row[x] < table[t + 1][x] - tol {
                            return Err(format!("resource {i}: v increases in t at t = {}, x = {x}", t + 1));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Schema(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Schema(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::Io { path: path.display().to_string(), source: e })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.display().to_string(), source: e })?;
        Self::from_json(&s)
    }
}

/// Stage value table of one resource over all periods.
fn solve_resource(
    inst: &Instance,
    grid: &PwlaGrid,
    solver: &dyn StageSolver,
    pi: &[f64],
    i: usize,
) -> Result<(Vec<Vec<f64>>, Diagnostics)> {
    let n = inst.n();
    let m = inst.m();
    let horizon = inst.horizon;
    let cap = inst.c[i] as usize;
    let mut table = vec![vec![0.0; cap + 1]; horizon + 1];
    let mut diag = Diagnostics::default();
    let other: Vec<f64> = (0..n).map(|j| (0..m).filter(|&k| k != i).map(|k| inst.a_mat[k][j] * pi[k]).sum()).collect();
    let mut warm = WarmStart::default();
    for t in (1..=horizon).rev() {
        let mut prev: Option<Vec<f64>> = None;
        for x in 1..=cap {
            let next = &table[t];
            let offered: Vec<bool> = (0..n).map(|j| inst.a_mat[i][j] <= x as f64).collect();
            let kappa: Vec<f64> = (0..n)
                .map(|j| {
                    let a = inst.a_mat[i][j] as usize;
                    if a == 0 || a > x {
                        other[j]
                    } else {
                        other[j] + next[x] - next[x - a]
                    }
                })
                .collect();
            let mut capacity = inst.capacities_f64();
            capacity[i] = x as f64;
            let problem = PricingProblem::stage(inst, grid, inst.lambda, capacity, kappa, offered);
            diag.stage_solves += 1;
            let mut best = match solver.solve_stage(&problem, &mut warm)? {
                Some(s) => Some((s.value, s.prices)),
                None => {
                    diag.infeasible_stages += 1;
                    None
                }
            };
            // prices that fit x - 1 units also fit x
            if let Some(p) = prev.take() {
                let v = problem.exact_objective(&p)?;
                if best.as_ref().is_none_or(|(b, _)| v > *b) {
                    diag.carried_forward += 1;
                    best = Some((v, p));
                }
            }
            let stage = best.as_ref().map_or(0.0, |(v, _)| v.max(0.0));
            table[t - 1][x] = stage + table[t][x];
            prev = best.map(|(_, p)| p);
        }
    }
    Ok((table, diag))
}

pub fn solve_dpd_with(inst: &Instance, solver: &dyn StageSolver, pi: &[f64]) -> Result<ValueFunctionSet> {
    inst.validate()?;
    if pi.len() != inst.m() {
        return Err(Error::Dimension(format!("pi has {} entries, expected {}", pi.len(), inst.m())));
    }
    if pi.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::InvalidArgument("multipliers must be finite and nonnegative".into()));
    }
    let started = Instant::now();
    let grid = PwlaGrid::build(inst, solver.grid_size())?;
    let run = |i: usize| solve_resource(inst, &grid, solver, pi, i);
    #[cfg(feature = "parallel")]
    let results: Vec<Result<(Vec<Vec<f64>>, Diagnostics)>> = {
        use rayon::prelude::*;
        (0..inst.m()).into_par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<(Vec<Vec<f64>>, Diagnostics)>> = (0..inst.m()).map(run).collect();
    let mut values = Vec::with_capacity(inst.m());
    let mut diagnostics = Diagnostics::default();
    for r in results {
        let (table, d) = r?;
        values.push(table);
        diagnostics.stage_solves += d.stage_solves;
        diagnostics.infeasible_stages += d.infeasible_stages;
        diagnostics.carried_forward += d.carried_forward;
    }
    diagnostics.seconds = started.elapsed().as_secs_f64();
    Ok(ValueFunctionSet {
        method: solver.name().to_string(),
        values,
        pi: pi.to_vec(),
        k: solver.grid_size(),
        tolerance: 0.0,
        instance_fingerprint: format!("{:016x}", inst.fingerprint()),
        diagnostics,
    })
}

/// Decomposition with bisection-and-MILP stages.
pub fn solve_dpd(inst: &Instance, k: usize, tolerance: f64, pi: &[f64]) -> Result<ValueFunctionSet> {
    let mut vfs = solve_dpd_with(inst, &DmipStage::new(k, tolerance), pi)?;
    vfs.tolerance = tolerance;
    Ok(vfs)
}

/// Pricing policy recomposed from the value tables.
pub struct DecompositionPolicy<'a> {
    inst: &'a Instance,
    vfs: &'a ValueFunctionSet,
    solver: &'a dyn StageSolver,
    grid: PwlaGrid,
    cache: HashMap<(usize, Vec<u32>), Vec<f64>>,
    warm: WarmStart,
}

impl<'a> DecompositionPolicy<'a> {
    pub fn new(inst: &'a Instance, vfs: &'a ValueFunctionSet, solver: &'a dyn StageSolver) -> Result<Self> {
        if vfs.values.len() != inst.m() || vfs.horizon() != inst.horizon {
            return Err(Error::Dimension("value tables do not match the instance".into()));
        }
        let grid = PwlaGrid::build(inst, solver.grid_size())?;
        Ok(Self { inst, vfs, solver, grid, cache: HashMap::new(), warm: WarmStart::default() })
    }

    pub fn cached_states(&self) -> usize {
        self.cache.len()
    }
}

/// Prices at period `t` and capacity `x`: the stage argmax with margins
/// `r_j - sum_i Delta_j v_{t+1,i}(x_i)` over the region with capacity `x`.
pub fn policy_prices(
    inst: &Instance,
    vfs: &ValueFunctionSet,
    solver: &dyn StageSolver,
    grid: &PwlaGrid,
    t: usize,
    x: &[u32],
    warm: &mut WarmStart,
) -> Result<Vec<f64>> {
    let n = inst.n();
    let m = inst.m();
    if x.len() != m || t == 0 || t > inst.horizon {
        return Err(Error::InvalidArgument(format!("state (t = {t}, x of length {}) is out of range", x.len())));
    }
    let offered: Vec<bool> = (0..n).map(|j| (0..m).all(|i| x[i] as f64 >= inst.a_mat[i][j])).collect();
    if !offered.iter().any(|&o| o) {
        return Ok(vec![NULL_PRICE; n]);
    }
    let kappa: Vec<f64> = (0..n).map(|j| (0..m).map(|i| vfs.marginal(inst, i, j, t + 1, x[i])).sum()).collect();
    let capacity: Vec<f64> = x.iter().map(|&v| v as f64).collect();
    let problem = PricingProblem::stage(inst, grid, inst.lambda, capacity, kappa, offered);
    Ok(match solver.solve_stage(&problem, warm)? {
        Some(s) if s.value >= 0.0 => s.prices,
        _ => vec![NULL_PRICE; n],
    })
}

impl Policy for DecompositionPolicy<'_> {
    fn prices(&mut self, t: usize, x: &[u32]) -> Result<Vec<f64>> {
        if let Some(p) = self.cache.get(&(t, x.to_vec())) {
            return Ok(p.clone());
        }
        let p = policy_prices(self.inst, self.vfs, self.solver, &self.grid, t, x, &mut self.warm)?;
        self.cache.insert((t, x.to_vec()), p.clone());
        Ok(p)
    }
}

/// Full-state Bellman table over the grid action set, for tiny instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactValueTable {
    pub capacities: Vec<u32>,
    pub k: usize,
    /// `values[t - 1][state]` for `t = 1..=T+1`.
    pub values: Vec<Vec<f64>>,
    /// Maximizing prices per period and state.
    pub actions: Vec<Vec<Vec<f64>>>,
}

impl ExactValueTable {
    pub fn state_index(&self, x: &[u32]) -> usize {
        let mut idx = 0;
        for (&xi, &ci) in x.iter().zip(&self.capacities) {
            idx = idx * (ci as usize + 1) + xi as usize;
        }
        idx
    }

    pub fn value(&self, t: usize, x: &[u32]) -> f64 {
        if t == 0 || t > self.values.len() {
            return 0.0;
        }
        self.values[t - 1][self.state_index(x)]
    }

    pub fn action(&self, t: usize, x: &[u32]) -> &[f64] {
        &self.actions[t - 1][self.state_index(x)]
    }
}

fn decode_state(mut idx: usize, caps: &[u32]) -> Vec<u32> {
    let mut x = vec![0u32; caps.len()];
    for i in (0..caps.len()).rev() {
        let base = caps[i] as usize + 1;
        x[i] = (idx % base) as u32;
        idx /= base;
    }
    x
}

/// Backward induction over every capacity vector. Each product takes a
/// breakpoint of the `K`-grid, or the null price when capacity is short;
/// shutting off all products is also an action.
pub fn solve_exact_dp(inst: &Instance, k: usize) -> Result<ExactValueTable> {
    let (n, m) = (inst.n(), inst.m());
    if m > 2 || n > 2 || inst.horizon > 5 || inst.c.iter().any(|&c| c > 4) {
        return Err(Error::InvalidArgument(format!(
            "exact DP is limited to m <= 2, n <= 2, T <= 5, c_i <= 4 (got m = {m}, n = {n}, T = {}, c = {:?})",
            inst.horizon, inst.c
        )));
    }
    let grid = PwlaGrid::build(inst, k)?;
    let points: Vec<Vec<f64>> = (0..n).map(|j| grid.breakpoints(j)).collect();
    let states: usize = inst.c.iter().map(|&c| c as usize + 1).product();
    let lambda = inst.lambda;
    let mut values = vec![vec![0.0; states]; inst.horizon + 1];
    let mut actions = vec![vec![vec![NULL_PRICE; n]; states]; inst.horizon + 1];
    for t in (1..=inst.horizon).rev() {
        for s in 0..states {
            let x = decode_state(s, &inst.c);
            let sellable: Vec<bool> = (0..n).map(|j| (0..m).all(|i| x[i] as f64 >= inst.a_mat[i][j])).collect();
            let next = |j: Option<usize>| -> f64 {
                let mut y = x.clone();
                if let Some(j) = j {
                    for i in 0..m {
                        y[i] -= inst.a_mat[i][j] as u32;
                    }
                }
                let mut idx = 0;
                for (&yi, &ci) in y.iter().zip(&inst.c) {
                    idx = idx * (ci as usize + 1) + yi as usize;
                }
                values[t][idx]
            };
            let stay = next(None);
            let gains: Vec<f64> = (0..n).map(|j| if sellable[j] { next(Some(j)) - stay } else { 0.0 }).collect();
            let mut best = stay;
            let mut best_r = vec![NULL_PRICE; n];
            let mut r = vec![NULL_PRICE; n];
            let mut idx = vec![0usize; n];
            let region = crate::instance::FeasiblePriceRegion {
                instance: inst,
                capacity: Some(x.iter().map(|&v| v as f64).collect()),
                scale: lambda,
                mode: crate::instance::RegionMode::Exact,
            };
            'enumerate: loop {
                for j in 0..n {
                    r[j] = if sellable[j] { points[j][idx[j]] } else { NULL_PRICE };
                }
                if sellable.iter().any(|&s| s) && region.check(&r).is_feasible() {
                    let p = inst.mnl.choice_probabilities(&r)?;
                    let v: f64 = stay + lambda * (0..n).map(|j| p[j + 1] * (r[j] + gains[j])).sum::<f64>();
                    if v > best {
                        best = v;
                        best_r = r.clone();
                    }
                }
                // odometer over the sellable products' grid indices
                let mut j = 0;
                loop {
                    if j == n {
                        break 'enumerate;
                    }
                    if sellable[j] && idx[j] + 1 < points[j].len() {
                        idx[j] += 1;
                        break;
                    }
                    idx[j] = 0;
                    j += 1;
                }
            }
            values[t - 1][s] = best;
            actions[t - 1][s] = best_r;
        }
    }
    Ok(ExactValueTable { capacities: inst.c.clone(), k, values, actions })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pwla::error_constants_scaled;

    fn tiny(seed: u64) -> Instance {
        let mut inst = Instance::generate(2, 1, 3, 2, seed).unwrap();
        inst.b_mat.clear();
        inst.d.clear();
        inst.a_mat = vec![vec![1.0, 1.0]];
        inst.lambda = 0.8;
        inst
    }

    #[test]
    fn boundaries_and_monotonicity() {
        let inst = Instance::generate(3, 2, 6, 3, 4).unwrap();
        let vfs = solve_dpd(&inst, 6, 1e-3, &[0.0, 0.0]).unwrap();
        vfs.check_invariants(1e-9).unwrap();
        assert_eq!(vfs.values.len(), 2);
        assert_eq!(vfs.values[0].len(), 7);
        assert_eq!(vfs.values[1][0].len(), 4);
        assert!(vfs.objective(&inst) > 0.0);
    }

    #[test]
    fn single_period_equals_stage_optimum() {
        let mut inst = tiny(3);
        inst.horizon = 1;
        let vfs = solve_dpd(&inst, 30, 1e-6, &[0.0]).unwrap();
        let grid = PwlaGrid::build(&inst, 30).unwrap();
        let problem = PricingProblem::stage(&inst, &grid, inst.lambda, vec![2.0], vec![0.0; 2], vec![true; 2]);
        let sol = DmipStage::new(30, 1e-6).solve_stage(&problem, &mut WarmStart::default()).unwrap().unwrap();
        assert!((vfs.value(0, 1, 2) - sol.value).abs() < 1e-9);
    }

    #[test]
    fn matches_exact_dp_on_tiny_instances() {
        let k = 20;
        for seed in 0..4 {
            let inst = tiny(seed);
            let vfs = solve_dpd(&inst, k, 1e-6, &[0.0]).unwrap();
            vfs.check_invariants(1e-12).unwrap();
            let exact = solve_exact_dp(&inst, k).unwrap();
            let ec = error_constants_scaled(&inst, &inst.capacities_f64(), inst.lambda);
            let bound = 2.0 * ec.omega_bound(k) + 1e-6 + 1e-6;
            let got = vfs.value(0, 1, 2);
            let want = exact.value(1, &[2]);
            assert!((got - want).abs() <= bound, "seed {seed}: {got} vs {want} (bound {bound})");
        }
    }

    #[test]
    fn exact_dp_trivial_cases() {
        let mut inst = tiny(1);
        inst.lambda = 0.0;
        let t = solve_exact_dp(&inst, 4).unwrap();
        assert!(t.values.iter().flatten().all(|&v| v == 0.0));
        let mut inst = tiny(1);
        inst.horizon = 0;
        let t = solve_exact_dp(&inst, 4).unwrap();
        assert_eq!(t.values.len(), 1);
        let big = Instance::generate(3, 1, 3, 2, 0).unwrap();
        assert!(solve_exact_dp(&big, 4).is_err());
    }

    #[test]
    fn exact_dp_single_product_enumeration() {
        let mut inst = Instance::generate(1, 1, 1, 1, 6).unwrap();
        inst.b_mat.clear();
        inst.d.clear();
        inst.a_mat = vec![vec![1.0]];
        let k = 8;
        let t = solve_exact_dp(&inst, k).unwrap();
        let grid = PwlaGrid::build(&inst, k).unwrap();
        let best = grid
            .breakpoints(0)
            .into_iter()
            .map(|r| inst.lambda * inst.mnl.choice_probabilities(&[r]).unwrap()[1] * r)
            .fold(0.0, f64::max);
        assert!((t.value(1, &[1]) - best).abs() < 1e-12);
    }

    #[test]
    fn policy_nulls_exhausted_products() {
        let inst = Instance::generate(3, 2, 4, 2, 9).unwrap();
        let vfs = solve_dpd(&inst, 5, 1e-3, &[0.0, 0.0]).unwrap();
        let stage = DmipStage::new(5, 1e-3);
        let mut pol = DecompositionPolicy::new(&inst, &vfs, &stage).unwrap();
        let p = pol.prices(1, &[0, 0]).unwrap();
        assert!(p.iter().all(|&r| crate::mnl::is_null(r)));
        let p = pol.prices(1, &[2, 2]).unwrap();
        assert!(p.iter().all(|&r| !crate::mnl::is_null(r)));
        let x = [0, 2];
        let p = pol.prices(2, &x).unwrap();
        for j in 0..3 {
            if inst.a_mat[0][j] > 0.0 {
                assert!(crate::mnl::is_null(p[j]));
            }
        }
        assert_eq!(pol.cached_states(), 3);
    }

    #[test]
    fn json_round_trip() {
        let inst = Instance::generate(2, 1, 3, 2, 2).unwrap();
        let vfs = solve_dpd(&inst, 4, 1e-3, &[0.5]).unwrap();
        let back = ValueFunctionSet::from_json(&vfs.to_json().unwrap()).unwrap();
        assert_eq!(vfs, back);
    }
}
