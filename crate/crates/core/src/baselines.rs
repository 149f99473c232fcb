//! Comparison methods.
//!
//! The transform baseline optimizes over purchase probabilities, where the
//! pricing problem is concave for homogeneous `b`, then maps back to prices
//! through `r_j = a_j - b_j ln P_j + b_j ln P_0` and projects onto the price
//! rows and the box. The local search is a multi-start projected-gradient
//! ascent on the exact objective.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamic::{solve_dpd_with, StageSolution, StageSolver, ValueFunctionSet};
use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::lpsolve::{solve_lp, MilpModel, RowSense, Sense, SolveStatus, WarmStart};
use crate::milp_builder::PricingProblem;
use crate::mnl::{is_null, NULL_PRICE};
use crate::sim::run_seed;
use crate::static_solver::{exact_feasibility_report, PricingSolution};

/// Probabilities are floored here before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;
/// Smallest no-purchase probability the direction oracle may reach.
const P0_MIN: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransOptions {
    pub max_iters: usize,
    /// Relative Frank-Wolfe gap at which the probability stage stops.
    pub stationarity: f64,
    pub projection_tol: f64,
}

impl Default for TransOptions {
    fn default() -> Self {
        Self { max_iters: 20_000, stationarity: 1e-6, projection_tol: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformSolution {
    /// Length `n + 1`, no-purchase first.
    pub probabilities: Vec<f64>,
    pub recovered: Vec<f64>,
    /// Feasible prices after projection and repair.
    pub projected: Vec<f64>,
    /// Probability-space objective, which equals the exact objective at `recovered`.
    pub recovered_objective: f64,
    pub projected_objective: f64,
    pub iterations: usize,
    pub gap: f64,
    /// Linearized resource cuts the repair needed; `None` when it gave up
    /// and the null vector was returned.
    pub repair_cuts: Option<usize>,
}

/// `r_j = a_j - b_j ln(P_j / P_0)` on offered products, null elsewhere.
pub fn prices_from_probabilities(inst: &Instance, p: &[f64], offered: &[bool]) -> Vec<f64> {
    let p0 = p[0].max(PROB_FLOOR);
    (0..inst.n())
        .map(|j| {
            if offered[j] {
                inst.mnl.a[j] - inst.mnl.b[j] * (p[j + 1].max(PROB_FLOOR) / p0).ln()
            } else {
                NULL_PRICE
            }
        })
        .collect()
}

fn xlnx(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// Probability-space margin objective of one pricing problem.
struct ProbabilityObjective<'a> {
    inst: &'a Instance,
    scale: f64,
    kappa: &'a [f64],
    products: Vec<usize>,
}

impl ProbabilityObjective<'_> {
    fn p0(&self, q: &[f64]) -> f64 {
        1.0 - q.iter().sum::<f64>()
    }

    /// `s sum_j q_j (a_j - kappa_j) - b_j q_j ln q_j + b_j q_j ln q_0`.
    fn value(&self, q: &[f64]) -> f64 {
        let p0 = self.p0(q).max(PROB_FLOOR);
        let lp0 = p0.ln();
        let mut v = 0.0;
        for (p, &j) in self.products.iter().enumerate() {
            let b = self.inst.mnl.b[j];
            v += q[p] * (self.inst.mnl.a[j] - self.kappa[j]) - b * xlnx(q[p]) + b * q[p] * lp0;
        }
        self.scale * v
    }

    fn gradient(&self, q: &[f64]) -> Vec<f64> {
        let p0 = self.p0(q).max(PROB_FLOOR);
        let lp0 = p0.ln();
        let bq: f64 = self.products.iter().enumerate().map(|(p, &j)| self.inst.mnl.b[j] * q[p]).sum();
        self.products
            .iter()
            .enumerate()
            .map(|(p, &j)| {
                let b = self.inst.mnl.b[j];
                let r = self.inst.mnl.a[j] - b * (q[p].max(PROB_FLOOR).ln() - lp0);
                self.scale * (r - self.kappa[j] - b - bq / p0)
            })
            .collect()
    }
}

/// Maximizes a function that is concave on `[0, 1]` by golden sections.
fn golden_max(f: impl Fn(f64) -> f64) -> (f64, f64) {
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..60 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = f(x1);
        }
    }
    let (mut best, mut fbest) = if f1 > f2 { (x1, f1) } else { (x2, f2) };
    let f_end = f(1.0);
    if f_end > fbest {
        best = 1.0;
        fbest = f_end;
    }
    (best, fbest)
}

/// Away-step Frank-Wolfe over `{q >= 0, sum q <= 1, s A q <= capacity}`.
fn maximize_probabilities(
    obj: &ProbabilityObjective<'_>,
    capacity: &[f64],
    opts: &TransOptions,
) -> Result<(Vec<f64>, usize, f64)> {
    let inst = obj.inst;
    let np = obj.products.len();
    let s = obj.scale;
    let mut model = MilpModel::new(Sense::Maximize);
    for _ in 0..np {
        model.add_var(0.0, 1.0, false, 0.0);
    }
    model.add_row((0..np).map(|p| (p, 1.0)).collect(), RowSense::Le, 1.0 - P0_MIN);
    let mut start_cap = 1.0 / (np as f64 + 1.0);
    for i in 0..inst.m() {
        let coefs: Vec<(usize, f64)> = obj
            .products
            .iter()
            .enumerate()
            .filter(|(_, &j)| inst.a_mat[i][j] != 0.0)
            .map(|(p, &j)| (p, s * inst.a_mat[i][j]))
            .collect();
        if coefs.is_empty() || s == 0.0 {
            continue;
        }
        let total: f64 = coefs.iter().map(|c| c.1).sum();
        start_cap = start_cap.min(capacity[i].max(0.0) / total);
        model.add_row(coefs, RowSense::Le, capacity[i]);
    }
    let mut q = vec![0.5 * start_cap; np];
    if np == 0 {
        return Ok((q, 0, 0.0));
    }
    // the iterate is kept as a convex combination of these atoms
    let mut atoms: Vec<(Vec<f64>, f64)> = vec![(q.clone(), 1.0)];
    let mut value = obj.value(&q);
    let mut gap = f64::INFINITY;
    let mut iters = 0;
    let dot = |g: &[f64], x: &[f64]| -> f64 { g.iter().zip(x).map(|(a, b)| a * b).sum() };
    while iters < opts.max_iters {
        iters += 1;
        let grad = obj.gradient(&q);
        model.objective.clone_from(&grad);
        let lp = solve_lp(&model)?;
        if lp.status != SolveStatus::Optimal {
            return Err(Error::Solver(format!("direction oracle returned {:?}", lp.status)));
        }
        let vertex = lp.primal;
        let gq = dot(&grad, &q);
        gap = dot(&grad, &vertex) - gq;
        if gap <= opts.stationarity * value.abs().max(1.0) {
            break;
        }
        let (away, _) = atoms
            .iter()
            .enumerate()
            .map(|(k, (v, _))| (k, dot(&grad, v)))
            .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
        let away_gain = gq - dot(&grad, &atoms[away].0);
        let toward = gap >= away_gain || atoms.len() == 1 && atoms[0].1 >= 1.0 - 1e-15 && away_gain <= 0.0;
        let (dir, gmax): (Vec<f64>, f64) = if toward {
            (vertex.iter().zip(&q).map(|(v, x)| v - x).collect(), 1.0)
        } else {
            let w = atoms[away].1;
            (q.iter().zip(&atoms[away].0).map(|(x, v)| x - v).collect(), if w < 1.0 { w / (1.0 - w) } else { 0.0 })
        };
        if gmax <= 0.0 {
            break;
        }
        let point = |gamma: f64| -> Vec<f64> { q.iter().zip(&dir).map(|(x, d)| x + gamma * gmax * d).collect() };
        let (t, best) = golden_max(|t| obj.value(&point(t)));
        if best <= value {
            break;
        }
        let gamma = t * gmax;
        q = point(t);
        value = best;
        if toward {
            for a in atoms.iter_mut() {
                a.1 *= 1.0 - gamma;
            }
            match atoms.iter_mut().find(|(v, _)| *v == vertex) {
                Some(a) => a.1 += gamma,
                None => atoms.push((vertex, gamma)),
            }
        } else {
            for a in atoms.iter_mut() {
                a.1 *= 1.0 + gamma;
            }
            atoms[away].1 -= gamma;
        }
        atoms.retain(|a| a.1 > 1e-14);
    }
    Ok((q, iters, gap))
}

fn box_project(inst: &Instance, idx: &[usize], x: &mut [f64]) {
    for (p, &j) in idx.iter().enumerate() {
        x[p] = x[p].clamp(inst.l[j], inst.u[j]);
    }
}

fn halfspace_project(x: &mut [f64], a: &[f64], d: f64) {
    let lhs: f64 = a.iter().zip(x.iter()).map(|(a, x)| a * x).sum();
    if lhs > d {
        let nn: f64 = a.iter().map(|a| a * a).sum();
        let t = (lhs - d) / nn;
        for (x, a) in x.iter_mut().zip(a) {
            *x -= t * a;
        }
    }
}

type Halfspace = (Vec<f64>, f64);

/// Euclidean projection of `x` onto the box of products `idx` intersected
/// with `rows` by Dykstra's alternating scheme, finished with cyclic
/// projections onto slightly tightened rows so every row holds exactly.
fn project_polytope(inst: &Instance, idx: &[usize], mut x: Vec<f64>, rows: &[Halfspace], tol: f64) -> Result<Vec<f64>> {
    let holds = |x: &[f64]| {
        idx.iter().enumerate().all(|(p, &j)| x[p] >= inst.l[j] && x[p] <= inst.u[j])
            && rows.iter().all(|(a, d)| a.iter().zip(x).map(|(a, x)| a * x).sum::<f64>() <= *d)
    };
    if holds(&x) {
        return Ok(x);
    }
    // Dykstra stalls on empty intersections, so rule those out first
    let mut lp = MilpModel::new(Sense::Maximize);
    for &j in idx {
        lp.add_var(inst.l[j], inst.u[j], false, 0.0);
    }
    for (a, d) in rows {
        lp.add_row(a.iter().copied().enumerate().filter(|c| c.1 != 0.0).collect(), RowSense::Le, *d);
    }
    if solve_lp(&lp)?.status == SolveStatus::Infeasible {
        return Err(Error::Infeasible("price rows and box have no common point".into()));
    }
    let mut incr = vec![vec![0.0; idx.len()]; rows.len() + 1];
    let mut converged = false;
    for _ in 0..100_000 {
        let before = x.clone();
        for (k, inc) in incr.iter_mut().enumerate() {
            let mut y: Vec<f64> = x.iter().zip(inc.iter()).map(|(x, p)| x + p).collect();
            let pre = y.clone();
            if k == 0 {
                box_project(inst, idx, &mut y);
            } else {
                halfspace_project(&mut y, &rows[k - 1].0, rows[k - 1].1);
            }
            for ((p, a), b) in inc.iter_mut().zip(&pre).zip(&y) {
                *p = a - b;
            }
            x = y;
        }
        let scale = x.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        if x.iter().zip(&before).all(|(a, b)| (a - b).abs() <= tol * scale) {
            converged = true;
            break;
        }
    }
    for _ in 0..1000 {
        for (a, d) in rows {
            halfspace_project(&mut x, a, d - 1e-9 * (1.0 + d.abs()));
        }
        box_project(inst, idx, &mut x);
        if holds(&x) {
            return Ok(x);
        }
    }
    let why = if converged { "rows could not be met exactly" } else { "projection did not converge" };
    Err(Error::Infeasible(format!("price rows and box have no common point ({why})")))
}

fn price_rows(inst: &Instance, idx: &[usize]) -> Result<Vec<Halfspace>> {
    let mut rows = Vec::new();
    for (brow, &d) in inst.b_mat.iter().zip(&inst.d) {
        let a: Vec<f64> = idx.iter().map(|&j| brow[j]).collect();
        if a.iter().all(|&v| v == 0.0) {
            if d < 0.0 {
                return Err(Error::Infeasible("a price row without offered products has a negative bound".into()));
            }
            continue;
        }
        rows.push((a, d));
    }
    Ok(rows)
}

fn expand(inst: &Instance, idx: &[usize], x: &[f64]) -> Vec<f64> {
    let mut out = vec![NULL_PRICE; inst.n()];
    for (p, &j) in idx.iter().enumerate() {
        out[j] = x[p];
    }
    out
}

/// Euclidean projection of the offered prices onto `{B r <= d, l <= r <= u}`.
pub fn project_price_region(inst: &Instance, offered: &[bool], r: &[f64], tol: f64) -> Result<Vec<f64>> {
    let idx: Vec<usize> = (0..inst.n()).filter(|&j| offered[j]).collect();
    let rows = price_rows(inst, &idx)?;
    let x = project_polytope(inst, &idx, idx.iter().map(|&j| r[j]).collect(), &rows, tol)?;
    Ok(expand(inst, &idx, &x))
}

/// `s (A P(r))_i` per resource.
fn consumption(inst: &Instance, scale: f64, r: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let p = inst.mnl.choice_probabilities(r)?;
    let h = (0..inst.m()).map(|i| scale * (0..inst.n()).map(|j| inst.a_mat[i][j] * p[j + 1]).sum::<f64>()).collect();
    Ok((h, p))
}

fn resources_hold(inst: &Instance, scale: f64, capacity: &[f64], r: &[f64]) -> Result<bool> {
    Ok(consumption(inst, scale, r)?.0.iter().zip(capacity).all(|(h, c)| h <= c))
}

/// Offered product to withdraw when no feasible prices are found: the one
/// with the largest purchase probability on the most overloaded resource.
fn withdraw_candidate(inst: &Instance, scale: f64, capacity: &[f64], offered: &[bool], r: &[f64]) -> Result<Option<usize>> {
    let masked: Vec<f64> = (0..inst.n()).map(|j| if offered[j] { r[j] } else { NULL_PRICE }).collect();
    let (h, p) = consumption(inst, scale, &masked)?;
    let worst = (0..inst.m())
        .filter(|&i| (0..inst.n()).any(|j| offered[j] && inst.a_mat[i][j] != 0.0))
        .max_by(|&x, &y| (h[x] - capacity[x]).total_cmp(&(h[y] - capacity[y])));
    Ok(worst.and_then(|i| {
        (0..inst.n())
            .filter(|&j| offered[j] && inst.a_mat[i][j] != 0.0)
            .max_by(|&x, &y| p[x + 1].total_cmp(&p[y + 1]))
    }))
}

/// Feasible prices near `r`. Each violated resource row is linearized at the current point and
/// the point is projected onto the price rows and the latest cut of every
/// resource, until every row holds. `None` when no such point is found;
/// otherwise the prices and the number of cuts used.
pub fn repair_prices(
    inst: &Instance,
    scale: f64,
    capacity: &[f64],
    offered: &[bool],
    r: &[f64],
    tol: f64,
) -> Result<Option<(Vec<f64>, usize)>> {
    let idx: Vec<usize> = (0..inst.n()).filter(|&j| offered[j]).collect();
    let rows = price_rows(inst, &idx)?;
    let mut cuts: Vec<Option<Halfspace>> = vec![None; inst.m()];
    let mut used = 0;
    let mut x = project_polytope(inst, &idx, idx.iter().map(|&j| r[j]).collect(), &rows, tol)?;
    for round in 0..60 {
        let full = expand(inst, &idx, &x);
        let (h, p) = consumption(inst, scale, &full)?;
        let violated: Vec<usize> = (0..inst.m()).filter(|&i| h[i] > capacity[i]).collect();
        if violated.is_empty() {
            return Ok(Some((full, used)));
        }
        for i in violated {
            let ap = h[i] / scale;
            let grad: Vec<f64> =
                idx.iter().map(|&k| -scale * p[k + 1] * (inst.a_mat[i][k] - ap) / inst.mnl.b[k]).collect();
            if grad.iter().all(|&g| g == 0.0) {
                return Ok(None);
            }
            let margin = 1e-9 * (1.0 + capacity[i]) * 2f64.powi(round);
            let rhs = capacity[i] - margin - h[i] + grad.iter().zip(&x).map(|(g, x)| g * x).sum::<f64>();
            cuts[i] = Some((grad, rhs));
            used += 1;
        }
        let all: Vec<Halfspace> = rows.iter().cloned().chain(cuts.iter().flatten().cloned()).collect();
        x = match project_polytope(inst, &idx, x, &all, tol) {
            Ok(x) => x,
            Err(Error::Infeasible(_)) => return Ok(None),
            Err(e) => return Err(e),
        };
    }
    Ok(None)
}

/// Transform-then-project solve of a pricing problem with margins `kappa`
/// and capacity `capacity` at demand scale `scale`.
pub fn transform_solve(
    inst: &Instance,
    scale: f64,
    capacity: &[f64],
    kappa: &[f64],
    offered: &[bool],
    opts: &TransOptions,
) -> Result<TransformSolution> {
    let n = inst.n();
    if capacity.len() != inst.m() || kappa.len() != n || offered.len() != n {
        return Err(Error::Dimension("capacity, margins and offer mask must match the instance".into()));
    }
    let mut offered = offered.to_vec();
    loop {
        let obj = ProbabilityObjective { inst, scale, kappa, products: (0..n).filter(|&j| offered[j]).collect() };
        let (q, iterations, gap) = maximize_probabilities(&obj, capacity, opts)?;
        let mut probs = vec![0.0; n + 1];
        for (p, &j) in obj.products.iter().enumerate() {
            probs[j + 1] = q[p];
        }
        probs[0] = 1.0 - q.iter().sum::<f64>();
        let recovered = prices_from_probabilities(inst, &probs, &offered);
        let repaired = repair_prices(inst, scale, capacity, &offered, &recovered, opts.projection_tol)?;
        let withdrawn = if repaired.is_none() {
            let projected = project_price_region(inst, &offered, &recovered, opts.projection_tol)?;
            withdraw_candidate(inst, scale, capacity, &offered, &projected)?
        } else {
            None
        };
        if let Some(j) = withdrawn {
            offered[j] = false;
            continue;
        }
        let repair_cuts = repaired.as_ref().map(|r| r.1);
        let projected = repaired.map_or_else(|| vec![NULL_PRICE; n], |r| r.0);
        return Ok(TransformSolution {
            recovered_objective: obj.value(&q),
            projected_objective: scale * inst.mnl.expected_margin(&projected, kappa)?,
            probabilities: probs,
            recovered,
            projected,
            iterations,
            gap,
            repair_cuts,
        });
    }
}

fn baseline_solution(inst: &Instance, scale: f64, prices: Vec<f64>, tolerance: f64, started: Instant) -> Result<PricingSolution> {
    let capacity = inst.capacities_f64();
    let value = scale * inst.mnl.expected_revenue(&prices)?;
    Ok(PricingSolution {
        approx_objective: value,
        exact_objective: value,
        omega_bound: 0.0,
        feasibility: exact_feasibility_report(inst, &capacity, scale, &prices)?,
        scale,
        k: 0,
        tolerance,
        seconds: started.elapsed().as_secs_f64(),
        trace: Vec::new(),
        duals: Vec::new(),
        prices,
    })
}

/// Static transform baseline at demand scale `scale`.
pub fn solve_sp_trans(inst: &Instance, scale: f64) -> Result<PricingSolution> {
    solve_sp_trans_with(inst, scale, &TransOptions::default())
}

pub fn solve_sp_trans_with(inst: &Instance, scale: f64, opts: &TransOptions) -> Result<PricingSolution> {
    inst.validate()?;
    let started = Instant::now();
    let n = inst.n();
    let t = transform_solve(inst, scale, &inst.capacities_f64(), &vec![0.0; n], &vec![true; n], opts)?;
    baseline_solution(inst, scale, t.projected, opts.stationarity, started)
}

const PROBE_STEP: f64 = 1e-4;

/// Feasible prices near `r` over its non-null products.
fn feasible_near(inst: &Instance, scale: f64, capacity: &[f64], r: &[f64]) -> Result<Option<Vec<f64>>> {
    let offered: Vec<bool> = r.iter().map(|&x| !is_null(x)).collect();
    match repair_prices(inst, scale, capacity, &offered, r, 1e-8) {
        Ok(x) => Ok(x.map(|x| x.0)),
        Err(Error::Infeasible(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Feasible start near `r`, withdrawing products while none exists.
fn start_point(inst: &Instance, scale: f64, capacity: &[f64], mut r: Vec<f64>) -> Result<Option<Vec<f64>>> {
    loop {
        if let Some(x) = feasible_near(inst, scale, capacity, &r)? {
            return Ok(Some(x));
        }
        let offered: Vec<bool> = r.iter().map(|&x| !is_null(x)).collect();
        let at = project_price_region(inst, &offered, &r, 1e-8).unwrap_or_else(|_| r.clone());
        match withdraw_candidate(inst, scale, capacity, &offered, &at)? {
            Some(j) => r[j] = NULL_PRICE,
            None => return Ok(None),
        }
    }
}

fn exactly_feasible(inst: &Instance, scale: f64, capacity: &[f64], r: &[f64]) -> Result<bool> {
    let region = crate::instance::FeasiblePriceRegion {
        instance: inst,
        capacity: Some(capacity.to_vec()),
        scale,
        mode: crate::instance::RegionMode::Slack(f64::INFINITY),
    };
    Ok(region.check(r).is_feasible() && resources_hold(inst, scale, capacity, r)?)
}

fn climb(inst: &Instance, scale: f64, capacity: &[f64], mut r: Vec<f64>) -> Result<(Vec<f64>, f64)> {
    let n = inst.n();
    let kappa = vec![0.0; n];
    let value = |r: &[f64]| -> Result<f64> { Ok(scale * inst.mnl.expected_revenue(r)?) };
    let mut f = value(&r)?;
    let width = (0..n).map(|j| inst.u[j] - inst.l[j]).fold(0.0f64, f64::max);
    let mut alpha = 0.05 * width;
    for _ in 0..2000 {
        if alpha < 1e-7 {
            break;
        }
        let g = inst.mnl.margin_gradient(&r, &kappa, scale)?;
        let norm = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if norm == 0.0 {
            break;
        }
        let step: Vec<f64> = r.iter().zip(&g).map(|(x, d)| if is_null(*x) { *x } else { x + alpha * d / norm }).collect();
        let Some(cand) = feasible_near(inst, scale, capacity, &step)? else {
            alpha *= 0.5;
            continue;
        };
        let fc = value(&cand)?;
        if fc > f + 1e-12 * f.abs().max(1.0) {
            r = cand;
            f = fc;
            alpha = (alpha * 1.5).min(width);
        } else {
            alpha *= 0.5;
        }
    }
    // coordinate probes on a shrinking pattern, ending when no single move
    // of PROBE_STEP improves
    let mut step = 0.1;
    while step >= PROBE_STEP * 0.5 {
        let mut improved = false;
        for j in 0..n {
            if is_null(r[j]) {
                continue;
            }
            for dir in [1.0, -1.0] {
                let mut cand = r.clone();
                cand[j] += dir * step;
                if !exactly_feasible(inst, scale, capacity, &cand)? {
                    continue;
                }
                let fc = value(&cand)?;
                if fc > f {
                    r = cand;
                    f = fc;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.1;
        }
    }
    Ok((r, f))
}

/// Best of `starts` projected-gradient ascents from uniform random prices.
pub fn solve_sp_localsearch(inst: &Instance, scale: f64, starts: usize, seed: u64) -> Result<PricingSolution> {
    inst.validate()?;
    if starts == 0 {
        return Err(Error::InvalidArgument("local search needs at least one start".into()));
    }
    let started = Instant::now();
    let capacity = inst.capacities_f64();
    let mut best: Option<(Vec<f64>, f64)> = None;
    for s in 0..starts {
        let mut rng = ChaCha8Rng::seed_from_u64(run_seed(seed, s));
        let r0: Vec<f64> = (0..inst.n()).map(|j| rng.gen_range(inst.l[j]..=inst.u[j])).collect();
        let Some(r) = start_point(inst, scale, &capacity, r0)? else {
            continue;
        };
        let (r, f) = climb(inst, scale, &capacity, r)?;
        if best.as_ref().is_none_or(|(_, b)| f > *b) {
            best = Some((r, f));
        }
    }
    let prices = best.map_or_else(|| vec![NULL_PRICE; inst.n()], |b| b.0);
    baseline_solution(inst, scale, prices, PROBE_STEP, started)
}

/// Stage solver for the transform baseline.
#[derive(Debug, Clone, Default)]
pub struct TransStage {
    pub k: usize,
    pub options: TransOptions,
}

impl TransStage {
    pub fn new(k: usize) -> Self {
        Self { k, options: TransOptions { max_iters: 2000, ..TransOptions::default() } }
    }
}

impl StageSolver for TransStage {
    fn name(&self) -> &str {
        "trans"
    }

    fn grid_size(&self) -> usize {
        self.k
    }

    fn solve_stage(&self, problem: &PricingProblem<'_>, _warm: &mut WarmStart) -> Result<Option<StageSolution>> {
        let res = transform_solve(
            problem.instance,
            problem.scale,
            &problem.capacity,
            &problem.margin_cost,
            &problem.offered,
            &self.options,
        );
        match res {
            Ok(t) => Ok(Some(StageSolution { value: problem.exact_objective(&t.projected)?, prices: t.projected })),
            Err(Error::Infeasible(_)) => Ok(None),
            Err(e) => Err(e),
        }
    }
}

/// Decomposition with transform-then-project stages.
pub fn solve_dp_trans(inst: &Instance, k: usize, tolerance: f64, pi: &[f64]) -> Result<ValueFunctionSet> {
    let mut stage = TransStage::new(k);
    stage.options.stationarity = tolerance.min(stage.options.stationarity);
    let mut vfs = solve_dpd_with(inst, &stage, pi)?;
    vfs.tolerance = tolerance;
    Ok(vfs)
}
