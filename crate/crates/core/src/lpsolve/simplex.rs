//! Bounded-variable revised primal simplex with an explicit basis inverse.
//!
//! Rows are written as `A x - s = 0` with the row bounds moved onto the
//! logical variables `s`, so the all-logical basis is always available and any
//! starting basis can be repaired by the composite phase-one objective.

use super::model::{MilpModel, RowSense, Sense};
use crate::error::{Error, Result};

const PRIMAL_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 100;
const BLAND_AFTER: usize = 60;
const PRICE_BLOCK: usize = 500;

/// LP in internal form: minimize `cost . x` over structurals and logicals.
#[derive(Debug, Clone)]
pub(crate) struct StdLp {
    pub n: usize,
    pub m: usize,
    /// Structural columns in compressed form.
    pub col_start: Vec<usize>,
    pub row_idx: Vec<usize>,
    pub vals: Vec<f64>,
    pub cost: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl StdLp {
    pub fn from_model(model: &MilpModel, bounds: Option<&[(f64, f64)]>) -> StdLp {
        let n = model.num_vars();
        let m = model.num_rows();
        let sign = if model.sense == Sense::Maximize { -1.0 } else { 1.0 };
        let mut cols = vec![Vec::new(); n];
        for (i, row) in model.rows.iter().enumerate() {
            for &(j, a) in &row.coefs {
                if a != 0.0 {
                    cols[j].push((i, a));
                }
            }
        }
        // merge duplicate entries so each (row, col) appears once
        for col in &mut cols {
            col.sort_by_key(|e| e.0);
            col.dedup_by(|b, a| {
                if a.0 == b.0 {
                    a.1 += b.1;
                    true
                } else {
                    false
                }
            });
        }
        let mut cost: Vec<f64> = model.objective.iter().map(|c| sign * c).collect();
        cost.resize(n + m, 0.0);
        let mut lo = Vec::with_capacity(n + m);
        let mut hi = Vec::with_capacity(n + m);
        for (j, v) in model.vars.iter().enumerate() {
            let (l, h) = bounds.map_or((v.lower, v.upper), |b| b[j]);
            lo.push(l);
            hi.push(h);
        }
        for row in &model.rows {
            let (l, h) = match row.sense {
                RowSense::Le => (f64::NEG_INFINITY, row.rhs),
                RowSense::Ge => (row.rhs, f64::INFINITY),
                RowSense::Eq => (row.rhs, row.rhs),
            };
            lo.push(l);
            hi.push(h);
        }
        StdLp::from_columns(m, cols, cost, lo, hi)
    }

    pub fn from_columns(m: usize, cols: Vec<Vec<(usize, f64)>>, cost: Vec<f64>, lo: Vec<f64>, hi: Vec<f64>) -> StdLp {
        let n = cols.len();
        let mut col_start = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::new();
        let mut vals = Vec::new();
        col_start.push(0);
        for col in cols {
            for (i, a) in col {
                row_idx.push(i);
                vals.push(a);
            }
            col_start.push(row_idx.len());
        }
        StdLp { n, m, col_start, row_idx, vals, cost, lo, hi }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Basis {
    pub basic: Vec<usize>,
    pub at_upper: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum LpStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone)]
pub(crate) struct LpOutcome {
    pub status: LpStatus,
    /// Values of structurals followed by logicals.
    pub x: Vec<f64>,
    /// Row duals of the internal minimization.
    pub y: Vec<f64>,
    pub iterations: usize,
    pub basis: Basis,
}

struct Simplex<'a> {
    lp: &'a StdLp,
    m: usize,
    nt: usize,
    basis: Vec<usize>,
    pos: Vec<usize>,
    at_upper: Vec<bool>,
    x: Vec<f64>,
    binv: Vec<f64>,
    updates: usize,
    iterations: usize,
    dual_tol: f64,
    price_start: usize,
}

const NONBASIC: usize = usize::MAX;

impl<'a> Simplex<'a> {
    fn new(lp: &'a StdLp) -> Self {
        let cmax = lp.cost.iter().fold(0.0f64, |a, c| a.max(c.abs()));
        Simplex {
            lp,
            m: lp.m,
            nt: lp.n + lp.m,
            basis: Vec::new(),
            pos: vec![NONBASIC; lp.n + lp.m],
            at_upper: vec![false; lp.n + lp.m],
            x: vec![0.0; lp.n + lp.m],
            binv: Vec::new(),
            updates: 0,
            iterations: 0,
            dual_tol: 1e-9 * cmax.max(1.0),
            price_start: 0,
        }
    }

    fn for_col(&self, j: usize, mut f: impl FnMut(usize, f64)) {
        if j < self.lp.n {
            let lp = self.lp;
            for e in lp.col_start[j]..lp.col_start[j + 1] {
                f(lp.row_idx[e], lp.vals[e]);
            }
        } else {
            f(j - self.lp.n, -1.0);
        }
    }

    fn nonbasic_value(&self, j: usize) -> f64 {
        let (lo, hi) = (self.lp.lo[j], self.lp.hi[j]);
        if self.at_upper[j] {
            if hi.is_finite() {
                hi
            } else if lo.is_finite() {
                lo
            } else {
                0.0
            }
        } else if lo.is_finite() {
            lo
        } else if hi.is_finite() {
            hi
        } else {
            0.0
        }
    }

    fn set_nonbasic(&mut self, j: usize, upper: bool) {
        let upper = if upper { self.lp.hi[j].is_finite() } else { !self.lp.lo[j].is_finite() && self.lp.hi[j].is_finite() };
        self.at_upper[j] = upper;
        self.pos[j] = NONBASIC;
        self.x[j] = self.nonbasic_value(j);
    }

    fn cold_start(&mut self) {
        self.basis = (self.lp.n..self.nt).collect();
        self.pos = vec![NONBASIC; self.nt];
        for j in 0..self.lp.n {
            // start at the bound nearest zero
            let upper = self.lp.lo[j].abs() > self.lp.hi[j].abs();
            self.set_nonbasic(j, upper);
        }
        for (p, &j) in self.basis.iter().enumerate() {
            self.pos[j] = p;
        }
        let ok = self.refactor();
        debug_assert!(ok);
    }

    fn warm_start(&mut self, b: &Basis) -> bool {
        if b.basic.len() != self.m || b.at_upper.len() != self.nt {
            return false;
        }
        self.basis = b.basic.clone();
        self.pos = vec![NONBASIC; self.nt];
        for (p, &j) in self.basis.iter().enumerate() {
            if j >= self.nt || self.pos[j] != NONBASIC {
                return false;
            }
            self.pos[j] = p;
        }
        for j in 0..self.nt {
            if self.pos[j] == NONBASIC {
                self.set_nonbasic(j, b.at_upper[j]);
            }
        }
        self.refactor()
    }

    /// Rebuild the explicit inverse and recompute basic values.
    fn refactor(&mut self) -> bool {
        let m = self.m;
        let mut bm = vec![0.0; m * m];
        for p in 0..m {
            let j = self.basis[p];
            self.for_col(j, |i, a| bm[i * m + p] = a);
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for c in 0..m {
            let mut best = c;
            let mut bv = bm[c * m + c].abs();
            for r in c + 1..m {
                let v = bm[r * m + c].abs();
                if v > bv {
                    bv = v;
                    best = r;
                }
            }
            if bv < 1e-11 {
                return false;
            }
            if best != c {
                for k in 0..m {
                    bm.swap(c * m + k, best * m + k);
                    inv.swap(c * m + k, best * m + k);
                }
            }
            let piv = bm[c * m + c];
            for k in 0..m {
                bm[c * m + k] /= piv;
                inv[c * m + k] /= piv;
            }
            for r in 0..m {
                if r == c {
                    continue;
                }
                let f = bm[r * m + c];
                if f != 0.0 {
                    for k in 0..m {
                        bm[r * m + k] -= f * bm[c * m + k];
                        inv[r * m + k] -= f * inv[c * m + k];
                    }
                }
            }
        }
        self.binv = inv;
        self.updates = 0;
        self.recompute_basic();
        true
    }

    fn recompute_basic(&mut self) {
        let m = self.m;
        let mut rhs = vec![0.0; m];
        for j in 0..self.nt {
            if self.pos[j] == NONBASIC {
                let v = self.x[j];
                if v != 0.0 {
                    self.for_col(j, |i, a| rhs[i] -= a * v);
                }
            }
        }
        for p in 0..m {
            let row = &self.binv[p * m..(p + 1) * m];
            let v: f64 = row.iter().zip(&rhs).map(|(a, b)| a * b).sum();
            self.x[self.basis[p]] = v;
        }
    }

    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.m;
        let mut alpha = vec![0.0; m];
        self.for_col(j, |i, a| {
            for p in 0..m {
                alpha[p] += self.binv[p * m + i] * a;
            }
        });
        alpha
    }

    fn duals(&self, cb: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for p in 0..m {
            let c = cb[p];
            if c != 0.0 {
                let row = &self.binv[p * m..(p + 1) * m];
                for i in 0..m {
                    y[i] += c * row[i];
                }
            }
        }
        y
    }

    fn reduced_cost(&self, j: usize, cost: f64, y: &[f64]) -> f64 {
        let lp = self.lp;
        if j >= lp.n {
            return cost + y[j - lp.n];
        }
        let (s, e) = (lp.col_start[j], lp.col_start[j + 1]);
        let mut d = cost;
        for (&i, &a) in lp.row_idx[s..e].iter().zip(&lp.vals[s..e]) {
            d -= y[i] * a;
        }
        d
    }

    /// Attractiveness of moving nonbasic `j` given its reduced cost.
    fn score(&self, j: usize, d: f64, tol: f64) -> f64 {
        let (lo, hi) = (self.lp.lo[j], self.lp.hi[j]);
        if lo == f64::NEG_INFINITY && hi == f64::INFINITY {
            if d.abs() > tol { d.abs() } else { 0.0 }
        } else if self.at_upper[j] {
            if d > tol { d } else { 0.0 }
        } else if d < -tol {
            -d
        } else {
            0.0
        }
    }

    /// Entering candidate. Columns are scanned in blocks starting where the
    /// last scan stopped; the best column of the first block holding any
    /// candidate wins. Bland mode takes the lowest eligible index.
    fn price(&mut self, y: &[f64], phase1: bool, tol: f64, bland: bool) -> Option<(usize, f64)> {
        let nt = self.nt;
        let eligible = |s: &Self, j: usize| s.pos[j] == NONBASIC && s.lp.lo[j] != s.lp.hi[j];
        let cost = |s: &Self, j: usize| if phase1 { 0.0 } else { s.lp.cost[j] };
        if bland {
            for j in 0..nt {
                if eligible(self, j) {
                    let d = self.reduced_cost(j, cost(self, j), y);
                    if self.score(j, d, tol) > 0.0 {
                        return Some((j, d));
                    }
                }
            }
            return None;
        }
        let block = if nt > 4 * PRICE_BLOCK { (nt / 8).max(PRICE_BLOCK) } else { nt };
        let mut start = self.price_start % nt.max(1);
        let mut scanned = 0;
        while scanned < nt {
            let len = block.min(nt - scanned);
            let mut best = 0.0;
            let mut entering = None;
            for off in 0..len {
                let j = (start + off) % nt;
                if !eligible(self, j) {
                    continue;
                }
                let d = self.reduced_cost(j, cost(self, j), y);
                let sc = self.score(j, d, tol);
                if sc > best {
                    best = sc;
                    entering = Some((j, d));
                }
            }
            start = (start + len) % nt;
            scanned += len;
            if entering.is_some() {
                self.price_start = start;
                return entering;
            }
        }
        None
    }

    /// Phase-one costs of the basic variables, or `None` when primal feasible.
    fn infeasibility_costs(&self) -> Option<Vec<f64>> {
        let mut any = false;
        let cb: Vec<f64> = self
            .basis
            .iter()
            .map(|&j| {
                let v = self.x[j];
                if v < self.lp.lo[j] - PRIMAL_TOL {
                    any = true;
                    -1.0
                } else if v > self.lp.hi[j] + PRIMAL_TOL {
                    any = true;
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        any.then_some(cb)
    }

    fn run(&mut self, max_iter: usize) -> Result<LpStatus> {
        let mut degenerate = 0usize;
        let mut refactor_checks = 0usize;
        loop {
            if self.iterations >= max_iter {
                return Err(Error::Solver(format!("simplex iteration limit {max_iter} reached")));
            }
            let phase1 = self.infeasibility_costs();
            let cb: Vec<f64> = match &phase1 {
                Some(c) => c.clone(),
                None => self.basis.iter().map(|&j| self.lp.cost[j]).collect(),
            };
            let y = self.duals(&cb);
            let bland = degenerate > BLAND_AFTER;
            let tol = if phase1.is_some() { 1e-9 } else { self.dual_tol };

            let entering = self.price(&y, phase1.is_some(), tol, bland);

            let Some((q, dq)) = entering else {
                // confirm on a fresh factorization before declaring the result
                if self.updates > 0 && refactor_checks < 3 {
                    refactor_checks += 1;
                    if !self.refactor() {
                        self.cold_start();
                    }
                    continue;
                }
                return Ok(if phase1.is_some() { LpStatus::Infeasible } else { LpStatus::Optimal });
            };
            refactor_checks = 0;

            let dir = if self.at_upper[q] || (!self.lp.lo[q].is_finite() && !self.lp.hi[q].is_finite() && dq > 0.0) {
                -1.0
            } else {
                1.0
            };
            let alpha = self.ftran(q);
            let range = self.lp.hi[q] - self.lp.lo[q];
            let (leave, theta) = self.ratio_test(&alpha, dir, bland);
            self.iterations += 1;

            let flip = match leave {
                None => true,
                Some(_) => range <= theta,
            };
            let step = if flip { range } else { theta };
            if !step.is_finite() {
                if phase1.is_some() {
                    return Err(Error::Solver("phase one produced an unbounded ray".into()));
                }
                return Err(Error::Solver("LP is unbounded; all variables must be boxed".into()));
            }
            if step <= 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            for p in 0..self.m {
                if alpha[p] != 0.0 {
                    self.x[self.basis[p]] -= dir * step * alpha[p];
                }
            }
            if flip {
                self.at_upper[q] = !self.at_upper[q];
                self.x[q] = self.nonbasic_value(q);
                continue;
            }
            let (r, to_upper) = leave.unwrap();
            self.x[q] += dir * step;
            let out = self.basis[r];
            self.pivot(r, q, &alpha);
            self.set_nonbasic(out, to_upper);
            if self.updates >= REFACTOR_EVERY && !self.refactor() {
                self.cold_start();
            }
        }
    }

    /// Two-pass Harris ratio test. Returns the leaving position with the
    /// bound it moves to, and the step length.
    fn ratio_test(&self, alpha: &[f64], dir: f64, bland: bool) -> (Option<(usize, bool)>, f64) {
        let lp = self.lp;
        let limits = |p: usize, tol: f64| -> Option<(f64, bool)> {
            let rate = -dir * alpha[p];
            if rate.abs() <= PIVOT_TOL {
                return None;
            }
            let j = self.basis[p];
            let (v, lo, hi) = (self.x[j], lp.lo[j], lp.hi[j]);
            if rate < 0.0 {
                if v > hi + PRIMAL_TOL && !lo.is_finite() {
                    return Some((((v - hi) / -rate).max(0.0), true));
                }
                if v < lo - PRIMAL_TOL || !lo.is_finite() {
                    return None;
                }
                Some((((v - lo + tol) / -rate).max(0.0), false))
            } else {
                if v < lo - PRIMAL_TOL && !hi.is_finite() {
                    return Some((((lo - v) / rate).max(0.0), false));
                }
                if v > hi + PRIMAL_TOL || !hi.is_finite() {
                    return None;
                }
                Some((((hi - v + tol) / rate).max(0.0), true))
            }
        };
        if bland {
            let mut best: Option<(usize, bool, f64)> = None;
            for p in 0..self.m {
                if let Some((t, up)) = limits(p, 0.0) {
                    let better = match best {
                        None => true,
                        Some((bp, _, bt)) => t < bt - 1e-12 || (t <= bt + 1e-12 && self.basis[p] < self.basis[bp]),
                    };
                    if better {
                        best = Some((p, up, t));
                    }
                }
            }
            return match best {
                Some((p, up, t)) => (Some((p, up)), t),
                None => (None, f64::INFINITY),
            };
        }
        let mut tmax = f64::INFINITY;
        for p in 0..self.m {
            if let Some((t, _)) = limits(p, PRIMAL_TOL) {
                tmax = tmax.min(t);
            }
        }
        if !tmax.is_finite() {
            return (None, f64::INFINITY);
        }
        let mut chosen: Option<(usize, bool, f64)> = None;
        let mut best_rate = 0.0;
        for p in 0..self.m {
            if let Some((t, up)) = limits(p, 0.0) {
                if t <= tmax && alpha[p].abs() > best_rate {
                    best_rate = alpha[p].abs();
                    chosen = Some((p, up, t));
                }
            }
        }
        match chosen {
            Some((p, up, t)) => (Some((p, up)), t),
            None => (None, f64::INFINITY),
        }
    }

    fn pivot(&mut self, r: usize, q: usize, alpha: &[f64]) {
        let m = self.m;
        let piv = alpha[r];
        let (head, tail) = self.binv.split_at_mut(r * m);
        let (prow, rest) = tail.split_at_mut(m);
        for v in prow.iter_mut() {
            *v /= piv;
        }
        for p in 0..m {
            if p == r || alpha[p] == 0.0 {
                continue;
            }
            let f = alpha[p];
            let row = if p < r { &mut head[p * m..(p + 1) * m] } else { &mut rest[(p - r - 1) * m..(p - r) * m] };
            for (a, b) in row.iter_mut().zip(prow.iter()) {
                *a -= f * b;
            }
        }
        let out = self.basis[r];
        self.pos[out] = NONBASIC;
        self.basis[r] = q;
        self.pos[q] = r;
        self.updates += 1;
    }
}

pub(crate) fn solve_std(lp: &StdLp, warm: Option<&Basis>) -> Result<LpOutcome> {
    let mut s = Simplex::new(lp);
    let warmed = warm.is_some_and(|b| s.warm_start(b));
    if !warmed {
        s.cold_start();
    }
    let max_iter = 50 * (lp.n + lp.m) + 20_000;
    let status = s.run(max_iter)?;
    let cb: Vec<f64> = s.basis.iter().map(|&j| lp.cost[j]).collect();
    let y = s.duals(&cb);
    Ok(LpOutcome {
        status,
        x: s.x.clone(),
        y,
        iterations: s.iterations,
        basis: Basis { basic: s.basis.clone(), at_upper: s.at_upper.clone() },
    })
}
