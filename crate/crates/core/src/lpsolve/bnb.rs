//! Best-bound branch-and-bound over LP relaxations.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::rc::Rc;

use super::model::{MilpModel, Sense, SolveResult, SolveStatus};
use super::relax::Relaxation;
use super::simplex::{Basis, LpStatus};
use super::{INTEGRALITY_TOL, MilpOptions};
use crate::error::Result;

struct Node {
    /// Relaxation bound in maximization orientation.
    score: f64,
    depth: usize,
    seq: usize,
    bounds: Vec<(f64, f64)>,
    x: Vec<f64>,
    basis: Option<Rc<Basis>>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then(self.depth.cmp(&other.depth))
            .then(other.seq.cmp(&self.seq))
    }
}

fn gap_tol(incumbent: f64) -> f64 {
    super::GAP_TOL.max(1e-9 * incumbent.abs())
}

fn fractional(x: f64) -> bool {
    (x - x.round()).abs() > INTEGRALITY_TOL
}

/// Branching variable: the most fractional `z` of the first chain that has
/// one (ties go to the middle of the fractional run), then any other integer
/// variable by largest fractionality and lowest index.
fn pick_branch(model: &MilpModel, x: &[f64], in_chain: &[bool]) -> Option<usize> {
    for chain in &model.chains {
        let cands: Vec<usize> = chain.z.iter().copied().filter(|&j| model.vars[j].integer && fractional(x[j])).collect();
        if cands.is_empty() {
            continue;
        }
        let mid = (cands.len() - 1) as f64 / 2.0;
        let mut best = None;
        let mut key = (f64::INFINITY, f64::INFINITY);
        for (p, &j) in cands.iter().enumerate() {
            let k = ((x[j] - 0.5).abs(), (p as f64 - mid).abs());
            if k.0 < key.0 - 1e-12 || ((k.0 - key.0).abs() <= 1e-12 && k.1 < key.1) {
                key = k;
                best = Some(j);
            }
        }
        return best;
    }
    let mut best = None;
    let mut dist = f64::INFINITY;
    for (j, v) in model.vars.iter().enumerate() {
        if v.integer && !in_chain[j] && fractional(x[j]) {
            let d = (x[j] - x[j].floor() - 0.5).abs();
            if d < dist {
                dist = d;
                best = Some(j);
            }
        }
    }
    best
}

/// Runs the search; the root relaxation starts from `warm` when given. Also
/// returns the root's final basis.
pub(crate) fn branch_and_bound(model: &MilpModel, opts: &MilpOptions, warm: Option<&Basis>) -> Result<(SolveResult, Option<Basis>)> {
    let sign = if model.sense == Sense::Maximize { 1.0 } else { -1.0 };
    let relax = Relaxation::new(model, opts.compress_chains);
    let root_bounds: Vec<(f64, f64)> = model.vars.iter().map(|v| (v.lower, v.upper)).collect();
    let mut chain_pos = vec![None; model.num_vars()];
    let mut in_chain = vec![false; model.num_vars()];
    for (c, chain) in model.chains.iter().enumerate() {
        for (k, &z) in chain.z.iter().enumerate() {
            chain_pos[z] = Some((c, k));
            in_chain[z] = true;
        }
    }

    let mut iterations = 0usize;
    let mut nodes = 0usize;
    let mut seq = 0usize;
    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    let mut history = Vec::new();
    let mut heap = BinaryHeap::new();

    let root = relax.solve(&root_bounds, warm, false)?;
    iterations += root.iterations;
    nodes += 1;
    if root.status == LpStatus::Infeasible {
        return Ok((SolveResult::infeasible(iterations, nodes), None));
    }
    let root_basis = root.basis.clone();
    heap.push(Node {
        score: sign * root.objective,
        depth: 0,
        seq,
        bounds: root_bounds,
        x: root.x,
        basis: root.basis.map(Rc::new),
    });

    let mut status = SolveStatus::Optimal;
    let mut open_bound = f64::NEG_INFINITY;
    while let Some(node) = heap.pop() {
        if let Some((inc, _)) = &incumbent {
            if node.score <= inc + gap_tol(*inc) {
                open_bound = open_bound.max(node.score);
                break;
            }
        }
        let Some(j) = pick_branch(model, &node.x, &in_chain) else {
            // integral relaxation
            let mut x = node.x.clone();
            for (k, v) in model.vars.iter().enumerate() {
                if v.integer {
                    x[k] = x[k].round();
                }
            }
            let value = sign * model.evaluate(&x);
            if incumbent.as_ref().is_none_or(|(inc, _)| value > *inc) {
                history.push(sign * value);
                incumbent = Some((value, x));
            }
            continue;
        };
        if nodes >= opts.node_limit {
            status = SolveStatus::IterationLimit;
            open_bound = open_bound.max(node.score);
            heap.push(node);
            break;
        }
        let v = node.x[j];
        for up in [false, true] {
            let mut bounds = node.bounds.clone();
            if up {
                bounds[j].0 = v.ceil();
            } else {
                bounds[j].1 = v.floor();
            }
            if opts.propagate_chains {
                if let Some((c, k)) = chain_pos[j] {
                    let zs = &model.chains[c].z;
                    if up {
                        for &z in &zs[..k] {
                            bounds[z].0 = bounds[z].0.max(1.0);
                        }
                    } else {
                        for &z in &zs[k + 1..] {
                            bounds[z].1 = bounds[z].1.min(0.0);
                        }
                    }
                }
            }
            if bounds.iter().any(|(l, h)| l > h) {
                continue;
            }
            let warm = if opts.warm_start { node.basis.as_deref() } else { None };
            let out = relax.solve(&bounds, warm, false)?;
            iterations += out.iterations;
            nodes += 1;
            if out.status == LpStatus::Infeasible {
                continue;
            }
            let score = sign * out.objective;
            if let Some((inc, _)) = &incumbent {
                if score <= inc + gap_tol(*inc) {
                    continue;
                }
            }
            seq += 1;
            heap.push(Node { score, depth: node.depth + 1, seq, bounds, x: out.x, basis: out.basis.map(Rc::new) });
        }
    }
    for node in heap.iter() {
        open_bound = open_bound.max(node.score);
    }

    let result = match incumbent {
        None => {
            if status == SolveStatus::IterationLimit {
                let mut r = SolveResult::infeasible(iterations, nodes);
                r.status = SolveStatus::IterationLimit;
                r.best_bound = sign * open_bound;
                r
            } else {
                SolveResult::infeasible(iterations, nodes)
            }
        }
        Some((value, x)) => {
            let best = if status == SolveStatus::Optimal { value } else { open_bound.max(value) };
            SolveResult {
                status,
                objective: sign * value,
                max_violation: model.max_violation(&x),
                primal: x,
                duals: None,
                reduced_costs: None,
                nodes,
                iterations,
                best_bound: sign * best,
                incumbents: history,
            }
        }
    };
    Ok((result, root_basis))
}
