//! Acceptance checks. Prints one PASS/FAIL line per criterion.
//!
//! Pass criterion numbers as arguments to run a subset, e.g.
//! `cargo test -p mnlprice-core --test acceptance -- 1 2`. The process exits
//! nonzero on a failure only when `ACCEPTANCE_STRICT` is set.

use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mnlprice_core::dynamic::ValueFunctionSet;
use mnlprice_core::experiments::{dynamic_rows, k_sweep, static_rows, SizeClass, DEFAULT_LS_STARTS};
use mnlprice_core::fractional::{dinkelbach, threshold_value, BisectionConfig};
use mnlprice_core::lpsolve::{
    dual_objective, solve_lp, solve_milp, BundledBackend, MilpModel, RowSense, Sense, SolveStatus,
};
use mnlprice_core::milp_builder::build_bopt;
use mnlprice_core::pwla::error_constants_scaled;
use mnlprice_core::sim::{simulate_with, FixedPrices, SimOptions};
use mnlprice_core::{
    solve_dpd, solve_exact_dp, solve_sp_dmip, solve_sp_star, Error, Instance, PricingProblem, PwlaGrid, RelaxMode, NULL_PRICE,
};

const XI: f64 = 1e-3;
const K: usize = 15;

type Outcome = (bool, String);
type Check = (&'static str, fn() -> Outcome);

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_prices(inst: &Instance, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..inst.n())
        .map(|j| if rng.gen_bool(0.1) { NULL_PRICE } else { rng.gen_range(inst.l[j]..=inst.u[j]) })
        .collect()
}

fn bisection_bound() -> Outcome {
    let backend = BundledBackend::default();
    let mut worst_slack = i64::MAX;
    let (mut done, mut skipped) = (0, 0);
    let mut seed = 0u64;
    while done < 100 {
        seed += 1;
        let n = 2 + (seed % 4) as usize;
        let m = 1 + (seed % 3) as usize;
        let inst = Instance::generate(n, m, 20, 5, seed).unwrap();
        let grid = PwlaGrid::build(&inst, 6).unwrap();
        let problem = PricingProblem::new(&inst, &grid, 1.0);
        let cfg = BisectionConfig::for_problem(&problem, XI);
        let sol = match dinkelbach(&problem, &cfg, &backend) {
            Ok(s) => s,
            Err(Error::Infeasible(_)) => {
                skipped += 1;
                continue;
            }
            Err(e) => return (false, format!("seed {seed}: {e}")),
        };
        done += 1;
        let bound = ((cfg.upper - cfg.lower) / XI).log2().ceil() as i64;
        let iters = sol.iterations as i64;
        worst_slack = worst_slack.min(bound - iters);
        if iters > bound {
            return (false, format!("seed {seed}: {iters} iterations, bound {bound}"));
        }
        let g_lo = threshold_value(&problem, cfg.lower, cfg.relax, &backend).unwrap().value;
        let g_hi = threshold_value(&problem, cfg.upper, cfg.relax, &backend).unwrap().value;
        if g_lo < 0.0 || g_hi > 0.0 {
            return (false, format!("seed {seed}: G(L) = {g_lo}, G(U) = {g_hi}"));
        }
    }
    (true, format!("100 instances ({skipped} infeasible draws skipped), smallest margin to the iteration bound {worst_slack}"))
}

fn interpolation_bounds() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let inst = Instance::generate(2 + (seed % 7) as usize, 1 + (seed % 4) as usize, 30, 8, 100 + seed).unwrap();
        let k = 3 + (seed % 5) as usize * 4;
        let grid = PwlaGrid::build(&inst, k).unwrap();
        let problem = PricingProblem::new(&inst, &grid, 1.0);
        let ec = error_constants_scaled(&inst, &problem.capacity, 1.0);
        let mut r = rng(seed);
        for _ in 0..1000 {
            let p = random_prices(&inst, &mut r);
            let df = (problem.exact_objective(&p).unwrap() - problem.approx_objective(&p).unwrap()).abs();
            let fb = ec.omega_bound(k);
            worst = worst.max(df / fb);
            if df > fb + 1e-9 {
                return (false, format!("seed {seed}: |F - F_hat| = {df:e} > {fb:e}"));
            }
            let ex = problem.exact_resource(&p).unwrap();
            let ap = problem.approx_resource(&p).unwrap();
            for i in 0..inst.m() {
                let d = (ex[i] - ap[i]).abs();
                let b = ec.eta[i] / k as f64;
                if d > b + 1e-9 {
                    return (false, format!("seed {seed}: resource {i} gap {d:e} > {b:e}"));
                }
            }
        }
    }
    (true, format!("20000 price vectors, largest objective gap {:.3} of its bound", worst))
}

fn equivalence() -> Outcome {
    let backend = BundledBackend::default();
    let mut continuous_cases = 0;
    let mut worst = 0.0f64;
    for seed in 0..50u64 {
        let n = 1 + (seed % 3) as usize;
        let k = 2 + (seed % 5) as usize;
        let mut inst = Instance::generate(n, 1, 10, 50, 200 + seed).unwrap();
        inst.b_mat.clear();
        inst.d.clear();
        let concave = seed % 2 == 0;
        if concave {
            for j in 0..n {
                inst.mnl.b[j] = inst.mnl.b[j].max(0.5 * inst.u[j]) + 1.0;
            }
        }
        let grid = PwlaGrid::build(&inst, k).unwrap();
        let problem = PricingProblem::new(&inst, &grid, 1.0);
        if problem.has_active_resource_rows() {
            return (false, format!("seed {seed}: resource row unexpectedly active"));
        }
        let cfg = BisectionConfig::for_problem(&problem, XI);
        let mut r = rng(seed);
        for _ in 0..4 {
            let delta = r.gen_range(cfg.lower..=cfg.upper);
            let (binary, _) = build_bopt(&problem, delta, RelaxMode::Never).unwrap();
            let (relaxed, _) = build_bopt(&problem, delta, RelaxMode::WhenSafe).unwrap();
            let vb = solve_milp(&binary).unwrap().objective;
            let vr = backend_value(&backend, &relaxed);
            let d = (vb - vr).abs();
            worst = worst.max(d);
            if d > 1e-6 {
                return (false, format!("seed {seed}: binary {vb} vs relaxed {vr} at delta {delta}"));
            }
            if concave {
                let lp = solve_lp(&binary.relaxed()).unwrap().objective;
                continuous_cases += 1;
                if (lp - vb).abs() > 1e-6 {
                    return (false, format!("seed {seed}: continuous {lp} vs binary {vb}"));
                }
            }
        }
    }
    (true, format!("200 thresholds, {continuous_cases} all-continuous, largest difference {worst:.1e}"))
}

fn backend_value(backend: &BundledBackend, model: &MilpModel) -> f64 {
    use mnlprice_core::lpsolve::MilpBackend;
    backend.solve_milp(model).unwrap().objective
}

/// Largest `scale * F` over a `side x side` grid of the exactly feasible set, with
/// every product also allowed at the null price, and the largest change
/// of F between grid neighbours.
fn grid_oracle(inst: &Instance, scale: f64, side: usize) -> (f64, f64) {
    let axes: Vec<Vec<f64>> = (0..2)
        .map(|j| {
            let mut v: Vec<f64> =
                (0..side).map(|s| inst.l[j] + (inst.u[j] - inst.l[j]) * s as f64 / (side - 1) as f64).collect();
            v.push(NULL_PRICE);
            v
        })
        .collect();
    let gs: Vec<Vec<f64>> = (0..2).map(|j| axes[j].iter().map(|&r| inst.mnl.g(j, r)).collect()).collect();
    let feasible = |a: usize, b: usize| -> bool {
        let r = [axes[0][a], axes[1][b]];
        for (row, &d) in inst.b_mat.iter().zip(&inst.d) {
            let lhs: f64 = row.iter().zip(&r).filter(|(_, x)| **x != NULL_PRICE).map(|(c, x)| c * x).sum();
            if lhs > d {
                return false;
            }
        }
        let den = 1.0 + gs[0][a] + gs[1][b];
        inst.a_mat
            .iter()
            .zip(&inst.c)
            .all(|(row, &c)| scale * (row[0] * gs[0][a] + row[1] * gs[1][b]) / den <= c as f64)
    };
    let value = |a: usize, b: usize| -> f64 {
        let fa = if a < side { axes[0][a] * gs[0][a] } else { 0.0 };
        let fb = if b < side { axes[1][b] * gs[1][b] } else { 0.0 };
        scale * (fa + fb) / (1.0 + gs[0][a] + gs[1][b])
    };
    let mut best = 0.0f64;
    let mut step = 0.0f64;
    for a in 0..=side {
        for b in 0..=side {
            let v = value(a, b);
            if a + 1 < side {
                step = step.max((value(a + 1, b) - v).abs());
            }
            if b + 1 < side {
                step = step.max((value(a, b + 1) - v).abs());
            }
            if feasible(a, b) {
                best = best.max(v);
            }
        }
    }
    (best, step)
}

fn certificate() -> Outcome {
    let (mut certified, mut skipped) = (0, 0);
    for seed in 0..40u64 {
        let inst = Instance::generate(3 + (seed % 5) as usize, 1 + (seed % 3) as usize, 10, 2, 300 + seed).unwrap();
        let sols = [solve_sp_dmip(&inst, K, XI), solve_sp_star(&inst, K, XI)];
        for sol in sols {
            match sol {
                Ok(s) if s.feasibility.certified => certified += 1,
                Ok(s) => return (false, format!("seed {seed}: output not certified: {:?}", s.feasibility)),
                Err(Error::Infeasible(_)) => skipped += 1,
                Err(e) => return (false, format!("seed {seed}: {e}")),
            }
        }
    }
    let mut worst = f64::NEG_INFINITY;
    let mut binding = 0;
    let (mut done, mut seed) = (0, 0u64);
    while done < 20 {
        seed += 1;
        let inst = Instance::generate(2, 1, 10, 1 + (seed % 3) as u32, 400 + seed).unwrap();
        let k = [4, 6, 10, 15][seed as usize % 4];
        let sol = match solve_sp_star(&inst, k, XI) {
            Ok(s) => s,
            Err(Error::Infeasible(_)) => continue,
            Err(e) => return (false, format!("oracle seed {seed}: {e}")),
        };
        done += 1;
        if !sol.feasibility.certified {
            return (false, format!("oracle seed {seed}: output not certified"));
        }
        if sol.feasibility.max_resource_excess > -1e-6 {
            binding += 1;
        }
        let (best, step) = grid_oracle(&inst, sol.scale, 1000);
        let bound = sol.omega_bound + XI + 2.0 * step;
        let gap = best - sol.exact_objective;
        worst = worst.max(gap / bound);
        if gap > bound {
            return (false, format!("oracle seed {seed}: grid {best} vs {} exceeds {bound}", sol.exact_objective));
        }
    }
    (
        true,
        format!(
            "{certified} certified outputs ({skipped} infeasible draws); 20 grid oracles ({binding} with a binding resource), largest gap {:.3} of its bound",
            worst.max(0.0)
        ),
    )
}

fn k_sweep_shape() -> Outcome {
    let class = SizeClass::new(16, 80, 50, 30);
    let backend = BundledBackend::default();
    let mut worst_gap = 0.0f64;
    let (mut t10, mut t100) = (0.0, 0.0);
    for seed in 0..5u64 {
        let inst = class.generate(seed).unwrap();
        let rows = k_sweep(&inst, seed, &[2, 3, 5, 8, 10, 15, 20, 30, 50, 100], XI, &backend).unwrap();
        for r in &rows {
            if r.k >= 15 {
                worst_gap = worst_gap.max(r.gap_percent);
            }
            if r.k == 10 {
                t10 += r.seconds;
            }
            if r.k == 100 {
                t100 += r.seconds;
            }
        }
    }
    let ratio = t100 / t10.max(1e-9);
    let pass = worst_gap < 0.5 && ratio <= 20.0;
    (pass, format!("largest gap for K >= 15: {worst_gap:.4}%, time(100)/time(10) = {ratio:.2}"))
}

fn static_ordering() -> Outcome {
    let backend = BundledBackend::default();
    let mut losses = Vec::new();
    let mut total = 0;
    for class in [SizeClass::new(2, 3, 200, 60), SizeClass::new(4, 8, 50, 30)] {
        for seed in 0..10u64 {
            let inst = class.generate(seed).unwrap();
            let rows = static_rows(&class.label(), &inst, seed, K, XI, DEFAULT_LS_STARTS, &backend).unwrap();
            total += 1;
            let dmip = rows[0].revenue;
            let best_other = rows[1..].iter().map(|r| r.revenue).fold(f64::NEG_INFINITY, f64::max);
            if dmip < best_other - 1e-6 {
                losses.push(format!("{}#{seed} by {:.3}", class.label(), best_other - dmip));
            }
        }
    }
    if losses.is_empty() {
        (true, format!("SP-DMIP best on all {total} instances"))
    } else {
        (false, format!("SP-DMIP behind a baseline on {}/{total}: {}", losses.len(), losses.join(", ")))
    }
}

fn dynamic_ordering() -> Outcome {
    let class = SizeClass::new(4, 8, 50, 30);
    let mut obj_losses = Vec::new();
    let mut sim_wins = 0;
    for seed in 0..5u64 {
        let inst = class.generate(seed).unwrap();
        let (table, sims) =
            dynamic_rows(&class.label(), &inst, seed, K, XI, 20, Arc::new(BundledBackend::default())).unwrap();
        let (dm, tr) = (table[0].revenue, table[1].revenue);
        if dm < tr - 1e-6 {
            obj_losses.push(format!("#{seed} by {:.3}", tr - dm));
        }
        if sims[0].mean >= sims[1].mean {
            sim_wins += 1;
        }
    }
    let pass = obj_losses.is_empty() && sim_wins >= 4;
    let obj = if obj_losses.is_empty() {
        "objective ahead on 5/5".to_string()
    } else {
        format!("objective behind on {}/5 ({})", obj_losses.len(), obj_losses.join(", "))
    };
    (pass, format!("{obj}; simulated mean ahead on {sim_wins}/5"))
}

fn dynamic_oracle() -> Outcome {
    let mut worst = f64::NEG_INFINITY;
    for seed in 0..10u64 {
        let inst = Instance::generate(2, 1, 3, 2, 500 + seed).unwrap();
        let vfs: ValueFunctionSet = solve_dpd(&inst, K, XI, &[0.0]).unwrap();
        if let Err(e) = vfs.check_invariants(1e-9) {
            return (false, format!("seed {seed}: {e}"));
        }
        let exact = solve_exact_dp(&inst, K).unwrap();
        let ec = error_constants_scaled(&inst, &inst.capacities_f64(), inst.lambda);
        let bound = 2.0 * ec.omega_bound(K) + XI + 1e-6;
        let diff = (vfs.value(0, 1, inst.c[0]) - exact.value(1, &inst.c)).abs();
        worst = worst.max(diff);
        if diff > bound {
            return (false, format!("seed {seed}: |dpd - exact| = {diff} > {bound}"));
        }
    }
    (true, format!("10 instances, largest difference {worst:.2e}"))
}

fn simulation() -> Outcome {
    for seed in 0..10u64 {
        let mut inst = Instance::generate(4, 2, 120, 6, 600 + seed).unwrap();
        inst.mnl.a = vec![300.0; 4];
        let opts = SimOptions { runs: 50, seed, record_trajectories: true };
        let rep = simulate_with(&inst, "low", &mut FixedPrices(inst.l.clone()), &opts).unwrap();
        for path in rep.trajectories.as_ref().unwrap() {
            for w in path.windows(2) {
                let used: Vec<u32> = (0..inst.m()).map(|i| w[0][i] - w[1][i]).collect();
                let matches_column = used.iter().all(|&u| u == 0)
                    || (0..inst.n()).any(|j| (0..inst.m()).all(|i| used[i] as f64 == inst.a_mat[i][j]));
                if !matches_column {
                    return (false, format!("seed {seed}: capacity moved by {used:?}"));
                }
            }
        }
    }
    let inst = Instance::generate(3, 2, 50, 200, 7).unwrap();
    let prices: Vec<f64> = (0..3).map(|j| 0.5 * (inst.l[j] + inst.u[j])).collect();
    let expected = inst.lambda * inst.horizon as f64 * inst.mnl.expected_revenue(&prices).unwrap();
    let opts = SimOptions { runs: 2000, seed: 11, record_trajectories: false };
    let rep = simulate_with(&inst, "mid", &mut FixedPrices(prices), &opts).unwrap();
    let z = (rep.mean - expected) / rep.standard_error();
    (z.abs() <= 3.0, format!("no capacity violations; mean {:.2} vs {expected:.2}, z = {z:.2}", rep.mean))
}

fn random_lp(r: &mut ChaCha8Rng, integer: bool) -> MilpModel {
    let vars = if integer { r.gen_range(2..=12) } else { r.gen_range(2..=15) };
    let rows = r.gen_range(1..=8);
    let sense = if r.gen_bool(0.5) { Sense::Maximize } else { Sense::Minimize };
    let mut model = MilpModel::new(sense);
    let mut x0 = Vec::with_capacity(vars);
    for _ in 0..vars {
        let (lo, hi) = if integer {
            (0.0, 1.0)
        } else {
            let lo = r.gen_range(-5.0..5.0);
            (lo, lo + r.gen_range(0.0..10.0))
        };
        model.add_var(lo, hi, integer, r.gen_range(-10.0..10.0));
        x0.push(if integer { r.gen_range(0..=1) as f64 } else { r.gen_range(lo..=hi) });
    }
    for _ in 0..rows {
        let mut coefs = Vec::new();
        for j in 0..vars {
            if r.gen_bool(0.7) {
                coefs.push((j, r.gen_range(-5.0..5.0)));
            }
        }
        let act: f64 = coefs.iter().map(|&(j, c)| c * x0[j]).sum();
        let (row_sense, rhs) = match r.gen_range(0..5) {
            0 => (RowSense::Eq, act),
            1 | 2 => (RowSense::Le, act + r.gen_range(0.0..3.0)),
            _ => (RowSense::Ge, act - r.gen_range(0.0..3.0)),
        };
        // an occasional infeasible system keeps the status paths honest
        let rhs = if r.gen_bool(0.03) && row_sense == RowSense::Le { act - 1e3 } else { rhs };
        model.add_row(coefs, row_sense, rhs);
    }
    model
}

fn enumerate(model: &MilpModel) -> Option<f64> {
    let n = model.num_vars();
    let maximize = model.sense == Sense::Maximize;
    let mut best: Option<f64> = None;
    for mask in 0u32..(1 << n) {
        let x: Vec<f64> = (0..n).map(|j| ((mask >> j) & 1) as f64).collect();
        if model.max_violation(&x) > 1e-9 {
            continue;
        }
        let v = model.evaluate(&x);
        best = Some(match best {
            None => v,
            Some(b) if maximize => b.max(v),
            Some(b) => b.min(v),
        });
    }
    best
}

fn solver_core() -> Outcome {
    let mut r = rng(10);
    let mut optimal = 0;
    let mut worst_dual = 0.0f64;
    for case in 0..500 {
        let model = random_lp(&mut r, false);
        let res = solve_lp(&model).unwrap();
        if res.status != SolveStatus::Optimal {
            continue;
        }
        optimal += 1;
        let Some(dual) = dual_objective(&model, &res) else {
            return (false, format!("LP {case}: no dual objective"));
        };
        let gap = (dual - res.objective).abs() / res.objective.abs().max(1.0);
        worst_dual = worst_dual.max(gap);
        if gap > 1e-6 {
            return (false, format!("LP {case}: primal {} dual {dual}", res.objective));
        }
    }
    for case in 0..200 {
        let model = random_lp(&mut r, true);
        let res = solve_milp(&model).unwrap();
        match (enumerate(&model), res.status) {
            (None, SolveStatus::Infeasible) => {}
            (Some(v), SolveStatus::Optimal) if (v - res.objective).abs() <= 1e-9 * v.abs().max(1.0) => {}
            (truth, status) => {
                return (false, format!("MILP {case}: enumeration {truth:?}, solver {status:?} {}", res.objective));
            }
        }
    }
    (true, format!("{optimal}/500 LPs optimal with relative duality gap <= {worst_dual:.1e}; 200 MILPs match enumeration"))
}

fn main() {
    let criteria: [Check; 10] = [
        ("bisection iteration bound and endpoint certificates", bisection_bound),
        ("interpolation error bounds", interpolation_bounds),
        ("relaxed and binary threshold models agree", equivalence),
        ("feasibility certificate and grid oracle", certificate),
        ("breakpoint sweep gap and time growth", k_sweep_shape),
        ("static revenue ordering", static_ordering),
        ("decomposition objective and simulated ordering", dynamic_ordering),
        ("decomposition matches the exact dynamic program", dynamic_oracle),
        ("simulation conservation and unbiasedness", simulation),
        ("LP duality and MILP enumeration", solver_core),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (idx, (name, check)) in criteria.iter().enumerate() {
        let id = idx + 1;
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let started = Instant::now();
        let (pass, detail) = check();
        let verdict = if pass { "PASS" } else { "FAIL" };
        failed += usize::from(!pass);
        println!("{verdict} criterion {id} ({name}): {detail} [{:.1}s]", started.elapsed().as_secs_f64());
    }
    if failed > 0 && std::env::var_os("ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
