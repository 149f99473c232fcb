//! Experiment drivers: the breakpoint-count sweep and the comparison tables.

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::baselines::{solve_dp_trans, solve_sp_localsearch, solve_sp_trans, TransStage};
use crate::dynamic::{solve_dpd_with, DecompositionPolicy, DmipStage};
use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::lpsolve::MilpBackend;
use crate::sim::{evaluate_policies, FixedPrices, Policy};
use crate::static_solver::{solve_static_with, PricingSolution, SolveOptions};

pub const SWEEP_KS: [usize; 10] = [2, 3, 5, 8, 10, 15, 20, 30, 50, 100];
pub const DEFAULT_LS_STARTS: usize = 10;

/// Instance class `(m, n, T)` with a common capacity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeClass {
    pub m: usize,
    pub n: usize,
    pub horizon: usize,
    pub capacity: u32,
}

impl SizeClass {
    pub const fn new(m: usize, n: usize, horizon: usize, capacity: u32) -> Self {
        Self { m, n, horizon, capacity }
    }

    pub fn label(&self) -> String {
        format!("({},{},{})", self.m, self.n, self.horizon)
    }

    pub fn generate(&self, seed: u64) -> Result<Instance> {
        Instance::generate(self.n, self.m, self.horizon, self.capacity, seed)
    }
}

/// The four instance classes of the numerical study.
pub const STUDY_SIZES: [SizeClass; 4] = [
    SizeClass::new(2, 3, 200, 60),
    SizeClass::new(4, 8, 50, 30),
    SizeClass::new(16, 80, 50, 30),
    SizeClass::new(16, 80, 200, 120),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub seed: u64,
    pub k: usize,
    pub revenue: f64,
    /// `(reference - revenue) / reference * 100`, the reference being the largest K.
    pub gap_percent: f64,
    pub seconds: f64,
}

fn star(inst: &Instance, k: usize, tolerance: f64, backend: &dyn MilpBackend) -> Result<PricingSolution> {
    solve_static_with(inst, inst.demand_scale(), &SolveOptions::new(k, tolerance), backend)
}

/// Solves the deterministic static problem at every `K` in `ks`.
pub fn k_sweep(
    inst: &Instance,
    seed: u64,
    ks: &[usize],
    tolerance: f64,
    backend: &dyn MilpBackend,
) -> Result<Vec<SweepRow>> {
    let reference_k = *ks.iter().max().ok_or_else(|| Error::InvalidArgument("empty K list".into()))?;
    let mut rows = Vec::with_capacity(ks.len());
    for &k in ks {
        let sol = star(inst, k, tolerance, backend)?;
        rows.push(SweepRow { seed, k, revenue: sol.exact_objective, gap_percent: 0.0, seconds: sol.seconds });
    }
    let reference = rows.iter().find(|r| r.k == reference_k).map(|r| r.revenue).unwrap_or(f64::NAN);
    for r in &mut rows {
        r.gap_percent = if reference != 0.0 { (reference - r.revenue) / reference * 100.0 } else { 0.0 };
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub instance_set: String,
    pub seed: u64,
    pub method: String,
    pub revenue: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRow {
    pub instance_set: String,
    pub seed: u64,
    pub method: String,
    pub mean: f64,
    pub std: f64,
}

/// Static comparison on one instance: the MILP method, the transform
/// baseline and the local search, all on the deterministic horizon problem.
pub fn static_rows(
    set: &str,
    inst: &Instance,
    seed: u64,
    k: usize,
    tolerance: f64,
    ls_starts: usize,
    backend: &dyn MilpBackend,
) -> Result<Vec<TableRow>> {
    let scale = inst.demand_scale();
    let dmip = star(inst, k, tolerance, backend)?;
    let trans = solve_sp_trans(inst, scale)?;
    let ls = solve_sp_localsearch(inst, scale, ls_starts, seed)?;
    Ok([("SP-DMIP", &dmip), ("SP-Trans", &trans), ("SP-LocalSearch", &ls)]
        .into_iter()
        .map(|(m, s)| TableRow {
            instance_set: set.into(),
            seed,
            method: m.into(),
            revenue: s.exact_objective,
            seconds: s.seconds,
        })
        .collect())
}

/// Decomposition objectives next to the static objectives, and the
/// simulated revenue of every policy under common random numbers.
pub fn dynamic_rows(
    set: &str,
    inst: &Instance,
    seed: u64,
    k: usize,
    tolerance: f64,
    runs: usize,
    backend: Arc<dyn MilpBackend>,
) -> Result<(Vec<TableRow>, Vec<SimRow>)> {
    let scale = inst.demand_scale();
    let star = star(inst, k, tolerance, backend.as_ref())?;
    let trans = solve_sp_trans(inst, scale)?;
    let dm_stage = DmipStage { backend, ..DmipStage::new(k, tolerance) };
    let mut dm = solve_dpd_with(inst, &dm_stage, &star.duals)?;
    dm.tolerance = tolerance;
    let tr = solve_dp_trans(inst, k, tolerance, &star.duals)?;
    let row = |method: &str, revenue: f64, seconds: f64| TableRow {
        instance_set: set.into(),
        seed,
        method: method.into(),
        revenue,
        seconds,
    };
    let table = vec![
        row("DP-DMIP", dm.objective(inst), dm.diagnostics.seconds),
        row("DP-Trans", tr.objective(inst), tr.diagnostics.seconds),
        row("SP-DMIP", star.exact_objective, star.seconds),
        row("SP-Trans", trans.exact_objective, trans.seconds),
    ];
    let tr_stage = TransStage::new(k);
    let mut policies: Vec<(String, Box<dyn Policy + '_>)> = vec![
        ("DP-DMIP".into(), Box::new(DecompositionPolicy::new(inst, &dm, &dm_stage)?)),
        ("DP-Trans".into(), Box::new(DecompositionPolicy::new(inst, &tr, &tr_stage)?)),
        ("SP-DMIP".into(), Box::new(FixedPrices(star.prices.clone()))),
        ("SP-Trans".into(), Box::new(FixedPrices(trans.prices.clone()))),
    ];
    let reports = evaluate_policies(inst, &mut policies, runs, seed)?;
    let sims = reports
        .into_iter()
        .map(|r| SimRow { instance_set: set.into(), seed, method: r.policy, mean: r.mean, std: r.std })
        .collect();
    Ok((table, sims))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io { path: "<csv>".into(), source: std::io::Error::other(e) }
}

fn flush<W: Write>(w: &mut csv::Writer<W>) -> Result<()> {
    w.flush().map_err(|e| Error::Io { path: "<csv>".into(), source: e })
}

/// `seed,k,revenue,gap_percent`.
pub fn write_gap_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["seed", "k", "revenue", "gap_percent"]).map_err(csv_err)?;
    for r in rows {
        w.write_record([r.seed.to_string(), r.k.to_string(), r.revenue.to_string(), r.gap_percent.to_string()])
            .map_err(csv_err)?;
    }
    flush(&mut w)
}

/// `seed,k,seconds`.
pub fn write_time_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["seed", "k", "seconds"]).map_err(csv_err)?;
    for r in rows {
        w.write_record([r.seed.to_string(), r.k.to_string(), format!("{:.2}", r.seconds)]).map_err(csv_err)?;
    }
    flush(&mut w)
}

/// Per-instance rows followed by one `mean` row per instance set and method.
pub fn write_table_csv<W: Write>(rows: &[TableRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["instance_set", "seed", "method", "revenue", "time"]).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.instance_set.clone(),
            r.seed.to_string(),
            r.method.clone(),
            format!("{:.2}", r.revenue),
            format!("{:.2}", r.seconds),
        ])
        .map_err(csv_err)?;
    }
    for (set, method) in groups(rows.iter().map(|r| (&r.instance_set, &r.method))) {
        let sel: Vec<&TableRow> = rows.iter().filter(|r| r.instance_set == set && r.method == method).collect();
        let n = sel.len() as f64;
        let rev = sel.iter().map(|r| r.revenue).sum::<f64>() / n;
        let secs = sel.iter().map(|r| r.seconds).sum::<f64>() / n;
        w.write_record([set, "mean".into(), method, format!("{rev:.2}"), format!("{secs:.2}")]).map_err(csv_err)?;
    }
    flush(&mut w)
}

/// `instance_set,seed,method,mean,std`.
pub fn write_sim_csv<W: Write>(rows: &[SimRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["instance_set", "seed", "method", "mean", "std"]).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.instance_set.clone(),
            r.seed.to_string(),
            r.method.clone(),
            format!("{:.2}", r.mean),
            format!("{:.2}", r.std),
        ])
        .map_err(csv_err)?;
    }
    flush(&mut w)
}

fn groups<'a>(keys: impl Iterator<Item = (&'a String, &'a String)>) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (a, b) in keys {
        if !out.iter().any(|(x, y)| x == a && y == b) {
            out.push((a.clone(), b.clone()));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lpsolve::BundledBackend;

    #[test]
    fn sweep_reference_has_zero_gap() {
        let inst = Instance::generate(4, 2, 10, 5, 3).unwrap();
        let rows = k_sweep(&inst, 3, &[2, 5, 10], 1e-3, &BundledBackend::default()).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[2].gap_percent, 0.0);
        let mut buf = Vec::new();
        write_gap_csv(&rows, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 4);
    }

    #[test]
    fn table_has_mean_rows() {
        let inst = Instance::generate(3, 2, 20, 6, 1).unwrap();
        let mut rows = static_rows("(2,3,20)", &inst, 1, 6, 1e-3, 2, &BundledBackend::default()).unwrap();
        rows.extend(static_rows("(2,3,20)", &inst, 2, 6, 1e-3, 2, &BundledBackend::default()).unwrap());
        let mut buf = Vec::new();
        write_table_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 6 + 3);
        assert!(text.contains("\"(2,3,20)\",mean,SP-DMIP,"));
    }

    #[test]
    fn dynamic_rows_cover_all_methods() {
        let inst = Instance::generate(3, 2, 4, 2, 5).unwrap();
        let (table, sims) = dynamic_rows("(2,3,4)", &inst, 5, 4, 1e-3, 3, Arc::new(BundledBackend::default())).unwrap();
        let names: Vec<&str> = table.iter().map(|r| r.method.as_str()).collect();
        assert_eq!(names, ["DP-DMIP", "DP-Trans", "SP-DMIP", "SP-Trans"]);
        assert_eq!(sims.len(), 4);
    }

    #[test]
    fn study_labels() {
        assert_eq!(STUDY_SIZES[0].label(), "(2,3,200)");
        let inst = STUDY_SIZES[1].generate(0).unwrap();
        assert_eq!((inst.m(), inst.n(), inst.horizon), (4, 8, 50));
    }
}
