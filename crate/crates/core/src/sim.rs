//! Monte-Carlo simulation of customer arrivals under a pricing policy.
//!
//! Every period draws two uniforms, one for the arrival and one for the
//! choice, whether or not a customer arrives. Runs with the same index see
//! the same stream under every policy.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::mnl::{is_null, NULL_PRICE};

pub const DEFAULT_RUNS: usize = 20;

/// Prices as a function of the period `t` (1-based) and remaining capacity.
pub trait Policy {
    fn prices(&mut self, t: usize, x: &[u32]) -> Result<Vec<f64>>;
}

/// The same prices in every period.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPrices(pub Vec<f64>);

impl Policy for FixedPrices {
    fn prices(&mut self, _t: usize, _x: &[u32]) -> Result<Vec<f64>> {
        Ok(self.0.clone())
    }
}

impl<F: FnMut(usize, &[u32]) -> Result<Vec<f64>>> Policy for F {
    fn prices(&mut self, t: usize, x: &[u32]) -> Result<Vec<f64>> {
        self(t, x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub policy: String,
    pub revenues: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Units sold per product over all runs.
    pub sales: Vec<u64>,
    pub mean: f64,
    pub std: f64,
    /// Remaining capacity at the start of every period, per run.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub trajectories: Option<Vec<Vec<Vec<u32>>>>,
}

impl SimulationReport {
    pub fn standard_error(&self) -> f64 {
        self.std / (self.revenues.len() as f64).sqrt()
    }
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of run `run` under master seed `seed`.
pub fn run_seed(seed: u64, run: usize) -> u64 {
    splitmix64(seed.wrapping_add(run as u64))
}

/// Product chosen by draw `x` under purchase probabilities `p` (products
/// only): the first `j` with `x <= p_1 + ... + p_j`, or `None`.
pub fn select_product(p: &[f64], x: f64) -> Option<usize> {
    let mut cum = 0.0;
    for (j, &pj) in p.iter().enumerate() {
        cum += pj;
        if pj > 0.0 && x <= cum {
            return Some(j);
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub runs: usize,
    pub seed: u64,
    pub record_trajectories: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { runs: DEFAULT_RUNS, seed: 0, record_trajectories: false }
    }
}

pub fn simulate(inst: &Instance, policy: &mut dyn Policy, runs: usize, seed: u64) -> Result<SimulationReport> {
    simulate_with(inst, "policy", policy, &SimOptions { runs, seed, record_trajectories: false })
}

pub fn simulate_with(inst: &Instance, name: &str, policy: &mut dyn Policy, opts: &SimOptions) -> Result<SimulationReport> {
    if opts.runs == 0 {
        return Err(Error::InvalidArgument("at least one simulation run is required".into()));
    }
    let n = inst.n();
    let m = inst.m();
    let mut revenues = Vec::with_capacity(opts.runs);
    let mut seeds = Vec::with_capacity(opts.runs);
    let mut sales = vec![0u64; n];
    let mut trajectories = opts.record_trajectories.then(Vec::new);
    for run in 0..opts.runs {
        let s = run_seed(opts.seed, run);
        seeds.push(s);
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let mut x = inst.c.clone();
        let mut revenue = 0.0;
        let mut path = Vec::new();
        for t in 1..=inst.horizon {
            let arrival: f64 = rng.gen();
            let draw: f64 = rng.gen();
            if trajectories.is_some() {
                path.push(x.clone());
            }
            let mut r = policy.prices(t, &x)?;
            if r.len() != n {
                return Err(Error::Dimension(format!("policy returned {} prices for {n} products", r.len())));
            }
            for j in 0..n {
                if is_null(r[j]) {
                    continue;
                }
                if !(r[j] >= inst.l[j] - 1e-9 && r[j] <= inst.u[j] + 1e-9) {
                    return Err(Error::PriceOutOfRange(format!(
                        "policy priced product {j} at {} in period {t}, outside [{}, {}]",
                        r[j], inst.l[j], inst.u[j]
                    )));
                }
                if (0..m).any(|i| (x[i] as f64) < inst.a_mat[i][j]) {
                    r[j] = NULL_PRICE;
                }
            }
            if arrival >= inst.lambda {
                continue;
            }
            let p = inst.mnl.choice_probabilities(&r)?;
            if let Some(j) = select_product(&p[1..], draw) {
                revenue += r[j];
                sales[j] += 1;
                for i in 0..m {
                    let a = inst.a_mat[i][j] as u32;
                    assert!(x[i] >= a, "resource {i} oversold in period {t}");
                    x[i] -= a;
                }
            }
        }
        if let Some(tr) = trajectories.as_mut() {
            tr.push(path);
        }
        revenues.push(revenue);
    }
    let (mean, std) = mean_std(&revenues);
    Ok(SimulationReport { policy: name.to_string(), revenues, seeds, sales, mean, std, trajectories })
}

/// Simulates each named policy on the same random streams.
pub fn evaluate_policies(
    inst: &Instance,
    policies: &mut [(String, Box<dyn Policy + '_>)],
    runs: usize,
    seed: u64,
) -> Result<Vec<SimulationReport>> {
    let opts = SimOptions { runs, seed, record_trajectories: false };
    policies.iter_mut().map(|(name, p)| simulate_with(inst, name, p.as_mut(), &opts)).collect()
}

/// CSV with one row per run and `mean` and `std` summary rows per policy.
pub fn write_csv<W: Write>(reports: &[SimulationReport], out: W) -> Result<()> {
    let io = |e: csv::Error| Error::Io { path: "<csv>".into(), source: std::io::Error::other(e) };
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["policy", "run", "revenue"]).map_err(io)?;
    for rep in reports {
        for (run, rev) in rep.revenues.iter().enumerate() {
            w.write_record([rep.policy.as_str(), &run.to_string(), &rev.to_string()]).map_err(io)?;
        }
        w.write_record([rep.policy.as_str(), "mean", &rep.mean.to_string()]).map_err(io)?;
        w.write_record([rep.policy.as_str(), "std", &rep.std.to_string()]).map_err(io)?;
    }
    w.flush().map_err(|e| Error::Io { path: "<csv>".into(), source: e })?;
    Ok(())
}
