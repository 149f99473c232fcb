//! Problem instances: data model, random generation, validation, persistence
//! and the feasible price region.

use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mnl::{is_null, MnlModel};

pub const SCHEMA_VERSION: u32 = 1;

/// A pricing instance over `n` products and `m` resources.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub mnl: MnlModel,
    /// `m x n` consumption matrix, entries 0 or 1.
    pub a_mat: Vec<Vec<f64>>,
    /// Integer capacities.
    pub c: Vec<u32>,
    /// `p x n` price-constraint matrix for `B r <= d`.
    pub b_mat: Vec<Vec<f64>>,
    pub d: Vec<f64>,
    pub l: Vec<f64>,
    pub u: Vec<f64>,
    pub lambda: f64,
    pub horizon: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    schema_version: u32,
    n: usize,
    m: usize,
    #[serde(rename = "T")]
    horizon: usize,
    lambda: f64,
    a: Vec<f64>,
    b: Vec<f64>,
    l: Vec<f64>,
    u: Vec<f64>,
    #[serde(rename = "A")]
    a_mat: Vec<Vec<u8>>,
    c: Vec<u32>,
    #[serde(rename = "B")]
    b_mat: Vec<Vec<f64>>,
    d: Vec<f64>,
}

impl Instance {
    pub fn n(&self) -> usize {
        self.mnl.n()
    }

    pub fn m(&self) -> usize {
        self.a_mat.len()
    }

    pub fn p(&self) -> usize {
        self.b_mat.len()
    }

    pub fn capacities_f64(&self) -> Vec<f64> {
        self.c.iter().map(|&x| x as f64).collect()
    }

    /// Total expected arrivals `lambda * T`, the scale of the deterministic model.
    pub fn demand_scale(&self) -> f64 {
        self.lambda * self.horizon as f64
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        self.mnl.validate().map_err(|e| Error::Schema(e.to_string()))?;
        let dims = [("a", self.mnl.a.len()), ("b", self.mnl.b.len()), ("l", self.l.len()), ("u", self.u.len())];
        for (name, len) in dims {
            if len != n {
                return Err(Error::Schema(format!("field `{name}` has {len} entries, expected n = {n}")));
            }
        }
        for j in 0..n {
            let (l, u) = (self.l[j], self.u[j]);
            if !(l.is_finite() && u.is_finite() && l > 0.0 && l < u) {
                return Err(Error::Schema(format!(
                    "product {j}: price bounds must satisfy 0 < l < u (got l = {l}, u = {u})"
                )));
            }
            if !self.mnl.a[j].is_finite() {
                return Err(Error::Schema(format!("product {j}: `a` must be finite")));
            }
        }
        if self.c.len() != self.m() {
            return Err(Error::Schema(format!("field `c` has {} entries, expected m = {}", self.c.len(), self.m())));
        }
        for (i, row) in self.a_mat.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Schema(format!("field `A` row {i} has {} entries, expected {n}", row.len())));
            }
            if row.iter().any(|&x| x != 0.0 && x != 1.0) {
                return Err(Error::Schema(format!("field `A` row {i} has entries outside {{0,1}}")));
            }
            if self.c[i] == 0 {
                return Err(Error::Schema(format!("field `c` entry {i} must be positive")));
            }
        }
        if self.d.len() != self.p() {
            return Err(Error::Schema(format!("field `d` has {} entries, expected {}", self.d.len(), self.p())));
        }
        for (k, row) in self.b_mat.iter().enumerate() {
            if row.len() != n || row.iter().any(|x| !x.is_finite()) {
                return Err(Error::Schema(format!("field `B` row {k} must have {n} finite entries")));
            }
            if !self.d[k].is_finite() {
                return Err(Error::Schema(format!("field `d` entry {k} must be finite")));
            }
        }
        if !(self.lambda >= 0.0 && self.lambda <= 1.0) {
            return Err(Error::Schema(format!("field `lambda` = {} must lie in [0, 1]", self.lambda)));
        }
        Ok(())
    }

    /// Random instance following the generation protocol. `b_j` is drawn from
    /// `U[1, 100]` so that it stays away from zero.
    pub fn generate(n: usize, m: usize, horizon: usize, capacity: u32, seed: u64) -> Result<Instance> {
        if n == 0 || m == 0 || horizon == 0 || capacity == 0 {
            return Err(Error::InvalidArgument("n, m, T and capacity must all be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(10.0..=100.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(1.0..=100.0)).collect();
        let l: Vec<f64> = (0..n).map(|_| rng.gen_range(100.0..=150.0)).collect();
        let u: Vec<f64> = (0..n).map(|_| rng.gen_range(250.0..=400.0)).collect();
        let a_mat: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..n).map(|_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 }).collect())
            .collect();
        let sum_u: f64 = u.iter().sum();
        let (lo, hi) = price_row_count_range(n);
        let mut b_mat = Vec::with_capacity(3);
        let mut d = Vec::with_capacity(3);
        for _ in 0..3 {
            let ones = rng.gen_range(lo..=hi);
            let mut row = vec![0.0; n];
            for j in sample(&mut rng, n, ones).into_iter() {
                row[j] = 1.0;
            }
            b_mat.push(row);
            d.push(rng.gen_range(0.3 * sum_u..=0.5 * sum_u));
        }
        let inst = Instance {
            mnl: MnlModel { a, b },
            a_mat,
            c: vec![capacity; m],
            b_mat,
            d,
            l,
            u,
            lambda: 1.0,
            horizon,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = InstanceFile {
            schema_version: SCHEMA_VERSION,
            n: self.n(),
            m: self.m(),
            horizon: self.horizon,
            lambda: self.lambda,
            a: self.mnl.a.clone(),
            b: self.mnl.b.clone(),
            l: self.l.clone(),
            u: self.u.clone(),
            a_mat: self.a_mat.iter().map(|row| row.iter().map(|&x| x as u8).collect()).collect(),
            c: self.c.clone(),
            b_mat: self.b_mat.clone(),
            d: self.d.clone(),
        };
        serde_json::to_string_pretty(&file).map_err(|e| Error::Schema(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Instance> {
        let file: InstanceFile = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(Error::Schema(format!(
                "field `schema_version` = {} is not supported (expected {SCHEMA_VERSION})",
                file.schema_version
            )));
        }
        if file.a.len() != file.n {
            return Err(Error::Schema(format!("field `n` = {} disagrees with `a` length {}", file.n, file.a.len())));
        }
        if file.a_mat.len() != file.m {
            return Err(Error::Schema(format!("field `m` = {} disagrees with `A` row count {}", file.m, file.a_mat.len())));
        }
        if let Some((i, _)) = file.a_mat.iter().enumerate().find(|(_, row)| row.iter().any(|&x| x > 1)) {
            return Err(Error::Schema(format!("field `A` row {i} has entries outside {{0,1}}")));
        }
        let inst = Instance {
            mnl: MnlModel { a: file.a, b: file.b },
            a_mat: file.a_mat.iter().map(|row| row.iter().map(|&x| x as f64).collect()).collect(),
            c: file.c,
            b_mat: file.b_mat,
            d: file.d,
            l: file.l,
            u: file.u,
            lambda: file.lambda,
            horizon: file.horizon,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|source| Error::Io { path: path.display().to_string(), source })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Instance> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }

    /// Stable 64-bit fingerprint of the serialized instance.
    pub fn fingerprint(&self) -> u64 {
        let text = self.to_json().unwrap_or_default();
        fnv1a(text.as_bytes())
    }
}

/// Inclusive range for the ones count of a generated price row.
pub fn price_row_count_range(n: usize) -> (usize, usize) {
    let lo = ((0.5 * n as f64).ceil() as usize).max(1);
    let hi = ((0.7 * n as f64).floor() as usize).max(lo).min(n);
    (lo.min(hi), hi)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RegionMode {
    Exact,
    /// Resource rows relaxed to `psi_i <= c_i + eps`.
    Slack(f64),
}

/// The set of admissible prices for an instance.
///
/// `scale` multiplies the consumption side of the resource rows, so the
/// deterministic model with `T` arrivals uses `scale = lambda * T`.
#[derive(Debug, Clone)]
pub struct FeasiblePriceRegion<'a> {
    pub instance: &'a Instance,
    pub capacity: Option<Vec<f64>>,
    pub scale: f64,
    pub mode: RegionMode,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ViolationKind {
    BoxLower(usize),
    BoxUpper(usize),
    PriceRow(usize),
    Resource(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Amount by which the row is exceeded.
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Feasibility {
    Feasible,
    Violations(Vec<Violation>),
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible)
    }
}

impl<'a> FeasiblePriceRegion<'a> {
    pub fn exact(instance: &'a Instance) -> Self {
        Self { instance, capacity: None, scale: 1.0, mode: RegionMode::Exact }
    }

    pub fn with_slack(instance: &'a Instance, eps: f64) -> Self {
        Self { instance, capacity: None, scale: 1.0, mode: RegionMode::Slack(eps) }
    }

    pub fn capacity(&self) -> Vec<f64> {
        self.capacity.clone().unwrap_or_else(|| self.instance.capacities_f64())
    }

    /// Every violated row with the amount it is exceeded by. Null prices are
    /// exempt from the box and contribute nothing to price rows.
    pub fn check(&self, r: &[f64]) -> Feasibility {
        let inst = self.instance;
        let mut out = Vec::new();
        if r.len() != inst.n() {
            return Feasibility::Violations(vec![Violation { kind: ViolationKind::BoxLower(r.len()), slack: f64::INFINITY }]);
        }
        for j in 0..inst.n() {
            if is_null(r[j]) {
                continue;
            }
            if r[j] < inst.l[j] {
                out.push(Violation { kind: ViolationKind::BoxLower(j), slack: inst.l[j] - r[j] });
            }
            if r[j] > inst.u[j] {
                out.push(Violation { kind: ViolationKind::BoxUpper(j), slack: r[j] - inst.u[j] });
            }
        }
        for (k, row) in inst.b_mat.iter().enumerate() {
            let lhs: f64 = row.iter().zip(r).filter(|(_, rj)| !is_null(**rj)).map(|(bk, rj)| bk * rj).sum();
            if lhs > inst.d[k] {
                out.push(Violation { kind: ViolationKind::PriceRow(k), slack: lhs - inst.d[k] });
            }
        }
        let eps = match self.mode {
            RegionMode::Exact => 0.0,
            RegionMode::Slack(e) => e,
        };
        let cap = self.capacity();
        if let Ok(psi) = inst.mnl.resource_lhs_scaled(&inst.a_mat, &cap, self.scale, r) {
            for (i, (&p, &ci)) in psi.iter().zip(&cap).enumerate() {
                if p > ci + eps {
                    out.push(Violation { kind: ViolationKind::Resource(i), slack: p - ci - eps });
                }
            }
        }
        if out.is_empty() {
            Feasibility::Feasible
        } else {
            Feasibility::Violations(out)
        }
    }
}

pub fn is_feasible(region: &FeasiblePriceRegion<'_>, r: &[f64]) -> Feasibility {
    region.check(r)
}
