//! Piecewise-linear interpolants of `f_j(r) = r g_j(r)` and
//! `g_j(r) = exp((a_j - r) / b_j)` on a uniform grid anchored at `l_j`, plus
//! the interpolation error constants.

use crate::error::{Error, Result};
use crate::instance::Instance;

#[derive(Debug, Clone, PartialEq)]
pub struct PwlaGrid {
    pub k: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub delta: Vec<f64>,
    /// `f_j` at the breakpoints `l_j + k delta_j`, `k = 0..=K`.
    pub f_values: Vec<Vec<f64>>,
    pub g_values: Vec<Vec<f64>>,
    pub gamma_f: Vec<Vec<f64>>,
    pub gamma_g: Vec<Vec<f64>>,
    /// Number of leading segments lying where `f_j` is concave (`r <= 2 b_j`).
    pub concavity_cutoff: Vec<usize>,
}

impl PwlaGrid {
    pub fn build(instance: &Instance, k: usize) -> Result<PwlaGrid> {
        if k == 0 {
            return Err(Error::InvalidArgument("K must be at least 1".into()));
        }
        let n = instance.n();
        let mnl = &instance.mnl;
        let mut grid = PwlaGrid {
            k,
            lower: instance.l.clone(),
            upper: instance.u.clone(),
            delta: Vec::with_capacity(n),
            f_values: Vec::with_capacity(n),
            g_values: Vec::with_capacity(n),
            gamma_f: Vec::with_capacity(n),
            gamma_g: Vec::with_capacity(n),
            concavity_cutoff: Vec::with_capacity(n),
        };
        for j in 0..n {
            let (l, u) = (instance.l[j], instance.u[j]);
            let delta = (u - l) / k as f64;
            let points: Vec<f64> = (0..=k).map(|s| if s == k { u } else { l + s as f64 * delta }).collect();
            let fv: Vec<f64> = points.iter().map(|&r| mnl.f(j, r)).collect();
            let gv: Vec<f64> = points.iter().map(|&r| mnl.g(j, r)).collect();
            let slopes = |v: &[f64]| -> Vec<f64> {
                (0..k).map(|s| if delta > 0.0 { (v[s + 1] - v[s]) / delta } else { 0.0 }).collect()
            };
            grid.gamma_f.push(slopes(&fv));
            grid.gamma_g.push(slopes(&gv));
            grid.f_values.push(fv);
            grid.g_values.push(gv);
            grid.concavity_cutoff.push(concavity_cutoff(mnl.b[j], l, delta, k));
            grid.delta.push(delta);
        }
        Ok(grid)
    }

    pub fn n(&self) -> usize {
        self.delta.len()
    }

    pub fn f_anchor(&self, j: usize) -> f64 {
        self.f_values[j][0]
    }

    pub fn g_anchor(&self, j: usize) -> f64 {
        self.g_values[j][0]
    }

    pub fn breakpoints(&self, j: usize) -> Vec<f64> {
        (0..=self.k)
            .map(|s| if s == self.k { self.upper[j] } else { self.lower[j] + s as f64 * self.delta[j] })
            .collect()
    }

    /// Segment index and offset from its left breakpoint. Segments are
    /// left-closed and `r = u_j` belongs to the last one.
    pub fn segment(&self, j: usize, r: f64) -> Result<(usize, f64)> {
        let (l, u) = (self.lower[j], self.upper[j]);
        if !(r >= l && r <= u) {
            return Err(Error::PriceOutOfRange(format!("r = {r} outside [{l}, {u}] for product {j}")));
        }
        if self.delta[j] == 0.0 {
            return Ok((0, 0.0));
        }
        let s = (((r - l) / self.delta[j]).floor() as usize).min(self.k - 1);
        Ok((s, r - (l + s as f64 * self.delta[j])))
    }

    pub fn eval_fhat(&self, j: usize, r: f64) -> Result<f64> {
        let (s, t) = self.segment(j, r)?;
        Ok(self.f_values[j][s] + self.gamma_f[j][s] * t)
    }

    pub fn eval_ghat(&self, j: usize, r: f64) -> Result<f64> {
        let (s, t) = self.segment(j, r)?;
        Ok(self.g_values[j][s] + self.gamma_g[j][s] * t)
    }

    /// `F_hat(r) = sum_j (fhat_j - kappa_j ghat_j) / (1 + sum_j ghat_j)`, with
    /// null prices and `offered = false` products contributing nothing.
    pub fn eval_objective(&self, r: &[f64], kappa: Option<&[f64]>) -> Result<f64> {
        let mut num = 0.0;
        let mut den = 1.0;
        for (j, &rj) in r.iter().enumerate() {
            if crate::mnl::is_null(rj) {
                continue;
            }
            let g = self.eval_ghat(j, rj)?;
            num += self.eval_fhat(j, rj)? - kappa.map_or(0.0, |k| k[j]) * g;
            den += g;
        }
        Ok(num / den)
    }

    /// `psi_hat_i(r) = sum_j (s a_ij - c_i) ghat_j(r_j)`.
    pub fn eval_resource(&self, instance: &Instance, capacity: &[f64], scale: f64, r: &[f64]) -> Result<Vec<f64>> {
        let mut gh = vec![0.0; r.len()];
        for (j, &rj) in r.iter().enumerate() {
            if !crate::mnl::is_null(rj) {
                gh[j] = self.eval_ghat(j, rj)?;
            }
        }
        Ok(instance
            .a_mat
            .iter()
            .zip(capacity)
            .map(|(row, &ci)| row.iter().zip(&gh).map(|(aij, g)| (scale * aij - ci) * g).sum())
            .collect())
    }
}

/// Count of leading segments inside `f`'s concave region `r <= 2b`.
pub fn concavity_cutoff(b: f64, l: f64, delta: f64, k: usize) -> usize {
    if delta <= 0.0 {
        return k;
    }
    let raw = ((2.0 * b - l) / delta).floor();
    if raw <= 0.0 {
        0
    } else {
        (raw as usize).min(k)
    }
}

/// Interpolation error constants. `omega / K` bounds the objective gap and
/// `eta_i / K` the gap of resource row `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorConstants {
    pub alpha: f64,
    pub beta: f64,
    pub omega: f64,
    pub eta: Vec<f64>,
    pub r_u: f64,
}

impl ErrorConstants {
    pub fn omega_bound(&self, k: usize) -> f64 {
        self.omega / k as f64
    }

    pub fn eta_max(&self) -> f64 {
        self.eta.iter().cloned().fold(0.0, f64::max)
    }
}

pub fn error_constants(instance: &Instance, k: usize) -> ErrorConstants {
    let _ = k;
    error_constants_scaled(instance, &instance.capacities_f64(), 1.0)
}

/// Constants for the problem whose objective and consumption are scaled by
/// `scale` and whose capacities are `capacity`.
pub fn error_constants_scaled(instance: &Instance, capacity: &[f64], scale: f64) -> ErrorConstants {
    let mnl = &instance.mnl;
    let n = instance.n();
    let (mut alpha, mut beta, mut tail) = (0.0, 0.0, 0.0);
    let mut lip_g = vec![0.0; n];
    for j in 0..n {
        let (l, u, b) = (instance.l[j], instance.u[j], mnl.b[j]);
        let head = ((mnl.a[j] - l) / b).exp();
        alpha += head * (1.0 + u / b) * (u - l);
        lip_g[j] = head / b * (u - l);
        beta += lip_g[j];
        tail += ((mnl.a[j] - u) / b).exp();
    }
    let r_u = instance.u.iter().cloned().fold(0.0, f64::max);
    let omega = scale * (alpha + beta * r_u) / (1.0 + tail);
    let eta = instance
        .a_mat
        .iter()
        .zip(capacity)
        .map(|(row, &ci)| row.iter().zip(&lip_g).map(|(aij, lg)| (scale * aij - ci).abs() * lg).sum())
        .collect();
    ErrorConstants { alpha, beta, omega, eta, r_u }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::tests::toy;
    use proptest::prelude::*;

    #[test]
    fn breakpoints_and_slopes() {
        let grid = PwlaGrid::build(&toy(0.0, 1.0, 1e-300, 10.0), 5).unwrap();
        let bp = grid.breakpoints(0);
        for (got, want) in bp.iter().zip([0.0, 2.0, 4.0, 6.0, 8.0, 10.0]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!((grid.gamma_g[0][0] - ((-2.0f64).exp() - 1.0) / 2.0).abs() < 1e-12);
        assert!((grid.gamma_g[0][0] + 0.432332).abs() < 1e-6);
        let gh = grid.eval_ghat(0, 1.0).unwrap();
        assert!((gh - (1.0 + (-2.0f64).exp()) / 2.0).abs() < 1e-12);
        assert!(gh >= (-1.0f64).exp());
    }

    #[test]
    fn cutoff_arithmetic() {
        assert_eq!(concavity_cutoff(50.0, 0.0, 10.0, 30), 10);
        assert_eq!(concavity_cutoff(50.0, 0.0, 10.0, 5), 5);
        assert_eq!(concavity_cutoff(50.0, 150.0, 10.0, 30), 0);
        assert_eq!(concavity_cutoff(100.0, 120.0, 10.0, 30), 8);
    }

    #[test]
    fn anchors_and_endpoints() {
        let inst = Instance::generate(4, 2, 10, 3, 9).unwrap();
        let grid = PwlaGrid::build(&inst, 7).unwrap();
        for j in 0..4 {
            assert_eq!(grid.eval_fhat(j, inst.l[j]).unwrap(), inst.mnl.f(j, inst.l[j]));
            assert_eq!(grid.eval_ghat(j, inst.l[j]).unwrap(), inst.mnl.g(j, inst.l[j]));
            assert!((grid.eval_fhat(j, inst.u[j]).unwrap() - inst.mnl.f(j, inst.u[j])).abs() < 1e-9);
            for (s, &p) in grid.breakpoints(j).iter().enumerate() {
                assert!((grid.eval_fhat(j, p).unwrap() - grid.f_values[j][s]).abs() < 1e-12);
            }
            assert!(grid.eval_fhat(j, inst.u[j] + 1e-6).is_err());
            assert!(grid.eval_ghat(j, inst.l[j] - 1e-6).is_err());
        }
        assert!(PwlaGrid::build(&inst, 0).is_err());
    }

    #[test]
    fn slope_monotonicity() {
        // slope of g strictly increases; slope of f decreases while f is
        // concave and increases once it is convex
        let inst = toy(0.0, 1.0, 1e-9, 10.0);
        let grid = PwlaGrid::build(&inst, 5).unwrap();
        let gf = &grid.gamma_f[0];
        assert!(gf[0] > gf[1]);
        assert!(gf[1] < gf[2] && gf[2] < gf[3] && gf[3] < gf[4]);
        for seed in 0..20 {
            let inst = Instance::generate(6, 1, 1, 1, seed).unwrap();
            let mut wide = inst.clone();
            wide.l = vec![1.0; 6];
            for k in [3usize, 8, 20] {
                for g in [PwlaGrid::build(&inst, k).unwrap(), PwlaGrid::build(&wide, k).unwrap()] {
                    for j in 0..6 {
                        let gg = &g.gamma_g[j];
                        for s in 0..k - 1 {
                            assert!(gg[s] < gg[s + 1]);
                        }
                        let gf = &g.gamma_f[j];
                        let cut = g.concavity_cutoff[j];
                        for s in 0..k - 1 {
                            if s + 2 <= cut {
                                assert!(gf[s] >= gf[s + 1] - 1e-15);
                            }
                            let left = g.lower[j] + s as f64 * g.delta[j];
                            if left >= 2.0 * wide.mnl.b[j] {
                                assert!(gf[s] <= gf[s + 1] + 1e-15);
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn constants_examples() {
        let mut inst = toy(10.0, 5.0, 100.0, 150.0);
        inst.a_mat = vec![vec![1.0]];
        let ec = error_constants_scaled(&inst, &[0.5], 1.0);
        let want = 0.5 * (-18.0f64).exp() / 5.0 * 50.0;
        assert!((ec.eta[0] - want).abs() < 1e-20);
        assert!((ec.eta[0] - 7.61e-8).abs() < 1e-10);
        let ec = error_constants_scaled(&inst, &[1.0], 1.0);
        assert_eq!(ec.eta[0], 0.0);
        let mut flat = toy(10.0, 5.0, 100.0, 100.0);
        flat.a_mat = vec![vec![1.0]];
        let ec = error_constants_scaled(&flat, &[0.5], 1.0);
        assert_eq!((ec.alpha, ec.beta, ec.omega, ec.eta[0]), (0.0, 0.0, 0.0, 0.0));
        let rand = Instance::generate(5, 3, 10, 2, 4).unwrap();
        let ec = error_constants(&rand, 15);
        assert!(ec.alpha >= 0.0 && ec.beta >= 0.0 && ec.omega >= 0.0);
        assert!(ec.eta.iter().all(|&e| e >= 0.0));
        assert_eq!(ec.r_u, rand.u.iter().cloned().fold(0.0, f64::max));
    }

    fn wide_instance(seed: u64) -> Instance {
        let mut inst = Instance::generate(3, 2, 1, 1, seed).unwrap();
        // wider boxes reaching into the region where exponents are large
        for j in 0..3 {
            inst.l[j] = 1.0 + 5.0 * j as f64;
        }
        inst
    }

    proptest! {
        #[test]
        fn interpolant_envelope(seed in 0u64..500, k in 1usize..40, t in prop::collection::vec(0.0f64..=1.0, 3)) {
            let inst = wide_instance(seed);
            let grid = PwlaGrid::build(&inst, k).unwrap();
            for j in 0..3 {
                let r = inst.l[j] + t[j] * (inst.u[j] - inst.l[j]);
                let g = inst.mnl.g(j, r);
                let gh = grid.eval_ghat(j, r).unwrap();
                prop_assert!(gh >= g - 1e-15 * g.abs().max(1.0));
                let (s, _) = grid.segment(j, r).unwrap();
                let f = inst.mnl.f(j, r);
                let fh = grid.eval_fhat(j, r).unwrap();
                let env = (grid.f_values[j][s] - f).abs().max((grid.f_values[j][s + 1] - f).abs());
                prop_assert!((fh - f).abs() <= env + 1e-12);
            }
        }

        #[test]
        fn sampled_gaps_within_bounds(seed in 0u64..500, k in 1usize..30, t in prop::collection::vec(0.0f64..=1.0, 3)) {
            let inst = wide_instance(seed);
            let grid = PwlaGrid::build(&inst, k).unwrap();
            let cap = inst.capacities_f64();
            let ec = error_constants(&inst, k);
            let r: Vec<f64> = (0..3).map(|j| inst.l[j] + t[j] * (inst.u[j] - inst.l[j])).collect();
            let f = inst.mnl.expected_revenue(&r).unwrap();
            let fh = grid.eval_objective(&r, None).unwrap();
            prop_assert!((f - fh).abs() <= ec.omega / k as f64 + 1e-9);
            let psi = inst.mnl.resource_lhs(&inst.a_mat, &cap, &r).unwrap();
            let psih = grid.eval_resource(&inst, &cap, 1.0, &r).unwrap();
            for i in 0..psi.len() {
                prop_assert!((psi[i] - psih[i]).abs() <= ec.eta[i] / k as f64 + 1e-9);
            }
        }

        #[test]
        fn refining_grid_shrinks_gap(seed in 0u64..200, k in 1usize..20) {
            let inst = wide_instance(seed);
            let coarse = PwlaGrid::build(&inst, k).unwrap();
            let fine = PwlaGrid::build(&inst, 2 * k).unwrap();
            let mut worst = (0.0f64, 0.0f64);
            for s in 0..=200 {
                let t = s as f64 / 200.0;
                for j in 0..3 {
                    let r = inst.l[j] + t * (inst.u[j] - inst.l[j]);
                    let g = inst.mnl.g(j, r);
                    worst.0 = worst.0.max(coarse.eval_ghat(j, r).unwrap() - g);
                    worst.1 = worst.1.max(fine.eval_ghat(j, r).unwrap() - g);
                }
            }
            prop_assert!(worst.1 <= worst.0 + 1e-15);
        }
    }
}
