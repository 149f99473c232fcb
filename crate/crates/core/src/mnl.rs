//! Multinomial-logit choice model.
//!
//! Product `j` has utility `(a_j - r_j) / b_j` and the no-purchase option has
//! utility zero. A price of `f64::INFINITY` is the null price: the product is
//! withdrawn and its purchase probability is exactly zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Null price sentinel.
pub const NULL_PRICE: f64 = f64::INFINITY;

#[inline]
pub fn is_null(r: f64) -> bool {
    r == f64::INFINITY
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MnlModel {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl MnlModel {
    pub fn new(a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        let model = Self { a, b };
        model.validate()?;
        Ok(model)
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.a.len() != self.b.len() {
            return Err(Error::Dimension(format!(
                "a has {} entries but b has {}",
                self.a.len(),
                self.b.len()
            )));
        }
        for (j, &bj) in self.b.iter().enumerate() {
            if !bj.is_finite() || bj <= 0.0 {
                return Err(Error::InvalidInstance(format!("b[{j}] = {bj} must be positive")));
            }
        }
        Ok(())
    }

    fn check_prices(&self, r: &[f64]) -> Result<()> {
        if r.len() != self.n() {
            return Err(Error::Dimension(format!(
                "price vector has {} entries, model has {} products",
                r.len(),
                self.n()
            )));
        }
        for (j, &rj) in r.iter().enumerate() {
            if rj.is_nan() || rj == f64::NEG_INFINITY {
                return Err(Error::Dimension(format!("price r[{j}] = {rj} is not a valid price")));
            }
        }
        self.validate()
    }

    /// `g_j(r) = exp((a_j - r) / b_j)`, zero at the null price.
    #[inline]
    pub fn g(&self, j: usize, r: f64) -> f64 {
        if is_null(r) {
            0.0
        } else {
            ((self.a[j] - r) / self.b[j]).exp()
        }
    }

    /// `f_j(r) = r g_j(r)`.
    #[inline]
    pub fn f(&self, j: usize, r: f64) -> f64 {
        if is_null(r) {
            0.0
        } else {
            r * self.g(j, r)
        }
    }

    /// Purchase probabilities, index 0 is the no-purchase option.
    pub fn choice_probabilities(&self, r: &[f64]) -> Result<Vec<f64>> {
        self.check_prices(r)?;
        Ok(self.probabilities_unchecked(r))
    }

    pub(crate) fn probabilities_unchecked(&self, r: &[f64]) -> Vec<f64> {
        let n = self.n();
        // shift by the largest utility so no exponent is positive
        let mut vmax = 0.0f64;
        for j in 0..n {
            if !is_null(r[j]) {
                vmax = vmax.max((self.a[j] - r[j]) / self.b[j]);
            }
        }
        let mut p = vec![0.0; n + 1];
        p[0] = (-vmax).exp();
        let mut total = p[0];
        for j in 0..n {
            if !is_null(r[j]) {
                let e = ((self.a[j] - r[j]) / self.b[j] - vmax).exp();
                p[j + 1] = e;
                total += e;
            }
        }
        for x in p.iter_mut() {
            *x /= total;
        }
        p
    }

    pub fn expected_revenue(&self, r: &[f64]) -> Result<f64> {
        let p = self.choice_probabilities(r)?;
        Ok(revenue_from(&p, r, None))
    }

    /// Revenue net of per-product margin costs, `sum_j P_j (r_j - kappa_j)`.
    pub fn expected_margin(&self, r: &[f64], kappa: &[f64]) -> Result<f64> {
        let p = self.choice_probabilities(r)?;
        Ok(revenue_from(&p, r, Some(kappa)))
    }

    /// Analytic gradient of `scale * sum_j P_j (r_j - kappa_j)` in `r`.
    pub fn margin_gradient(&self, r: &[f64], kappa: &[f64], scale: f64) -> Result<Vec<f64>> {
        let p = self.choice_probabilities(r)?;
        let value = revenue_from(&p, r, Some(kappa));
        Ok((0..self.n())
            .map(|j| {
                if is_null(r[j]) {
                    0.0
                } else {
                    scale * p[j + 1] * (1.0 - (r[j] - kappa[j] - value) / self.b[j])
                }
            })
            .collect())
    }

    /// `psi_i(r) = sum_j (s a_ij - c_i) g_j(r_j)`; `psi_i <= c_i` iff `s (A P)_i <= c_i`.
    pub fn resource_lhs_scaled(&self, a_mat: &[Vec<f64>], c: &[f64], scale: f64, r: &[f64]) -> Result<Vec<f64>> {
        self.check_prices(r)?;
        if a_mat.len() != c.len() {
            return Err(Error::Dimension(format!(
                "A has {} rows but c has {} entries",
                a_mat.len(),
                c.len()
            )));
        }
        let g: Vec<f64> = (0..self.n()).map(|j| self.g(j, r[j])).collect();
        a_mat
            .iter()
            .zip(c)
            .enumerate()
            .map(|(i, (row, &ci))| {
                if row.len() != self.n() {
                    return Err(Error::Dimension(format!("A row {i} has {} entries", row.len())));
                }
                Ok(row.iter().zip(&g).map(|(&aij, &gj)| (scale * aij - ci) * gj).sum())
            })
            .collect()
    }

    pub fn resource_lhs(&self, a_mat: &[Vec<f64>], c: &[f64], r: &[f64]) -> Result<Vec<f64>> {
        self.resource_lhs_scaled(a_mat, c, 1.0, r)
    }
}

fn revenue_from(p: &[f64], r: &[f64], kappa: Option<&[f64]>) -> f64 {
    let mut total = 0.0;
    for (j, &rj) in r.iter().enumerate() {
        if !is_null(rj) {
            let margin = rj - kappa.map_or(0.0, |k| k[j]);
            total += p[j + 1] * margin;
        }
    }
    total
}

pub fn choice_probabilities(model: &MnlModel, r: &[f64]) -> Result<Vec<f64>> {
    model.choice_probabilities(r)
}

pub fn expected_revenue(model: &MnlModel, r: &[f64]) -> Result<f64> {
    model.expected_revenue(r)
}

pub fn resource_lhs(model: &MnlModel, a_mat: &[Vec<f64>], c: &[f64], r: &[f64]) -> Result<Vec<f64>> {
    model.resource_lhs(a_mat, c, r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one(a: f64, b: f64) -> MnlModel {
        MnlModel::new(vec![a], vec![b]).unwrap()
    }

    #[test]
    fn symmetric_cases() {
        let p = one(0.0, 1.0).choice_probabilities(&[0.0]).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15);
        let m = MnlModel::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        for x in m.choice_probabilities(&[0.0, 0.0]).unwrap() {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn single_product_value() {
        let m = one(10.0, 5.0);
        let e = (-1.0f64).exp();
        let p = m.choice_probabilities(&[15.0]).unwrap();
        assert!((p[1] - e / (1.0 + e)).abs() < 1e-15);
        assert!((p[1] - 0.268941).abs() < 1e-6);
        let rev = m.expected_revenue(&[15.0]).unwrap();
        assert!((rev - 15.0 * e / (1.0 + e)).abs() < 1e-13);
        assert!((rev - 4.034117).abs() < 1e-5);
    }

    #[test]
    fn null_price_is_exact_zero() {
        let m = MnlModel::new(vec![10.0, 50.0], vec![5.0, 20.0]).unwrap();
        let p = m.choice_probabilities(&[NULL_PRICE, 120.0]).unwrap();
        assert_eq!(p[1], 0.0);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(one(10.0, 5.0).expected_revenue(&[NULL_PRICE]).unwrap(), 0.0);
        let all_null = m.choice_probabilities(&[NULL_PRICE, NULL_PRICE]).unwrap();
        assert_eq!(all_null, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn zero_prices_give_zero_revenue() {
        let m = MnlModel::new(vec![10.0, 50.0, 3.0], vec![5.0, 20.0, 1.0]).unwrap();
        assert_eq!(m.expected_revenue(&[0.0; 3]).unwrap(), 0.0);
    }

    #[test]
    fn errors() {
        assert!(MnlModel::new(vec![1.0], vec![0.0]).is_err());
        assert!(MnlModel::new(vec![1.0, 2.0], vec![1.0]).is_err());
        let m = one(1.0, 1.0);
        assert!(m.choice_probabilities(&[1.0, 2.0]).is_err());
        assert!(m.choice_probabilities(&[f64::NAN]).is_err());
        let bad = MnlModel { a: vec![1.0], b: vec![-1.0] };
        assert!(bad.choice_probabilities(&[1.0]).is_err());
    }

    #[test]
    fn resource_lhs_examples() {
        let m = one(10.0, 5.0);
        let e = (-1.0f64).exp();
        let psi = m.resource_lhs(&[vec![1.0]], &[0.2], &[15.0]).unwrap();
        assert!((psi[0] - 0.8 * e).abs() < 1e-15);
        assert!(psi[0] > 0.2);
        let psi = m.resource_lhs(&[vec![1.0]], &[0.5], &[15.0]).unwrap();
        assert!((psi[0] - 0.5 * e).abs() < 1e-15);
        assert!(psi[0] <= 0.5);
        let m3 = MnlModel::new(vec![10.0, 20.0, 30.0], vec![5.0, 6.0, 7.0]).unwrap();
        let r = [12.0, 25.0, 31.0];
        let psi = m3.resource_lhs(&[vec![0.0; 3]], &[2.0], &r).unwrap();
        let gsum: f64 = (0..3).map(|j| m3.g(j, r[j])).sum();
        assert!((psi[0] + 2.0 * gsum).abs() < 1e-14);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let m = MnlModel::new(vec![40.0, 70.0, 20.0], vec![10.0, 35.0, 4.0]).unwrap();
        let r = [60.0, 90.0, 25.0];
        let kappa = [3.0, 0.0, 7.5];
        let grad = m.margin_gradient(&r, &kappa, 2.0).unwrap();
        for j in 0..3 {
            let h = 1e-5;
            let mut up = r;
            up[j] += h;
            let mut dn = r;
            dn[j] -= h;
            let fd = 2.0 * (m.expected_margin(&up, &kappa).unwrap() - m.expected_margin(&dn, &kappa).unwrap()) / (2.0 * h);
            assert!((fd - grad[j]).abs() < 1e-7, "j={j} fd={fd} g={}", grad[j]);
        }
    }

    fn model_and_prices() -> impl Strategy<Value = (MnlModel, Vec<f64>)> {
        (1usize..6).prop_flat_map(|n| {
            (
                prop::collection::vec(-50.0f64..150.0, n),
                prop::collection::vec(0.5f64..100.0, n),
                prop::collection::vec(0.0f64..400.0, n),
            )
                .prop_map(|(a, b, r)| (MnlModel { a, b }, r))
        })
    }

    proptest! {
        #[test]
        fn probabilities_form_a_distribution((m, r) in model_and_prices()) {
            let p = m.choice_probabilities(&r).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
        }

        #[test]
        fn raising_a_price_shifts_demand((m, r) in model_and_prices(), pick in 0usize..6, bump in 0.5f64..20.0) {
            let j = pick % m.n();
            let p = m.choice_probabilities(&r).unwrap();
            let mut r2 = r.clone();
            r2[j] += bump;
            let q = m.choice_probabilities(&r2).unwrap();
            // probabilities in either tail can round to the same value
            if p[j + 1] > 1e-12 && p[j + 1] < 1.0 - 1e-9 {
                prop_assert!(q[j + 1] < p[j + 1]);
                for k in 0..m.n() {
                    if k != j && p[k + 1] > 1e-12 && p[j + 1] > 1e-9 {
                        prop_assert!(q[k + 1] > p[k + 1]);
                    }
                }
            }
        }

        #[test]
        fn revenue_bounded_by_max_price((m, r) in model_and_prices()) {
            let rev = m.expected_revenue(&r).unwrap();
            let top = r.iter().cloned().fold(0.0, f64::max);
            prop_assert!(rev >= 0.0);
            prop_assert!(rev <= top + 1e-12);
        }

        #[test]
        fn psi_sign_matches_direct_check((m, r) in model_and_prices(),
                                         seed_rows in prop::collection::vec(prop::collection::vec(0u8..2, 6), 1..4),
                                         cap in prop::collection::vec(0.01f64..1.0, 4)) {
            let n = m.n();
            let a_mat: Vec<Vec<f64>> = seed_rows.iter().map(|row| row[..n].iter().map(|&x| x as f64).collect()).collect();
            let c = &cap[..a_mat.len()];
            let psi = m.resource_lhs(&a_mat, c, &r).unwrap();
            let p = m.choice_probabilities(&r).unwrap();
            for (i, row) in a_mat.iter().enumerate() {
                let direct: f64 = row.iter().enumerate().map(|(j, &aij)| aij * p[j + 1]).sum();
                // skip knife-edge cases where rounding could flip the comparison
                if (direct - c[i]).abs() > 1e-10 {
                    prop_assert_eq!(psi[i] <= c[i], direct <= c[i]);
                }
            }
        }
    }
}
