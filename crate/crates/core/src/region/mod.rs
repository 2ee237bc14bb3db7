//! Piecewise-constant intensity on a region partition.
//!
//! Counts follow `N_ij | a_i ~ Poisson(λ_j S_ij a_i)` with a shoe-level
//! wear factor of mean one. Three estimators are provided: the naive
//! per-shoe average, random-effects maximum likelihood under a gamma or
//! log-normal wear law, and conditional maximum likelihood given each
//! shoe's total.

mod cml;
mod naive;
mod re;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::shoe_data::ShoeRecord;

pub use cml::{
    cml_log_likelihood, cml_score, conditional_multinomial_probability, fit_cml_region, rescale_cml,
};
pub use naive::{naive_region, var_naive, NaiveVariance};
pub use re::{
    fit_re_region, gamma_marginal_log_likelihood, gamma_marginal_value_grad, lognormal_marginal_log_likelihood,
    lognormal_marginal_value_grad,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Naive,
    RandomEffects,
    Cml,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::Naive => "naive",
            Method::RandomEffects => "random_effects",
            Method::Cml => "cml",
        }
    }
}

/// Law of the wear factor in the random-effects fit; both have mean one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Prior {
    #[default]
    Gamma,
    Lognormal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    /// Upper bound only, for estimates on the zero boundary.
    #[serde(default)]
    pub one_sided: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionFit {
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<Prior>,
    /// NaN where no shoe has contact with the region.
    #[serde(with = "crate::nan_serde")]
    pub lambda_hat: Vec<f64>,
    /// Total contact area per region over all shoes.
    pub exposure: Vec<f64>,
    pub at_boundary: Vec<bool>,
    /// Per-region sampling variance of `lambda_hat`.
    #[serde(default, with = "crate::nan_serde::option")]
    pub variance: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub var_a_hat: Option<f64>,
    #[serde(default)]
    pub var_a_clamped: bool,
    #[serde(default)]
    pub reference_region: Option<usize>,
    #[serde(default)]
    pub rescale_constant: Option<f64>,
    #[serde(default)]
    pub log_likelihood: Option<f64>,
    #[serde(default)]
    pub iterations: Option<usize>,
    #[serde(default)]
    pub cis: Option<Vec<Interval>>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl RegionFit {
    fn new(method: Method, lambda_hat: Vec<f64>, exposure: Vec<f64>) -> Self {
        let at_boundary = lambda_hat.iter().map(|&l| l == 0.0).collect();
        Self {
            method,
            prior: None,
            lambda_hat,
            exposure,
            at_boundary,
            variance: None,
            covariance: None,
            var_a_hat: None,
            var_a_clamped: false,
            reference_region: None,
            rescale_constant: None,
            log_likelihood: None,
            iterations: None,
            cis: None,
            warnings: Vec::new(),
        }
    }

    pub fn cells(&self) -> usize {
        self.lambda_hat.len()
    }

    pub fn standard_errors(&self) -> Option<Vec<f64>> {
        self.variance
            .as_ref()
            .map(|v| v.iter().map(|x| x.max(0.0).sqrt()).collect())
    }
}

/// Validates a data set and returns the number of cells.
pub(crate) fn check_shoes(shoes: &[ShoeRecord]) -> Result<usize> {
    let first = shoes
        .first()
        .ok_or_else(|| Error::invalid("at least one shoe is required"))?;
    let j = first.cells();
    if let Some(bad) = shoes.iter().find(|s| s.cells() != j) {
        return Err(Error::invalid(format!(
            "shoe {} has {} cells, expected {j}",
            bad.shoe_id,
            bad.cells()
        )));
    }
    Ok(j)
}

pub(crate) fn exposure(shoes: &[ShoeRecord], j: usize) -> Vec<f64> {
    let mut e = vec![0.0; j];
    for s in shoes {
        for (a, b) in e.iter_mut().zip(&s.s_area) {
            *a += b;
        }
    }
    e
}

pub(crate) fn column_counts(shoes: &[ShoeRecord], j: usize) -> Vec<u64> {
    let mut n = vec![0u64; j];
    for s in shoes {
        for (a, &b) in n.iter_mut().zip(&s.counts) {
            *a += u64::from(b);
        }
    }
    n
}

pub fn z_quantile(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!("confidence level {level} outside (0, 1)")));
    }
    Ok(Normal::standard().inverse_cdf(0.5 + level / 2.0))
}

/// Normal intervals `λ̂ ± z·SE` floored at zero. Regions estimated at zero
/// get the exact one-sided Poisson bound `−ln(1−level)/Σ_i S_ij` instead.
pub fn region_ci(fit: &RegionFit, level: f64) -> Result<Vec<Interval>> {
    let z = z_quantile(level)?;
    let var = fit
        .variance
        .as_ref()
        .ok_or_else(|| Error::InvalidState(format!("{} fit has no variance", fit.method.label())))?;
    Ok(fit
        .lambda_hat
        .iter()
        .zip(var)
        .zip(&fit.exposure)
        .map(|((&l, &v), &e)| {
            if !l.is_finite() {
                Interval {
                    lo: f64::NAN,
                    hi: f64::NAN,
                    one_sided: false,
                }
            } else if l == 0.0 && e > 0.0 {
                Interval {
                    lo: 0.0,
                    hi: -(1.0 - level).ln() / e,
                    one_sided: true,
                }
            } else {
                let se = v.max(0.0).sqrt();
                Interval {
                    lo: (l - z * se).max(0.0),
                    hi: l + z * se,
                    one_sided: false,
                }
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ci_examples() {
        let mut fit = RegionFit::new(Method::Naive, vec![2.0, 0.0, f64::NAN], vec![1.0, 4.0, 0.0]);
        assert!(matches!(region_ci(&fit, 0.95), Err(Error::InvalidState(_))));
        fit.variance = Some(vec![0.0, 0.0, f64::NAN]);
        let ci = region_ci(&fit, 0.95).unwrap();
        assert_eq!((ci[0].lo, ci[0].hi), (2.0, 2.0));
        assert!(ci[1].one_sided);
        assert_relative_eq!(ci[1].hi, 20f64.ln() / 4.0, epsilon = 1e-14);
        assert!(ci[2].lo.is_nan());
        fit.variance = Some(vec![1.0, 0.0, 0.0]);
        let ci = region_ci(&fit, 0.95).unwrap();
        assert_relative_eq!(ci[0].hi, 2.0 + 1.959963984540054, epsilon = 1e-9);
        assert_relative_eq!(ci[0].lo, 2.0 - 1.959963984540054, epsilon = 1e-9);
        assert!(region_ci(&fit, 1.0).is_err());
    }

    #[test]
    fn fit_json_keeps_undefined_cells() {
        let mut fit = RegionFit::new(Method::Cml, vec![1.0, f64::NAN], vec![1.0, 0.0]);
        fit.variance = Some(vec![0.5, f64::NAN]);
        let json = serde_json::to_string(&fit).unwrap();
        let back: RegionFit = serde_json::from_str(&json).unwrap();
        assert!(back.lambda_hat[1].is_nan());
        assert!(back.variance.as_ref().unwrap()[1].is_nan());
        assert_eq!(back.lambda_hat[0], 1.0);
    }
}
