use serde::{Deserialize, Serialize};

use super::{check_shoes, exposure, Method, RegionFit};
use crate::error::Result;
use crate::shoe_data::ShoeRecord;

/// `λ̂_j = |m_j|⁻¹ Σ_{i∈m_j} n_ij / S_ij` over the shoes touching region `j`,
/// with the plug-in variance attached.
pub fn naive_region(shoes: &[ShoeRecord]) -> Result<RegionFit> {
    let j = check_shoes(shoes)?;
    let mut sum = vec![0.0; j];
    let mut touched = vec![0usize; j];
    for s in shoes {
        for k in 0..j {
            if s.s_area[k] > 0.0 {
                sum[k] += f64::from(s.counts[k]) / s.s_area[k];
                touched[k] += 1;
            }
        }
    }
    let lambda: Vec<f64> = sum
        .iter()
        .zip(&touched)
        .map(|(&s, &m)| if m > 0 { s / m as f64 } else { f64::NAN })
        .collect();
    let mut fit = RegionFit::new(Method::Naive, lambda, exposure(shoes, j));
    let nv = var_naive(shoes, &fit.lambda_hat)?;
    fit.variance = Some(nv.variance);
    fit.var_a_hat = Some(nv.var_a_hat);
    fit.var_a_clamped = nv.clamped;
    if nv.clamped {
        fit.warnings
            .push("moment estimate of Var(a) was negative and has been set to 0".into());
    }
    if touched.contains(&0) {
        fit.warnings
            .push(format!("{} regions have no contact in any shoe", touched.iter().filter(|&&m| m == 0).count()));
    }
    Ok(fit)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveVariance {
    pub variance: Vec<f64>,
    pub var_a_hat: f64,
    /// The raw moment estimate was negative.
    pub clamped: bool,
    /// `Û_i`, NaN for shoes without contact.
    pub u_hat: Vec<f64>,
}

/// Moment estimate of `Var(a)` from `Û_i = (N_i² − N_i)/(Σ_j λ̂_j S_ij)²`,
/// and `Var(λ̂_j) = λ̂_j² Var(a)/|m_j| + λ̂_j |m_j|⁻² Σ_{i∈m_j} 1/S_ij`.
pub fn var_naive(shoes: &[ShoeRecord], lambda_hat: &[f64]) -> Result<NaiveVariance> {
    let j = check_shoes(shoes)?;
    if lambda_hat.len() != j {
        return Err(crate::Error::invalid(format!(
            "{} intensities for {j} regions",
            lambda_hat.len()
        )));
    }
    let u_hat: Vec<f64> = shoes
        .iter()
        .map(|s| {
            let mu: f64 = s
                .s_area
                .iter()
                .zip(lambda_hat)
                .filter(|(&a, l)| a > 0.0 && l.is_finite())
                .map(|(a, l)| a * l)
                .sum();
            let n = s.total as f64;
            if mu > 0.0 {
                (n * n - n) / (mu * mu)
            } else {
                f64::NAN
            }
        })
        .collect();
    let valid: Vec<f64> = u_hat.iter().copied().filter(|u| u.is_finite()).collect();
    let raw = if valid.is_empty() {
        0.0
    } else {
        valid.iter().sum::<f64>() / valid.len() as f64 - 1.0
    };
    let clamped = raw < 0.0;
    let var_a = raw.max(0.0);
    let variance = (0..j)
        .map(|k| {
            let l = lambda_hat[k];
            let inv: Vec<f64> = shoes
                .iter()
                .filter(|s| s.s_area[k] > 0.0)
                .map(|s| 1.0 / s.s_area[k])
                .collect();
            if inv.is_empty() || !l.is_finite() {
                return f64::NAN;
            }
            let m = inv.len() as f64;
            l * l * var_a / m + l * inv.iter().sum::<f64>() / (m * m)
        })
        .collect();
    Ok(NaiveVariance {
        variance,
        var_a_hat: var_a,
        clamped,
        u_hat,
    })
}
