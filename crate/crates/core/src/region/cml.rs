use nalgebra::DMatrix;
use statrs::function::factorial::ln_factorial;

use super::{check_shoes, column_counts, exposure, Method, RegionFit};
use crate::error::{Error, Result};
use crate::optim::{maximize, Objective, OptimOptions};
use crate::shoe_data::ShoeRecord;

/// Multinomial log-likelihood given each shoe's total:
/// `Σ_i Σ_j n_ij [log λ_j + log S_ij − log Σ_l S_il λ_l]`. Cells with
/// `λ_j = 0` or NaN are excluded from the sums.
pub fn cml_log_likelihood(shoes: &[ShoeRecord], lambda: &[f64]) -> f64 {
    shoes
        .iter()
        .map(|s| {
            let denom: f64 = s
                .s_area
                .iter()
                .zip(lambda)
                .filter(|(_, l)| l.is_finite())
                .map(|(a, l)| a * l)
                .sum();
            s.counts
                .iter()
                .zip(&s.s_area)
                .zip(lambda)
                .filter(|((&n, _), _)| n > 0)
                .map(|((&n, &a), &l)| f64::from(n) * (l * a / denom).ln())
                .sum::<f64>()
        })
        .sum()
}

/// Score with respect to each `λ_j`: `n·_j/λ_j − Σ_i n_i S_ij / Σ_l S_il λ_l`.
pub fn cml_score(shoes: &[ShoeRecord], lambda: &[f64]) -> Vec<f64> {
    let j = lambda.len();
    let mut g = vec![0.0; j];
    for s in shoes {
        if s.total == 0 {
            continue;
        }
        let denom: f64 = s
            .s_area
            .iter()
            .zip(lambda)
            .filter(|(_, l)| l.is_finite())
            .map(|(a, l)| a * l)
            .sum();
        for k in 0..j {
            if !lambda[k].is_finite() || lambda[k] == 0.0 {
                continue;
            }
            g[k] += f64::from(s.counts[k]) / lambda[k] - s.total as f64 * s.s_area[k] / denom;
        }
    }
    g
}

/// `P(N_i1 = n_1, …, N_iJ = n_J | N_i = Σ n)` for one shoe.
pub fn conditional_multinomial_probability(s_area: &[f64], lambda: &[f64], counts: &[u32]) -> f64 {
    let mu: Vec<f64> = s_area.iter().zip(lambda).map(|(s, l)| s * l).collect();
    let total: f64 = mu.iter().sum();
    let n: u32 = counts.iter().sum();
    let mut log_p = ln_factorial(u64::from(n));
    for (&c, &m) in counts.iter().zip(&mu) {
        if c > 0 {
            log_p += f64::from(c) * (m / total).ln() - ln_factorial(u64::from(c));
        }
    }
    log_p.exp()
}

/// Parameters: `log λ` of the free regions other than the reference.
struct CmlObjective {
    s: Vec<Vec<f64>>,
    n: Vec<Vec<f64>>,
    total: Vec<f64>,
    /// Position of the reference region among the free regions.
    reference: usize,
}

impl CmlObjective {
    fn phi(&self, x: &[f64]) -> Vec<f64> {
        let mut phi = Vec::with_capacity(x.len() + 1);
        phi.extend_from_slice(&x[..self.reference]);
        phi.push(0.0);
        phi.extend_from_slice(&x[self.reference..]);
        phi
    }

    fn eval(&self, x: &[f64], want_hessian: bool) -> (f64, Vec<f64>, Option<DMatrix<f64>>) {
        let phi = self.phi(x);
        let lambda: Vec<f64> = phi.iter().map(|v| v.exp()).collect();
        let q = phi.len();
        let mut f = 0.0;
        let mut g = vec![0.0; q];
        let mut h = want_hessian.then(|| DMatrix::<f64>::zeros(q, q));
        for i in 0..self.s.len() {
            let nt = self.total[i];
            if nt == 0.0 {
                continue;
            }
            let mu: Vec<f64> = lambda.iter().zip(&self.s[i]).map(|(l, s)| l * s).collect();
            let denom: f64 = mu.iter().sum();
            let pi: Vec<f64> = mu.iter().map(|m| m / denom).collect();
            f += phi.iter().zip(&self.n[i]).map(|(p, c)| c * p).sum::<f64>() - nt * denom.ln();
            for k in 0..q {
                g[k] += self.n[i][k] - nt * pi[k];
            }
            if let Some(h) = h.as_mut() {
                for k in 0..q {
                    h[(k, k)] -= nt * pi[k];
                    for l in 0..q {
                        h[(k, l)] += nt * pi[k] * pi[l];
                    }
                }
            }
        }
        g.remove(self.reference);
        let h = h.map(|h| h.remove_row(self.reference).remove_column(self.reference));
        (f, g, h)
    }
}

impl Objective for CmlObjective {
    fn value(&self, x: &[f64]) -> f64 {
        self.eval(x, false).0
    }

    fn value_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let (f, g, _) = self.eval(x, false);
        (f, g)
    }

    fn hessian(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        self.eval(x, true).2
    }
}

/// Conditional maximum likelihood with `λ_ref = 1` for the first region
/// that has RACs. Regions without RACs are estimated at zero and flagged.
/// The returned fit is unscaled; see [`rescale_cml`].
pub fn fit_cml_region(shoes: &[ShoeRecord]) -> Result<RegionFit> {
    let j = check_shoes(shoes)?;
    let e = exposure(shoes, j);
    let ncol = column_counts(shoes, j);
    let free: Vec<usize> = (0..j).filter(|&k| e[k] > 0.0 && ncol[k] > 0).collect();
    let Some(&reference) = free.first() else {
        return Err(Error::invalid("no region has both contact and RACs"));
    };
    let used: Vec<&ShoeRecord> = shoes.iter().filter(|s| s.total > 0).collect();
    let obj = CmlObjective {
        s: used.iter().map(|s| free.iter().map(|&k| s.s_area[k]).collect()).collect(),
        n: used
            .iter()
            .map(|s| free.iter().map(|&k| f64::from(s.counts[k])).collect())
            .collect(),
        total: used.iter().map(|s| s.total as f64).collect(),
        reference: 0,
    };
    let base = (ncol[reference] as f64 / e[reference]).ln();
    let x0: Vec<f64> = free[1..]
        .iter()
        .map(|&k| (ncol[k] as f64 / e[k]).ln() - base)
        .collect();
    let mut lambda: Vec<f64> = e.iter().map(|&x| if x > 0.0 { 0.0 } else { f64::NAN }).collect();
    lambda[reference] = 1.0;
    let mut fit;
    if x0.is_empty() {
        fit = RegionFit::new(Method::Cml, lambda, e.clone());
        fit.covariance = Some(vec![vec![0.0; j]; j]);
        fit.log_likelihood = Some(obj.value(&[]));
        fit.iterations = Some(0);
    } else {
        let opts = OptimOptions {
            gtol: 1e-11,
            ..OptimOptions::default()
        };
        let opt = maximize(&obj, &x0, &opts)?;
        for (&k, v) in free[1..].iter().zip(&opt.x) {
            lambda[k] = v.exp();
        }
        let cov = opt.covariance()?;
        let mut full = vec![vec![0.0; j]; j];
        for (a, &ka) in free[1..].iter().enumerate() {
            for (b, &kb) in free[1..].iter().enumerate() {
                full[ka][kb] = lambda[ka] * lambda[kb] * cov[(a, b)];
            }
        }
        fit = RegionFit::new(Method::Cml, lambda, e.clone());
        fit.covariance = Some(full);
        fit.log_likelihood = Some(opt.value);
        fit.iterations = Some(opt.iterations);
    }
    let cov = fit.covariance.as_ref().expect("set above");
    fit.variance = Some(
        (0..j)
            .map(|k| if e[k] > 0.0 { cov[k][k] } else { f64::NAN })
            .collect(),
    );
    fit.reference_region = Some(reference);
    let zero = (0..j).filter(|&k| e[k] > 0.0 && ncol[k] == 0).count();
    if zero > 0 {
        fit.warnings
            .push(format!("{zero} regions without RACs are estimated at the zero boundary"));
    }
    Ok(fit)
}

/// Scales a CML fit so its mean over defined regions equals that of the
/// naive fit. The covariance is scaled by `c²`, treating `c` as fixed.
pub fn rescale_cml(fit: &RegionFit, reference: &RegionFit) -> Result<RegionFit> {
    if fit.cells() != reference.cells() {
        return Err(Error::invalid("fits have different numbers of regions"));
    }
    let defined: Vec<usize> = (0..fit.cells())
        .filter(|&k| fit.lambda_hat[k].is_finite() && reference.lambda_hat[k].is_finite())
        .collect();
    let mean = |v: &[f64]| defined.iter().map(|&k| v[k]).sum::<f64>() / defined.len() as f64;
    let (a, b) = (mean(&reference.lambda_hat), mean(&fit.lambda_hat));
    if defined.is_empty() || a == 0.0 || b == 0.0 || !a.is_finite() || !b.is_finite() {
        return Err(Error::invalid("cannot rescale: a fit has zero mean intensity"));
    }
    let c = a / b;
    let mut out = fit.clone();
    out.lambda_hat.iter_mut().for_each(|l| *l *= c);
    if let Some(v) = out.variance.as_mut() {
        v.iter_mut().for_each(|x| *x *= c * c);
    }
    if let Some(cov) = out.covariance.as_mut() {
        cov.iter_mut().flatten().for_each(|x| *x *= c * c);
    }
    out.cis = None;
    out.rescale_constant = Some(fit.rescale_constant.unwrap_or(1.0) * c);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::region::naive_region;
    use approx::assert_relative_eq;

    fn rec(id: &str, s: &[f64], n: &[u32]) -> ShoeRecord {
        ShoeRecord::new(id, s.to_vec(), n.to_vec()).unwrap()
    }

    #[test]
    fn symmetric_two_region_problem() {
        let shoes = [rec("a", &[1.0, 1.0], &[1, 1]), rec("b", &[1.0, 1.0], &[2, 2])];
        let fit = fit_cml_region(&shoes).unwrap();
        assert_eq!(fit.lambda_hat[0], 1.0);
        assert_relative_eq!(fit.lambda_hat[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn grid_search_oracle() {
        let shoes = [rec("a", &[1.0, 1.0], &[1, 0]), rec("b", &[1.0, 2.0], &[0, 2])];
        let fit = fit_cml_region(&shoes).unwrap();
        let mut best = (f64::NEG_INFINITY, 0.0);
        let mut r = 1e-4;
        while r < 20.0 {
            let ll = cml_log_likelihood(&shoes, &[1.0, r]);
            if ll > best.0 {
                best = (ll, r);
            }
            r += 1e-4;
        }
        assert!((fit.lambda_hat[1] - best.1).abs() < 1e-3, "{} vs {}", fit.lambda_hat[1], best.1);
    }

    #[test]
    fn scale_invariance_of_likelihood() {
        let shoes = [rec("a", &[0.4, 1.0, 0.3], &[1, 4, 2]), rec("b", &[1.0, 2.0, 0.7], &[3, 2, 0])];
        let l = [0.7, 2.3, 1.1];
        for c in [0.01, 0.5, 3.0, 1e4] {
            let scaled: Vec<f64> = l.iter().map(|x| x * c).collect();
            assert_relative_eq!(
                cml_log_likelihood(&shoes, &l),
                cml_log_likelihood(&shoes, &scaled),
                epsilon = 1e-10
            );
        }
    }

    #[test]
    fn score_vanishes_at_optimum() {
        let shoes = [
            rec("a", &[0.4, 1.0, 0.3], &[1, 4, 2]),
            rec("b", &[1.0, 2.0, 0.7], &[3, 2, 0]),
            rec("c", &[0.2, 0.5, 0.9], &[0, 1, 3]),
        ];
        let fit = fit_cml_region(&shoes).unwrap();
        let g = cml_score(&shoes, &fit.lambda_hat);
        assert!(g.iter().all(|x| x.abs() < 1e-8), "{g:?}");
    }

    #[test]
    fn multinomial_matches_poisson_enumeration() {
        let s = [0.5, 1.2, 0.8];
        let l = [2.0, 0.7, 1.5];
        let mu: Vec<f64> = s.iter().zip(&l).map(|(a, b)| a * b).collect();
        let pois = |k: u32, m: f64| (-m + f64::from(k) * m.ln() - ln_factorial(u64::from(k))).exp();
        for n in 0..=4u32 {
            let mut joint = Vec::new();
            for a in 0..=n {
                for b in 0..=n - a {
                    let c = n - a - b;
                    joint.push(([a, b, c], pois(a, mu[0]) * pois(b, mu[1]) * pois(c, mu[2])));
                }
            }
            let total: f64 = joint.iter().map(|x| x.1).sum();
            for (counts, p) in joint {
                assert_relative_eq!(
                    conditional_multinomial_probability(&s, &l, &counts),
                    p / total,
                    max_relative = 1e-12
                );
            }
        }
    }

    #[test]
    fn rescale_examples() {
        let shoes = [rec("a", &[1.0, 1.0], &[1, 3]), rec("b", &[1.0, 1.0], &[1, 3])];
        let cml = fit_cml_region(&shoes).unwrap();
        let naive = naive_region(&shoes).unwrap();
        let r = rescale_cml(&cml, &naive).unwrap();
        assert_relative_eq!(r.rescale_constant.unwrap(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(r.lambda_hat[1], 3.0, epsilon = 1e-10);

        let mut a = cml.clone();
        a.lambda_hat = vec![1.0, 3.0];
        let mut b = naive.clone();
        b.lambda_hat = vec![2.0, 6.0];
        let r = rescale_cml(&a, &b).unwrap();
        assert_eq!(r.lambda_hat, vec![2.0, 6.0]);
        assert_eq!(r.rescale_constant, Some(2.0));
        b.lambda_hat = vec![0.0, 0.0];
        assert!(rescale_cml(&a, &b).is_err());
    }

    #[test]
    fn zero_count_region_flagged() {
        let shoes = [rec("a", &[1.0, 1.0, 1.0], &[0, 2, 0]), rec("b", &[1.0, 2.0, 1.0], &[1, 3, 0])];
        let fit = fit_cml_region(&shoes).unwrap();
        assert_eq!(fit.reference_region, Some(0));
        assert_eq!(fit.lambda_hat[2], 0.0);
        assert!(fit.at_boundary[2]);
        assert!(!fit.warnings.is_empty());
    }
}
