use nalgebra::DMatrix;
use statrs::function::factorial::ln_factorial;

use super::{check_shoes, column_counts, exposure, Method, Prior, RegionFit};
use crate::error::{Error, Result};
use crate::optim::{maximize, Objective, OptimOptions};
use crate::quadrature::{adaptive_nodes, find_mode, GaussHermite};
use crate::shoe_data::ShoeRecord;

/// `log γ` beyond which the gamma fit is treated as having no overdispersion.
const LOG_GAMMA_CAP: f64 = 30.0;
const LOGNORMAL_ORDER: usize = 21;

/// Closed-form negative-multinomial log-likelihood of one shoe with a
/// `Gamma(γ, γ)` wear factor:
/// `Σ_j [n_ij log(λ_j S_ij) − log n_ij!] + log Γ(γ+n_i) − log Γ(γ) + γ log γ
///  − (γ+n_i) log(Λ_i+γ)` with `Λ_i = Σ_j λ_j S_ij`.
pub fn gamma_marginal_log_likelihood(shoe: &ShoeRecord, lambda: &[f64], gamma: f64) -> f64 {
    let (base, big_lambda) = poisson_parts(shoe, lambda);
    let n = shoe.total;
    let rising: f64 = (0..n).map(|k| (gamma + k as f64).ln()).sum();
    base + rising - gamma * (big_lambda / gamma).ln_1p() - n as f64 * (big_lambda + gamma).ln()
}

/// Log-likelihood of one shoe with `a = exp(σz − σ²/2)`, `z ~ N(0,1)`, by
/// adaptive Gauss–Hermite quadrature.
pub fn lognormal_marginal_log_likelihood(
    shoe: &ShoeRecord,
    lambda: &[f64],
    sigma: f64,
    gh: &GaussHermite,
) -> f64 {
    let (base, big_lambda) = poisson_parts(shoe, lambda);
    base + LognormalShoe::new(shoe.total as f64, big_lambda, sigma, gh).log_integral
}

/// `Σ_j [n_ij log(λ_j S_ij) − log n_ij!]` and `Λ_i`.
fn poisson_parts(shoe: &ShoeRecord, lambda: &[f64]) -> (f64, f64) {
    let mut base = 0.0;
    let mut big = 0.0;
    for ((&s, &n), &l) in shoe.s_area.iter().zip(&shoe.counts).zip(lambda) {
        if s > 0.0 && l.is_finite() {
            big += l * s;
            if n > 0 {
                base += f64::from(n) * (l * s).ln() - ln_factorial(u64::from(n));
            }
        }
    }
    (base, big)
}

struct LognormalShoe {
    log_integral: f64,
    /// Posterior mean of `a`.
    mean_a: f64,
    /// Posterior mean of `(n − aΛ)(z − σ)`, the σ-score.
    score_sigma: f64,
}

impl LognormalShoe {
    fn new(n: f64, big: f64, sigma: f64, gh: &GaussHermite) -> Self {
        let half_ln_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
        let h = |z: f64| {
            let la = sigma * z - 0.5 * sigma * sigma;
            let a = la.exp();
            (
                n * la - a * big - 0.5 * z * z - half_ln_2pi,
                n * sigma - sigma * a * big - z,
                -sigma * sigma * a * big - 1.0,
            )
        };
        let (mode, scale) = find_mode(h, 0.0);
        let (zs, lws) = adaptive_nodes(gh, mode, scale);
        let terms: Vec<f64> = zs.iter().zip(&lws).map(|(&z, &lw)| h(z).0 + lw).collect();
        let top = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = terms.iter().map(|t| (t - top).exp()).collect();
        let total: f64 = weights.iter().sum();
        let mut mean_a = 0.0;
        let mut score_sigma = 0.0;
        for (&z, w) in zs.iter().zip(&weights) {
            let a = (sigma * z - 0.5 * sigma * sigma).exp();
            let w = w / total;
            mean_a += w * a;
            score_sigma += w * (n - a * big) * (z - sigma);
        }
        Self {
            log_integral: top + total.ln(),
            mean_a,
            score_sigma,
        }
    }
}

/// Regions with contact and at least one RAC; the others are fixed at NaN
/// (no contact) or at the zero boundary.
fn free_regions(shoes: &[ShoeRecord], j: usize) -> (Vec<usize>, Vec<f64>, Vec<u64>) {
    let e = exposure(shoes, j);
    let n = column_counts(shoes, j);
    let free = (0..j).filter(|&k| e[k] > 0.0 && n[k] > 0).collect();
    (free, e, n)
}

fn expand(free: &[usize], e: &[f64], values: &[f64]) -> Vec<f64> {
    let mut lambda: Vec<f64> = e.iter().map(|&x| if x > 0.0 { 0.0 } else { f64::NAN }).collect();
    for (&k, &v) in free.iter().zip(values) {
        lambda[k] = v;
    }
    lambda
}

/// Free-parameter view of the data: per shoe, `(S_i restricted, n_i
/// restricted, n_i)`.
struct Reduced {
    s: Vec<Vec<f64>>,
    n: Vec<Vec<f64>>,
    total: Vec<f64>,
    /// `Σ_i Σ_j [n_ij log S_ij − log n_ij!]`, constant in the parameters.
    constant: f64,
}

impl Reduced {
    fn new(shoes: &[ShoeRecord], free: &[usize]) -> Self {
        let mut constant = 0.0;
        let mut s = Vec::with_capacity(shoes.len());
        let mut n = Vec::with_capacity(shoes.len());
        for shoe in shoes {
            s.push(free.iter().map(|&k| shoe.s_area[k]).collect());
            n.push(free.iter().map(|&k| f64::from(shoe.counts[k])).collect());
            for &k in free {
                let c = shoe.counts[k];
                if c > 0 {
                    constant += f64::from(c) * shoe.s_area[k].ln() - ln_factorial(u64::from(c));
                }
            }
        }
        Self {
            total: shoes.iter().map(|s| s.total as f64).collect(),
            s,
            n,
            constant,
        }
    }

    fn big_lambda(&self, i: usize, lambda: &[f64]) -> f64 {
        self.s[i].iter().zip(lambda).map(|(s, l)| s * l).sum()
    }
}

/// Parameters `(log λ_free, log γ)`.
struct GammaObjective<'a> {
    data: &'a Reduced,
}

impl GammaObjective<'_> {
    fn unpack(x: &[f64]) -> (Vec<f64>, f64) {
        let p = x.len() - 1;
        (x[..p].iter().map(|v| v.exp()).collect(), x[p].exp())
    }

    fn eval(&self, x: &[f64], want_hessian: bool) -> (f64, Vec<f64>, Option<DMatrix<f64>>) {
        let p = x.len() - 1;
        let (lambda, gamma) = Self::unpack(x);
        let d = self.data;
        let mut f = d.constant;
        let mut g = vec![0.0; p + 1];
        let mut h = want_hessian.then(|| DMatrix::zeros(p + 1, p + 1));
        for i in 0..d.s.len() {
            let n = d.total[i];
            let big = d.big_lambda(i, &lambda);
            let denom = big + gamma;
            let (mut rising, mut inv1, mut inv2) = (0.0, 0.0, 0.0);
            for k in 0..n as u64 {
                let t = gamma + k as f64;
                rising += t.ln();
                inv1 += 1.0 / t;
                inv2 += 1.0 / (t * t);
            }
            f += x[..p].iter().zip(&d.n[i]).map(|(phi, c)| c * phi).sum::<f64>() + rising
                - gamma * (big / gamma).ln_1p()
                - n * denom.ln();
            let mu: Vec<f64> = lambda.iter().zip(&d.s[i]).map(|(l, s)| l * s).collect();
            for k in 0..p {
                g[k] += d.n[i][k] - (gamma + n) * mu[k] / denom;
            }
            let dg = inv1 - (big / gamma).ln_1p() + (big - n) / denom;
            g[p] += gamma * dg;
            if let Some(h) = h.as_mut() {
                let c = (gamma + n) / denom;
                for k in 0..p {
                    h[(k, k)] -= c * mu[k];
                    for l in 0..p {
                        h[(k, l)] += c * mu[k] * mu[l] / denom;
                    }
                    let cross = -gamma * mu[k] * (big - n) / (denom * denom);
                    h[(k, p)] += cross;
                    h[(p, k)] += cross;
                }
                let d2 = -inv2 + big / (gamma * denom) - (big - n) / (denom * denom);
                h[(p, p)] += gamma * gamma * d2 + gamma * dg;
            }
        }
        (f, g, h)
    }
}

impl Objective for GammaObjective<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        if x[x.len() - 1] > 2.0 * LOG_GAMMA_CAP {
            return f64::NAN;
        }
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

/// Parameters `(log λ_free, σ)`; only `|σ|` is identified.
struct LognormalObjective<'a> {
    data: &'a Reduced,
    gh: GaussHermite,
}

impl LognormalObjective<'_> {
    fn eval(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let p = x.len() - 1;
        let lambda: Vec<f64> = x[..p].iter().map(|v| v.exp()).collect();
        let sigma = x[p];
        let d = self.data;
        let mut f = d.constant;
        let mut g = vec![0.0; p + 1];
        for i in 0..d.s.len() {
            let big = d.big_lambda(i, &lambda);
            let q = LognormalShoe::new(d.total[i], big, sigma, &self.gh);
            f += x[..p].iter().zip(&d.n[i]).map(|(phi, c)| c * phi).sum::<f64>() + q.log_integral;
            for k in 0..p {
                g[k] += d.n[i][k] - q.mean_a * lambda[k] * d.s[i][k];
            }
            g[p] += q.score_sigma;
        }
        (f, g)
    }
}

impl Objective for LognormalObjective<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        self.eval(x).0
    }

    fn value_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
        self.eval(x)
    }
}

fn all_regions(shoes: &[ShoeRecord], x: &[f64]) -> Result<Vec<usize>> {
    let j = check_shoes(shoes)?;
    if x.len() != j + 1 {
        return Err(Error::invalid(format!("expected {} parameters, got {}", j + 1, x.len())));
    }
    Ok((0..j).collect())
}

/// Gamma-prior marginal log-likelihood of all shoes with its gradient in
/// `(log λ_1, …, log λ_J, log γ)`.
pub fn gamma_marginal_value_grad(shoes: &[ShoeRecord], x: &[f64]) -> Result<(f64, Vec<f64>)> {
    let data = Reduced::new(shoes, &all_regions(shoes, x)?);
    Ok(GammaObjective { data: &data }.value_grad(x))
}

/// Log-normal-prior marginal log-likelihood of all shoes with its gradient
/// in `(log λ_1, …, log λ_J, σ)`, by adaptive quadrature of `order` nodes.
pub fn lognormal_marginal_value_grad(shoes: &[ShoeRecord], x: &[f64], order: usize) -> Result<(f64, Vec<f64>)> {
    let data = Reduced::new(shoes, &all_regions(shoes, x)?);
    Ok(LognormalObjective {
        data: &data,
        gh: GaussHermite::new(order),
    }
    .value_grad(x))
}

/// Random-effects maximum likelihood. The gamma law uses the closed-form
/// marginal; the log-normal law uses adaptive quadrature and starts from
/// the gamma fit.
pub fn fit_re_region(shoes: &[ShoeRecord], prior: Prior) -> Result<RegionFit> {
    let j = check_shoes(shoes)?;
    let (free, e, ncol) = free_regions(shoes, j);
    if free.is_empty() {
        return Err(Error::invalid("no region has both contact and RACs"));
    }
    let data = Reduced::new(shoes, &free);
    let gamma_fit = fit_gamma(&data, &free, &e, &ncol)?;
    let mut fit = match prior {
        Prior::Gamma => gamma_fit,
        Prior::Lognormal => fit_lognormal(&data, &free, &e, &gamma_fit)?,
    };
    fit.prior = Some(prior);
    if free.len() < j {
        let zero = (0..j).filter(|&k| e[k] > 0.0 && ncol[k] == 0).count();
        if zero > 0 {
            fit.warnings
                .push(format!("{zero} regions without RACs are estimated at the zero boundary"));
        }
    }
    Ok(fit)
}

fn poisson_boundary(data: &Reduced, free: &[usize], e: &[f64], ncol: &[u64]) -> RegionFit {
    let values: Vec<f64> = free.iter().map(|&k| ncol[k] as f64 / e[k]).collect();
    let lambda = expand(free, e, &values);
    let mut fit = RegionFit::new(Method::RandomEffects, lambda.clone(), e.to_vec());
    let variance: Vec<f64> = lambda
        .iter()
        .zip(e)
        .map(|(&l, &x)| if l.is_finite() { l / x } else { f64::NAN })
        .collect();
    let mut ll = data.constant;
    for i in 0..data.s.len() {
        let big = data.big_lambda(i, &values);
        ll += data.n[i].iter().zip(&values).map(|(c, l)| c * l.ln()).sum::<f64>() - big;
    }
    fit.covariance = Some(diag_matrix(&variance));
    fit.variance = Some(variance);
    fit.var_a_hat = Some(0.0);
    fit.log_likelihood = Some(ll);
    fit.warnings
        .push("no overdispersion: Var(a) estimated at the boundary 0".into());
    fit
}

fn diag_matrix(v: &[f64]) -> Vec<Vec<f64>> {
    (0..v.len())
        .map(|r| (0..v.len()).map(|c| if r == c { v[r].max(0.0) } else { 0.0 }).collect())
        .collect()
}

fn fit_gamma(data: &Reduced, free: &[usize], e: &[f64], ncol: &[u64]) -> Result<RegionFit> {
    let p = free.len();
    let start: Vec<f64> = free.iter().map(|&k| ncol[k] as f64 / e[k]).collect();
    // overdispersion score for Var(a) at 0, evaluated at the Poisson MLE
    let score0: f64 = (0..data.s.len())
        .map(|i| {
            let big = data.big_lambda(i, &start);
            let n = data.total[i];
            (n - big).powi(2) - n
        })
        .sum();
    if score0 <= 0.0 {
        return Ok(poisson_boundary(data, free, e, ncol));
    }
    let var0 = {
        let mut u = 0.0;
        for i in 0..data.s.len() {
            let big = data.big_lambda(i, &start);
            let n = data.total[i];
            if big > 0.0 {
                u += (n * n - n) / (big * big);
            }
        }
        (u / data.s.len() as f64 - 1.0).max(0.01)
    };
    let mut x0: Vec<f64> = start.iter().map(|l| l.ln()).collect();
    x0.push((1.0 / var0).ln());
    let obj = GammaObjective { data };
    let opt = maximize(&obj, &x0, &OptimOptions::default())?;
    if opt.x[p] > LOG_GAMMA_CAP {
        return Ok(poisson_boundary(data, free, e, ncol));
    }
    let values: Vec<f64> = opt.x[..p].iter().map(|v| v.exp()).collect();
    let cov_phi = opt.covariance()?;
    let mut fit = RegionFit::new(Method::RandomEffects, expand(free, e, &values), e.to_vec());
    attach_covariance(&mut fit, free, &values, &cov_phi);
    fit.var_a_hat = Some((-opt.x[p]).exp());
    fit.log_likelihood = Some(opt.value);
    fit.iterations = Some(opt.iterations);
    Ok(fit)
}

fn fit_lognormal(data: &Reduced, free: &[usize], e: &[f64], start: &RegionFit) -> Result<RegionFit> {
    let p = free.len();
    let var_a = start.var_a_hat.unwrap_or(0.0);
    let mut x0: Vec<f64> = free.iter().map(|&k| start.lambda_hat[k].ln()).collect();
    x0.push(var_a.ln_1p().sqrt().max(0.05));
    let obj = LognormalObjective {
        data,
        gh: GaussHermite::new(LOGNORMAL_ORDER),
    };
    let opt = maximize(&obj, &x0, &OptimOptions::default())?;
    let values: Vec<f64> = opt.x[..p].iter().map(|v| v.exp()).collect();
    let mut fit = RegionFit::new(Method::RandomEffects, expand(free, e, &values), e.to_vec());
    match opt.covariance() {
        Ok(cov) => attach_covariance(&mut fit, free, &values, &cov),
        Err(_) => {
            // σ at zero leaves a flat direction; fall back to the λ block
            let h = opt.hessian.view((0, 0), (p, p)).into_owned();
            let cov = crate::optim::covariance_from_hessian(&h)?;
            attach_covariance(&mut fit, free, &values, &cov);
            fit.warnings
                .push("σ is at its boundary; covariance excludes σ".into());
        }
    }
    let sigma = opt.x[p].abs();
    fit.var_a_hat = Some(sigma.powi(2).exp_m1());
    fit.log_likelihood = Some(opt.value);
    fit.iterations = Some(opt.iterations);
    Ok(fit)
}

/// Delta-method covariance of `λ = exp(φ)` from the leading block of a
/// covariance over `(φ_free, …)`.
fn attach_covariance(fit: &mut RegionFit, free: &[usize], values: &[f64], cov: &DMatrix<f64>) {
    let j = fit.cells();
    let mut full = vec![vec![0.0; j]; j];
    for (a, &ka) in free.iter().enumerate() {
        for (b, &kb) in free.iter().enumerate() {
            full[ka][kb] = values[a] * values[b] * cov[(a, b)];
        }
    }
    let variance = (0..j)
        .map(|k| if fit.lambda_hat[k].is_finite() { full[k][k] } else { f64::NAN })
        .collect();
    fit.variance = Some(variance);
    fit.covariance = Some(full);
}
