//! Logistic models for clustered binary data: the plain fit, the
//! random-intercept marginal likelihood, and the conditional likelihood
//! given each cluster's number of events.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::optim::{maximize, Objective, OptimOptions, Optimum};
use crate::quadrature::{adaptive_nodes, find_mode, GaussHermite};

pub const DEFAULT_QUADRATURE_ORDER: usize = 21;
/// Minimum order for clusters with at most [`SPARSE_OUTCOMES`] events or
/// non-events, whose integrands are too skewed for a low-order rule.
pub const SPARSE_QUADRATURE_ORDER: usize = 101;
pub const SPARSE_OUTCOMES: usize = 2;

/// One cluster: design rows (`n × p`, row-major), outcomes and a constant
/// offset on the linear predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub id: String,
    pub x: Vec<f64>,
    pub y: Vec<bool>,
    pub offset: f64,
}

impl Cluster {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn events(&self) -> usize {
        self.y.iter().filter(|&&v| v).count()
    }

    fn row(&self, t: usize, p: usize) -> &[f64] {
        &self.x[t * p..(t + 1) * p]
    }

    /// `offset + x_t·β` for every observation.
    fn linear_predictor(&self, beta: &[f64]) -> Vec<f64> {
        let p = beta.len();
        (0..self.len())
            .map(|t| self.offset + self.row(t, p).iter().zip(beta).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusteredData {
    pub p: usize,
    pub clusters: Vec<Cluster>,
}

impl ClusteredData {
    pub fn new(p: usize, clusters: Vec<Cluster>) -> Result<Self> {
        for c in &clusters {
            if c.x.len() != c.y.len() * p {
                return Err(Error::invalid(format!(
                    "cluster {} has {} design entries for {} observations of dimension {p}",
                    c.id,
                    c.x.len(),
                    c.y.len()
                )));
            }
            if !c.offset.is_finite() {
                return Err(Error::invalid(format!("cluster {} has a non-finite offset", c.id)));
            }
        }
        Ok(Self { p, clusters })
    }

    pub fn observations(&self) -> usize {
        self.clusters.iter().map(Cluster::len).sum()
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

struct Logistic<'a> {
    data: &'a ClusteredData,
}

impl Logistic<'_> {
    fn eval(&self, beta: &[f64], hess: bool) -> (f64, Vec<f64>, Option<DMatrix<f64>>) {
        let p = self.data.p;
        let parts: Vec<(f64, Vec<f64>, Option<DMatrix<f64>>)> = self
            .data
            .clusters
            .par_iter()
            .map(|c| {
                let eta = c.linear_predictor(beta);
                let mut f = 0.0;
                let mut g = vec![0.0; p];
                let mut h = hess.then(|| DMatrix::zeros(p, p));
                for (t, &e) in eta.iter().enumerate() {
                    let y = f64::from(u8::from(c.y[t]));
                    f += y * e - softplus(e);
                    let pr = sigmoid(e);
                    let row = c.row(t, p);
                    for k in 0..p {
                        g[k] += (y - pr) * row[k];
                    }
                    if let Some(h) = h.as_mut() {
                        let w = pr * (1.0 - pr);
                        for a in 0..p {
                            for b in 0..=a {
                                h[(a, b)] -= w * row[a] * row[b];
                            }
                        }
                    }
                }
                (f, g, h)
            })
            .collect();
        reduce(parts, p, hess)
    }
}

fn reduce(
    parts: Vec<(f64, Vec<f64>, Option<DMatrix<f64>>)>,
    p: usize,
    hess: bool,
) -> (f64, Vec<f64>, Option<DMatrix<f64>>) {
    let mut f = 0.0;
    let mut g = vec![0.0; p];
    let mut h = hess.then(|| DMatrix::zeros(p, p));
    for (pf, pg, ph) in parts {
        f += pf;
        for (a, b) in g.iter_mut().zip(&pg) {
            *a += b;
        }
        if let (Some(h), Some(ph)) = (h.as_mut(), ph) {
            *h += ph;
        }
    }
    if let Some(h) = h.as_mut() {
        for a in 0..p {
            for b in 0..a {
                h[(b, a)] = h[(a, b)];
            }
        }
    }
    (f, g, h)
}

impl Objective for Logistic<'_> {
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

/// Ordinary logistic regression ignoring the clustering.
pub fn fit_logistic(data: &ClusteredData) -> Result<Optimum> {
    maximize(&Logistic { data }, &vec![0.0; data.p], &OptimOptions::default())
}

/// Random-intercept logistic marginal likelihood with `a_i = θ z_i`,
/// `z_i ~ N(0,1)`. Parameters are `(β, θ)`; only `|θ|` is identified.
pub struct RandomIntercept<'a> {
    pub data: &'a ClusteredData,
    pub gh: GaussHermite,
    pub gh_sparse: GaussHermite,
}

struct ClusterTerms {
    log_lik: f64,
    grad: Vec<f64>,
    hess: Option<DMatrix<f64>>,
}

#[derive(Clone, Copy, PartialEq, PartialOrd)]
enum Need {
    Value,
    Gradient,
    Hessian,
}

impl RandomIntercept<'_> {
    pub fn new(data: &ClusteredData, order: usize) -> RandomIntercept<'_> {
        RandomIntercept {
            data,
            gh: GaussHermite::new(order),
            gh_sparse: GaussHermite::new(order.max(SPARSE_QUADRATURE_ORDER)),
        }
    }

    /// Log-likelihood of one cluster; the gradient and Hessian are the
    /// posterior moments of the complete-data score and curvature at the
    /// quadrature nodes.
    fn cluster_terms(&self, c: &Cluster, beta: &[f64], theta: f64, need: Need) -> ClusterTerms {
        let p = self.data.p;
        let eta = c.linear_predictor(beta);
        let ys: Vec<f64> = c.y.iter().map(|&v| f64::from(u8::from(v))).collect();
        let half_ln_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
        let h = |z: f64| {
            let (mut f, mut d1, mut d2) = (-0.5 * z * z - half_ln_2pi, -z, -1.0);
            for (e, y) in eta.iter().zip(&ys) {
                let v = e + theta * z;
                let pr = sigmoid(v);
                f += y * v - softplus(v);
                d1 += theta * (y - pr);
                d2 -= theta * theta * pr * (1.0 - pr);
            }
            (f, d1, d2)
        };
        let (mode, scale) = find_mode(h, 0.0);
        let events = c.events();
        let gh = if events.min(c.len() - events) <= SPARSE_OUTCOMES {
            &self.gh_sparse
        } else {
            &self.gh
        };
        let (zs, lws) = adaptive_nodes(gh, mode, scale);
        let terms: Vec<f64> = zs.iter().zip(&lws).map(|(&z, lw)| h(z).0 + lw).collect();
        let top = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = terms.iter().map(|t| (t - top).exp()).collect();
        let total: f64 = w.iter().sum();
        let log_lik = top + total.ln();
        if need == Need::Value {
            return ClusterTerms {
                log_lik,
                grad: Vec::new(),
                hess: None,
            };
        }
        let w: Vec<f64> = w.iter().map(|v| v / total).collect();
        let k = zs.len();
        // per-node scores s_k = (Σ_t r_tk x_t, z_k Σ_t r_tk)
        let mut scores = vec![0.0; k * (p + 1)];
        // Σ_k w_k v_tk and Σ_k w_k v_tk z_k per observation, Σ_t v_tk per node
        let mut cv = vec![0.0; c.len()];
        let mut cvz = vec![0.0; c.len()];
        let mut node_v = vec![0.0; k];
        let want_h = need == Need::Hessian;
        for (t, (e, y)) in eta.iter().zip(&ys).enumerate() {
            let row = c.row(t, p);
            for (n, &z) in zs.iter().enumerate() {
                let pr = sigmoid(e + theta * z);
                let r = y - pr;
                let s = &mut scores[n * (p + 1)..(n + 1) * (p + 1)];
                for (a, x) in s.iter_mut().zip(row) {
                    *a += r * x;
                }
                s[p] += r * z;
                if want_h {
                    let v = pr * (1.0 - pr);
                    cv[t] += w[n] * v;
                    cvz[t] += w[n] * v * z;
                    node_v[n] += v;
                }
            }
        }
        let mut grad = vec![0.0; p + 1];
        for (n, wn) in w.iter().enumerate() {
            for (g, s) in grad.iter_mut().zip(&scores[n * (p + 1)..(n + 1) * (p + 1)]) {
                *g += wn * s;
            }
        }
        let hess = want_h.then(|| {
            let q = p + 1;
            let mut m = DMatrix::zeros(q, q);
            for t in 0..c.len() {
                let row = c.row(t, p);
                for a in 0..p {
                    m[(a, p)] -= cvz[t] * row[a];
                    for b in a..p {
                        m[(a, b)] -= cv[t] * row[a] * row[b];
                    }
                }
            }
            for (n, (&z, wn)) in zs.iter().zip(&w).enumerate() {
                m[(p, p)] -= wn * z * z * node_v[n];
                let s = &scores[n * q..(n + 1) * q];
                for a in 0..q {
                    for b in a..q {
                        m[(a, b)] += wn * s[a] * s[b];
                    }
                }
            }
            for a in 0..q {
                for b in a..q {
                    m[(a, b)] -= grad[a] * grad[b];
                    m[(b, a)] = m[(a, b)];
                }
            }
            m
        });
        ClusterTerms { log_lik, grad, hess }
    }

    fn eval(&self, x: &[f64], need: Need) -> (f64, Vec<f64>, Option<DMatrix<f64>>) {
        let p = self.data.p;
        let (beta, theta) = (&x[..p], x[p]);
        let parts: Vec<ClusterTerms> = self
            .data
            .clusters
            .par_iter()
            .map(|c| self.cluster_terms(c, beta, theta, need))
            .collect();
        let mut f = 0.0;
        let mut g = vec![0.0; if need >= Need::Gradient { p + 1 } else { 0 }];
        let mut h = (need == Need::Hessian).then(|| DMatrix::zeros(p + 1, p + 1));
        for part in parts {
            f += part.log_lik;
            for (a, b) in g.iter_mut().zip(&part.grad) {
                *a += b;
            }
            if let (Some(h), Some(ph)) = (h.as_mut(), part.hess) {
                *h += ph;
            }
        }
        (f, g, h)
    }

    /// Per-cluster marginal log-likelihoods.
    pub fn cluster_log_likelihoods(&self, beta: &[f64], theta: f64) -> Vec<f64> {
        self.data
            .clusters
            .iter()
            .map(|c| self.cluster_terms(c, beta, theta, Need::Value).log_lik)
            .collect()
    }
}

impl Objective for RandomIntercept<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        self.eval(x, Need::Value).0
    }

    fn value_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let (f, g, _) = self.eval(x, Need::Gradient);
        (f, g)
    }

    fn hessian(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        self.eval(x, Need::Hessian).2
    }
}

/// Maximum marginal likelihood, starting from the plain logistic fit and
/// `θ = 0.5`.
pub fn fit_random_intercept(data: &ClusteredData, order: usize) -> Result<Optimum> {
    let start = fit_logistic(data)?;
    let mut x0 = start.x;
    x0.push(0.5);
    let obj = RandomIntercept::new(data, order);
    let mut opt = maximize(&obj, &x0, &OptimOptions::default())?;
    let p = data.p;
    if opt.x[p] < 0.0 {
        // the likelihood is even in θ
        opt.x[p] = -opt.x[p];
        opt.gradient[p] = -opt.gradient[p];
        for k in 0..p {
            opt.hessian[(k, p)] = -opt.hessian[(k, p)];
            opt.hessian[(p, k)] = -opt.hessian[(p, k)];
        }
    }
    Ok(opt)
}

/// Conditional log-likelihood given each cluster's event count, with value,
/// gradient and Hessian from the elementary-symmetric-polynomial recursion.
/// Constant offsets and any constant design column cancel.
pub struct Conditional<'a> {
    pub data: &'a ClusteredData,
}

/// `log e_k(w)` and its first two derivatives for `w_t = exp(η_t)`, with
/// `∂η_t/∂β = x_t`.
pub struct SymmetricTerms {
    pub log_e: f64,
    pub d: Vec<f64>,
    pub h: Option<DMatrix<f64>>,
}

/// Elementary symmetric polynomial `e_k(exp(η))` on the log scale with its
/// gradient and Hessian in `β`, by the subset-sum recursion over elements.
pub fn log_elementary_symmetric(eta: &[f64], x: &[f64], p: usize, k: usize, want_h: bool) -> SymmetricTerms {
    let n = eta.len();
    let shift = eta.iter().sum::<f64>() / n.max(1) as f64;
    let mut log_scale = 0.0;
    let mut e = vec![0.0; k + 1];
    e[0] = 1.0;
    let mut d = vec![0.0; (k + 1) * p];
    // upper triangles only, row-major p×p per degree
    let pp = p * p;
    let mut h = if want_h { vec![0.0; (k + 1) * pp] } else { Vec::new() };
    for t in 0..n {
        let w = (eta[t] - shift).exp();
        let xt = &x[t * p..(t + 1) * p];
        let top = k.min(t + 1);
        for r in (1..=top).rev() {
            let prev_e = e[r - 1];
            let (d_lo, d_hi) = d.split_at_mut(r * p);
            let dp = &d_lo[(r - 1) * p..];
            if want_h {
                let (h_lo, h_hi) = h.split_at_mut(r * pp);
                let hp = &h_lo[(r - 1) * pp..];
                let hr = &mut h_hi[..pp];
                for a in 0..p {
                    let (xa, da) = (xt[a], dp[a]);
                    let cx = da + xa * prev_e;
                    let row_r = &mut hr[a * p + a..(a + 1) * p];
                    let row_p = &hp[a * p + a..(a + 1) * p];
                    for (((hrb, hpb), xb), db) in row_r.iter_mut().zip(row_p).zip(&xt[a..]).zip(&dp[a..]) {
                        *hrb += w * (hpb + xa * db + cx * xb);
                    }
                }
            }
            for ((dr, dpb), xa) in d_hi[..p].iter_mut().zip(dp).zip(xt) {
                *dr += w * (dpb + xa * prev_e);
            }
            e[r] += w * prev_e;
        }
        let big = e.iter().cloned().fold(0.0, f64::max);
        if big > 1e200 {
            let s = 1.0 / big;
            log_scale += big.ln();
            e.iter_mut().for_each(|v| *v *= s);
            d.iter_mut().for_each(|v| *v *= s);
            h.iter_mut().for_each(|v| *v *= s);
        }
    }
    let ek = e[k];
    let log_e = ek.ln() + log_scale + k as f64 * shift;
    let dk: Vec<f64> = d[k * p..(k + 1) * p].iter().map(|v| v / ek).collect();
    let hk = want_h.then(|| {
        let hk = &h[k * pp..(k + 1) * pp];
        DMatrix::from_fn(p, p, |a, b| {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            hk[lo * p + hi] / ek - dk[a] * dk[b]
        })
    });
    SymmetricTerms {
        log_e,
        d: dk,
        h: hk,
    }
}

impl Conditional<'_> {
    fn eval(&self, beta: &[f64], want_h: bool) -> (f64, Vec<f64>, Option<DMatrix<f64>>) {
        let p = self.data.p;
        let parts: Vec<(f64, Vec<f64>, Option<DMatrix<f64>>)> = self
            .data
            .clusters
            .par_iter()
            .map(|c| {
                let eta: Vec<f64> = (0..c.len())
                    .map(|t| c.row(t, p).iter().zip(beta).map(|(a, b)| a * b).sum())
                    .collect();
                let k = c.events();
                let terms = log_elementary_symmetric(&eta, &c.x, p, k, want_h);
                let mut f = -terms.log_e;
                let mut g: Vec<f64> = terms.d.iter().map(|v| -v).collect();
                for t in (0..c.len()).filter(|&t| c.y[t]) {
                    f += eta[t];
                    for (a, x) in g.iter_mut().zip(c.row(t, p)) {
                        *a += x;
                    }
                }
                (f, g, terms.h.map(|h| -h))
            })
            .collect();
        reduce_full(parts, p, want_h)
    }
}

fn reduce_full(
    parts: Vec<(f64, Vec<f64>, Option<DMatrix<f64>>)>,
    p: usize,
    hess: bool,
) -> (f64, Vec<f64>, Option<DMatrix<f64>>) {
    let mut f = 0.0;
    let mut g = vec![0.0; p];
    let mut h = hess.then(|| DMatrix::zeros(p, p));
    for (pf, pg, ph) in parts {
        f += pf;
        for (a, b) in g.iter_mut().zip(&pg) {
            *a += b;
        }
        if let (Some(h), Some(ph)) = (h.as_mut(), ph) {
            *h += ph;
        }
    }
    (f, g, h)
}

impl Objective for Conditional<'_> {
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

/// Drops clusters whose event count carries no information (none or all
/// events) and returns them by id.
pub fn informative_strata(data: &ClusteredData) -> (ClusteredData, Vec<String>) {
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for c in &data.clusters {
        let k = c.events();
        if k == 0 || k == c.len() {
            dropped.push(c.id.clone());
        } else {
            kept.push(c.clone());
        }
    }
    (
        ClusteredData {
            p: data.p,
            clusters: kept,
        },
        dropped,
    )
}

/// Conditional maximum likelihood from `β = 0` over informative strata.
pub fn fit_conditional(data: &ClusteredData) -> Result<(Optimum, Vec<String>)> {
    let (kept, dropped) = informative_strata(data);
    if kept.clusters.is_empty() {
        return Err(Error::invalid("no stratum has both events and non-events"));
    }
    let opt = maximize(&Conditional { data: &kept }, &vec![0.0; data.p], &OptimOptions::default())?;
    Ok((opt, dropped))
}
