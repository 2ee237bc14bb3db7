//! Damped Newton maximization with backtracking line search.
//!
//! The curvature comes from an analytic Hessian when the objective supplies
//! one and from central differences of the analytic gradient otherwise.
//! Indefinite curvature is regularized with a Levenberg shift.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimOptions {
    /// Sup-norm of the gradient.
    pub gtol: f64,
    /// Relative change of the objective between iterations.
    pub ftol_rel: f64,
    pub max_iter: usize,
}

impl Default for OptimOptions {
    fn default() -> Self {
        Self {
            gtol: 1e-8,
            ftol_rel: 1e-12,
            max_iter: 500,
        }
    }
}

pub trait Objective {
    fn value(&self, x: &[f64]) -> f64;

    fn value_grad(&self, x: &[f64]) -> (f64, Vec<f64>);

    fn hessian(&self, _x: &[f64]) -> Option<DMatrix<f64>> {
        None
    }
}

#[derive(Debug, Clone)]
pub struct Optimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian: DMatrix<f64>,
    pub iterations: usize,
}

impl Optimum {
    pub fn grad_sup(&self) -> f64 {
        sup_norm(&self.gradient)
    }

    /// Inverse of the negative Hessian.
    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        covariance_from_hessian(&self.hessian)
    }
}

pub fn covariance_from_hessian(h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let info = -h;
    let info = (&info + info.transpose()) * 0.5;
    let chol = info.cholesky().ok_or_else(|| {
        Error::SingularFit("observed information is not positive definite".into())
    })?;
    let cov = chol.inverse();
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularFit("observed information is singular".into()));
    }
    Ok(cov)
}

pub fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn fd_hessian(obj: &(impl Objective + ?Sized), x: &[f64]) -> DMatrix<f64> {
    let p = x.len();
    let mut h = DMatrix::zeros(p, p);
    let mut xp = x.to_vec();
    for k in 0..p {
        let step = 1e-5 * x[k].abs().max(1.0);
        xp[k] = x[k] + step;
        let (_, gp) = obj.value_grad(&xp);
        xp[k] = x[k] - step;
        let (_, gm) = obj.value_grad(&xp);
        xp[k] = x[k];
        for i in 0..p {
            h[(i, k)] = (gp[i] - gm[i]) / (2.0 * step);
        }
    }
    (&h + h.transpose()) * 0.5
}

fn curvature(obj: &(impl Objective + ?Sized), x: &[f64]) -> DMatrix<f64> {
    obj.hessian(x).unwrap_or_else(|| fd_hessian(obj, x))
}

/// Solves `(−H + μI) d = g` with the smallest shift that makes the system
/// positive definite.
fn newton_direction(h: &DMatrix<f64>, g: &[f64], shift: f64) -> Option<(DVector<f64>, f64)> {
    let p = g.len();
    let a = -h;
    let scale = (0..p).map(|i| a[(i, i)].abs()).fold(1e-12, f64::max);
    let gv = DVector::from_column_slice(g);
    let mut mu = shift;
    for _ in 0..40 {
        let mut m = a.clone();
        for i in 0..p {
            m[(i, i)] += mu;
        }
        if let Some(ch) = m.cholesky() {
            let d = ch.solve(&gv);
            if d.iter().all(|v| v.is_finite()) {
                return Some((d, mu));
            }
        }
        mu = if mu == 0.0 { 1e-10 * scale } else { mu * 10.0 };
    }
    None
}

pub fn maximize(obj: &(impl Objective + ?Sized), x0: &[f64], opts: &OptimOptions) -> Result<Optimum> {
    let mut x = x0.to_vec();
    let (mut f, mut g) = obj.value_grad(&x);
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("objective is not finite at the starting point"));
    }
    let mut trace: Vec<String> = Vec::new();
    let mut polishing = 0usize;
    for iter in 0..opts.max_iter {
        let gsup = sup_norm(&g);
        if trace.len() == 12 {
            trace.remove(0);
        }
        trace.push(format!("iter {iter}: f={f:.12e} |g|={gsup:.3e}"));
        if gsup < opts.gtol {
            return finish(obj, x, f, g, iter);
        }
        let h = curvature(obj, &x);
        let mut shift = 0.0;
        let mut accepted = None;
        'shift: for _ in 0..8 {
            let Some((d, mu)) = newton_direction(&h, &g, shift) else {
                break;
            };
            let slope: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
            let mut t = 1.0;
            for _ in 0..60 {
                let xn: Vec<f64> = x.iter().zip(d.iter()).map(|(a, b)| a + t * b).collect();
                let fnew = obj.value(&xn);
                if fnew.is_finite() {
                    if fnew >= f + 1e-4 * t * slope {
                        accepted = Some((xn, fnew, None));
                        break 'shift;
                    }
                    if fnew >= f - 16.0 * f64::EPSILON * f.abs().max(1.0) {
                        // objective flat at rounding level: accept when the
                        // gradient still shrinks
                        let (fv, gn) = obj.value_grad(&xn);
                        if sup_norm(&gn) < gsup {
                            accepted = Some((xn, fv, Some(gn)));
                            break 'shift;
                        }
                    }
                }
                t *= 0.5;
            }
            shift = if mu == 0.0 { 1e-6 } else { mu * 100.0 };
        }
        let Some((xn, fnew, gn)) = accepted else {
            if gsup < opts.gtol.sqrt() && polishing > 0 {
                return finish(obj, x, f, g, iter);
            }
            return Err(Error::Convergence {
                iterations: iter,
                trace: trace.join("\n"),
            });
        };
        let change = (fnew - f).abs() / f.abs().max(1.0);
        x = xn;
        let gnew = match gn {
            Some(gn) => gn,
            None => obj.value_grad(&x).1,
        };
        f = fnew;
        g = gnew;
        if change < opts.ftol_rel {
            polishing += 1;
            if polishing > 3 || sup_norm(&g) < opts.gtol {
                return finish(obj, x, f, g, iter + 1);
            }
        }
    }
    Err(Error::Convergence {
        iterations: opts.max_iter,
        trace: trace.join("\n"),
    })
}

fn finish(
    obj: &(impl Objective + ?Sized),
    x: Vec<f64>,
    value: f64,
    gradient: Vec<f64>,
    iterations: usize,
) -> Result<Optimum> {
    let hessian = curvature(obj, &x);
    Ok(Optimum {
        x,
        value,
        gradient,
        hessian,
        iterations,
    })
}
