//! Gauss–Hermite rules and adaptive integration of one-dimensional random
//! effects.

use std::f64::consts::PI;

/// Nodes and weights for `∫ f(x) e^{−x²} dx`, nodes ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "quadrature order must be positive");
        let n = order;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        let nf = n as f64;
        let pim4 = PI.powf(-0.25);
        let mut z = 0.0_f64;
        for i in 0..m {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * nodes[0],
                3 => 1.91 * z - 0.91 * nodes[1],
                _ => 2.0 * z - nodes[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..100 {
                // orthonormal Hermite recursion
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 1..=n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            nodes[i] = z;
            weights[i] = 2.0 / (pp * pp);
            nodes[n - 1 - i] = -z;
            weights[n - 1 - i] = weights[i];
        }
        nodes.reverse();
        weights.reverse();
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }
}

/// Nodes `z_k` and log-weights for `∫ e^{h(z)} dz` after recentering at the
/// mode `mu` with scale `sigma`: the integral is `Σ_k exp(h(z_k) + logw_k)`.
pub fn adaptive_nodes(gh: &GaussHermite, mu: f64, sigma: f64) -> (Vec<f64>, Vec<f64>) {
    let s = std::f64::consts::SQRT_2 * sigma;
    gh.nodes
        .iter()
        .zip(&gh.weights)
        .map(|(&x, &w)| (mu + s * x, w.ln() + x * x + s.ln()))
        .unzip()
}

/// Mode and curvature scale of a concave log-integrand by safeguarded
/// Newton iteration. `h` returns `(h, h', h'')`.
pub fn find_mode(h: impl Fn(f64) -> (f64, f64, f64), start: f64) -> (f64, f64) {
    let mut z = start;
    let (mut f, mut d1, mut d2) = h(z);
    for _ in 0..100 {
        let step = if d2 < 0.0 { -d1 / d2 } else { d1.signum() * 1.0 };
        let step = step.clamp(-5.0, 5.0);
        let mut t = 1.0;
        let mut moved = false;
        while t > 1e-10 {
            let cand = z + t * step;
            let (fc, d1c, d2c) = h(cand);
            if fc.is_finite() && fc >= f - 1e-14 * f.abs() {
                z = cand;
                f = fc;
                d1 = d1c;
                d2 = d2c;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved || (t * step).abs() < 1e-12 * (1.0 + z.abs()) {
            break;
        }
    }
    let sigma = if d2 < 0.0 { (-1.0 / d2).sqrt() } else { 1.0 };
    (z, sigma)
}
