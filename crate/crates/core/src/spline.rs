//! Tensor-product cubic splines in the truncated-power basis.
//!
//! The one-dimensional basis is `(1, t, t², t³, (t−k₁)³₊, …, (t−k_p)³₊)`.
//! Despite the usual "natural spline" label this is the plain truncated
//! power basis, without the linearity constraint beyond the boundary knots.
//! Surfaces are evaluated on unit-square coordinates: `u` runs across the
//! grid and `v` from the heel to the toe.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::shoe_data::GridDims;

pub const DEFAULT_KNOTS_X: usize = 3;
pub const DEFAULT_KNOTS_Y: usize = 5;

pub fn basis_1d(t: f64, knots: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; 4 + knots.len()];
    basis_1d_into(t, knots, &mut out);
    out
}

pub fn basis_1d_into(t: f64, knots: &[f64], out: &mut [f64]) {
    out[0] = 1.0;
    out[1] = t;
    out[2] = t * t;
    out[3] = t * t * t;
    for (o, &k) in out[4..].iter_mut().zip(knots) {
        let d = (t - k).max(0.0);
        *o = d * d * d;
    }
}

/// Interior quantiles at levels `1/(p+1), …, p/(p+1)` (type-7 interpolation).
pub fn quantile_knots(values: &[f64], p: usize) -> Result<Vec<f64>> {
    if p == 0 {
        return Err(Error::invalid("at least one knot is required"));
    }
    let mut sorted: Vec<f64> = values.to_vec();
    if sorted.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("knot placement values must be finite"));
    }
    sorted.sort_by(f64::total_cmp);
    let mut distinct = sorted.clone();
    distinct.dedup();
    if distinct.len() < p + 1 {
        return Err(Error::invalid(format!(
            "{} distinct values cannot place {p} knots",
            distinct.len()
        )));
    }
    let n = sorted.len();
    let knots: Vec<f64> = (1..=p)
        .map(|i| {
            let h = (n - 1) as f64 * i as f64 / (p + 1) as f64;
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        })
        .collect();
    check_increasing(&knots)?;
    Ok(knots)
}

/// Type-7 quantile knots from a histogram over ordered levels.
pub fn quantile_knots_weighted(levels: &[f64], counts: &[u64], p: usize) -> Result<Vec<f64>> {
    if p == 0 {
        return Err(Error::invalid("at least one knot is required"));
    }
    if levels.len() != counts.len() || levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("histogram levels must be strictly increasing"));
    }
    let occupied = counts.iter().filter(|&&c| c > 0).count();
    if occupied < p + 1 {
        return Err(Error::invalid(format!(
            "{occupied} distinct values cannot place {p} knots"
        )));
    }
    let n: u64 = counts.iter().sum();
    let order_stat = |k: u64| -> f64 {
        let mut acc = 0;
        for (&l, &c) in levels.iter().zip(counts) {
            acc += c;
            if k < acc {
                return l;
            }
        }
        levels[levels.len() - 1]
    };
    let knots: Vec<f64> = (1..=p)
        .map(|i| {
            let h = (n - 1) as f64 * i as f64 / (p + 1) as f64;
            let lo = h.floor() as u64;
            let a = order_stat(lo);
            let b = order_stat((lo + 1).min(n - 1));
            a + (h - lo as f64) * (b - a)
        })
        .collect();
    check_increasing(&knots)?;
    Ok(knots)
}

fn check_increasing(knots: &[f64]) -> Result<()> {
    if knots.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid(format!(
            "knots {knots:?} are not strictly increasing"
        )));
    }
    Ok(())
}

/// Unit-square coordinates of a pixel center.
pub fn unit_coords(dims: GridDims, row: usize, col: usize) -> (f64, f64) {
    (
        (col as f64 + 0.5) / dims.width as f64,
        (row as f64 + 0.5) / dims.height as f64,
    )
}

/// Quantile knots along each axis from the pooled contact pixels, given the
/// per-pixel number of shoes in contact.
pub fn contact_knots(cumulative: &Grid<u32>, px: usize, py: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let dims = GridDims::new(cumulative.height(), cumulative.width())?;
    let mut col_counts = vec![0u64; dims.width];
    let mut row_counts = vec![0u64; dims.height];
    for r in 0..dims.height {
        for c in 0..dims.width {
            let k = u64::from(cumulative[(r, c)]);
            col_counts[c] += k;
            row_counts[r] += k;
        }
    }
    let us: Vec<f64> = (0..dims.width).map(|c| unit_coords(dims, 0, c).0).collect();
    let vs: Vec<f64> = (0..dims.height).map(|r| unit_coords(dims, r, 0).1).collect();
    Ok((
        quantile_knots_weighted(&us, &col_counts, px)?,
        quantile_knots_weighted(&vs, &row_counts, py)?,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Centering {
    #[default]
    None,
    /// Non-intercept columns have these means subtracted.
    AsFit { means: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineBasis {
    pub knots_x: Vec<f64>,
    pub knots_y: Vec<f64>,
    #[serde(default)]
    pub centering: Centering,
}

impl SplineBasis {
    pub fn new(knots_x: Vec<f64>, knots_y: Vec<f64>) -> Result<Self> {
        check_increasing(&knots_x)?;
        check_increasing(&knots_y)?;
        Ok(Self {
            knots_x,
            knots_y,
            centering: Centering::None,
        })
    }

    pub fn dim_x(&self) -> usize {
        4 + self.knots_x.len()
    }

    pub fn dim_y(&self) -> usize {
        4 + self.knots_y.len()
    }

    /// `(4 + p_x)(4 + p_y)`; column 0 is the intercept.
    pub fn dim(&self) -> usize {
        self.dim_x() * self.dim_y()
    }

    /// Design row; entry `a·(4+p_y) + b` is `B_a(u)·B_b(v)`.
    pub fn row_into(&self, u: f64, v: f64, out: &mut [f64]) {
        let bx = basis_1d(u, &self.knots_x);
        let by = basis_1d(v, &self.knots_y);
        let dy = by.len();
        for (a, &x) in bx.iter().enumerate() {
            for (b, &y) in by.iter().enumerate() {
                out[a * dy + b] = x * y;
            }
        }
        if let Centering::AsFit { means } = &self.centering {
            for (o, m) in out.iter_mut().zip(means).skip(1) {
                *o -= m;
            }
        }
    }

    pub fn row(&self, u: f64, v: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.row_into(u, v, &mut out);
        out
    }

    /// Switches to centered columns using the mean design row over `points`.
    pub fn center_on(&mut self, points: &[(f64, f64)]) -> Result<()> {
        if points.is_empty() {
            return Err(Error::invalid("cannot center on an empty point set"));
        }
        self.centering = Centering::None;
        let mut means = vec![0.0; self.dim()];
        let mut row = vec![0.0; self.dim()];
        for &(u, v) in points {
            self.row_into(u, v, &mut row);
            for (m, r) in means.iter_mut().zip(&row) {
                *m += r;
            }
        }
        let k = points.len() as f64;
        means.iter_mut().for_each(|m| *m /= k);
        means[0] = 0.0;
        self.centering = Centering::AsFit { means };
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineSpec {
    #[serde(flatten)]
    pub basis: SplineBasis,
    pub beta: Vec<f64>,
}

impl SplineSpec {
    pub fn new(basis: SplineBasis, beta: Vec<f64>) -> Result<Self> {
        if beta.len() != basis.dim() {
            return Err(Error::invalid(format!(
                "{} coefficients for a design of dimension {}",
                beta.len(),
                basis.dim()
            )));
        }
        Ok(Self { basis, beta })
    }

    pub fn eval(&self, u: f64, v: f64) -> f64 {
        eval_surface(self, u, v)
    }
}

pub fn eval_surface(spec: &SplineSpec, u: f64, v: f64) -> f64 {
    spec.basis
        .row(u, v)
        .iter()
        .zip(&spec.beta)
        .map(|(r, b)| r * b)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn basis_examples() {
        assert_eq!(basis_1d(0.0, &[1.0, 2.0]), vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(basis_1d(2.0, &[1.0, 2.0]), vec![1.0, 2.0, 4.0, 8.0, 1.0, 0.0]);
        assert_eq!(basis_1d(3.0, &[1.0, 2.0]), vec![1.0, 3.0, 9.0, 27.0, 8.0, 1.0]);
    }

    #[test]
    fn quantile_examples() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        let k = quantile_knots(&v, 3).unwrap();
        for (a, b) in k.iter().zip([25.75, 50.5, 75.25]) {
            assert_relative_eq!(*a, b, epsilon = 1e-12);
        }
        assert_eq!(quantile_knots(&v, 1).unwrap(), vec![50.5]);
        assert!(quantile_knots(&[2.0; 10], 1).is_err());
    }

    #[test]
    fn weighted_quantiles_match_expanded_data() {
        let levels = [0.1, 0.2, 0.5, 0.9, 1.3];
        let counts = [3u64, 0, 7, 2, 5];
        let expanded: Vec<f64> = levels
            .iter()
            .zip(&counts)
            .flat_map(|(&l, &c)| std::iter::repeat_n(l, c as usize))
            .collect();
        for p in 1..=3 {
            // repeated levels can produce equal quantiles; compare raw values
            let a = quantile_knots_weighted(&levels, &counts, p);
            let b = quantile_knots(&expanded, p);
            match (a, b) {
                (Ok(a), Ok(b)) => {
                    for (x, y) in a.iter().zip(&b) {
                        assert_relative_eq!(*x, *y, epsilon = 1e-12);
                    }
                }
                (Err(_), Err(_)) => {}
                (a, b) => panic!("disagreement for p={p}: {a:?} vs {b:?}"),
            }
        }
    }

    #[test]
    fn surface_constants() {
        let basis = SplineBasis::new(vec![0.3, 0.6], vec![0.5]).unwrap();
        let mut beta = vec![0.0; basis.dim()];
        let zero = SplineSpec::new(basis.clone(), beta.clone()).unwrap();
        beta[0] = 1.0;
        let one = SplineSpec::new(basis, beta).unwrap();
        for (u, v) in [(0.0, 0.0), (0.4, 0.9), (1.0, 0.2)] {
            assert_eq!(one.eval(u, v), 1.0);
            assert_eq!(zero.eval(u, v), 0.0);
        }
    }

    #[test]
    fn surface_below_knots_is_bicubic() {
        let basis = SplineBasis::new(vec![0.5, 0.7], vec![0.6, 0.8]).unwrap();
        let beta: Vec<f64> = (0..basis.dim()).map(|i| ((i * 37 % 11) as f64 - 5.0) / 3.0).collect();
        let spec = SplineSpec::new(basis, beta.clone()).unwrap();
        let (u, v) = (0.31_f64, 0.42_f64);
        let mut expected = 0.0;
        for a in 0..4 {
            for b in 0..4 {
                expected += beta[a * 6 + b] * u.powi(a as i32) * v.powi(b as i32);
            }
        }
        assert_relative_eq!(spec.eval(u, v), expected, epsilon = 1e-13);
    }

    #[test]
    fn basis_second_derivative_continuous_at_knots() {
        let knots = [0.3, 0.55, 0.8];
        let h = 1e-4;
        let d2 = |t: f64| -> Vec<f64> {
            let (a, b, c) = (basis_1d(t - h, &knots), basis_1d(t, &knots), basis_1d(t + h, &knots));
            (0..a.len()).map(|i| (a[i] - 2.0 * b[i] + c[i]) / (h * h)).collect()
        };
        for &k in &knots {
            let (left, right) = (d2(k - 3.0 * h), d2(k + 3.0 * h));
            for (l, r) in left.iter().zip(&right) {
                assert!((l - r).abs() < 1e-2, "{l} vs {r} at knot {k}");
            }
        }
    }

    #[test]
    fn centering_keeps_surface_family() {
        let mut basis = SplineBasis::new(vec![0.5], vec![0.5]).unwrap();
        let pts = [(0.1, 0.2), (0.7, 0.9), (0.4, 0.6)];
        let plain: Vec<Vec<f64>> = pts.iter().map(|&(u, v)| basis.row(u, v)).collect();
        basis.center_on(&pts).unwrap();
        let centered: Vec<Vec<f64>> = pts.iter().map(|&(u, v)| basis.row(u, v)).collect();
        for j in 1..basis.dim() {
            let s: f64 = centered.iter().map(|r| r[j]).sum();
            assert!(s.abs() < 1e-12);
            assert_relative_eq!(plain[0][j] - centered[0][j], plain[1][j] - centered[1][j], epsilon = 1e-12);
        }
    }

    #[test]
    fn spec_json_round_trip() {
        let basis = SplineBasis::new(vec![0.25, 0.5, 0.75], vec![0.2, 0.4, 0.6, 0.8, 0.9]).unwrap();
        let spec = SplineSpec::new(basis, (0..63).map(|i| i as f64 * 0.1).collect()).unwrap();
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<SplineSpec>(&json).unwrap(), spec);
        assert!(SplineSpec::new(spec.basis.clone(), vec![0.0; 3]).is_err());
    }

    proptest! {
        #[test]
        fn eval_is_linear_in_beta(alpha in -5.0f64..5.0, u in 0.0f64..1.0, v in 0.0f64..1.0,
                                  seed in proptest::collection::vec(-2.0f64..2.0, 63)) {
            let basis = SplineBasis::new(vec![0.25, 0.5, 0.75], vec![0.2, 0.4, 0.6, 0.8, 0.9]).unwrap();
            let a = SplineSpec::new(basis.clone(), seed.clone()).unwrap();
            let b = SplineSpec::new(basis.clone(), seed.iter().map(|x| alpha * x).collect()).unwrap();
            prop_assert!((b.eval(u, v) - alpha * a.eval(u, v)).abs() <= 1e-9 * (1.0 + a.eval(u, v).abs()));
            // design row is the gradient with respect to beta
            let row = basis.row(u, v);
            let dot: f64 = row.iter().zip(&seed).map(|(r, s)| r * s).sum();
            prop_assert!((dot - a.eval(u, v)).abs() < 1e-12);
        }
    }
}
