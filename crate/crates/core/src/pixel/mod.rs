//! Pixel-resolution estimators.
//!
//! The naive estimator and its kernel smoothing work on the count grids
//! directly. The spline estimators treat every contact pixel as a binary
//! observation with logit `g(u, v)`; because RACs are rare, `exp(g)` is
//! reported as the intensity.

pub mod glmm;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::region::{z_quantile, Interval};
use crate::shoe_data::{GridDims, StandardShoe};
use crate::spline::{unit_coords, SplineBasis, SplineSpec};
use crate::subsampling::{Subsample, SubsampleMeta};

pub use glmm::{Cluster, ClusteredData, DEFAULT_QUADRATURE_ORDER};

pub const DEFAULT_HALF_WIDTH: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PixelMethod {
    Naive,
    RandomEffects,
    Cml,
}

impl PixelMethod {
    pub fn label(&self) -> &'static str {
        match self {
            PixelMethod::Naive => "naive",
            PixelMethod::RandomEffects => "random_effects",
            PixelMethod::Cml => "cml",
        }
    }
}

fn empty_grid() -> Grid<f64> {
    Grid::filled(0, 0, 0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PixelFit {
    pub method: PixelMethod,
    pub grid: GridDims,
    /// Intensity per pixel; NaN where no shoe has contact. Exported as a
    /// grid, not inside the JSON record.
    #[serde(skip, default = "empty_grid")]
    pub lambda_hat: Grid<f64>,
    /// Sampling variance of the naive estimate per pixel.
    #[serde(skip)]
    pub variance: Option<Grid<f64>>,
    #[serde(default)]
    pub spline: Option<SplineSpec>,
    /// False for conditional fits, whose intercept is fixed at zero.
    #[serde(default)]
    pub intercept_identified: bool,
    #[serde(default)]
    pub sigma_hat: Option<f64>,
    /// Covariance of the spline coefficients (zero row and column for an
    /// unidentified intercept).
    #[serde(default)]
    pub covariance: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub log_likelihood: Option<f64>,
    #[serde(default)]
    pub iterations: Option<usize>,
    #[serde(default)]
    pub var_a_hat: Option<f64>,
    #[serde(default)]
    pub sample_meta: Option<SubsampleMeta>,
    #[serde(default)]
    pub dropped_strata: Vec<String>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl PixelFit {
    fn new(method: PixelMethod, grid: GridDims, lambda_hat: Grid<f64>) -> Self {
        Self {
            method,
            grid,
            lambda_hat,
            variance: None,
            spline: None,
            intercept_identified: false,
            sigma_hat: None,
            covariance: None,
            log_likelihood: None,
            iterations: None,
            var_a_hat: None,
            sample_meta: None,
            dropped_strata: Vec::new(),
            warnings: Vec::new(),
        }
    }
}

fn common_dims(shoes: &[StandardShoe]) -> Result<GridDims> {
    let first = shoes
        .first()
        .ok_or_else(|| Error::invalid("at least one shoe is required"))?;
    let dims = first.dims();
    if let Some(bad) = shoes.iter().find(|s| s.dims() != dims) {
        return Err(Error::invalid(format!(
            "shoe {} is on a {} grid, expected {dims}",
            bad.shoe_id,
            bad.dims()
        )));
    }
    Ok(dims)
}

/// `λ̂_p = Σ_i n_ip / Σ_i S_ip`, with the plug-in variance
/// `(λ̂² Var(a) + λ̂)/|m_p|`.
pub fn naive_pixel(shoes: &[StandardShoe]) -> Result<PixelFit> {
    let dims = common_dims(shoes)?;
    let mut n = vec![0u64; dims.pixels()];
    let mut s = vec![0u64; dims.pixels()];
    for shoe in shoes {
        for (k, (&c, &a)) in shoe.counts().iter().zip(shoe.contact().iter()).enumerate() {
            n[k] += u64::from(c);
            s[k] += u64::from(a);
        }
    }
    let lambda: Vec<f64> = n
        .iter()
        .zip(&s)
        .map(|(&c, &a)| if a > 0 { c as f64 / a as f64 } else { f64::NAN })
        .collect();
    let u: Vec<f64> = shoes
        .iter()
        .filter_map(|shoe| {
            let mu: f64 = shoe
                .contact()
                .iter()
                .zip(&lambda)
                .filter(|(&a, _)| a > 0)
                .map(|(_, l)| l)
                .sum();
            let t = shoe.total_racs() as f64;
            (mu > 0.0).then(|| (t * t - t) / (mu * mu))
        })
        .collect();
    let raw = if u.is_empty() {
        0.0
    } else {
        u.iter().sum::<f64>() / u.len() as f64 - 1.0
    };
    let var_a = raw.max(0.0);
    let variance: Vec<f64> = lambda
        .iter()
        .zip(&s)
        .map(|(&l, &m)| if m > 0 { (l * l * var_a + l) / m as f64 } else { f64::NAN })
        .collect();
    let mut fit = PixelFit::new(
        PixelMethod::Naive,
        dims,
        Grid::from_vec(dims.height, dims.width, lambda).expect("grid size"),
    );
    fit.variance = Grid::from_vec(dims.height, dims.width, variance);
    fit.var_a_hat = Some(var_a);
    fit.intercept_identified = true;
    if raw < 0.0 {
        fit.warnings
            .push("moment estimate of Var(a) was negative and has been set to 0".into());
    }
    Ok(fit)
}

/// Mean of the defined entries in each `(2h+1)²` window; undefined (NaN)
/// entries count in neither the sum nor the divisor.
pub fn kernel_smooth(values: &Grid<f64>, half_width: usize) -> Grid<f64> {
    let (h, w) = values.dims();
    // summed-area tables of values and of defined-entry counts
    let mut sum = vec![0.0; (h + 1) * (w + 1)];
    let mut cnt = vec![0u32; (h + 1) * (w + 1)];
    let at = |r: usize, c: usize| r * (w + 1) + c;
    for r in 0..h {
        for c in 0..w {
            let v = values[(r, c)];
            let (dv, dc) = if v.is_nan() { (0.0, 0) } else { (v, 1) };
            sum[at(r + 1, c + 1)] = dv + sum[at(r, c + 1)] + sum[at(r + 1, c)] - sum[at(r, c)];
            cnt[at(r + 1, c + 1)] = dc + cnt[at(r, c + 1)] + cnt[at(r + 1, c)] - cnt[at(r, c)];
        }
    }
    Grid::from_fn(h, w, |r, c| {
        let (r0, r1) = (r.saturating_sub(half_width), (r + half_width + 1).min(h));
        let (c0, c1) = (c.saturating_sub(half_width), (c + half_width + 1).min(w));
        let s = sum[at(r1, c1)] - sum[at(r0, c1)] - sum[at(r1, c0)] + sum[at(r0, c0)];
        let k = cnt[at(r1, c1)] + cnt[at(r0, c0)] - cnt[at(r0, c1)] - cnt[at(r1, c0)];
        if k == 0 {
            f64::NAN
        } else {
            s / f64::from(k)
        }
    })
}

/// Contact pixels of one shoe and whether each holds a RAC.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelCluster {
    pub shoe_id: String,
    pub pixels: Vec<(usize, usize)>,
    pub y: Vec<bool>,
}

/// Requires binarized counts.
pub fn pixel_clusters(shoes: &[StandardShoe]) -> Result<Vec<PixelCluster>> {
    common_dims(shoes)?;
    shoes
        .iter()
        .map(|shoe| {
            let mut pixels = Vec::new();
            let mut y = Vec::new();
            for (k, (&a, &n)) in shoe.contact().iter().zip(shoe.counts().iter()).enumerate() {
                if n > 1 {
                    return Err(Error::invalid(format!(
                        "shoe {} has {n} RACs in one pixel; binarize the counts first",
                        shoe.shoe_id
                    )));
                }
                if a > 0 {
                    pixels.push(shoe.contact().coords_of(k));
                    y.push(n == 1);
                }
            }
            Ok(PixelCluster {
                shoe_id: shoe.shoe_id.clone(),
                pixels,
                y,
            })
        })
        .collect()
}

pub fn cluster_outcomes(clusters: &[PixelCluster]) -> (Vec<Vec<bool>>, Vec<String>) {
    (
        clusters.iter().map(|c| c.y.clone()).collect(),
        clusters.iter().map(|c| c.shoe_id.clone()).collect(),
    )
}

/// Spline design over the retained pixels, with per-shoe offsets. With
/// `drop_intercept` the constant column is left out.
fn design(
    clusters: &[PixelCluster],
    sample: &Subsample,
    basis: &SplineBasis,
    dims: GridDims,
    drop_intercept: bool,
) -> Result<ClusteredData> {
    if sample.retained.len() != clusters.len() {
        return Err(Error::invalid("sub-sample does not match the shoes"));
    }
    let full = basis.dim();
    let skip = usize::from(drop_intercept);
    let p = full - skip;
    let mut row = vec![0.0; full];
    let mut out = Vec::new();
    for (i, (c, keep)) in clusters.iter().zip(&sample.retained).enumerate() {
        if keep.is_empty() {
            continue;
        }
        let has_controls = keep.iter().any(|&t| !c.y[t]);
        let offset = sample.meta.offset(i);
        if !offset.is_finite() || (!has_controls && c.y.iter().any(|v| !v)) {
            continue;
        }
        let mut x = Vec::with_capacity(keep.len() * p);
        let mut y = Vec::with_capacity(keep.len());
        for &t in keep {
            let (r, col) = c.pixels[t];
            let (u, v) = unit_coords(dims, r, col);
            basis.row_into(u, v, &mut row);
            x.extend_from_slice(&row[skip..]);
            y.push(c.y[t]);
        }
        out.push(Cluster {
            id: c.shoe_id.clone(),
            x,
            y,
            offset,
        });
    }
    ClusteredData::new(p, out)
}

/// `exp(g)` over pixels touched by any shoe.
fn surface(shoes: &[StandardShoe], spec: &SplineSpec, dims: GridDims) -> Grid<f64> {
    let mut touched = vec![false; dims.pixels()];
    for s in shoes {
        for (t, &a) in touched.iter_mut().zip(s.contact().iter()) {
            *t |= a > 0;
        }
    }
    Grid::from_fn(dims.height, dims.width, |r, c| {
        if touched[r * dims.width + c] {
            let (u, v) = unit_coords(dims, r, c);
            spec.eval(u, v).exp()
        } else {
            f64::NAN
        }
    })
}

fn to_rows(m: &nalgebra::DMatrix<f64>, size: usize, skip: usize) -> Vec<Vec<f64>> {
    (0..size)
        .map(|a| {
            (0..size)
                .map(|b| {
                    if a < skip || b < skip {
                        0.0
                    } else {
                        m[(a - skip, b - skip)]
                    }
                })
                .collect()
        })
        .collect()
}

/// Random-intercept logistic spline fit on a (sub-)sample of contact
/// pixels, with `a_i ~ N(0, θ²)` on the logit scale.
pub fn fit_re_pixel(
    shoes: &[StandardShoe],
    basis: &SplineBasis,
    quadrature_order: usize,
    sample: &Subsample,
) -> Result<PixelFit> {
    let dims = common_dims(shoes)?;
    let clusters = pixel_clusters(shoes)?;
    let data = design(&clusters, sample, basis, dims, false)?;
    if data.clusters.is_empty() {
        return Err(Error::invalid("no shoe contributes observations"));
    }
    let opt = glmm::fit_random_intercept(&data, quadrature_order)?;
    let p = basis.dim();
    let spec = SplineSpec::new(basis.clone(), opt.x[..p].to_vec())?;
    let cov = opt.covariance()?;
    let mut fit = PixelFit::new(PixelMethod::RandomEffects, dims, surface(shoes, &spec, dims));
    fit.covariance = Some(to_rows(&cov.view((0, 0), (p, p)).into_owned(), p, 0));
    fit.spline = Some(spec);
    fit.intercept_identified = true;
    fit.sigma_hat = Some(opt.x[p]);
    fit.log_likelihood = Some(opt.value);
    fit.iterations = Some(opt.iterations);
    fit.sample_meta = Some(sample.meta.clone());
    Ok(fit)
}

/// Conditional logistic spline fit given each shoe's RAC count; the
/// intercept is not identified and is fixed at zero.
pub fn fit_cml_pixel(shoes: &[StandardShoe], basis: &SplineBasis, sample: &Subsample) -> Result<PixelFit> {
    let dims = common_dims(shoes)?;
    let clusters = pixel_clusters(shoes)?;
    let data = design(&clusters, sample, basis, dims, true)?;
    let (opt, dropped) = glmm::fit_conditional(&data)?;
    let p = basis.dim();
    let mut beta = vec![0.0];
    beta.extend_from_slice(&opt.x);
    let spec = SplineSpec::new(basis.clone(), beta)?;
    let cov = opt.covariance()?;
    let mut fit = PixelFit::new(PixelMethod::Cml, dims, surface(shoes, &spec, dims));
    fit.covariance = Some(to_rows(&cov, p, 1));
    fit.spline = Some(spec);
    fit.log_likelihood = Some(opt.value);
    fit.iterations = Some(opt.iterations);
    fit.sample_meta = Some(sample.meta.clone());
    if !dropped.is_empty() {
        fit.warnings.push(format!(
            "{} shoes without both RAC and RAC-free pixels were dropped from the conditional likelihood",
            dropped.len()
        ));
    }
    fit.dropped_strata = dropped;
    Ok(fit)
}

/// Pointwise intervals at `(row, col)` pixels: `exp(ĝ ± z·sd)` for spline
/// fits, `λ̂ ± z·SE` floored at zero for the naive fit.
pub fn pointwise_ci(fit: &PixelFit, level: f64, at: &[(usize, usize)]) -> Result<Vec<Interval>> {
    let z = z_quantile(level)?;
    let check = |&(r, c): &(usize, usize)| -> Result<()> {
        if r >= fit.grid.height || c >= fit.grid.width {
            return Err(Error::invalid(format!("pixel ({r}, {c}) is outside the {} grid", fit.grid)));
        }
        Ok(())
    };
    match (&fit.spline, &fit.covariance) {
        (Some(spec), Some(cov)) => at
            .iter()
            .map(|px| {
                check(px)?;
                let (u, v) = unit_coords(fit.grid, px.0, px.1);
                let row = spec.basis.row(u, v);
                let g = spec.eval(u, v);
                let var: f64 = (0..row.len())
                    .map(|a| (0..row.len()).map(|b| row[a] * cov[a][b] * row[b]).sum::<f64>())
                    .sum();
                let sd = var.max(0.0).sqrt();
                Ok(Interval {
                    lo: (g - z * sd).exp(),
                    hi: (g + z * sd).exp(),
                    one_sided: false,
                })
            })
            .collect(),
        _ => {
            let var = fit
                .variance
                .as_ref()
                .ok_or_else(|| Error::InvalidState("fit has no covariance or variance".into()))?;
            at.iter()
                .map(|px| {
                    check(px)?;
                    let l = fit.lambda_hat[*px];
                    let sd = var[*px].max(0.0).sqrt();
                    Ok(Interval {
                        lo: (l - z * sd).max(0.0),
                        hi: l + z * sd,
                        one_sided: false,
                    })
                })
                .collect()
        }
    }
}
