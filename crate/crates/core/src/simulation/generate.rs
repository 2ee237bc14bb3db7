//! Data generators for the clustered-logistic and region-count designs.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::partitioning::Partition;
use crate::pixel::glmm::sigmoid;
use crate::shoe_data::{ShoeRecord, StandardShoe};

/// Distribution of the shoe wear factors `a_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum ALaw {
    /// Random intercept on the logit scale, `a ~ N(0, sd²)`.
    Normal { sd: f64 },
    Gamma { shape: f64, scale: f64 },
    Uniform { lo: f64, hi: f64 },
    /// `low` with probability `p`, `high` otherwise.
    ShiftedBernoulli { low: f64, high: f64, p: f64 },
    /// Observed RAC totals divided by their mean. With `resample` the
    /// values are drawn with replacement instead of kept shoe by shoe.
    Empirical { resample: bool },
    Constant { value: f64 },
}

impl ALaw {
    pub fn label(&self) -> &'static str {
        match self {
            ALaw::Normal { .. } => "normal",
            ALaw::Gamma { .. } => "gamma",
            ALaw::Uniform { .. } => "uniform",
            ALaw::ShiftedBernoulli { .. } => "shifted_bernoulli",
            ALaw::Empirical { .. } => "empirical",
            ALaw::Constant { .. } => "constant",
        }
    }

    /// `E(a)` where it is defined by the parameters alone.
    pub fn mean(&self) -> Option<f64> {
        match *self {
            ALaw::Normal { .. } => Some(0.0),
            ALaw::Gamma { shape, scale } => Some(shape * scale),
            ALaw::Uniform { lo, hi } => Some(0.5 * (lo + hi)),
            ALaw::ShiftedBernoulli { low, high, p } => Some(p * low + (1.0 - p) * high),
            ALaw::Empirical { .. } => Some(1.0),
            ALaw::Constant { value } => Some(value),
        }
    }

    pub fn variance(&self) -> Option<f64> {
        match *self {
            ALaw::Normal { sd } => Some(sd * sd),
            ALaw::Gamma { shape, scale } => Some(shape * scale * scale),
            ALaw::Uniform { lo, hi } => Some((hi - lo).powi(2) / 12.0),
            ALaw::ShiftedBernoulli { low, high, p } => Some(p * (1.0 - p) * (high - low).powi(2)),
            ALaw::Empirical { .. } => None,
            ALaw::Constant { .. } => Some(0.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            ALaw::Normal { sd } => sd >= 0.0 && sd.is_finite(),
            ALaw::Gamma { shape, scale } => shape > 0.0 && scale > 0.0 && shape.is_finite() && scale.is_finite(),
            ALaw::Uniform { lo, hi } => lo >= 0.0 && hi > lo && hi.is_finite(),
            ALaw::ShiftedBernoulli { low, high, p } => {
                low >= 0.0 && high >= 0.0 && high.is_finite() && (0.0..=1.0).contains(&p)
            }
            ALaw::Empirical { .. } => true,
            ALaw::Constant { value } => value >= 0.0 && value.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid parameters for wear law {self:?}")))
        }
    }

    /// Checks the law can serve as a multiplicative wear factor with `E(a)=1`.
    pub fn validate_multiplicative(&self) -> Result<()> {
        self.validate()?;
        if matches!(self, ALaw::Normal { .. }) {
            return Err(Error::invalid(
                "the normal wear law is an additive logit-scale effect; use it with the logistic design",
            ));
        }
        let mean = self.mean().unwrap_or(1.0);
        if (mean - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "wear law {} has mean {mean}, the region model requires E(a)=1",
                self.label()
            )));
        }
        Ok(())
    }
}

/// Draws `m` wear factors. `empirical` holds the observed totals used by
/// [`ALaw::Empirical`]; without resampling it must have at least `m` entries.
pub fn draw_wear(law: &ALaw, m: usize, empirical: &[f64], rng: &mut impl Rng) -> Result<Vec<f64>> {
    law.validate()?;
    let a = match *law {
        ALaw::Normal { sd } => {
            let d = Normal::new(0.0, sd).map_err(|e| Error::invalid(e.to_string()))?;
            (0..m).map(|_| d.sample(rng)).collect()
        }
        ALaw::Gamma { shape, scale } => {
            let d = Gamma::new(shape, scale).map_err(|e| Error::invalid(e.to_string()))?;
            (0..m).map(|_| d.sample(rng)).collect()
        }
        ALaw::Uniform { lo, hi } => (0..m).map(|_| rng.random_range(lo..hi)).collect(),
        ALaw::ShiftedBernoulli { low, high, p } => (0..m)
            .map(|_| if rng.random::<f64>() < p { low } else { high })
            .collect(),
        ALaw::Empirical { resample } => {
            if empirical.is_empty() {
                return Err(Error::invalid("empirical wear law needs observed totals"));
            }
            let mean = empirical.iter().sum::<f64>() / empirical.len() as f64;
            if !(mean > 0.0) {
                return Err(Error::invalid("observed totals must have a positive mean"));
            }
            if resample {
                (0..m)
                    .map(|_| empirical[rng.random_range(0..empirical.len())] / mean)
                    .collect()
            } else {
                if empirical.len() < m {
                    return Err(Error::invalid(format!(
                        "{m} shoes requested but only {} observed totals",
                        empirical.len()
                    )));
                }
                empirical[..m].iter().map(|n| n / mean).collect()
            }
        }
        ALaw::Constant { value } => vec![value; m],
    };
    Ok(a)
}

pub(crate) fn poisson(mean: f64, rng: &mut impl Rng) -> u32 {
    if mean <= 0.0 {
        return 0;
    }
    let d = Poisson::new(mean).expect("positive finite Poisson mean");
    d.sample(rng) as u32
}

/// Region counts `N_ij ~ Poisson(λ_j S_ij a_i)` for given areas and wear
/// factors.
pub fn generate_region(
    s_area: &[Vec<f64>],
    lambda: &[f64],
    wear: &[f64],
    rng: &mut impl Rng,
) -> Result<Vec<ShoeRecord>> {
    if s_area.len() != wear.len() {
        return Err(Error::invalid(format!(
            "{} contact surfaces but {} wear factors",
            s_area.len(),
            wear.len()
        )));
    }
    if let Some(l) = lambda.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
        return Err(Error::invalid(format!("intensities must be finite and non-negative, got {l}")));
    }
    s_area
        .iter()
        .zip(wear)
        .enumerate()
        .map(|(i, (s, &a))| {
            if s.len() != lambda.len() {
                return Err(Error::invalid(format!(
                    "shoe {i}: {} areas for {} intensities",
                    s.len(),
                    lambda.len()
                )));
            }
            let counts = s
                .iter()
                .zip(lambda)
                .map(|(&sij, &l)| poisson(l * sij * a, rng))
                .collect();
            ShoeRecord::new(format!("shoe{:04}", i + 1), s.clone(), counts)
        })
        .collect()
}

/// Clustered binary outcomes on a shared equispaced design.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticSample {
    /// Location of each observation, equispaced on `[0, 1]`.
    pub x: Vec<f64>,
    pub a: Vec<f64>,
    pub y: Vec<Vec<bool>>,
}

pub fn equispaced(size: usize) -> Vec<f64> {
    match size {
        0 => Vec::new(),
        1 => vec![0.5],
        _ => (0..size).map(|t| t as f64 / (size - 1) as f64).collect(),
    }
}

/// `P(y=1 | a_i) = logistic(β0 + β1 x + β2 x² + a_i)`, `a_i ~ N(0, a_sd²)`.
pub fn generate_logistic_with(
    m: usize,
    size: usize,
    beta: [f64; 3],
    a_sd: f64,
    rng: &mut impl Rng,
) -> Result<LogisticSample> {
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::invalid("coefficients must be finite"));
    }
    let x = equispaced(size);
    let a = draw_wear(&ALaw::Normal { sd: a_sd }, m, &[], rng)?;
    let base: Vec<f64> = x.iter().map(|&t| beta[0] + beta[1] * t + beta[2] * t * t).collect();
    let y = a
        .iter()
        .map(|&ai| base.iter().map(|&e| rng.random::<f64>() < sigmoid(e + ai)).collect())
        .collect();
    Ok(LogisticSample { x, a, y })
}

pub fn generate_logistic(m: usize, size: usize, beta: [f64; 3], a_sd: f64, seed: u64) -> Result<LogisticSample> {
    let mut rng = super::stream_rng(seed, 0);
    generate_logistic_with(m, size, beta, a_sd, &mut rng)
}

/// Places RACs on contact surfaces with piecewise-constant intensity over
/// `partition`: `N_ij ~ Poisson(λ_j A_ij a_i)` with `A_ij` the contact
/// pixel count, each RAC then dropped on a uniformly chosen contact pixel of
/// its cell.
pub fn place_racs(
    id: impl Into<String>,
    contact: Grid<u8>,
    partition: &Partition,
    lambda_per_pixel: &[f64],
    a: f64,
    rng: &mut impl Rng,
) -> Result<StandardShoe> {
    if lambda_per_pixel.len() != partition.len() {
        return Err(Error::invalid(format!(
            "{} intensities for {} cells",
            lambda_per_pixel.len(),
            partition.len()
        )));
    }
    if contact.dims() != partition.assignment().dims() {
        return Err(Error::invalid("contact grid and partition differ in size"));
    }
    let mut by_cell: Vec<Vec<usize>> = vec![Vec::new(); partition.len()];
    for (k, (&s, &j)) in contact.iter().zip(partition.assignment().iter()).enumerate() {
        if s == 1 {
            by_cell[j].push(k);
        }
    }
    let (h, w) = contact.dims();
    let mut counts = Grid::filled(h, w, 0u32);
    for (j, pixels) in by_cell.iter().enumerate() {
        let n = poisson(lambda_per_pixel[j] * pixels.len() as f64 * a, rng);
        for _ in 0..n {
            let k = pixels[rng.random_range(0..pixels.len())];
            counts.as_mut_slice()[k] += 1;
        }
    }
    StandardShoe::new(id, contact, counts)
}
