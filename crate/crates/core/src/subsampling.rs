//! Case-control sub-sampling of clustered binary data and the offsets that
//! keep slope estimates consistent.
//!
//! A cluster is one shoe's contact pixels (or one simulated cluster); a case
//! is an observation with an event. Under sampling probabilities `ρ1` for
//! cases and `ρ0` for controls the retained data follow the original
//! logistic model with the linear predictor shifted by `log(ρ1/ρ0)`.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Every observation.
    Full,
    /// Simple random sample of the pooled observations.
    Random,
    /// All cases plus controls drawn from the pooled controls.
    CcPooled,
    /// All cases plus controls per cluster in proportion to cluster size.
    CcWithinPropSize,
    /// All cases plus controls per cluster in proportion to its cases.
    CcWithinPropCases,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [
        Scheme::Full,
        Scheme::Random,
        Scheme::CcPooled,
        Scheme::CcWithinPropSize,
        Scheme::CcWithinPropCases,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Scheme::Full => "full",
            Scheme::Random => "random",
            Scheme::CcPooled => "cc_pooled",
            Scheme::CcWithinPropSize => "cc_within_prop_size",
            Scheme::CcWithinPropCases => "cc_within_prop_cases",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.label() == s)
            .ok_or_else(|| Error::invalid(format!("unknown sub-sampling scheme '{s}'")))
    }
}

/// How many controls to draw. The pooled and size-proportional schemes
/// turn this into a total budget; the case-proportional scheme applies it
/// per cluster.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Allocation {
    PerCase(f64),
    PerShoe(usize),
    Total(usize),
}

impl Allocation {
    fn budget(&self, cases: usize, clusters: usize) -> f64 {
        match *self {
            Allocation::PerCase(k) => k * cases as f64,
            Allocation::PerShoe(c) => (c * clusters) as f64,
            Allocation::Total(b) => b as f64,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Allocation::PerCase(k) if !(k.is_finite() && k >= 0.0) => {
                Err(Error::invalid(format!("controls per case must be non-negative, got {k}")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsampleMeta {
    pub scheme: Scheme,
    #[serde(default)]
    pub allocation: Option<Allocation>,
    pub seed: u64,
    pub shoe_ids: Vec<String>,
    /// Realized fraction of cases retained, per cluster.
    pub rho1: Vec<f64>,
    /// Realized fraction of controls retained, per cluster.
    pub rho0: Vec<f64>,
    pub cases: Vec<usize>,
    pub controls_retained: Vec<usize>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl SubsampleMeta {
    pub fn offset_for(&self, shoe_id: &str) -> Result<f64> {
        let i = self
            .shoe_ids
            .iter()
            .position(|s| s == shoe_id)
            .ok_or_else(|| Error::Lookup(format!("shoe '{shoe_id}' is not in the sample")))?;
        Ok(self.offset(i))
    }

    /// `log(ρ1/ρ0)` of cluster `i`.
    pub fn offset(&self, i: usize) -> f64 {
        (self.rho1[i] / self.rho0[i]).ln()
    }
}

pub fn offset_for(meta: &SubsampleMeta, shoe_id: &str) -> Result<f64> {
    meta.offset_for(shoe_id)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Subsample {
    /// Retained observation indices per cluster, ascending.
    pub retained: Vec<Vec<usize>>,
    pub meta: SubsampleMeta,
}

/// Event probability in the sub-sample given the original probability `p`.
pub fn adjusted_probability(p: f64, rho1: f64, rho0: f64) -> f64 {
    if p == 0.0 {
        return 0.0;
    }
    rho1 * p / (rho0 * (1.0 - p) + rho1 * p)
}

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Integer part plus a Bernoulli draw for the fraction, so the expectation
/// is exact.
fn randomized_round(x: f64, rng: &mut impl Rng) -> usize {
    let base = x.floor();
    let extra = usize::from(rng.random::<f64>() < x - base);
    base as usize + extra
}

/// Draws a sub-sample. `y[i][t]` marks observation `t` of cluster `i` as a
/// case.
pub fn subsample(
    y: &[Vec<bool>],
    ids: &[String],
    scheme: Scheme,
    allocation: Allocation,
    seed: u64,
) -> Result<Subsample> {
    if y.len() != ids.len() {
        return Err(Error::invalid("one identifier per cluster is required"));
    }
    allocation.validate()?;
    let m = y.len();
    let cases: Vec<Vec<usize>> = y
        .iter()
        .map(|c| (0..c.len()).filter(|&t| c[t]).collect())
        .collect();
    let controls: Vec<Vec<usize>> = y
        .iter()
        .map(|c| (0..c.len()).filter(|&t| !c[t]).collect())
        .collect();
    let n_cases: usize = cases.iter().map(Vec::len).sum();
    let n_controls: usize = controls.iter().map(Vec::len).sum();
    let mut warnings = Vec::new();
    let mut retained: Vec<Vec<usize>> = cases.clone();
    let mut rho1 = vec![1.0; m];
    let mut rho0 = vec![1.0; m];

    let cap = |want: usize, avail: usize, who: &str, warnings: &mut Vec<String>| {
        if want > avail {
            warnings.push(format!(
                "{who}: {want} controls requested but only {avail} available; all taken"
            ));
            avail
        } else {
            want
        }
    };

    match scheme {
        Scheme::Full => {
            retained = y.iter().map(|c| (0..c.len()).collect()).collect();
        }
        Scheme::Random => {
            let total = n_cases + n_controls;
            let mut rng = stream_rng(seed, 0);
            let want = randomized_round(allocation.budget(n_cases, m) + n_cases as f64, &mut rng);
            let take = cap(want, total, "pooled sample", &mut warnings);
            let mut picked = index::sample(&mut rng, total, take).into_vec();
            picked.sort_unstable();
            retained = vec![Vec::new(); m];
            let mut starts = Vec::with_capacity(m);
            let mut acc = 0;
            for c in y {
                starts.push(acc);
                acc += c.len();
            }
            let mut i = 0;
            for g in picked {
                while i + 1 < m && g >= starts[i + 1] {
                    i += 1;
                }
                retained[i].push(g - starts[i]);
            }
            let frac = if total > 0 { take as f64 / total as f64 } else { 1.0 };
            rho1 = vec![frac; m];
            rho0 = vec![frac; m];
        }
        Scheme::CcPooled => {
            let mut rng = stream_rng(seed, 0);
            let want = randomized_round(allocation.budget(n_cases, m), &mut rng);
            let take = cap(want, n_controls, "pooled controls", &mut warnings);
            let pooled: Vec<(usize, usize)> = controls
                .iter()
                .enumerate()
                .flat_map(|(i, c)| c.iter().map(move |&t| (i, t)))
                .collect();
            for k in index::sample(&mut rng, n_controls, take).into_vec() {
                let (i, t) = pooled[k];
                retained[i].push(t);
            }
            let frac = if n_controls > 0 { take as f64 / n_controls as f64 } else { 1.0 };
            rho0 = vec![frac; m];
        }
        Scheme::CcWithinPropSize | Scheme::CcWithinPropCases => {
            let sizes: usize = y.iter().map(Vec::len).sum();
            let budget = allocation.budget(n_cases, m);
            for i in 0..m {
                let mut rng = stream_rng(seed, i as u64 + 1);
                let quota = match (scheme, allocation) {
                    (Scheme::CcWithinPropSize, _) => {
                        if sizes == 0 {
                            0.0
                        } else {
                            budget * y[i].len() as f64 / sizes as f64
                        }
                    }
                    (_, Allocation::PerCase(k)) => k * cases[i].len() as f64,
                    (_, Allocation::PerShoe(c)) => c as f64,
                    (_, Allocation::Total(b)) => {
                        if n_cases == 0 {
                            0.0
                        } else {
                            b as f64 * cases[i].len() as f64 / n_cases as f64
                        }
                    }
                };
                let want = randomized_round(quota, &mut rng);
                let avail = controls[i].len();
                let take = cap(want, avail, &format!("cluster {}", ids[i]), &mut warnings);
                for k in index::sample(&mut rng, avail, take).into_vec() {
                    retained[i].push(controls[i][k]);
                }
                rho0[i] = if avail > 0 { take as f64 / avail as f64 } else { 1.0 };
            }
        }
    }
    for r in &mut retained {
        r.sort_unstable();
    }
    let controls_retained = retained
        .iter()
        .zip(y)
        .map(|(r, c)| r.iter().filter(|&&t| !c[t]).count())
        .collect();
    let meta = SubsampleMeta {
        scheme,
        allocation: (scheme != Scheme::Full).then_some(allocation),
        seed,
        shoe_ids: ids.to_vec(),
        rho1,
        rho0,
        cases: cases.iter().map(Vec::len).collect(),
        controls_retained,
        warnings,
    };
    Ok(Subsample { retained, meta })
}
