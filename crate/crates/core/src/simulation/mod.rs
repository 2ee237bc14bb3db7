//! Simulation designs, the scenario registry and the bias/MSE runner.

pub mod generate;
pub mod surfaces;

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::partitioning::{aggregate, expert_partition, grid_partition, Partition, RegionLayout};
use crate::pixel::glmm::{fit_conditional, fit_random_intercept, Cluster, ClusteredData};
use crate::region::{fit_cml_region, fit_re_region, naive_region, rescale_cml, Prior};
use crate::shoe_data::{GridDims, StandardShoe};
use crate::subsampling::{subsample, Allocation, Scheme};

pub use generate::{
    draw_wear, equispaced, generate_logistic, generate_logistic_with, generate_region, place_racs, ALaw,
    LogisticSample,
};
pub(crate) use crate::subsampling::stream_rng;
pub use surfaces::{sole_outline, synthetic_contact, SurfaceConfig};

/// Baseline region intensities used when no estimate from real prints is at
/// hand, ordered as the cells of the expert partition.
pub const BASELINE_LAMBDA: [f64; 14] = [
    20.14, 35.91, 35.03, 36.35, 27.59, 29.34, 28.03, 38.1, 37.66, 23.21, 35.91, 28.03, 35.03, 37.66,
];

/// Stand-in for a database of contact surfaces and observed RAC totals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolSpec {
    pub shoes: usize,
    pub height: usize,
    pub width: usize,
    #[serde(default)]
    pub surface: SurfaceConfig,
    /// Mean RAC total per shoe used for the empirical wear factors.
    pub avg_racs: f64,
    /// Gamma shape of the latent wear behind the observed totals.
    pub wear_shape: f64,
    pub seed: u64,
}

impl Default for PoolSpec {
    fn default() -> Self {
        Self {
            shoes: 386,
            height: 120,
            width: 93,
            surface: SurfaceConfig::default(),
            avg_racs: 34.0,
            wear_shape: 4.0,
            seed: 386,
        }
    }
}

impl PoolSpec {
    pub fn dims(&self) -> Result<GridDims> {
        GridDims::new(self.height, self.width)
    }

    fn validate(&self) -> Result<()> {
        self.dims()?;
        self.surface.validate()?;
        if self.shoes == 0 {
            return Err(Error::invalid("the surface pool needs at least one shoe"));
        }
        if !(self.avg_racs > 0.0 && self.wear_shape > 0.0) {
            return Err(Error::invalid("avg_racs and wear_shape must be positive"));
        }
        Ok(())
    }

    /// Contact grids of the pool.
    pub fn contact_surfaces(&self) -> Result<Vec<Grid<u8>>> {
        self.validate()?;
        let dims = self.dims()?;
        let mut rng = stream_rng(self.seed, 0);
        Ok((0..self.shoes)
            .map(|_| synthetic_contact(dims, &self.surface, &mut rng))
            .collect())
    }

    /// Observed RAC totals, `n_i ~ Poisson(avg_racs · g_i)` with gamma `g_i`
    /// of mean one.
    pub fn totals(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let mut rng = stream_rng(self.seed, 1);
        let law = ALaw::Gamma {
            shape: self.wear_shape,
            scale: 1.0 / self.wear_shape,
        };
        let g = draw_wear(&law, self.shoes, &[], &mut rng)?;
        Ok(g.iter()
            .map(|&gi| f64::from(generate::poisson(self.avg_racs * gi, &mut rng)))
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PartitionSpec {
    Expert {
        #[serde(default)]
        layout: RegionLayout,
    },
    Grid { bands: usize, columns: usize },
}

impl PartitionSpec {
    pub fn build(&self, dims: GridDims) -> Result<Partition> {
        match self {
            PartitionSpec::Expert { layout } => expert_partition(layout, dims),
            PartitionSpec::Grid { bands, columns } => grid_partition(dims, *bands, *columns),
        }
    }
}

/// Region counts `N_ij ~ Poisson(λ_j S_ij a_i)` on pooled contact surfaces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionDesign {
    pub shoes: usize,
    pub partition: PartitionSpec,
    pub lambda: Vec<f64>,
    pub a_law: ALaw,
    /// Draw the shoes' surfaces with replacement from the pool in every
    /// replication instead of using the first `shoes` of it.
    #[serde(default)]
    pub resample_surfaces: bool,
    #[serde(default)]
    pub pool: PoolSpec,
}

/// Clustered logistic outcomes fitted under every sub-sampling scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticDesign {
    pub clusters: usize,
    pub cluster_size: usize,
    pub beta: [f64; 3],
    pub a_sd: f64,
    pub allocation: Allocation,
    pub quadrature_order: usize,
    pub full_clusters: usize,
    pub full_cluster_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "design", rename_all = "snake_case")]
pub enum Design {
    RegionPoisson(RegionDesign),
    LogisticCluster(LogisticDesign),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub scenario_id: String,
    #[serde(default)]
    pub description: String,
    #[serde(flatten)]
    pub design: Design,
    pub replications: usize,
    pub full_replications: usize,
    pub seed: u64,
}

impl Scenario {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let sc: Scenario = serde_json::from_str(s)?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 || self.full_replications == 0 {
            return Err(Error::invalid(format!(
                "scenario {}: replications must be at least 1",
                self.scenario_id
            )));
        }
        match &self.design {
            Design::RegionPoisson(d) => {
                d.pool.validate()?;
                d.a_law.validate_multiplicative()?;
                if d.shoes == 0 {
                    return Err(Error::invalid("the region design needs at least one shoe"));
                }
                if !d.resample_surfaces && d.shoes > d.pool.shoes {
                    return Err(Error::invalid(format!(
                        "{} shoes requested from a pool of {} without resampling",
                        d.shoes, d.pool.shoes
                    )));
                }
                if matches!(d.a_law, ALaw::Empirical { resample: false }) && d.shoes > d.pool.shoes {
                    return Err(Error::invalid("empirical wear without resampling needs shoes <= pool size"));
                }
                let cells = d.partition.build(d.pool.dims()?)?.len();
                if d.lambda.len() != cells {
                    return Err(Error::invalid(format!(
                        "{} intensities for a partition of {cells} cells",
                        d.lambda.len()
                    )));
                }
                if d.lambda.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
                    return Err(Error::invalid("intensities must be finite and non-negative"));
                }
            }
            Design::LogisticCluster(d) => {
                ALaw::Normal { sd: d.a_sd }.validate()?;
                if d.clusters == 0 || d.cluster_size < 3 || d.full_clusters == 0 || d.full_cluster_size < 3 {
                    return Err(Error::invalid("logistic design needs clusters and at least 3 observations each"));
                }
                if d.quadrature_order == 0 {
                    return Err(Error::invalid("quadrature order must be positive"));
                }
                if d.beta.iter().any(|b| !b.is_finite()) {
                    return Err(Error::invalid("coefficients must be finite"));
                }
            }
        }
        Ok(())
    }

    /// The same scenario at its full replication count (and full cluster
    /// dimensions for the logistic design).
    pub fn at_full_scale(&self) -> Scenario {
        let mut sc = self.clone();
        sc.replications = sc.full_replications;
        if let Design::LogisticCluster(d) = &mut sc.design {
            d.clusters = d.full_clusters;
            d.cluster_size = d.full_cluster_size;
        }
        sc
    }
}

fn region_scenario(
    id: &str,
    description: &str,
    shoes: usize,
    lambda: Vec<f64>,
    a_law: ALaw,
    resample: bool,
    partition: PartitionSpec,
    seed: u64,
) -> Scenario {
    Scenario {
        scenario_id: id.into(),
        description: description.into(),
        design: Design::RegionPoisson(RegionDesign {
            shoes,
            partition,
            lambda,
            a_law,
            resample_surfaces: resample,
            pool: PoolSpec::default(),
        }),
        replications: 100,
        full_replications: 500,
        seed,
    }
}

/// Intensities of a `bands × columns` grid taken from the baseline region
/// containing each block's center.
pub fn grid_lambda_from_baseline(dims: GridDims, bands: usize, columns: usize) -> Result<Vec<f64>> {
    let expert = expert_partition(&RegionLayout::default(), dims)?;
    let grid = grid_partition(dims, bands, columns)?;
    Ok(grid
        .cells()
        .iter()
        .map(|cell| {
            let k = cell.pixels.len() as f64;
            let r = cell.pixels.iter().map(|p| p.0 as f64).sum::<f64>() / k;
            let c = cell.pixels.iter().map(|p| p.1 as f64).sum::<f64>() / k;
            BASELINE_LAMBDA[expert.assignment()[(r.round() as usize, c.round() as usize)]]
        })
        .collect())
}

/// The logistic sub-sampling study followed by the twelve region-count
/// comparisons.
pub fn builtin_scenarios() -> Vec<Scenario> {
    let expert = || PartitionSpec::Expert {
        layout: RegionLayout::default(),
    };
    let base = BASELINE_LAMBDA.to_vec();
    let empirical = ALaw::Empirical { resample: false };
    let resampled = ALaw::Empirical { resample: true };
    let dims = PoolSpec::default().dims().expect("default pool grid");
    let grid36 = grid_lambda_from_baseline(dims, 9, 4).expect("default grid partition");

    let mut half = vec![16.0; 7];
    half.extend([48.0; 7]);
    let mut spike = vec![2.5; 14];
    spike[7] = 416.0;

    vec![
        Scenario {
            scenario_id: "subsampling_logistic".into(),
            description: "clustered logistic outcomes fitted on the full data and under four sub-sampling schemes".into(),
            design: Design::LogisticCluster(LogisticDesign {
                clusters: 100,
                cluster_size: 200,
                beta: [-3.0, 2.0, -2.0],
                a_sd: 0.75,
                allocation: Allocation::PerCase(2.0),
                quadrature_order: crate::pixel::DEFAULT_QUADRATURE_ORDER,
                full_clusters: 500,
                full_cluster_size: 500,
            }),
            replications: 50,
            full_replications: 300,
            seed: 61,
        },
        region_scenario("scenario_00_baseline", "baseline intensities, 386 shoes, empirical wear", 386, base.clone(), empirical.clone(), false, expert(), 100),
        region_scenario("scenario_01_equal_lambda", "all intensities equal to 32", 386, vec![32.0; 14], empirical.clone(), false, expert(), 101),
        region_scenario("scenario_02_half_small_half_large", "seven intensities of 16 and seven of 48", 386, half, empirical.clone(), false, expert(), 102),
        region_scenario("scenario_03_one_large", "intensities of 2.5 except one of 416", 386, spike, empirical.clone(), false, expert(), 103),
        region_scenario("scenario_04_36_regions", "36 rectangular regions", 386, grid36, empirical.clone(), false, PartitionSpec::Grid { bands: 9, columns: 4 }, 104),
        region_scenario("scenario_05_500_shoes", "500 shoes, surfaces and wear resampled independently", 500, base.clone(), resampled.clone(), true, expert(), 105),
        region_scenario("scenario_06_1000_shoes", "1000 shoes, surfaces and wear resampled independently", 1000, base.clone(), resampled.clone(), true, expert(), 106),
        region_scenario("scenario_07_386_resampled", "386 pooled surfaces with resampled wear", 386, base.clone(), resampled, false, expert(), 107),
        region_scenario("scenario_08_gamma_wear", "gamma wear with shape 1/3 and scale 3", 386, base.clone(), ALaw::Gamma { shape: 1.0 / 3.0, scale: 3.0 }, false, expert(), 108),
        region_scenario("scenario_09_constant_wear", "constant wear a = 1", 386, base.clone(), ALaw::Constant { value: 1.0 }, false, expert(), 109),
        region_scenario("scenario_10_uniform_wear", "uniform wear on (0, 2)", 386, base.clone(), ALaw::Uniform { lo: 0.0, hi: 2.0 }, false, expert(), 110),
        region_scenario("scenario_11_shifted_bernoulli_wear", "wear 0.5 or 1.5 with equal probability", 386, base, ALaw::ShiftedBernoulli { low: 0.5, high: 1.5, p: 0.5 }, false, expert(), 111),
    ]
}

pub fn find_scenario(id: &str) -> Option<Scenario> {
    builtin_scenarios().into_iter().find(|s| s.scenario_id == id)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub method: String,
    pub cell: String,
    pub truth: f64,
    pub mean: f64,
    pub bias: f64,
    pub variance: f64,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub mean_abs_bias: f64,
    pub mean_mse: f64,
    pub successes: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub method: String,
    pub replication: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub scenario_id: String,
    pub replications: usize,
    pub seed: u64,
    pub cells: Vec<CellStats>,
    pub summary: Vec<MethodSummary>,
    pub failures: Vec<Failure>,
}

impl ComparisonTable {
    pub fn cell(&self, method: &str, cell: &str) -> Option<&CellStats> {
        self.cells.iter().find(|c| c.method == method && c.cell == cell)
    }

    pub fn method(&self, method: &str) -> Option<&MethodSummary> {
        self.summary.iter().find(|s| s.method == method)
    }

    /// Long format: one row per method and cell.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["scenario", "method", "cell", "bias", "mse"])?;
        for c in &self.cells {
            out.write_record([
                self.scenario_id.as_str(),
                &c.method,
                &c.cell,
                &c.bias.to_string(),
                &c.mse.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    /// One row: mean MSE per method, then mean absolute bias per method,
    /// then failure counts.
    pub fn write_summary_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["scenario".to_string()];
        let mut row = vec![self.scenario_id.clone()];
        for s in &self.summary {
            header.push(format!("mean_mse_{}", s.method));
            row.push(s.mean_mse.to_string());
        }
        for s in &self.summary {
            header.push(format!("mean_abs_bias_{}", s.method));
            row.push(s.mean_abs_bias.to_string());
        }
        for s in &self.summary {
            header.push(format!("failures_{}", s.method));
            row.push(s.failures.to_string());
        }
        out.write_record(&header)?;
        out.write_record(&row)?;
        out.flush()?;
        Ok(())
    }
}

/// Per-replication estimates: one entry per method, `Err` on failure.
type RepResult = Vec<std::result::Result<Vec<f64>, String>>;

struct Layout {
    methods: Vec<String>,
    cells: Vec<String>,
    truth: Vec<f64>,
}

fn finite(v: Vec<f64>) -> std::result::Result<Vec<f64>, String> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(j) => Err(format!("estimate of cell {j} is not finite")),
        None => Ok(v),
    }
}

fn tabulate(sc: &Scenario, layout: Layout, reps: Vec<RepResult>) -> ComparisonTable {
    let j = layout.cells.len();
    let mut cells = Vec::new();
    let mut summary = Vec::new();
    let mut failures = Vec::new();
    for (k, method) in layout.methods.iter().enumerate() {
        let mut ok: Vec<&Vec<f64>> = Vec::new();
        for (r, rep) in reps.iter().enumerate() {
            match &rep[k] {
                Ok(v) => ok.push(v),
                Err(e) => failures.push(Failure {
                    method: method.clone(),
                    replication: r,
                    message: e.clone(),
                }),
            }
        }
        let n = ok.len() as f64;
        let mut abs_bias = 0.0;
        let mut mse_sum = 0.0;
        for c in 0..j {
            let truth = layout.truth[c];
            let (mean, variance, mse) = if ok.is_empty() {
                (f64::NAN, f64::NAN, f64::NAN)
            } else {
                let mean = ok.iter().map(|v| v[c]).sum::<f64>() / n;
                let variance = ok.iter().map(|v| (v[c] - mean).powi(2)).sum::<f64>() / n;
                let mse = ok.iter().map(|v| (v[c] - truth).powi(2)).sum::<f64>() / n;
                (mean, variance, mse)
            };
            let bias = mean - truth;
            abs_bias += bias.abs();
            mse_sum += mse;
            cells.push(CellStats {
                method: method.clone(),
                cell: layout.cells[c].clone(),
                truth,
                mean,
                bias,
                variance,
                mse,
            });
        }
        summary.push(MethodSummary {
            method: method.clone(),
            mean_abs_bias: abs_bias / j as f64,
            mean_mse: mse_sum / j as f64,
            successes: ok.len(),
            failures: reps.len() - ok.len(),
        });
    }
    ComparisonTable {
        scenario_id: sc.scenario_id.clone(),
        replications: reps.len(),
        seed: sc.seed,
        cells,
        summary,
        failures,
    }
}

/// Runs every replication of a scenario in parallel and reduces them in
/// replication order. Replication `r` draws from stream `r + 1` of the
/// scenario seed.
pub fn run_scenario(sc: &Scenario) -> Result<ComparisonTable> {
    sc.validate()?;
    match &sc.design {
        Design::RegionPoisson(d) => run_region(sc, d),
        Design::LogisticCluster(d) => run_logistic(sc, d),
    }
}

pub const REGION_METHODS: [&str; 3] = ["naive", "random_effects", "cml"];

/// Pooled contact areas on `partition`, normalized by the mean total
/// contact area so that `Σ_j S_ij` averages one.
pub fn pool_areas(pool: &PoolSpec, partition: &Partition) -> Result<Vec<Vec<f64>>> {
    let dims = pool.dims()?;
    let zero = Grid::filled(dims.height, dims.width, 0u32);
    let raw: Vec<Vec<f64>> = pool
        .contact_surfaces()?
        .into_iter()
        .enumerate()
        .map(|(i, c)| {
            let shoe = StandardShoe::new(format!("pool{i}"), c, zero.clone())?;
            Ok(aggregate(&shoe, partition)?.s_area)
        })
        .collect::<Result<_>>()?;
    let mean_total = raw.iter().map(|s| s.iter().sum::<f64>()).sum::<f64>() / raw.len() as f64;
    Ok(raw
        .into_iter()
        .map(|s| s.into_iter().map(|v| v / mean_total).collect())
        .collect())
}

fn run_region(sc: &Scenario, d: &RegionDesign) -> Result<ComparisonTable> {
    let partition = d.partition.build(d.pool.dims()?)?;
    let areas = pool_areas(&d.pool, &partition)?;
    let totals = d.pool.totals()?;

    let reps: Vec<RepResult> = (0..sc.replications)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(sc.seed, r as u64 + 1);
            let s: Vec<Vec<f64>> = if d.resample_surfaces {
                (0..d.shoes)
                    .map(|_| areas[rng.random_range(0..areas.len())].clone())
                    .collect()
            } else {
                areas[..d.shoes].to_vec()
            };
            let data = draw_wear(&d.a_law, d.shoes, &totals, &mut rng)
                .and_then(|a| generate_region(&s, &d.lambda, &a, &mut rng));
            let data = match data {
                Ok(x) => x,
                Err(e) => return vec![Err(e.to_string()); REGION_METHODS.len()],
            };
            let naive = naive_region(&data);
            let re = fit_re_region(&data, Prior::Gamma);
            let cml = match (fit_cml_region(&data), &naive) {
                (Ok(c), Ok(n)) => rescale_cml(&c, n),
                (Err(e), _) => Err(e),
                (Ok(_), Err(e)) => Err(Error::InvalidState(format!("no naive fit to rescale against: {e}"))),
            };
            [naive, re, cml]
                .into_iter()
                .map(|f| f.map_err(|e| e.to_string()).and_then(|f| finite(f.lambda_hat)))
                .collect()
        })
        .collect();

    let layout = Layout {
        methods: REGION_METHODS.iter().map(|s| s.to_string()).collect(),
        cells: partition.cells().iter().map(|c| c.label.clone()).collect(),
        truth: d.lambda.clone(),
    };
    Ok(tabulate(sc, layout, reps))
}

/// Method label of a logistic-design estimator under a scheme.
pub fn logistic_method(estimator: &str, scheme: Scheme) -> String {
    format!("{estimator}/{}", scheme.label())
}

fn logistic_data(
    sample: &LogisticSample,
    retained: &[Vec<usize>],
    offsets: &[f64],
    intercept: bool,
) -> Result<ClusteredData> {
    let p = if intercept { 3 } else { 2 };
    let clusters = retained
        .iter()
        .enumerate()
        .filter(|(_, keep)| !keep.is_empty())
        .map(|(i, keep)| {
            let mut x = Vec::with_capacity(keep.len() * p);
            for &t in keep {
                let v = sample.x[t];
                if intercept {
                    x.push(1.0);
                }
                x.extend([v, v * v]);
            }
            Cluster {
                id: format!("c{i}"),
                x,
                y: keep.iter().map(|&t| sample.y[i][t]).collect(),
                offset: offsets[i],
            }
        })
        .collect();
    ClusteredData::new(p, clusters)
}

fn run_logistic(sc: &Scenario, d: &LogisticDesign) -> Result<ComparisonTable> {
    let ids: Vec<String> = (0..d.clusters).map(|i| format!("c{i}")).collect();
    let reps: Vec<RepResult> = (0..sc.replications)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(sc.seed, r as u64 + 1);
            let sample = match generate_logistic_with(d.clusters, d.cluster_size, d.beta, d.a_sd, &mut rng) {
                Ok(s) => s,
                Err(e) => return vec![Err(e.to_string()); 2 * Scheme::ALL.len()],
            };
            let sub_seed: u64 = rng.random();
            let mut out = Vec::with_capacity(2 * Scheme::ALL.len());
            for scheme in Scheme::ALL {
                let sub = subsample(&sample.y, &ids, scheme, d.allocation, sub_seed);
                let (re, cml) = match sub {
                    Ok(sub) => {
                        let offsets: Vec<f64> = (0..d.clusters).map(|i| sub.meta.offset(i)).collect();
                        let re = logistic_data(&sample, &sub.retained, &offsets, true)
                            .and_then(|data| fit_random_intercept(&data, d.quadrature_order))
                            .map(|o| vec![o.x[1], o.x[2]]);
                        let cml = logistic_data(&sample, &sub.retained, &offsets, false)
                            .and_then(|data| fit_conditional(&data))
                            .map(|(o, _)| vec![o.x[0], o.x[1]]);
                        (re, cml)
                    }
                    Err(e) => (Err(Error::InvalidState(e.to_string())), Err(e)),
                };
                out.push(re.map_err(|e| e.to_string()).and_then(finite));
                out.push(cml.map_err(|e| e.to_string()).and_then(finite));
            }
            out
        })
        .collect();

    let methods = Scheme::ALL
        .iter()
        .flat_map(|&s| [logistic_method("re", s), logistic_method("cml", s)])
        .collect();
    let layout = Layout {
        methods,
        cells: vec!["beta1".into(), "beta2".into()],
        truth: vec![d.beta[1], d.beta[2]],
    };
    Ok(tabulate(sc, layout, reps))
}

/// Settings of a synthetic pixel-level data set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub shoes: usize,
    pub grid: GridDims,
    /// Expected RAC total of a shoe with average contact area and `a = 1`.
    pub avg_racs: f64,
    pub surface: SurfaceConfig,
    /// Relative intensity per expert region; uniform when empty.
    #[serde(default)]
    pub relative_lambda: Vec<f64>,
    #[serde(default)]
    pub layout: RegionLayout,
    pub a_law: ALaw,
    pub seed: u64,
}

/// Synthetic shoes: contact surfaces, then RACs from the piecewise-constant
/// intensity scaled to `avg_racs`, each shoe scaled by its wear factor.
pub fn generate_dataset(cfg: &DatasetConfig) -> Result<Vec<StandardShoe>> {
    if cfg.shoes == 0 {
        return Err(Error::invalid("at least one shoe is required"));
    }
    if !(cfg.avg_racs > 0.0 && cfg.avg_racs.is_finite()) {
        return Err(Error::invalid(format!("avg_racs must be positive, got {}", cfg.avg_racs)));
    }
    cfg.surface.validate()?;
    cfg.a_law.validate_multiplicative()?;
    if matches!(cfg.a_law, ALaw::Empirical { .. }) {
        return Err(Error::invalid("empirical wear needs observed totals and cannot drive a synthetic data set"));
    }
    let partition = expert_partition(&cfg.layout, cfg.grid)?;
    let relative = if cfg.relative_lambda.is_empty() {
        vec![1.0; partition.len()]
    } else {
        cfg.relative_lambda.clone()
    };
    if relative.len() != partition.len() || relative.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
        return Err(Error::invalid(format!(
            "relative intensities must be {} finite non-negative values",
            partition.len()
        )));
    }

    let mut surface_rng = stream_rng(cfg.seed, 0);
    let contacts: Vec<Grid<u8>> = (0..cfg.shoes)
        .map(|_| synthetic_contact(cfg.grid, &cfg.surface, &mut surface_rng))
        .collect();
    let mut mass = 0.0;
    for c in &contacts {
        for (&s, &j) in c.iter().zip(partition.assignment().iter()) {
            mass += f64::from(s) * relative[j];
        }
    }
    mass /= cfg.shoes as f64;
    if !(mass > 0.0) {
        return Err(Error::invalid("the intensity surface has no mass on the contact surfaces"));
    }
    let per_pixel: Vec<f64> = relative.iter().map(|l| l * cfg.avg_racs / mass).collect();

    let wear = draw_wear(&cfg.a_law, cfg.shoes, &[], &mut stream_rng(cfg.seed, 1))?;
    let mut rng = stream_rng(cfg.seed, 2);
    let width = cfg.shoes.to_string().len().max(3);
    contacts
        .into_iter()
        .zip(wear)
        .enumerate()
        .map(|(i, (c, a))| place_racs(format!("S{:0width$}", i + 1), c, &partition, &per_pixel, a, &mut rng))
        .collect()
}
