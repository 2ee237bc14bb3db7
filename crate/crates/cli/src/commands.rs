use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use rac_intensity::partitioning::RegionLayout;
use rac_intensity::pixel::{cluster_outcomes, pixel_clusters};
use rac_intensity::shoe_data::{
    binarize_counts, descriptive_stats, normalize as normalize_print, read_raw_print_json, read_shoes,
    write_shoes_csv, GridDims, ShoeFile, StandardShoe,
};
use rac_intensity::simulation::{
    find_scenario, generate_dataset, builtin_scenarios, run_scenario, ALaw, DatasetConfig, Scenario,
    SurfaceConfig, BASELINE_LAMBDA,
};
use rac_intensity::subsampling::subsample as draw_subsample;
use serde::Serialize;

use crate::output::{existing, Output, RunConfig};
use crate::{
    ALawArg, CliError, FormatArg, GenerateArgs, LambdaArg, NormalizeArgs, Outcome, ScenariosArgs,
    SimulateArgs, StatsArgs, SubsampleArgs,
};

pub const DEFAULT_SEED: u64 = 1;

pub struct Context {
    pub out_dir: PathBuf,
    pub seed: Option<u64>,
    pub verbose: u8,
    pub command: &'static str,
}

impl Context {
    pub fn output(&self, seed: Option<u64>, params: &impl Serialize) -> Result<Output, CliError> {
        let params = serde_json::to_value(params).map_err(rac_intensity::Error::from)?;
        Output::create(RunConfig {
            version: crate::VERSION.to_string(),
            command: self.command.to_string(),
            seed,
            out_dir: self.out_dir.clone(),
            verbosity: self.verbose,
            params,
        })
    }

    pub fn seed_or_default(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    pub fn log(&self, msg: impl AsRef<str>) {
        if self.verbose > 0 {
            eprintln!("{}", msg.as_ref());
        }
    }
}

pub fn parse_grid(s: &str) -> Result<GridDims, CliError> {
    s.parse::<GridDims>().map_err(|e| CliError::Usage(e.to_string()))
}

pub fn load_shoes(path: &Path, grid: GridDims) -> Result<Vec<StandardShoe>, CliError> {
    let shoes = read_shoes(path, grid)?;
    if shoes.is_empty() {
        return Err(CliError::Data(format!("{} holds no shoes", path.display())));
    }
    Ok(shoes)
}

/// Binary copies of the shoes and the number of pixels that held more than
/// one RAC.
pub fn binarized(shoes: &[StandardShoe]) -> (Vec<StandardShoe>, usize) {
    let mut changed = 0;
    let out = shoes
        .iter()
        .map(|s| {
            let (b, k) = binarize_counts(s);
            changed += k;
            b
        })
        .collect();
    (out, changed)
}

#[derive(Serialize)]
struct ShoeDataset<'a> {
    dataset: &'a DatasetConfig,
    mean_racs: f64,
    shoes: Vec<ShoeFile>,
}

#[derive(Serialize)]
struct DatasetSummary<'a> {
    dataset: &'a DatasetConfig,
    mean_racs: f64,
    data_file: &'a Path,
}

pub fn generate(ctx: &Context, args: GenerateArgs) -> Result<Outcome, CliError> {
    let grid = parse_grid(&args.grid)?;
    if args.shoes == 0 {
        return Err(CliError::Usage("--shoes must be positive".into()));
    }
    if !(args.avg_racs > 0.0 && args.avg_racs.is_finite()) {
        return Err(CliError::Usage("--avg-racs must be positive".into()));
    }
    if !(args.coverage > 0.0 && args.coverage <= 1.0) {
        return Err(CliError::Usage("--coverage must lie in (0, 1]".into()));
    }
    let spread = args
        .coverage_spread
        .unwrap_or(if args.coverage >= 1.0 { 0.0 } else { 0.25 });
    if !(spread >= 0.0 && spread.is_finite()) {
        return Err(CliError::Usage("--coverage-spread must be non-negative".into()));
    }
    let a_law = match args.a_law {
        ALawArg::Gamma if args.a_var > 0.0 && args.a_var.is_finite() => ALaw::Gamma {
            shape: 1.0 / args.a_var,
            scale: args.a_var,
        },
        ALawArg::Gamma => return Err(CliError::Usage("--a-var must be positive".into())),
        ALawArg::Constant => ALaw::Constant { value: 1.0 },
        ALawArg::Uniform => ALaw::Uniform { lo: 0.0, hi: 2.0 },
        ALawArg::ShiftedBernoulli => ALaw::ShiftedBernoulli {
            low: 0.5,
            high: 1.5,
            p: 0.5,
        },
    };
    let seed = ctx.seed_or_default();
    let cfg = DatasetConfig {
        shoes: args.shoes,
        grid,
        avg_racs: args.avg_racs,
        surface: SurfaceConfig {
            coverage: args.coverage,
            spread,
            ..SurfaceConfig::default()
        },
        relative_lambda: match args.lambda {
            LambdaArg::Uniform => Vec::new(),
            LambdaArg::Baseline => BASELINE_LAMBDA.to_vec(),
        },
        layout: RegionLayout::default(),
        a_law,
        seed,
    };
    let mut out = ctx.output(Some(seed), &args)?;
    ctx.log(format!("generating {} shoes on a {grid} grid", args.shoes));
    let shoes = generate_dataset(&cfg)?;
    let mean_racs = shoes.iter().map(|s| s.total_racs() as f64).sum::<f64>() / shoes.len() as f64;
    match args.format {
        FormatArg::Json => {
            out.json(
                &format!("{}.json", args.name),
                &ShoeDataset {
                    dataset: &cfg,
                    mean_racs,
                    shoes: shoes.iter().map(ShoeFile::from_shoe).collect(),
                },
            )?;
        }
        FormatArg::Csv => {
            let data = out.csv(&format!("{}.csv", args.name), |w| write_shoes_csv(w, &shoes))?;
            out.json(
                &format!("{}_dataset.json", args.name),
                &DatasetSummary {
                    dataset: &cfg,
                    mean_racs,
                    data_file: &data,
                },
            )?;
        }
    }
    Ok(Outcome {
        files: out.written().to_vec(),
    })
}

#[derive(Serialize)]
struct Shoes {
    shoes: Vec<ShoeFile>,
}

pub fn normalize(ctx: &Context, mut args: NormalizeArgs) -> Result<Outcome, CliError> {
    let grid = parse_grid(&args.grid)?;
    args.input = existing(&args.input)?;
    let file = File::open(&args.input).map_err(|e| CliError::io(&args.input, e))?;
    let prints = read_raw_print_json(BufReader::new(file))?;
    let shoes = prints
        .iter()
        .map(|p| normalize_print(p, grid))
        .collect::<rac_intensity::Result<Vec<_>>>()?;
    let mut out = ctx.output(None, &args)?;
    match args.format {
        FormatArg::Json => {
            out.json(
                "shoes.json",
                &Shoes {
                    shoes: shoes.iter().map(ShoeFile::from_shoe).collect(),
                },
            )?;
        }
        FormatArg::Csv => {
            out.csv("shoes.csv", |w| write_shoes_csv(w, &shoes))?;
        }
    }
    Ok(Outcome {
        files: out.written().to_vec(),
    })
}

pub fn stats(ctx: &Context, mut args: StatsArgs) -> Result<Outcome, CliError> {
    let grid = parse_grid(&args.grid)?;
    args.input = existing(&args.input)?;
    let shoes = load_shoes(&args.input, grid)?;
    let report = descriptive_stats(&shoes)?;
    let mut out = ctx.output(None, &args)?;
    out.json("stats.json", &report)?;
    out.csv("stats_per_shoe.csv", |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["shoe_id", "racs", "contact_pixels"])?;
        for ((id, n), s) in report.shoe_ids.iter().zip(&report.rac_counts).zip(&report.contact_pixels) {
            csv.write_record([id.clone(), n.to_string(), s.to_string()])?;
        }
        csv.flush()?;
        Ok(())
    })?;
    let cumulative = report.cumulative_contact.map(|&v| f64::from(v));
    out.grid_csv("cumulative_contact.csv", &cumulative)?;
    out.pgm("cumulative_contact.pgm", &cumulative)?;
    Ok(Outcome {
        files: out.written().to_vec(),
    })
}

#[derive(Serialize)]
struct SubsampleDoc<'a> {
    binarized_pixels: usize,
    meta: &'a rac_intensity::subsampling::SubsampleMeta,
}

pub fn subsample(ctx: &Context, mut args: SubsampleArgs) -> Result<Outcome, CliError> {
    let grid = parse_grid(&args.grid)?;
    args.input = existing(&args.input)?;
    let (shoes, changed) = binarized(&load_shoes(&args.input, grid)?);
    let clusters = pixel_clusters(&shoes)?;
    let (y, ids) = cluster_outcomes(&clusters);
    let seed = ctx.seed_or_default();
    let sample = draw_subsample(&y, &ids, args.scheme.scheme(), args.controls.allocation(), seed)?;
    let mut out = ctx.output(Some(seed), &args)?;
    out.json(
        "subsample.json",
        &SubsampleDoc {
            binarized_pixels: changed,
            meta: &sample.meta,
        },
    )?;
    out.csv("subsample.csv", |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["shoe_id", "x", "y", "case", "offset"])?;
        for (i, (c, keep)) in clusters.iter().zip(&sample.retained).enumerate() {
            let offset = sample.meta.offset(i).to_string();
            for &t in keep {
                let (r, col) = c.pixels[t];
                csv.write_record([
                    c.shoe_id.clone(),
                    col.to_string(),
                    r.to_string(),
                    u8::from(c.y[t]).to_string(),
                    offset.clone(),
                ])?;
            }
        }
        csv.flush()?;
        Ok(())
    })?;
    Ok(Outcome {
        files: out.written().to_vec(),
    })
}

fn load_scenario(spec: &str) -> Result<Scenario, CliError> {
    let path = Path::new(spec);
    if path.is_file() {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        return Ok(Scenario::from_json_str(&text)?);
    }
    find_scenario(spec).ok_or_else(|| {
        let ids: Vec<String> = builtin_scenarios().into_iter().map(|s| s.scenario_id).collect();
        CliError::Usage(format!(
            "'{spec}' is neither a scenario file nor a built-in scenario ({})",
            ids.join(", ")
        ))
    })
}

#[derive(Serialize)]
struct SimulationDoc<'a> {
    scenario: &'a Scenario,
    table: &'a rac_intensity::simulation::ComparisonTable,
}

pub fn simulate(ctx: &Context, mut args: SimulateArgs) -> Result<Outcome, CliError> {
    let mut sc = load_scenario(&args.scenario)?;
    if Path::new(&args.scenario).is_file() {
        args.scenario = crate::output::absolute(Path::new(&args.scenario))?
            .display()
            .to_string();
    }
    if args.full {
        sc = sc.at_full_scale();
    }
    if let Some(r) = args.reps {
        if r == 0 {
            return Err(CliError::Usage("--reps must be positive".into()));
        }
        sc.replications = r;
    }
    if let Some(s) = ctx.seed {
        sc.seed = s;
    }
    let mut out = ctx.output(Some(sc.seed), &args)?;
    ctx.log(format!("running {} with {} replications", sc.scenario_id, sc.replications));
    let table = run_scenario(&sc)?;
    let id = sc.scenario_id.clone();
    out.csv(&format!("{id}_table.csv"), |w| table.write_csv(w))?;
    out.csv(&format!("{id}_summary.csv"), |w| table.write_summary_csv(w))?;
    out.json(
        &format!("{id}_table.json"),
        &SimulationDoc {
            scenario: &sc,
            table: &table,
        },
    )?;
    Ok(Outcome {
        files: out.written().to_vec(),
    })
}

pub fn scenarios(ctx: &Context, args: ScenariosArgs) -> Result<Outcome, CliError> {
    let all: Vec<Scenario> = builtin_scenarios()
        .into_iter()
        .filter(|s| args.only.as_ref().is_none_or(|id| &s.scenario_id == id))
        .collect();
    if all.is_empty() {
        return Err(CliError::Usage(format!(
            "no built-in scenario named '{}'",
            args.only.unwrap_or_default()
        )));
    }
    let mut out = ctx.output(None, &args)?;
    for sc in &all {
        out.json(&format!("{}.json", sc.scenario_id), sc)?;
    }
    Ok(Outcome {
        files: out.written().to_vec(),
    })
}
