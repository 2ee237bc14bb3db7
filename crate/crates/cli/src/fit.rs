use std::collections::BTreeMap;
use std::path::Path;

use rac_intensity::partitioning::{aggregate_all, expert_partition, grid_partition, Partition, RegionLayout};
use rac_intensity::pixel::{
    cluster_outcomes, fit_cml_pixel, fit_re_pixel, kernel_smooth, naive_pixel, pixel_clusters, pointwise_ci,
    PixelFit,
};
use rac_intensity::region::{
    fit_cml_region, fit_re_region, naive_region, region_ci, rescale_cml, Prior, RegionFit,
};
use rac_intensity::shoe_data::{descriptive_stats, GridDims, StandardShoe};
use rac_intensity::spline::{contact_knots, SplineBasis};
use rac_intensity::subsampling::subsample;
use rac_intensity::Grid;
use serde::Serialize;

use crate::commands::{binarized, load_shoes, parse_grid, Context};
use crate::output::{existing, Output};
use crate::{CliError, FitArgs, MethodArg, Outcome, PriorArg};

/// Controls per shoe when no budget is given.
pub const DEFAULT_CONTROLS: usize = 20;

enum PartitionChoice {
    Pixel,
    Region(Partition),
}

fn choose_partition(args: &FitArgs, grid: GridDims) -> Result<PartitionChoice, CliError> {
    let layout = |path: &Path| -> Result<RegionLayout, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Ok(RegionLayout::from_json_str(&text)?)
    };
    let spec = args.partition.as_str();
    let part = match spec {
        "pixel" => return Ok(PartitionChoice::Pixel),
        "expert" => {
            let l = match &args.layout {
                Some(p) => layout(p)?,
                None => RegionLayout::default(),
            };
            expert_partition(&l, grid)?
        }
        "file" => {
            let p = args
                .layout
                .as_ref()
                .ok_or_else(|| CliError::Usage("--partition file requires --layout".into()))?;
            expert_partition(&layout(p)?, grid)?
        }
        _ => {
            let dims = spec
                .strip_prefix("grid:")
                .ok_or_else(|| {
                    CliError::Usage(format!(
                        "unknown partition '{spec}' (expected pixel, expert, file or grid:BANDSxCOLUMNS)"
                    ))
                })?;
            let (b, c) = dims
                .split_once(['x', 'X'])
                .and_then(|(b, c)| Some((b.parse().ok()?, c.parse().ok()?)))
                .ok_or_else(|| CliError::Usage(format!("bad grid partition '{spec}'")))?;
            grid_partition(grid, b, c).map_err(|e| CliError::Usage(e.to_string()))?
        }
    };
    Ok(PartitionChoice::Region(part))
}

fn check_level(level: Option<f64>) -> Result<(), CliError> {
    match level {
        Some(l) if !(l > 0.0 && l < 1.0) => Err(CliError::Usage(format!("--ci must lie in (0, 1), got {l}"))),
        _ => Ok(()),
    }
}

pub fn run(ctx: &Context, mut args: FitArgs) -> Result<Outcome, CliError> {
    let grid = parse_grid(&args.grid)?;
    check_level(args.ci)?;
    if args.knots_x == 0 && args.knots_y == 0 && args.partition == "pixel" && args.method != MethodArg::Naive {
        ctx.log("no interior knots: the spline surface is a cubic polynomial");
    }
    args.input = existing(&args.input)?;
    if let Some(l) = &args.layout {
        args.layout = Some(existing(l)?);
    }
    let choice = choose_partition(&args, grid)?;
    let shoes = load_shoes(&args.input, grid)?;
    match choice {
        PartitionChoice::Region(part) => {
            let mut out = ctx.output(None, &args)?;
            fit_regions(ctx, &args, &shoes, &part, &mut out)?;
            Ok(Outcome {
                files: out.written().to_vec(),
            })
        }
        PartitionChoice::Pixel => {
            let seed = ctx.seed_or_default();
            let mut out = ctx.output(Some(seed), &args)?;
            fit_pixels(ctx, &args, &shoes, seed, &mut out)?;
            Ok(Outcome {
                files: out.written().to_vec(),
            })
        }
    }
}

fn touched(shoes: &[StandardShoe]) -> Grid<bool> {
    let (h, w) = shoes[0].contact().dims();
    let mut t = Grid::filled(h, w, false);
    for s in shoes {
        for (a, &c) in t.as_mut_slice().iter_mut().zip(s.contact().iter()) {
            *a |= c > 0;
        }
    }
    t
}

#[derive(Serialize)]
struct RegionDoc<'a> {
    partition_id: &'a str,
    labels: Vec<&'a str>,
    fit: &'a RegionFit,
}

fn fit_regions(
    ctx: &Context,
    args: &FitArgs,
    shoes: &[StandardShoe],
    part: &Partition,
    out: &mut Output,
) -> Result<(), CliError> {
    let records = aggregate_all(shoes, part)?;
    let prior = match args.prior {
        PriorArg::Gamma => Prior::Gamma,
        PriorArg::Lognormal => Prior::Lognormal,
    };
    let want = |m: MethodArg| args.method == m || args.method == MethodArg::All;
    let naive = naive_region(&records)?;
    let mut fits: Vec<(&str, RegionFit)> = Vec::new();
    if want(MethodArg::Naive) {
        fits.push(("naive", naive.clone()));
    }
    if want(MethodArg::Re) {
        ctx.log("fitting the random-effects model");
        fits.push(("random_effects", fit_re_region(&records, prior)?));
    }
    if want(MethodArg::Cml) {
        ctx.log("fitting the conditional model");
        let cml = fit_cml_region(&records)?;
        fits.push(("cml", rescale_cml(&cml, &naive)?));
    }
    if let Some(level) = args.ci {
        for (_, f) in fits.iter_mut() {
            f.cis = Some(region_ci(f, level)?);
        }
    }

    let mask = touched(shoes);
    let labels: Vec<&str> = part.cells().iter().map(|c| c.label.as_str()).collect();
    for (name, f) in &fits {
        out.json(
            &format!("fit_{name}.json"),
            &RegionDoc {
                partition_id: &part.partition_id,
                labels: labels.clone(),
                fit: f,
            },
        )?;
        out.csv(&format!("regions_{name}.csv"), |w| {
            let mut csv = csv::Writer::from_writer(w);
            csv.write_record([
                "cell",
                "label",
                "lambda_hat",
                "se",
                "ci_lo",
                "ci_hi",
                "one_sided",
                "exposure",
                "at_boundary",
            ])?;
            let se = f.standard_errors();
            for (j, label) in labels.iter().enumerate() {
                let num = |v: Option<f64>| v.filter(|x| x.is_finite()).map(|x| x.to_string()).unwrap_or_default();
                let ci = f.cis.as_ref().map(|c| c[j]);
                csv.write_record([
                    j.to_string(),
                    label.to_string(),
                    num(Some(f.lambda_hat[j])),
                    num(se.as_ref().map(|s| s[j])),
                    num(ci.map(|c| c.lo)),
                    num(ci.map(|c| c.hi)),
                    ci.map(|c| c.one_sided.to_string()).unwrap_or_default(),
                    f.exposure[j].to_string(),
                    f.at_boundary[j].to_string(),
                ])?;
            }
            csv.flush()?;
            Ok(())
        })?;
        let mut surface = part.expand(&f.lambda_hat)?;
        for (v, &m) in surface.as_mut_slice().iter_mut().zip(mask.iter()) {
            if !m {
                *v = f64::NAN;
            }
        }
        out.pgm(&format!("heatmap_{name}.pgm"), &surface)?;
    }
    if fits.len() > 1 {
        out.csv("comparison.csv", |w| {
            let mut csv = csv::Writer::from_writer(w);
            let mut header = vec!["cell".to_string(), "label".to_string()];
            header.extend(fits.iter().map(|(n, _)| n.to_string()));
            csv.write_record(&header)?;
            for (j, label) in labels.iter().enumerate() {
                let mut row = vec![j.to_string(), label.to_string()];
                row.extend(fits.iter().map(|(_, f)| {
                    let v = f.lambda_hat[j];
                    if v.is_finite() {
                        v.to_string()
                    } else {
                        String::new()
                    }
                }));
                csv.write_record(&row)?;
            }
            csv.flush()?;
            Ok(())
        })?;
    }
    Ok(())
}

#[derive(Serialize)]
struct PixelDoc<'a> {
    fit: &'a PixelFit,
    /// Factor applied to the conditional surface to put it on the naive
    /// scale.
    #[serde(skip_serializing_if = "Option::is_none")]
    rescale_constant: Option<f64>,
}

fn spline_basis(shoes: &[StandardShoe], args: &FitArgs) -> Result<SplineBasis, CliError> {
    let cumulative = descriptive_stats(shoes)?.cumulative_contact;
    let (kx, ky) = contact_knots(&cumulative, args.knots_x, args.knots_y)?;
    Ok(SplineBasis::new(kx, ky)?)
}

fn contact_pixels(mask: &Grid<bool>) -> Vec<(usize, usize)> {
    (0..mask.len())
        .filter(|&k| mask.as_slice()[k])
        .map(|k| mask.coords_of(k))
        .collect()
}

fn write_ci(
    out: &mut Output,
    name: &str,
    fit: &PixelFit,
    level: f64,
    pixels: &[(usize, usize)],
) -> Result<(), CliError> {
    let cis = pointwise_ci(fit, level, pixels)?;
    out.csv(&format!("ci_{name}.csv"), |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["x", "y", "lambda_hat", "ci_lo", "ci_hi"])?;
        for (&(r, c), ci) in pixels.iter().zip(&cis) {
            let l = fit.lambda_hat[(r, c)];
            if !l.is_finite() {
                continue;
            }
            csv.write_record([c.to_string(), r.to_string(), l.to_string(), ci.lo.to_string(), ci.hi.to_string()])?;
        }
        csv.flush()?;
        Ok(())
    })?;
    Ok(())
}

fn fit_pixels(
    ctx: &Context,
    args: &FitArgs,
    shoes: &[StandardShoe],
    seed: u64,
    out: &mut Output,
) -> Result<(), CliError> {
    let want = |m: MethodArg| args.method == m || args.method == MethodArg::All;
    let mask = touched(shoes);
    let pixels = contact_pixels(&mask);
    let mut surfaces: BTreeMap<&str, Grid<f64>> = BTreeMap::new();

    let naive = naive_pixel(shoes)?;
    let smoothed = kernel_smooth(&naive.lambda_hat, args.half_width);
    if want(MethodArg::Naive) {
        out.json(
            "fit_naive.json",
            &PixelDoc {
                fit: &naive,
                rescale_constant: None,
            },
        )?;
        out.grid_csv("surface_naive.csv", &naive.lambda_hat)?;
        out.grid_csv("surface_naive_smoothed.csv", &smoothed)?;
        out.pgm("heatmap_naive.pgm", &smoothed)?;
        if let Some(level) = args.ci {
            write_ci(out, "naive", &naive, level, &pixels)?;
        }
        surfaces.insert("naive_smoothed", smoothed.clone());
    }

    if want(MethodArg::Re) || want(MethodArg::Cml) {
        let (binary, changed) = binarized(shoes);
        let basis = spline_basis(&binary, args)?;
        let clusters = pixel_clusters(&binary)?;
        let (y, ids) = cluster_outcomes(&clusters);
        let sample = subsample(&y, &ids, args.subsample.scheme(), args.controls.allocation(), seed)?;
        let note = (changed > 0).then(|| format!("{changed} pixels with more than one RAC were set to one"));

        let mut spline_fits: Vec<(&str, PixelFit)> = Vec::new();
        if want(MethodArg::Re) {
            ctx.log("fitting the random-intercept spline model");
            spline_fits.push(("random_effects", fit_re_pixel(&binary, &basis, args.quadrature, &sample)?));
        }
        if want(MethodArg::Cml) {
            ctx.log("fitting the conditional spline model");
            spline_fits.push(("cml", fit_cml_pixel(&binary, &basis, &sample)?));
        }
        for (name, mut fit) in spline_fits {
            fit.warnings.extend(note.clone());
            let mut rescale = None;
            if name == "cml" {
                let (mut a, mut b) = (0.0, 0.0);
                for (&n, &c) in naive.lambda_hat.iter().zip(fit.lambda_hat.iter()) {
                    if n.is_finite() && c.is_finite() {
                        a += n;
                        b += c;
                    }
                }
                if b > 0.0 {
                    rescale = Some(a / b);
                }
            }
            out.json(
                &format!("fit_{name}.json"),
                &PixelDoc {
                    fit: &fit,
                    rescale_constant: rescale,
                },
            )?;
            out.grid_csv(&format!("surface_{name}.csv"), &fit.lambda_hat)?;
            let shown = match rescale {
                Some(c) => fit.lambda_hat.map(|v| v * c),
                None => fit.lambda_hat.clone(),
            };
            out.pgm(&format!("heatmap_{name}.pgm"), &shown)?;
            if let Some(level) = args.ci {
                write_ci(out, name, &fit, level, &pixels)?;
            }
            surfaces.insert(if rescale.is_some() { "cml_rescaled" } else { name }, shown);
        }
    }

    if surfaces.len() > 1 {
        out.csv("comparison.csv", |w| {
            let mut csv = csv::Writer::from_writer(w);
            let mut header = vec!["x".to_string(), "y".to_string()];
            header.extend(surfaces.keys().map(|k| k.to_string()));
            csv.write_record(&header)?;
            for &(r, c) in &pixels {
                let mut row = vec![c.to_string(), r.to_string()];
                row.extend(surfaces.values().map(|g| {
                    let v = g[(r, c)];
                    if v.is_finite() {
                        v.to_string()
                    } else {
                        String::new()
                    }
                }));
                csv.write_record(&row)?;
            }
            csv.flush()?;
            Ok(())
        })?;
    }
    Ok(())
}
