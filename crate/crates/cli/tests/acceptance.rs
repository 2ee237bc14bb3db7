//! Acceptance checks, one test per criterion. Each prints a single
//! `[PASS] criterion N` or `[FAIL] criterion N` line before asserting.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use statrs::function::gamma::ln_gamma;

use rac_intensity::grid::Grid;
use rac_intensity::optim::Objective;
use rac_intensity::partitioning::{aggregate_all, expert_partition, RegionLayout};
use rac_intensity::pixel::glmm::{log_elementary_symmetric, Cluster, ClusteredData, Conditional, RandomIntercept};
use rac_intensity::region::{
    cml_log_likelihood, cml_score, conditional_multinomial_probability, fit_cml_region, fit_re_region,
    gamma_marginal_log_likelihood, gamma_marginal_value_grad, lognormal_marginal_value_grad, naive_region,
    region_ci, rescale_cml, var_naive, Prior,
};
use rac_intensity::shoe_data::{read_shoes_json, write_raw_print_json, GridDims, Point, RawPrint, ShoeRecord};
use rac_intensity::simulation::{
    draw_wear, find_scenario, generate_logistic_with, generate_region, builtin_scenarios, pool_areas, run_scenario,
    ALaw, Design, Scenario,
};
use rac_intensity::subsampling::Scheme;

fn report(criterion: u32, failures: &[String]) {
    if failures.is_empty() {
        println!("[PASS] criterion {criterion}");
    } else {
        println!("[FAIL] criterion {criterion}");
        for f in failures {
            println!("    {f}");
        }
    }
    assert!(failures.is_empty(), "criterion {criterion}: {}", failures.join("; "));
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn cli(args: &[&str]) -> i32 {
    let mut full = vec!["rac-intensity".to_string()];
    full.extend(args.iter().map(|s| s.to_string()));
    rac_intensity_cli::run(full)
}

fn cli_ok(args: &[&str]) {
    assert_eq!(cli(args), 0, "command failed: {args:?}");
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn fit_lambda(path: &Path) -> Vec<f64> {
    read_json(path)["fit"]["lambda_hat"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap_or(f64::NAN))
        .collect()
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }
}

fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| rel(x, y)).fold(0.0, f64::max)
}

fn ratios(lambda: &[f64]) -> Vec<f64> {
    lambda.iter().map(|l| l / lambda[0]).collect()
}

/// Central differences with step `h`; the error of each component is
/// relative to `max(1, |fd|)`.
fn gradient_error(f: impl Fn(&[f64]) -> f64, x: &[f64], g: &[f64], h: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for k in 0..x.len() {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[k] += h;
        xm[k] -= h;
        let fd = (f(&xp) - f(&xm)) / (2.0 * h);
        worst = worst.max((g[k] - fd).abs() / fd.abs().max(1.0));
    }
    worst
}

fn random_region_data(r: &mut ChaCha8Rng, m: usize, j: usize) -> (Vec<ShoeRecord>, Vec<f64>) {
    let areas: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..j).map(|_| r.random_range(0.2..2.0)).collect())
        .collect();
    let lambda: Vec<f64> = (0..j).map(|_| r.random_range(2.0..40.0)).collect();
    let wear = draw_wear(&ALaw::Gamma { shape: 3.0, scale: 1.0 / 3.0 }, m, &[], r).unwrap();
    (generate_region(&areas, &lambda, &wear, r).unwrap(), lambda)
}

/// Column totals, contact per region summed over shoes, and `n··`.
fn totals(shoes: &[ShoeRecord]) -> (Vec<f64>, Vec<f64>, f64) {
    let j = shoes[0].cells();
    let mut n = vec![0.0; j];
    let mut s = vec![0.0; j];
    for shoe in shoes {
        for k in 0..j {
            n[k] += f64::from(shoe.counts[k]);
            s[k] += shoe.s_area[k];
        }
    }
    let all = n.iter().sum();
    (n, s, all)
}

const PROP_GRID: &str = "60x40";

/// Generates identical full-contact surfaces through the CLI and fits them
/// under both random-effects priors.
fn full_contact_fits(dir: &Path) -> (Vec<ShoeRecord>, BTreeMap<&'static str, Vec<f64>>) {
    let data = dir.join("data");
    let d = data.to_str().unwrap();
    cli_ok(&[
        "generate", "--shoes", "40", "--avg-racs", "300", "--coverage", "1.0", "--grid", PROP_GRID, "--seed", "11",
        "--out-dir", d,
    ]);
    let input = data.join("shoes.json");
    let input = input.to_str().unwrap();
    let gamma = dir.join("gamma");
    let lognormal = dir.join("lognormal");
    cli_ok(&["fit", "-i", input, "--grid", PROP_GRID, "--method", "all", "--out-dir", gamma.to_str().unwrap()]);
    cli_ok(&[
        "fit", "-i", input, "--grid", PROP_GRID, "--method", "re", "--prior", "lognormal", "--out-dir",
        lognormal.to_str().unwrap(),
    ]);
    let mut fits = BTreeMap::new();
    fits.insert("naive", fit_lambda(&gamma.join("fit_naive.json")));
    fits.insert("cml", fit_lambda(&gamma.join("fit_cml.json")));
    fits.insert("re_gamma", fit_lambda(&gamma.join("fit_random_effects.json")));
    fits.insert("re_lognormal", fit_lambda(&lognormal.join("fit_random_effects.json")));

    let dims = GridDims::new(60, 40).unwrap();
    let shoes = read_shoes_json(fs::File::open(data.join("shoes.json")).unwrap(), Some(dims)).unwrap();
    let part = expert_partition(&RegionLayout::default(), dims).unwrap();
    (aggregate_all(&shoes, &part).unwrap(), fits)
}

#[test]
fn criterion_01_proportional_estimators_on_identical_surfaces() {
    let dir = tempfile::tempdir().unwrap();
    let (records, fits) = full_contact_fits(dir.path());
    let mut failures = Vec::new();
    if records.iter().any(|s| s.s_area != records[0].s_area) {
        failures.push("contact surfaces differ between shoes".into());
    }
    let base = ratios(&fits["naive"]);
    let cml_raw = fit_cml_region(&records).unwrap().lambda_hat;
    let mut checks = vec![
        ("cml", ratios(&fits["cml"]), 1e-10),
        ("cml unrescaled", ratios(&cml_raw), 1e-10),
        ("re_gamma", ratios(&fits["re_gamma"]), 1e-10),
        ("re_lognormal", ratios(&fits["re_lognormal"]), 1e-4),
    ];
    for (name, r, tol) in checks.drain(..) {
        let err = max_rel(&r, &base);
        println!("    {name}: max relative ratio error {err:.3e}");
        if !(err <= tol) {
            failures.push(format!("{name} ratios differ from naive by {err:.3e} > {tol:e}"));
        }
    }
    report(1, &failures);
}

#[test]
fn criterion_02_closed_form_under_identical_surfaces() {
    let dir = tempfile::tempdir().unwrap();
    let (records, fits) = full_contact_fits(dir.path());
    let m = records.len() as f64;
    let (n, _, n_all) = totals(&records);
    let s = &records[0].s_area;
    let oracle: Vec<f64> = n.iter().zip(s).map(|(nj, sj)| nj / (m * sj)).collect();
    let mut failures = Vec::new();
    for name in ["naive", "cml", "re_gamma"] {
        let l = &fits[name];
        let err = max_rel(l, &oracle);
        let weighted: f64 = l.iter().zip(s).map(|(a, b)| a * b).sum();
        let err_sum = rel(weighted, n_all / m);
        println!("    {name}: lambda error {err:.3e}, sum S_j lambda_j error {err_sum:.3e}");
        if !(err <= 1e-10 && err_sum <= 1e-10) {
            failures.push(format!("{name}: lambda error {err:.3e}, weighted sum error {err_sum:.3e}"));
        }
    }

    // with unit areas the plain sum recovers the mean total
    let unit: Vec<ShoeRecord> = records
        .iter()
        .map(|r| ShoeRecord::new(r.shoe_id.clone(), vec![1.0; r.cells()], r.counts.clone()).unwrap())
        .collect();
    let naive = naive_region(&unit).unwrap();
    let unit_fits = [
        ("naive", naive.clone()),
        ("cml", rescale_cml(&fit_cml_region(&unit).unwrap(), &naive).unwrap()),
        ("re_gamma", fit_re_region(&unit, Prior::Gamma).unwrap()),
    ];
    let unit_oracle: Vec<f64> = n.iter().map(|nj| nj / m).collect();
    for (name, f) in &unit_fits {
        let err = max_rel(&f.lambda_hat, &unit_oracle);
        let err_sum = rel(f.lambda_hat.iter().sum(), n_all / m);
        println!("    unit areas {name}: lambda error {err:.3e}, sum error {err_sum:.3e}");
        if !(err <= 1e-10 && err_sum <= 1e-10) {
            failures.push(format!("unit areas {name}: lambda error {err:.3e}, sum error {err_sum:.3e}"));
        }
    }
    report(2, &failures);
}

fn cml_ratio_oracle(shoes: &[ShoeRecord]) -> f64 {
    // λ = (1, r); log-likelihood written out directly
    let ll = |r: f64| -> f64 {
        shoes
            .iter()
            .map(|s| {
                let d = s.s_area[0] + r * s.s_area[1];
                f64::from(s.counts[0]) * (s.s_area[0] / d).ln() + f64::from(s.counts[1]) * (r * s.s_area[1] / d).ln()
            })
            .sum()
    };
    let mut best = (f64::NEG_INFINITY, 0.0);
    let mut k = 1u32;
    loop {
        let r = 1e-4 * f64::from(k);
        if r > 25.0 {
            break;
        }
        let v = ll(r);
        if v > best.0 {
            best = (v, r);
        }
        k += 1;
    }
    best.1
}

#[test]
fn criterion_03_cml_score_scale_invariance_and_grid_search() {
    let mut r = rng(3);
    let mut failures = Vec::new();
    let mut worst_score: f64 = 0.0;
    let mut worst_scale: f64 = 0.0;
    for t in 0..20 {
        let m = r.random_range(20..120);
        let j = r.random_range(2..15);
        let (shoes, _) = random_region_data(&mut r, m, j);
        let fit = fit_cml_region(&shoes).unwrap();
        let score = cml_score(&shoes, &fit.lambda_hat);
        let res = score
            .iter()
            .zip(&fit.lambda_hat)
            .filter(|(_, l)| **l > 0.0)
            .map(|(g, _)| g.abs())
            .fold(0.0, f64::max);
        worst_score = worst_score.max(res);
        if !(res <= 1e-8) {
            failures.push(format!("dataset {t}: score residual {res:.3e}"));
        }
        let lambda: Vec<f64> = (0..j).map(|_| r.random_range(0.1..50.0)).collect();
        let c = r.random_range(0.01..100.0);
        let scaled: Vec<f64> = lambda.iter().map(|l| c * l).collect();
        let (a, b) = (cml_log_likelihood(&shoes, &lambda), cml_log_likelihood(&shoes, &scaled));
        let err = (a - b).abs() / a.abs().max(1.0);
        worst_scale = worst_scale.max(err);
        if !(err <= 1e-10) {
            failures.push(format!("dataset {t}: l(c lambda) differs by {err:.3e}"));
        }
    }
    println!("    worst score residual {worst_score:.3e}, worst scale error {worst_scale:.3e}");

    let mut worst_grid: f64 = 0.0;
    for t in 0..10 {
        let m = r.random_range(20..80);
        let (shoes, _) = random_region_data(&mut r, m, 2);
        let fit = fit_cml_region(&shoes).unwrap();
        let got = fit.lambda_hat[1] / fit.lambda_hat[0];
        let want = cml_ratio_oracle(&shoes);
        let err = (got - want).abs();
        worst_grid = worst_grid.max(err);
        if !(err <= 1e-3) {
            failures.push(format!("J=2 problem {t}: ratio {got} vs grid search {want}"));
        }
    }
    println!("    worst J=2 ratio deviation from grid search {worst_grid:.3e}");
    report(3, &failures);
}

/// Every vector of `len` non-negative integers summing to `total`.
fn compositions(len: usize, total: u32) -> Vec<Vec<u32>> {
    if len == 1 {
        return vec![vec![total]];
    }
    (0..=total)
        .flat_map(|first| {
            compositions(len - 1, total - first).into_iter().map(move |mut rest| {
                rest.insert(0, first);
                rest
            })
        })
        .collect()
}

fn poisson_pmf(k: u32, mu: f64) -> f64 {
    let mut p = (-mu).exp();
    for i in 1..=k {
        p *= mu / f64::from(i);
    }
    p
}

/// Every `k`-subset of `0..n`.
fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    (0u32..1 << n)
        .filter(|mask| mask.count_ones() as usize == k)
        .map(|mask| (0..n).filter(|&t| mask & (1 << t) != 0).collect())
        .collect()
}

#[test]
fn criterion_04_enumeration_oracles() {
    let mut r = rng(4);
    let mut failures = Vec::new();
    let mut worst_multi: f64 = 0.0;
    let mut worst_sym: f64 = 0.0;
    for cells in 1..=10usize {
        for n in 0..=3u32 {
            let s: Vec<f64> = (0..cells).map(|_| r.random_range(0.1..2.0)).collect();
            let l: Vec<f64> = (0..cells).map(|_| r.random_range(0.5..30.0)).collect();
            let mu: Vec<f64> = s.iter().zip(&l).map(|(a, b)| a * b).collect();
            let all = compositions(cells, n);
            let joint: Vec<f64> = all
                .iter()
                .map(|c| c.iter().zip(&mu).map(|(&k, &m)| poisson_pmf(k, m)).product())
                .collect();
            let z: f64 = joint.iter().sum();
            for (c, p) in all.iter().zip(&joint) {
                let got = conditional_multinomial_probability(&s, &l, c);
                let err = (got - p / z).abs();
                worst_multi = worst_multi.max(err);
                if !(err <= 1e-12) {
                    failures.push(format!("multinomial {cells} cells, counts {c:?}: {got} vs {}", p / z));
                }
            }
        }
        for k in 0..=3usize.min(cells) {
            let p = 2;
            let eta: Vec<f64> = (0..cells).map(|_| r.random_range(-3.0..3.0)).collect();
            let x: Vec<f64> = (0..cells * p).map(|_| r.random_range(-1.0..1.0)).collect();
            let terms = log_elementary_symmetric(&eta, &x, p, k, false);
            let mut e = 0.0;
            let mut d = vec![0.0; p];
            for sub in subsets(cells, k) {
                let w: f64 = sub.iter().map(|&t| eta[t]).sum::<f64>().exp();
                e += w;
                for q in 0..p {
                    d[q] += w * sub.iter().map(|&t| x[t * p + q]).sum::<f64>();
                }
            }
            let err = (terms.log_e - e.ln()).abs();
            let err_d = terms.d.iter().zip(&d).map(|(a, b)| (a - b / e).abs()).fold(0.0, f64::max);
            worst_sym = worst_sym.max(err).max(err_d);
            if !(err <= 1e-12 && err_d <= 1e-12) {
                failures.push(format!("e_{k} over {cells} elements: log error {err:.3e}, gradient error {err_d:.3e}"));
            }

            // conditional probability of one outcome within the stratum
            let y: Vec<bool> = (0..cells).map(|t| t < k).collect();
            let beta = [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)];
            let data = ClusteredData::new(
                p,
                vec![Cluster {
                    id: "s".into(),
                    x: x.clone(),
                    y: y.clone(),
                    offset: r.random_range(-2.0..2.0),
                }],
            )
            .unwrap();
            let lp: Vec<f64> = (0..cells).map(|t| x[t * p] * beta[0] + x[t * p + 1] * beta[1]).collect();
            let denom: f64 = subsets(cells, k)
                .iter()
                .map(|sub| sub.iter().map(|&t| lp[t]).sum::<f64>().exp())
                .sum();
            let want = (0..k).map(|t| lp[t]).sum::<f64>() - denom.ln();
            let got = Conditional { data: &data }.value(&beta);
            let err = (got - want).abs();
            worst_sym = worst_sym.max(err);
            if !(err <= 1e-12) {
                failures.push(format!("conditional likelihood, {cells} cells, {k} events: {got} vs {want}"));
            }
        }
    }
    println!("    worst multinomial error {worst_multi:.3e}, worst recursion error {worst_sym:.3e}");
    report(4, &failures);
}

#[test]
fn criterion_05_wear_moment_and_naive_coverage() {
    let mut failures = Vec::new();

    let law = ALaw::ShiftedBernoulli { low: 0.8, high: 1.2, p: 0.5 };
    let mut r = rng(5);
    let draws = 10_000;
    let lambda = vec![400.0, 250.0, 600.0];
    let areas: Vec<Vec<f64>> = (0..draws)
        .map(|_| lambda.iter().map(|_| r.random_range(0.5..1.5)).collect())
        .collect();
    let wear = draw_wear(&law, draws, &[], &mut r).unwrap();
    let shoes = generate_region(&areas, &lambda, &wear, &mut r).unwrap();
    let nv = var_naive(&shoes, &lambda).unwrap();
    let mean_u = nv.u_hat.iter().sum::<f64>() / draws as f64;
    let want = law.variance().unwrap() + 1.0;
    let err = rel(mean_u, want);
    println!("    mean U {mean_u:.5} vs Var(a)+1 = {want:.5} (relative error {err:.3e})");
    if !(err <= 0.02) {
        failures.push(format!("mean U {mean_u} vs {want}"));
    }

    let sc = find_scenario("scenario_00_baseline").unwrap();
    let Design::RegionPoisson(d) = &sc.design else {
        panic!("baseline is a region scenario")
    };
    let part = d.partition.build(d.pool.dims().unwrap()).unwrap();
    let pool = pool_areas(&d.pool, &part).unwrap();
    let observed = d.pool.totals().unwrap();
    let (mut covered, mut total) = (0usize, 0usize);
    for rep in 0..200u64 {
        let mut r = rng(sc.seed);
        r.set_stream(rep + 1);
        let wear = draw_wear(&d.a_law, d.shoes, &observed, &mut r).unwrap();
        let data = generate_region(&pool[..d.shoes], &d.lambda, &wear, &mut r).unwrap();
        let fit = naive_region(&data).unwrap();
        for (ci, &truth) in region_ci(&fit, 0.95).unwrap().iter().zip(&d.lambda) {
            total += 1;
            if ci.lo <= truth && truth <= ci.hi {
                covered += 1;
            }
        }
    }
    let coverage = covered as f64 / total as f64;
    println!("    naive 95% interval coverage {coverage:.4} over {total} intervals");
    if !(0.90..=0.98).contains(&coverage) {
        failures.push(format!("coverage {coverage}"));
    }
    report(5, &failures);
}

#[test]
fn criterion_06_subsampling_scheme_ordering() {
    let sc = find_scenario("subsampling_logistic").unwrap();
    let Design::LogisticCluster(d) = &sc.design else {
        panic!("logistic scenario expected")
    };
    assert_eq!((d.clusters, d.cluster_size, sc.replications), (100, 200, 50));
    let table = run_scenario(&sc).unwrap();
    let schemes = [
        Scheme::Random,
        Scheme::CcPooled,
        Scheme::CcWithinPropSize,
        Scheme::CcWithinPropCases,
    ];
    let mut failures = Vec::new();
    for est in ["re", "cml"] {
        for cell in ["beta1", "beta2"] {
            let full = table
                .cell(&rac_intensity::simulation::logistic_method(est, Scheme::Full), cell)
                .unwrap()
                .mse;
            let gaps: Vec<f64> = schemes
                .iter()
                .map(|&s| {
                    let c = table.cell(&rac_intensity::simulation::logistic_method(est, s), cell).unwrap();
                    (c.mse - full).abs()
                })
                .collect();
            println!(
                "    {est}/{cell}: full MSE {full:.4}, gaps (i) {:.4} (ii) {:.4} (iii) {:.4} (iv) {:.4}",
                gaps[0], gaps[1], gaps[2], gaps[3]
            );
            if gaps[..3].iter().any(|&g| g <= gaps[3]) {
                failures.push(format!("{est}/{cell}: scheme (iv) gap {:.4} is not the smallest", gaps[3]));
            }
        }
    }
    let failed: usize = table.summary.iter().map(|s| s.failures).sum();
    if failed > 0 {
        failures.push(format!("{failed} fits failed"));
    }
    report(6, &failures);
}

#[test]
fn criterion_07_region_estimator_orderings() {
    let scenarios: Vec<Scenario> = builtin_scenarios()
        .into_iter()
        .filter(|s| matches!(s.design, Design::RegionPoisson(_)))
        .collect();
    assert_eq!(scenarios.len(), 12);
    let mut failures = Vec::new();
    let mut re_wins = 0;
    for sc in &scenarios {
        assert_eq!(sc.replications, 100);
        let t = run_scenario(sc).unwrap();
        let mse = |m: &str| t.method(m).unwrap().mean_mse;
        let (naive, re, cml) = (mse("naive"), mse("random_effects"), mse("cml"));
        println!("    {}: naive {naive:.4}, random effects {re:.4}, cml {cml:.4}", sc.scenario_id);
        if re < naive {
            re_wins += 1;
        }
        if sc.scenario_id == "scenario_01_equal_lambda" && !(re <= cml && cml <= naive) {
            failures.push(format!("equal-lambda ordering violated: re {re}, cml {cml}, naive {naive}"));
        }
    }
    println!("    random effects beats naive in {re_wins} of {}", scenarios.len());
    if re_wins < 9 {
        failures.push(format!("random effects beats naive in only {re_wins} scenarios"));
    }
    report(7, &failures);
}

fn logistic_data(r: &mut ChaCha8Rng, intercept: bool) -> ClusteredData {
    let sample = generate_logistic_with(12, 25, [-1.0, 2.0, -2.0], 0.8, r).unwrap();
    let p = if intercept { 3 } else { 2 };
    let clusters = sample
        .y
        .iter()
        .enumerate()
        .map(|(i, y)| Cluster {
            id: format!("c{i}"),
            x: sample
                .x
                .iter()
                .flat_map(|&t| {
                    let row = [1.0, t, t * t];
                    row[3 - p..].to_vec()
                })
                .collect(),
            y: y.clone(),
            offset: r.random_range(-1.0..1.0),
        })
        .collect();
    ClusteredData::new(p, clusters).unwrap()
}

#[test]
fn criterion_08_gradients_match_finite_differences() {
    const H: f64 = 1e-5;
    const TOL: f64 = 1e-4;
    let mut r = rng(8);
    let mut worst: BTreeMap<&str, f64> = BTreeMap::new();
    let mut note = |name: &'static str, err: f64| {
        let w = worst.entry(name).or_insert(0.0);
        *w = w.max(err);
    };

    let re_data = logistic_data(&mut r, true);
    let cond_data = logistic_data(&mut r, false);
    let ri = RandomIntercept::new(&re_data, 21);
    let cond = Conditional { data: &cond_data };
    let (shoes, _) = random_region_data(&mut r, 30, 5);
    for _ in 0..10 {
        let x: Vec<f64> = vec![
            r.random_range(-2.0..0.0),
            r.random_range(0.0..3.0),
            r.random_range(-3.0..0.0),
            r.random_range(0.2..2.0),
        ];
        let (_, g) = ri.value_grad(&x);
        note("random intercept", gradient_error(|v| ri.value(v), &x, &g, H));

        let b: Vec<f64> = vec![r.random_range(-1.0..3.0), r.random_range(-3.0..1.0)];
        let (_, g) = cond.value_grad(&b);
        note("conditional logistic", gradient_error(|v| cond.value(v), &b, &g, H));

        let mut lx: Vec<f64> = (0..5).map(|_| r.random_range(0.5..3.5)).collect();
        lx.push(r.random_range(-1.0..3.0));
        let (_, g) = gamma_marginal_value_grad(&shoes, &lx).unwrap();
        note(
            "region gamma marginal",
            gradient_error(|v| gamma_marginal_value_grad(&shoes, v).unwrap().0, &lx, &g, H),
        );

        let last = lx.len() - 1;
        lx[last] = r.random_range(0.1..1.2);
        let (_, g) = lognormal_marginal_value_grad(&shoes, &lx, 21).unwrap();
        note(
            "region lognormal marginal",
            gradient_error(|v| lognormal_marginal_value_grad(&shoes, v, 21).unwrap().0, &lx, &g, H),
        );

        let lambda: Vec<f64> = (0..5).map(|_| r.random_range(2.0..30.0)).collect();
        let g = cml_score(&shoes, &lambda);
        note("region cml", gradient_error(|v| cml_log_likelihood(&shoes, v), &lambda, &g, H));
    }
    let mut failures = Vec::new();
    for (name, err) in &worst {
        println!("    {name}: worst relative gradient error {err:.3e}");
        if !(*err <= TOL) {
            failures.push(format!("{name}: {err:.3e}"));
        }
    }
    report(8, &failures);
}

/// Trapezoid rule for `log ∫ exp(f(t)) dt` on `[lo, hi]` with `nodes` points.
fn log_trapezoid(f: impl Fn(f64) -> f64, lo: f64, hi: f64, nodes: usize) -> f64 {
    let h = (hi - lo) / (nodes - 1) as f64;
    let v: Vec<f64> = (0..nodes).map(|k| f(lo + h * k as f64)).collect();
    let top = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = v
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            let w = if k == 0 || k == nodes - 1 { 0.5 } else { 1.0 };
            w * (x - top).exp()
        })
        .sum();
    top + (sum * h).ln()
}

fn log_sigmoid(x: f64) -> f64 {
    -((-x).max(0.0) + (-x.abs()).exp().ln_1p())
}

fn ln_fact(n: u32) -> f64 {
    ln_gamma(f64::from(n) + 1.0)
}

#[test]
fn criterion_09_marginals_match_numeric_integration() {
    let mut r = rng(9);
    let mut failures = Vec::new();
    let mut worst_gamma: f64 = 0.0;
    for t in 0..10 {
        let j = r.random_range(1..6);
        let s: Vec<f64> = (0..j).map(|_| r.random_range(0.1..2.0)).collect();
        let lambda: Vec<f64> = (0..j).map(|_| r.random_range(0.5..20.0)).collect();
        let counts: Vec<u32> = (0..j).map(|_| r.random_range(0..15)).collect();
        let gamma = r.random_range(0.5..10.0);
        let shoe = ShoeRecord::new("s", s.clone(), counts.clone()).unwrap();
        let closed = gamma_marginal_log_likelihood(&shoe, &lambda, gamma);
        // a = e^u, Gamma(γ, γ) density
        let integrand = |u: f64| {
            let a = u.exp();
            let pois: f64 = counts
                .iter()
                .zip(s.iter().zip(&lambda))
                .map(|(&n, (&sj, &lj))| {
                    let mu = lj * sj * a;
                    f64::from(n) * mu.ln() - mu - ln_fact(n)
                })
                .sum();
            pois + gamma * gamma.ln() - ln_gamma(gamma) + gamma * u - gamma * a
        };
        let numeric = log_trapezoid(integrand, -200.0, 8.0, 200_001);
        let err = ((closed - numeric).exp() - 1.0).abs();
        worst_gamma = worst_gamma.max(err);
        if !(err <= 1e-8) {
            failures.push(format!("gamma problem {t}: closed {closed} vs numeric {numeric}"));
        }
    }

    let mut worst_normal: f64 = 0.0;
    for t in 0..10 {
        let size = r.random_range(1..40);
        let y: Vec<bool> = (0..size).map(|_| r.random_bool(0.3)).collect();
        let beta0 = r.random_range(-3.0..2.0);
        let theta = r.random_range(0.2..2.5);
        let offset = r.random_range(-1.0..1.0);
        let data = ClusteredData::new(
            1,
            vec![Cluster {
                id: "c".into(),
                x: vec![1.0; size],
                y: y.clone(),
                offset,
            }],
        )
        .unwrap();
        let got = RandomIntercept::new(&data, 21).cluster_log_likelihoods(&[beta0], theta)[0];
        let events = y.iter().filter(|&&v| v).count() as f64;
        let integrand = |z: f64| {
            let eta = offset + beta0 + theta * z;
            events * log_sigmoid(eta) + (size as f64 - events) * log_sigmoid(-eta) - 0.5 * z * z
                - 0.5 * (2.0 * std::f64::consts::PI).ln()
        };
        let numeric = log_trapezoid(integrand, -40.0, 40.0, 100_000);
        let err = ((got - numeric).exp() - 1.0).abs();
        worst_normal = worst_normal.max(err);
        if !(err <= 1e-6) {
            failures.push(format!("normal problem {t}: quadrature {got} vs trapezoid {numeric}"));
        }
    }
    println!("    worst gamma relative error {worst_gamma:.3e}, worst normal relative error {worst_normal:.3e}");
    report(9, &failures);
}

fn raw_prints() -> Vec<RawPrint> {
    let (h, w) = (80, 50);
    let mut mask = Grid::filled(h, w, false);
    for row in 5..75 {
        for col in 10..40 {
            mask[(row, col)] = (row + col) % 7 != 0;
        }
    }
    (0..3)
        .map(|i| RawPrint {
            print_id: format!("P{i}"),
            landmark_top: Point::new(25.0, 75.0),
            landmark_bottom: Point::new(25.0, 5.0),
            rac_points: (0..8)
                .map(|k| Point::new(12.0 + 3.0 * k as f64, 10.0 + 7.0 * (k + i) as f64))
                .collect(),
            contact_mask: mask.clone(),
            is_right_shoe: i % 2 == 1,
        })
        .collect()
}

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_file() {
            files.insert(path.clone(), fs::read(&path).unwrap());
        }
    }
    files
}

#[test]
fn criterion_10_commands_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let raw = root.join("raw.json");
    write_raw_print_json(fs::File::create(&raw).unwrap(), &raw_prints()).unwrap();
    let p = |name: &str| root.join(name).to_str().unwrap().to_string();
    let data = p("gen/shoes.json");
    let commands: Vec<Vec<String>> = [
        vec!["generate", "--shoes", "25", "--grid", "60x40", "--out-dir", &p("gen")],
        vec!["generate", "--shoes", "5", "--grid", "60x40", "--format", "csv", "--out-dir", &p("gen_csv")],
        vec!["normalize", "-i", raw.to_str().unwrap(), "--grid", "60x40", "--out-dir", &p("norm")],
        vec!["stats", "-i", &data, "--grid", "60x40", "--out-dir", &p("stats")],
        vec!["subsample", "-i", &data, "--grid", "60x40", "--controls", "10", "--out-dir", &p("sub")],
        vec!["fit", "-i", &data, "--grid", "60x40", "--ci", "0.95", "--out-dir", &p("fit_regions")],
        vec![
            "fit", "-i", &data, "--grid", "60x40", "--partition", "pixel", "--controls", "20", "--ci", "0.9",
            "--out-dir", &p("fit_pixels"),
        ],
        vec!["simulate", "--scenario", "scenario_01_equal_lambda", "--reps", "4", "--out-dir", &p("sim")],
        vec!["simulate", "--scenario", "subsampling_logistic", "--reps", "1", "--out-dir", &p("sim_logistic")],
        vec!["scenarios", "--out-dir", &p("scenarios")],
    ]
    .into_iter()
    .map(|c| {
        let mut c: Vec<String> = c.into_iter().map(String::from).collect();
        c.extend(["--seed".to_string(), "1".to_string()]);
        c
    })
    .collect();

    let mut failures = Vec::new();
    for args in &commands {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let out = PathBuf::from(args[args.iter().position(|a| *a == "--out-dir").unwrap() + 1]);
        if cli(&args) != 0 {
            failures.push(format!("{} failed on the first run", args[0]));
            continue;
        }
        let first = snapshot(&out);
        if cli(&args) != 0 {
            failures.push(format!("{} failed on the second run", args[0]));
            continue;
        }
        let second = snapshot(&out);
        if first.is_empty() {
            failures.push(format!("{} wrote nothing", args[0]));
        }
        if first != second {
            let differing: Vec<_> = first
                .iter()
                .filter(|(k, v)| second.get(*k) != Some(*v))
                .map(|(k, _)| k.file_name().unwrap().to_string_lossy().into_owned())
                .collect();
            failures.push(format!("{} is not reproducible: {differing:?}", args[0]));
        }
        println!("    {}: {} files identical across runs", args[0], first.len());
    }
    report(10, &failures);
}
