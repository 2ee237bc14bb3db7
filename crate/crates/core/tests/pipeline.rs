use rac_intensity::partitioning::{aggregate_all, expert_partition, RegionLayout};
use rac_intensity::pixel::{cluster_outcomes, fit_cml_pixel, fit_re_pixel, naive_pixel, pixel_clusters};
use rac_intensity::region::{fit_cml_region, fit_re_region, naive_region, rescale_cml, Prior};
use rac_intensity::shoe_data::{descriptive_stats, GridDims, StandardShoe};
use rac_intensity::simulation::{generate_dataset, ALaw, DatasetConfig, SurfaceConfig};
use rac_intensity::spline::{contact_knots, SplineBasis};
use rac_intensity::subsampling::{subsample, Allocation, Scheme};

fn dataset(shoes: usize, avg_racs: f64, seed: u64) -> Vec<StandardShoe> {
    generate_dataset(&DatasetConfig {
        shoes,
        grid: GridDims::new(80, 50).unwrap(),
        avg_racs,
        surface: SurfaceConfig::default(),
        relative_lambda: Vec::new(),
        layout: RegionLayout::default(),
        a_law: ALaw::Gamma { shape: 4.0, scale: 0.25 },
        seed,
    })
    .unwrap()
}

fn spread(v: &[f64]) -> f64 {
    let finite: Vec<f64> = v.iter().copied().filter(|x| x.is_finite()).collect();
    let max = finite.iter().copied().fold(f64::MIN, f64::max);
    let min = finite.iter().copied().fold(f64::MAX, f64::min);
    max / min
}

#[test]
fn region_estimates_of_a_flat_intensity_are_flat() {
    let shoes = dataset(200, 60.0, 4);
    let part = expert_partition(&RegionLayout::default(), shoes[0].dims()).unwrap();
    let records = aggregate_all(&shoes, &part).unwrap();
    for (shoe, rec) in shoes.iter().zip(&records) {
        assert_eq!(rec.total, shoe.total_racs());
        assert_eq!(rec.s_area.iter().sum::<f64>(), shoe.contact_pixels() as f64);
    }
    let naive = naive_region(&records).unwrap();
    let re = fit_re_region(&records, Prior::Gamma).unwrap();
    let cml = rescale_cml(&fit_cml_region(&records).unwrap(), &naive).unwrap();
    for fit in [&naive, &re, &cml] {
        assert_eq!(fit.lambda_hat.len(), 14);
        assert!(spread(&fit.lambda_hat) < 1.3, "{:?}", fit.lambda_hat);
    }
}

#[test]
fn pixel_fits_run_end_to_end_and_repeat() {
    let shoes: Vec<StandardShoe> = dataset(20, 40.0, 9)
        .into_iter()
        .map(|s| {
            let ones = s.counts().map(|&n| n.min(1));
            StandardShoe::new(s.shoe_id.clone(), s.contact().clone(), ones).unwrap()
        })
        .collect();
    let naive = naive_pixel(&shoes).unwrap();
    let (y, ids) = cluster_outcomes(&pixel_clusters(&shoes).unwrap());
    let cumulative = descriptive_stats(&shoes).unwrap().cumulative_contact;
    let (kx, ky) = contact_knots(&cumulative, 1, 2).unwrap();
    let basis = SplineBasis::new(kx, ky).unwrap();
    let fit = |seed| {
        let sample = subsample(&y, &ids, Scheme::CcWithinPropCases, Allocation::PerCase(5.0), seed).unwrap();
        (fit_re_pixel(&shoes, &basis, 21, &sample).unwrap(), fit_cml_pixel(&shoes, &basis, &sample).unwrap())
    };
    let (re, cml) = fit(3);
    for surface in [&re.lambda_hat, &cml.lambda_hat] {
        for (a, b) in surface.iter().zip(naive.lambda_hat.iter()) {
            assert_eq!(a.is_finite(), b.is_finite());
            assert!(!a.is_finite() || *a > 0.0);
        }
    }
    assert!(re.sigma_hat.unwrap() >= 0.0);
    let (again, _) = fit(3);
    let bits = |g: &rac_intensity::Grid<f64>| g.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&re.lambda_hat), bits(&again.lambda_hat));
}
