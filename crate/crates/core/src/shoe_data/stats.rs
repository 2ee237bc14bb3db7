use serde::{Deserialize, Serialize};

use super::{GridDims, StandardShoe};
use crate::error::{Error, Result};
use crate::grid::Grid;

/// Descriptive statistics over a collection of standardized shoes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatsReport {
    pub grid: GridDims,
    pub shoe_ids: Vec<String>,
    pub rac_counts: Vec<u64>,
    pub contact_pixels: Vec<u64>,
    /// Number of shoes with contact surface at each pixel.
    pub cumulative_contact: Grid<u32>,
    /// Spearman correlation between contact pixels and RAC count; `None`
    /// when fewer than two shoes or either variable has no spread.
    pub spearman: Option<f64>,
}

pub fn descriptive_stats(shoes: &[StandardShoe]) -> Result<StatsReport> {
    let first = shoes
        .first()
        .ok_or_else(|| Error::invalid("descriptive statistics need at least one shoe"))?;
    let grid = first.dims();
    let mut cumulative = Grid::filled(grid.height, grid.width, 0u32);
    for shoe in shoes {
        if shoe.dims() != grid {
            return Err(Error::invalid(format!(
                "shoe {} is on a {} grid, expected {}",
                shoe.shoe_id,
                shoe.dims(),
                grid
            )));
        }
        for (acc, &s) in cumulative.as_mut_slice().iter_mut().zip(shoe.contact().iter()) {
            *acc += u32::from(s);
        }
    }
    let rac_counts: Vec<u64> = shoes.iter().map(StandardShoe::total_racs).collect();
    let contact_pixels: Vec<u64> = shoes.iter().map(StandardShoe::contact_pixels).collect();
    let as_f = |v: &[u64]| v.iter().map(|&x| x as f64).collect::<Vec<_>>();
    let spearman = spearman(&as_f(&contact_pixels), &as_f(&rac_counts));
    Ok(StatsReport {
        grid,
        shoe_ids: shoes.iter().map(|s| s.shoe_id.clone()).collect(),
        rac_counts,
        contact_pixels,
        cumulative_contact: cumulative,
        spearman,
    })
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    pearson(&average_ranks(a), &average_ranks(b))
}

fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut ranks = vec![0.0; v.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && v[order[end]] == v[order[start]] {
            end += 1;
        }
        // ranks are 1-based; ties share the mean of their positions
        let rank = (start + end + 1) as f64 / 2.0;
        for &k in &order[start..end] {
            ranks[k] = rank;
        }
        start = end;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some(sab / (saa * sbb).sqrt())
}
