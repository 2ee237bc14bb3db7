//! Cell systems over the standardized sole and aggregation of shoes onto
//! them.
//!
//! The expert layout is an approximation of the published 14-region
//! division: five bands along the shoe, a medial/lateral split, and the
//! ball-of-foot band further divided into an inner part (inside a polygon)
//! and outer parts in front of and behind it. Coordinates in a
//! [`RegionLayout`] are fractions of the grid, `u` across and `v` along the
//! shoe from the heel.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::shoe_data::{GridDims, Point, ShoeRecord, StandardShoe};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionKind {
    Pixel,
    Region,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub cell_id: usize,
    pub label: String,
    /// `(row, col)` grid indices.
    pub pixels: Vec<(usize, usize)>,
    /// Mean standardized coordinates of the pixel centers.
    pub centroid: Point,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub partition_id: String,
    pub kind: PartitionKind,
    dims: GridDims,
    cells: Vec<Cell>,
    assignment: Grid<usize>,
}

impl Partition {
    /// Builds a partition from a per-pixel cell index. Every cell must be
    /// non-empty.
    pub fn from_assignment(
        partition_id: impl Into<String>,
        kind: PartitionKind,
        labels: Vec<String>,
        assignment: Grid<usize>,
    ) -> Result<Self> {
        let dims = GridDims::new(assignment.height(), assignment.width())?;
        let mut pixels: Vec<Vec<(usize, usize)>> = vec![Vec::new(); labels.len()];
        for (i, &cell) in assignment.iter().enumerate() {
            let slot = pixels.get_mut(cell).ok_or_else(|| {
                Error::invalid(format!("pixel {i} assigned to unknown cell {cell}"))
            })?;
            slot.push(assignment.coords_of(i));
        }
        if let Some(j) = pixels.iter().position(Vec::is_empty) {
            return Err(Error::InvalidLayout {
                reason: format!("region {} ({}) contains no pixels", j, labels[j]),
                pixels: vec![],
            });
        }
        let cells = labels
            .into_iter()
            .zip(pixels)
            .enumerate()
            .map(|(cell_id, (label, pixels))| {
                let k = pixels.len() as f64;
                let (sx, sy) = pixels.iter().fold((0.0, 0.0), |(sx, sy), &(r, c)| {
                    let p = dims.pixel_center(r, c);
                    (sx + p.x, sy + p.y)
                });
                Cell {
                    cell_id,
                    label,
                    pixels,
                    centroid: Point::new(sx / k, sy / k),
                }
            })
            .collect();
        Ok(Self {
            partition_id: partition_id.into(),
            kind,
            dims,
            cells,
            assignment,
        })
    }

    pub fn dims(&self) -> GridDims {
        self.dims
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cell_of(&self, row: usize, col: usize) -> usize {
        self.assignment[(row, col)]
    }

    pub fn assignment(&self) -> &Grid<usize> {
        &self.assignment
    }

    /// Paints one value per cell back onto the grid.
    pub fn expand(&self, values: &[f64]) -> Result<Grid<f64>> {
        if values.len() != self.cells.len() {
            return Err(Error::invalid(format!(
                "{} values for a partition of {} cells",
                values.len(),
                self.cells.len()
            )));
        }
        Ok(self.assignment.map(|&j| values[j]))
    }
}

/// One cell per pixel, numbered row-major.
pub fn pixel_partition(dims: GridDims) -> Result<Partition> {
    let dims = GridDims::new(dims.height, dims.width)?;
    let assignment = Grid::from_fn(dims.height, dims.width, |r, c| r * dims.width + c);
    let labels = (0..dims.pixels())
        .map(|i| format!("px{}_{}", i / dims.width, i % dims.width))
        .collect();
    Partition::from_assignment(format!("pixel-{dims}"), PartitionKind::Pixel, labels, assignment)
}

/// A rectangular `bands × columns` partition, numbered from the heel.
pub fn grid_partition(dims: GridDims, bands: usize, columns: usize) -> Result<Partition> {
    if bands == 0 || columns == 0 || bands > dims.height || columns > dims.width {
        return Err(Error::invalid(format!(
            "cannot split a {dims} grid into {bands}x{columns} blocks"
        )));
    }
    let assignment = Grid::from_fn(dims.height, dims.width, |r, c| {
        (r * bands / dims.height) * columns + c * columns / dims.width
    });
    let labels = (0..bands * columns)
        .map(|j| format!("b{}c{}", j / columns, j % columns))
        .collect();
    Partition::from_assignment(
        format!("grid{bands}x{columns}-{dims}"),
        PartitionKind::Region,
        labels,
        assignment,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionLayout {
    /// Six band boundaries along the shoe, from heel (0) to toe (1).
    pub y_cuts: Vec<f64>,
    /// Medial/lateral split as a fraction of the grid width.
    pub x_cut: f64,
    /// Index of the ball-of-foot band, counted from the heel.
    pub pad_band: usize,
    /// `[u, v]` vertices of the inner pad region.
    pub pad_inner_poly: Vec<[f64; 2]>,
}

impl Default for RegionLayout {
    fn default() -> Self {
        Self {
            y_cuts: vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
            x_cut: 0.5,
            pad_band: 3,
            pad_inner_poly: vec![[0.25, 0.64], [0.75, 0.64], [0.75, 0.76], [0.25, 0.76]],
        }
    }
}

impl RegionLayout {
    pub const BANDS: usize = 5;

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    fn validate(&self) -> Result<()> {
        let bad = |reason: String| Err(Error::InvalidLayout { reason, pixels: vec![] });
        if self.y_cuts.len() != Self::BANDS + 1 {
            return bad(format!(
                "expected {} band boundaries, got {}",
                Self::BANDS + 1,
                self.y_cuts.len()
            ));
        }
        if self.y_cuts.iter().any(|v| !v.is_finite()) {
            return bad("band boundaries must be finite".into());
        }
        if !(self.x_cut > 0.0 && self.x_cut < 1.0) {
            return bad(format!("x_cut must lie in (0, 1), got {}", self.x_cut));
        }
        if self.pad_band >= Self::BANDS {
            return bad(format!("pad_band must be below {}", Self::BANDS));
        }
        if self.pad_inner_poly.len() < 3 {
            return bad("pad polygon needs at least three vertices".into());
        }
        Ok(())
    }
}

/// The 14-region expert partition on a grid.
pub fn expert_partition(layout: &RegionLayout, dims: GridDims) -> Result<Partition> {
    layout.validate()?;
    let dims = GridDims::new(dims.height, dims.width)?;
    let pad_mid = layout.pad_inner_poly.iter().map(|p| p[1]).sum::<f64>()
        / layout.pad_inner_poly.len() as f64;

    // cell numbering: bands from the heel, two cells per ordinary band and
    // three per side in the pad band (behind, inner, in front)
    let mut labels = Vec::new();
    let mut band_base = Vec::with_capacity(RegionLayout::BANDS);
    for b in 0..RegionLayout::BANDS {
        band_base.push(labels.len());
        if b == layout.pad_band {
            for side in ["A", "B"] {
                for part in ["outer-back", "inner", "outer-front"] {
                    labels.push(format!("pad-{side}-{part}"));
                }
            }
        } else {
            for side in ["A", "B"] {
                labels.push(format!("band{b}-{side}"));
            }
        }
    }

    let mut gaps = Vec::new();
    let mut overlaps = Vec::new();
    let assignment = Grid::from_fn(dims.height, dims.width, |r, c| {
        let u = (c as f64 + 0.5) / dims.width as f64;
        let v = (r as f64 + 0.5) / dims.height as f64;
        let bands: Vec<usize> = (0..RegionLayout::BANDS)
            .filter(|&b| layout.y_cuts[b] <= v && v < layout.y_cuts[b + 1])
            .collect();
        match bands.len() {
            0 => {
                gaps.push((r, c));
                return usize::MAX;
            }
            1 => {}
            _ => {
                overlaps.push((r, c));
                return usize::MAX;
            }
        }
        let b = bands[0];
        let side = usize::from(u >= layout.x_cut);
        if b == layout.pad_band {
            let part = if point_in_polygon(u, v, &layout.pad_inner_poly) {
                1
            } else if v >= pad_mid {
                2
            } else {
                0
            };
            band_base[b] + side * 3 + part
        } else {
            band_base[b] + side
        }
    });
    if !gaps.is_empty() {
        return Err(Error::InvalidLayout {
            reason: format!("{} pixels are not covered by any band", gaps.len()),
            pixels: gaps,
        });
    }
    if !overlaps.is_empty() {
        return Err(Error::InvalidLayout {
            reason: format!("{} pixels fall in more than one band", overlaps.len()),
            pixels: overlaps,
        });
    }
    Partition::from_assignment(format!("expert14-{dims}"), PartitionKind::Region, labels, assignment)
}

/// Even-odd rule.
fn point_in_polygon(u: f64, v: f64, poly: &[[f64; 2]]) -> bool {
    let mut inside = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let ([ui, vi], [uj, vj]) = (poly[i], poly[j]);
        if (vi > v) != (vj > v) && u < (uj - ui) * (v - vi) / (vj - vi) + ui {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Sums a shoe's contact pixels and RACs inside each cell.
pub fn aggregate(shoe: &StandardShoe, part: &Partition) -> Result<ShoeRecord> {
    if shoe.dims() != part.dims() {
        return Err(Error::invalid(format!(
            "shoe {} is on a {} grid but the partition is {}",
            shoe.shoe_id,
            shoe.dims(),
            part.dims()
        )));
    }
    let mut s_area = vec![0.0; part.len()];
    let mut counts = vec![0u32; part.len()];
    for ((&j, &s), &n) in part
        .assignment
        .iter()
        .zip(shoe.contact().iter())
        .zip(shoe.counts().iter())
    {
        s_area[j] += f64::from(s);
        counts[j] += n;
    }
    ShoeRecord::new(shoe.shoe_id.clone(), s_area, counts)
}

pub fn aggregate_all(shoes: &[StandardShoe], part: &Partition) -> Result<Vec<ShoeRecord>> {
    shoes.iter().map(|s| aggregate(s, part)).collect()
}
