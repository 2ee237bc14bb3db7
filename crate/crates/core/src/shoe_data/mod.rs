//! Standardized shoeprints: the normalization pipeline from marked lab
//! prints to a fixed pixel grid, count binarization, and per-shoe records.
//!
//! Standardized coordinates put the origin at the midpoint of the two
//! landmarks, the major axis along +y (toward the top landmark) and measure
//! lengths in units of the landmark distance, so the sole spans
//! `y ∈ [-0.5, 0.5]`. Right shoes are mirrored in x so every print is a
//! left shoe. Grid pixels are square with side `1 / height`; row 0 is the
//! heel end and the x range is `[-width/(2·height), width/(2·height)]`.

mod io;
mod stats;

pub use io::{
    read_raw_print_json, read_shoes, read_shoes_csv, read_shoes_json, rle_decode, rle_encode,
    write_raw_print_json, write_shoes_csv, write_shoes_json, RawPrintFile, ShoeFile,
};
pub use stats::{descriptive_stats, spearman, StatsReport};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Default grid used for the maximal-resolution analysis.
pub const DEFAULT_GRID: GridDims = GridDims {
    height: 397,
    width: 307,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridDims {
    pub height: usize,
    pub width: usize,
}

impl GridDims {
    pub fn new(height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid(format!(
                "grid dimensions must be positive, got {height}x{width}"
            )));
        }
        Ok(Self { height, width })
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    /// Standardized coordinates of the center of pixel `(row, col)`.
    pub fn pixel_center(&self, row: usize, col: usize) -> Point {
        let h = self.height as f64;
        Point {
            x: (col as f64 + 0.5 - self.width as f64 / 2.0) / h,
            y: (row as f64 + 0.5) / h - 0.5,
        }
    }

    /// Pixel containing a standardized point. Points on a pixel boundary go
    /// to the lower-index pixel; the outer boundary of the grid is inside.
    pub fn pixel_of(&self, p: Point) -> Option<(usize, usize)> {
        let h = self.height as f64;
        let row = raster_index((p.y + 0.5) * h, self.height)?;
        let col = raster_index(p.x * h + self.width as f64 / 2.0, self.width)?;
        Some((row, col))
    }
}

impl Default for GridDims {
    fn default() -> Self {
        DEFAULT_GRID
    }
}

impl std::fmt::Display for GridDims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.height, self.width)
    }
}

impl std::str::FromStr for GridDims {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (h, w) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| Error::invalid(format!("grid must look like 397x307, got {s:?}")))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| Error::invalid(format!("bad grid dimension {v:?}")))
        };
        GridDims::new(parse(h)?, parse(w)?)
    }
}

fn raster_index(v: f64, n: usize) -> Option<usize> {
    if !v.is_finite() || v < 0.0 || v > n as f64 {
        return None;
    }
    if v == 0.0 {
        return Some(0);
    }
    Some(v.ceil() as usize - 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// A lab print as marked by an examiner, in image pixel coordinates.
///
/// Image coordinates are Cartesian: `x` runs along mask columns and `y`
/// along mask rows, pixel `(row, col)` covering `[col, col+1) × [row, row+1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawPrint {
    pub print_id: String,
    pub landmark_top: Point,
    pub landmark_bottom: Point,
    /// RAC centers of gravity.
    pub rac_points: Vec<Point>,
    pub contact_mask: Grid<bool>,
    pub is_right_shoe: bool,
}

/// One shoe on the standardized grid: contact indicator and RAC counts.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardShoe {
    pub shoe_id: String,
    contact: Grid<u8>,
    counts: Grid<u32>,
}

impl StandardShoe {
    /// Builds a shoe, setting `S = 1` wherever a RAC was recorded.
    pub fn new(shoe_id: impl Into<String>, mut contact: Grid<u8>, counts: Grid<u32>) -> Result<Self> {
        let shoe_id = shoe_id.into();
        if contact.dims() != counts.dims() {
            return Err(Error::invalid(format!(
                "shoe {shoe_id}: contact grid {:?} and count grid {:?} differ",
                contact.dims(),
                counts.dims()
            )));
        }
        if let Some(bad) = contact.iter().find(|&&s| s > 1) {
            return Err(Error::invalid(format!(
                "shoe {shoe_id}: contact values must be 0 or 1, found {bad}"
            )));
        }
        for (s, &n) in contact.as_mut_slice().iter_mut().zip(counts.iter()) {
            if n > 0 {
                *s = 1;
            }
        }
        Ok(Self {
            shoe_id,
            contact,
            counts,
        })
    }

    pub fn dims(&self) -> GridDims {
        GridDims {
            height: self.contact.height(),
            width: self.contact.width(),
        }
    }

    pub fn contact(&self) -> &Grid<u8> {
        &self.contact
    }

    pub fn counts(&self) -> &Grid<u32> {
        &self.counts
    }

    pub fn contact_pixels(&self) -> u64 {
        self.contact.iter().map(|&s| u64::from(s)).sum()
    }

    pub fn total_racs(&self) -> u64 {
        self.counts.iter().map(|&n| u64::from(n)).sum()
    }
}

/// Per-cell contact area and RAC counts of one shoe on some partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShoeRecord {
    pub shoe_id: String,
    /// `S_ij`, contact area of the shoe inside cell `j`.
    pub s_area: Vec<f64>,
    /// `n_ij`, observed RACs inside cell `j`.
    pub counts: Vec<u32>,
    /// `n_i = Σ_j n_ij`.
    pub total: u64,
}

impl ShoeRecord {
    pub fn new(shoe_id: impl Into<String>, s_area: Vec<f64>, counts: Vec<u32>) -> Result<Self> {
        let shoe_id = shoe_id.into();
        if s_area.len() != counts.len() {
            return Err(Error::invalid(format!(
                "shoe {shoe_id}: {} areas but {} counts",
                s_area.len(),
                counts.len()
            )));
        }
        for (j, (&s, &n)) in s_area.iter().zip(&counts).enumerate() {
            if !(s >= 0.0) || !s.is_finite() {
                return Err(Error::invalid(format!(
                    "shoe {shoe_id}: contact area of cell {j} must be finite and non-negative, got {s}"
                )));
            }
            if s == 0.0 && n > 0 {
                return Err(Error::invalid(format!(
                    "shoe {shoe_id}: cell {j} has {n} RACs but no contact surface"
                )));
            }
        }
        let total = counts.iter().map(|&n| u64::from(n)).sum();
        Ok(Self {
            shoe_id,
            s_area,
            counts,
            total,
        })
    }

    pub fn cells(&self) -> usize {
        self.counts.len()
    }
}

/// Maps a marked print onto the standardized grid.
///
/// Translation to the landmark midpoint, rotation of the major axis onto +y,
/// scaling by the landmark distance and mirroring of right shoes. The contact
/// mask is resampled by looking up the image pixel under each grid pixel
/// center; RAC centers are assigned to the grid pixel containing them.
pub fn normalize(raw: &RawPrint, grid: GridDims) -> Result<StandardShoe> {
    GridDims::new(grid.height, grid.width)?;
    let frame = ShoeFrame::from_landmarks(raw.landmark_top, raw.landmark_bottom, raw.is_right_shoe)
        .map_err(|e| match e {
            Error::InvalidInput(m) => Error::invalid(format!("print {}: {m}", raw.print_id)),
            other => other,
        })?;

    let (img_h, img_w) = raw.contact_mask.dims();
    for p in &raw.rac_points {
        if !(p.x >= 0.0 && p.x <= img_w as f64 && p.y >= 0.0 && p.y <= img_h as f64) {
            return Err(Error::invalid(format!(
                "print {}: RAC at ({}, {}) lies outside the {}x{} image",
                raw.print_id, p.x, p.y, img_h, img_w
            )));
        }
    }

    let contact = Grid::from_fn(grid.height, grid.width, |r, c| {
        let img = frame.to_image(grid.pixel_center(r, c));
        if img.x < 0.0 || img.y < 0.0 {
            return 0;
        }
        let (ir, ic) = (img.y.floor() as usize, img.x.floor() as usize);
        u8::from(raw.contact_mask.get(ir, ic).copied().unwrap_or(false))
    });

    let mut counts = Grid::filled(grid.height, grid.width, 0u32);
    for p in &raw.rac_points {
        let q = frame.to_standard(*p);
        let (r, c) = grid.pixel_of(q).ok_or_else(|| Error::OutOfDomain {
            what: format!("RAC of print {} at image ({}, {})", raw.print_id, p.x, p.y),
            x: q.x,
            y: q.y,
        })?;
        counts[(r, c)] += 1;
    }
    StandardShoe::new(raw.print_id.clone(), contact, counts)
}

/// The shoe-aligned coordinate system of one print.
#[derive(Debug, Clone, Copy)]
pub struct ShoeFrame {
    origin: Point,
    /// Unit vector from the bottom to the top landmark.
    major: Point,
    /// Unit vector completing a right-handed frame with `major`.
    minor: Point,
    length: f64,
    mirror: bool,
}

impl ShoeFrame {
    pub fn from_landmarks(top: Point, bottom: Point, mirror: bool) -> Result<Self> {
        let (dx, dy) = (top.x - bottom.x, top.y - bottom.y);
        let length = dx.hypot(dy);
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::invalid("landmarks coincide; shoe length is zero"));
        }
        let major = Point::new(dx / length, dy / length);
        Ok(Self {
            origin: Point::new((top.x + bottom.x) / 2.0, (top.y + bottom.y) / 2.0),
            major,
            minor: Point::new(major.y, -major.x),
            length,
            mirror,
        })
    }

    pub fn to_standard(&self, p: Point) -> Point {
        let (dx, dy) = (p.x - self.origin.x, p.y - self.origin.y);
        let x = (dx * self.minor.x + dy * self.minor.y) / self.length;
        let y = (dx * self.major.x + dy * self.major.y) / self.length;
        Point::new(if self.mirror { -x } else { x }, y)
    }

    pub fn to_image(&self, q: Point) -> Point {
        let x = if self.mirror { -q.x } else { q.x } * self.length;
        let y = q.y * self.length;
        Point::new(
            self.origin.x + x * self.minor.x + y * self.major.x,
            self.origin.y + x * self.minor.y + y * self.major.y,
        )
    }
}

/// Replaces every count of two or more by one; returns the number of
/// pixels changed.
pub fn binarize_counts(shoe: &StandardShoe) -> (StandardShoe, usize) {
    let mut out = shoe.clone();
    let mut modified = 0;
    for n in out.counts.as_mut_slice() {
        if *n >= 2 {
            *n = 1;
            modified += 1;
        }
    }
    (out, modified)
}
