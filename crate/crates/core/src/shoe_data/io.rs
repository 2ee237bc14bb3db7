//! Shoe file formats.
//!
//! CSV: header `shoe_id,x,y,S,n`, one row per pixel with `S > 0` or `n > 0`
//! where `x` is the column and `y` the row of the standardized grid. Pixels
//! that are absent have `S = 0, n = 0`. Lines starting with `#` are comments.
//!
//! JSON: an array of [`ShoeFile`] objects carrying a run-length encoded
//! contact mask (alternating runs of 0 and 1 over the row-major grid,
//! starting with a run of zeros that may be empty) and a list of RAC pixels.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GridDims, Point, RawPrint, StandardShoe};
use crate::error::{Error, Result};
use crate::grid::Grid;

const CSV_HEADER: [&str; 5] = ["shoe_id", "x", "y", "S", "n"];

#[derive(Debug, Deserialize)]
struct CsvRow {
    shoe_id: String,
    x: usize,
    y: usize,
    #[serde(rename = "S")]
    s: u8,
    n: u32,
}

pub fn read_shoes_csv<R: Read>(reader: R, dims: GridDims) -> Result<Vec<StandardShoe>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header != CSV_HEADER {
        return Err(Error::invalid(format!(
            "shoe CSV header must be {}, got {}",
            CSV_HEADER.join(","),
            header.join(",")
        )));
    }
    let mut order: Vec<String> = Vec::new();
    let mut grids: HashMap<String, (Grid<u8>, Grid<u32>, Grid<bool>)> = HashMap::new();
    for (line, row) in rdr.deserialize::<CsvRow>().enumerate() {
        let row = row?;
        if row.x >= dims.width || row.y >= dims.height {
            return Err(Error::invalid(format!(
                "row {}: pixel (x={}, y={}) outside the {dims} grid",
                line + 2,
                row.x,
                row.y
            )));
        }
        if row.s > 1 {
            return Err(Error::invalid(format!("row {}: S must be 0 or 1", line + 2)));
        }
        let entry = grids.entry(row.shoe_id.clone()).or_insert_with(|| {
            order.push(row.shoe_id.clone());
            (
                Grid::filled(dims.height, dims.width, 0),
                Grid::filled(dims.height, dims.width, 0),
                Grid::filled(dims.height, dims.width, false),
            )
        });
        let seen = &mut entry.2[(row.y, row.x)];
        if *seen {
            return Err(Error::invalid(format!(
                "row {}: duplicate pixel (x={}, y={}) for shoe {}",
                line + 2,
                row.x,
                row.y,
                row.shoe_id
            )));
        }
        *seen = true;
        entry.0[(row.y, row.x)] = row.s;
        entry.1[(row.y, row.x)] = row.n;
    }
    order
        .into_iter()
        .map(|id| {
            let (s, n, _) = grids.remove(&id).expect("every ordered id has a grid");
            StandardShoe::new(id, s, n)
        })
        .collect()
}

pub fn write_shoes_csv<W: Write>(writer: W, shoes: &[StandardShoe]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for shoe in shoes {
        let dims = shoe.dims();
        for r in 0..dims.height {
            for c in 0..dims.width {
                let s = shoe.contact()[(r, c)];
                let n = shoe.counts()[(r, c)];
                if s > 0 || n > 0 {
                    w.write_record([
                        shoe.shoe_id.as_str(),
                        &c.to_string(),
                        &r.to_string(),
                        &s.to_string(),
                        &n.to_string(),
                    ])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShoeFile {
    pub shoe_id: String,
    pub height: usize,
    pub width: usize,
    pub contact_rle: Vec<u64>,
    /// `[x, y, n]` triples for pixels with RACs.
    pub racs: Vec<[u64; 3]>,
}

impl ShoeFile {
    pub fn from_shoe(shoe: &StandardShoe) -> Self {
        let dims = shoe.dims();
        let mask: Vec<bool> = shoe.contact().iter().map(|&s| s > 0).collect();
        let racs = shoe
            .counts()
            .iter()
            .enumerate()
            .filter(|(_, &n)| n > 0)
            .map(|(i, &n)| [(i % dims.width) as u64, (i / dims.width) as u64, u64::from(n)])
            .collect();
        Self {
            shoe_id: shoe.shoe_id.clone(),
            height: dims.height,
            width: dims.width,
            contact_rle: rle_encode(&mask),
            racs,
        }
    }

    pub fn to_shoe(&self) -> Result<StandardShoe> {
        let dims = GridDims::new(self.height, self.width)?;
        let mask = rle_decode(&self.contact_rle, dims.pixels())?;
        let contact = Grid::from_vec(dims.height, dims.width, mask.into_iter().map(u8::from).collect())
            .expect("decoded mask has grid length");
        let mut counts = Grid::filled(dims.height, dims.width, 0u32);
        for &[x, y, n] in &self.racs {
            let (x, y) = (x as usize, y as usize);
            if x >= dims.width || y >= dims.height {
                return Err(Error::invalid(format!(
                    "shoe {}: RAC pixel (x={x}, y={y}) outside the {dims} grid",
                    self.shoe_id
                )));
            }
            counts[(y, x)] += u32::try_from(n)
                .map_err(|_| Error::invalid(format!("shoe {}: RAC count too large", self.shoe_id)))?;
        }
        StandardShoe::new(self.shoe_id.clone(), contact, counts)
    }
}

/// Either a bare array of shoes or an object whose `shoes` member holds
/// them next to other metadata.
#[derive(Deserialize)]
#[serde(untagged)]
enum ShoeDocument {
    Bare(Vec<ShoeFile>),
    Wrapped { shoes: Vec<ShoeFile> },
}

pub fn read_shoes_json<R: Read>(reader: R, dims: Option<GridDims>) -> Result<Vec<StandardShoe>> {
    let files = match serde_json::from_reader(reader)? {
        ShoeDocument::Bare(f) | ShoeDocument::Wrapped { shoes: f } => f,
    };
    files
        .iter()
        .map(|f| {
            let shoe = f.to_shoe()?;
            if let Some(d) = dims {
                if shoe.dims() != d {
                    return Err(Error::invalid(format!(
                        "shoe {} is on a {} grid, expected {d}",
                        shoe.shoe_id,
                        shoe.dims()
                    )));
                }
            }
            Ok(shoe)
        })
        .collect()
}

pub fn write_shoes_json<W: Write>(writer: W, shoes: &[StandardShoe]) -> Result<()> {
    let files: Vec<ShoeFile> = shoes.iter().map(ShoeFile::from_shoe).collect();
    serde_json::to_writer(writer, &files)?;
    Ok(())
}

/// Reads shoes from a `.json` or CSV file, chosen by extension.
pub fn read_shoes(path: &Path, dims: GridDims) -> Result<Vec<StandardShoe>> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        read_shoes_json(file, Some(dims))
    } else {
        read_shoes_csv(file, dims)
    }
}

pub fn rle_encode(mask: &[bool]) -> Vec<u64> {
    let mut runs = Vec::new();
    let mut current = false;
    let mut len = 0u64;
    for &m in mask {
        if m == current {
            len += 1;
        } else {
            runs.push(len);
            current = m;
            len = 1;
        }
    }
    runs.push(len);
    runs
}

pub fn rle_decode(runs: &[u64], expected_len: usize) -> Result<Vec<bool>> {
    let total: u64 = runs.iter().sum();
    if total != expected_len as u64 {
        return Err(Error::invalid(format!(
            "run-length mask covers {total} pixels, expected {expected_len}"
        )));
    }
    let mut out = Vec::with_capacity(expected_len);
    for (k, &len) in runs.iter().enumerate() {
        out.extend(std::iter::repeat_n(k % 2 == 1, len as usize));
    }
    Ok(out)
}

/// JSON form of a [`RawPrint`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawPrintFile {
    pub print_id: String,
    pub landmark_top: Point,
    pub landmark_bottom: Point,
    pub rac_points: Vec<Point>,
    pub mask_height: usize,
    pub mask_width: usize,
    pub contact_rle: Vec<u64>,
    pub is_right_shoe: bool,
}

impl RawPrintFile {
    pub fn to_raw(&self) -> Result<RawPrint> {
        let mask = rle_decode(&self.contact_rle, self.mask_height * self.mask_width)?;
        Ok(RawPrint {
            print_id: self.print_id.clone(),
            landmark_top: self.landmark_top,
            landmark_bottom: self.landmark_bottom,
            rac_points: self.rac_points.clone(),
            contact_mask: Grid::from_vec(self.mask_height, self.mask_width, mask)
                .expect("decoded mask has image length"),
            is_right_shoe: self.is_right_shoe,
        })
    }

    pub fn from_raw(raw: &RawPrint) -> Self {
        Self {
            print_id: raw.print_id.clone(),
            landmark_top: raw.landmark_top,
            landmark_bottom: raw.landmark_bottom,
            rac_points: raw.rac_points.clone(),
            mask_height: raw.contact_mask.height(),
            mask_width: raw.contact_mask.width(),
            contact_rle: rle_encode(raw.contact_mask.as_slice()),
            is_right_shoe: raw.is_right_shoe,
        }
    }
}

/// Reads one print or an array of prints.
pub fn read_raw_print_json<R: Read>(reader: R) -> Result<Vec<RawPrint>> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(RawPrintFile),
        Many(Vec<RawPrintFile>),
    }
    match serde_json::from_reader(reader)? {
        OneOrMany::One(f) => Ok(vec![f.to_raw()?]),
        OneOrMany::Many(fs) => fs.iter().map(RawPrintFile::to_raw).collect(),
    }
}

pub fn write_raw_print_json<W: Write>(writer: W, prints: &[RawPrint]) -> Result<()> {
    let files: Vec<RawPrintFile> = prints.iter().map(RawPrintFile::from_raw).collect();
    serde_json::to_writer_pretty(writer, &files)?;
    Ok(())
}
