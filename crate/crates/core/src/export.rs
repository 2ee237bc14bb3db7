//! Plain-text exports of intensity surfaces: ASCII PGM heatmaps and long
//! CSV grids.

use std::io::Write;

use crate::error::Result;
use crate::grid::Grid;

pub const PGM_MAXVAL: u16 = 255;

/// Grey levels for a surface: finite values scaled linearly onto
/// `1..=maxval`, non-finite values (no contact) mapped to 0.
pub fn grey_levels(values: &Grid<f64>) -> Grid<u16> {
    let finite = values.iter().copied().filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let span = hi - lo;
    values.map(|&v| {
        if !v.is_finite() {
            0
        } else if span > 0.0 {
            1 + ((v - lo) / span * f64::from(PGM_MAXVAL - 1)).round() as u16
        } else {
            PGM_MAXVAL
        }
    })
}

/// ASCII (P2) heatmap with the toe at the top, i.e. the last grid row
/// printed first. Each comment line is written after the magic number.
pub fn write_pgm<W: Write>(mut w: W, values: &Grid<f64>, comments: &[String]) -> Result<()> {
    let levels = grey_levels(values);
    let (h, width) = levels.dims();
    writeln!(w, "P2")?;
    for c in comments {
        for line in c.lines() {
            writeln!(w, "# {line}")?;
        }
    }
    writeln!(w, "{width} {h}")?;
    writeln!(w, "{PGM_MAXVAL}")?;
    for r in (0..h).rev() {
        let row: Vec<String> = (0..width).map(|c| levels[(r, c)].to_string()).collect();
        writeln!(w, "{}", row.join(" "))?;
    }
    Ok(())
}

/// Long CSV `x,y,value` over every pixel, `x` the column and `y` the row;
/// cells without a value are left empty.
pub fn write_grid_csv<W: Write>(w: W, values: &Grid<f64>) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["x", "y", "value"])?;
    let (h, width) = values.dims();
    for r in 0..h {
        for c in 0..width {
            let v = values[(r, c)];
            let cell = if v.is_finite() { v.to_string() } else { String::new() };
            out.write_record([c.to_string(), r.to_string(), cell])?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_puts_toe_row_first_and_marks_missing() {
        let g = Grid::from_vec(2, 3, vec![0.0, 1.0, f64::NAN, 2.0, 3.0, 4.0]).unwrap();
        let mut buf = Vec::new();
        write_pgm(&mut buf, &g, &["run 1".into()]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[..4], ["P2", "# run 1", "3 2", "255"]);
        assert_eq!(lines[4], "128 192 255");
        assert_eq!(lines[5], "1 65 0");
    }

    #[test]
    fn constant_surface_is_white() {
        let g = Grid::filled(2, 2, 5.0);
        assert!(grey_levels(&g).iter().all(|&v| v == PGM_MAXVAL));
    }

    #[test]
    fn grid_csv_round_trips_values() {
        let g = Grid::from_vec(1, 2, vec![0.25, f64::NAN]).unwrap();
        let mut buf = Vec::new();
        write_grid_csv(&mut buf, &g).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "x,y,value\n0,0,0.25\n1,0,\n");
    }
}
