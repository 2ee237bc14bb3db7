//! Synthetic contact surfaces: a sole-shaped outline filled with random
//! discs until a target fraction of it is covered.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::shoe_data::GridDims;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceConfig {
    /// Mean fraction of the sole in contact with the ground.
    pub coverage: f64,
    /// Per-shoe coverage is uniform on `coverage ± spread`, clipped to
    /// `(0, 1]`.
    #[serde(default)]
    pub spread: f64,
    /// Disc radii as fractions of the shoe length.
    #[serde(default = "default_radius")]
    pub radius: (f64, f64),
}

fn default_radius() -> (f64, f64) {
    (0.04, 0.12)
}

impl Default for SurfaceConfig {
    fn default() -> Self {
        Self {
            coverage: 0.6,
            spread: 0.25,
            radius: default_radius(),
        }
    }
}

impl SurfaceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.coverage > 0.0 && self.coverage <= 1.0) {
            return Err(Error::invalid(format!("coverage must lie in (0, 1], got {}", self.coverage)));
        }
        if !(self.spread >= 0.0 && self.spread.is_finite()) {
            return Err(Error::invalid("coverage spread must be non-negative"));
        }
        let (lo, hi) = self.radius;
        if !(lo > 0.0 && hi >= lo) {
            return Err(Error::invalid("disc radii must satisfy 0 < min <= max"));
        }
        Ok(())
    }
}

/// Half-width of the sole outline at height `v` (heel 0, toe 1), in units
/// of the grid width.
fn half_width(v: f64) -> f64 {
    if !(0.0..=1.0).contains(&v) {
        return 0.0;
    }
    let profile = 0.30 + 0.14 * (-((v - 0.72) / 0.16).powi(2)).exp()
        - 0.08 * (-((v - 0.42) / 0.10).powi(2)).exp();
    let taper = (1.0 - ((v - 0.5) / 0.5).powi(8)).max(0.0).sqrt();
    profile * taper
}

pub fn sole_outline(dims: GridDims) -> Grid<bool> {
    Grid::from_fn(dims.height, dims.width, |r, c| {
        let u = (c as f64 + 0.5) / dims.width as f64;
        let v = (r as f64 + 0.5) / dims.height as f64;
        (u - 0.5).abs() <= half_width(v)
    })
}

/// One contact surface.
pub fn synthetic_contact(dims: GridDims, cfg: &SurfaceConfig, rng: &mut impl Rng) -> Grid<u8> {
    let outline = sole_outline(dims);
    let sole: Vec<usize> = (0..outline.len()).filter(|&k| outline.as_slice()[k]).collect();
    let target = if cfg.spread > 0.0 {
        cfg.coverage + cfg.spread * (2.0 * rng.random::<f64>() - 1.0)
    } else {
        cfg.coverage
    }
    .clamp(0.02, 1.0);
    if target >= 1.0 || sole.is_empty() {
        return outline.map(|&b| u8::from(b));
    }
    let mut contact = Grid::filled(dims.height, dims.width, 0u8);
    let goal = (target * sole.len() as f64).ceil() as usize;
    let mut covered = 0usize;
    let scale = dims.height as f64;
    while covered < goal {
        let k = sole[rng.random_range(0..sole.len())];
        let (cr, cc) = outline.coords_of(k);
        let radius = rng.random_range(cfg.radius.0..=cfg.radius.1) * scale;
        let reach = radius.ceil() as isize;
        for dr in -reach..=reach {
            for dc in -reach..=reach {
                if ((dr * dr + dc * dc) as f64) > radius * radius {
                    continue;
                }
                let (r, c) = (cr as isize + dr, cc as isize + dc);
                if r < 0 || c < 0 || r >= dims.height as isize || c >= dims.width as isize {
                    continue;
                }
                let (r, c) = (r as usize, c as usize);
                if outline[(r, c)] && contact[(r, c)] == 0 {
                    contact[(r, c)] = 1;
                    covered += 1;
                }
            }
        }
    }
    contact
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn outline_is_sole_shaped() {
        let d = GridDims::new(120, 93).unwrap();
        let o = sole_outline(d);
        let row_width = |r: usize| (0..93).filter(|&c| o[(r, c)]).count();
        // ball of the foot wider than the arch and the heel
        assert!(row_width(86) > row_width(50));
        assert!(row_width(86) > row_width(15));
        assert!(row_width(0) < row_width(15) / 2);
    }

    #[test]
    fn coverage_targets_are_met() {
        let d = GridDims::new(120, 93).unwrap();
        let sole = sole_outline(d).iter().filter(|&&b| b).count() as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = SurfaceConfig {
            coverage: 0.5,
            spread: 0.0,
            ..SurfaceConfig::default()
        };
        let s = synthetic_contact(d, &cfg, &mut rng);
        let frac = s.iter().filter(|&&v| v == 1).count() as f64 / sole;
        assert!((0.5..0.62).contains(&frac), "{frac}");
        let full = SurfaceConfig {
            coverage: 1.0,
            spread: 0.0,
            ..SurfaceConfig::default()
        };
        let a = synthetic_contact(d, &full, &mut rng);
        let b = synthetic_contact(d, &full, &mut rng);
        assert_eq!(a, b);
    }
}
