use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("point ({x:.6}, {y:.6}) of {what} falls outside the standardized grid")]
    OutOfDomain { what: String, x: f64, y: f64 },

    #[error("invalid region layout: {reason} (offending pixels: {})", format_pixels(.pixels))]
    InvalidLayout {
        reason: String,
        pixels: Vec<(usize, usize)>,
    },

    #[error("optimizer did not converge after {iterations} iterations; trace: {trace}")]
    Convergence { iterations: usize, trace: String },

    #[error("singular fit: {0}")]
    SingularFit(String),

    #[error("lookup failed: {0}")]
    Lookup(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for errors caused by the data rather than by the numerics.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::Convergence { .. } | Error::SingularFit(_))
    }
}

fn format_pixels(pixels: &[(usize, usize)]) -> String {
    const SHOWN: usize = 12;
    let mut s: Vec<String> = pixels
        .iter()
        .take(SHOWN)
        .map(|(r, c)| format!("({r},{c})"))
        .collect();
    if pixels.len() > SHOWN {
        s.push(format!("... {} more", pixels.len() - SHOWN));
    }
    s.join(" ")
}
