//! Output directory handling and provenance stamping.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rac_intensity::export::{write_grid_csv, write_pgm};
use rac_intensity::Grid;
use serde::Serialize;

use crate::CliError;

pub const VERSION: &str = env!("RAC_INTENSITY_VERSION");

/// Everything needed to reproduce a run; embedded in every output file.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub version: String,
    pub command: String,
    pub seed: Option<u64>,
    pub out_dir: PathBuf,
    pub verbosity: u8,
    pub params: serde_json::Value,
}

impl RunConfig {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("run config serializes")
    }
}

pub struct Output {
    dir: PathBuf,
    config: RunConfig,
    written: Vec<PathBuf>,
}

#[derive(Serialize)]
struct Stamped<'a, T: Serialize> {
    version: &'a str,
    run_config: &'a RunConfig,
    #[serde(flatten)]
    payload: &'a T,
}

impl Output {
    pub fn create(config: RunConfig) -> Result<Self, CliError> {
        let dir = config.out_dir.clone();
        std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        Ok(Self {
            dir,
            config,
            written: Vec::new(),
        })
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    fn open(&mut self, name: &str) -> Result<(PathBuf, BufWriter<File>), CliError> {
        let path = self.dir.join(name);
        let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
        self.written.push(path.clone());
        Ok((path, BufWriter::new(file)))
    }

    fn header_lines(&self) -> Vec<String> {
        vec![
            format!("run_config: {}", self.config.to_json()),
            format!("version: {VERSION}"),
        ]
    }

    /// A JSON object holding the payload's fields next to `version` and
    /// `run_config`. The payload must serialize to an object.
    pub fn json<T: Serialize>(&mut self, name: &str, payload: &T) -> Result<PathBuf, CliError> {
        let (path, mut w) = self.open(name)?;
        let doc = Stamped {
            version: VERSION,
            run_config: &self.config,
            payload,
        };
        serde_json::to_writer_pretty(&mut w, &doc).map_err(rac_intensity::Error::from)?;
        writeln!(w).map_err(|e| CliError::io(&path, e))?;
        w.flush().map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }

    /// A CSV file preceded by `#` comment lines with the provenance.
    pub fn csv(
        &mut self,
        name: &str,
        body: impl FnOnce(&mut dyn Write) -> rac_intensity::Result<()>,
    ) -> Result<PathBuf, CliError> {
        let lines = self.header_lines();
        let (path, mut w) = self.open(name)?;
        for l in lines {
            writeln!(w, "# {l}").map_err(|e| CliError::io(&path, e))?;
        }
        body(&mut w)?;
        w.flush().map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }

    pub fn grid_csv(&mut self, name: &str, values: &Grid<f64>) -> Result<PathBuf, CliError> {
        self.csv(name, |w| write_grid_csv(w, values))
    }

    pub fn pgm(&mut self, name: &str, values: &Grid<f64>) -> Result<PathBuf, CliError> {
        let lines = self.header_lines();
        let (path, mut w) = self.open(name)?;
        write_pgm(&mut w, values, &lines)?;
        w.flush().map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}

/// Absolute form of a path without touching the file system.
pub fn absolute(path: &Path) -> Result<PathBuf, CliError> {
    std::path::absolute(path).map_err(|e| CliError::io(path, e))
}

/// Absolute path of an input file that must exist.
pub fn existing(path: &Path) -> Result<PathBuf, CliError> {
    if !path.is_file() {
        return Err(CliError::Data(format!("input file {} does not exist", path.display())));
    }
    absolute(path)
}
