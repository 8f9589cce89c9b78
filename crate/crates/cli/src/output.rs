//! Output files. Every file starts with a provenance line, or carries the
//! same fields in its JSON body.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use serde_json::{json, Value};

use crate::config::{RunConfig, SCHEMA_VERSION};
use crate::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// 17 significant digits.
pub fn fmt(x: f64) -> String {
    // no negative zero
    let x = x + 0.0;
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}").to_lowercase()
    }
}

pub struct Output {
    dir: PathBuf,
    subcommand: &'static str,
    hash: String,
    seeds: Value,
    config: RunConfig,
}

impl Output {
    pub fn new(cfg: &RunConfig, subcommand: &'static str, seeds: Value) -> Result<Self, CliError> {
        let dir = cfg.out_dir();
        std::fs::create_dir_all(&dir).map_err(|e| CliError::config(format!("cannot create {}: {e}", dir.display())))?;
        let mut config = cfg.clone();
        config.out_dir = None;
        Ok(Self { dir, subcommand, hash: cfg.hash(), seeds, config })
    }

    pub fn path(&self, name: &str) -> String {
        self.dir.join(name).display().to_string()
    }

    fn provenance(&self) -> String {
        format!(
            "# dsyk {VERSION} {} schema_version={SCHEMA_VERSION} config_sha256={} seeds={}",
            self.subcommand, self.hash, self.seeds
        )
    }

    /// A file opened with the provenance line already written.
    pub fn comment_file(&self, name: &str) -> Result<BufWriter<File>, CliError> {
        let mut f = BufWriter::new(File::create(self.dir.join(name))?);
        writeln!(f, "{}", self.provenance())?;
        Ok(f)
    }

    pub fn csv_writer(&self, name: &str) -> Result<csv::Writer<BufWriter<File>>, CliError> {
        Ok(csv::Writer::from_writer(self.comment_file(name)?))
    }

    /// Writes the JSON sidecar and returns its path.
    pub fn sidecar(&self, name: &str, result: Value) -> Result<String, CliError> {
        let doc = json!({
            "tool": "dsyk",
            "version": VERSION,
            "schema_version": SCHEMA_VERSION,
            "subcommand": self.subcommand,
            "config_sha256": self.hash,
            "seeds": self.seeds,
            "config": self.config,
            "result": result,
        });
        let mut f = BufWriter::new(File::create(self.dir.join(name))?);
        serde_json::to_writer_pretty(&mut f, &doc).map_err(|e| CliError::config(format!("json: {e}")))?;
        writeln!(f)?;
        f.flush()?;
        Ok(self.path(name))
    }
}
