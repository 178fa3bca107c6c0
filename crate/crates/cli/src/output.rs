//! Run manifest, exit codes and output files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::args::Command;
use crate::sweep::Sweep;

pub const EXIT_PARSE: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;
pub const EXIT_RESOURCE: u8 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn parse(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_PARSE,
            message: message.into(),
        }
    }

    pub fn resource(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_RESOURCE,
            message: message.into(),
        }
    }
}

impl From<coopharq::Error> for CliError {
    fn from(e: coopharq::Error) -> Self {
        use coopharq::Error::*;
        let code = match e {
            InvalidArgument(_) | Domain(_) | Config(_) => EXIT_PARSE,
            Numeric(_) | Range(_) => EXIT_NUMERIC,
            Resource(_) => EXIT_RESOURCE,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Everything that determines the data files of a run.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub version: &'static str,
    pub command: Command,
    /// Path as given; not part of the hash.
    pub config_path: Option<String>,
    /// Resolved configuration in canonical form.
    pub config: String,
    pub sweep: Sweep,
    pub seed: u64,
    pub workers: usize,
    pub trials: u64,
    pub degree: Option<usize>,
    pub epsilon: Option<f64>,
    pub theta: f64,
    pub rate_range: (f64, f64),
    pub outputs: Vec<String>,
}

impl RunManifest {
    /// SHA-256 of the manifest without the configuration path.
    pub fn hash(&self) -> String {
        let mut m = self.clone();
        m.config_path = None;
        let bytes = serde_json::to_vec(&m).expect("manifest serializes");
        format!("{:x}", Sha256::digest(bytes))
    }
}

/// 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes the output files of one run into a directory.
pub struct Sink {
    dir: PathBuf,
    hash: String,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    manifest_sha256: &'a str,
    version: &'static str,
    data: &'a T,
}

impl Sink {
    pub fn create(dir: &Path, manifest: &RunManifest) -> CliResult<Sink> {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::resource(format!("cannot create {}: {e}", dir.display())))?;
        let sink = Sink {
            dir: dir.to_path_buf(),
            hash: manifest.hash(),
        };
        sink.json("manifest.json", manifest)?;
        Ok(sink)
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    fn write(&self, name: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes)
            .map_err(|e| CliError::resource(format!("cannot write {}: {e}", path.display())))
    }

    /// CSV with `header` plus trailing manifest hash and version columns.
    pub fn csv(&self, name: &str, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| CliError::resource(format!("{name}: {e}"));
        let mut head: Vec<&str> = header.to_vec();
        head.extend(["manifest_sha256", "version"]);
        w.write_record(&head).map_err(io)?;
        for row in rows {
            debug_assert_eq!(row.len(), header.len());
            let mut rec = row.clone();
            rec.push(self.hash.clone());
            rec.push(coopharq::VERSION.to_string());
            w.write_record(&rec).map_err(io)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| CliError::resource(format!("{name}: {e}")))?;
        self.write(name, &bytes)
    }

    /// JSON document wrapping `data` with the manifest hash and version.
    pub fn json<T: Serialize>(&self, name: &str, data: &T) -> CliResult<()> {
        let env = Envelope {
            manifest_sha256: &self.hash,
            version: coopharq::VERSION,
            data,
        };
        let mut bytes = serde_json::to_vec_pretty(&env)
            .map_err(|e| CliError::resource(format!("{name}: {e}")))?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }
}
