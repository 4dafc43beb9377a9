//! Run manifests: enough to replay a command and get the same bytes.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use anyhow::Result;
use serde::Serialize;
use serde_json::Value;

use crate::common::write_json;

pub struct RunContext {
    argv: Vec<String>,
    threads: Option<usize>,
    started: Instant,
}

impl RunContext {
    pub fn start(argv: Vec<String>, threads: Option<usize>) -> Self {
        Self { argv, threads, started: Instant::now() }
    }

    pub fn manifest(&self, command: &str) -> Manifest {
        Manifest {
            tool: env!("CARGO_BIN_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_owned(),
            argv: self.argv.clone(),
            cwd: std::env::current_dir().map(|p| p.display().to_string()).unwrap_or_default(),
            threads: self.threads,
            seeds: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            config: Value::Null,
            timings: Value::Null,
            wall_time_s: 0.0,
            started: Some(self.started),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
}

impl FileEntry {
    fn of(path: &Path) -> Self {
        let bytes = std::fs::metadata(path).map(|m| m.len()).unwrap_or(0);
        Self { path: path.display().to_string(), bytes }
    }
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub argv: Vec<String>,
    pub cwd: String,
    pub threads: Option<usize>,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<FileEntry>,
    pub outputs: Vec<FileEntry>,
    /// Fully resolved parameters, defaults included.
    pub config: Value,
    #[serde(skip_serializing_if = "Value::is_null")]
    pub timings: Value,
    pub wall_time_s: f64,
    #[serde(skip)]
    started: Option<Instant>,
}

impl Manifest {
    pub fn seed(&mut self, name: &str, seed: u64) -> &mut Self {
        self.seeds.insert(name.to_owned(), seed);
        self
    }

    pub fn input(&mut self, path: &Path) -> &mut Self {
        self.inputs.push(FileEntry::of(path));
        self
    }

    pub fn output(&mut self, path: &Path) -> &mut Self {
        self.outputs.push(FileEntry::of(path));
        self
    }

    pub fn config(&mut self, config: impl Serialize) -> Result<&mut Self> {
        self.config = serde_json::to_value(config)?;
        Ok(self)
    }

    pub fn write(&mut self, path: &Path) -> Result<()> {
        if let Some(t) = self.started {
            self.wall_time_s = t.elapsed().as_secs_f64();
        }
        write_json(path, self)
    }
}
