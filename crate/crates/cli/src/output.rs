//! Report, CSV and manifest writing.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::Failure;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Timing {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub command: String,
    pub parameters: serde_json::Value,
    pub inputs: Vec<InputDigest>,
    pub tool_version: String,
    pub threads: usize,
    pub timings: Vec<Timing>,
    pub outputs: Vec<String>,
}

#[derive(Serialize)]
struct Envelope<'a, T> {
    schema_version: u32,
    command: &'a str,
    #[serde(flatten)]
    body: &'a T,
}

fn sha256(path: &Path) -> Result<String, Failure> {
    let bytes = fs::read(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Bookkeeping for one command invocation.
pub struct Session {
    command: String,
    out_dir: PathBuf,
    csv: bool,
    parameters: serde_json::Value,
    inputs: Vec<(PathBuf, String)>,
    outputs: Vec<PathBuf>,
    timings: Vec<Timing>,
    stage_start: Instant,
    start: Instant,
    threads: usize,
}

impl Session {
    pub fn new(command: &str, out_dir: &Path, csv: bool, parameters: serde_json::Value, threads: usize) -> Self {
        let now = Instant::now();
        Self {
            command: command.to_string(),
            out_dir: out_dir.to_path_buf(),
            csv,
            parameters,
            inputs: Vec::new(),
            outputs: Vec::new(),
            timings: Vec::new(),
            stage_start: now,
            start: now,
            threads,
        }
    }

    /// Registers an input file; fails as a usage error if it cannot be read.
    pub fn input(&mut self, path: &Path) -> Result<(), Failure> {
        let digest = sha256(path)?;
        self.inputs.push((path.to_path_buf(), digest));
        Ok(())
    }

    /// Records a resolved parameter next to the command-line arguments.
    pub fn resolve(&mut self, key: &str, value: impl Serialize) -> Result<(), Failure> {
        let v = serde_json::to_value(value).map_err(|e| Failure::Domain(e.to_string()))?;
        if let serde_json::Value::Object(map) = &mut self.parameters {
            map.insert(key.to_string(), v);
        }
        Ok(())
    }

    /// Closes the current timing stage.
    pub fn stage(&mut self, name: &str) {
        let now = Instant::now();
        self.timings.push(Timing {
            stage: name.to_string(),
            seconds: (now - self.stage_start).as_secs_f64(),
        });
        self.stage_start = now;
    }

    pub fn csv_enabled(&self) -> bool {
        self.csv
    }

    pub fn path(&self, suffix: &str) -> PathBuf {
        self.out_dir.join(format!("{}{suffix}", self.command))
    }

    pub fn prepare(&self) -> Result<(), Failure> {
        fs::create_dir_all(&self.out_dir)
            .map_err(|e| Failure::Domain(format!("cannot create {}: {e}", self.out_dir.display())))
    }

    /// Registers a file written by the command itself.
    pub fn output(&mut self, path: PathBuf) {
        if !self.outputs.contains(&path) {
            self.outputs.push(path);
        }
    }

    pub fn write_text(&mut self, path: PathBuf, text: &str) -> Result<(), Failure> {
        self.prepare()?;
        fs::write(&path, text).map_err(|e| Failure::Domain(format!("cannot write {}: {e}", path.display())))?;
        self.output(path);
        Ok(())
    }

    /// One JSON object on one line, with `schema_version` and `command`.
    pub fn report<T: Serialize>(&mut self, body: &T) -> Result<(), Failure> {
        let env = Envelope {
            schema_version: SCHEMA_VERSION,
            command: &self.command,
            body,
        };
        let text = serde_json::to_string(&env).map_err(|e| Failure::Domain(e.to_string()))?;
        self.write_text(self.path(".json"), &(text + "\n"))
    }

    /// Writes `<command>.csv` when `--csv` was given.
    pub fn csv<R: Serialize>(&mut self, rows: &[R]) -> Result<(), Failure> {
        if !self.csv {
            return Ok(());
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r).map_err(|e| Failure::Domain(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Failure::Domain(e.to_string()))?;
        self.write_text(self.path(".csv"), &String::from_utf8_lossy(&bytes))
    }

    /// Writes `<command>.csv` from preformatted text when `--csv` was given.
    pub fn csv_text(&mut self, text: &str) -> Result<(), Failure> {
        if self.csv {
            self.write_text(self.path(".csv"), text)?;
        }
        Ok(())
    }

    /// Writes the manifest after checking that no input changed during the run.
    pub fn finish(mut self) -> Result<PathBuf, Failure> {
        self.stage("write");
        let mut inputs = Vec::with_capacity(self.inputs.len());
        for (path, digest) in &self.inputs {
            if sha256(path)? != *digest {
                return Err(Failure::Domain(format!("input {} changed during the run", path.display())));
            }
            inputs.push(InputDigest {
                path: path.display().to_string(),
                sha256: digest.clone(),
            });
        }
        let manifest_path = self.path(".manifest.json");
        self.output(manifest_path.clone());
        self.timings.push(Timing {
            stage: "total".into(),
            seconds: self.start.elapsed().as_secs_f64(),
        });
        let manifest = RunManifest {
            schema_version: SCHEMA_VERSION,
            command: self.command.clone(),
            parameters: self.parameters.clone(),
            inputs,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            threads: self.threads,
            timings: self.timings.clone(),
            outputs: self.outputs.iter().map(|p| p.display().to_string()).collect(),
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| Failure::Domain(e.to_string()))?;
        self.prepare()?;
        fs::write(&manifest_path, text + "\n")
            .map_err(|e| Failure::Domain(format!("cannot write {}: {e}", manifest_path.display())))?;
        Ok(manifest_path)
    }
}
