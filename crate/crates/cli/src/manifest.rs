//! Output directory handling and the `run.json` provenance record.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::failure::Failure;

pub const MANIFEST: &str = "run.json";

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    seed: Option<u64>,
    config: &'a serde_json::Value,
    inputs: &'a [InputDigest],
    outputs: &'a [String],
    created_at: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// One command invocation writing into `out`.
pub struct Run {
    out: PathBuf,
    inputs: Vec<InputDigest>,
    outputs: Vec<String>,
}

impl Run {
    pub fn new(out: &Path) -> Result<Self, Failure> {
        fs::create_dir_all(out).map_err(|e| Failure::usage(format!("cannot create {}: {e}", out.display())))?;
        Ok(Run {
            out: out.to_path_buf(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    /// Records the digest of an input file.
    pub fn input(&mut self, path: &Path) -> Result<(), Failure> {
        let bytes = fs::read(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
        self.inputs.push(InputDigest {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// Creates `name` in the output directory and hands a buffered writer to `f`.
    pub fn write<F>(&mut self, name: &str, f: F) -> Result<(), Failure>
    where
        F: FnOnce(&mut BufWriter<File>) -> segclf_core::Result<()>,
    {
        let path = self.path(name);
        let file = File::create(&path).map_err(|e| Failure::compute(format!("{}: {e}", path.display())))?;
        let mut w = BufWriter::new(file);
        f(&mut w)?;
        w.flush().map_err(|e| Failure::compute(format!("{}: {e}", path.display())))?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), Failure> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::compute(e))?;
        text.push('\n');
        self.write(name, |w| {
            w.write_all(text.as_bytes())
                .map_err(|e| segclf_core::Error::Computation(e.to_string()))
        })
    }

    /// Registers a file that was written directly to [`Run::path`].
    pub fn record(&mut self, name: &str) {
        self.outputs.push(name.to_string());
    }

    pub fn finish(self, command: &str, config: serde_json::Value, seed: Option<u64>) -> Result<(), Failure> {
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed,
            config: &config,
            inputs: &self.inputs,
            outputs: &self.outputs,
            created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| Failure::compute(e))? + "\n";
        let path = self.out.join(MANIFEST);
        fs::write(&path, text).map_err(|e| Failure::compute(format!("{}: {e}", path.display())))?;
        for name in &self.outputs {
            eprintln!("wrote {}", self.out.join(name).display());
        }
        Ok(())
    }
}
