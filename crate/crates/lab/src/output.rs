//! Output directory writer: CSV tables, JSON summaries, JSON-lines streams and
//! the run manifest.
//!
//! Every file is rendered in memory and written once, so the content depends
//! only on the data. Floats use Rust's shortest round-trip formatting.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{LabError, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// A float cell; non-finite values are spelled `inf`, `-inf` and `nan`.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// Header plus rows, comma separated, one trailing newline per row.
pub struct Csv {
    writer: csv::Writer<Vec<u8>>,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(header).expect("in-memory write");
        Self { writer }
    }

    pub fn row<S: AsRef<str>>(&mut self, cells: impl IntoIterator<Item = S>) {
        let cells: Vec<S> = cells.into_iter().collect();
        self.writer
            .write_record(cells.iter().map(|c| c.as_ref().as_bytes()))
            .expect("in-memory write");
    }

    pub fn into_string(self) -> String {
        let bytes = self.writer.into_inner().expect("in-memory flush");
        String::from_utf8(bytes).expect("cells are UTF-8")
    }
}

#[derive(Debug, Serialize)]
struct OutputEntry {
    file: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    subcommand: &'a str,
    config_file: &'static str,
    config_sha256: String,
    seeds: &'a [u64],
    overrides: &'a [String],
    outputs: Vec<OutputEntry>,
}

/// Collects files for one output directory and writes them with a manifest.
pub struct OutputDir {
    root: PathBuf,
    files: Vec<(String, Vec<u8>)>,
}

impl OutputDir {
    pub fn new(root: &Path) -> Self {
        Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, content: impl Into<Vec<u8>>) {
        self.files.push((name.into(), content.into()));
    }

    pub fn add_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| LabError::Config(e.to_string()))?;
        text.push('\n');
        self.add(name, text);
        Ok(())
    }

    pub fn add_jsonl<T: Serialize>(&mut self, name: &str, records: &[T]) -> Result<()> {
        let mut text = String::new();
        for r in records {
            text.push_str(&serde_json::to_string(r).map_err(|e| LabError::Config(e.to_string()))?);
            text.push('\n');
        }
        self.add(name, text);
        Ok(())
    }

    /// Writes the data files, the echoed config and `manifest.json`.
    pub fn finish(mut self, subcommand: &str, config_toml: &str, seeds: &[u64], overrides: &[String]) -> Result<()> {
        fs::create_dir_all(&self.root).map_err(LabError::io(&self.root))?;
        self.add("config.toml", config_toml);
        let outputs = self
            .files
            .iter()
            .map(|(name, bytes)| OutputEntry {
                file: name.clone(),
                sha256: sha256_hex(bytes),
            })
            .collect();
        let manifest = Manifest {
            tool: "lilsde",
            version: env!("CARGO_PKG_VERSION"),
            subcommand,
            config_file: "config.toml",
            config_sha256: sha256_hex(config_toml.as_bytes()),
            seeds,
            overrides,
            outputs,
        };
        self.add_json("manifest.json", &manifest)?;
        for (name, bytes) in &self.files {
            let path = self.root.join(name);
            fs::write(&path, bytes).map_err(LabError::io(&path))?;
        }
        Ok(())
    }
}
