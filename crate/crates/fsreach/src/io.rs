//! JSON input, artifact output and manifests.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{AppError, AppResult};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Parses `path`, reporting schema errors with the JSON pointer of the
/// offending field.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> AppResult<T> {
    let text = fs::read_to_string(path).map_err(|source| AppError::Input { path: path.to_path_buf(), source })?;
    parse_json(&text).map_err(|message| AppError::Parse { path: path.to_path_buf(), message })
}

pub fn parse_json<T: DeserializeOwned>(text: &str) -> Result<T, String> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let at = e.path().to_string();
        if at == "." {
            e.inner().to_string()
        } else {
            format!("at {at}: {}", e.inner())
        }
    })
}

pub fn to_json<T: Serialize + ?Sized>(value: &T) -> AppResult<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// CSV cell for a float: shortest round-trip representation.
pub fn num(v: f64) -> String {
    format!("{v}")
}

#[derive(Debug, Clone, Serialize)]
struct ArtifactEntry {
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    input: String,
    config_sha256: &'a str,
    seed: Option<u64>,
    artifacts: &'a [ArtifactEntry],
    /// Wall-clock measurements; excluded from byte reproducibility.
    timing_artifacts: &'a [String],
}

/// Output directory that records every file written into it.
#[derive(Debug)]
pub struct OutputDir {
    dir: PathBuf,
    artifacts: Vec<ArtifactEntry>,
    timing: Vec<String>,
}

impl OutputDir {
    pub fn create(dir: &Path) -> AppResult<Self> {
        fs::create_dir_all(dir).map_err(|source| AppError::Output { path: dir.to_path_buf(), source })?;
        Ok(OutputDir { dir: dir.to_path_buf(), artifacts: Vec::new(), timing: Vec::new() })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    fn put(&self, name: &str, bytes: &[u8]) -> AppResult<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|source| AppError::Output { path, source })
    }

    /// Writes a reproducible artifact.
    pub fn write(&mut self, name: &str, contents: &str) -> AppResult<()> {
        self.put(name, contents.as_bytes())?;
        self.artifacts.push(ArtifactEntry { path: name.to_string(), sha256: sha256_hex(contents.as_bytes()) });
        Ok(())
    }

    pub fn write_json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> AppResult<()> {
        self.write(name, &to_json(value)?)
    }

    /// Writes wall-clock measurements, which differ between runs.
    pub fn write_timing(&mut self, name: &str, contents: &str) -> AppResult<()> {
        self.put(name, contents.as_bytes())?;
        self.timing.push(name.to_string());
        Ok(())
    }

    /// Writes `manifest.json` listing every artifact with its hash.
    pub fn finish(self, command: &str, input: &Path, config_sha256: &str, seed: Option<u64>) -> AppResult<PathBuf> {
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            input: input.file_name().map_or_else(|| input.display().to_string(), |n| n.to_string_lossy().into_owned()),
            config_sha256,
            seed,
            artifacts: &self.artifacts,
            timing_artifacts: &self.timing,
        };
        let path = self.dir.join("manifest.json");
        let text = to_json(&manifest)?;
        fs::write(&path, text).map_err(|source| AppError::Output { path: path.clone(), source })?;
        Ok(path)
    }
}

/// Builds CSV text from a header and rows of already formatted cells.
pub fn csv(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}
