use std::fmt::{self, Display, Write as _};
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::Result;

pub const META_FILE: &str = "run.meta";

/// `run.meta`: resolved configuration as `key = value` lines, then one
/// `sha256 <file> <digest>` line per artifact.
#[derive(Clone, Debug, Default)]
pub struct RunMeta {
    entries: Vec<(String, String)>,
    artifacts: Vec<PathBuf>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl RunMeta {
    pub fn new(command: &str) -> Self {
        let mut m = Self::default();
        m.set("command", command);
        m.set("version", env!("CARGO_PKG_VERSION"));
        m
    }

    pub fn set(&mut self, key: &str, value: impl Display) -> &mut Self {
        self.entries.push((key.to_string(), value.to_string()));
        self
    }

    pub fn artifact(&mut self, path: impl Into<PathBuf>) -> &mut Self {
        self.artifacts.push(path.into());
        self
    }

    pub fn render(&self) -> Result<String> {
        let mut out = String::new();
        for (k, v) in &self.entries {
            writeln!(out, "{k} = {v}").expect("write to String");
        }
        for p in &self.artifacts {
            let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            writeln!(out, "sha256 {name} {}", sha256_file(p)?).expect("write to String");
        }
        Ok(out)
    }

    /// Writes `run.meta` into `dir` and returns its path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(META_FILE);
        fs::write(&path, self.render()?)?;
        Ok(path)
    }
}

impl fmt::Display for RunMeta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

/// Reads `key = value` pairs back from a `run.meta` text.
pub fn parse_meta(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter_map(|l| l.split_once(" = "))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}
