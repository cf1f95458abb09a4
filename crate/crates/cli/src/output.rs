//! Output directory writer and run manifest.

use std::path::{Path, PathBuf};

use dgsp::{DMatrix, DVector, ShiftOperator};
use serde::Serialize;

use crate::config::{CliError, InModule};

/// Shortest round-trip formatting, so reruns give identical bytes.
pub fn fmt(v: f64) -> String {
    format!("{v:?}")
}

pub struct Output {
    dir: PathBuf,
    files: Vec<String>,
}

impl Output {
    pub fn new(dir: PathBuf) -> Self {
        Output {
            dir,
            files: Vec::new(),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    fn path(&mut self, name: &str) -> Result<PathBuf, CliError> {
        std::fs::create_dir_all(&self.dir)
            .map_err(|e| CliError::Output(format!("cannot create {}: {e}", self.dir.display())))?;
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        Ok(self.dir.join(name))
    }

    pub fn csv(
        &mut self,
        name: &str,
        header: &[&str],
        rows: &[Vec<String>],
    ) -> Result<(), CliError> {
        let path = self.path(name)?;
        let err = |e: csv::Error| CliError::Output(format!("{}: {e}", path.display()));
        let mut w = csv::Writer::from_path(&path).map_err(err)?;
        w.write_record(header).map_err(err)?;
        for r in rows {
            w.write_record(r).map_err(err)?;
        }
        w.flush()
            .map_err(|e| CliError::Output(format!("{}: {e}", path.display())))
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let path = self.path(name)?;
        dgsp::io::save_json(&path, value).in_module("io")
    }

    pub fn shift(&mut self, name: &str, s: &ShiftOperator) -> Result<(), CliError> {
        let path = self.path(name)?;
        dgsp::io::save_shift(&path, s).in_module("io")
    }

    pub fn signal(&mut self, name: &str, x: &DVector<f64>) -> Result<(), CliError> {
        let path = self.path(name)?;
        dgsp::io::save_signal(&path, x).in_module("io")
    }

    pub fn matrix(&mut self, name: &str, m: &DMatrix<f64>) -> Result<(), CliError> {
        let path = self.path(name)?;
        dgsp::io::save_dense_csv(&path, m).in_module("io")
    }

    /// Hands out a path for writers that take one; the file is listed.
    pub fn reserve(&mut self, name: &str) -> Result<PathBuf, CliError> {
        self.path(name)
    }
}

#[derive(Serialize)]
pub struct Manifest<'a> {
    pub command: &'a str,
    pub version: &'a str,
    pub status: &'a str,
    pub exit_code: i32,
    pub error: Option<String>,
    pub seed: Option<u64>,
    pub threads: usize,
    pub wall_time_seconds: f64,
    pub config: serde_json::Value,
    pub outputs: Vec<String>,
}

pub const MANIFEST: &str = "manifest.json";
