use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::CliError;

/// Output directory plus the list of files written into it.
pub struct Artifacts {
    dir: PathBuf,
    files: Vec<String>,
}

/// Shortest round-trip rendering, so re-reading a CSV recovers the bits.
pub(crate) fn num(x: f64) -> String {
    format!("{x:?}")
}

impl Artifacts {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    fn track(&mut self, name: &str) -> PathBuf {
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        self.dir.join(name)
    }

    pub fn csv<I, R>(&mut self, name: &str, header: &[&str], rows: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator<Item = String>,
    {
        let mut w = csv::Writer::from_path(self.track(name))?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let f = BufWriter::new(fs::File::create(self.track(name))?);
        serde_json::to_writer_pretty(f, value).map_err(|e| CliError::Failed(e.to_string()))
    }

    pub fn text(&mut self, name: &str, body: &str) -> Result<(), CliError> {
        fs::write(self.track(name), body)?;
        Ok(())
    }

    /// Streams through a writer callback, for core types that export
    /// themselves.
    pub fn with_writer(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
    ) -> Result<(), CliError> {
        let mut w = BufWriter::new(fs::File::create(self.track(name))?);
        f(&mut w)?;
        w.flush()?;
        Ok(())
    }
}
