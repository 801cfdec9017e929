//! Output directories. Files are written into a staging directory next to
//! the target and moved into place only once the whole run has succeeded,
//! so a failed run never leaves partial results behind.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Serialize;
use tempfile::TempDir;

use crate::CliError;

pub struct Staging {
    dir: TempDir,
    target: PathBuf,
    files: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: &'static str,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub outputs: Vec<String>,
    pub duration_secs: f64,
}

impl Staging {
    pub fn new(target: &Path) -> Result<Self, CliError> {
        let parent = match target.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&parent).map_err(|e| CliError::io(&parent, e))?;
        let dir = tempfile::Builder::new()
            .prefix(".stablesim-staging-")
            .tempdir_in(&parent)
            .map_err(|e| CliError::io(&parent, e))?;
        Ok(Staging {
            dir,
            target: target.to_path_buf(),
            files: Vec::new(),
        })
    }

    /// Creates `name` (which may contain one subdirectory level) in staging.
    pub fn create(&mut self, name: &str) -> Result<fs::File, CliError> {
        let path = self.dir.path().join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        let file = fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
        self.files.push(name.to_string());
        Ok(file)
    }

    pub fn write<F>(&mut self, name: &str, fill: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut dyn Write) -> Result<(), CliError>,
    {
        let mut file = std::io::BufWriter::new(self.create(name)?);
        fill(&mut file)?;
        file.flush().map_err(|e| CliError::io(Path::new(name), e))?;
        Ok(())
    }

    /// Writes the manifest and moves every staged file into the target.
    pub fn commit(
        mut self,
        command: &str,
        seed: Option<u64>,
        config: serde_json::Value,
        elapsed: Duration,
    ) -> Result<Vec<String>, CliError> {
        let mut outputs = self.files.clone();
        outputs.push("manifest.json".into());
        let manifest = RunManifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION"),
            seed,
            config,
            outputs: outputs.clone(),
            duration_secs: elapsed.as_secs_f64(),
        };
        self.write("manifest.json", |w| {
            serde_json::to_writer_pretty(&mut *w, &manifest).map_err(|e| CliError::Runtime(e.to_string()))?;
            writeln!(w).map_err(|e| CliError::Runtime(e.to_string()))
        })?;

        fs::create_dir_all(&self.target).map_err(|e| CliError::io(&self.target, e))?;
        // Manifest last, so its presence marks a complete directory.
        let mut order = self.files.clone();
        order.sort_by_key(|f| f == "manifest.json");
        for name in order {
            let from = self.dir.path().join(&name);
            let to = self.target.join(&name);
            if let Some(parent) = to.parent() {
                fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
            }
            fs::rename(&from, &to).map_err(|e| CliError::io(&to, e))?;
        }
        Ok(outputs)
    }
}
