use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::experiments::config::ExperimentConfig;

/// Everything needed to regenerate a run's outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: String,
    pub version: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub topology_hashes: BTreeMap<String, String>,
    pub files: Vec<String>,
}

/// Collects the files written by one run.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    files: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root)?;
        Ok(OutputDir {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn file(&mut self, name: &str) -> Result<BufWriter<File>> {
        self.files.push(name.to_string());
        Ok(BufWriter::new(File::create(self.root.join(name))?))
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        std::fs::write(self.root.join(name), text)?;
        self.files.push(name.to_string());
        Ok(())
    }

    /// Writes `manifest.json` and returns every path produced.
    pub fn finish(
        mut self,
        cfg: &ExperimentConfig,
        topology_hashes: BTreeMap<String, String>,
    ) -> Result<Vec<PathBuf>> {
        let manifest = Manifest {
            experiment: cfg.experiment.name().to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: cfg.seed,
            config: cfg.clone(),
            topology_hashes,
            files: self.files.clone(),
        };
        self.write_json("manifest.json", &manifest)?;
        Ok(self.files.iter().map(|f| self.root.join(f)).collect())
    }
}

/// Empty cell for missing values.
pub(crate) fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}
