use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;

/// Written last into the output directory; its presence marks a finished run.
#[derive(Serialize)]
pub struct RunManifest {
    pub subcommand: &'static str,
    pub version: &'static str,
    pub seed: u64,
    pub config: Value,
    pub outputs: Vec<PathBuf>,
    pub results: Value,
    pub duration_secs: f64,
}

pub struct Recorder {
    dir: PathBuf,
    subcommand: &'static str,
    seed: u64,
    started: Instant,
    outputs: Vec<PathBuf>,
}

impl Recorder {
    pub fn new(dir: &Path, subcommand: &'static str, seed: u64) -> hhepi::Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| hhepi::Error::io(dir, e))?;
        Ok(Self { dir: dir.to_path_buf(), subcommand, seed, started: Instant::now(), outputs: Vec::new() })
    }

    /// Path for a new output file, recorded in the manifest.
    pub fn file(&mut self, name: &str) -> PathBuf {
        self.outputs.push(PathBuf::from(name));
        self.dir.join(name)
    }

    pub fn finish(self, config: Value, results: Value) -> hhepi::Result<()> {
        let manifest = RunManifest {
            subcommand: self.subcommand,
            version: env!("CARGO_PKG_VERSION"),
            seed: self.seed,
            config,
            outputs: self.outputs,
            results,
            duration_secs: self.started.elapsed().as_secs_f64(),
        };
        let path = self.dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        std::fs::write(&path, text + "\n").map_err(|e| hhepi::Error::io(path, e))
    }
}
