//! Run manifests: every subcommand writes one, recording the command
//! line, the effective configuration, seeds, input/output digests, and
//! timing. Re-running a deterministic stage with the manifest's settings
//! reproduces its primary outputs byte for byte.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};

pub struct RunManifest {
    started: Instant,
    lines: Vec<(String, String)>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn begin() -> Self {
        let cmdline: Vec<String> = std::env::args().collect();
        let mut m = RunManifest {
            started: Instant::now(),
            lines: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        };
        m.set("command", cmdline.join(" "));
        m.set("version", env!("CARGO_PKG_VERSION"));
        m
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.lines.push((key.to_string(), value.to_string()));
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    pub fn write(mut self, path: &Path) -> Result<()> {
        let elapsed = self.started.elapsed().as_secs_f64();
        self.set("duration_secs", format!("{elapsed:.3}"));
        let mut text = String::from("# run manifest\n");
        for (k, v) in &self.lines {
            writeln!(text, "{k} = {v}").unwrap();
        }
        for p in &self.inputs {
            writeln!(text, "input.{} = {}", p.display(), digest(p)?).unwrap();
        }
        for p in &self.outputs {
            writeln!(text, "output.{} = {}", p.display(), digest(p)?).unwrap();
        }
        std::fs::write(path, text).with_context(|| format!("cannot write manifest {}", path.display()))
    }
}

pub fn digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}
