pub mod baseline;
pub mod diagnose;
pub mod eval;
pub mod fit;
pub mod simulate;
pub mod study;

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::CliResult;
use crate::io;

/// Output directory that remembers every file written for the manifest.
pub struct OutDir {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl OutDir {
    pub fn create(dir: &Path) -> CliResult<Self> {
        io::ensure_dir(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn track(&mut self, name: &str) -> PathBuf {
        let path = self.dir.join(name);
        self.written.push(path.clone());
        path
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let p = self.track(name);
        io::write_json(&p, value)
    }

    pub fn text(&mut self, name: &str, contents: &str) -> CliResult<()> {
        let p = self.track(name);
        io::write_string(&p, contents)
    }

    pub fn csv(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> CliResult<()> {
        let p = self.track(name);
        io::write_csv(&p, header, rows)
    }

    pub fn panel(&mut self, name: &str, panel: &inarmix::PanelData) -> CliResult<()> {
        let p = self.track(name);
        io::write_panel(&p, panel)
    }

    pub fn labels(&mut self, name: &str, ids: &[String], labels: &[usize]) -> CliResult<()> {
        let p = self.track(name);
        io::write_labels(&p, ids, labels)
    }

    pub fn finish(self, command: &str, seed: Option<u64>) -> CliResult<()> {
        io::write_manifest(&self.dir, command, seed, &self.written)
    }
}

/// Cluster numbers shown to users start at 1.
pub fn one_based(labels: &[usize]) -> Vec<usize> {
    labels.iter().map(|l| l + 1).collect()
}

pub fn membership_header(prefix: &str, g: usize) -> Vec<String> {
    std::iter::once("id".to_string())
        .chain((1..=g).map(|k| format!("{prefix}{k}")))
        .chain(std::iter::once("label".to_string()))
        .collect()
}
