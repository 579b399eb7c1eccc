//! Output directory handling: refuse to clobber, clean up after failures.

use std::fs;
use std::path::{Path, PathBuf};

use net2rdm_core::io::{to_sorted_json, write_npy};
use serde::Serialize;

use crate::error::{CliError, CliResult};

pub struct OutputDir {
    root: PathBuf,
    created_root: bool,
    written: Vec<PathBuf>,
    committed: bool,
}

impl OutputDir {
    pub fn prepare(root: &Path, force: bool) -> CliResult<Self> {
        let mut created_root = false;
        if root.exists() {
            if !root.is_dir() {
                return Err(CliError::new("E_EXISTS", format!("{} exists and is not a directory", root.display())));
            }
            let non_empty = fs::read_dir(root)
                .map_err(|e| CliError::new("E_IO", format!("{}: {e}", root.display())))?
                .next()
                .is_some();
            if non_empty && !force {
                return Err(CliError::new(
                    "E_EXISTS",
                    format!("{} is not empty (use --force to overwrite)", root.display()),
                ));
            }
        } else {
            fs::create_dir_all(root).map_err(|e| CliError::new("E_IO", format!("{}: {e}", root.display())))?;
            created_root = true;
        }
        Ok(OutputDir { root: root.to_path_buf(), created_root, written: Vec::new(), committed: false })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn track(&mut self, name: &str) -> PathBuf {
        let path = self.path(name);
        self.written.push(path.clone());
        path
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> CliResult<()> {
        let path = self.track(name);
        fs::write(&path, text).map_err(|e| CliError::new("E_IO", format!("{}: {e}", path.display())))
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let text = to_sorted_json(value).map_err(|e| CliError::new("E_INTERNAL", e.to_string()))?;
        self.write_text(name, &text)
    }

    pub fn write_npy(&mut self, name: &str, shape: &[usize], data: &[f64]) -> CliResult<()> {
        let path = self.track(name);
        Ok(write_npy(&path, shape, data)?)
    }

    pub fn commit(mut self) {
        self.committed = true;
    }
}

impl Drop for OutputDir {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for path in &self.written {
            let _ = fs::remove_file(path);
        }
        if self.created_root {
            let _ = fs::remove_dir(&self.root);
        }
    }
}
