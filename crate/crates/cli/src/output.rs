//! Output files are written under temporary names and renamed into place only
//! once every file of a command has been produced.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{CliError, Result};

#[derive(Debug, Default)]
pub struct Staged {
    files: Vec<(PathBuf, PathBuf)>,
}

fn temp_name(path: &Path) -> PathBuf {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!(".{name}.tmp-{}", std::process::id()))
}

impl Staged {
    pub fn add(&mut self, path: impl AsRef<Path>, bytes: Vec<u8>) -> Result<()> {
        let path = path.as_ref().to_path_buf();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        let tmp = temp_name(&path);
        std::fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp, e))?;
        self.files.push((tmp, path));
        Ok(())
    }

    pub fn commit(mut self) -> Result<()> {
        for (tmp, dst) in std::mem::take(&mut self.files) {
            std::fs::rename(&tmp, &dst).map_err(|e| CliError::io(&dst, e))?;
        }
        Ok(())
    }
}

impl Drop for Staged {
    fn drop(&mut self) {
        for (tmp, _) in &self.files {
            let _ = std::fs::remove_file(tmp);
        }
    }
}

/// Writes a single file atomically.
pub fn write_atomic(path: &Path, bytes: Vec<u8>) -> Result<()> {
    let mut s = Staged::default();
    s.add(path, bytes)?;
    s.commit()
}

pub fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
    v.push(b'\n');
    Ok(v)
}

pub fn to_json_compact<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec(value).map_err(|e| CliError::Data(e.to_string()))?;
    v.push(b'\n');
    Ok(v)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}
