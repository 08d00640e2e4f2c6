//! Artifact writing: CSV plus a JSON sidecar, each through a temporary file
//! that is renamed into place only when complete.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::Value;

use crate::error::CliError;

/// Bumped whenever a command's CSV columns change.
pub const CSV_FORMAT_VERSION: u32 = 1;

pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

fn temp_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".partial");
    PathBuf::from(name)
}

fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let tmp = temp_path(path);
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

/// Writes the CSV and its sidecar; if the sidecar fails the CSV is removed
/// so no half-described artifact is left behind.
pub fn write_artifacts(out: &Path, csv: &str, metadata: &Value) -> Result<(), CliError> {
    write_atomic(out, csv.as_bytes())?;
    let text = serde_json::to_string_pretty(metadata).expect("metadata serialises") + "\n";
    if let Err(e) = write_atomic(&sidecar_path(out), text.as_bytes()) {
        let _ = fs::remove_file(out);
        return Err(e);
    }
    Ok(())
}
