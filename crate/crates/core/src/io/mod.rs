//! Configuration, logs, figures, manifests and the command-line front end.

pub mod cli;
pub mod config;
pub mod manifest;
pub mod plot;
pub mod timeseries;

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub use config::{parse_config, serialize_config, Config};
pub use manifest::RunManifest;
pub use plot::{emit_plots, render_svg};
pub use timeseries::{read_csv, write_csv};

/// Writes `bytes` to a temporary file next to `path` and renames it into
/// place, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut builder = tempfile::Builder::new();
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        builder.permissions(std::fs::Permissions::from_mode(0o644));
    }
    let mut tmp = builder.tempfile_in(dir).map_err(io_err)?;
    tmp.write_all(bytes).map_err(io_err)?;
    tmp.flush().map_err(io_err)?;
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}
