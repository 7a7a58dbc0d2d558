//! Files and orchestration around an experiment: JSON config, CSV metrics,
//! JSON checkpoints and reports, SVG curves.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub mod checkpoint;
pub mod config;
pub mod metrics_csv;
pub mod plot;
pub mod report;
pub mod run;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use config::{DatasetSource, ExperimentConfig, RelationKind, Resolved};
pub use metrics_csv::{read_metrics_csv, write_metrics_csv, HEADER};
pub use plot::{render_curves, render_curves_to_file, CurveKind};
pub use report::{parse_report, report_summary};
pub use run::{evolve_single_stage, resume_experiment, run_experiment, validate_config, RunSummary};

/// Writes to a sibling temp file and renames it over `path`.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| Error::Validation(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    let write = || -> std::io::Result<()> {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn missing_directory_names_path() {
        let err = write_atomic(Path::new("/nonexistent/dir/x.txt"), b"").unwrap_err();
        assert!(err.to_string().contains("/nonexistent/dir/x.txt"));
    }
}
